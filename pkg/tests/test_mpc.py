import math

import numpy as np
import pytest

from edgeswitch import _kernels
from edgeswitch.dynamics import ControlCommand, ModelParams, UavState
from edgeswitch.mpc import (CONVERGED, MAX_ITERS, NONFINITE, EdgeMpc, MpcConfig,
                            ReferencePoint, cost_and_grad, estimate_uplink_state,
                            eval_cost, rollout, solve)

P = ModelParams()
HOVER_U = np.array([P.g, 0.0, 0.0])


def ref_at(p):
    x = np.zeros(8)
    x[:3] = p
    return ReferencePoint(x_d=x, u_d=HOVER_U)


def scalar_cost(X, U, u_prev, xd, ud, Qx, Qu, Qdu):
    # deliberately naive triple loops
    N = len(U)
    total = 0.0
    for j in range(N):
        ex = [xd[i] - X[j][i] for i in range(8)]
        eu = [ud[i] - U[j][i] for i in range(3)]
        prev = u_prev if j == 0 else U[j - 1]
        du = [U[j][i] - prev[i] for i in range(3)]
        for a in range(8):
            for b in range(8):
                total += ex[a] * Qx[a][b] * ex[b]
        for a in range(3):
            for b in range(3):
                total += eu[a] * Qu[a][b] * eu[b] + du[a] * Qdu[a][b] * du[b]
    return total


def test_cost_zero_at_reference():
    cfg = MpcConfig(N=4)
    r = ref_at([0, 4, 0.8])
    X = np.tile(r.x_d, (4, 1))
    U = np.tile(r.u_d, (4, 1))
    assert eval_cost(X, U, r.u_d, r, cfg).total == 0.0


def test_cost_unit_vector():
    cfg = MpcConfig(N=1, Q_x=np.eye(8))
    r = ref_at([0, 0, 0])
    X = np.zeros((1, 8))
    X[0, 0] = -1.0
    c = eval_cost(X, r.u_d[None, :], r.u_d, r, cfg)
    assert c.total == 1.0 and c.state == 1.0 and c.input == 0.0 and c.smoothness == 0.0


def test_cost_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(8, 8))
    cfg = MpcConfig(N=3, Q_x=A @ A.T, Q_u=np.diag([1.0, 2.0, 3.0]),
                    Q_du=np.diag([0.5, 1.0, 1.5]))
    X, U = rng.normal(size=(3, 8)), rng.normal(size=(3, 3))
    up = rng.normal(size=3)
    r = ReferencePoint(rng.normal(size=8), rng.normal(size=3))
    c = eval_cost(X, U, up, r, cfg)
    oracle = scalar_cost(X.tolist(), U.tolist(), up.tolist(), r.x_d.tolist(),
                         r.u_d.tolist(), cfg.Q_x.tolist(), cfg.Q_u.tolist(),
                         cfg.Q_du.tolist())
    assert c.total == pytest.approx(oracle, rel=1e-12)
    assert c.total == pytest.approx(c.state + c.input + c.smoothness, rel=1e-15)


def test_cost_rejects_bad_shapes():
    cfg = MpcConfig(N=3)
    with pytest.raises(ValueError):
        eval_cost(np.zeros((2, 8)), np.zeros((3, 3)), np.zeros(3), ref_at([0, 0, 0]), cfg)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(11)
    for _ in range(10):
        N = int(rng.integers(1, 6))
        cfg = MpcConfig(N=N)
        x0 = rng.normal(size=8) * 0.3
        U = np.column_stack([P.g + rng.normal(size=N), 0.2 * rng.normal(size=(N, 2))])
        up = U[0] + 0.1 * rng.normal(size=3)
        ref = (rng.normal(size=(N, 8)), rng.normal(size=(N, 3)))
        _, G = cost_and_grad(x0, U, up, ref, cfg, P)
        fd = np.zeros_like(U)
        for idx in np.ndindex(U.shape):
            e = np.zeros_like(U)
            e[idx] = 1e-6
            fd[idx] = (cost_and_grad(x0, U + e, up, ref, cfg, P)[0]
                       - cost_and_grad(x0, U - e, up, ref, cfg, P)[0]) / 2e-6
        assert np.linalg.norm(G - fd) / np.linalg.norm(fd) < 1e-4


def test_rollout_consistent_with_cost():
    cfg = MpcConfig(N=5)
    x0 = np.zeros(8)
    U = np.tile(HOVER_U, (5, 1))
    X = rollout(x0, U, cfg, P)
    J, _ = cost_and_grad(x0, U, HOVER_U, ref_at([0, 0, 0]), cfg, P)
    assert J == pytest.approx(eval_cost(X, U, HOVER_U, ref_at([0, 0, 0]), cfg).total)


def test_solve_at_reference_returns_hover():
    cfg = MpcConfig.from_model(P)
    r = ref_at([0, 4, 0.8])
    x0 = UavState.from_vector(r.x_d)
    sol = solve(x0, r, ControlCommand.hover(P), cfg, P, t_created=1.5, seq=7, state_seq=3)
    assert abs(sol.report.cost) < 1e-8
    assert sol.command.as_vector() == pytest.approx(HOVER_U, abs=1e-9)
    assert (sol.command.t_created, sol.command.seq, sol.command.state_seq) == (1.5, 7, 3)
    assert sol.report.status == CONVERGED


def test_step_reference_pitch_sign():
    cfg = MpcConfig.from_model(P)
    x0 = UavState(p=[0, 0, 1], v=np.zeros(3))
    sol = solve(x0, ref_at([0.5, 0, 1]), ControlCommand.hover(P), cfg, P)
    assert sol.command.theta_ref > 0
    # one-step rollout oracle: the command accelerates toward +x
    X = rollout(x0, np.tile(sol.command.as_vector(), (cfg.N, 1))[:1], MpcConfig(N=1), P)
    assert X[0, 3] > 0


def random_instance(rng):
    x0 = UavState(p=rng.normal(size=3), v=rng.normal(size=3) * 0.5,
                  phi=rng.normal() * 0.1, theta=rng.normal() * 0.1)
    r = ref_at(rng.normal(size=3))
    up = ControlCommand(P.g + rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal())
    return x0, r, up


def test_descent_and_box_feasibility():
    rng = np.random.default_rng(3)
    cfg = MpcConfig.from_model(P, N=15, max_iters=20)
    for _ in range(20):
        x0, r, up = random_instance(rng)
        sol = solve(x0, r, up, cfg, P)
        hold = np.tile(np.clip(up.as_vector(), cfg.u_min, cfg.u_max), (cfg.N, 1))
        J_hold, _ = cost_and_grad(x0, hold, up.as_vector(), r, cfg, P)
        assert sol.report.cost <= J_hold + 1e-12
        assert np.all(sol.inputs >= cfg.u_min) and np.all(sol.inputs <= cfg.u_max)
        assert sol.report.status in (CONVERGED, MAX_ITERS)


def test_line_search_is_monotone():
    rng = np.random.default_rng(8)
    cfg = MpcConfig.from_model(P, N=10)
    x0, r, up = random_instance(rng)
    args = (cfg.dt_mpc, P.as_array(), up.as_vector(), np.tile(r.x_d, (10, 1)),
            np.tile(r.u_d, (10, 1)), cfg.Q_x, cfg.Q_u, cfg.Q_du)
    U = np.tile(up.as_vector(), (10, 1))
    costs = []
    for iters in range(0, 15):
        out = _kernels.projected_gradient(x0.as_vector(), U, *args, cfg.u_min, cfg.u_max,
                                          iters, 0.0, cfg.step0, cfg.armijo_c, cfg.shrink,
                                          cfg.max_backtracks)
        costs.append(out[1])
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_solve_is_deterministic():
    rng = np.random.default_rng(4)
    cfg = MpcConfig.from_model(P, N=12)
    x0, r, up = random_instance(rng)
    ws = np.tile(HOVER_U, (12, 1)) + 0.01
    a = solve(x0, r, up, cfg, P, warm_start=ws)
    b = solve(x0, r, up, cfg, P, warm_start=ws)
    assert a.command == b.command
    assert a.inputs.tobytes() == b.inputs.tobytes()


def test_nonfinite_cost_reemits_previous_command():
    cfg = MpcConfig.from_model(P, N=5)
    x0 = UavState(p=[1e200, 0, 0], v=np.zeros(3))
    up = ControlCommand(9.0, 0.1, -0.1)
    sol = solve(x0, ref_at([0, 0, 0]), up, cfg, P, seq=4)
    assert sol.report.status == NONFINITE
    assert sol.command.as_vector() == pytest.approx(up.as_vector())
    assert sol.command.seq == 4


def test_edge_mpc_sequences_and_warm_start():
    cfg = MpcConfig.from_model(P, N=10)
    m = EdgeMpc(cfg, P)
    r = ref_at([0.2, 0, 1])
    x0 = UavState(p=[0, 0, 1], v=np.zeros(3))
    s0 = m.step(x0, r, t_created=0.0, state_seq=0)
    s1 = m.step(x0, r, t_created=0.05, state_seq=5)
    assert (s0.command.seq, s1.command.seq) == (0, 1)
    assert s1.command.state_seq == 5
    assert m.last_applied == s1.command
    shifted = np.vstack([s0.inputs[1:], s0.inputs[-1:]])
    manual = solve(x0, r, s0.command, cfg, P, warm_start=shifted, t_created=0.05, seq=1,
                   state_seq=5)
    assert manual.command == s1.command


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(N=0)
    with pytest.raises(ValueError):
        MpcConfig(Q_u=np.array([[1.0, 2.0, 0], [0, 1.0, 0], [0, 0, 1.0]]))
    with pytest.raises(ValueError):
        MpcConfig(Q_du=-np.eye(3))
    with pytest.raises(ValueError):
        MpcConfig(u_min=np.ones(3), u_max=np.ones(3))
    assert MpcConfig(f_exec=20).t_exec == 0.05


# --- uplink state estimation ---------------------------------------------

def test_estimate_zero_delay_identity():
    s = UavState(p=[1, 2, 3], v=[0.1, 0.2, 0.3], phi=0.1, theta=0.2, t=4.0)
    assert estimate_uplink_state(s, ControlCommand(P.g), 0.0, P) is s


def test_estimate_hand_example():
    Pz = ModelParams(A_x=0, A_y=0, A_z=0)
    s = UavState(p=[0, 0, 1], v=[1, 0, 0], t=2.0)
    e = estimate_uplink_state(s, ControlCommand(Pz.g), 0.1, Pz)
    assert e.p == pytest.approx([0.1, 0, 1], abs=1e-15)
    assert e.v == pytest.approx([1, 0, 0], abs=1e-15)
    assert e.t == pytest.approx(2.1)


def test_estimate_rejects_negative_delay():
    with pytest.raises(ValueError):
        estimate_uplink_state(UavState(np.zeros(3), np.zeros(3)), ControlCommand(P.g), -0.01, P)


@pytest.mark.parametrize("l_u", [0.01, 0.05, 0.1, 0.3])
def test_estimate_exact_for_constant_velocity(l_u):
    Pz = ModelParams(A_x=0, A_y=0, A_z=0)
    v = np.array([0.4, -0.7, 0.2])
    s = UavState(p=[1, 1, 1], v=v)
    e = estimate_uplink_state(s, ControlCommand(Pz.g), l_u, Pz)
    assert e.p == pytest.approx(s.p + v * l_u, abs=1e-14)


@pytest.mark.parametrize("l_u", [0.02, 0.05, 0.1])
def test_estimate_error_bound_on_sinusoid(l_u):
    # p(t) = a sin(w t) per axis, |p''| <= a w^2 = M
    a, w = np.array([1.0, 0.5, 0.2]), 1.3
    M = np.linalg.norm(a) * w * w
    for t in np.linspace(0, 10, 41):
        p = a * np.sin(w * t)
        v = a * w * np.cos(w * t)
        s = UavState(p=p, v=v, t=t)
        e = estimate_uplink_state(s, ControlCommand(P.g), l_u, P)
        truth = a * np.sin(w * (t + l_u))
        assert np.linalg.norm(e.p - truth) < M * l_u ** 2
