"""Compiled inner loops for the edge MPC.

Everything here works on packed float64 arrays:

* ``prm``: ``[A_x, A_y, A_z, g, K_phi, K_theta, tau_phi, tau_theta]``
* ``X``: (N, 8) predicted states, ``X[j]`` is the state after applying ``U[j]``
* ``U``: (N, 3) inputs ``[thrust, phi_ref, theta_ref]``
* ``Xd``/``Ud``: per-step references with the same shapes

The gradient is obtained by reverse accumulation through the RK4 stages.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

ALPHA_MIN = 1e-8
ALPHA_MAX = 1e2


@njit(cache=True)
def f(x, u, prm, out):
    cphi = math.cos(x[6])
    sphi = math.sin(x[6])
    cth = math.cos(x[7])
    sth = math.sin(x[7])
    T = u[0]
    out[0] = x[3]
    out[1] = x[4]
    out[2] = x[5]
    out[3] = T * cphi * sth - prm[0] * x[3]
    out[4] = -T * sphi - prm[1] * x[4]
    out[5] = T * cphi * cth - prm[3] - prm[2] * x[5]
    out[6] = (prm[4] * u[1] - x[6]) / prm[6]
    out[7] = (prm[5] * u[2] - x[7]) / prm[7]


@njit(cache=True)
def f_vjp(x, u, w, prm, gx, gu):
    """Accumulate ``J_x^T w`` into gx and ``J_u^T w`` into gu."""
    cphi = math.cos(x[6])
    sphi = math.sin(x[6])
    cth = math.cos(x[7])
    sth = math.sin(x[7])
    T = u[0]
    gx[3] += w[0] - prm[0] * w[3]
    gx[4] += w[1] - prm[1] * w[4]
    gx[5] += w[2] - prm[2] * w[5]
    gx[6] += (-T * sphi * sth * w[3] - T * cphi * w[4] - T * sphi * cth * w[5]
              - w[6] / prm[6])
    gx[7] += T * cphi * cth * w[3] - T * cphi * sth * w[5] - w[7] / prm[7]
    gu[0] += cphi * sth * w[3] - sphi * w[4] + cphi * cth * w[5]
    gu[1] += prm[4] / prm[6] * w[6]
    gu[2] += prm[5] / prm[7] * w[7]


@njit(cache=True)
def _rk4_ws(x, u, h, prm, out, W):
    # W rows: k1, k2, k3, k4, xs
    k1, k2, k3, k4, xs = W[0], W[1], W[2], W[3], W[4]
    f(x, u, prm, k1)
    for i in range(8):
        xs[i] = x[i] + 0.5 * h * k1[i]
    f(xs, u, prm, k2)
    for i in range(8):
        xs[i] = x[i] + 0.5 * h * k2[i]
    f(xs, u, prm, k3)
    for i in range(8):
        xs[i] = x[i] + h * k3[i]
    f(xs, u, prm, k4)
    for i in range(8):
        out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def rk4(x, u, h, prm, out):
    _rk4_ws(x, u, h, prm, out, np.empty((5, 8)))


@njit(cache=True)
def _rk4_vjp_ws(x, u, h, prm, lam, gx, gu, W):
    """Backpropagate ``lam`` (adjoint of the step output) through one RK4 step."""
    k1, k2, xs2, xs3, xs4 = W[0], W[1], W[2], W[3], W[4]
    gk1, gk2, gk3, gk4, a = W[5], W[6], W[7], W[8], W[9]
    f(x, u, prm, k1)
    for i in range(8):
        xs2[i] = x[i] + 0.5 * h * k1[i]
    f(xs2, u, prm, k2)
    for i in range(8):
        xs3[i] = x[i] + 0.5 * h * k2[i]
    f(xs3, u, prm, k1)  # k3, k1 no longer needed
    for i in range(8):
        xs4[i] = x[i] + h * k1[i]

    for i in range(8):
        gx[i] += lam[i]
        gk1[i] = h / 6.0 * lam[i]
        gk2[i] = h / 3.0 * lam[i]
        gk3[i] = h / 3.0 * lam[i]
        gk4[i] = h / 6.0 * lam[i]
        a[i] = 0.0
    f_vjp(xs4, u, gk4, prm, a, gu)
    for i in range(8):
        gx[i] += a[i]
        gk3[i] += h * a[i]
        a[i] = 0.0
    f_vjp(xs3, u, gk3, prm, a, gu)
    for i in range(8):
        gx[i] += a[i]
        gk2[i] += 0.5 * h * a[i]
        a[i] = 0.0
    f_vjp(xs2, u, gk2, prm, a, gu)
    for i in range(8):
        gx[i] += a[i]
        gk1[i] += 0.5 * h * a[i]
        a[i] = 0.0
    f_vjp(x, u, gk1, prm, a, gu)
    for i in range(8):
        gx[i] += a[i]


@njit(cache=True)
def rk4_vjp(x, u, h, prm, lam, gx, gu):
    _rk4_vjp_ws(x, u, h, prm, lam, gx, gu, np.empty((10, 8)))


@njit(cache=True)
def rollout(x0, U, h, prm):
    N = U.shape[0]
    X = np.empty((N, 8))
    W = np.empty((5, 8))
    _rk4_ws(x0, U[0], h, prm, X[0], W)
    for j in range(1, N):
        _rk4_ws(X[j - 1], U[j], h, prm, X[j], W)
    return X


@njit(cache=True)
def _quad(Q, a, b, n):
    # (a - b)^T Q (a - b)
    s = 0.0
    for r in range(n):
        dr = a[r] - b[r]
        if dr == 0.0:
            continue
        acc = 0.0
        for c in range(n):
            acc += Q[r, c] * (a[c] - b[c])
        s += dr * acc
    return s


@njit(cache=True)
def cost_terms(X, U, u_prev, Xd, Ud, Qx, Qu, Qdu):
    N = U.shape[0]
    js = 0.0
    ju = 0.0
    jdu = 0.0
    for j in range(N):
        js += _quad(Qx, Xd[j], X[j], 8)
        ju += _quad(Qu, Ud[j], U[j], 3)
        if j == 0:
            jdu += _quad(Qdu, U[0], u_prev, 3)
        else:
            jdu += _quad(Qdu, U[j], U[j - 1], 3)
    return js, ju, jdu


@njit(cache=True)
def total_cost(x0, U, h, prm, u_prev, Xd, Ud, Qx, Qu, Qdu):
    X = rollout(x0, U, h, prm)
    js, ju, jdu = cost_terms(X, U, u_prev, Xd, Ud, Qx, Qu, Qdu)
    return js + ju + jdu


@njit(cache=True)
def _sym_mv_acc(Q, a, b, n, scale, out):
    # out += scale * (Q + Q^T)(a - b)
    for r in range(n):
        acc = 0.0
        for c in range(n):
            acc += (Q[r, c] + Q[c, r]) * (a[c] - b[c])
        out[r] += scale * acc


@njit(cache=True)
def cost_and_grad(x0, U, h, prm, u_prev, Xd, Ud, Qx, Qu, Qdu):
    N = U.shape[0]
    X = rollout(x0, U, h, prm)
    js, ju, jdu = cost_terms(X, U, u_prev, Xd, Ud, Qx, Qu, Qdu)
    G = np.zeros((N, 3))
    for j in range(N):
        _sym_mv_acc(Qu, Ud[j], U[j], 3, -1.0, G[j])
        if j == 0:
            _sym_mv_acc(Qdu, U[0], u_prev, 3, 1.0, G[0])
        else:
            _sym_mv_acc(Qdu, U[j], U[j - 1], 3, 1.0, G[j])
            _sym_mv_acc(Qdu, U[j], U[j - 1], 3, -1.0, G[j - 1])
    W = np.empty((10, 8))
    lam = np.zeros(8)
    gx = np.empty(8)
    _sym_mv_acc(Qx, Xd[N - 1], X[N - 1], 8, -1.0, lam)
    for j in range(N - 1, -1, -1):
        if j > 0:
            xin = X[j - 1]
        else:
            xin = x0
        gx[:] = 0.0
        _rk4_vjp_ws(xin, U[j], h, prm, lam, gx, G[j], W)
        if j > 0:
            lam[:] = gx
            _sym_mv_acc(Qx, Xd[j - 1], X[j - 1], 8, -1.0, lam)
    return js + ju + jdu, G


@njit(cache=True)
def project(U, lo, hi):
    out = np.empty_like(U)
    for j in range(U.shape[0]):
        for i in range(3):
            out[j, i] = min(max(U[j, i], lo[i]), hi[i])
    return out


@njit(cache=True)
def projected_gradient(x0, U0, h, prm, u_prev, Xd, Ud, Qx, Qu, Qdu, lo, hi,
                       max_iters, grad_tol, step0, armijo_c, shrink, max_backtracks):
    """Projected gradient with Armijo backtracking on the box ``[lo, hi]``.

    The first trial step of each iteration is the Barzilai-Borwein step from
    the previous iterate pair (``step0`` on the first iteration); acceptance
    is monotone, so the cost never increases.

    Returns ``(U, J, pg_norm, iters, status, step)``; ``status`` is 0 on
    convergence, 1 when the iteration cap was hit, 2 when the line search
    failed to find descent, 3 on a non-finite cost.
    """
    U = project(U0, lo, hi)
    J, G = cost_and_grad(x0, U, h, prm, u_prev, Xd, Ud, Qx, Qu, Qdu)
    if not math.isfinite(J):
        return U, J, math.inf, 0, 3, step0
    alpha = step0
    it = 0
    status = 1
    pg = np.sqrt(np.sum((U - project(U - G, lo, hi)) ** 2))
    while it < max_iters:
        if pg < grad_tol:
            status = 0
            break
        accepted = False
        for _ in range(max_backtracks):
            Un = project(U - alpha * G, lo, hi)
            Jn = total_cost(x0, Un, h, prm, u_prev, Xd, Ud, Qx, Qu, Qdu)
            if not math.isfinite(Jn):
                alpha *= shrink
                continue
            if Jn <= J + armijo_c * np.sum(G * (Un - U)):
                accepted = True
                break
            alpha *= shrink
        it += 1
        if not accepted:
            status = 2
            break
        Jn, Gn = cost_and_grad(x0, Un, h, prm, u_prev, Xd, Ud, Qx, Qu, Qdu)
        if not math.isfinite(Jn):
            return Un, Jn, math.inf, it, 3, alpha
        s_sq = 0.0
        s_y = 0.0
        for j in range(U.shape[0]):
            for i in range(3):
                sv = Un[j, i] - U[j, i]
                s_sq += sv * sv
                s_y += sv * (Gn[j, i] - G[j, i])
        U, J, G = Un, Jn, Gn
        pg = np.sqrt(np.sum((U - project(U - G, lo, hi)) ** 2))
        if s_y > 0.0:
            alpha = min(max(s_sq / s_y, ALPHA_MIN), ALPHA_MAX)
        else:
            alpha = ALPHA_MAX
    if status == 1 and pg < grad_tol:
        status = 0
    return U, J, pg, it, status, alpha
