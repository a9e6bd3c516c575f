"""Static figures rendered next to the metrics CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricsLog  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 120,
}


def _shade_onboard(ax, log: MetricsLog):
    for a, b in log.mode_episodes("onboard"):
        ax.axvspan(a, b, color="tab:orange", alpha=0.15, lw=0)


def plot_trajectory(log: MetricsLog, path: Path, home=None) -> Path:
    P = log.positions()
    R = log.references()
    onboard = log.column("mode") == "onboard"
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.plot(R[:, 0], R[:, 1], "k--", lw=0.8, label="reference")
    ax.plot(P[:, 0], P[:, 1], color="tab:blue", lw=1.0, label="offboard (MPC)")
    if onboard.any():
        Pm = np.where(onboard[:, None], P, np.nan)
        ax.plot(Pm[:, 0], Pm[:, 1], color="tab:orange", lw=1.2, label="onboard (PID)")
    if home is not None:
        ax.plot(home[0], home[1], "kx", ms=7, label="home")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_switching(log: MetricsLog, path: Path, e_th: float, s_th: float) -> Path:
    t = log.column("t")
    fig, axes = plt.subplots(3, 1, figsize=(6.4, 6.0), sharex=True)
    ax = axes[0]
    ax.plot(t, log.column("e_mean"), color="0.6", lw=0.6, label="combined estimate")
    ax.plot(t, log.column("windowed_error"), "k", lw=1.0, label="windowed")
    ax.axhline(e_th, color="tab:red", lw=0.9, label="threshold")
    ax.set_ylabel("error [m]")
    ax.legend(loc="upper right")

    ax = axes[1]
    ax.plot(t, log.column("l_c"), lw=0.7, label="$l_c$")
    ax.plot(t, log.column("l_d"), lw=0.7, label="$l_d$")
    ax.set_ylabel("latency [s]")
    ax.legend(loc="upper right")

    ax = axes[2]
    ax.plot(t, log.column("sinr"), color="tab:green", lw=0.9)
    ax.axhline(s_th, color="tab:red", lw=0.9)
    ax.set_ylabel("SINR [dB]")
    ax.set_xlabel("t [s]")
    for ax in axes:
        _shade_onboard(ax, log)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_tracking(log: MetricsLog, path: Path) -> Path:
    t = log.column("t")
    fig, ax = plt.subplots(figsize=(6.4, 2.4))
    ax.plot(t, log.tracking_error(), lw=0.9)
    _shade_onboard(ax, log)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("tracking error [m]")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_report(log: MetricsLog, out_dir, e_th: float, s_th: float, home=None,
                  ) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        return [
            plot_trajectory(log, out / "trajectory.png", home),
            plot_switching(log, out / "switching.png", e_th, s_th),
            plot_tracking(log, out / "tracking_error.png"),
        ]
