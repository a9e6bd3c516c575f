"""Per-tick metrics, run summary and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = (
    "t",
    "p_x", "p_y", "p_z",
    "p_ref_x", "p_ref_y", "p_ref_z",
    "v_x", "v_y", "v_z",
    "mode",
    "windowed_error", "e_c", "e_d", "e_mean", "l_c", "l_d",
    "sinr", "error_gate", "sinr_gate",
    "k_cumulative", "cmd_seq",
    "u_thrust", "u_phi", "u_theta",
    "solver_iters", "solver_status",
)
INT_COLUMNS = {"error_gate", "sinr_gate", "k_cumulative", "cmd_seq", "solver_iters",
               "solver_status"}
STR_COLUMNS = {"mode"}


def fmt_float(x: float) -> str:
    return "%.9g" % x


@dataclass
class MetricsLog:
    rows: list[tuple] = field(default_factory=list)
    columns: tuple[str, ...] = COLUMNS

    def append(self, row: tuple):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(self.columns)}")
        if self.rows and not row[0] > self.rows[-1][0]:
            raise ValueError("rows must be strictly time-ordered")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        vals = [r[i] for r in self.rows]
        if name in STR_COLUMNS:
            return np.array(vals, dtype=object)
        return np.array(vals, dtype=np.int64 if name in INT_COLUMNS else np.float64)

    def positions(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in ("p_x", "p_y", "p_z")])

    def references(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in ("p_ref_x", "p_ref_y", "p_ref_z")])

    def tracking_error(self) -> np.ndarray:
        if not self.rows:
            return np.zeros(0)
        return np.linalg.norm(self.positions() - self.references(), axis=1)

    def mode_episodes(self, mode: str = "onboard") -> list[tuple[float, float]]:
        """(start, end) times of maximal runs of ``mode``; end is the first tick after."""
        t = self.column("t")
        m = self.column("mode")
        out = []
        start = None
        for ti, mi in zip(t, m):
            if mi == mode and start is None:
                start = ti
            elif mi != mode and start is not None:
                out.append((start, ti))
                start = None
        if start is not None:
            out.append((start, float(t[-1])))
        return out

    def summary(self) -> dict:
        """Run summary computed from the rows alone."""
        if not self.rows:
            return {"rows": 0}
        t = self.column("t")
        mode = self.column("mode")
        err = self.tracking_error()
        tick = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
        out = {"rows": len(self.rows), "duration": float(t[-1] - t[0] + tick)}

        def rms(mask):
            return float(math.sqrt(np.mean(err[mask] ** 2))) if mask.any() else math.nan

        out["rms_error"] = rms(np.ones(len(err), dtype=bool))
        for m in ("offboard", "onboard"):
            mask = mode == m
            out[f"rms_error_{m}"] = rms(mask)
            out[f"time_{m}"] = float(mask.sum() * tick)
        changes = int(np.sum(mode[1:] != mode[:-1]))
        out["switch_count"] = changes
        out["switches_to_onboard"] = len(self.mode_episodes("onboard")) - int(mode[0] == "onboard")
        iters = self.column("solver_iters")
        status = self.column("solver_status")
        solved = iters >= 0
        out["solves"] = int(solved.sum())
        out["solver_iters_mean"] = float(iters[solved].mean()) if solved.any() else math.nan
        out["solver_iters_max"] = int(iters[solved].max()) if solved.any() else 0
        out["solver_failures"] = int(np.sum(status[solved] >= 2))
        out["dropped_commands"] = int(self.column("k_cumulative")[-1])
        return out


def _fmt(name: str, val) -> str:
    if name in STR_COLUMNS:
        return str(val)
    if name in INT_COLUMNS:
        return str(int(val))
    return fmt_float(float(val))


def _fmt_summary_value(v) -> str:
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def render_csv(log: MetricsLog, with_summary: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(log.columns)
    for row in log.rows:
        w.writerow([_fmt(n, v) for n, v in zip(log.columns, row)])
    if with_summary and log.rows:
        buf.write("# summary\n")
        for k, v in log.summary().items():
            buf.write(f"# {k}: {_fmt_summary_value(v)}\n")
    return buf.getvalue()


def export_csv(log: MetricsLog, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_csv(log))
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    return path


def _parse(name: str, text: str):
    if name in STR_COLUMNS:
        return text
    if name in INT_COLUMNS:
        return int(text)
    return float(text)


def parse_csv(text: str) -> tuple[MetricsLog, dict[str, str]]:
    """Inverse of :func:`render_csv`; returns the log and the raw summary block."""
    lines = text.splitlines()
    summary = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            if ":" in line:
                k, v = line[1:].split(":", 1)
                summary[k.strip()] = v.strip()
        elif line:
            body.append(line)
    if not body:
        raise ValueError("metrics file has no header")
    reader = csv.reader(body)
    header = tuple(next(reader))
    log = MetricsLog(columns=header)
    for rec in reader:
        log.rows.append(tuple(_parse(n, v) for n, v in zip(header, rec)))
    return log, summary


def read_csv(path: str | Path) -> tuple[MetricsLog, dict[str, str]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read metrics from {path}: {exc}") from exc
    return parse_csv(text)
