"""Offline recomputation of the downlink error estimates from a packet log.

Deliberately self-contained: it re-derives validity, drop counts, latencies
and errors straight from the logged timestamps and sequence numbers, without
going through the live UAV-side code.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ReplayedEstimate:
    seq: int
    t_arrival: float
    k: int
    l_c: float
    l_d: float
    e_c: float
    e_d: float
    e_mean: float


def read_packet_log(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def replay(rows: list[dict], t_exec: float) -> list[ReplayedEstimate]:
    """Error estimates for every valid downlink arrival after the first."""
    arrivals = []
    for r in rows:
        if r["direction"] != "down" or int(r["dropped"]) or int(r["arrival_order"]) < 0:
            continue
        arrivals.append(r)
    arrivals.sort(key=lambda r: int(r["arrival_order"]))

    out = []
    prev_seq = None
    prev_arrival = 0.0
    speed = 0.0
    for r in arrivals:
        seq = int(r["seq"])
        t_arr = float(r["t_deliver"])
        t_created = float(r["t_send"])
        if prev_seq is not None:
            if seq <= prev_seq:
                continue
            k = seq - prev_seq - 1
            l_c = t_arr - prev_arrival
            l_d = t_arr - t_created + t_exec * k
            e_c = speed * l_c
            e_d = speed * l_d
            out.append(ReplayedEstimate(seq, t_arr, k, l_c, l_d, e_c, e_d, (e_c + e_d) / 2))
        prev_seq = seq
        prev_arrival = t_arr
        if not int(r["hold"]):
            speed = float(r["speed"])
    return out


def write_replay(estimates: list[ReplayedEstimate], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["seq", "t_arrival", "k", "l_c", "l_d", "e_c", "e_d", "e_mean"])
    for e in estimates:
        w.writerow([e.seq, repr(e.t_arrival), e.k, repr(e.l_c), repr(e.l_d), repr(e.e_c),
                    repr(e.e_d), repr(e.e_mean)])
