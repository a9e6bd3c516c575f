"""Command line entry point: ``edgeswitch run|replay|summary``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, load_config

log = logging.getLogger("edgeswitch")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output:
        return Path(cfg.output)
    return Path("runs") / cfg.name


def cmd_run(args) -> int:
    from . import udp
    from .harness import run_scenario, takeoff_position, write_packet_log
    from .metrics import export_csv
    from .pid import fallback_setpoint

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        endpoint = udp.parse_endpoint(args.endpoint) if args.transport == "udp" else None
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    switching = False if args.no_switch else None
    out = _out_dir(args, cfg)

    try:
        if args.transport == "udp" and args.role == "edge":
            ep = udp.DatagramEndpoint(endpoint)
            try:
                host, port = ep.address
                print(f"edge listening on {host}:{port}", flush=True)
                edge = udp.run_edge(cfg, endpoint, idle_timeout=args.idle_timeout,
                                    endpoint=ep)
            finally:
                ep.close()
            print(f"edge served {len(edge.records)} activations")
            return EXIT_OK
        if args.transport == "udp":
            result = udp.run_uav(cfg, endpoint, switching=switching)
        else:
            result = run_scenario(cfg, switching=switching)
        metrics_path = export_csv(result.metrics, out / "metrics.csv")
        print(f"wrote {metrics_path}")
        if result.channel is not None:
            print(f"wrote {write_packet_log(result.packet_rows(), out / 'packets.csv')}")
        if not args.no_plot:
            from .plots import render_report
            home = fallback_setpoint(cfg.pid.home, takeoff_position(cfg))
            for p in render_report(result.metrics, out, cfg.switch.e_th, cfg.switch.s_th,
                                   home):
                print(f"wrote {p}")
        _print_summary(result.metrics.summary())
    except (OSError, RuntimeError, TimeoutError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_replay(args) -> int:
    from .replay import read_packet_log, replay, write_replay

    t_exec = args.t_exec
    if args.config:
        try:
            t_exec = load_config(args.config).mpc.t_exec
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        rows = read_packet_log(args.packet_log)
        est = replay(rows, t_exec)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                write_replay(est, fh)
        else:
            write_replay(est, sys.stdout)
    except BrokenPipeError:
        # reader went away (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (OSError, KeyError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _print_summary(summary: dict):
    from .metrics import fmt_float
    for k, v in summary.items():
        print(f"{k:>22}: {fmt_float(v) if isinstance(v, float) else v}")


def cmd_summary(args) -> int:
    from .metrics import read_csv
    try:
        log_, _ = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _print_summary(log_.summary())
    if args.plot:
        from .plots import render_report
        for p in render_report(log_, Path(args.plot), args.e_th, args.s_th):
            print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgeswitch",
                                 description="Edge-MPC / onboard-PID switching simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("config")
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.add_argument("--transport", choices=("sim", "udp"), default="sim")
    run.add_argument("--role", choices=("uav", "edge"), default="uav")
    run.add_argument("--endpoint", default="127.0.0.1:47800",
                     help="edge address (the edge binds it, the UAV sends to it)")
    run.add_argument("--no-switch", action="store_true",
                     help="keep the edge controller in charge regardless of KPIs")
    run.add_argument("--no-plot", action="store_true")
    run.add_argument("--idle-timeout", type=float, default=2.0,
                     help="edge role: stop after this long without UAV states")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replay", help="recompute error estimates from a packet log")
    rep.add_argument("packet_log")
    rep.add_argument("--t-exec", type=float, default=0.05)
    rep.add_argument("--config", help="take t_exec from this scenario file")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_replay)

    summ = sub.add_parser("summary", help="print the summary of a metrics CSV")
    summ.add_argument("csv")
    summ.add_argument("--plot", metavar="DIR", help="also render figures into DIR")
    summ.add_argument("--e-th", type=float, default=0.15)
    summ.add_argument("--s-th", type=float, default=6.0)
    summ.set_defaults(func=cmd_summary)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
