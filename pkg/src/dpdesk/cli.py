"""Command-line interface.

Subcommands: train, sweep, curve, accountant, calibrate, report. Exit code
0 on success; failures print a structured JSON error to stderr and exit 1.
Set DPDESK_OUT_ROOT to relocate all output directories.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import harness
from .accountant import CalibrationError, calibrate_sigma, epsilon_for
from .config import ExperimentConfig


def _add_config_arg(p):
    p.add_argument("config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="override the config seed")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.override(seed=args.seed)
    return cfg


def cmd_train(args) -> int:
    record, _ = harness.run(_load_config(args), save_checkpoint=args.checkpoint)
    f = record["final"]
    print(f"run {record['config_digest'][:12]} seed {record['seed']}: "
          f"accuracy {f['accuracy']:.4f}  macro-F1 {f['macro_f1']:.4f}  "
          f"collapse gap {f['collapse_gap']:.4f}")
    if record["privacy"]["realized_epsilon"] is not None:
        p = record["privacy"]
        print(f"privacy: epsilon {p['realized_epsilon']:.4f} "
              f"(target {p['epsilon_target']}), sigma {p['sigma']:.4f}, "
              f"q {p['q']:.4f}, T {p['steps']}")
    return 0


def cmd_sweep(args) -> int:
    results = harness.sweep_lr(_load_config(args))
    print(f"{'epsilon':>8} {'best lr':>10} {'macro_f1':>10}")
    for key, res in results.items():
        print(f"{key:>8} {res['lr']:>10g} "
              f"{res['record']['final']['macro_f1']:>10.4f}")
    return 0


def cmd_curve(args) -> int:
    cfg = _load_config(args)
    eps = [math.inf if e.strip().lower() == "inf" else float(e)
           for e in args.eps.split(",")] if args.eps else None
    rows, _ = harness.privacy_curve(cfg, eps)
    print(f"{'strategy':>16} {'epsilon':>8} {'macro_f1':>10} {'accuracy':>10}")
    for r in rows:
        print(f"{r['strategy']:>16} {r['epsilon']:>8} "
              f"{r['macro_f1']:>10.4f} {r['accuracy']:>10.4f}")
    out = harness.resolve_out_dir(cfg)
    print(f"wrote {out}/curve.csv and {out}/curve.svg")
    return 0


def cmd_accountant(args) -> int:
    rep = epsilon_for(args.sigma, args.q, args.steps, args.delta)
    print(f"{'epsilon':>12} {'best order':>12} {'sigma':>8} {'q':>8} "
          f"{'steps':>8} {'delta':>10}")
    print(f"{rep.epsilon:>12.6f} {rep.best_order:>12g} {rep.sigma:>8g} "
          f"{rep.q:>8g} {rep.steps:>8d} {rep.delta:>10g}")
    print(json.dumps({
        "epsilon": rep.epsilon, "best_order": rep.best_order,
        "delta": rep.delta, "steps": rep.steps, "sigma": rep.sigma, "q": rep.q,
    }))
    return 0


def cmd_calibrate(args) -> int:
    sigma = calibrate_sigma(args.eps, args.delta, args.q, args.steps)
    realized = epsilon_for(sigma, args.q, args.steps, args.delta).epsilon
    print(f"sigma {sigma:.6f} realizes epsilon {realized:.6f} "
          f"(target {args.eps})")
    print(json.dumps({"sigma": sigma, "epsilon": realized,
                      "target": args.eps}))
    return 0


def cmd_report(args) -> int:
    print(harness.summarize(args.results_dir), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dpdesk",
        description="Desk-scale DP-SGD training with RDP accounting and "
                    "imbalance-aware evaluation",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration")
    _add_config_arg(t)
    t.add_argument("--checkpoint", action="store_true",
                   help="save the trained model next to the results file")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep", help="learning-rate grid sweep per privacy level")
    _add_config_arg(s)
    s.set_defaults(fn=cmd_sweep)

    c = sub.add_parser("curve", help="macro-F1 vs privacy budget chart")
    _add_config_arg(c)
    c.add_argument("--eps", help="comma list of budgets, e.g. 1,2,5,inf")
    c.set_defaults(fn=cmd_curve)

    a = sub.add_parser("accountant", help="epsilon for a (q, sigma, T, delta)")
    a.add_argument("--q", type=float, required=True)
    a.add_argument("--sigma", type=float, required=True)
    a.add_argument("--steps", type=int, required=True)
    a.add_argument("--delta", type=float, default=1e-5)
    a.set_defaults(fn=cmd_accountant)

    k = sub.add_parser("calibrate", help="sigma for a target epsilon")
    k.add_argument("--eps", type=float, required=True)
    k.add_argument("--delta", type=float, default=1e-5)
    k.add_argument("--q", type=float, required=True)
    k.add_argument("--steps", type=int, required=True)
    k.set_defaults(fn=cmd_calibrate)

    r = sub.add_parser("report", help="merge and summarize a results directory")
    r.add_argument("results_dir")
    r.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, CalibrationError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
