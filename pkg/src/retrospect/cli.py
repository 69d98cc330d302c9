"""Command-line driver.

Subcommands: train, pair, sweep, analyze, gradcheck. Configs are JSON
documents (see README for the schema); metric files land in --out.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import harness
from .kernels import BACKEND
from .tensor import gradcheck_suite


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise SystemExit(f"--seeds must be comma-separated integers, got {text!r}")


def _cmd_train(args) -> int:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.retro is not None:
        cfg = replace(cfg, retro=replace(cfg.retro, enabled=args.retro == "on"))
    record = harness.train_one(cfg)
    harness.emit_run(record, args.out, cfg)
    if record.aborted:
        print(f"run aborted: {record.abort_reason}")
        return 1
    final = record.final_eval
    print(f"seed {cfg.seed} retro={'on' if cfg.retro.enabled else 'off'} "
          f"steps {len(record.steps)} "
          f"final test error {final.test_error:.4f} "
          f"({record.duration_sec:.1f}s, kernels={BACKEND})")
    print(f"metrics written to {args.out}")
    return 0


def _cmd_pair(args) -> int:
    cfg = harness.load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    result = harness.run_paired(cfg, seeds)
    harness.emit_pair(result, args.out, cfg)
    for r in result.per_seed:
        if r.error is not None:
            print(f"seed {r.seed}: FAILED ({r.error})")
        else:
            print(f"seed {r.seed}: baseline {r.baseline.final_eval.test_error:.4f} "
                  f"retro {r.retro.final_eval.test_error:.4f} delta {r.delta:+.4f}")
    if result.aggregate:
        a = result.aggregate
        print(f"mean final test error: baseline {a['baseline_mean']:.4f} "
              f"retro {a['retro_mean']:.4f} delta {a['delta_mean']:+.4f}")
    print(f"metrics written to {args.out}")
    return 0 if all(r.error is None for r in result.per_seed) else 1


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    values = [v for v in args.values.split(",") if v.strip() != ""]
    rows = harness.sweep(cfg, args.axis, values, seeds, out_dir=args.out)
    for row in rows:
        if "error" in row:
            print(f"{args.axis}={row['value']}: FAILED ({row['error']})")
        elif "baseline_mean" in row:
            print(f"{args.axis}={row['value']}: baseline {row['baseline_mean']:.4f} "
                  f"retro {row['retro_mean']:.4f} delta {row['delta_mean']:+.4f}")
        else:
            print(f"{args.axis}={row['value']}: all seeds failed {row['failed_seeds']}")
    print(f"table written to {args.out}/sweep.csv")
    return 0


def _cmd_analyze(args) -> int:
    written = harness.analyze(args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_gradcheck(args) -> int:
    max_err, errors = gradcheck_suite(n_graphs=args.graphs, seed=args.seed, eps=args.eps)
    status = "PASS" if max_err < args.tolerance else "FAIL"
    print(f"gradcheck [{BACKEND} kernels]: {len(errors)} composite graphs, "
          f"max relative error {max_err:.3e} (tolerance {args.tolerance:.0e}) -> {status}")
    return 0 if status == "PASS" else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrospect",
                                     description="Retrospective-loss training toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="single training run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--retro", choices=["on", "off"], default=None,
                   help="override the retrospective-term switch")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("pair", help="baseline vs retro arms over seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated, e.g. 1,2,3")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_pair)

    p = sub.add_parser("sweep", help="ablation sweep over one axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=sorted(harness.SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("analyze", help="write the gradient/consistency report CSVs")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("gradcheck", help="finite-difference oracle over random graphs")
    p.add_argument("--graphs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(fn=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
