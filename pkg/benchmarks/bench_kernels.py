#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Two views:
  1. per-kernel microbenchmarks at training-step shapes
  2. end-to-end steps/second of a small training run under each backend
     (subprocesses, since the backend is frozen at import time)

Matrix products are deliberately absent: both backends route matmul
through numpy's BLAS.

Usage: python benchmarks/bench_kernels.py [--batch 32] [--width 256]
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from retrospect.kernels import _numpy as np_impl

try:
    from retrospect.kernels import _numba as nb_impl
except ImportError:
    nb_impl = None


def time_call(fn, *args, repeats=200):
    fn(*args)  # warm-up / JIT
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def kernel_cases(batch, width, classes=10):
    rng = np.random.default_rng(0)
    logits = rng.uniform(-2, 2, (batch, classes))
    probs = np_impl.softmax_fwd(logits)
    grad_rows = rng.uniform(-1, 1, (batch, classes))
    act = rng.uniform(-2, 2, (batch, width))
    onehot = np.eye(classes)[rng.integers(0, classes, batch)]
    labels = rng.integers(0, classes, batch)
    row_g = rng.uniform(-1, 1, batch)
    l2_rows = np_impl.l2_rows_fwd(probs, onehot)
    theta = rng.uniform(-1, 1, width * classes)
    vel = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    grad_flat = rng.uniform(-1, 1, theta.size)
    return [
        ("relu_fwd", (act,)),
        ("relu_bwd", (act, act)),
        ("softmax_fwd", (logits,)),
        ("softmax_bwd", (probs, grad_rows)),
        ("l1_rows_fwd", (probs, onehot)),
        ("l1_rows_bwd", (probs, onehot, row_g)),
        ("l2_rows_fwd", (probs, onehot)),
        ("l2_rows_bwd", (probs, onehot, l2_rows, row_g)),
        ("xent_fwd", (probs, labels)),
        ("xent_bwd", (probs, labels, 1.0)),
        ("sgd_step", (theta, grad_flat, 0.01)),
        ("momentum_step", (theta, vel, grad_flat, 0.01, 0.5)),
        ("adam_step", (theta, m, v, grad_flat, 0.01, 0.9, 0.999, 1e-8, 3)),
    ]


def bench_kernels(batch, width):
    print(f"\nper-kernel timings (batch={batch}, hidden width={width}; "
          f"microseconds per call, best of 5)\n")
    print(f"{'kernel':<16} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, args in kernel_cases(batch, width):
        t_np = time_call(getattr(np_impl, name), *args)
        if nb_impl is None:
            print(f"{name:<16} {t_np * 1e6:>9.1f}u {'-':>10} {'-':>9}")
            continue
        t_nb = time_call(getattr(nb_impl, name), *args)
        print(f"{name:<16} {t_np * 1e6:>9.1f}u {t_nb * 1e6:>9.1f}u {t_np / t_nb:>8.1f}x")


TRAIN_SNIPPET = """
import json, sys, time
from retrospect import harness as H
cfg = H.RunConfig.from_dict(json.load(open(sys.argv[1])))
train, test = H.load_datasets(cfg)
H.train_one(cfg, train, test)  # warm-up (JIT, caches)
started = time.perf_counter()
record = H.train_one(cfg, train, test)
elapsed = time.perf_counter() - started
print(json.dumps({"steps": len(record.steps), "seconds": elapsed}))
"""


def bench_end_to_end(batch, width):
    config = {
        "dataset": {"kind": "blobs", "classes": 3, "dims": 16, "per_class": 200,
                    "test_per_class": 50, "spread": 1.0, "seed": 7},
        "layer_sizes": [16, width, 3],
        "optimizer": {"kind": "momentum", "lr": 0.05, "momentum": 0.5},
        "epochs": 3,
        "batch_size": batch,
        "seed": 1,
        "retro": {"enabled": True, "kappa": 2.0, "update_frequency_steps": 50,
                  "warmup_steps": 0, "norm": "l1"},
        "eval_every_steps": 0,
    }
    print("\nend-to-end training (blobs stand-in, retro enabled)\n")
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        for backend in ("numpy", "numba") if nb_impl else ("numpy",):
            env = dict(os.environ, RETROSPECT_KERNELS=backend)
            proc = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET, str(cfg_path)],
                                  capture_output=True, text=True, env=env)
            if proc.returncode != 0:
                print(f"{backend:<8} FAILED:\n{proc.stderr}")
                continue
            payload = json.loads(proc.stdout.strip().splitlines()[-1])
            rate = payload["steps"] / payload["seconds"]
            print(f"{backend:<8} {payload['steps']} steps in "
                  f"{payload['seconds']:.2f}s  ({rate:,.0f} steps/s)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--width", type=int, default=256)
    args = parser.parse_args()
    if nb_impl is None:
        print("numba unavailable: showing numpy timings only")
    bench_kernels(args.batch, args.width)
    bench_end_to_end(args.batch, args.width)


if __name__ == "__main__":
    main()
