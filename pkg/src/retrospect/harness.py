"""Experiment harness: configs, training loop, paired runs, sweeps, reports.

A run is fully determined by its ``RunConfig``. Paired runs share the
master seed, hence identical initialization AND identical batch order;
the two arms differ only in whether the retrospective term is applied.
The retrospective value is always computed and logged (it never touches
the parameters while disabled or warming up), so baseline and retro CSVs
stay column-compatible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .data import BatchPlan, Dataset, batches, gen_blobs, load_idx
from .errors import ConfigError
from .nn import MlpModel, ParamSnapshot, SnapshotOrigin, forward_frozen, mlp_init
from .nn import snapshot as take_snapshot
from .optim import make_optimizer
from .retroloss import (
    AlphaTrace,
    Norm,
    RetroConfig,
    guidance_advance,
    guidance_init,
    retro_loss,
)

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlobSpec:
    """Synthetic Gaussian-blob task; train/test split share the same centers."""

    classes: int = 3
    dims: int = 2
    per_class: int = 100
    test_per_class: int = 100
    spread: float = 1.0
    seed: int = 7

    kind = "blobs"


@dataclass(frozen=True)
class IdxSpec:
    """IDX image/label file pairs, optionally subsampled after a seeded shuffle."""

    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    subset: int = 0  # 0 = use all training samples
    subset_seed: int = 13

    kind = "idx"


@dataclass(frozen=True)
class OptimSpec:
    """Optimizer kind, base lr, and an optional step-decay lr policy
    (lr divided by ``lr_decay_factor`` every ``lr_decay_every_epochs``;
    0 keeps the lr constant)."""

    kind: str = "momentum"
    lr: float = 0.1
    momentum: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay_every_epochs: int = 0
    lr_decay_factor: float = 10.0

    def __post_init__(self):
        if self.kind not in ("sgd", "momentum", "adam"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.lr_decay_every_epochs < 0:
            raise ConfigError("lr_decay_every_epochs must be >= 0")
        if self.lr_decay_factor <= 0:
            raise ConfigError("lr_decay_factor must be positive")

    def lr_at_epoch(self, epoch: int) -> float:
        if not self.lr_decay_every_epochs:
            return self.lr
        return self.lr / self.lr_decay_factor ** (epoch // self.lr_decay_every_epochs)


@dataclass(frozen=True)
class RunConfig:
    dataset: BlobSpec | IdxSpec
    layer_sizes: tuple[int, ...]
    optimizer: OptimSpec
    epochs: int
    batch_size: int
    seed: int
    retro: RetroConfig
    eval_every_steps: int = 0  # 0 = evaluate only at the end of the run
    out_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every_steps < 0:
            raise ConfigError("eval_every_steps must be >= 0")
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes needs at least input and output")

    def to_dict(self) -> dict:
        ds = self.dataset
        if isinstance(ds, BlobSpec):
            dataset = {"kind": "blobs", "classes": ds.classes, "dims": ds.dims,
                       "per_class": ds.per_class, "test_per_class": ds.test_per_class,
                       "spread": ds.spread, "seed": ds.seed}
        else:
            dataset = {"kind": "idx", "train_images": ds.train_images,
                       "train_labels": ds.train_labels, "test_images": ds.test_images,
                       "test_labels": ds.test_labels, "subset": ds.subset,
                       "subset_seed": ds.subset_seed}
        opt = {"kind": self.optimizer.kind, "lr": self.optimizer.lr}
        if self.optimizer.kind == "momentum":
            opt["momentum"] = self.optimizer.momentum
        elif self.optimizer.kind == "adam":
            opt.update(beta1=self.optimizer.beta1, beta2=self.optimizer.beta2,
                       eps=self.optimizer.eps)
        if self.optimizer.lr_decay_every_epochs:
            opt.update(lr_decay_every_epochs=self.optimizer.lr_decay_every_epochs,
                       lr_decay_factor=self.optimizer.lr_decay_factor)
        return {
            "dataset": dataset,
            "layer_sizes": list(self.layer_sizes),
            "optimizer": opt,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "retro": {"enabled": self.retro.enabled, "kappa": self.retro.kappa,
                      "update_frequency_steps": self.retro.update_frequency_steps,
                      "warmup_steps": self.retro.warmup_steps,
                      "norm": self.retro.norm.value},
            "eval_every_steps": self.eval_every_steps,
            "out_dir": self.out_dir,
        }

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        top = _take(raw, "run config", required=["dataset", "layer_sizes", "optimizer",
                                                 "epochs", "batch_size", "seed", "retro"],
                    optional=["eval_every_steps", "out_dir"])
        ds_raw = dict(top["dataset"])
        kind = ds_raw.pop("kind", None)
        if kind == "blobs":
            ds_fields = _take(ds_raw, "blobs dataset", required=[],
                              optional=["classes", "dims", "per_class", "test_per_class",
                                        "spread", "seed"])
            dataset: BlobSpec | IdxSpec = BlobSpec(**ds_fields)
        elif kind == "idx":
            ds_fields = _take(ds_raw, "idx dataset",
                              required=["train_images", "train_labels",
                                        "test_images", "test_labels"],
                              optional=["subset", "subset_seed"])
            dataset = IdxSpec(**ds_fields)
        else:
            raise ConfigError(f"dataset kind must be 'blobs' or 'idx', got {kind!r}")
        opt_raw = dict(top["optimizer"])
        opt_kind = opt_raw.pop("kind", None)
        if opt_kind not in ("sgd", "momentum", "adam"):
            raise ConfigError(f"unknown optimizer kind {opt_kind!r}")
        opt_fields = _take(opt_raw, "optimizer", required=["lr"],
                           optional=["momentum", "beta1", "beta2", "eps",
                                     "lr_decay_every_epochs", "lr_decay_factor"])
        optimizer = OptimSpec(kind=opt_kind, **opt_fields)
        retro_raw = dict(top["retro"])
        if "norm" in retro_raw:
            try:
                retro_raw["norm"] = Norm(retro_raw["norm"])
            except ValueError:
                raise ConfigError(f"retro norm must be 'l1' or 'l2', got {retro_raw['norm']!r}") from None
        retro_fields = _take(retro_raw, "retro", required=[],
                             optional=["enabled", "kappa", "update_frequency_steps",
                                       "warmup_steps", "norm"])
        return RunConfig(
            dataset=dataset,
            layer_sizes=tuple(int(s) for s in top["layer_sizes"]),
            optimizer=optimizer,
            epochs=int(top["epochs"]),
            batch_size=int(top["batch_size"]),
            seed=int(top["seed"]),
            retro=RetroConfig(**retro_fields),
            eval_every_steps=int(top.get("eval_every_steps", 0)),
            out_dir=top.get("out_dir"),
        )

    def digest(self) -> str:
        """Digest of the scientific fields (out_dir excluded)."""
        payload = self.to_dict()
        payload.pop("out_dir")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _take(raw: dict, where: str, required: list[str], optional: list[str]) -> dict:
    unknown = set(raw) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ConfigError(f"missing {where} keys: {missing}")
    return dict(raw)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return RunConfig.from_dict(raw)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass
class StepRow:
    step: int
    epoch: int
    task_loss: float
    retro_loss: float
    total_loss: float
    alpha: float


@dataclass
class EvalRow:
    step: int
    test_error: float
    test_accuracy: float


@dataclass
class RunRecord:
    config_digest: str
    seed: int
    retro_enabled: bool
    steps: list[StepRow] = field(default_factory=list)
    evals: list[EvalRow] = field(default_factory=list)
    refresh_steps: list[int] = field(default_factory=list)
    alpha_trace: AlphaTrace = field(default_factory=AlphaTrace)
    duration_sec: float = 0.0
    aborted: bool = False
    abort_reason: str | None = None
    param_digests: list[str] | None = None
    final_snapshot: ParamSnapshot | None = None

    @property
    def final_eval(self) -> EvalRow:
        if not self.evals:
            raise RuntimeError("run has no evaluation rows")
        return self.evals[-1]


@dataclass
class PairedSeedResult:
    seed: int
    baseline: RunRecord | None
    retro: RunRecord | None
    delta: float | None
    error: str | None = None


@dataclass
class PairedResult:
    config_digest: str
    per_seed: list[PairedSeedResult]
    aggregate: dict | None


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

def load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    ds = cfg.dataset
    if isinstance(ds, BlobSpec):
        return _split_blobs(ds)
    train = load_idx(ds.train_images, ds.train_labels)
    test = load_idx(ds.test_images, ds.test_labels)
    if ds.subset and ds.subset < train.count:
        rng = np.random.default_rng(ds.subset_seed)
        keep = rng.permutation(train.count)[: ds.subset]
        train = train.subset(keep)
    return train, test


def _split_blobs(spec: BlobSpec) -> tuple[Dataset, Dataset]:
    # one generation shared by both splits so centers coincide
    total = spec.per_class + spec.test_per_class
    full = gen_blobs(spec.classes, spec.dims, total, spec.spread, spec.seed)
    train_idx, test_idx = [], []
    for c in range(spec.classes):
        block = np.arange(c * total, (c + 1) * total)
        train_idx.append(block[: spec.per_class])
        test_idx.append(block[spec.per_class:])
    return full.subset(np.concatenate(train_idx)), full.subset(np.concatenate(test_idx))


def _derived_seeds(master: int) -> tuple[int, int, int]:
    """Independent (model, batch-plan, guidance) streams from the master seed."""
    children = np.random.SeedSequence(master).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def evaluate(model: MlpModel, dataset: Dataset, chunk: int = 1024) -> tuple[float, float]:
    """(test_error, test_accuracy) of argmax predictions; no recording."""
    correct = 0
    for start in range(0, dataset.count, chunk):
        x = dataset.inputs[start:start + chunk]
        probs = model.forward(None, x)
        correct += int((np.argmax(probs.values, axis=1) == dataset.labels[start:start + chunk]).sum())
    accuracy = correct / dataset.count
    return 1.0 - accuracy, accuracy


def _params_digest(model: MlpModel) -> str:
    h = hashlib.sha256()
    for p in model.params:
        h.update(p.tensor.values.tobytes())
    return h.hexdigest()


def train_one(cfg: RunConfig, train: Dataset | None = None, test: Dataset | None = None,
              track_param_digests: bool = False, keep_final_snapshot: bool = False) -> RunRecord:
    """One training run. Per step: forward, task cross-entropy, retrospective
    term against the frozen guidance forward, backward, optimizer update,
    guidance schedule advance. The retrospective value is logged every step
    but only joins the applied gradient once enabled and past warm-up.
    """
    if train is None or test is None:
        train, test = load_datasets(cfg)
    if train.class_count != cfg.layer_sizes[-1]:
        raise ConfigError(
            f"model output size {cfg.layer_sizes[-1]} != {train.class_count} classes"
        )
    model_seed, plan_seed, guidance_seed = _derived_seeds(cfg.seed)
    model = mlp_init(cfg.layer_sizes, model_seed)
    plan = BatchPlan(plan_seed, cfg.batch_size, train.count, cfg.epochs)
    guidance = guidance_init(cfg.layer_sizes, guidance_seed)
    opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, cfg.optimizer.momentum,
                         cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps)
    eye = np.eye(cfg.layer_sizes[-1])
    record = RunRecord(config_digest=cfg.digest(), seed=cfg.seed,
                       retro_enabled=cfg.retro.enabled)
    if track_param_digests:
        record.param_digests = []
    total_steps = plan.steps_per_epoch * cfg.epochs
    started = time.perf_counter()
    step = 0
    for epoch in range(cfg.epochs):
        opt.lr = cfg.optimizer.lr_at_epoch(epoch)
        for xb, yb in batches(train, plan, epoch):
            tape = T.Tape()
            probs = model.forward(tape, xb)
            if not np.isfinite(probs.values).all():
                record.aborted = True
                record.abort_reason = f"non-finite model output at step {step}"
                record.duration_sec = time.perf_counter() - started
                return record
            task = T.cross_entropy(tape, probs, yb)
            frozen = forward_frozen(guidance.snapshot, cfg.layer_sizes, xb)
            retro = retro_loss(tape, probs, T.Tensor(eye[yb]), frozen,
                               cfg.retro.kappa, cfg.retro.norm)
            task_v = task.item()
            retro_v = retro.item()
            if not (math.isfinite(task_v) and math.isfinite(retro_v)):
                record.aborted = True
                record.abort_reason = (
                    f"non-finite loss at step {step}: task={task_v}, retro={retro_v}"
                )
                record.duration_sec = time.perf_counter() - started
                return record
            active = cfg.retro.enabled and step >= cfg.retro.warmup_steps
            grads_task = T.backward(task)
            if active:
                grads_retro = T.backward(retro)
                flat_task = np.concatenate([grads_task.wrt(p.tensor).ravel()
                                            for p in model.params])
                flat_retro = np.concatenate([grads_retro.wrt(p.tensor).ravel()
                                             for p in model.params])
                norm_task = float(np.sqrt(flat_task @ flat_task))
                proj_retro = float(flat_retro @ flat_task) / norm_task if norm_task else 0.0
                alpha = record.alpha_trace.record(step, norm_task, proj_retro)
                grads = grads_task.plus(grads_retro)
                total_v = task_v + retro_v
            else:
                alpha = 1.0
                grads = grads_task
                total_v = task_v
            opt.apply(model.params, grads)
            if cfg.retro.enabled:
                advanced = guidance_advance(guidance, model, step, cfg.retro)
                if advanced.last_refresh_step != guidance.last_refresh_step:
                    record.refresh_steps.append(advanced.last_refresh_step)
                guidance = advanced
            record.steps.append(StepRow(step, epoch, task_v, retro_v, total_v, alpha))
            if record.param_digests is not None:
                record.param_digests.append(_params_digest(model))
            is_last = step == total_steps - 1
            if (cfg.eval_every_steps and (step + 1) % cfg.eval_every_steps == 0) or is_last:
                err, acc = evaluate(model, test)
                record.evals.append(EvalRow(step, err, acc))
            step += 1
    if keep_final_snapshot:
        record.final_snapshot = take_snapshot(model, step - 1, SnapshotOrigin.TRAINED)
    record.duration_sec = time.perf_counter() - started
    return record


def run_paired(cfg: RunConfig, seeds: Sequence[int],
               train: Dataset | None = None, test: Dataset | None = None) -> PairedResult:
    """Baseline vs retro arms per seed, identical init and batch order."""
    if not seeds:
        raise ConfigError("run_paired needs at least one seed")
    if train is None or test is None:
        train, test = load_datasets(cfg)
    per_seed: list[PairedSeedResult] = []
    for seed in seeds:
        base_cfg = replace(cfg, seed=int(seed), retro=replace(cfg.retro, enabled=False))
        retro_cfg = replace(cfg, seed=int(seed), retro=replace(cfg.retro, enabled=True))
        try:
            baseline = train_one(base_cfg, train, test)
            retro = train_one(retro_cfg, train, test)
        except Exception as e:  # record, do not silently drop the seed
            per_seed.append(PairedSeedResult(seed, None, None, None,
                                             error=f"{type(e).__name__}: {e}"))
            continue
        failed = next((r for r in (baseline, retro) if r.aborted), None)
        if failed is not None:
            per_seed.append(PairedSeedResult(seed, baseline, retro, None,
                                             error=failed.abort_reason))
            continue
        delta = retro.final_eval.test_error - baseline.final_eval.test_error
        per_seed.append(PairedSeedResult(seed, baseline, retro, delta))
    ok = [r for r in per_seed if r.error is None]
    aggregate = None
    if ok:
        base_err = np.array([r.baseline.final_eval.test_error for r in ok])
        retro_err = np.array([r.retro.final_eval.test_error for r in ok])
        aggregate = {
            "seeds_ok": [r.seed for r in ok],
            "baseline_mean": float(base_err.mean()),
            "baseline_std": float(base_err.std()),
            "retro_mean": float(retro_err.mean()),
            "retro_std": float(retro_err.std()),
            "delta_mean": float((retro_err - base_err).mean()),
        }
    return PairedResult(cfg.digest(), per_seed, aggregate)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

_AXES: dict[str, Callable[[RunConfig, str], RunConfig]] = {
    "batch_size": lambda c, v: replace(c, batch_size=int(v)),
    "optimizer": lambda c, v: replace(c, optimizer=replace(c.optimizer, kind=str(v))),
    "frequency": lambda c, v: replace(c, retro=replace(c.retro, update_frequency_steps=int(v))),
    "warmup": lambda c, v: replace(c, retro=replace(c.retro, warmup_steps=int(v))),
    "norm": lambda c, v: replace(c, retro=replace(c.retro, norm=Norm(str(v)))),
    "kappa": lambda c, v: replace(c, retro=replace(c.retro, kappa=float(v))),
    "momentum_param": lambda c, v: replace(c, optimizer=replace(c.optimizer, momentum=float(v))),
}

SWEEP_AXES = tuple(_AXES)


def sweep(base: RunConfig, axis: str, values: Sequence, seeds: Sequence[int],
          out_dir=None) -> list[dict]:
    """One paired aggregate per axis value; per-cell failures recorded."""
    if axis not in _AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    rows = []
    for value in values:
        row: dict = {"axis": axis, "value": value}
        try:
            cell_cfg = _AXES[axis](base, value)
            result = run_paired(cell_cfg, seeds)
            failures = [r for r in result.per_seed if r.error is not None]
            row["failed_seeds"] = [r.seed for r in failures]
            if result.aggregate:
                row.update(result.aggregate)
        except Exception as e:
            row["error"] = f"{type(e).__name__}: {e}"
        rows.append(row)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        keys = ["axis", "value", "baseline_mean", "baseline_std", "retro_mean",
                "retro_std", "delta_mean", "seeds_ok", "failed_seeds", "error"]
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=keys, extrasaction="ignore")
            w.writeheader()
            for row in rows:
                w.writerow(row)
    return rows


# ---------------------------------------------------------------------------
# Analysis report
# ---------------------------------------------------------------------------

def analyze(out_dir, n_probe_triples: int = 50, seed: int = 0) -> list[Path]:
    """Cross-check the autodiff path against the scalar oracles; write CSVs.

    gradient_regions.csv : piecewise slope table, analytic vs autodiff
    consistency.csv      : grid argmin per norm vs the consistent target
    l2_minimizer.csv     : closed-form stationary point vs grid argmin
    """
    from .retroloss import consistency_probe, l2_retro_minimizer, scalar_retro_grad

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "gradient_regions.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["kappa", "g_star", "g_tp", "g_t", "analytic", "autodiff", "equal"])
        for g_star, g_tp in [(1.0, 0.2), (0.0, 1.0)]:
            for kappa in (1.0, 2.0, 4.0):
                lo = min(g_star, g_tp) - 0.5
                n = int((max(g_star, g_tp) + 0.5 - lo) / 0.01)
                for k in range(n):
                    g_t = lo + 0.01 * k + 0.005  # offset keeps the scan off the kinks
                    if min(abs(g_t - g_star), abs(g_t - g_tp)) < 1e-9:
                        continue
                    analytic = scalar_retro_grad(g_t, g_star, g_tp, kappa)
                    autodiff = _autodiff_scalar_grad(g_t, g_star, g_tp, kappa)
                    w.writerow([kappa, g_star, g_tp, repr(g_t), repr(analytic),
                                repr(autodiff), analytic == autodiff])
    written.append(path)

    rng = np.random.default_rng(seed)
    path = out / "consistency.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["norm", "kappa", "g_star", "g_tp", "argmin", "expected", "within_step"])
        for _ in range(n_probe_triples):
            kappa = float(rng.uniform(0.5, 4.0))
            g_star = float(rng.uniform(-1.0, 1.0))
            g_tp = g_star + float(rng.uniform(-1.5, 1.5)) / kappa
            for norm in (Norm.L1, Norm.L2):
                argmin = consistency_probe(g_star, g_tp, kappa, norm)
                expected = g_star if norm is Norm.L1 else l2_retro_minimizer(g_star, g_tp, kappa)
                w.writerow([norm.value, repr(kappa), repr(g_star), repr(g_tp),
                            repr(argmin), repr(expected),
                            abs(argmin - expected) <= 1e-3 + 1e-9])
    written.append(path)

    path = out / "l2_minimizer.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["kappa", "g_star", "g_tp", "closed_form", "grid_argmin", "abs_diff"])
        for _ in range(n_probe_triples):
            kappa = float(rng.uniform(0.5, 4.0))
            g_star = float(rng.uniform(-1.0, 1.0))
            g_tp = g_star + float(rng.uniform(-1.5, 1.5)) / kappa
            closed = l2_retro_minimizer(g_star, g_tp, kappa)
            grid = consistency_probe(g_star, g_tp, kappa, Norm.L2)
            w.writerow([repr(kappa), repr(g_star), repr(g_tp), repr(closed),
                        repr(grid), repr(abs(closed - grid))])
    written.append(path)
    return written


def _autodiff_scalar_grad(g_t: float, g_star: float, g_tp: float, kappa: float) -> float:
    tape = T.Tape()
    current = T.Tensor([[g_t]], requires_grad=True)
    loss = retro_loss(tape, current, T.Tensor([[g_star]]), T.Tensor([[g_tp]]),
                      kappa, Norm.L1)
    return float(T.backward(loss).wrt(current)[0, 0])


# ---------------------------------------------------------------------------
# Metric emission
# ---------------------------------------------------------------------------

def emit_metrics(result: RunRecord | PairedResult, out_dir,
                 config: RunConfig | None = None) -> None:
    if isinstance(result, RunRecord):
        emit_run(result, out_dir, config)
    else:
        emit_pair(result, out_dir, config)


def emit_run(record: RunRecord, out_dir, config: RunConfig | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "steps.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "epoch", "task_loss", "retro_loss", "total_loss", "alpha"])
        for r in record.steps:
            w.writerow([r.step, r.epoch, repr(r.task_loss), repr(r.retro_loss),
                        repr(r.total_loss), repr(r.alpha)])
    with open(out / "eval.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "test_error", "test_accuracy"])
        for e in record.evals:
            w.writerow([e.step, repr(e.test_error), repr(e.test_accuracy)])
    summary = {
        "config": config.to_dict() if config is not None else None,
        "config_digest": record.config_digest,
        "seed": record.seed,
        "retro_enabled": record.retro_enabled,
        "duration_sec": record.duration_sec,
        "aborted": record.aborted,
        "abort_reason": record.abort_reason,
        "refresh_steps": record.refresh_steps,
        "final": None,
    }
    if record.evals:
        last = record.evals[-1]
        summary["final"] = {
            "step": last.step,
            "test_error": last.test_error,
            "test_accuracy": last.test_accuracy,
            "task_loss": record.steps[-1].task_loss if record.steps else None,
        }
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")


def emit_pair(result: PairedResult, out_dir, config: RunConfig | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for r in result.per_seed:
        if r.baseline is not None:
            base_cfg = retro_cfg = None
            if config is not None:
                base_cfg = replace(config, seed=r.seed,
                                   retro=replace(config.retro, enabled=False))
                retro_cfg = replace(config, seed=r.seed,
                                    retro=replace(config.retro, enabled=True))
            emit_run(r.baseline, out / f"seed_{r.seed}" / "baseline", base_cfg)
            if r.retro is not None:
                emit_run(r.retro, out / f"seed_{r.seed}" / "retro", retro_cfg)
        entry = {"seed": r.seed, "error": r.error, "delta": r.delta}
        if r.error is None:
            entry["baseline_final_error"] = r.baseline.final_eval.test_error
            entry["retro_final_error"] = r.retro.final_eval.test_error
        per_seed.append(entry)
    with open(out / "pair_summary.json", "w", encoding="utf-8") as f:
        json.dump({
            "config": config.to_dict() if config is not None else None,
            "config_digest": result.config_digest,
            "per_seed": per_seed,
            "aggregate": result.aggregate,
        }, f, indent=2)
        f.write("\n")
