"""Retrospective auxiliary loss, guidance scheduling, and analysis oracles.

The loss pulls current predictions toward the labels and away from the
predictions of a frozen past parameter state ("guidance"): per sample,

    (kappa + 1) * dist(current, target) - kappa * dist(current, guidance)

averaged over the batch, where dist is a per-row L1 or Euclidean distance.
It has no hinge and may go negative; negative values mean the prediction
is proportionally closer to the target than to the guidance.

Guidance refreshes on a step schedule: after a warm-up period, every
update-frequency-th step snapshots the live model. Before the first
refresh the guidance is a randomly initialized parameter state drawn from
a stream independent of the model's own initialization.

The scalar oracles at the bottom (piecewise gradient table, closed-form
minimizer of the squared-distance variant, brute-force grid probe) exist
to cross-check the autodiff path and are used by the analysis report and
the acceptance suite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import ConfigError, DomainError, GuidanceLinkageError, ShapeError
from .nn import MlpModel, ParamSnapshot, SnapshotOrigin, random_snapshot, snapshot


class Norm(enum.Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class RetroConfig:
    """Knobs of the retrospective term.

    kappa: repulsion weight (>= 0).
    update_frequency_steps: steps between guidance refreshes (>= 1).
    warmup_steps: steps before the term joins the objective (>= 0).
    norm: per-sample distance, L1 (default) or Euclidean.
    enabled: master switch; disabled runs are pure task-loss runs.
    """

    kappa: float = 2.0
    update_frequency_steps: int = 50
    warmup_steps: int = 0
    norm: Norm = Norm.L1
    enabled: bool = True

    def __post_init__(self):
        if self.kappa < 0:
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if self.update_frequency_steps < 1:
            raise ConfigError(f"update frequency must be >= 1, got {self.update_frequency_steps}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup_steps}")


# last_refresh_step value while the guidance is still the random init
NEVER_REFRESHED = -1


@dataclass(frozen=True)
class GuidanceState:
    """Current guidance snapshot plus refresh bookkeeping."""

    snapshot: ParamSnapshot
    last_refresh_step: int
    rng_seed: int


def guidance_init(layer_sizes, seed: int) -> GuidanceState:
    """Random-origin guidance, independent of the model's init stream."""
    rng = np.random.default_rng(seed)
    return GuidanceState(
        snapshot=random_snapshot(layer_sizes, rng),
        last_refresh_step=NEVER_REFRESHED,
        rng_seed=int(seed),
    )


def guidance_step_index(step: int, frequency: int) -> int:
    """Largest multiple of ``frequency`` not exceeding ``step``."""
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    if frequency < 1:
        raise ConfigError(f"frequency must be >= 1, got {frequency}")
    return frequency * (step // frequency)


def guidance_advance(state: GuidanceState, model: MlpModel, step: int,
                     cfg: RetroConfig) -> GuidanceState:
    """Post-update schedule hook: refresh the snapshot at qualifying steps.

    Called once per training step after the optimizer update, so a refresh
    at step T captures the post-update parameters. Refreshes happen exactly
    at steps T >= warmup with T a multiple of the update frequency.
    """
    if step >= cfg.warmup_steps and step % cfg.update_frequency_steps == 0:
        return replace(
            state,
            snapshot=snapshot(model, step=step, origin=SnapshotOrigin.TRAINED),
            last_refresh_step=step,
        )
    return state


def retro_loss(tape: T.Tape | None, current: T.Tensor, target: T.Tensor,
               guidance: T.Tensor, kappa: float, norm: Norm) -> T.Tensor:
    """Batch mean of the retrospective term; differentiable w.r.t. current only.

    ``guidance`` (and ``target``) must be detached constants: a guidance
    tensor carrying tape linkage violates the detachment contract.
    """
    if kappa < 0:
        raise ConfigError(f"kappa must be >= 0, got {kappa}")
    if guidance.tape is not None or guidance.requires_grad:
        raise GuidanceLinkageError("guidance output carries gradient linkage; detach it")
    for t in (current, target, guidance):
        if t.values.ndim != 2:
            raise ShapeError(f"retro_loss expects [batch, d] tensors, got {t.shape}")
    if current.shape != target.shape or current.shape != guidance.shape:
        raise ShapeError(
            f"retro_loss shapes differ: {current.shape}, {target.shape}, {guidance.shape}"
        )
    dist_rows = T.l1_dist_rows if norm is Norm.L1 else T.l2_dist_rows
    pull = T.mean(tape, dist_rows(tape, current, target))
    push = T.mean(tape, dist_rows(tape, current, guidance))
    return T.sub(tape, T.scale(tape, pull, kappa + 1.0), T.scale(tape, push, kappa))


def total_loss(tape: T.Tape | None, task: T.Tensor, retro: T.Tensor,
               cfg: RetroConfig, step: int) -> T.Tensor:
    """Task plus retrospective term; the task alone while disabled/warming up."""
    if not cfg.enabled or step < cfg.warmup_steps:
        return task
    return T.add(tape, task, retro)


# ---------------------------------------------------------------------------
# Scalar analysis oracles (1-D output space)
# ---------------------------------------------------------------------------

def scalar_retro_grad(g_t: float, g_star: float, g_tp: float, kappa: float) -> float:
    """Piecewise-constant slope of the scalar L1 retrospective term.

    Enumerates the analysis table directly (it is the independent check of
    the autodiff path, so it does not share the sign-based formula):
    interior region slope -(2*kappa+1) when the guidance sits below the
    optimum, +(2*kappa+1) when above; outer regions +/-1.
    """
    if g_t == g_tp or g_t == g_star:
        raise DomainError("gradient undefined at kink")
    if g_tp < g_star:
        if g_t < g_tp:
            return -1.0
        if g_t < g_star:
            return -2.0 * kappa - 1.0
        return 1.0
    if g_tp > g_star:
        if g_t > g_tp:
            return 1.0
        if g_t > g_star:
            return 2.0 * kappa + 1.0
        return -1.0
    # degenerate coincidence: both distances share the kink, slopes +/-1
    return 1.0 if g_t > g_star else -1.0


def l2_retro_minimizer(g_star: float, g_tp: float, kappa: float) -> float:
    """Stationary point of the squared-distance retrospective term."""
    return g_star + kappa * (g_star - g_tp)


def alpha_of_step(grad_task_dot: float, grad_retro_dot: float) -> float:
    """Effective learning-rate multiplier 1 + retro/task (signed projections).

    A zero task gradient makes the ratio undefined; returns NaN rather than
    failing the run.
    """
    if grad_task_dot == 0.0:
        return math.nan
    return 1.0 + grad_retro_dot / grad_task_dot


@dataclass
class AlphaRecord:
    step: int
    grad_norm_task: float
    grad_norm_retro: float
    alpha: float


@dataclass
class AlphaTrace:
    """Per-step effective learning-rate diagnostic."""

    records: list[AlphaRecord] = field(default_factory=list)

    def record(self, step: int, grad_norm_task: float, grad_norm_retro: float) -> float:
        alpha = alpha_of_step(grad_norm_task, grad_norm_retro)
        self.records.append(AlphaRecord(step, grad_norm_task, grad_norm_retro, alpha))
        return alpha


def consistency_probe(g_star: float, g_tp: float, kappa: float, norm: Norm,
                      grid_step: float = 1e-3, pad: float = 2.0) -> float:
    """Brute-force argmin of the total scalar objective over a dense grid.

    For the L1 norm the objective is the task distance |g - g_star| plus
    the retrospective term; a consistent auxiliary term leaves the argmin
    at g_star. For the L2 norm only the retrospective term is evaluated,
    on the squared-distance surface whose stationary point the closed form
    ``l2_retro_minimizer`` gives.
    """
    if grid_step <= 0:
        raise ConfigError(f"grid step must be positive, got {grid_step}")
    lo = min(g_star, g_tp) - pad
    hi = max(g_star, g_tp) + pad
    n = int(round((hi - lo) / grid_step)) + 1
    if n < 2:
        raise ConfigError("empty probe grid")
    g = lo + grid_step * np.arange(n)
    if norm is Norm.L1:
        f = np.abs(g - g_star) + (kappa + 1.0) * np.abs(g - g_star) - kappa * np.abs(g - g_tp)
    else:
        f = (kappa + 1.0) * (g - g_star) ** 2 - kappa * (g - g_tp) ** 2
    return float(g[np.argmin(f)])
