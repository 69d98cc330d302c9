"""Training toolkit built around a retrospective auxiliary loss.

Predictions are pulled toward the labels and pushed away from the
predictions of a frozen past parameter state, under a step-scheduled
guidance refresh. The package bundles the tape autodiff engine, an MLP
with snapshot/restore, deterministic optimizers, dataset plumbing, and a
paired-run experiment harness with analysis oracles.
"""

from .data import BatchPlan, Dataset, batches, gen_blobs, load_idx
from .harness import (
    BlobSpec,
    IdxSpec,
    OptimSpec,
    PairedResult,
    RunConfig,
    RunRecord,
    analyze,
    emit_metrics,
    run_paired,
    sweep,
    train_one,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .nn import (
    MlpModel,
    Param,
    ParamSnapshot,
    SnapshotOrigin,
    forward_frozen,
    load_snapshot,
    mlp_init,
    save_snapshot,
    snapshot,
)
from .optim import Adam, Momentum, Sgd, make_optimizer
from .retroloss import (
    AlphaTrace,
    GuidanceState,
    Norm,
    RetroConfig,
    alpha_of_step,
    consistency_probe,
    guidance_advance,
    guidance_init,
    guidance_step_index,
    l2_retro_minimizer,
    retro_loss,
    scalar_retro_grad,
    total_loss,
)
from .tensor import GradMap, Tape, Tensor, backward, grad_check, gradcheck_suite

__version__ = "0.1.0"
