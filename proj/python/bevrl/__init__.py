"""BEV latent-state driving pipeline.

Thin re-export of the compiled core: deterministic 2D traffic simulator,
BEV rasterizer, dataset io, multi-head VAE, hazard signal and DQN
training/evaluation.
"""

from bevrl._core import (
    Dataset,
    StepEvents,
    Vae,
    World,
    __version__,
    collect,
    decode_action,
    git_blob_hash,
    hazard,
    make_split,
    num_actions,
    train_dqn,
    train_vae,
)

__all__ = [
    "Dataset",
    "StepEvents",
    "Vae",
    "World",
    "__version__",
    "collect",
    "decode_action",
    "git_blob_hash",
    "hazard",
    "make_split",
    "num_actions",
    "train_dqn",
    "train_vae",
]
