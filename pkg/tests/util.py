"""Shared builders for randomized test inputs."""

from __future__ import annotations

import numpy as np

from mergelab.tensor_store import Checkpoint, Dtype, f32_to_dtype

ALL_DTYPES = (Dtype.F32, Dtype.F16, Dtype.BF16)


def random_checkpoint(
    rng: np.random.Generator,
    n_tensors: int | None = None,
    max_dim: int = 64,
    dtypes: tuple[Dtype, ...] = (Dtype.F32,),
    metadata: dict[str, str] | None = None,
) -> Checkpoint:
    if n_tensors is None:
        n_tensors = int(rng.integers(1, 6))
    tensors = {}
    for i in range(n_tensors):
        dtype = dtypes[int(rng.integers(0, len(dtypes)))]
        if rng.random() < 0.2:
            shape = (int(rng.integers(1, max_dim)), int(rng.integers(1, 5)))
        else:
            shape = (int(rng.integers(1, max_dim + 1)),)
        values = rng.standard_normal(int(np.prod(shape))).astype(np.float32)
        raw = f32_to_dtype(values, dtype)
        tensors[f"tensor_{i:02d}"] = (dtype, shape, raw)
    return Checkpoint.build(tensors, metadata)


def random_checkpoint_pair(
    rng: np.random.Generator,
    n_tensors: int | None = None,
    max_dim: int = 64,
    dtypes: tuple[Dtype, ...] = (Dtype.F32,),
) -> tuple[Checkpoint, Checkpoint]:
    """Two checkpoints with identical names, shapes and dtypes."""
    first = random_checkpoint(rng, n_tensors=n_tensors, max_dim=max_dim, dtypes=dtypes)
    tensors = {}
    for name, (meta, _) in first:
        values = rng.standard_normal(meta.num_elements).astype(np.float32)
        tensors[name] = (meta.dtype, meta.shape, f32_to_dtype(values, meta.dtype))
    return first, Checkpoint.build(tensors)
