"""Per-tensor linear and spherical (SLERP) interpolation between two checkpoints.

Every tensor is flattened to a single vector and interpolated in float32.
SLERP coefficients are computed from normalized directions but applied to
the unnormalized inputs, preserving the scale of unequal-norm tensors.
Degenerate pairs (colinear, antipodal, or containing an all-zero side)
fall back to linear interpolation with a per-tensor fallback flag instead
of aborting the merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .tensor_store import (
    Checkpoint,
    Dtype,
    _canonical_metas,
    _header_bytes,
    f32_to_dtype,
    f32_to_dtype_array,
)

__all__ = [
    "MergeMethod",
    "OutputDtype",
    "MergeRecipe",
    "MergeReport",
    "MergeError",
    "DEFAULT_DEGENERACY_EPS",
    "lerp_tensor",
    "slerp_tensor",
    "merge_checkpoints",
    "merge_checkpoints_to_file",
    "recipe_name",
]

DEFAULT_DEGENERACY_EPS = 1e-6

# elements per block when accumulating dot products / norms in float64
_CHUNK = 1 << 20


class MergeError(ValueError):
    """Incompatible checkpoints or invalid interpolation inputs."""


class MergeMethod(Enum):
    LINEAR = "linear"
    SLERP = "slerp"


class OutputDtype(Enum):
    SAME_AS_FIRST_INPUT = "same"
    F32 = "f32"


@dataclass(frozen=True)
class MergeRecipe:
    """One merge configuration: method, interpolation weight, numeric policies."""

    method: MergeMethod
    weight: float
    degeneracy_eps: float = DEFAULT_DEGENERACY_EPS
    output_dtype: OutputDtype = OutputDtype.SAME_AS_FIRST_INPUT

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise MergeError(f"interpolation weight must be in [0, 1], got {self.weight}")
        if not self.degeneracy_eps > 0.0:
            raise MergeError(f"degeneracy_eps must be positive, got {self.degeneracy_eps}")


def recipe_name(recipe: MergeRecipe) -> str:
    """Deterministic name encoding method and weight, e.g. ``linear-0.400000``."""
    return f"{recipe.method.value}-{recipe.weight:.6f}"


@dataclass
class MergeReport:
    """Merged checkpoint plus per-tensor SLERP fallback flags.

    ``checkpoint`` is None when the merge was streamed straight to a file.
    """

    recipe: MergeRecipe
    checkpoint: Checkpoint | None
    fallbacks: dict[str, bool] = field(default_factory=dict)

    @property
    def tensor_count(self) -> int:
        return len(self.fallbacks)

    @property
    def fallback_count(self) -> int:
        return sum(self.fallbacks.values())


def _as_f32_vector(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float32).reshape(-1)


def _lerp_into(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """(1-alpha)*a + alpha*b computed in place; clobbers both inputs."""
    a *= 1.0 - alpha
    b *= alpha
    a += b
    return a


def lerp_tensor(a, b, alpha: float) -> np.ndarray:
    """Element-wise (1-alpha)*a[i] + alpha*b[i] in float32.

    Weights 0 and 1 reproduce the respective input bit-exactly.
    """
    a = _as_f32_vector(a)
    b = _as_f32_vector(b)
    if a.size != b.size:
        raise MergeError(f"length mismatch: {a.size} vs {b.size}")
    if not 0.0 <= alpha <= 1.0:
        raise MergeError(f"interpolation weight must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return _lerp_into(a.copy(), b.copy(), float(alpha))


def _dot_and_norms(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    """One chunked pass returning (a.b, |a|^2, |b|^2) accumulated in float64."""
    dot = na2 = nb2 = 0.0
    for start in range(0, a.size, _CHUNK):
        ca = a[start : start + _CHUNK].astype(np.float64)
        cb = b[start : start + _CHUNK].astype(np.float64)
        dot += float(ca @ cb)
        na2 += float(ca @ ca)
        nb2 += float(cb @ cb)
    return dot, na2, nb2


def _slerp_coefficients(dot: float, na2: float, nb2: float, t: float, eps: float) -> tuple[float, float] | None:
    """Great-circle coefficients (s0, s1), or None for degenerate geometry."""
    cos_omega = max(-1.0, min(1.0, dot / math.sqrt(na2 * nb2)))
    omega = math.acos(cos_omega)
    sin_omega = math.sin(omega)
    if sin_omega < eps:
        return None
    return math.sin((1.0 - t) * omega) / sin_omega, math.sin(t * omega) / sin_omega


def slerp_tensor(a, b, t: float, eps: float = DEFAULT_DEGENERACY_EPS) -> tuple[np.ndarray, bool]:
    """Spherical interpolation between two vectors in float32.

    Returns ``(result, fallback)``. When sin of the angle between the
    normalized inputs is below ``eps`` (colinear or antipodal directions,
    or one all-zero side), the result is :func:`lerp_tensor` output and
    the fallback flag is True.
    """
    a = _as_f32_vector(a)
    b = _as_f32_vector(b)
    if a.size != b.size:
        raise MergeError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise MergeError("slerp requires nonzero-length inputs")
    if not 0.0 <= t <= 1.0:
        raise MergeError(f"interpolation weight must be in [0, 1], got {t}")
    if not eps > 0.0:
        raise MergeError(f"degeneracy_eps must be positive, got {eps}")
    dot, na2, nb2 = _dot_and_norms(a, b)
    if na2 == 0.0 and nb2 == 0.0:
        raise MergeError("slerp is undefined for two all-zero inputs")
    if na2 == 0.0 or nb2 == 0.0:
        return lerp_tensor(a, b, t), True
    coeffs = _slerp_coefficients(dot, na2, nb2, float(t), eps)
    if coeffs is None:
        return lerp_tensor(a, b, t), True
    s0, s1 = coeffs
    out = a.copy()
    out *= s0
    scaled = b * s1
    out += scaled
    return out, False


def _check_mergeable(ckpt_c: Checkpoint, ckpt_i: Checkpoint) -> None:
    names_c = set(ckpt_c.names)
    names_i = set(ckpt_i.names)
    if names_c != names_i:
        only_c = sorted(names_c - names_i)
        only_i = sorted(names_i - names_c)
        raise MergeError(
            f"tensor name sets differ: only in first {only_c}, only in second {only_i}"
        )
    for name in sorted(names_c):
        shape_c = ckpt_c.meta(name).shape
        shape_i = ckpt_i.meta(name).shape
        if shape_c != shape_i:
            raise MergeError(f"tensor {name!r}: shape mismatch {shape_c} vs {shape_i}")


def _merge_vectors(a: np.ndarray, b: np.ndarray, recipe: MergeRecipe) -> tuple[np.ndarray, bool]:
    """Interpolate one decoded tensor pair; may clobber both arrays."""
    w = recipe.weight
    if recipe.method is MergeMethod.LINEAR:
        if w == 0.0:
            return a, False
        if w == 1.0:
            return b, False
        return _lerp_into(a, b, w), False

    def fallback() -> tuple[np.ndarray, bool]:
        # must equal lerp_tensor output exactly, including endpoint fast paths
        if w == 0.0:
            return a, True
        if w == 1.0:
            return b, True
        return _lerp_into(a, b, w), True

    if a.size == 0:
        return a, True
    dot, na2, nb2 = _dot_and_norms(a, b)
    if na2 == 0.0 or nb2 == 0.0:
        return fallback()
    coeffs = _slerp_coefficients(dot, na2, nb2, w, recipe.degeneracy_eps)
    if coeffs is None:
        return fallback()
    s0, s1 = coeffs
    a *= s0
    b *= s1
    a += b
    return a, False


def _iter_merged(ckpt_c: Checkpoint, ckpt_i: Checkpoint, recipe: MergeRecipe):
    """Yield (name, out_dtype, shape, merged_f32, fallback) in lexicographic order."""
    _check_mergeable(ckpt_c, ckpt_i)
    for name in sorted(ckpt_c.names):
        meta_c = ckpt_c.meta(name)
        a = ckpt_c.array_f32(name)
        b = ckpt_i.array_f32(name)
        merged, fell_back = _merge_vectors(a, b, recipe)
        out_dtype = Dtype.F32 if recipe.output_dtype is OutputDtype.F32 else meta_c.dtype
        yield name, out_dtype, meta_c.shape, merged, fell_back


def _merge_metadata(recipe: MergeRecipe) -> dict[str, str]:
    return {"merge_method": recipe.method.value, "merge_weight": repr(recipe.weight)}


def merge_checkpoints(ckpt_c: Checkpoint, ckpt_i: Checkpoint, recipe: MergeRecipe) -> MergeReport:
    """Merge two checkpoints tensor by tensor into an in-memory checkpoint.

    Both checkpoints must contain exactly the same tensor names with
    identical shapes. The result's metadata records method and weight.
    """
    tensors: dict[str, tuple[Dtype, tuple[int, ...], bytes]] = {}
    fallbacks: dict[str, bool] = {}
    for name, out_dtype, shape, merged, fell_back in _iter_merged(ckpt_c, ckpt_i, recipe):
        tensors[name] = (out_dtype, shape, f32_to_dtype(merged, out_dtype))
        fallbacks[name] = fell_back
    merged_ckpt = Checkpoint.build(tensors, _merge_metadata(recipe))
    return MergeReport(recipe=recipe, checkpoint=merged_ckpt, fallbacks=fallbacks)


def merge_checkpoints_to_file(
    ckpt_c: Checkpoint, ckpt_i: Checkpoint, recipe: MergeRecipe, path: str | Path
) -> MergeReport:
    """Merge two checkpoints, streaming the output file tensor by tensor.

    Peak additional memory stays within a couple of decoded tensors; the
    merged checkpoint is never materialized in RAM.
    """
    _check_mergeable(ckpt_c, ckpt_i)
    out_shapes = {}
    for name in ckpt_c.names:
        meta = ckpt_c.meta(name)
        out_dtype = Dtype.F32 if recipe.output_dtype is OutputDtype.F32 else meta.dtype
        out_shapes[name] = (out_dtype, meta.shape)
    metas = _canonical_metas(out_shapes)
    fallbacks: dict[str, bool] = {}
    with open(path, "wb") as f:
        f.write(_header_bytes(metas, _merge_metadata(recipe)))
        for name, out_dtype, _, merged, fell_back in _iter_merged(ckpt_c, ckpt_i, recipe):
            fallbacks[name] = fell_back
            f32_to_dtype_array(merged, out_dtype).tofile(f)
    return MergeReport(recipe=recipe, checkpoint=None, fallbacks=fallbacks)
