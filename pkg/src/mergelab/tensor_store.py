"""Single-file tensor container: bit-exact reading and writing of checkpoints.

File layout (safetensors-compatible):

    [bytes 0-7]    unsigned 64-bit little-endian N = header byte length
    [bytes 8-8+N)  UTF-8 JSON object mapping tensor name ->
                   {"dtype": "F32"|"F16"|"BF16", "shape": [ints],
                    "data_offsets": [begin, end]}
                   plus an optional "__metadata__" object of string -> string
    [remainder]    data section; data_offsets are relative to its start

Elements are little-endian. Writers pad the header JSON with trailing
spaces (0x20) so N is a multiple of 8; readers accept any length.
All arithmetic elsewhere in the package is done on 32-bit floats decoded
through :func:`tensor_as_f32`.
"""

from __future__ import annotations

import json
import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Dtype",
    "TensorMeta",
    "Checkpoint",
    "TensorStoreError",
    "read_checkpoint",
    "write_checkpoint",
    "tensor_as_f32",
    "f32_to_dtype",
    "f32_to_dtype_array",
]

_HEADER_PREFIX = struct.Struct("<Q")


class TensorStoreError(ValueError):
    """Malformed container file or invalid checkpoint contents."""


class Dtype(Enum):
    F32 = "F32"
    F16 = "F16"
    BF16 = "BF16"

    @property
    def itemsize(self) -> int:
        return 4 if self is Dtype.F32 else 2


@dataclass(frozen=True)
class TensorMeta:
    """Name, dtype, shape and data-section byte range of one stored tensor."""

    name: str
    dtype: Dtype
    shape: tuple[int, ...]
    byte_range: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.name:
            raise TensorStoreError("tensor name must be a non-empty string")
        if any(d < 0 for d in self.shape):
            raise TensorStoreError(f"tensor {self.name!r}: negative dimension in shape {self.shape}")
        begin, end = self.byte_range
        if begin < 0 or end < begin:
            raise TensorStoreError(f"tensor {self.name!r}: invalid byte range [{begin}, {end})")
        if end - begin != self.nbytes:
            raise TensorStoreError(
                f"tensor {self.name!r}: byte range length {end - begin} does not match "
                f"{self.num_elements} x {self.dtype.itemsize} bytes"
            )

    @property
    def num_elements(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.num_elements * self.dtype.itemsize


class Checkpoint:
    """An ordered, named collection of typed tensors plus string metadata.

    Tensor iteration order is the insertion order of ``tensors`` (header key
    order when read from a file). Equality compares tensor names, dtypes,
    shapes and raw bytes plus metadata; byte ranges are a storage detail and
    do not participate.
    """

    def __init__(
        self,
        tensors: Mapping[str, tuple[TensorMeta, bytes]],
        metadata: Mapping[str, str] | None = None,
    ) -> None:
        self._tensors: dict[str, tuple[TensorMeta, bytes]] = {}
        ranges = []
        for name, (meta, raw) in tensors.items():
            if meta.name != name:
                raise TensorStoreError(f"tensor key {name!r} does not match meta name {meta.name!r}")
            if len(raw) != meta.nbytes:
                raise TensorStoreError(
                    f"tensor {name!r}: got {len(raw)} data bytes, expected {meta.nbytes}"
                )
            self._tensors[name] = (meta, bytes(raw))
            if meta.nbytes > 0:
                ranges.append((meta.byte_range, name))
        ranges.sort()
        for ((_, prev_end), prev_name), ((begin, _), name) in zip(ranges, ranges[1:]):
            if begin < prev_end:
                raise TensorStoreError(f"tensors {prev_name!r} and {name!r} have overlapping byte ranges")
        self.metadata: dict[str, str] = dict(metadata or {})
        for k, v in self.metadata.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise TensorStoreError("metadata must map strings to strings")

    @classmethod
    def build(
        cls,
        tensors: Mapping[str, tuple[Dtype, tuple[int, ...], bytes]],
        metadata: Mapping[str, str] | None = None,
    ) -> "Checkpoint":
        """Build a checkpoint, assigning canonical (lexicographic, contiguous) byte ranges."""
        out: dict[str, tuple[TensorMeta, bytes]] = {}
        cursor = 0
        for name in sorted(tensors):
            dtype, shape, raw = tensors[name]
            meta = TensorMeta(name, dtype, tuple(shape), (cursor, cursor + len(raw)))
            out[name] = (meta, raw)
            cursor += len(raw)
        return cls(out, metadata)

    @classmethod
    def from_arrays(
        cls,
        arrays: Mapping[str, np.ndarray],
        metadata: Mapping[str, str] | None = None,
        dtype: Dtype = Dtype.F32,
    ) -> "Checkpoint":
        """Build a checkpoint from float arrays, encoded to ``dtype``."""
        tensors = {}
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
            tensors[name] = (dtype, tuple(arr.shape), f32_to_dtype(flat, dtype))
        return cls.build(tensors, metadata)

    @property
    def names(self) -> list[str]:
        return list(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self):
        return iter(self._tensors.items())

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def tensor(self, name: str) -> tuple[TensorMeta, bytes]:
        return self._tensors[name]

    def meta(self, name: str) -> TensorMeta:
        return self._tensors[name][0]

    def array_f32(self, name: str) -> np.ndarray:
        """Decode one tensor to a flat, writable float32 array."""
        meta, raw = self._tensors[name]
        return tensor_as_f32(meta, raw)

    @property
    def data_nbytes(self) -> int:
        return sum(meta.nbytes for meta, _ in self._tensors.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        mine = {n: (m.dtype, m.shape, raw) for n, (m, raw) in self._tensors.items()}
        theirs = {n: (m.dtype, m.shape, raw) for n, (m, raw) in other._tensors.items()}
        return mine == theirs and self.metadata == other.metadata

    def __repr__(self) -> str:
        return f"Checkpoint({len(self)} tensors, {self.data_nbytes} data bytes)"


def tensor_as_f32(meta: TensorMeta, raw: bytes) -> np.ndarray:
    """Decode raw tensor bytes to a flat, writable float32 array.

    F16 decodes per IEEE 754 binary16; BF16 decodes by widening the stored
    16 bits into the top half of a 32-bit pattern.
    """
    if len(raw) != meta.nbytes:
        raise TensorStoreError(
            f"tensor {meta.name!r}: got {len(raw)} data bytes, expected {meta.nbytes}"
        )
    if meta.dtype is Dtype.F32:
        return np.frombuffer(raw, dtype="<f4").copy()
    if meta.dtype is Dtype.F16:
        return np.frombuffer(raw, dtype="<f2").astype(np.float32)
    bits = np.frombuffer(raw, dtype="<u2").astype(np.uint32)
    return (bits << np.uint32(16)).view(np.float32)


def f32_to_dtype_array(values: np.ndarray, dtype: Dtype) -> np.ndarray:
    """Encode float32 values to the flat element array stored for ``dtype``.

    F32 is exact; F16 and BF16 round to nearest even, saturating overflow
    to the format's infinity. The returned array's raw buffer is the
    little-endian byte encoding.
    """
    arr = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    if dtype is Dtype.F32:
        return arr
    if dtype is Dtype.F16:
        with np.errstate(over="ignore"):  # overflow saturates to infinity by contract
            return arr.astype("<f2")
    bits = arr.view(np.uint32)
    nan = (bits & np.uint32(0x7FFFFFFF)) > np.uint32(0x7F800000)
    # round to nearest even on the top 16 bits; uint64 avoids carry overflow
    wide = bits.astype(np.uint64)
    rounded = ((wide + np.uint64(0x7FFF) + ((wide >> np.uint64(16)) & np.uint64(1))) >> np.uint64(16)).astype("<u2")
    if nan.any():
        rounded[nan] = ((bits[nan] >> np.uint32(16)) | np.uint32(0x0040)).astype("<u2")
    return rounded


def f32_to_dtype(values: np.ndarray, dtype: Dtype) -> bytes:
    """Encode float32 values to raw little-endian bytes in ``dtype``."""
    return f32_to_dtype_array(values, dtype).tobytes()


def _canonical_metas(shapes: Mapping[str, tuple[Dtype, tuple[int, ...]]]) -> list[TensorMeta]:
    """Lexicographic name order with contiguous, ascending byte ranges."""
    metas = []
    cursor = 0
    for name in sorted(shapes):
        dtype, shape = shapes[name]
        nbytes = math.prod(shape) * dtype.itemsize
        metas.append(TensorMeta(name, dtype, tuple(shape), (cursor, cursor + nbytes)))
        cursor += nbytes
    return metas


def _header_bytes(metas: list[TensorMeta], metadata: Mapping[str, str]) -> bytes:
    """Serialize and pad the header; returns the 8-byte prefix plus JSON."""
    header: dict[str, object] = {}
    if metadata:
        header["__metadata__"] = dict(metadata)
    for meta in metas:
        header[meta.name] = {
            "dtype": meta.dtype.value,
            "shape": list(meta.shape),
            "data_offsets": list(meta.byte_range),
        }
    encoded = json.dumps(header, separators=(",", ":"), sort_keys=True, ensure_ascii=False).encode("utf-8")
    encoded += b" " * (-len(encoded) % 8)
    return _HEADER_PREFIX.pack(len(encoded)) + encoded


def write_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint file that :func:`read_checkpoint` parses back equal.

    Serialization is deterministic: tensors are laid out in lexicographic
    name order with contiguous byte ranges, and the header is padded to a
    multiple of 8 bytes.
    """
    metas = _canonical_metas({name: (meta.dtype, meta.shape) for name, (meta, _) in ckpt})
    with open(path, "wb") as f:
        f.write(_header_bytes(metas, ckpt.metadata))
        for meta in metas:
            f.write(ckpt.tensor(meta.name)[1])


def _reject_duplicate_keys(pairs: list[tuple[str, object]]) -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in pairs:
        if key in out:
            raise TensorStoreError(f"duplicate tensor name {key!r} in header")
        out[key] = value
    return out


def _parse_tensor_entry(name: str, entry: object, data_len: int) -> TensorMeta:
    if not isinstance(entry, dict):
        raise TensorStoreError(f"tensor {name!r}: header entry is not an object")
    try:
        dtype_tag = entry["dtype"]
        shape = entry["shape"]
        offsets = entry["data_offsets"]
    except KeyError as exc:
        raise TensorStoreError(f"tensor {name!r}: header entry missing {exc.args[0]!r}") from None
    try:
        dtype = Dtype(dtype_tag)
    except ValueError:
        raise TensorStoreError(f"tensor {name!r}: unknown dtype {dtype_tag!r}") from None
    if not isinstance(shape, list) or not all(isinstance(d, int) and not isinstance(d, bool) for d in shape):
        raise TensorStoreError(f"tensor {name!r}: shape must be a list of integers")
    if (
        not isinstance(offsets, list)
        or len(offsets) != 2
        or not all(isinstance(o, int) and not isinstance(o, bool) for o in offsets)
    ):
        raise TensorStoreError(f"tensor {name!r}: data_offsets must be a [begin, end] pair")
    begin, end = offsets
    if begin < 0 or end < begin or end > data_len:
        raise TensorStoreError(
            f"tensor {name!r}: byte range [{begin}, {end}) out of bounds for {data_len}-byte data section"
        )
    return TensorMeta(name, dtype, tuple(shape), (begin, end))


def read_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint file; tensor order follows header key order.

    Each tensor's bytes are read exactly once, directly from its byte range.
    """
    with open(path, "rb") as f:
        prefix = f.read(8)
        if len(prefix) != 8:
            raise TensorStoreError(f"{path}: truncated file (missing header length)")
        (header_len,) = _HEADER_PREFIX.unpack(prefix)
        file_len = f.seek(0, 2)
        if 8 + header_len > file_len:
            raise TensorStoreError(f"{path}: truncated file (header length {header_len} exceeds file)")
        f.seek(8)
        header_raw = f.read(header_len)
        try:
            header = json.loads(header_raw.decode("utf-8"), object_pairs_hook=_reject_duplicate_keys)
        except TensorStoreError:
            raise
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TensorStoreError(f"{path}: header is not valid UTF-8 JSON: {exc}") from None
        if not isinstance(header, dict):
            raise TensorStoreError(f"{path}: header must be a JSON object")

        data_start = 8 + header_len
        data_len = file_len - data_start
        metadata: dict[str, str] = {}
        tensors: dict[str, tuple[TensorMeta, bytes]] = {}
        for name, entry in header.items():
            if name == "__metadata__":
                if not isinstance(entry, dict) or not all(
                    isinstance(k, str) and isinstance(v, str) for k, v in entry.items()
                ):
                    raise TensorStoreError(f"{path}: __metadata__ must map strings to strings")
                metadata = dict(entry)
                continue
            meta = _parse_tensor_entry(name, entry, data_len)
            f.seek(data_start + meta.byte_range[0])
            raw = f.read(meta.nbytes)
            if len(raw) != meta.nbytes:
                raise TensorStoreError(f"{path}: truncated file (tensor {name!r} data)")
            tensors[name] = (meta, raw)
    try:
        return Checkpoint(tensors, metadata)
    except TensorStoreError as exc:
        raise TensorStoreError(f"{path}: {exc}") from None
