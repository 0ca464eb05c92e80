"""Filter tensors, their file formats, and seeded random generation.

A convolution filter is a 4D real tensor of shape (c_out, c_in, h, w) stored
row-major in float64, so element (c, d, k, l) lives at flat index
``((c*c_in + d)*h + k)*w + l``. Two on-disk formats are supported:

* CFT1 binary: 4-byte magic ``CFT1``, four little-endian uint32 dims
  (c_out, c_in, h, w), then c_out*c_in*h*w little-endian IEEE-754 float64
  values in row-major order.
* JSON: ``{"dims": [c_out, c_in, h, w], "values": [...]}`` with values in
  row-major order.

Both formats round-trip bit-exactly.

Seeded generation uses numpy's Philox counter-based generator (Random123
family) so that a (seed, dims) pair always produces the same tensor; the
reference fixtures under ``tests/fixtures`` pin the stream.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FilterFormatError, FilterIntegrityError, GeometryError

CFT1_MAGIC = b"CFT1"
_HEADER = struct.Struct("<4I")


def seeded_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator; the single RNG used everywhere in the package."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class Filter4D:
    """Immutable convolution filter of shape (c_out, c_in, h, w), float64."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True, order="C")
        if arr.ndim != 4:
            raise DomainError(f"filter must be 4D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DomainError(f"all filter dims must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("filter contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def c_out(self) -> int:
        return self.values.shape[0]

    @property
    def c_in(self) -> int:
        return self.values.shape[1]

    @property
    def h(self) -> int:
        return self.values.shape[2]

    @property
    def w(self) -> int:
        return self.values.shape[3]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Filter4D):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(
            self.values, other.values
        )

    def __repr__(self) -> str:
        return f"Filter4D(dims={self.dims})"


def require_larger_input(filt: Filter4D, n: int) -> None:
    """Enforce the circulant-geometry precondition n > max(h, w)."""
    if n <= max(filt.h, filt.w):
        raise GeometryError(
            f"input size n={n} must exceed max(h, w)={max(filt.h, filt.w)}"
        )


def random_filter(dims, seed: int, distribution: str = "standard-normal") -> Filter4D:
    """Seeded random filter; deterministic for a fixed (dims, seed) pair."""
    if distribution != "standard-normal":
        raise ValueError(f"unsupported distribution: {distribution!r}")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or min(dims) < 1:
        raise DomainError(f"dims must be four positive ints, got {dims}")
    rng = seeded_rng(seed)
    return Filter4D(rng.standard_normal(dims))


def _detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == CFT1_MAGIC else "json"


def load_filter(path, fmt: str = "auto") -> Filter4D:
    """Load a filter from a CFT1 binary or JSON file.

    Raises FilterFormatError for unparseable containers, FilterIntegrityError
    when declared dims disagree with the stored values, and DomainError for
    non-finite values.
    """
    if fmt == "auto":
        fmt = _detect_format(path)
    if fmt == "binary":
        return _load_binary(path)
    if fmt == "json":
        return _load_json(path)
    raise ValueError(f"unknown format: {fmt!r}")


def _load_binary(path) -> Filter4D:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CFT1_MAGIC:
        raise FilterFormatError(f"{path}: bad magic {blob[:4]!r}, expected {CFT1_MAGIC!r}")
    if len(blob) < 4 + _HEADER.size:
        raise FilterFormatError(f"{path}: truncated header")
    dims = _HEADER.unpack_from(blob, 4)
    if min(dims) < 1:
        raise FilterIntegrityError(f"{path}: non-positive dims {dims}")
    count = int(np.prod([int(d) for d in dims], dtype=np.int64))
    payload = blob[4 + _HEADER.size :]
    if len(payload) != 8 * count:
        raise FilterIntegrityError(
            f"{path}: header declares {count} values ({8 * count} bytes), "
            f"found {len(payload)} bytes"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(dims)
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{path}: non-finite values")
    return Filter4D(values)


def _load_json(path) -> Filter4D:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FilterFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "dims" not in doc or "values" not in doc:
        raise FilterFormatError(f"{path}: expected object with 'dims' and 'values'")
    dims = doc["dims"]
    if (
        not isinstance(dims, list)
        or len(dims) != 4
        or not all(isinstance(d, int) and d >= 1 for d in dims)
    ):
        raise FilterFormatError(f"{path}: 'dims' must be four positive integers")
    values = doc["values"]
    if not isinstance(values, list):
        raise FilterFormatError(f"{path}: 'values' must be a list")
    count = int(np.prod(dims, dtype=np.int64))
    if len(values) != count:
        raise FilterIntegrityError(
            f"{path}: dims {dims} require {count} values, found {len(values)}"
        )
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{path}: non-finite values")
    return Filter4D(arr.reshape(dims))


def save_filter(filt: Filter4D, path, fmt: str = "auto") -> None:
    """Write a filter; load_filter(save_filter(f)) round-trips bit-exactly."""
    if fmt == "auto":
        fmt = "json" if str(path).endswith(".json") else "binary"
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(CFT1_MAGIC)
            fh.write(_HEADER.pack(*filt.dims))
            fh.write(np.ascontiguousarray(filt.values, dtype="<f8").tobytes())
    elif fmt == "json":
        doc = {"dims": list(filt.dims), "values": filt.values.ravel().tolist()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format: {fmt!r}")
