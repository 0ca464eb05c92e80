"""The four filter reshapes and the sqrt(hw)-scaled minimum-norm bound.

A filter L of shape (c_out, c_in, h, w) admits four natural reshapes into a
dense matrix, each built from the c_out x c_in channel blocks L[:, :, k, l]:

* ``hw``       (c_out*h, c_in*w): block (k, l) is L[:, :, k, l] -- filter rows
  index block rows, filter columns index block columns.
* ``wh``       (c_out*w, c_in*h): block (l, k) is L[:, :, k, l] -- the spatial
  transpose of the ``hw`` grid.
* ``flat_in``  (c_out, c_in*h*w): channel blocks concatenated horizontally in
  row-major (k, l) order; this is the reshape behind the common
  one-step-power-iteration heuristic.
* ``flat_out`` (c_out*h*w, c_in): channel blocks stacked vertically in
  row-major (k, l) order.

sqrt(h*w) times the spectral norm of any one of them upper-bounds the
spectral norm of the layer's circular-convolution Jacobian for every input
size n, so the scaled minimum over all four is the bound reported here. The
bound is exact when h == w == 1. Ties in the argmin are broken in the fixed
order hw < wh < flat_in < flat_out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .filters import Filter4D
from .power import DEFAULT_MAX_ITER, DEFAULT_TOL, SpectralEstimate, spectral_norm

BRANCHES = ("hw", "wh", "flat_in", "flat_out")


def reshape_hw(filt: Filter4D) -> np.ndarray:
    """(c_out*h, c_in*w) matrix with block (k, l) = L[:, :, k, l]."""
    c_out, c_in, h, w = filt.dims
    return filt.values.transpose(2, 0, 3, 1).reshape(h * c_out, w * c_in)


def reshape_wh(filt: Filter4D) -> np.ndarray:
    """(c_out*w, c_in*h) matrix with block (l, k) = L[:, :, k, l]."""
    c_out, c_in, h, w = filt.dims
    return filt.values.transpose(3, 0, 2, 1).reshape(w * c_out, h * c_in)


def reshape_flat_in(filt: Filter4D) -> np.ndarray:
    """(c_out, c_in*h*w) matrix: blocks L[:, :, k, l] concatenated left-to-right."""
    c_out, c_in, h, w = filt.dims
    return filt.values.transpose(0, 2, 3, 1).reshape(c_out, h * w * c_in)


def reshape_flat_out(filt: Filter4D) -> np.ndarray:
    """(c_out*h*w, c_in) matrix: blocks L[:, :, k, l] stacked top-to-bottom."""
    c_out, c_in, h, w = filt.dims
    return filt.values.transpose(2, 3, 0, 1).reshape(h * w * c_out, c_in)


_BUILDERS = {
    "hw": reshape_hw,
    "wh": reshape_wh,
    "flat_in": reshape_flat_in,
    "flat_out": reshape_flat_out,
}


def branch_matrix(filt: Filter4D, branch: str) -> np.ndarray:
    return _BUILDERS[branch](filt)


def reshape_to_filter(matrix: np.ndarray, branch: str, dims) -> np.ndarray:
    """Invert branch_matrix's index permutation back to (c_out, c_in, h, w).

    reshape_to_filter(branch_matrix(f, b), b, f.dims) recovers f.values for
    every branch; used to map matrix-space gradients onto filter entries.
    """
    c_out, c_in, h, w = dims
    m = np.asarray(matrix)
    if branch == "hw":
        return m.reshape(h, c_out, w, c_in).transpose(1, 3, 0, 2)
    if branch == "wh":
        return m.reshape(w, c_out, h, c_in).transpose(1, 3, 2, 0)
    if branch == "flat_in":
        return m.reshape(c_out, h, w, c_in).transpose(0, 3, 1, 2)
    if branch == "flat_out":
        return m.reshape(h, w, c_out, c_in).transpose(2, 3, 0, 1)
    raise ValueError(f"unknown branch: {branch!r}")


@dataclass(frozen=True)
class BoundReport:
    """The four unscaled norms, the scaled minimum, and which branch won."""

    norms: Mapping[str, float]
    scale: float
    bound: float
    argmin: str
    estimates: Mapping[str, SpectralEstimate]

    @property
    def scaled_norms(self) -> dict[str, float]:
        return {name: self.scale * value for name, value in self.norms.items()}


def compute_bound(
    filt: Filter4D,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> BoundReport:
    """Spectral-norm upper bound sqrt(h*w) * min over the four reshapes.

    Independent of the input size n by construction. Ties broken in BRANCHES
    order.
    """
    estimates = {
        name: spectral_norm(_BUILDERS[name](filt), tol=tol, max_iter=max_iter, seed=seed)
        for name in BRANCHES
    }
    norms = {name: est.sigma for name, est in estimates.items()}
    scale = math.sqrt(filt.h * filt.w)
    smallest = min(norms.values())
    argmin = next(name for name in BRANCHES if norms[name] == smallest)
    return BoundReport(norms, scale, scale * smallest, argmin, estimates)
