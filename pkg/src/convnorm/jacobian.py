"""Explicit doubly-block-circulant Jacobian for brute-force verification.

Conventions (fixed once, everything else derived from them):

* ``circ_vector(v)`` has first row equal to v and entry (j, k) equal to
  v[(k - j) % n], i.e. each row is the previous one shifted right.
* ``circ_matrix(A)`` is the n^2 x n^2 doubly-block-circulant matrix whose
  n x n block (j, k) is circ_vector(A[(k - j) % n]), so entry
  (j*n + r, k*n + s) equals A[(k - j) % n, (s - r) % n].
* ``build_jacobian`` places circ_matrix of the padded channel slice (c, d)
  at block row c, block column d, which makes
  vec(conv_forward(L, X)) == J @ vec(X) hold exactly.

Entries of J tied by this structure are bit-identical copies of one filter
tap; ``tie_groups`` exposes the tying so tests can demonstrate that an outer
product of singular vectors (the naive matrix-space gradient) breaks it.

Explicit construction is refused above a configurable total-entry cap; large
instances belong to the matrix-free or frequency-domain paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, SizeCapError
from .filters import Filter4D
from .frequency import pad_filter
from .power import DEFAULT_MAX_ITER, DEFAULT_TOL, SpectralEstimate, spectral_norm

DEFAULT_SIZE_CAP = 2**24  # max total entries of the dense Jacobian


def circ_vector(v) -> np.ndarray:
    """n x n circulant whose row j is v shifted right j places (row 0 = v)."""
    vec = np.asarray(v, dtype=np.float64).ravel()
    n = vec.size
    if n < 1:
        raise ShapeMismatchError("circ_vector needs a nonempty vector")
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return vec[idx]


def circ_matrix(a) -> np.ndarray:
    """Doubly-block-circulant n^2 x n^2 matrix of a square n x n matrix."""
    mat = np.asarray(a, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeMismatchError(f"circ_matrix needs a square matrix, got {mat.shape}")
    n = mat.shape[0]
    out = np.empty((n * n, n * n))
    rows = [circ_vector(mat[r]) for r in range(n)]
    for j in range(n):
        for k in range(n):
            out[j * n : (j + 1) * n, k * n : (k + 1) * n] = rows[(k - j) % n]
    return out


@dataclass(frozen=True)
class JacobianMatrix:
    """Dense Jacobian (n^2*c_out, n^2*c_in) plus the geometry that built it."""

    matrix: np.ndarray
    c_out: int
    c_in: int
    n: int


def build_jacobian(
    filt: Filter4D, n: int, size_cap: int = DEFAULT_SIZE_CAP
) -> JacobianMatrix:
    """Materialize the layer's Jacobian; refuses when rows*cols > size_cap."""
    c_out, c_in = filt.c_out, filt.c_in
    rows, cols = n * n * c_out, n * n * c_in
    if rows * cols > size_cap:
        raise SizeCapError(
            f"dense Jacobian would hold {rows}x{cols} = {rows * cols} entries "
            f"(cap {size_cap}); use the matrix-free or frequency method"
        )
    padded = pad_filter(filt, n)
    jac = np.empty((rows, cols))
    nn = n * n
    for c in range(c_out):
        for d in range(c_in):
            jac[c * nn : (c + 1) * nn, d * nn : (d + 1) * nn] = circ_matrix(
                padded.values[c, d]
            )
    return JacobianMatrix(jac, c_out, c_in, n)


def tie_groups(c_out: int, c_in: int, n: int) -> np.ndarray:
    """Group ids over the Jacobian's entries; equal id means structurally tied.

    Entry (c*n^2 + j*n + r, d*n^2 + k*n + s) is a copy of padded-filter tap
    (c, d, (k - j) % n, (s - r) % n); its group id is that tap's flat index.
    """
    nn = n * n
    j, r = np.divmod(np.arange(nn), n)
    k, s = np.divmod(np.arange(nn), n)
    drow = (k[None, :] - j[:, None]) % n
    dcol = (s[None, :] - r[:, None]) % n
    spatial = drow * n + dcol  # (nn, nn) tap index within one channel block
    chan = (np.arange(c_out)[:, None] * c_in + np.arange(c_in)[None, :]) * nn
    out = np.empty((nn * c_out, nn * c_in), dtype=np.int64)
    for c in range(c_out):
        for d in range(c_in):
            out[c * nn : (c + 1) * nn, d * nn : (d + 1) * nn] = chan[c, d] + spatial
    return out


def oracle_sigma_max(
    jac: JacobianMatrix,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> SpectralEstimate:
    """Spectral norm of the explicit Jacobian (delegates to power iteration)."""
    return spectral_norm(jac.matrix, tol=tol, max_iter=max_iter, seed=seed)


def save_matrix_csv(matrix, path) -> None:
    """Dump a dense matrix row-major to CSV with full float precision."""
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")
