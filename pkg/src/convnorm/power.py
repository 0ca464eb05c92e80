"""Largest-singular-value estimation via power iteration.

Works on real and complex dense matrices. The iteration alternates

    u <- M v / ||M v||,    v <- M^H u / ||M^H u||,    sigma <- ||M^H u||

which is power iteration on M^H M with the singular-value estimate read off
as a Rayleigh-quotient norm. Convergence requires both a relative change in
sigma below ``tol`` and a residual ||M v - sigma u|| <= tol * sigma, so a
converged estimate is a genuine singular pair to within tol.

When the top singular value is (near-)degenerate the value still converges
but the returned vectors are only *some* unit pair spanning the top subspace
(they depend on the seeded initialization); gradient consumers treat u v^T as
a subgradient in that case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotConvergedError, ShapeMismatchError
from .filters import seeded_rng

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class SpectralEstimate:
    """A spectral-norm value with its singular pair and convergence info.

    ``residual`` is ||M v - sigma u||_2 for the returned (sigma, u, v).
    """

    sigma: float
    u: np.ndarray
    v: np.ndarray
    iterations: int
    converged: bool
    residual: float


@dataclass(frozen=True)
class PowerIterState:
    """Persisted singular-vector estimates for warm-started iteration."""

    u: np.ndarray
    v: np.ndarray
    sigma_last: float


def _unit_vector(rng: np.random.Generator, size: int, dtype) -> np.ndarray:
    vec = rng.standard_normal(size)
    vec /= np.linalg.norm(vec)
    return vec.astype(dtype, copy=False)


def _validate_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.size == 0:
        raise ShapeMismatchError(f"expected a nonempty 2D matrix, got shape {m.shape}")
    m = m.astype(np.complex128 if np.iscomplexobj(m) else np.float64, copy=False)
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix contains non-finite entries")
    return m


def spectral_norm(
    matrix,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> SpectralEstimate:
    """Estimate the largest singular value of a real or complex matrix.

    Returns converged=False (with the best estimate so far) when max_iter is
    exhausted; the zero matrix yields sigma=0, converged=True.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = _validate_matrix(matrix)
    rows, cols = m.shape
    rng = seeded_rng(seed)
    dtype = m.dtype
    v = _unit_vector(rng, cols, dtype)

    if not m.any():
        u = _unit_vector(rng, rows, dtype)
        return SpectralEstimate(0.0, u, v, 0, True, 0.0)

    mh = m.conj().T
    u_prev = None
    sigma_prev = sigma_prev2 = None
    for it in range(1, max_iter + 1):
        z = m @ v
        if u_prev is not None and sigma_prev2 is not None:
            residual = float(np.linalg.norm(z - sigma_prev * u_prev))
            if (
                abs(sigma_prev - sigma_prev2) <= tol * sigma_prev
                and residual <= tol * sigma_prev
            ):
                return SpectralEstimate(float(sigma_prev), u_prev, v, it - 1, True, residual)
        zn = float(np.linalg.norm(z))
        if zn == 0.0:
            # v landed in the null space of a nonzero matrix; reseed.
            v = _unit_vector(rng, cols, dtype)
            u_prev, sigma_prev, sigma_prev2 = None, None, None
            continue
        u = z / zn
        w = mh @ u
        sw = float(np.linalg.norm(w))
        v = w / sw
        u_prev, sigma_prev2, sigma_prev = u, sigma_prev, sw

    if u_prev is None:
        z = m @ v
        zn = float(np.linalg.norm(z))
        if zn == 0.0:
            return SpectralEstimate(0.0, _unit_vector(rng, rows, dtype), v, max_iter, False, 0.0)
        u_prev, sigma_prev = z / zn, zn
    residual = float(np.linalg.norm(m @ v - sigma_prev * u_prev))
    return SpectralEstimate(float(sigma_prev), u_prev, v, max_iter, False, residual)


@dataclass(frozen=True)
class BatchedEstimate:
    """Per-matrix results of a batched power iteration over a matrix stack."""

    sigmas: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    residuals: np.ndarray


def spectral_norm_batched(
    stack,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> BatchedEstimate:
    """Run the spectral_norm iteration on a (B, p, q) stack of matrices.

    Semantically equivalent to calling spectral_norm on each slice (same
    update rule, same stopping criterion); the slices advance in lockstep and
    are frozen individually as they converge. Used for the n^2 frequency
    matrices of a convolution layer, where per-slice Python loops would
    dominate the runtime.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.asarray(stack)
    if a.ndim != 3 or a.size == 0:
        raise ShapeMismatchError(f"expected a nonempty (B, p, q) stack, got {a.shape}")
    a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64, copy=False)
    flat = a.reshape(a.shape[0], -1)
    if not np.all(np.isfinite(flat.real)) or (
        np.iscomplexobj(a) and not np.all(np.isfinite(flat.imag))
    ):
        raise DomainError("stack contains non-finite entries")

    b, p, q = a.shape
    dtype = a.dtype
    rng = seeded_rng(seed)

    out_sigma = np.zeros(b)
    out_iters = np.zeros(b, dtype=np.int64)
    out_conv = np.zeros(b, dtype=bool)
    out_resid = np.zeros(b)

    zero = ~flat.any(axis=1)
    out_conv[zero] = True
    orig = np.flatnonzero(~zero)

    # Compressed working arrays: row i corresponds to matrix orig[i]. Rows are
    # dropped (arrays re-compacted) as individual matrices converge, so the
    # per-iteration matmul touches only still-active slices.
    work = a[orig].copy()
    workh = np.ascontiguousarray(work.conj().transpose(0, 2, 1))
    v = np.stack([_unit_vector(rng, q, dtype) for _ in orig]) if orig.size else np.zeros((0, q), dtype)
    u = np.zeros((len(orig), p), dtype=dtype)
    sigma = np.zeros(len(orig))
    sigma_prev = np.zeros(len(orig))
    # 0 = no estimate yet, 1 = have sigma, 2 = have sigma and its predecessor
    hist = np.zeros(len(orig), dtype=np.int8)

    for it in range(1, max_iter + 1):
        if orig.size == 0:
            break
        z = np.matmul(work, v[:, :, None])[:, :, 0]

        done = np.zeros(len(orig), dtype=bool)
        ready = hist >= 2
        if ready.any():
            resid = np.linalg.norm(z[ready] - sigma[ready, None] * u[ready], axis=1)
            ok = (np.abs(sigma[ready] - sigma_prev[ready]) <= tol * sigma[ready]) & (
                resid <= tol * sigma[ready]
            )
            done[np.flatnonzero(ready)[ok]] = True
            if done.any():
                rows = orig[done]
                out_sigma[rows] = sigma[done]
                out_iters[rows] = it - 1
                out_conv[rows] = True
                out_resid[rows] = resid[ok]
                keep = ~done
                work, workh = work[keep], workh[keep]
                v, u, z = v[keep], u[keep], z[keep]
                sigma, sigma_prev, hist = sigma[keep], sigma_prev[keep], hist[keep]
                orig = orig[keep]
                if orig.size == 0:
                    break

        zn = np.linalg.norm(z, axis=1)
        stuck = np.flatnonzero(zn == 0.0)
        if stuck.size:
            # v landed in a null space of a nonzero slice; reseed those rows.
            for i in stuck:
                v[i] = _unit_vector(rng, q, dtype)
            hist[stuck] = 0
            zn[stuck] = 1.0  # placeholder; u rows for stuck entries are unused
        u = z / zn[:, None]
        w = np.matmul(workh, u[:, :, None])[:, :, 0]
        sw = np.linalg.norm(w, axis=1)
        live = np.flatnonzero(sw > 0.0)
        v[live] = w[live] / sw[live, None]
        sigma_prev[live] = sigma[live]
        sigma[live] = sw[live]
        hist[live] = np.minimum(hist[live] + 1, 2)
        if stuck.size:
            hist[stuck] = 0

    if orig.size:
        z = np.matmul(work, v[:, :, None])[:, :, 0]
        out_resid[orig] = np.linalg.norm(z - sigma[:, None] * u, axis=1)
        out_sigma[orig] = sigma
        out_iters[orig] = max_iter
    return BatchedEstimate(out_sigma, out_iters, out_conv, out_resid)


def init_state(shape: tuple[int, int], seed: int = 0) -> PowerIterState:
    """Seeded unit vectors for a matrix of the given (rows, cols) shape."""
    rows, cols = shape
    rng = seeded_rng(seed)
    u = _unit_vector(rng, rows, np.float64)
    v = _unit_vector(rng, cols, np.float64)
    return PowerIterState(u, v, 0.0)


def warm_step(matrix, state: PowerIterState) -> tuple[float, PowerIterState]:
    """One u/v power-iteration update pair starting from the stored vectors.

    Repeated application converges to the spectral_norm fixed point when the
    top singular value is simple.
    """
    m = _validate_matrix(matrix)
    rows, cols = m.shape
    if state.u.shape != (rows,) or state.v.shape != (cols,):
        raise ShapeMismatchError(
            f"state vectors {state.u.shape}/{state.v.shape} do not match matrix {m.shape}"
        )
    z = m @ state.v
    zn = np.linalg.norm(z)
    if zn == 0.0:
        return 0.0, PowerIterState(state.u, state.v, 0.0)
    u = z / zn
    w = m.conj().T @ u
    sigma = float(np.linalg.norm(w))
    v = w / sigma
    return sigma, PowerIterState(u, v, sigma)


def grad_sigma_wrt_matrix(estimate: SpectralEstimate) -> np.ndarray:
    """Gradient of the largest singular value w.r.t. the matrix: outer(u, v).

    Requires a converged estimate with real vectors; the result has unit
    Frobenius norm. With a degenerate top singular value this is one
    subgradient (the one picked by the iteration's initialization).
    """
    if not estimate.converged:
        raise NotConvergedError(
            "gradient requested from a non-converged spectral estimate",
            partial=estimate,
        )
    if np.iscomplexobj(estimate.u) or np.iscomplexobj(estimate.v):
        raise DomainError("gradient is defined for real singular pairs only")
    return np.outer(estimate.u, estimate.v)
