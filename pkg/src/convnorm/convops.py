"""Circular convolution, its adjoint, and matrix-free power iteration.

Images are (channels, n, n) float arrays. The forward map is

    Y[c, r, s] = sum_{d, k, l} X[d, (r + k) % n, (s + l) % n] * L[c, d, k, l]

with all spatial indices wrapping mod n, so the flattened operator is exactly
the doubly-block-circulant Jacobian built by the oracle module. The adjoint
is defined by <conv(X), Y> = <X, adjoint(Y)> and realized by the mirrored
index shift. Both are direct spatial summations (the ground-truth formula,
not an FFT shortcut), vectorized over the image plane per filter tap.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeMismatchError
from .filters import Filter4D, require_larger_input, seeded_rng
from .power import DEFAULT_MAX_ITER, DEFAULT_TOL, SpectralEstimate


def _validate_image(image, channels: int, filt: Filter4D, side: str) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != channels or x.shape[1] != x.shape[2]:
        raise ShapeMismatchError(
            f"{side} image must have shape ({channels}, n, n), got {x.shape}"
        )
    require_larger_input(filt, x.shape[1])
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{side} image contains non-finite values")
    return x


def conv_forward(filt: Filter4D, image) -> np.ndarray:
    """Apply the filter with circular wrap-around; (c_in, n, n) -> (c_out, n, n)."""
    x = _validate_image(image, filt.c_in, filt, "input")
    n = x.shape[1]
    c_out, c_in, h, w = filt.dims
    y = np.zeros((c_out, n, n))
    for k in range(h):
        for l in range(w):
            shifted = np.roll(x, (-k, -l), axis=(1, 2))
            y += np.einsum("cd,drs->crs", filt.values[:, :, k, l], shifted)
    return y


def conv_adjoint(filt: Filter4D, image) -> np.ndarray:
    """Adjoint of conv_forward; (c_out, n, n) -> (c_in, n, n)."""
    y = _validate_image(image, filt.c_out, filt, "output")
    n = y.shape[1]
    c_out, c_in, h, w = filt.dims
    x = np.zeros((c_in, n, n))
    for k in range(h):
        for l in range(w):
            shifted = np.roll(y, (k, l), axis=(1, 2))
            x += np.einsum("cd,crs->drs", filt.values[:, :, k, l], shifted)
    return x


def exact_norm_matfree(
    filt: Filter4D,
    n: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> SpectralEstimate:
    """Exact spectral norm by power iteration on conv_adjoint(conv_forward(.)).

    Never materializes the Jacobian. The singular vectors are returned
    flattened (row-major over channel, row, column) so they match the
    explicit Jacobian's vec convention.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    require_larger_input(filt, n)
    c_out, c_in = filt.c_out, filt.c_in
    rng = seeded_rng(seed)

    def unit_image(channels: int) -> np.ndarray:
        img = rng.standard_normal((channels, n, n))
        return img / np.linalg.norm(img)

    v = unit_image(c_in)
    if not filt.values.any():
        return SpectralEstimate(0.0, unit_image(c_out).ravel(), v.ravel(), 0, True, 0.0)

    u_prev = None
    sigma_prev = sigma_prev2 = None
    for it in range(1, max_iter + 1):
        z = conv_forward(filt, v)
        if u_prev is not None and sigma_prev2 is not None:
            residual = float(np.linalg.norm(z - sigma_prev * u_prev))
            if (
                abs(sigma_prev - sigma_prev2) <= tol * sigma_prev
                and residual <= tol * sigma_prev
            ):
                return SpectralEstimate(
                    float(sigma_prev), u_prev.ravel(), v.ravel(), it - 1, True, residual
                )
        zn = float(np.linalg.norm(z))
        if zn == 0.0:
            v = unit_image(c_in)
            u_prev, sigma_prev, sigma_prev2 = None, None, None
            continue
        u = z / zn
        w = conv_adjoint(filt, u)
        sw = float(np.linalg.norm(w))
        v = w / sw
        u_prev, sigma_prev2, sigma_prev = u, sigma_prev, sw

    if u_prev is None:
        z = conv_forward(filt, v)
        zn = float(np.linalg.norm(z))
        if zn == 0.0:
            return SpectralEstimate(0.0, unit_image(c_out).ravel(), v.ravel(), max_iter, False, 0.0)
        u_prev, sigma_prev = z / zn, zn
    residual = float(np.linalg.norm(conv_forward(filt, v) - sigma_prev * u_prev))
    return SpectralEstimate(
        float(sigma_prev), u_prev.ravel(), v.ravel(), max_iter, False, residual
    )
