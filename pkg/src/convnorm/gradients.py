"""Analytic gradient of the bound, finite-difference checks, warm stepping.

The bound is sqrt(h*w) times the spectral norm of the winning reshape, so its
gradient w.r.t. the filter is sqrt(h*w) * outer(u, v) mapped back through the
winning reshape's index permutation. The gradient lives in filter space only;
a gradient w.r.t. the explicit Jacobian would scatter values onto entries
that the circulant structure forces to be zero or tied (see the jacobian
module's tie map), which filter-space differentiation avoids by construction.

At points where the minimum switches branches, or where the top singular
value of the winning reshape is (near-)degenerate, the bound is not
differentiable; the reported gradient is then the subgradient belonging to
the tie-break-selected branch, and ``gap_ok``/finite-difference flags mark
the condition instead of hiding it. Note that some branch norms coincide
identically (with one channel the two spatial reshapes are transposes of each
other; with a 1x1 kernel all four coincide): those ties move together and are
genuinely smooth, which the flagging logic recognizes by comparing the tied
branches' directional derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BRANCHES, BoundReport, branch_matrix, compute_bound, reshape_to_filter
from .errors import NotConvergedError, ShapeMismatchError
from .filters import Filter4D
from .power import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    PowerIterState,
    SpectralEstimate,
    init_state,
    spectral_norm,
    warm_step,
)

GAP_RTOL = 1e-6  # minimum relative gap sigma_1 - sigma_2 for a trusted gradient
TIE_RTOL = 1e-9  # branch norms this close to the minimum count as tied


@dataclass(frozen=True)
class BoundGradient:
    """d(bound)/d(filter), the branch it came from, and gap trustworthiness."""

    grad: np.ndarray
    branch: str
    gap_ok: bool


def _branch_gradient(filt: Filter4D, branch: str, est: SpectralEstimate) -> np.ndarray:
    scale = math.sqrt(filt.h * filt.w)
    return scale * reshape_to_filter(np.outer(est.u, est.v), branch, filt.dims)


def _second_sigma(matrix: np.ndarray, est: SpectralEstimate) -> float:
    """Estimate sigma_2 by deflating the converged top pair."""
    deflated = matrix - est.sigma * np.outer(est.u, est.v)
    second = spectral_norm(deflated, tol=1e-4, max_iter=2000, seed=1)
    return second.sigma


def grad_bound(
    filt: Filter4D,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> BoundGradient:
    """Gradient of compute_bound(filt).bound with respect to the filter.

    Raises NotConvergedError (carrying the report) when the winning branch's
    power iteration did not converge. gap_ok is False when a one-step
    deflation finds sigma_2 within GAP_RTOL of sigma_1, in which case the
    returned array is one subgradient rather than the unique gradient.
    """
    report = compute_bound(filt, tol=tol, max_iter=max_iter, seed=seed)
    est = report.estimates[report.argmin]
    if not est.converged:
        raise NotConvergedError(
            f"power iteration on branch {report.argmin!r} did not converge",
            partial=report,
        )
    grad = _branch_gradient(filt, report.argmin, est)
    sigma2 = _second_sigma(branch_matrix(filt, report.argmin), est)
    gap_ok = (est.sigma - sigma2) >= GAP_RTOL * est.sigma if est.sigma > 0 else True
    return BoundGradient(grad, report.argmin, gap_ok)


@dataclass(frozen=True)
class FiniteDiffReport:
    """Central-difference comparison over every filter entry.

    ``flagged`` entries sit where the bound is (potentially) nonsmooth within
    +/- eps -- branch crossings, near-ties with disagreeing derivatives, or a
    degenerate top singular value -- and are excluded from ``max_abs_err``.
    """

    max_abs_err: float
    worst_index: tuple | None
    gap_ok: bool
    flagged: tuple
    checked: int
    fd: np.ndarray
    analytic: np.ndarray


def _tied_branches(report: BoundReport) -> list[str]:
    smallest = min(report.norms.values())
    return [
        name
        for name in BRANCHES
        if report.norms[name] - smallest <= TIE_RTOL * max(smallest, 1.0)
    ]


def finite_diff_check(
    filt: Filter4D,
    eps: float = 1e-6,
    tol: float = 1e-5,
    power_tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> FiniteDiffReport:
    """Compare grad_bound against central differences of compute_bound."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = compute_bound(filt, tol=power_tol, max_iter=max_iter, seed=seed)
    analytic = grad_bound(filt, tol=power_tol, max_iter=max_iter, seed=seed)

    tied = _tied_branches(base)
    tied_grads = {}
    for name in tied:
        est = base.estimates[name]
        if est.converged:
            tied_grads[name] = _branch_gradient(filt, name, est)

    fd = np.zeros(filt.dims)
    flagged: list[tuple] = []
    max_err = 0.0
    worst = None
    checked = 0
    strict_argmin = base.argmin if len(tied) == 1 else None

    for idx in np.ndindex(filt.dims):
        bumped = np.array(filt.values)
        bumped[idx] += eps
        plus = compute_bound(Filter4D(bumped), tol=power_tol, max_iter=max_iter, seed=seed)
        bumped[idx] -= 2 * eps
        minus = compute_bound(Filter4D(bumped), tol=power_tol, max_iter=max_iter, seed=seed)
        fd[idx] = (plus.bound - minus.bound) / (2 * eps)

        bad = (
            not analytic.gap_ok
            or not plus.estimates[plus.argmin].converged
            or not minus.estimates[minus.argmin].converged
        )
        if strict_argmin is not None:
            # unique winner at the base point: any switch within +/- eps is a
            # crossing of the min
            bad = bad or plus.argmin != strict_argmin or minus.argmin != strict_argmin
        else:
            # tied at the base point: nonsmooth if an outside branch takes
            # over within +/- eps, or the tied branches pull in different
            # directions
            bad = bad or plus.argmin not in tied or minus.argmin not in tied
            derivs = [g[idx] for g in tied_grads.values()]
            bad = bad or len(derivs) < len(tied) or (max(derivs) - min(derivs)) > tol
        if bad:
            flagged.append(idx)
            continue
        checked += 1
        err = abs(fd[idx] - analytic.grad[idx])
        if err > max_err:
            max_err, worst = err, idx

    return FiniteDiffReport(
        max_abs_err=max_err,
        worst_index=worst,
        gap_ok=analytic.gap_ok,
        flagged=tuple(flagged),
        checked=checked,
        fd=fd,
        analytic=analytic.grad,
    )


def init_warm_states(filt: Filter4D, seed: int = 0) -> dict[str, PowerIterState]:
    """Seeded per-branch power-iteration states matching the reshape shapes."""
    return {
        name: init_state(branch_matrix(filt, name).shape, seed=seed)
        for name in BRANCHES
    }


def warm_grad_step(
    filt: Filter4D, states: dict[str, PowerIterState]
) -> tuple[BoundReport, BoundGradient, dict[str, PowerIterState]]:
    """One warm power-iteration step per branch; report and gradient from it.

    Deterministic given (filt, states); repeated application converges to the
    grad_bound fixed point when the winning branch's top singular value is
    simple. The single-step estimates are not convergence-certified, so the
    per-branch estimates carry converged=False and the gradient skips the
    deflation-based gap check (gap_ok=True).
    """
    missing = [name for name in BRANCHES if name not in states]
    if missing:
        raise ShapeMismatchError(f"missing warm states for branches: {missing}")
    norms: dict[str, float] = {}
    estimates: dict[str, SpectralEstimate] = {}
    new_states: dict[str, PowerIterState] = {}
    for name in BRANCHES:
        matrix = branch_matrix(filt, name)
        sigma, state = warm_step(matrix, states[name])
        residual = float(np.linalg.norm(matrix @ state.v - sigma * state.u))
        norms[name] = sigma
        estimates[name] = SpectralEstimate(sigma, state.u, state.v, 1, False, residual)
        new_states[name] = state

    scale = math.sqrt(filt.h * filt.w)
    smallest = min(norms.values())
    argmin = next(name for name in BRANCHES if norms[name] == smallest)
    report = BoundReport(norms, scale, scale * smallest, argmin, estimates)
    grad = _branch_gradient(filt, argmin, estimates[argmin])
    return report, BoundGradient(grad, argmin, True), new_states
