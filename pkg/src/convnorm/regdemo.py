"""Desk-scale demonstration of the bound as a training regularizer.

A single circular-convolution layer is fit to targets produced by a fixed
random teacher filter (plus small noise) by plain gradient descent on

    (1/2m) sum_i ||conv(L, X_i) - Y_i||^2  +  beta * bound(L)

The data term's gradient is the exact analytic correlation; the regularizer
term reuses the warm one-step power iteration from the gradients module, so
each training step costs four warm matrix-vector updates on top of the data
pass. The trace records loss and the warm bound estimate every step and the
exact frequency-domain norm periodically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, DomainError
from .filters import Filter4D, require_larger_input, seeded_rng
from .frequency import exact_norm_fft
from .gradients import init_warm_states, warm_grad_step


@dataclass(frozen=True)
class RegDemoConfig:
    beta: float
    steps: int
    lr: float
    seed: int
    dims: tuple[int, int, int, int]
    n: int
    num_samples: int
    noise: float = 0.01
    exact_every: int = 25

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if self.beta < 0 or self.lr <= 0 or self.steps < 1 or self.num_samples < 1:
            raise DomainError("beta >= 0, lr > 0, steps >= 1, num_samples >= 1 required")
        if len(dims) != 4 or min(dims) < 1:
            raise DomainError(f"dims must be four positive ints, got {dims}")
        if self.n <= max(dims[2], dims[3]):
            raise DomainError(f"n={self.n} must exceed max(h, w)={max(dims[2], dims[3])}")
        if self.exact_every < 1:
            raise DomainError("exact_every must be >= 1")

    @classmethod
    def from_mapping(cls, doc: dict) -> "RegDemoConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise DomainError(f"unknown regdemo config keys: {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise DomainError(f"incomplete regdemo config: {exc}") from exc


@dataclass(frozen=True)
class RegDemoTrace:
    """Per-step history; ``exact`` is NaN on steps where it was not sampled."""

    step: np.ndarray
    loss: np.ndarray
    bound: np.ndarray
    exact: np.ndarray
    final_filter: Optional[Filter4D] = None

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,loss,bound,exact\n")
            for s, lo, bo, ex in zip(self.step, self.loss, self.bound, self.exact):
                cell = "" if np.isnan(ex) else repr(float(ex))
                fh.write(f"{int(s)},{float(lo)!r},{float(bo)!r},{cell}\n")


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss: float
    bound: float
    exact: float
    reg_grad: np.ndarray
    data_grad: np.ndarray


def _batch_forward(filt: Filter4D, batch: np.ndarray) -> np.ndarray:
    """conv_forward applied across a (m, c_in, n, n) batch in one pass."""
    c_out, c_in, h, w = filt.dims
    m, _, n, _ = batch.shape
    out = np.zeros((m, c_out, n, n))
    for k in range(h):
        for l in range(w):
            shifted = np.roll(batch, (-k, -l), axis=(2, 3))
            out += np.einsum("cd,idrs->icrs", filt.values[:, :, k, l], shifted)
    return out


def _data_gradient(dims, batch: np.ndarray, errors: np.ndarray) -> np.ndarray:
    """Gradient of (1/2m) sum ||conv(L, X_i) - Y_i||^2 w.r.t. the filter."""
    c_out, c_in, h, w = dims
    m = batch.shape[0]
    grad = np.zeros(dims)
    for k in range(h):
        for l in range(w):
            shifted = np.roll(batch, (-k, -l), axis=(2, 3))
            grad[:, :, k, l] = np.einsum("icrs,idrs->cd", errors, shifted) / m
    return grad


def run_regdemo(
    cfg: RegDemoConfig,
    on_step: Optional[Callable[[StepRecord], None]] = None,
) -> RegDemoTrace:
    """Run the teacher-student fit; deterministic for a fixed config.

    Records steps 0..cfg.steps inclusive (the last row is the final
    parameters, with the exact norm always sampled there). Raises
    DivergenceError carrying the partial trace if the loss leaves the finite
    range.
    """
    rng = seeded_rng(cfg.seed)
    c_out, c_in, h, w = cfg.dims
    teacher = Filter4D(rng.standard_normal(cfg.dims))
    batch = rng.standard_normal((cfg.num_samples, c_in, cfg.n, cfg.n))
    targets = _batch_forward(teacher, batch)
    targets += cfg.noise * rng.standard_normal(targets.shape)

    student = Filter4D(rng.standard_normal(cfg.dims))
    require_larger_input(student, cfg.n)
    states = init_warm_states(student, seed=cfg.seed)

    steps_out, losses, bounds, exacts = [], [], [], []
    for step in range(cfg.steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            errors = _batch_forward(student, batch) - targets
            loss = float(np.sum(errors**2)) / (2 * cfg.num_samples)
        if not np.isfinite(loss):
            trace = RegDemoTrace(
                np.array(steps_out), np.array(losses), np.array(bounds),
                np.array(exacts), student,
            )
            raise DivergenceError(f"loss became non-finite at step {step}", trace=trace)

        report, bgrad, states = warm_grad_step(student, states)
        sample_exact = step % cfg.exact_every == 0 or step == cfg.steps
        exact = exact_norm_fft(student, cfg.n) if sample_exact else float("nan")

        steps_out.append(step)
        losses.append(loss)
        bounds.append(report.bound)
        exacts.append(exact)

        data_grad = _data_gradient(cfg.dims, batch, errors)
        if on_step is not None:
            on_step(StepRecord(step, loss, report.bound, exact, bgrad.grad, data_grad))
        if step == cfg.steps:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            new_values = student.values - cfg.lr * (data_grad + cfg.beta * bgrad.grad)
        if not np.all(np.isfinite(new_values)):
            trace = RegDemoTrace(
                np.array(steps_out), np.array(losses), np.array(bounds),
                np.array(exacts), student,
            )
            raise DivergenceError(f"parameters became non-finite at step {step}", trace=trace)
        student = Filter4D(new_values)

    return RegDemoTrace(
        np.array(steps_out), np.array(losses), np.array(bounds), np.array(exacts),
        student,
    )
