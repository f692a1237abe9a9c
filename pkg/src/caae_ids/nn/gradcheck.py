"""Central finite-difference gradient verification."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .layers import Param


@dataclass
class GradCheckFailure:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    checked: int = 0
    tolerance: float = 0.0
    failures: list[GradCheckFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self):
        status = "ok" if self.passed else f"{len(self.failures)} failures"
        return f"grad check: {self.checked} entries, max rel error {self.max_rel_error:.3e} ({status})"


def relative_error(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(
    loss_fn: Callable[[], float],
    params: Sequence[Param],
    analytic: Sequence[np.ndarray] | None = None,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central differences of ``loss_fn``.

    Args:
        loss_fn: recomputes the scalar loss from the current parameter values.
            Must be deterministic (dropout off, fixed seeds).
        params: parameters to perturb in place; restored afterwards.
        analytic: gradients to check, one per param. Defaults to ``p.grad``.
        h: finite-difference step.
        tolerance: maximum accepted relative error per entry.
        max_entries: check at most this many randomly chosen entries per param.
        floor: lower bound of the relative-error denominator, so entries whose
            true gradient is ~0 are compared in absolute terms.

    Every entry whose relative error exceeds ``tolerance`` is reported in
    ``failures``; with ``tolerance=0`` that is every entry with any error.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    grads = [p.grad.copy() for p in params] if analytic is None else [np.asarray(a) for a in analytic]
    report = GradCheckReport(tolerance=tolerance)
    for p, g in zip(params, grads):
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            a = float(g.reshape(-1)[i])
            err = relative_error(a, numeric, floor)
            report.checked += 1
            report.max_rel_error = max(report.max_rel_error, err)
            if err > tolerance:
                report.failures.append(
                    GradCheckFailure(p.name, np.unravel_index(i, p.shape), a, numeric, err)
                )
    return report
