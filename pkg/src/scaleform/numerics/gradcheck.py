"""Central finite-difference verification of backward rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from scaleform.numerics.tensor import Tensor, backward, no_grad

TOLERANCE = 1e-5


def hybrid_rel_err(analytic, numeric) -> float:
    """max|a - n| / max(1, max|a|, max|n|)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(n).max()))
    return float(np.abs(a - n).max()) / scale


@dataclass
class GradcheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.errors.items() if not v <= self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.failures

    def merge(self, other: "GradcheckReport", prefix: str = "") -> None:
        for k, v in other.errors.items():
            self.errors[prefix + k] = max(v, self.errors.get(prefix + k, 0.0))


def check(
    loss_fn: Callable[[], Tensor],
    tensors: Iterable[tuple[str, Tensor]],
    h: float = 1e-6,
    max_entries: int | None = 12,
    rng: np.random.Generator | None = None,
    tolerance: float = TOLERANCE,
) -> GradcheckReport:
    """Compare autodiff gradients of ``loss_fn()`` against central differences.

    ``max_entries`` caps how many coordinates per tensor are perturbed
    (chosen at random); ``None`` checks every coordinate.
    """
    tensors = list(tensors)
    rng = rng or np.random.default_rng(0)
    for _, t in tensors:
        t.grad = None
    loss = loss_fn()
    backward(loss)
    report = GradcheckReport(tolerance=tolerance)
    for name, t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        flat = t.data.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(len(idx))
        with no_grad():
            for k, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                numeric[k] = (up - down) / (2.0 * h)
        report.errors[name] = hybrid_rel_err(analytic.reshape(-1)[idx], numeric)
    for _, t in tensors:
        t.grad = None
    return report
