"""
Central finite-difference gradient checking.

    result = check_gradients(lambda: loss_fn(params), params, max_checks=50)
    assert result.max_rel_error < 1e-4

The relative error of one coordinate is |a - n| / scale where scale is
max(|a|, |n|), replaced by 1 when it falls below 1e-3 so that near-zero
gradients are compared absolutely.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from autograd.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
SCALE_FLOOR = 1e-3


@dataclass
class GradCheckResult:
    """Outcome of one finite-difference comparison."""

    name: str
    max_rel_error: float = 0.0
    n_checked: int = 0
    worst: Optional[Tuple[str, int, float, float]] = None  # (param, flat index, analytic, numeric)
    errors: List[float] = field(default_factory=list)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < SCALE_FLOOR:
        scale = 1.0
    return abs(analytic - numeric) / scale


def numerical_derivative(fn: Callable[[], Tensor], param: Tensor, index: int, step: float = DEFAULT_STEP) -> float:
    flat = param.data.reshape(-1)
    original = flat[index]
    with no_grad():
        flat[index] = original + step
        plus = fn().item()
        flat[index] = original - step
        minus = fn().item()
    flat[index] = original
    return (plus - minus) / (2.0 * step)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = DEFAULT_STEP,
    max_checks: Optional[int] = None,
    seed: int = 0,
    name: str = "",
) -> GradCheckResult:
    """Compare backward() against central differences on (a sample of) parameter coordinates."""
    result = GradCheckResult(name=name)
    params = [p for p in params if p.size > 0]
    if not params:
        return result

    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [p.grad.reshape(-1).copy() if p.grad is not None else np.zeros(p.size) for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if max_checks is not None and max_checks < len(coords):
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=max_checks, replace=False)
        coords = [coords[k] for k in sorted(picked)]

    for i, j in coords:
        numeric = numerical_derivative(fn, params[i], j, step)
        err = relative_error(float(analytic[i][j]), numeric)
        result.errors.append(err)
        if err >= result.max_rel_error:
            result.max_rel_error = err
            result.worst = (params[i].name or f"param{i}", j, float(analytic[i][j]), numeric)
    result.n_checked = len(coords)
    logger.debug(f"gradcheck {name}: {result.n_checked} coords, max rel err {result.max_rel_error:.3e}")
    return result
