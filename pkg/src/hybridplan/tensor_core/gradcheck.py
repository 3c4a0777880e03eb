from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    theta: Tensor,
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` must rebuild its graph from ``theta`` on every call. When
    ``max_coords`` is set, a seeded random subset of coordinates is checked.
    """
    theta.data = np.ascontiguousarray(theta.data)
    theta.requires_grad = True
    theta.grad = None
    with Tape() as tape:
        out = f(theta)
        backward(out, tape)
    analytic = np.zeros(theta.shape) if theta.grad is None else theta.grad.copy()

    flat = theta.data.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        rng = rng or np.random.default_rng(0)
        coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

    worst = 0.0
    a_flat = analytic.reshape(-1)
    with no_grad():
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(theta).item()
            flat[i] = orig - eps
            fm = f(theta).item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * eps)
            err = abs(a_flat[i] - num) / max(1.0, abs(a_flat[i]))
            worst = max(worst, err)
    theta.grad = None
    return worst
