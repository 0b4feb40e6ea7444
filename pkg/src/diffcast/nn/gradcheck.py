"""Central finite-difference verification of hand-written backward passes."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_diff_check(loss_and_grads: Callable[[], tuple[float, dict[str, np.ndarray]]],
                      params: dict[str, np.ndarray],
                      probe_count: int = 10,
                      *,
                      step: float = 1e-5,
                      rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads`` recomputes the scalar loss and a gradient dict at the
    current parameter values; it must be deterministic (reseed any internal
    randomness on every call). ``params`` holds the live arrays that the
    closure reads — they are perturbed in place and restored. Probes are
    random coordinates drawn across all groups.

    Relative error per probe: |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    """
    rng = rng or np.random.default_rng(0)
    _, grads = loss_and_grads()
    grads = {k: v.copy() for k, v in grads.items()}
    names = sorted(params)
    sizes = np.array([params[n].size for n in names])
    total = int(sizes.sum())
    worst = 0.0
    for _ in range(probe_count):
        flat_idx = int(rng.integers(total))
        group = int(np.searchsorted(np.cumsum(sizes), flat_idx, side="right"))
        name = names[group]
        offset = flat_idx - int(np.concatenate([[0], np.cumsum(sizes)])[group])
        arr = params[name].reshape(-1)
        original = arr[offset]
        arr[offset] = original + step
        loss_plus, _ = loss_and_grads()
        arr[offset] = original - step
        loss_minus, _ = loss_and_grads()
        arr[offset] = original
        cd = (loss_plus - loss_minus) / (2.0 * step)
        analytic = grads[name].reshape(-1)[offset]
        err = abs(analytic - cd) / max(abs(analytic), abs(cd), 1e-8)
        worst = max(worst, err)
    return worst
