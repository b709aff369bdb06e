"""Finite-difference verification of the hand-rolled gradients."""

import numpy as np

from .gru import GRUStack
from .rbm import MultinomialRBM


def gradient_check(model, batch, eps: float = 1e-5, max_coords_per_array: int = 0, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses the exact-likelihood gradient for RBMs and the BPTT gradient for
    GRU stacks. All coordinates are checked unless max_coords_per_array
    caps the per-array count (coordinates then subsampled, seeded).
    Relative error is |fd - g| / max(1e-8, |fd| + |g|).
    """
    if isinstance(model, GRUStack):
        objective = lambda: model.nll_and_grad(batch)
    elif isinstance(model, MultinomialRBM):
        objective = lambda: model.exact_nll_and_grad(batch)
    else:
        raise TypeError(f"no gradient check for {type(model).__name__}")

    rng = np.random.default_rng(seed)
    _, grads = objective()
    worst = 0.0
    for p, g in zip(model.parameters, grads):
        fp, fg = p.reshape(-1), g.reshape(-1)
        coords = np.arange(fp.size)
        if max_coords_per_array and fp.size > max_coords_per_array:
            coords = rng.choice(fp.size, size=max_coords_per_array, replace=False)
        for i in coords:
            old = fp[i]
            fp[i] = old + eps
            up = objective()[0]
            fp[i] = old - eps
            down = objective()[0]
            fp[i] = old
            fd = (up - down) / (2.0 * eps)
            worst = max(worst, abs(fd - fg[i]) / max(1e-8, abs(fd) + abs(fg[i])))
    return worst
