"""Random-walk Metropolis for scalar parameters on an unconstrained scale.

Used only when a prior/likelihood pair has no closed-form posterior.
Independent chains (one per dataset) run side by side: ``log_target``
takes an array holding the current point of every chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

BURN_IN = 1000
MIN_ITERATIONS = 5000
ADAPT_EVERY = 50
ACCEPT_LOW, ACCEPT_HIGH = 0.2, 0.4


@dataclass
class Chain:
    draws: np.ndarray  # n_draws, or n_draws x C for several chains
    acceptance: float | np.ndarray
    step: float | np.ndarray


def random_walk_metropolis(
    log_target: Callable[[np.ndarray], np.ndarray],
    z0,
    n_draws: int,
    rng: np.random.Generator,
    step=1.0,
    burn_in: int = BURN_IN,
) -> Chain:
    """Gaussian random walk, one chain per entry of ``z0``.

    During burn-in each chain's step is rescaled every ``ADAPT_EVERY``
    iterations until its acceptance rate sits inside [0.2, 0.4]; steps are
    frozen after.  At least ``MIN_ITERATIONS`` post-burn-in iterations are
    run and ``n_draws`` of them are returned, evenly thinned.  A scalar
    ``z0`` gives a single chain with 1-D draws.
    """
    scalar = np.ndim(z0) == 0
    z = np.atleast_1d(np.asarray(z0, dtype=float)).copy()
    c = len(z)
    step = np.broadcast_to(np.asarray(step, dtype=float), (c,)).copy()
    lp = np.atleast_1d(np.asarray(log_target(z), dtype=float))
    if not np.all(np.isfinite(lp)):
        raise ValueError("chain must start at a point of positive density")

    accepted = np.zeros(c)
    for i in range(1, burn_in + 1):
        prop = z + step * rng.standard_normal(c)
        lq = np.atleast_1d(log_target(prop))
        move = np.log(rng.random(c)) < lq - lp
        z = np.where(move, prop, z)
        lp = np.where(move, lq, lp)
        accepted += move
        if i % ADAPT_EVERY == 0:
            rate = accepted / ADAPT_EVERY
            step = np.where(rate < ACCEPT_LOW, step * 0.6, np.where(rate > ACCEPT_HIGH, step * 1.6, step))
            accepted[:] = 0

    n_iter = max(n_draws, MIN_ITERATIONS)
    out = np.empty((n_iter, c))
    accepted = np.zeros(c)
    noise = rng.standard_normal((n_iter, c))
    unif = np.log(rng.random((n_iter, c)))
    for i in range(n_iter):
        prop = z + step * noise[i]
        lq = np.atleast_1d(log_target(prop))
        move = unif[i] < lq - lp
        z = np.where(move, prop, z)
        lp = np.where(move, lq, lp)
        accepted += move
        out[i] = z
    keep = np.linspace(0, n_iter - 1, n_draws).round().astype(int)
    rate = accepted / n_iter
    if scalar:
        return Chain(out[keep, 0], float(rate[0]), float(step[0]))
    return Chain(out[keep], rate, step)
