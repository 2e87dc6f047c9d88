"""Seeded random scenario generation for tests and demos."""

from __future__ import annotations

import os

import numpy as np

from .scenario import Scenario, merge_event_streams

__all__ = ["env_seed", "random_scenario"]

_SEED_VAR = "GLUEPOUR_SEED"


def env_seed(default: int = 0) -> int:
    """Seed from the GLUEPOUR_SEED environment variable, else ``default``."""
    raw = os.environ.get(_SEED_VAR, "")
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{_SEED_VAR} must be an integer, got {raw!r}") from exc


def random_scenario(
    rng=None,
    *,
    max_epochs: int = 6,
    epsilon: float | None = None,
    arrival_prob: float = 0.8,
) -> Scenario:
    """Draw a well-scaled scenario with up to ``max_epochs`` epochs.

    The gain changes at every epoch boundary, so the epoch count is
    exactly the drawn boundary count.  Arrivals appear at each boundary
    with probability ``arrival_prob`` and never exceed the capacity.
    ``rng`` accepts a numpy Generator or an integer seed; by default the
    seed comes from GLUEPOUR_SEED (0 when unset).
    """
    if rng is None:
        rng = np.random.default_rng(env_seed())
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    horizon = float(rng.uniform(4.0, 12.0))
    n = int(rng.integers(1, max_epochs + 1))
    while True:
        interior = np.sort(rng.uniform(0.05 * horizon, 0.95 * horizon, n - 1))
        if n == 1 or np.all(np.diff(np.concatenate([[0.0], interior])) > 1e-3 * horizon):
            break
    bounds = np.concatenate([[0.0], interior])

    e_max = float(rng.uniform(1.0, 8.0))
    gains = [(float(t), float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))) for t in bounds]
    arrivals = [
        (float(t), float(rng.uniform(0.0, e_max)))
        for t in bounds
        if rng.uniform() < arrival_prob
    ]
    eps = float(rng.uniform(0.0, 1.5)) if epsilon is None else float(epsilon)
    return merge_event_streams(
        arrivals=arrivals,
        gains=gains,
        horizon=horizon,
        e_max=e_max,
        epsilon=eps,
    )
