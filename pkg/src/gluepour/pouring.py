"""Directional water-filling with a per-slot activation cost.

With a processing cost epsilon > 0 it is never worth transmitting at an
arbitrarily low power: the energy bill theta * (p + epsilon) buys
theta/2 * ln(1 + h p) nats, and the nats-per-energy ratio is maximized at
a finite power v > 0.  Spreading energy across a longer on-interval at
that power beats raising the power until the interval is exhausted, so
an epoch fills in two phases:

* below a threshold level lambda = 1/h + v the epoch absorbs energy at
  the fixed power v, growing its on-interval from 0 to the full epoch
  (the level map jumps by tau * (v + epsilon) at lambda);
* past the threshold the epoch is on throughout and behaves like a
  classical water-filling slot of width tau over a floor at 1/h, shifted
  by the constant epsilon.

The balancing power v solves (1/h + v) ln(1 + h v) = epsilon + v.  The
left side minus the right is zero at v = 0 with derivative ln(1 + h v),
which is positive for v > 0, so for epsilon > 0 the positive root exists
and is unique; epsilon = 0 degenerates to v = 0 and plain water-filling.

``glue_pour`` distributes a single energy budget over a sequence of
epochs by raising a common level, honoring per-epoch base loads that may
already occupy capacity and optional budgets on how much energy may flow
past each epoch boundary.  It is the primitive that the full scheduler
composes; see the dbgp module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scenario import _require

__all__ = [
    "on_power",
    "single_arrival_policy",
    "LevelAllocator",
    "Allocation",
    "level_energy_map",
    "glue_pour",
]

# Levels are compared with an absolute snap: thresholds are O(1/h + v)
# and never astronomically small, so ties land within fp noise of each
# other rather than within a relative band.
_LEVEL_SNAP = 1e-12


def _on_power_defect(v: float, gain: float, epsilon: float) -> float:
    return (1.0 / gain + v) * math.log1p(gain * v) - (epsilon + v)


@lru_cache(maxsize=None)
def _on_power_cached(gain: float, epsilon: float) -> float:
    if epsilon == 0.0:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if _on_power_defect(hi, gain, epsilon) >= 0.0:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("failed to bracket the on-power root")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _on_power_defect(mid, gain, epsilon) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def on_power(gain: float, epsilon: float) -> float:
    """Most efficient transmit power under ``gain`` with idle cost ``epsilon``.

    Solves (1/h + v) ln(1 + h v) = epsilon + v for v >= 0 by bisection
    after doubling up a bracket.  Returns 0 when epsilon is 0.
    """
    _require(math.isfinite(gain) and gain > 0, "gain must be positive and finite")
    _require(math.isfinite(epsilon) and epsilon >= 0, "epsilon must be non-negative and finite")
    return _on_power_cached(float(gain), float(epsilon))


def single_arrival_policy(
    energy: float, gain: float, epsilon: float, horizon: float
) -> tuple[float, float]:
    """Best (theta, p) for one energy packet over one epoch of length ``horizon``.

    Runs at the balancing power until either the energy or the horizon is
    exhausted; with the horizon binding, the whole budget is spread over
    it instead.
    """
    _require(math.isfinite(energy) and energy >= 0, "energy must be non-negative and finite")
    _require(math.isfinite(horizon) and horizon > 0, "horizon must be positive and finite")
    if energy == 0.0:
        return 0.0, 0.0
    if epsilon == 0.0:
        return horizon, energy / horizon
    v = on_power(gain, epsilon)
    need = energy / (v + epsilon)
    if need <= horizon:
        return need, v
    return horizon, energy / horizon - epsilon


class LevelAllocator:
    """Pouring state for a run of epochs.

    Carries per-epoch durations, gains, activation thresholds
    lambda_i = 1/h_i + v_i, jump sizes cap_i = tau_i (v_i + epsilon),
    base loads already occupying the epochs, and the order in which
    epochs at a tied threshold should absorb energy (defaults to
    left-to-right, which keeps consumption as early as possible).
    """

    def __init__(self, durations, gains, epsilon, bases=None, order=None, on_powers=None):
        tau = np.atleast_1d(np.asarray(durations, dtype=float))
        h = np.atleast_1d(np.asarray(gains, dtype=float))
        _require(tau.ndim == 1 and h.shape == tau.shape, "durations and gains must match")
        _require(bool(np.all(np.isfinite(tau))) and bool(np.all(tau > 0)), "bad durations")
        _require(bool(np.all(np.isfinite(h))) and bool(np.all(h > 0)), "bad gains")
        _require(math.isfinite(epsilon) and epsilon >= 0, "bad epsilon")
        self.durations = tau
        self.gains = h
        self.epsilon = float(epsilon)
        n = len(tau)
        if on_powers is None:
            self.on_powers = np.array([on_power(g, self.epsilon) for g in h])
        else:
            self.on_powers = np.atleast_1d(np.asarray(on_powers, dtype=float))
        self.threshold = 1.0 / h + self.on_powers
        self.cap = tau * (self.on_powers + self.epsilon)
        if bases is None:
            self.base = np.zeros(n)
        else:
            self.base = np.atleast_1d(np.asarray(bases, dtype=float))
            _require(self.base.shape == tau.shape, "bases must match durations")
            _require(bool(np.all(self.base >= 0.0)), "negative base load")
        if order is None:
            self.order = np.arange(n)
        else:
            self.order = np.atleast_1d(np.asarray(order, dtype=int))
            _require(sorted(self.order) == list(range(n)), "order must permute the epochs")

    @property
    def n(self) -> int:
        return len(self.durations)

    def activation_levels(self) -> np.ndarray:
        """Level at which each epoch starts absorbing new energy.

        An epoch whose base already exceeds the jump is a plain slot
        filled to base/tau - epsilon + 1/h; otherwise the threshold.
        """
        full = self.base / self.durations - self.epsilon + 1.0 / self.gains
        return np.where(self.base < self.cap, self.threshold, full)

    def policy_arrays(self, consumed) -> tuple[np.ndarray, np.ndarray]:
        """Map per-epoch consumed energy to (theta, p) arrays."""
        consumed = np.asarray(consumed, dtype=float)
        theta = np.zeros(self.n)
        power = np.zeros(self.n)
        for i in range(self.n):
            c = consumed[i]
            if c <= 0.0:
                continue
            if c < self.cap[i]:
                theta[i] = c / (self.on_powers[i] + self.epsilon)
                power[i] = self.on_powers[i]
            else:
                theta[i] = self.durations[i]
                power[i] = max(c / self.durations[i] - self.epsilon, 0.0)
        return theta, power


def level_energy_map(alloc: LevelAllocator, level: float) -> tuple[float, float]:
    """Total energy absorbed at a given level, as a [min, max] interval.

    The per-epoch map is 0 below the threshold, jumps by the cap exactly
    at it (any point of the jump is attainable), and grows linearly with
    slope tau above.  Base loads clamp the interval from below since a
    base is never displaced by pouring more energy on top.
    """
    lo = 0.0
    hi = 0.0
    for i in range(alloc.n):
        lam = alloc.threshold[i]
        if level < lam - _LEVEL_SNAP:
            raw_lo = raw_hi = 0.0
        elif level <= lam + _LEVEL_SNAP:
            raw_lo, raw_hi = 0.0, alloc.cap[i]
        else:
            e = alloc.durations[i] * (level - 1.0 / alloc.gains[i] + alloc.epsilon)
            raw_lo = raw_hi = e
        lo += max(alloc.base[i], raw_lo)
        hi += max(alloc.base[i], raw_hi)
    return lo, hi


@dataclass(frozen=True)
class Allocation:
    theta: np.ndarray
    power: np.ndarray
    consumed: np.ndarray
    poured: np.ndarray
    level: float
    leftover: float


def _pour(alloc: LevelAllocator, energy: float, budgets=None) -> tuple[np.ndarray, float]:
    """Raise a common level until ``energy`` is absorbed.

    ``budgets[k]`` caps the total new energy poured into epochs k..n-1,
    i.e. the amount allowed to flow past the boundary in front of epoch k
    (index 0 is ignored: nothing flows into the run from outside).  When
    a budget is exhausted the boundary freezes and all epochs behind it
    stop absorbing; the level may later sit lower there, which is exactly
    the profile a full battery supports.

    Returns (energy added per epoch, final level).
    """
    n = alloc.n
    added = np.zeros(n)
    if energy <= 0.0:
        return added, float(np.min(alloc.activation_levels()))
    tau = alloc.durations
    act = alloc.activation_levels()
    jump = np.where(alloc.base < alloc.cap, alloc.cap - alloc.base, 0.0)
    if budgets is None:
        w = np.full(n, np.inf)
    else:
        w = np.asarray(budgets, dtype=float).copy()
        _require(w.shape == (n,), "budgets must match the epoch count")
    w[0] = np.inf
    wsnap = 1e-12 * max(1.0, float(energy))

    started = np.zeros(n, dtype=bool)
    cut = n
    remaining = float(energy)
    level = float(np.min(act[:cut]))

    for _ in range(20 * n + 200):
        if remaining <= 0.0:
            break
        # freeze boundaries whose budget ran dry
        dry = np.nonzero(w[:cut] <= wsnap)[0]
        if dry.size:
            cut = int(dry.min())
        if cut == 0:
            raise ArithmeticError("no epoch left to absorb energy")
        # absorb the jumps of epochs activating at the current level,
        # earliest pour-order first
        at_level = [i for i in range(cut) if not started[i] and act[i] <= level + _LEVEL_SNAP]
        for i in sorted(at_level, key=lambda i: alloc.order[i]):
            if i >= cut:
                continue
            if jump[i] > 0.0 and remaining > 0.0:
                head = float(w[1 : i + 1].min()) if i >= 1 else math.inf
                x = min(jump[i], remaining, head)
                if x > 0.0:
                    added[i] += x
                    jump[i] -= x
                    remaining -= x
                    w[1 : i + 1] -= x
                dry = np.nonzero(w[: i + 1] <= wsnap)[0]
                if dry.size:
                    cut = min(cut, int(dry.min()))
            if i < cut and jump[i] <= 0.0:
                started[i] = True
        if remaining <= 0.0:
            break
        # raise the level linearly over everything already started
        active = np.nonzero(started[:cut])[0]
        pend = [i for i in range(cut) if not started[i] and act[i] > level + _LEVEL_SNAP]
        next_act = min((act[i] for i in pend), default=math.inf)
        slope = float(tau[active].sum())
        if slope <= 0.0:
            if not math.isfinite(next_act):
                raise ArithmeticError("level walk stalled")
            level = next_act
            continue
        # drain rate past boundary k = on-width strictly right of it
        rates = np.zeros(cut)
        for k in range(1, cut):
            rates[k] = tau[active[active >= k]].sum()
        dl_energy = remaining / slope
        dl_act = next_act - level
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(rates[1:cut] > 0.0, w[1:cut] / rates[1:cut], np.inf)
        dl_budget = float(ratios.min()) if cut > 1 else math.inf
        dl = min(dl_energy, dl_act, dl_budget)
        added[active] += tau[active] * dl
        w[1:cut] -= rates[1:cut] * dl
        level += dl
        if dl == dl_energy:
            remaining = 0.0
        else:
            remaining -= slope * dl
    else:
        raise ArithmeticError("pour did not converge")
    return added, level


def glue_pour(alloc: LevelAllocator, energy: float, tap_budgets=None) -> Allocation:
    """Pour ``energy`` over the allocator's epochs on top of its bases.

    The result reports the combined per-epoch consumption, the policy it
    induces, the newly poured share, the final common level, and any
    energy that could not be placed (zero unless every epoch is walled
    off by an exhausted budget).
    """
    _require(math.isfinite(energy) and energy >= 0.0, "energy must be non-negative and finite")
    added, level = _pour(alloc, energy, tap_budgets)
    consumed = alloc.base + added
    theta, power = alloc.policy_arrays(consumed)
    leftover = max(float(energy) - float(added.sum()), 0.0)
    return Allocation(
        theta=theta,
        power=power,
        consumed=consumed,
        poured=added,
        level=float(level),
        leftover=leftover,
    )
