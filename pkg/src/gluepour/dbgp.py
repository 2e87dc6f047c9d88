"""Full-horizon scheduler built from backward glue pours.

Each arrival may only be consumed from its own epoch onward (causality),
and energy from earlier arrivals that is still stored when a later
packet lands competes with it for battery room (overflow).  Both
constraints become local if arrivals are poured backward in time:

* The latest packet is poured over its suffix of epochs first; earlier
  packets are then poured over their own suffixes on top of whatever
  already sits there.  A base load is never displaced, so consumption
  credited to a later arrival never moves before that arrival.
* Capacity is enforced with tap budgets.  The boundary at an arrival
  instant t_k admits at most e_max - e_k of energy from strictly earlier
  arrivals flowing across it; energy already carried across t_k by other
  packets is subtracted from that allowance before each pour.  When an
  allowance hits zero the boundary freezes: the battery is exactly full
  there and the level profile may drop across it, which is the only kind
  of boundary a level drop is consistent with.

A first backward sweep computes allowances from the packets placed so
far, which is optimistic about packets not yet poured.  Further sweeps
re-pour one packet at a time against everybody else's placement until no
placement moves; each re-pour maximizes the packet's own contribution
given the rest, so the total throughput never decreases and the sweeps
settle at a fixed point (one extra sweep in every case observed).  The
solution is flagged uncertified if the loop hits its pass budget; an
independent structural check lives in the kkt module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pouring import LevelAllocator, _pour, on_power
from .scenario import Scenario, TransmissionPolicy, _require

__all__ = ["PourStep", "PourPlan", "DbgpSolution", "build_pour_plan", "solve_dbgp"]


@dataclass(frozen=True)
class PourStep:
    """One packet to pour: admissible epochs are arrival_epoch..n-1."""

    arrival_epoch: int
    time: float
    energy: float


@dataclass(frozen=True)
class PourPlan:
    """Pour order (latest packet first) plus the capacity taps.

    ``wall_epochs`` lists the epochs whose starting boundary can bind:
    those with a positive arrival, excluding epoch 0 since nothing can
    cross the start of time.  ``wall_budget`` is the matching allowance
    e_max - e_k before accounting for any placed energy.
    """

    steps: tuple[PourStep, ...]
    wall_epochs: tuple[int, ...]
    wall_budget: tuple[float, ...]
    n_epochs: int


@dataclass(frozen=True)
class DbgpSolution:
    policy: TransmissionPolicy
    consumed: np.ndarray
    certified: bool
    passes: int


def build_pour_plan(scenario: Scenario) -> PourPlan:
    arrivals = scenario.arrivals()
    starts = scenario.starts()
    steps = [
        PourStep(arrival_epoch=i, time=float(starts[i]), energy=float(arrivals[i]))
        for i in range(scenario.n_epochs)
        if arrivals[i] > 0.0
    ]
    steps.sort(key=lambda st: -st.time)
    walls = [i for i in range(1, scenario.n_epochs) if arrivals[i] > 0.0]
    return PourPlan(
        steps=tuple(steps),
        wall_epochs=tuple(walls),
        wall_budget=tuple(float(scenario.e_max - arrivals[i]) for i in walls),
        n_epochs=scenario.n_epochs,
    )


def _tap_budgets(plan: PourPlan, placements: np.ndarray, steps, skip: int, j: int) -> np.ndarray:
    """Allowances for pouring step ``skip`` over epochs j..n-1.

    Budget at local tap k-j: room left at boundary t_k after the energy
    other packets from before t_k already push across it.
    """
    n = plan.n_epochs
    w = np.full(n - j, np.inf)
    for wall, room in zip(plan.wall_epochs, plan.wall_budget):
        if wall <= j:
            continue
        crossing = 0.0
        for b, st in enumerate(steps):
            if b != skip and st.arrival_epoch < wall:
                crossing += placements[b, wall:].sum()
        w[wall - j] = max(room - crossing, 0.0)
    return w


def solve_dbgp(scenario: Scenario, *, max_passes: int = 100, tol: float = 1e-9) -> DbgpSolution:
    """Compute the optimal transmission policy for a scenario.

    ``tol`` bounds the largest per-epoch placement change between two
    sweeps at which the fixed point counts as reached.
    """
    _require(max_passes >= 1, "max_passes must be at least 1")
    n = scenario.n_epochs
    tau = scenario.durations()
    h = scenario.gains()
    eps = scenario.epsilon
    vst = np.array([on_power(g, eps) for g in h])

    plan = build_pour_plan(scenario)
    steps = plan.steps
    m = len(steps)
    placements = np.zeros((m, n))
    totals = np.zeros(n)

    converged = m == 0
    passes = 0
    while passes < max_passes and not converged:
        passes += 1
        delta = 0.0
        for a, st in enumerate(steps):
            j = st.arrival_epoch
            others = totals - placements[a]
            budgets = _tap_budgets(plan, placements, steps, a, j)
            alloc = LevelAllocator(
                tau[j:], h[j:], eps, bases=others[j:], on_powers=vst[j:]
            )
            added, _ = _pour(alloc, st.energy, budgets)
            row = np.zeros(n)
            row[j:] = added
            delta = max(delta, float(np.abs(row - placements[a]).max()))
            totals = others + row
            placements[a] = row
        if passes >= 2 and delta < tol:
            converged = True

    alloc = LevelAllocator(tau, h, eps, on_powers=vst)
    theta, power = alloc.policy_arrays(totals)
    return DbgpSolution(
        policy=TransmissionPolicy(theta=theta, power=power),
        consumed=totals,
        certified=converged,
        passes=passes,
    )
