"""Structural optimality certificate for a feasible policy.

A feasible policy is optimal exactly when a piecewise-constant water
level exists for it: one level per stretch of epochs between boundaries
where the battery is pinned (empty or full), such that

  (a) every partially-on epoch transmits at its balancing power, so its
      level equals the activation threshold 1/h + v;
  (b) every fully-on epoch transmits at least at its balancing power,
      its level being p + 1/h;
  (c) the level only rises across a boundary where the store is empty
      (withholding energy there was pointless);
  (d) the level only falls across a boundary where the store is full
      (pushing energy across was impossible);
  (e) the battery is empty at the horizon (leftover energy has zero
      value);
  (f) the policy is feasible to begin with.

The verifier reconstructs the level profile from the policy alone and
checks each condition against a single tolerance, making it an oracle
that is independent of how the policy was produced.  Off epochs carry no
level; they only require their threshold to sit at or above the ambient
level of their stretch, otherwise switching them on would have paid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pouring import on_power
from .scenario import FeasibilityReport, Scenario, TransmissionPolicy, validate_policy

__all__ = ["Condition", "OptimalityReport", "verify_optimality"]

_CONDITION_NAMES = (
    "partial_power",
    "full_power",
    "level_rise",
    "level_fall",
    "off_threshold",
    "depletion",
    "feasibility",
)


@dataclass(frozen=True)
class Condition:
    name: str
    ok: bool
    residual: float
    detail: str = ""


@dataclass(frozen=True)
class OptimalityReport:
    certified: bool
    conditions: tuple[Condition, ...]
    feasibility: FeasibilityReport

    def condition(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "conditions": [
                {"name": c.name, "ok": c.ok, "residual": c.residual, "detail": c.detail}
                for c in self.conditions
            ],
            "feasibility": self.feasibility.to_dict(),
        }


def verify_optimality(
    scenario: Scenario, policy: TransmissionPolicy, tol: float = 1e-6
) -> OptimalityReport:
    """Check the water-level conditions of a policy at tolerance ``tol``.

    The same tolerance classifies epochs (on-duration within tol of 0 or
    of the epoch length), classifies boundaries (store within tol of
    empty or of e_max), and bounds every residual.
    """
    feas = validate_policy(scenario, policy, tol=tol)
    n = scenario.n_epochs
    tau = scenario.durations()
    h = scenario.gains()
    eps = scenario.epsilon
    theta = policy.theta
    power = policy.power
    vst = np.array([on_power(g, eps) for g in h])
    lam = 1.0 / h + vst

    # per-epoch class and level
    is_off = theta <= tol
    is_full = ~is_off & (theta >= tau - tol)
    is_partial = ~is_off & ~is_full
    level = np.full(n, np.nan)
    level[is_partial] = lam[is_partial]
    level[is_full] = power[is_full] + 1.0 / h[is_full]

    partial_res = 0.0
    for i in np.nonzero(is_partial)[0]:
        partial_res = max(partial_res, abs(power[i] - vst[i]))
    full_res = 0.0
    for i in np.nonzero(is_full)[0]:
        full_res = max(full_res, vst[i] - power[i])
    full_res = max(full_res, 0.0)

    # boundary classes from the stored-energy trace
    trace = feas.trace
    empty_at = np.zeros(n + 1, dtype=bool)
    full_at = np.zeros(n + 1, dtype=bool)
    for k in range(1, n):
        t, before, after = trace[k]
        empty_at[k] = before <= tol
        full_at[k] = after >= scenario.e_max - tol
    binding = empty_at | full_at
    binding[0] = binding[n] = False

    # stretches of epochs separated by binding boundaries
    stretches = []
    start = 0
    for k in range(1, n + 1):
        if k == n or binding[k]:
            stretches.append((start, k))
            start = k
    ambient = []
    for lo, hi in stretches:
        members = [level[i] for i in range(lo, hi) if not math.isnan(level[i])]
        ambient.append(float(np.median(members)) if members else math.nan)

    rise_res = 0.0
    fall_res = 0.0
    # within a stretch the level may not move at all
    for idx, (lo, hi) in enumerate(stretches):
        seq = [level[i] for i in range(lo, hi) if not math.isnan(level[i])]
        for a, b in zip(seq, seq[1:]):
            if b - a > 0.0:
                rise_res = max(rise_res, b - a)
            else:
                fall_res = max(fall_res, a - b)
    # across binding runs: a rise needs an empty boundary, a fall a full one
    prev_idx = None
    for idx, (lo, hi) in enumerate(stretches):
        if math.isnan(ambient[idx]):
            continue
        if prev_idx is not None:
            gap_bounds = range(stretches[prev_idx][1], lo + 1)
            saw_empty = any(empty_at[k] for k in gap_bounds)
            saw_full = any(full_at[k] for k in gap_bounds)
            d = ambient[idx] - ambient[prev_idx]
            if d > 0.0 and not saw_empty:
                rise_res = max(rise_res, d)
            if d < 0.0 and not saw_full:
                fall_res = max(fall_res, -d)
        prev_idx = idx

    off_res = 0.0
    for idx, (lo, hi) in enumerate(stretches):
        if math.isnan(ambient[idx]):
            continue
        for i in range(lo, hi):
            if is_off[i]:
                off_res = max(off_res, ambient[idx] - lam[i])
    off_res = max(off_res, 0.0)

    depletion_res = float(trace[-1][1])

    feas_res = max(
        max(0.0, -feas.worst_causality_residual),
        max(0.0, feas.worst_overflow_residual),
    )

    conditions = (
        Condition("partial_power", partial_res <= tol, partial_res,
                  "partially-on epochs run at the balancing power"),
        Condition("full_power", full_res <= tol, full_res,
                  "fully-on epochs run at or above the balancing power"),
        Condition("level_rise", rise_res <= tol, rise_res,
                  "level rises only across an empty store"),
        Condition("level_fall", fall_res <= tol, fall_res,
                  "level falls only across a full store"),
        Condition("off_threshold", off_res <= tol, off_res,
                  "off epochs price at or above the ambient level"),
        Condition("depletion", depletion_res <= tol, depletion_res,
                  "no energy is left at the horizon"),
        Condition("feasibility", feas.feasible, feas_res,
                  "battery constraints hold"),
    )
    return OptimalityReport(
        certified=bool(all(c.ok for c in conditions)),
        conditions=conditions,
        feasibility=feas,
    )
