"""Timeline model for offline energy-harvesting transmission schedules.

Conventions shared by every module in this package:

* Time runs over a finite horizon [0, T].  Energy packets arrive at known
  instants, and the channel gain is piecewise constant with known change
  points.  The merged set of arrival and gain-change instants cuts [0, T]
  into *epochs*; both the gain and the available new energy are constant
  data inside an epoch.  An arrival is credited at the first instant of
  its epoch.
* A transmission policy spends, inside epoch i of length tau_i, an
  on-duration theta_i in [0, tau_i] at constant power p_i >= 0, placed at
  the start of the epoch.  While the radio is on it additionally draws a
  constant processing power epsilon, so the battery gives up
  theta_i * (p_i + epsilon) over the epoch.
* Rates are measured in nats: an on-interval contributes
  theta_i / 2 * ln(1 + h_i * p_i).
* The battery stores at most e_max.  Because power is constant over an
  on-interval placed at the epoch start, checking the stored-energy trace
  at epoch boundaries is sufficient: consumption must never outrun what
  has arrived (causality), and the store may never exceed e_max just
  after an arrival is credited (overflow).

All quantities are plain floats in any consistent unit system; the
optional ``units`` string on a scenario is carried along for labeling
only and is never interpreted.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Epoch",
    "Scenario",
    "TransmissionPolicy",
    "FeasibilityReport",
    "merge_event_streams",
    "evaluate_throughput",
    "validate_policy",
    "load_scenario",
    "save_scenario",
    "load_policy",
    "save_policy",
]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(x)))


@dataclass(frozen=True)
class Epoch:
    """One constant-data stretch of the timeline.

    ``arrival`` is the energy credited at ``start``; the epoch covers
    [start, start + duration).
    """

    start: float
    duration: float
    gain: float
    arrival: float


@dataclass(frozen=True)
class Scenario:
    horizon: float
    e_max: float
    epsilon: float
    epochs: tuple[Epoch, ...]
    units: str = ""

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    def starts(self) -> np.ndarray:
        return np.array([ep.start for ep in self.epochs])

    def durations(self) -> np.ndarray:
        return np.array([ep.duration for ep in self.epochs])

    def gains(self) -> np.ndarray:
        return np.array([ep.gain for ep in self.epochs])

    def arrivals(self) -> np.ndarray:
        return np.array([ep.arrival for ep in self.epochs])

    def boundaries(self) -> np.ndarray:
        """All epoch boundaries including 0 and the horizon."""
        return np.append(self.starts(), self.horizon)

    def total_energy(self) -> float:
        return float(self.arrivals().sum())


def merge_event_streams(
    arrivals,
    gains,
    horizon: float,
    e_max: float,
    epsilon: float,
    *,
    clip_arrivals: bool = False,
    units: str = "",
) -> Scenario:
    """Build a Scenario from raw (time, energy) and (time, gain) streams.

    Arrival and gain-change instants are merged into one sorted boundary
    set; duplicate arrival times have their energies summed, duplicate
    gain times must agree on the gain.  A gain entry at t = 0 is
    mandatory since every epoch needs a gain.  Arrivals larger than
    ``e_max`` are rejected unless ``clip_arrivals`` is set, in which case
    they are clipped with a warning (energy beyond the capacity would be
    lost on arrival anyway).
    """
    _require(math.isfinite(horizon) and horizon > 0, "horizon must be positive and finite")
    _require(math.isfinite(e_max) and e_max > 0, "e_max must be positive and finite")
    _require(math.isfinite(epsilon) and epsilon >= 0, "epsilon must be non-negative and finite")

    arr: dict[float, float] = {}
    for t, e in arrivals:
        t = float(t)
        e = float(e)
        _require(math.isfinite(t) and math.isfinite(e), "arrival entries must be finite")
        _require(0.0 <= t < horizon, f"arrival at t={t} outside [0, horizon)")
        _require(e >= 0.0, f"negative arrival energy at t={t}")
        arr[t] = arr.get(t, 0.0) + e

    gmap: dict[float, float] = {}
    for t, h in gains:
        t = float(t)
        h = float(h)
        _require(math.isfinite(t) and math.isfinite(h), "gain entries must be finite")
        _require(0.0 <= t < horizon, f"gain change at t={t} outside [0, horizon)")
        _require(h > 0.0, f"gain must be positive at t={t}")
        if t in gmap and gmap[t] != h:
            raise ValueError(f"conflicting gains at t={t}")
        gmap[t] = h
    _require(0.0 in gmap, "gain change missing at t = 0")

    for t, e in sorted(arr.items()):
        if e > e_max:
            if clip_arrivals:
                warnings.warn(
                    f"arrival {e} at t={t} exceeds capacity {e_max}; clipping",
                    stacklevel=2,
                )
                arr[t] = e_max
            else:
                raise ValueError(f"arrival {e} at t={t} exceeds e_max={e_max}")

    bounds = sorted(set(arr) | set(gmap))
    gain_times = sorted(gmap)
    epochs = []
    for i, t in enumerate(bounds):
        end = bounds[i + 1] if i + 1 < len(bounds) else horizon
        # gain in effect: the latest change at or before the epoch start
        g_idx = max(j for j, gt in enumerate(gain_times) if gt <= t)
        epochs.append(
            Epoch(
                start=t,
                duration=end - t,
                gain=gmap[gain_times[g_idx]],
                arrival=arr.get(t, 0.0),
            )
        )
    return Scenario(
        horizon=float(horizon),
        e_max=float(e_max),
        epsilon=float(epsilon),
        epochs=tuple(epochs),
        units=units,
    )


@dataclass(frozen=True)
class TransmissionPolicy:
    """Per-epoch on-durations and powers.

    An epoch that never transmits must carry zero power so that policies
    have a single canonical representation.
    """

    theta: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        pw = np.atleast_1d(np.asarray(self.power, dtype=float))
        _require(th.ndim == 1 and pw.ndim == 1, "theta and power must be one-dimensional")
        _require(len(th) == len(pw), "theta and power must have equal length")
        _require(_finite(th) and _finite(pw), "policy entries must be finite")
        _require(bool(np.all(th >= 0.0)), "negative on-duration")
        _require(bool(np.all(pw >= 0.0)), "negative power")
        _require(bool(np.all(pw[th == 0.0] == 0.0)), "positive power on an epoch with theta = 0")
        th.flags.writeable = False
        pw.flags.writeable = False
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "power", pw)

    @property
    def n_epochs(self) -> int:
        return len(self.theta)

    def consumed(self, epsilon: float) -> np.ndarray:
        """Energy drawn per epoch, processing cost included."""
        return self.theta * (self.power + epsilon)


def evaluate_throughput(scenario: Scenario, policy: TransmissionPolicy) -> float:
    """Total throughput in nats delivered by ``policy`` on ``scenario``."""
    _require(policy.n_epochs == scenario.n_epochs, "policy/scenario epoch count mismatch")
    h = scenario.gains()
    return float(np.sum(0.5 * policy.theta * np.log1p(h * policy.power)))


@dataclass(frozen=True)
class FeasibilityReport:
    causality_ok: bool
    overflow_ok: bool
    worst_causality_residual: float
    worst_overflow_residual: float
    trace: tuple[tuple[float, float, float], ...] = field(repr=False)

    @property
    def feasible(self) -> bool:
        return self.causality_ok and self.overflow_ok

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "causality_ok": self.causality_ok,
            "overflow_ok": self.overflow_ok,
            "worst_causality_residual": self.worst_causality_residual,
            "worst_overflow_residual": self.worst_overflow_residual,
            "trace": [
                {"t": t, "stored_before": sb, "stored_after": sa} for t, sb, sa in self.trace
            ],
        }


def validate_policy(
    scenario: Scenario, policy: TransmissionPolicy, tol: float = 1e-9
) -> FeasibilityReport:
    """Check a policy against the battery constraints of a scenario.

    The returned trace lists (boundary time, stored just before the
    arrival there, stored just after it) for every epoch boundary
    including the horizon.  Causality holds when the store never drops
    below -tol; overflow holds when the store just after each arrival
    never exceeds e_max + tol.  Malformed input (wrong epoch count, an
    on-duration exceeding its epoch) raises instead of reporting.
    """
    _require(policy.n_epochs == scenario.n_epochs, "policy/scenario epoch count mismatch")
    tau = scenario.durations()
    _require(bool(np.all(policy.theta <= tau + tol)), "on-duration exceeds epoch length")

    drawn = policy.consumed(scenario.epsilon)
    arrivals = scenario.arrivals()
    bounds = scenario.boundaries()

    trace = []
    stored = 0.0
    worst_caus = math.inf
    worst_over = -math.inf
    for i in range(scenario.n_epochs):
        before = stored
        after = before + arrivals[i]
        trace.append((float(bounds[i]), before, after))
        worst_over = max(worst_over, after - scenario.e_max)
        stored = after - drawn[i]
        worst_caus = min(worst_caus, stored)
    trace.append((float(bounds[-1]), stored, stored))
    return FeasibilityReport(
        causality_ok=bool(worst_caus >= -tol),
        overflow_ok=bool(worst_over <= tol),
        worst_causality_residual=float(worst_caus),
        worst_overflow_residual=float(worst_over),
        trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# JSON persistence


def _scenario_to_dict(s: Scenario) -> dict:
    d = {
        "T": s.horizon,
        "e_max": s.e_max,
        "epsilon": s.epsilon,
        "arrivals": [
            {"t": ep.start, "e": ep.arrival} for ep in s.epochs if ep.arrival > 0.0
        ],
        "gains": [],
    }
    prev = None
    for ep in s.epochs:
        if ep.gain != prev:
            d["gains"].append({"t": ep.start, "h": ep.gain})
            prev = ep.gain
    if s.units:
        d["units"] = s.units
    return d


def _scenario_from_dict(d: dict, *, clip_arrivals: bool = False) -> Scenario:
    for key in ("T", "e_max", "epsilon", "gains"):
        _require(key in d, f"scenario file missing '{key}'")
    return merge_event_streams(
        arrivals=[(a["t"], a["e"]) for a in d.get("arrivals", [])],
        gains=[(g["t"], g["h"]) for g in d["gains"]],
        horizon=d["T"],
        e_max=d["e_max"],
        epsilon=d["epsilon"],
        clip_arrivals=clip_arrivals,
        units=d.get("units", ""),
    )


def load_scenario(path, *, clip_arrivals: bool = False) -> Scenario:
    with open(path) as fh:
        return _scenario_from_dict(json.load(fh), clip_arrivals=clip_arrivals)


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w") as fh:
        json.dump(_scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


def load_policy(path) -> TransmissionPolicy:
    with open(path) as fh:
        rows = json.load(fh)
    _require(isinstance(rows, list), "policy file must hold a list of epochs")
    return TransmissionPolicy(
        theta=np.array([r["theta"] for r in rows], dtype=float),
        power=np.array([r["p"] for r in rows], dtype=float),
    )


def save_policy(path, policy: TransmissionPolicy) -> None:
    rows = [{"theta": float(t), "p": float(p)} for t, p in zip(policy.theta, policy.power)]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
