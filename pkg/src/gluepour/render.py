"""Flat-file views of policies and sweeps: CSV rows and standalone SVG."""

from __future__ import annotations

import csv

import numpy as np

from .scenario import Scenario, TransmissionPolicy, _require

__all__ = [
    "policy_rows",
    "write_policy_csv",
    "read_policy_csv",
    "policy_svg",
    "write_sweep_csv",
    "read_sweep_csv",
    "sweep_svg",
]


def policy_rows(scenario: Scenario, policy: TransmissionPolicy):
    """Flatten a policy to (t_start, t_end, power, on) segments.

    Every epoch yields its on-segment (when theta > 0) followed by its
    off remainder (when theta < tau), so the segments tile [0, T].
    """
    _require(policy.n_epochs == scenario.n_epochs, "policy/scenario epoch count mismatch")
    rows = []
    for ep, th, p in zip(scenario.epochs, policy.theta, policy.power):
        if th > 0.0:
            rows.append((ep.start, ep.start + th, float(p), 1))
        if th < ep.duration:
            rows.append((ep.start + th, ep.start + ep.duration, 0.0, 0))
    return rows


def write_policy_csv(path, scenario: Scenario, policy: TransmissionPolicy) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_start", "t_end", "power", "on"])
        for t0, t1, p, on in policy_rows(scenario, policy):
            writer.writerow([repr(t0), repr(t1), repr(p), on])


def read_policy_csv(path, scenario: Scenario) -> TransmissionPolicy:
    """Rebuild a policy from its CSV segments against a known scenario."""
    theta = np.zeros(scenario.n_epochs)
    power = np.zeros(scenario.n_epochs)
    starts = scenario.starts()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if int(row["on"]) != 1:
                continue
            t0 = float(row["t_start"])
            i = int(np.argmin(np.abs(starts - t0)))
            theta[i] = float(row["t_end"]) - t0
            power[i] = float(row["power"])
    return TransmissionPolicy(theta=theta, power=power)


_W, _H = 800, 400
_MARGIN = 55


def _x(t, horizon):
    return _MARGIN + (t / horizon) * (_W - 2 * _MARGIN)


def _y(v, vmax):
    usable = _H - 2 * _MARGIN
    return _H - _MARGIN - (v / vmax) * usable


def _svg_open(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]


def policy_svg(scenario: Scenario, policy: TransmissionPolicy, title: str = "transmit power") -> str:
    """Power staircase over time with epoch boundaries and arrival marks."""
    rows = policy_rows(scenario, policy)
    T = scenario.horizon
    vmax = max([p for _, _, p, _ in rows] + [1e-9]) * 1.15
    parts = _svg_open(title)
    axis_y = _H - _MARGIN
    parts.append(
        f'<line x1="{_MARGIN}" y1="{axis_y}" x2="{_W - _MARGIN}" y2="{axis_y}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_MARGIN}" y1="{axis_y}" x2="{_MARGIN}" y2="{_MARGIN}" stroke="black"/>'
    )
    for ep in scenario.epochs:
        x = _x(ep.start, T)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_MARGIN}" x2="{x:.2f}" y2="{axis_y}" '
            f'stroke="#bbbbbb" stroke-dasharray="4 3"/>'
        )
        if ep.arrival > 0.0:
            parts.append(
                f'<path d="M {x - 5:.2f} {axis_y + 14} L {x + 5:.2f} {axis_y + 14} '
                f'L {x:.2f} {axis_y + 4} Z" fill="#2266cc"/>'
            )
    pts = []
    for t0, t1, p, _ in rows:
        pts.append(f"{_x(t0, T):.2f},{_y(p, vmax):.2f}")
        pts.append(f"{_x(t1, T):.2f},{_y(p, vmax):.2f}")
    parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="#cc3322" stroke-width="2"/>')
    for frac in (0.0, 0.5, 1.0):
        v = frac * vmax / 1.15
        parts.append(
            f'<text x="{_MARGIN - 8}" y="{_y(v, vmax):.2f}" text-anchor="end">{v:.2f}</text>'
        )
    for t in (0.0, T / 2, T):
        parts.append(
            f'<text x="{_x(t, T):.2f}" y="{axis_y + 28}" text-anchor="middle">{t:.2f}</text>'
        )
    unit = f" [{scenario.units}]" if scenario.units else ""
    parts.append(
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">time{unit}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def write_sweep_csv(path, epsilons, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "throughput"])
        for e, v in zip(epsilons, values):
            writer.writerow([repr(float(e)), repr(float(v))])


def read_sweep_csv(path):
    eps, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            eps.append(float(row["epsilon"]))
            vals.append(float(row["throughput"]))
    return eps, vals


def sweep_svg(epsilons, values, title: str = "throughput vs processing cost") -> str:
    eps = list(map(float, epsilons))
    vals = list(map(float, values))
    _require(len(eps) == len(vals) and len(eps) >= 2, "sweep needs at least two points")
    emax = max(eps) or 1.0
    vmax = max(vals + [1e-9]) * 1.15
    parts = _svg_open(title)
    axis_y = _H - _MARGIN
    parts.append(
        f'<line x1="{_MARGIN}" y1="{axis_y}" x2="{_W - _MARGIN}" y2="{axis_y}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_MARGIN}" y1="{axis_y}" x2="{_MARGIN}" y2="{_MARGIN}" stroke="black"/>'
    )
    pts = " ".join(f"{_x(e, emax):.2f},{_y(v, vmax):.2f}" for e, v in zip(eps, vals))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#2266cc" stroke-width="2"/>')
    for e, v in zip(eps, vals):
        parts.append(
            f'<circle cx="{_x(e, emax):.2f}" cy="{_y(v, vmax):.2f}" r="3" fill="#2266cc"/>'
        )
    for frac in (0.0, 0.5, 1.0):
        v = frac * vmax / 1.15
        parts.append(
            f'<text x="{_MARGIN - 8}" y="{_y(v, vmax):.2f}" text-anchor="end">{v:.3f}</text>'
        )
    for e in (min(eps), emax):
        parts.append(
            f'<text x="{_x(e, emax):.2f}" y="{axis_y + 28}" text-anchor="middle">{e:.2f}</text>'
        )
    parts.append(f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">processing cost</text>')
    parts.append("</svg>")
    return "\n".join(parts)
