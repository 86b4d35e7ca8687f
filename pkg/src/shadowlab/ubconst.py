"""Sampled uniform bounds on the flow: derivative, speed, and Taylor remainder.

The constants are suprema over a declared sample, not proved bounds.  Every
result keeps a description of the sample it was computed on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fields import _grid
from .flow import FlowEngine


@dataclass
class SampleSpec:
    boxes: list
    points_per_axis: int = 9
    s_values: np.ndarray = field(default_factory=lambda: np.linspace(-1.0, 1.0, 17))
    pair_offsets: tuple = (1e-4, 1e-3, 1e-2, 1e-1)
    g1_scales: np.ndarray = field(default_factory=lambda: np.geomspace(1e-5, 1.0, 16))
    g1_times: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    g1_points: int = 9
    g1_directions: int = 4
    seed: int = 0

    def describe(self) -> dict:
        return {
            "boxes": [[list(map(float, lo)), list(map(float, hi))] for lo, hi in self.boxes],
            "points_per_axis": self.points_per_axis,
            "s_values": [float(s) for s in self.s_values],
            "pair_offsets": list(self.pair_offsets),
            "g1_scales": [float(s) for s in self.g1_scales],
            "g1_times": list(self.g1_times),
            "g1_points": self.g1_points,
            "g1_directions": self.g1_directions,
            "seed": self.seed,
        }


@dataclass
class UbConstants:
    Q1: float
    Q2: float
    Q3: float
    Q4: float
    g1_scales: np.ndarray
    g1_raw: np.ndarray
    g1_samples: np.ndarray  # nondecreasing envelope of g1_raw
    sample: dict

    def g1(self, s: float) -> float:
        return g1_modulus(self, s).value

    def to_dict(self) -> dict:
        return {
            "Q1": self.Q1, "Q2": self.Q2, "Q3": self.Q3, "Q4": self.Q4,
            "g1_scales": self.g1_scales.tolist(),
            "g1_raw": self.g1_raw.tolist(),
            "g1_samples": self.g1_samples.tolist(),
            "sample": self.sample,
        }


class G1Value(NamedTuple):
    value: float
    extrapolated: bool


def g1_modulus(ub: UbConstants, s: float) -> G1Value:
    """Monotone piecewise-linear interpolation of the sampled remainder modulus."""
    if s < 0:
        raise ValueError("g1 is defined for s >= 0")
    if s == 0:
        return G1Value(0.0, False)
    xs = np.concatenate([[0.0], ub.g1_scales])
    ys = np.concatenate([[0.0], ub.g1_samples])
    if s <= xs[-1]:
        return G1Value(float(np.interp(s, xs, ys)), False)
    slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return G1Value(float(ys[-1] + slope * (s - xs[-1])), True)


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def estimate_ub_constants(engine: FlowEngine, sample: SampleSpec) -> UbConstants:
    space = engine.space
    n = engine.dim
    pts = _grid(sample.boxes, sample.points_per_axis)
    if pts.size == 0:
        raise ValueError("empty sample")
    pts = np.array([space.canonical(p) for p in pts])
    rng = np.random.default_rng(sample.seed)
    s_vals = np.asarray(sample.s_values, dtype=float)
    nz = s_vals[s_vals != 0]

    q1 = q2 = q3 = q4 = 0.0
    for x in pts:
        q2 = max(q2, float(np.linalg.norm(engine.field.eval(x))))
        fx, jx = engine.trajectory(x, s_vals, with_jac=True)
        q1 = max(q1, max(np.linalg.norm(j, 2) for j in jx))
        if nz.size:
            fz = engine.trajectory(x, nz)
            q3 = max(q3, max(space.distance(x, y) / abs(u) for y, u in zip(fz, nz)))
        for eps in sample.pair_offsets:
            y = space.exp(x, eps * _unit(rng, n))
            fy = engine.trajectory(y, s_vals)
            base = space.distance(x, y)
            q4 = max(q4, max(space.distance(a, b) for a, b in zip(fx, fy)) / base)

    # first-order Taylor remainder of (t, x) -> Phi(t, x)
    idx = rng.choice(len(pts), size=min(sample.g1_points, len(pts)), replace=False)
    times = np.asarray(sample.g1_times, dtype=float)
    scales = np.asarray(sample.g1_scales, dtype=float)
    if space.is_torus:
        # keep perturbed points inside one chart
        scales = scales[scales <= 0.4 * space.injectivity_radius]
    raw = np.zeros(scales.size)
    for i in idx:
        x = pts[i]
        phis, jacs = engine.trajectory(x, times, with_jac=True)
        speeds = [engine.field.eval(p) for p in phis]
        for _ in range(sample.g1_directions):
            lam = rng.uniform()
            sgn = rng.choice([-1.0, 1.0])
            u = _unit(rng, n)
            for a, sc in enumerate(scales):
                h1 = sgn * lam * sc
                h2 = (1.0 - lam) * sc * u
                y = space.exp(x, h2)
                for t, phi, jac, X in zip(times, phis, jacs, speeds):
                    moved = engine.flow_map(t + h1, y)
                    rem = space.difference(phi, moved) - h1 * X - jac @ h2
                    raw[a] = max(raw[a], float(np.linalg.norm(rem)))
    return UbConstants(
        Q1=float(q1), Q2=float(q2), Q3=float(q3), Q4=float(q4),
        g1_scales=scales, g1_raw=raw, g1_samples=np.maximum.accumulate(raw),
        sample=sample.describe(),
    )
