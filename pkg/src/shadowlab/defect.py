"""Defect measurement for methods, with the per-case bounds of the construction.

The defect of a method Theta at (t, s) along the base point p0 is

    delta(t, s) = |Theta(t + s, p0) - Phi(s, Theta(t, p0))|.

Sections are the closed intervals [j - tau, j + tau], j = 1 .. 2N, in the
shifted time of :mod:`shadowlab.methods`.  Each sample (t, s) with s >= 0
gets one of six labels by where t and t + s sit relative to the sections.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import nnls

from .flow import FlowEngine
from .methods import DMethodInstance
from .ubconst import UbConstants

CASES = (
    "flow-flow-short",        # both outside sections, s < 2 tau
    "flow-section",           # t outside, t + s inside
    "flow-flow-long",         # both outside, s >= 2 tau
    "section-section-short",  # both inside, s < 2 tau
    "section-flow",           # t inside, t + s outside
    "section-section-long",   # both inside, s >= 2 tau
)


def in_section(t: float, tau: float, N: int) -> bool:
    j = int(round(t))
    return 1 <= j <= 2 * N and abs(t - j) <= tau


def classify_case(t: float, s: float, tau: float, N: int) -> str:
    """Label of the pair (t, s), s >= 0.  Section endpoints count as inside."""
    if s < 0:
        raise ValueError("classify_case expects s >= 0; mirror negative offsets first")
    a = in_section(t, tau, N)
    b = in_section(t + s, tau, N)
    short = s < 2.0 * tau
    if not a and not b:
        return CASES[0] if short else CASES[2]
    if not a:
        return CASES[1]
    if not b:
        return CASES[4]
    return CASES[3] if short else CASES[5]


# -- bounds -----------------------------------------------------------------


@dataclass
class BoundTerms:
    """Ingredients of the case bounds for one method."""

    Q1: float
    Q2: float
    Q3: float
    Q4: float
    g1: Callable[[float], float]
    d: float
    tau: float
    kappa: int
    e_max: float  # max |p_tilde - p_hat| along the base orbit

    def base(self) -> float:
        """Bound for a flow stretch ending inside a section."""
        if self.kappa:
            return self.g1(self.tau) + self.Q1 * self.e_max + self.d
        return self.Q3 * self.tau + self.d

    def case_bound(self, case: str) -> float:
        b, q4 = self.base(), self.Q4
        if case == CASES[0]:
            return 0.0
        if case == CASES[1]:
            return b
        if case == CASES[2]:
            return q4 * b
        if case == CASES[3]:
            return b + q4 * b
        if case == CASES[4]:
            return q4 * (b + q4 * b)
        if case == CASES[5]:
            g = self.g1(self.tau + self.e_max)
            if self.kappa:
                return b + self.Q1 * g + g
            return b + self.Q1 * (self.Q2 * self.tau + g) + g
        raise KeyError(case)

    def total(self) -> float:
        return max(self.case_bound(c) for c in CASES)


def bound_terms(inst: DMethodInstance, ub: UbConstants) -> BoundTerms:
    return BoundTerms(
        Q1=ub.Q1, Q2=ub.Q2, Q3=ub.Q3, Q4=ub.Q4, g1=ub.g1,
        d=inst.d, tau=inst.tau, kappa=inst.kappa,
        e_max=float(inst.anchor_deviation().max()),
    )


# -- grids and reports ------------------------------------------------------


@dataclass
class DefectGrid:
    """Sampling plan for (t, s) in shifted time.

    t covers [1 - tau, 2N + 1] uniformly plus offsets around every section;
    s covers [0, 1] uniformly, plus offsets that land on the following
    sections and short offsets below 2 tau.  A fraction of pairs is repeated
    with negative s.
    """

    t_uniform: int = 60
    s_uniform: int = 24
    section_offsets: tuple = (-1.0, -0.75, -0.5, -0.25, 0.0, 0.5, 1.0)  # in units of tau
    landing_offsets: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    short_offsets: tuple = (0.25, 0.5, 1.0, 1.5, 1.99)
    negative_fraction: float = 0.1
    seed: int = 0

    def pairs(self, tau: float, N: int) -> np.ndarray:
        ts = list(np.linspace(1.0 - tau, 2 * N + 1.0, self.t_uniform))
        for j in range(1, 2 * N + 1):
            ts.extend(j + o * tau for o in self.section_offsets)
            ts.append(j + 0.5)
        ts = np.unique(np.round(ts, 15))
        out = []
        for t in ts:
            ss = list(np.linspace(0.0, 1.0, self.s_uniform))
            ss.extend(o * tau for o in self.short_offsets)
            for j in (math.floor(t) + 1, math.floor(t) + 2):
                ss.extend(j + o * tau - t for o in self.landing_offsets)
            for s in np.unique(np.round(ss, 15)):
                if 0.0 <= s <= 1.0:
                    out.append((t, s))
        pairs = np.array(out)
        rng = np.random.default_rng(self.seed)
        m = int(round(self.negative_fraction * len(pairs)))
        if m:
            pick = pairs[rng.choice(len(pairs), size=m, replace=False)]
            # (t + s, -s): same two instants, traversed backwards
            neg = np.column_stack([pick[:, 0] + pick[:, 1], -pick[:, 1]])
            pairs = np.concatenate([pairs, neg[neg[:, 1] < 0]])
        return pairs


@dataclass
class DefectReport:
    t: np.ndarray
    s: np.ndarray
    case: list
    delta: np.ndarray
    bound: np.ndarray
    params: dict
    section_convention: str = "closed intervals [j - tau, j + tau]; endpoints count as inside"
    case_sup: dict = field(default_factory=dict)
    sup: float = 0.0
    C_bound: float = 0.0

    def __post_init__(self):
        self.case_sup = {c: 0.0 for c in CASES}
        for c, dl in zip(self.case, self.delta):
            self.case_sup[c] = max(self.case_sup[c], float(dl))
        self.sup = float(self.delta.max()) if self.delta.size else 0.0

    @property
    def violations(self) -> np.ndarray:
        """Indices where the defect exceeds its case bound."""
        return np.nonzero(self.delta > self.bound * (1.0 + 1e-9) + 1e-12)[0]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "s", "case", "delta", "bound"])
            for row in zip(self.t, self.s, self.case, self.delta, self.bound):
                w.writerow([repr(float(row[0])), repr(float(row[1])), row[2],
                            repr(float(row[3])), repr(float(row[4]))])

    def summary(self) -> dict:
        counts = {c: int(sum(1 for x in self.case if x == c)) for c in CASES}
        return {
            "params": self.params,
            "section_convention": self.section_convention,
            "samples": int(self.delta.size),
            "case_counts": counts,
            "case_sup": self.case_sup,
            "sup": self.sup,
            "C_bound": self.C_bound,
            "bound_violations": int(self.violations.size),
        }


def measure_defect(inst: DMethodInstance, grid: DefectGrid, ub: UbConstants = None) -> DefectReport:
    """Sample delta(t, s) along p0, label each sample and attach its case bound.

    Negative s is labelled by the mirrored pair (t + s, -s); its bound is the
    mirrored bound times Q4.  Without ``ub`` the bounds are NaN.
    """
    sp = inst.space
    eng = inst.engine
    p0 = inst.p0
    if ub is None:
        nan = float("nan")
        terms = BoundTerms(nan, nan, nan, nan, lambda s: nan, inst.d, inst.tau, inst.kappa,
                           float(inst.anchor_deviation().max()))
    else:
        terms = bound_terms(inst, ub)
    pairs = grid.pairs(inst.tau, inst.N)
    ts = np.unique(pairs[:, 0])
    at_t = dict(zip(ts, inst.theta_many(ts, p0)))
    at_ts = inst.theta_many(pairs[:, 0] + pairs[:, 1], p0)
    delta = np.empty(len(pairs))
    cases, bounds = [], np.empty(len(pairs))
    by_t = {}
    for i, (t, s) in enumerate(pairs):
        by_t.setdefault(t, []).append(i)
    for t, idx in by_t.items():
        svals = pairs[idx, 1]
        flowed = eng.trajectory(at_t[t], svals)
        for i, f in zip(idx, flowed):
            delta[i] = sp.distance(at_ts[i], f)
    for i, (t, s) in enumerate(pairs):
        if s >= 0:
            c = classify_case(t, s, inst.tau, inst.N)
            bounds[i] = terms.case_bound(c)
        else:
            c = classify_case(t + s, -s, inst.tau, inst.N)
            bounds[i] = terms.Q4 * terms.case_bound(c)
        cases.append(c)
    params = {
        "flow": eng.field.name, "d": inst.d, "tau": inst.tau, "r": inst.config.r,
        "N": inst.N, "kappa": inst.kappa, "e_max": terms.e_max,
        "Q1": terms.Q1, "Q2": terms.Q2, "Q3": terms.Q3, "Q4": terms.Q4,
    }
    rep = DefectReport(pairs[:, 0], pairs[:, 1], cases, delta, bounds, params)
    rep.C_bound = terms.total()
    return rep


# -- fitting the totals -----------------------------------------------------


class BoundFit(NamedTuple):
    kappa: int
    K: tuple        # (K_d, K_other): coefficients of d and of the second term
    rel_residual: float
    fitted: np.ndarray
    observed: np.ndarray


def fit_defect_bounds(d_values, sups, kappa: int, g1=None) -> BoundFit:
    """Fit sup(d) ~ K_a d + K_b h(d) with K >= 0, minimizing relative residuals.

    h(d) = tau = d^1.5 for kappa = 0 and h(d) = g1(d^1.5) for kappa = 1.
    """
    d = np.asarray(d_values, dtype=float)
    y = np.asarray(sups, dtype=float)
    tau = d ** 1.5
    if kappa:
        if g1 is None:
            raise ValueError("kappa = 1 fit needs the g1 modulus")
        h = np.array([g1(t) for t in tau])
    else:
        h = tau
    design = np.column_stack([d, h]) / y[:, None]
    K, _ = nnls(design, np.ones_like(y))
    fitted = np.column_stack([d, h]) @ K
    rel = float(np.max(np.abs(fitted - y) / y))
    return BoundFit(kappa, (float(K[0]), float(K[1])), rel, fitted, y)


# -- generic method check ---------------------------------------------------


class MethodCheck(NamedTuple):
    passed: bool
    max_defect: float
    violation: Optional[tuple]  # (t, s, x) of the first failure


def verify_dmethod(method, engine: FlowEngine, d: float, times, offsets, points) -> MethodCheck:
    """Check method(0, x) = x and dist(method(t+s, x), Phi(s, method(t, x))) < d.

    ``method(t, x)`` is any callable; the grid is the product of ``times``,
    ``offsets`` (s in [-1, 1]) and ``points``.
    """
    sp = engine.space
    worst = 0.0
    first = None
    for x in points:
        x = sp.canonical(np.asarray(x, dtype=float))
        if sp.distance(method(0.0, x), x) > 1e-12 and first is None:
            first = (0.0, 0.0, x.tolist())
        for t in times:
            mt = method(t, x)
            flowed = engine.trajectory(mt, offsets)
            for s, f in zip(offsets, flowed):
                dl = sp.distance(method(t + s, x), f)
                worst = max(worst, dl)
                if not dl < d and first is None:
                    first = (float(t), float(s), x.tolist())
    return MethodCheck(first is None, worst, first)
