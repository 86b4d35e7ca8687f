"""Piecewise-linear time reparametrizations and the classes Rep(delta).

A reparametrization is an increasing homeomorphism of the real line with
alpha(0) = 0.  Here it is stored as knots and values with linear
extrapolation by the terminal slopes, so every slope is explicit and
membership in Rep(delta) is decided exactly from the slopes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

MEMBERSHIP_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class Reparam:
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.array(self.knots, dtype=float)
        v = np.array(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise ValueError("knots and values must be 1-D arrays of equal length >= 2")
        if not (np.all(np.diff(k) > 0) and np.all(np.diff(v) > 0)):
            raise ValueError("knots and values must be strictly increasing")
        zero = np.nonzero(k == 0.0)[0]
        if zero.size != 1 or v[zero[0]] != 0.0:
            raise ValueError("a reparametrization needs a knot at 0 with value 0")
        k.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls, horizon: float = 1.0) -> "Reparam":
        return cls(np.array([-horizon, 0.0, horizon]), np.array([-horizon, 0.0, horizon]))

    @classmethod
    def linear(cls, slope: float, horizon: float = 1.0) -> "Reparam":
        k = np.array([-horizon, 0.0, horizon])
        return cls(k, slope * k)

    @classmethod
    def from_slopes(cls, knots, slopes) -> "Reparam":
        """Integrate segment slopes from the knot at 0."""
        knots = np.asarray(knots, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        if slopes.size != knots.size - 1:
            raise ValueError("need one slope per segment")
        vals = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
        i0 = int(np.nonzero(knots == 0.0)[0][0])
        return cls(knots, vals - vals[i0])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k, v, sl = self.knots, self.values, self.slopes
        out = np.interp(t, k, v)
        out = np.where(t < k[0], v[0] + sl[0] * (t - k[0]), out)
        out = np.where(t > k[-1], v[-1] + sl[-1] * (t - k[-1]), out)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Reparam":
        return cls(np.asarray(data["knots"]), np.asarray(data["values"]))

    def __eq__(self, other):
        if not isinstance(other, Reparam):
            return NotImplemented
        return np.array_equal(self.knots, other.knots) and np.array_equal(self.values, other.values)

    __hash__ = None


class Membership(NamedTuple):
    member: bool
    max_deviation: float
    segment: Optional[tuple]  # (t, s) endpoints of the first violating segment


def rep_membership(alpha: Reparam, delta: float, atol: float = MEMBERSHIP_ATOL) -> Membership:
    """Decide alpha in Rep(delta): every slope must lie in [1 - delta, 1 + delta].

    For a piecewise-linear map the difference quotients are convex combinations
    of slopes, so the slope band is both necessary and sufficient.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    dev = np.abs(alpha.slopes - 1.0)
    bad = np.nonzero(dev > delta + atol)[0]
    seg = None
    if bad.size:
        i = int(bad[0])
        seg = (float(alpha.knots[i]), float(alpha.knots[i + 1]))
    return Membership(bad.size == 0, float(dev.max()), seg)


def rep_invert(alpha: Reparam) -> Reparam:
    """Functional inverse; knots and values swap roles."""
    return Reparam(alpha.values.copy(), alpha.knots.copy())


def inverse_rep_bound(delta: float) -> float:
    """Class of the inverse of a Rep(delta) map: 2 delta, valid for delta <= 1/2.

    Exact worst case is delta / (1 - delta); it exceeds 2 delta above 1/2.
    """
    if delta > 0.5:
        warnings.warn(f"delta = {delta} > 1/2: the 2*delta bound for inverses does not hold",
                      RuntimeWarning, stacklevel=2)
    return 2.0 * delta


def compose(alpha: Reparam, beta: Reparam) -> Reparam:
    """alpha o beta, exact on the union of the breakpoints."""
    pre = rep_invert(beta)(alpha.knots)
    knots = np.union1d(beta.knots, np.atleast_1d(pre))
    # drop near-duplicates produced by round-off in the inverse
    keep = np.concatenate([[True], np.diff(knots) > 1e-12 * max(1.0, np.abs(knots).max())])
    knots = knots[keep]
    knots[np.argmin(np.abs(knots))] = 0.0
    return Reparam(knots, np.atleast_1d(alpha(beta(knots))) - float(alpha(beta(0.0))))


def rep_random(delta: float, horizon: float, seed) -> Reparam:
    """Integer knots on [-horizon, horizon], slopes i.i.d. uniform in [1-delta, 1+delta]."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    m = max(1, int(np.ceil(horizon)))
    knots = np.arange(-m, m + 1, dtype=float)
    rng = np.random.default_rng(seed)
    slopes = rng.uniform(1.0 - delta, 1.0 + delta, size=knots.size - 1)
    return Reparam.from_slopes(knots, slopes)
