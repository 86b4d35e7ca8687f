"""Phase spaces: Euclidean space and the flat torus R^n / Z^n.

Points on the torus are stored as coordinates canonicalized to [0, 1) per
axis.  Because the metric is flat, the exponential map and its inverse are
plain coordinate shifts, so a single code path serves both spaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ChartError(ValueError):
    """Raised when a chart map is requested beyond the injectivity radius."""


@dataclass(frozen=True)
class Space:
    kind: str  # "euclidean" or "torus"
    dim: int

    def __post_init__(self):
        if self.kind not in ("euclidean", "torus"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be a positive integer")

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def injectivity_radius(self) -> float:
        # unit periods in every direction
        return 0.5 if self.is_torus else np.inf

    def canonical(self, x):
        x = np.asarray(x, dtype=float)
        if not self.is_torus:
            return x
        y = np.mod(x, 1.0)
        # np.mod can return exactly 1.0 for tiny negative inputs
        y[y >= 1.0] = 0.0
        return y

    def _wrap(self, diff):
        # representative in (-1/2, 1/2]
        return -(np.mod(-diff + 0.5, 1.0) - 0.5)

    def difference(self, x, y):
        """Shortest displacement from ``x`` to ``y`` (no radius check)."""
        diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return self._wrap(diff) if self.is_torus else diff

    def distance(self, x, y) -> float:
        return float(np.linalg.norm(self.difference(x, y)))

    def log(self, x, y):
        """Inverse exponential map at ``x``; the tangent vector pointing to ``y``."""
        v = self.difference(x, y)
        if self.is_torus and np.linalg.norm(v) >= self.injectivity_radius:
            raise ChartError(
                f"distance {np.linalg.norm(v):.6g} exceeds injectivity radius "
                f"{self.injectivity_radius}"
            )
        return v

    def exp(self, x, v):
        return self.canonical(np.asarray(x, dtype=float) + np.asarray(v, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


def Euclidean(dim: int) -> Space:
    return Space("euclidean", dim)


def FlatTorus(dim: int) -> Space:
    return Space("torus", dim)


def chart_log(space: Space, x, y):
    return space.log(x, y)
