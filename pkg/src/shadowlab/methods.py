"""Perturbation methods built around one orbit segment.

Everything is written in the shifted time u in which the method starts at
the identity: ``theta(0, x) = x``.  For u <= 1 - tau and for points outside
the ball B_r(p0) the method is the flow.  Around every integer time
j = 1 .. 2N (a "section" [j - tau, j + tau]) the state is blended towards a
target Omega_j built from the anchors of the base orbit; between sections it
is the flow again.  ``psi(t, x) = theta(t + N, x)`` is the same method with
orbit indices k = j - N in [-N, N].

kappa = 0 pins the state to p_hat_j + d z_j during a section.  kappa = 1 moves
the target with the linearized flow, so that the deviations from the anchors
obey the inhomogeneous linear recursion along the orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import FlowEngine
from .spaces import ChartError
from .ubconst import UbConstants

TRACK_CACHE_SIZE = 4096


class MethodError(ValueError):
    """Method parameters violate a construction constraint."""


def choose_g_tilde(d: float) -> float:
    """tau = d ** 1.5, with tau / d -> 0 and 100 tau < 1 - tau."""
    if not d > 0:
        raise MethodError("d must be positive")
    if d > 0.04:
        raise MethodError(f"d = {d} exceeds the cap 0.04 that keeps 100*tau well below 1 - tau")
    tau = d ** 1.5
    if not 100.0 * tau < 1.0 - tau:
        raise MethodError(f"tau = {tau} violates 100*tau < 1 - tau")
    return tau


# -- bump and blend ---------------------------------------------------------


def smoothstep(u):
    """Quintic smoothstep u^3 (10 - 15 u + 6 u^2), clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


@dataclass(frozen=True)
class BumpGamma:
    tau: float
    r: float

    def __post_init__(self):
        if not (self.tau > 0 and self.r > 0):
            raise ValueError("tau and r must be positive")
        if not 100.0 * self.tau < 1.0 - self.tau:
            raise ValueError("bump requires 100*tau < 1 - tau")

    def __call__(self, t, s):
        return gamma_eval(self, t, s)


def gamma_eval(b: BumpGamma, t, s):
    """gamma(t, s) on [-tau, tau] x [0, r]; equals 1 on [-tau/2, tau] x [0, r/2]."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(t) > b.tau) or np.any(s < 0) or np.any(s > b.r):
        raise ValueError("gamma is defined on [-tau, tau] x [0, r]")
    g = smoothstep((t + b.tau) / (0.5 * b.tau)) * smoothstep((b.r - s) / (0.5 * b.r))
    return g if g.ndim else float(g)


def interp_gamma(x, y, v, s, b: BumpGamma):
    """Gamma(x, y, v, s) = gamma(s, |v|) x + (1 - gamma(s, |v|)) y."""
    g = gamma_eval(b, s, min(float(np.linalg.norm(v)), b.r))
    return g * np.asarray(x, dtype=float) + (1.0 - g) * np.asarray(y, dtype=float)


# -- configuration ----------------------------------------------------------


@dataclass
class MethodConfig:
    d: float
    r: float
    N: int
    kappa: int
    z: np.ndarray  # (2N + 1, n); row k + N holds z_k
    base_point: np.ndarray
    tau: float = None

    def __post_init__(self):
        if self.kappa not in (0, 1):
            raise MethodError("kappa must be 0 or 1")
        if int(self.N) != self.N or self.N < 1:
            raise MethodError("N must be a positive integer")
        self.N = int(self.N)
        if not self.r > 0:
            raise MethodError("r must be positive")
        if self.tau is None:
            self.tau = choose_g_tilde(self.d)
        elif not 100.0 * self.tau < 1.0 - self.tau:
            raise MethodError(f"tau = {self.tau} violates 100*tau < 1 - tau")
        self.base_point = np.asarray(self.base_point, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.z.shape != (2 * self.N + 1, self.base_point.size):
            raise MethodError(f"z must have shape (2N+1, n) = {(2 * self.N + 1, self.base_point.size)}")
        norms = np.linalg.norm(self.z, axis=1)
        if np.any(norms > 1.0 + 1e-12):
            raise MethodError(f"|z_k| <= 1 violated (max {norms.max():.6g})")

    def to_dict(self) -> dict:
        return {
            "d": self.d, "tau": self.tau, "r": self.r, "N": self.N, "kappa": self.kappa,
            "base_point": self.base_point.tolist(), "z": self.z.tolist(),
        }


def precondition_bound(ub: UbConstants, cfg: MethodConfig) -> float:
    """10 Q1^(2N) (d + r + tau Q2): chart-size bound for the construction on a torus."""
    with np.errstate(over="ignore"):
        return float(10.0 * ub.Q1 ** (2 * cfg.N) * (cfg.d + cfg.r + cfg.tau * ub.Q2))


# -- the method -------------------------------------------------------------


class DMethodInstance:
    """Evaluatable method with anchors memoized along the base orbit.

    Anchor arrays are indexed by j = k + N: ``p_tilde[j] = theta(j, p0)``,
    ``p_hat[j]`` (``p_hat[0] = p0``) and ``A_tilde[j - 1]`` the derivative of
    Phi(1 - tau, .) at theta(j - 1 + tau, p0), for j = 1 .. 2N.
    """

    def __init__(self, engine: FlowEngine, config: MethodConfig):
        self.engine = engine
        self.config = config
        self.space = engine.space
        self.gamma = BumpGamma(config.tau, config.r)
        self.p0 = self.space.canonical(config.base_point)
        self._tracks = {}
        self._build_anchors()

    # parameters
    @property
    def N(self):
        return self.config.N

    @property
    def tau(self):
        return self.config.tau

    @property
    def d(self):
        return self.config.d

    @property
    def kappa(self):
        return self.config.kappa

    def _build_anchors(self):
        N, n = self.N, self.engine.dim
        tau = self.tau
        self.p_hat = np.empty((2 * N + 1, n))
        self.p_tilde = np.empty((2 * N + 1, n))
        self.A_tilde = np.empty((2 * N, n, n))
        self.X_hat = np.empty((2 * N + 1, n))
        self.p_hat[0] = self.p0
        self.p_tilde[0] = self.p0
        self.X_hat[0] = self.engine.field.eval(self.p0)
        T = self.p_tilde
        U = np.empty_like(T)
        U[0] = self.engine.flow_map(tau, self.p0)
        zero = np.zeros(n)
        for j in range(1, 2 * N + 1):
            pts, jacs = self.engine.trajectory(U[j - 1], [1.0 - tau, 1.0], with_jac=True)
            self.p_hat[j] = pts[0]
            self.A_tilde[j - 1] = jacs[0]
            self.X_hat[j] = self.engine.field.eval(pts[0])
            T[j] = self._blend(j, 0.0, zero, T[j - 1], pts[0])
            U[j] = self._blend(j, tau, zero, T[j - 1], pts[1])
        self._tracks[self.p0.tobytes()] = (T.copy(), U)

    # chart data for a point
    def _offset(self, x):
        """(v, inside) with v the displacement from p0."""
        v = self.space.difference(self.p0, x)
        return v, float(np.linalg.norm(v)) < self.config.r

    def _omega_vec(self, j, s, t_prev):
        """Omega_j(s, v) - p_hat_j as a tangent vector at p_hat_j; t_prev = theta(j-1, x)."""
        vec = self.d * self.config.z[j]
        if self.kappa:
            dev = self.space.log(self.p_hat[j - 1], t_prev)
            vec = vec + self.A_tilde[j - 1] @ dev + self.X_hat[j] * s
        return vec

    def _blend(self, j, s, v, t_prev, flowed):
        sp = self.space
        ph = self.p_hat[j]
        s = min(max(s, -self.tau), self.tau)
        g = gamma_eval(self.gamma, s, min(float(np.linalg.norm(v)), self.config.r))
        if g == 0.0:
            return sp.canonical(flowed)
        om = self._omega_vec(j, s, t_prev)
        fv = sp.log(ph, flowed)
        return sp.exp(ph, g * om + (1.0 - g) * fv)

    def track(self, x):
        """(T, U): T[j] = theta(j, x), U[j] = theta(j + tau, x), j = 0 .. 2N."""
        x = self.space.canonical(np.asarray(x, dtype=float))
        key = x.tobytes()
        hit = self._tracks.get(key)
        if hit is not None:
            return hit
        v, inside = self._offset(x)
        N, tau = self.N, self.tau
        T = np.empty((2 * N + 1, x.size))
        U = np.empty_like(T)
        if not inside:
            pts = self.engine.trajectory(x, np.concatenate([np.arange(2 * N + 1), np.arange(2 * N + 1) + tau]))
            T[:], U[:] = pts[: 2 * N + 1], pts[2 * N + 1:]
        else:
            T[0] = x
            U[0] = self.engine.flow_map(tau, x)
            for j in range(1, 2 * N + 1):
                a, b = self.engine.trajectory(U[j - 1], [1.0 - tau, 1.0])
                T[j] = self._blend(j, 0.0, v, T[j - 1], a)
                U[j] = self._blend(j, tau, v, T[j - 1], b)
        if len(self._tracks) >= TRACK_CACHE_SIZE:
            self._tracks.clear()
        self._tracks[key] = (T, U)
        return T, U

    def _locate(self, u):
        """('flow', None) before the first section; ('section', j) or ('gap', j)."""
        N, tau = self.N, self.tau
        if u <= 1.0 - tau:
            return "flow", None
        j = int(round(u))
        if 1 <= j <= 2 * N and abs(u - j) <= tau:
            return "section", j
        return "gap", min(int(math.floor(u)), 2 * N)

    def theta_many(self, times, x):
        """theta(u, x) for an array of shifted times, grouping flow calls by base point."""
        x = self.space.canonical(np.asarray(x, dtype=float))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.size, x.size))
        v, inside = self._offset(x)
        if not inside:
            return self.engine.trajectory(x, times)
        T, U = self.track(x)
        groups = {}
        for i, u in enumerate(times):
            kind, j = self._locate(u)
            if kind == "flow":
                groups.setdefault(-1, []).append((i, u, None))
            elif kind == "section":
                groups.setdefault(j - 1, []).append((i, 1.0 - self.tau + (u - j), j))
            else:
                groups.setdefault(j, []).append((i, u - j - self.tau, None))
        for base, items in groups.items():
            start = x if base < 0 else U[base]
            pts = self.engine.trajectory(start, [it[1] for it in items])
            for (i, _, j), p in zip(items, pts):
                if j is None:
                    out[i] = p
                else:
                    out[i] = self._blend(j, times[i] - j, v, T[j - 1], p)
        return out

    def theta(self, u, x):
        return self.theta_many([u], x)[0]

    def psi(self, t, x):
        return self.theta(t + self.N, x)

    def __call__(self, u, x):
        return self.theta(u, x)

    def anchor_deviation(self) -> np.ndarray:
        """|p_tilde_j - p_hat_j| for j = 0 .. 2N."""
        return np.array([self.space.distance(a, b) for a, b in zip(self.p_hat, self.p_tilde)])

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "flow": self.engine.field.name,
            "p_hat": self.p_hat.tolist(),
            "p_tilde": self.p_tilde.tolist(),
            "max_anchor_deviation": float(self.anchor_deviation().max()),
        }


def build_method(engine: FlowEngine, config: MethodConfig, ub: UbConstants = None,
                 strict: bool = True) -> DMethodInstance:
    """Construct the method and its anchors in one forward pass.

    On a torus with ``strict`` the chart-size bound must be below the
    injectivity radius; ``ub`` is then required.  With ``strict=False`` the
    bound is skipped and every chart map is checked at evaluation time.
    """
    sp = engine.space
    if config.base_point.shape != (engine.dim,):
        raise MethodError("base point dimension does not match the flow")
    if sp.is_torus:
        if config.r >= sp.injectivity_radius:
            raise MethodError(f"r = {config.r} must be below the injectivity radius {sp.injectivity_radius}")
        if strict:
            if ub is None:
                raise MethodError("torus construction needs UB constants to check the chart bound")
            bound = precondition_bound(ub, config)
            if not bound < sp.injectivity_radius:
                raise MethodError(
                    f"chart bound 10*Q1^(2N)*(d + r + tau*Q2) = {bound:.6g} is not below "
                    f"the injectivity radius {sp.injectivity_radius}"
                )
    try:
        return DMethodInstance(engine, config)
    except ChartError as exc:
        raise MethodError(f"anchor construction left the chart: {exc}") from None


def omega_eval(inst: DMethodInstance, k: int, s: float, v) -> np.ndarray:
    """Target point Omega_{k+1}(s, v) for orbit index k in [-N, N-1]."""
    N = inst.N
    if not -N <= k <= N - 1:
        raise ValueError(f"k must lie in [-N, N-1] = [{-N}, {N - 1}]")
    if abs(s) > inst.tau:
        raise ValueError("|s| must not exceed tau")
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) > inst.config.r:
        raise ValueError("|v| must not exceed r")
    j = k + N + 1
    x = inst.space.exp(inst.p0, v)
    T, _ = inst.track(x)
    return inst.space.exp(inst.p_hat[j], inst._omega_vec(j, s, T[j - 1]))
