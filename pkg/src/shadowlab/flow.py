"""Fixed-step RK4 flow integration with the variational equation.

The state x and the matrix J = dPhi/dx are advanced together as one augmented
vector, so J is the exact derivative of the discrete RK4 map.  Off-grid times
are served by cubic Hermite interpolation between the two bracketing nodes.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .fields import VectorFieldSpec

_KERNELS = {}


class FlowError(RuntimeError):
    pass


def _make_kernel(func, jac, n):
    m_full = n + n * n

    @njit
    def rhs(y, out, with_jac, xbuf, D):
        for i in range(n):
            xbuf[i] = y[i]
        func(xbuf, out)
        if with_jac:
            jac(xbuf, D)
            for i in range(n):
                for j in range(n):
                    acc = 0.0
                    for k in range(n):
                        acc += D[i, k] * y[n + k * n + j]
                    out[n + i * n + j] = acc

    @njit
    def integrate(x0, times, h, with_jac):
        # times: nonnegative, ascending; h carries the direction
        m = m_full if with_jac else n
        y = np.empty(m)
        for i in range(n):
            y[i] = x0[i]
        if with_jac:
            for i in range(n):
                for j in range(n):
                    y[n + i * n + j] = 1.0 if i == j else 0.0
        k1 = np.empty(m)
        k2 = np.empty(m)
        k3 = np.empty(m)
        k4 = np.empty(m)
        tmp = np.empty(m)
        ynext = np.empty(m)
        xbuf = np.empty(n)
        D = np.empty((n, n))
        ah = abs(h)
        nt = times.shape[0]
        res = np.empty((nt, m))
        node = 0
        ok = True
        for it in range(nt):
            q = times[it] / ah
            target = int(math.floor(q + 1e-9))
            theta = q - target
            if theta < 1e-9:
                theta = 0.0
            while node < target:
                rhs(y, k1, with_jac, xbuf, D)
                for i in range(m):
                    tmp[i] = y[i] + 0.5 * h * k1[i]
                rhs(tmp, k2, with_jac, xbuf, D)
                for i in range(m):
                    tmp[i] = y[i] + 0.5 * h * k2[i]
                rhs(tmp, k3, with_jac, xbuf, D)
                for i in range(m):
                    tmp[i] = y[i] + h * k3[i]
                rhs(tmp, k4, with_jac, xbuf, D)
                for i in range(m):
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                node += 1
                if not np.isfinite(y[0]):
                    ok = False
                    break
            if not ok:
                break
            if theta == 0.0:
                for i in range(m):
                    res[it, i] = y[i]
                continue
            # one trial step to the next node, then Hermite interpolation
            rhs(y, k1, with_jac, xbuf, D)
            for i in range(m):
                tmp[i] = y[i] + 0.5 * h * k1[i]
            rhs(tmp, k2, with_jac, xbuf, D)
            for i in range(m):
                tmp[i] = y[i] + 0.5 * h * k2[i]
            rhs(tmp, k3, with_jac, xbuf, D)
            for i in range(m):
                tmp[i] = y[i] + h * k3[i]
            rhs(tmp, k4, with_jac, xbuf, D)
            for i in range(m):
                ynext[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            rhs(ynext, k2, with_jac, xbuf, D)
            th2 = theta * theta
            th3 = th2 * theta
            h00 = 2.0 * th3 - 3.0 * th2 + 1.0
            h10 = th3 - 2.0 * th2 + theta
            h01 = -2.0 * th3 + 3.0 * th2
            h11 = th3 - th2
            for i in range(m):
                res[it, i] = h00 * y[i] + h10 * h * k1[i] + h01 * ynext[i] + h11 * h * k2[i]
        return res, ok

    return integrate


def _kernel_for(field: VectorFieldSpec):
    key = id(field.func), id(field.jac)
    if key not in _KERNELS:
        _KERNELS[key] = _make_kernel(field.func, field.jac, field.dim)
    return _KERNELS[key]


class FlowEngine:
    """Time-t maps of a vector field.

    Immutable after construction.  ``horizon`` bounds |t| for every call.
    """

    def __init__(self, field: VectorFieldSpec, h: float = 1e-3, horizon: float = 1000.0):
        if not h > 0:
            raise ValueError("step must be positive")
        self.field = field
        self.space = field.space
        self.h = float(h)
        self.horizon = float(horizon)
        self._kernel = _kernel_for(field)

    @property
    def dim(self) -> int:
        return self.field.dim

    def __repr__(self):
        return f"FlowEngine({self.field.name!r}, h={self.h})"

    def _run(self, x, times, with_jac):
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        times = np.asarray(times, dtype=float)
        if np.any(np.abs(times) > self.horizon):
            raise FlowError(f"|t| exceeds the configured horizon {self.horizon}")
        n = self.dim
        m = n + n * n if with_jac else n
        out = np.empty((times.size, m))
        for sign in (1.0, -1.0):
            sel = np.nonzero(times * sign > 0)[0]
            if sel.size == 0:
                continue
            order = sel[np.argsort(np.abs(times[sel]), kind="stable")]
            res, ok = self._kernel(x, np.abs(times[order]), sign * self.h, with_jac)
            if not ok or not np.all(np.isfinite(res)):
                raise FlowError(f"non-finite state while integrating {self.field.name!r}")
            out[order] = res
        zero = np.nonzero(times == 0)[0]
        if zero.size:
            out[zero, :n] = x
            if with_jac:
                out[zero, n:] = np.eye(n).ravel()
        pts = np.array([self.space.canonical(p) for p in out[:, :n]])
        if with_jac:
            return pts, out[:, n:].reshape(-1, n, n)
        return pts

    def flow_map(self, t: float, x):
        """Phi(t, x)."""
        if t == 0:
            return self.space.canonical(np.array(x, dtype=float))
        return self._run(x, [t], False)[0]

    def flow_with_jacobian(self, t: float, x):
        """(Phi(t, x), dPhi(t, x)/dx) from the variational equation."""
        if t == 0:
            return self.space.canonical(np.array(x, dtype=float)), np.eye(self.dim)
        pts, jacs = self._run(x, [t], True)
        return pts[0], jacs[0]

    def trajectory(self, x, times, with_jac=False):
        """Phi(t, x) for many t in one integration pass per time direction."""
        return self._run(x, times, with_jac)


def flow_map(engine: FlowEngine, t, x):
    return engine.flow_map(t, x)


def flow_with_jacobian(engine: FlowEngine, t, x):
    return engine.flow_with_jacobian(t, x)
