"""Linearized data along an orbit of the time-one map.

For p_k = Phi(k, p) the frame at k holds X_k = X(p_k), A_k = dPhi(1, .)(p_k),
the orthogonal projection P_k onto the normal space V_k = X_k^perp, an
orthonormal basis E_k of V_k, and the reduced normal map
B_k = E_{k+1}^T P_{k+1} A_k E_k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import RestPointError
from .flow import FlowEngine


@dataclass(frozen=True, eq=False)
class OrbitFrame:
    k: int
    p: np.ndarray
    X: np.ndarray
    A: np.ndarray
    P: np.ndarray
    E: np.ndarray
    B: np.ndarray = None  # None for the last frame of a window


def normal_basis(X) -> np.ndarray:
    """Orthonormal basis of X^perp from a Householder reflection.

    The reflection maps X/|X| to a multiple of e_m, m the index of the largest
    component of X; the remaining columns span the normal space.
    """
    X = np.asarray(X, dtype=float)
    n = X.size
    if n < 2:
        raise ValueError("the normal space is trivial in dimension 1")
    xh = X / np.linalg.norm(X)
    m = int(np.argmax(np.abs(xh)))
    u = xh.copy()
    u[m] += 1.0 if xh[m] >= 0 else -1.0
    H = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    return np.delete(H, m, axis=1)


def projection(X) -> np.ndarray:
    xh = np.asarray(X, dtype=float) / np.linalg.norm(X)
    return np.eye(xh.size) - np.outer(xh, xh)


def sample_orbit_frames(engine: FlowEngine, p, N: int) -> list:
    """Frames k = -N .. N around p, one variational integration per unit step."""
    field = engine.field
    floor = 0.5 * field.nonsingular_margin
    pts = {0: engine.space.canonical(np.asarray(p, dtype=float))}
    jac = {}
    for k in range(0, N):
        pts[k + 1], jac[k] = engine.flow_with_jacobian(1.0, pts[k])
    for k in range(0, -N, -1):
        pts[k - 1] = engine.flow_map(-1.0, pts[k])
        # derivative of the forward map at the new point
        _, jac[k - 1] = engine.flow_with_jacobian(1.0, pts[k - 1])
    _, jac[N] = engine.flow_with_jacobian(1.0, pts[N])

    raw = []
    for k in range(-N, N + 1):
        X = field.eval(pts[k])
        if np.linalg.norm(X) < floor:
            raise RestPointError(
                f"|X(p_{k})| = {np.linalg.norm(X):.3g} is below half the nonsingular margin"
            )
        raw.append((k, pts[k], X, jac[k], projection(X), normal_basis(X)))
    frames = []
    for i, (k, pk, X, A, P, E) in enumerate(raw):
        B = None
        if i + 1 < len(raw):
            E1, P1 = raw[i + 1][5], raw[i + 1][4]
            B = E1.T @ P1 @ A @ E
        for a in (pk, X, A, P, E) + ((B,) if B is not None else ()):
            a.flags.writeable = False
        frames.append(OrbitFrame(k, pk, X, A, P, E, B))
    return frames


def check_frame_identities(frames) -> dict:
    """Max relative errors of A_k X_k = X_{k+1} and P_{k+1} A_k = P_{k+1} A_k P_k."""
    e1 = e2 = e3 = 0.0
    for f, g in zip(frames[:-1], frames[1:]):
        e1 = max(e1, np.linalg.norm(f.A @ f.X - g.X) / np.linalg.norm(g.X))
        lhs = g.P @ f.A
        e2 = max(e2, np.linalg.norm(lhs - lhs @ f.P, 2) / np.linalg.norm(f.A, 2))
        if f.B is not None:
            e3 = max(e3, np.abs(f.B - g.E.T @ f.A @ f.E).max())
    return {"flow_invariance": float(e1), "projection_commutation": float(e2),
            "reduced_form": float(e3), "frames": len(frames)}


def frames_to_dict(frames) -> list:
    return [
        {
            "k": f.k, "p": f.p.tolist(), "X": f.X.tolist(), "A": f.A.tolist(),
            "P": f.P.tolist(), "E": f.E.tolist(),
            "B": None if f.B is None else f.B.tolist(),
        }
        for f in frames
    ]


# -- inhomogeneities --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InhomSeq:
    kind: str           # "full" or "normal"
    vectors: np.ndarray  # (2N + 1, n), row k + N

    def __post_init__(self):
        if self.kind not in ("full", "normal"):
            raise ValueError("kind must be 'full' or 'normal'")
        if np.any(np.linalg.norm(self.vectors, axis=1) > 1.0 + 1e-12):
            raise ValueError("inhomogeneity entries must have norm <= 1")


def zero_inhom(frames, kind="normal") -> InhomSeq:
    return InhomSeq(kind, np.zeros((len(frames), frames[0].p.size)))


def constant_normal(frames) -> InhomSeq:
    """b_k = first normal basis vector at p_k."""
    return InhomSeq("normal", np.array([f.E[:, 0] for f in frames]))


def random_inhom(frames, seed, kind="normal", unit=True) -> InhomSeq:
    """Random entries; normal ones lie in V_k.  ``unit`` puts them on the sphere."""
    rng = np.random.default_rng(seed)
    out = []
    for f in frames:
        if kind == "normal":
            c = rng.standard_normal(f.E.shape[1])
            vec = f.E @ c
        else:
            vec = rng.standard_normal(f.p.size)
        vec = vec / np.linalg.norm(vec)
        if not unit:
            vec = vec * rng.uniform() ** (1.0 / vec.size)
        out.append(vec)
    return InhomSeq(kind, np.array(out))
