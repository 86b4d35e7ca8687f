"""Bounded solutions of finite-window difference systems along an orbit.

Two systems are solved on the window k = -N .. N:

    normal system   v_{k+1} = B_k v_k + b_{k+1},                 v_k in V_k
    full system     x_{k+1} = A_k x_k + X(p_{k+1}) s_k + z_{k+1}

Both are underdetermined (the initial state and the s_k are free).  The
default solver returns the minimum-norm solution of the stacked affine
constraints, computed from a QR factorization of the transposed constraint
matrix.  A linear-programming solver gives the minimal max-norm solution and
serves as an exhaustive reference on small instances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.optimize import linprog, minimize_scalar

from .frames import InhomSeq, check_frame_identities, constant_normal, random_inhom, sample_orbit_frames
from .flow import FlowEngine

RANK_RTOL = 1e-12


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class ReductionError(RuntimeError):
    pass


@dataclass
class BoundedSolveResult:
    x: np.ndarray          # (2N + 1, m): x_k (full system) or v_k coordinates in E_k
    s: np.ndarray          # (2N,) for the full system, else None
    sup_norm: float        # max_k |x_k| (Euclidean)
    residual: float        # max constraint violation
    solver: str
    max_norm_sup: float = None  # max_k max_i |x_k,i|

    def __post_init__(self):
        if self.max_norm_sup is None:
            self.max_norm_sup = float(np.abs(self.x).max()) if self.x.size else 0.0

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(), "s": None if self.s is None else self.s.tolist(),
            "sup_norm": self.sup_norm, "max_norm_sup": self.max_norm_sup,
            "residual": self.residual, "solver": self.solver,
        }


def min_norm_solution(C: np.ndarray, rhs: np.ndarray):
    """Minimum-norm y with C y = rhs, for C of full row rank."""
    m = C.shape[0]
    Q, R = qr(C.T, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size < m or diag.min() <= RANK_RTOL * max(diag.max(), 1.0):
        raise RankDeficiencyError(
            f"constraint matrix is rank deficient (smallest pivot {diag.min():.3g})"
        )
    return Q @ solve_triangular(R, rhs, trans="T")


def _stack_normal(Bs, cs):
    """Constraints v_{k+1} - B_k v_k = c_{k+1}; unknowns v_{-N} .. v_N stacked."""
    K = len(Bs)
    m = cs.shape[1]
    C = np.zeros((K * m, (K + 1) * m))
    for i, B in enumerate(Bs):
        C[i * m:(i + 1) * m, i * m:(i + 1) * m] = -B
        C[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = np.eye(m)
    return C, cs[1:].ravel()


def solve_window(Bs, cs, solver: str = "least-squares") -> BoundedSolveResult:
    """Bounded solution of v_{k+1} = B_k v_k + c_{k+1}, k = 0 .. K-1.

    ``Bs`` has K square blocks, ``cs`` has K + 1 rows (row 0 is unused).
    """
    Bs = [np.atleast_2d(np.asarray(B, dtype=float)) for B in Bs]
    cs = np.asarray(cs, dtype=float)
    if cs.ndim == 1:
        cs = cs[:, None]
    if len(Bs) + 1 != cs.shape[0]:
        raise ValueError("need one more inhomogeneity row than maps")
    m = cs.shape[1]
    C, rhs = _stack_normal(Bs, cs)
    if solver == "least-squares":
        y = min_norm_solution(C, rhs)
    elif solver == "minimax":
        y = _minimax(C, rhs, m)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    v = y.reshape(-1, m)
    res = float(np.abs(C @ y - rhs).max()) if rhs.size else 0.0
    return BoundedSolveResult(v, None, float(np.linalg.norm(v, axis=1).max()), res, solver)


def _minimax(C, rhs, m):
    """min t subject to C y = rhs and |y_i| <= t (max norm per component)."""
    nv = C.shape[1]
    cost = np.zeros(nv + 1)
    cost[-1] = 1.0
    eye = np.eye(nv)
    A_ub = np.block([[eye, -np.ones((nv, 1))], [-eye, -np.ones((nv, 1))]])
    b_ub = np.zeros(2 * nv)
    A_eq = np.hstack([C, np.zeros((C.shape[0], 1))])
    out = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=rhs,
                  bounds=[(None, None)] * (nv + 1), method="highs")
    if out.status != 0:
        raise RuntimeError(f"minimax solve failed: {out.message}")
    return out.x[:nv]


def _normal_coords(frames, b: InhomSeq):
    cs = []
    projected = False
    for f, vec in zip(frames, b.vectors):
        c = f.E.T @ vec
        if np.linalg.norm(f.E @ c - vec) > 1e-10 * max(1.0, np.linalg.norm(vec)):
            projected = True
        cs.append(c)
    if projected:
        warnings.warn("inhomogeneity had components along the flow; projected onto V_k",
                      RuntimeWarning, stacklevel=3)
    return np.array(cs)


def solve_normal_system(frames, b: InhomSeq, solver: str = "least-squares") -> BoundedSolveResult:
    """Minimal-norm bounded solution of v_{k+1} = B_k v_k + b_{k+1} in E_k coordinates."""
    if len(b.vectors) != len(frames):
        raise ValueError("inhomogeneity length must match the number of frames")
    cs = _normal_coords(frames, b)
    return solve_window([f.B for f in frames[:-1]], cs, solver)


def solve_shift_system(frames, z: InhomSeq) -> BoundedSolveResult:
    """Minimal-norm {x_k}, {s_k} of x_{k+1} = A_k x_k + X(p_{k+1}) s_k + z_{k+1}.

    Unknowns are x_{-N} .. x_N and s_{-N} .. s_{N-1}; the objective is
    sum |x_k|^2 + sum s_k^2.
    """
    if len(z.vectors) != len(frames):
        raise ValueError("inhomogeneity length must match the number of frames")
    n = frames[0].p.size
    K = len(frames) - 1
    nx = (K + 1) * n
    C = np.zeros((K * n, nx + K))
    for i in range(K):
        rows = slice(i * n, (i + 1) * n)
        C[rows, i * n:(i + 1) * n] = -frames[i].A
        C[rows, (i + 1) * n:(i + 2) * n] = np.eye(n)
        C[rows, nx + i] = -frames[i + 1].X
    rhs = np.asarray(z.vectors[1:], dtype=float).ravel()
    y = min_norm_solution(C, rhs)
    x = y[:nx].reshape(-1, n)
    res = float(np.abs(C @ y - rhs).max()) if rhs.size else 0.0
    return BoundedSolveResult(x, y[nx:], float(np.linalg.norm(x, axis=1).max()), res, "least-squares")


def project_shift_solution(frames, result: BoundedSolveResult, b: InhomSeq,
                           tol: float = 1e-9) -> BoundedSolveResult:
    """v_k = P_k x_k in E_k coordinates; checks it solves the normal system."""
    cs = _normal_coords(frames, b)
    v = np.array([f.E.T @ x for f, x in zip(frames, result.x)])
    res = 0.0
    for i, f in enumerate(frames[:-1]):
        res = max(res, float(np.abs(v[i + 1] - f.B @ v[i] - cs[i + 1]).max()))
    if res > tol:
        raise ReductionError(f"projected solution misses the normal system by {res:.3g}")
    return BoundedSolveResult(v, None, float(np.linalg.norm(v, axis=1).max()), res, result.solver)


# -- scalar reference ---------------------------------------------------------


def scalar_oracle(Bs, bs, grid: int = 100_000) -> BoundedSolveResult:
    """Minimal sum of squares over the single free value v_0, by dense search.

    A grid over [-sqrt(F0), sqrt(F0)] (F0 the objective at v_0 = 0, which
    bounds |v_0| at the optimum) is followed by bounded Brent refinement.
    """
    Bs = np.asarray(Bs, dtype=float).ravel()
    bs = np.asarray(bs, dtype=float).ravel()
    K = Bs.size
    # v_k = a_k v_0 + c_k
    a = np.ones(K + 1)
    c = np.zeros(K + 1)
    for i in range(K):
        a[i + 1] = Bs[i] * a[i]
        c[i + 1] = Bs[i] * c[i] + bs[i + 1]

    def F(v0):
        return float(np.sum((a * v0 + c) ** 2))

    R = np.sqrt(F(0.0))
    if R == 0.0:
        v0 = 0.0
    else:
        g = np.linspace(-R, R, grid)
        vals = ((np.outer(g, a) + c) ** 2).sum(axis=1)
        i = int(np.argmin(vals))
        lo, hi = g[max(i - 1, 0)], g[min(i + 1, grid - 1)]
        v0 = minimize_scalar(F, bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-14 * max(1.0, abs(g[i]))}).x
    v = a * v0 + c
    return BoundedSolveResult(v[:, None], None, float(np.abs(v).max()), 0.0, "exhaustive-oracle")


# -- growth probe -------------------------------------------------------------


@dataclass
class GrowthReport:
    N_list: list
    sup_norms: list           # per N, max over trials
    rows: list                # (N, trial, sup_norm); trial -1 is the constant-normal case
    slope: float
    verdict: str              # "bounded", "growing" or "undetermined"
    limit_estimate: float
    identity_errors: dict

    def summary(self) -> dict:
        return {
            "N_list": list(self.N_list), "sup_norms": list(self.sup_norms),
            "slope": self.slope, "verdict": self.verdict,
            "limit_estimate": self.limit_estimate, "identity_errors": self.identity_errors,
        }


def growth_verdict(N_list, sups, plateau_tol=0.01, slope_min=0.9):
    N = np.asarray(N_list, dtype=float)
    s = np.asarray(sups, dtype=float)
    if np.all(s == 0):
        return 0.0, "bounded"
    slope = float(np.polyfit(np.log(N), np.log(s), 1)[0]) if len(N) > 1 else float("nan")
    if len(s) > 1 and abs(s[-1] - s[-2]) <= plateau_tol * abs(s[-2]):
        return slope, "bounded"
    if slope >= slope_min:
        return slope, "growing"
    return slope, "undetermined"


def estimate_L1_growth(engine: FlowEngine, p, N_list, trials: int, seed, inhom: str = "both") -> GrowthReport:
    """sup_norm of the normal-system solution as the window grows.

    ``inhom`` selects "both" (random unit trials and the constant-normal
    sequence), "constant-normal", "random" or "zero".
    """
    N_list = sorted(int(n) for n in N_list)
    Nmax = N_list[-1]
    frames = sample_orbit_frames(engine, p, Nmax)
    ids = check_frame_identities(frames)
    rng = np.random.default_rng(seed)
    rows, sups = [], []
    for N in N_list:
        win = frames[Nmax - N:Nmax + N + 1]
        best = 0.0
        seqs = []
        if inhom in ("both", "constant-normal"):
            seqs.append((-1, constant_normal(win)))
        if inhom in ("both", "random"):
            seqs.extend((t, random_inhom(win, rng.integers(2**63))) for t in range(trials))
        if inhom == "zero":
            seqs.append((-1, InhomSeq("normal", np.zeros((len(win), win[0].p.size)))))
        for t, b in seqs:
            val = solve_normal_system(win, b).sup_norm
            rows.append((N, t, val))
            best = max(best, val)
        sups.append(best)
    slope, verdict = growth_verdict(N_list, sups)
    return GrowthReport(N_list, sups, rows, slope, verdict, sups[-1], ids)
