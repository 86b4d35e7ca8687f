"""Acceptance suite: one check per property, each printing a PASS/FAIL line.

Timings exclude the one-off compilation of the flow kernels, which the
session fixtures trigger before any timed section starts.
"""

import math
import time

import numpy as np
import pytest

from conftest import BASE
from shadowlab.config import inhomogeneity_along
from shadowlab.defect import DefectGrid, fit_defect_bounds, measure_defect
from shadowlab.frames import InhomSeq, check_frame_identities, random_inhom, sample_orbit_frames
from shadowlab.linsys import (
    estimate_L1_growth, project_shift_solution, scalar_oracle, solve_shift_system, solve_window,
)
from shadowlab.methods import BumpGamma, MethodConfig, build_method, interp_gamma
from shadowlab.repar import Reparam, inverse_rep_bound, rep_invert, rep_membership, rep_random
from shadowlab.replay import anchor_deviation_ladder, check_replay_identity, shadow_search

D_LADDER = (1e-2, 5e-3, 2.5e-3)
N_METHOD = 5


@pytest.fixture
def verdict(capsys):
    """Print a single PASS/FAIL line for the check, bypassing output capture."""
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


def test_frame_identities(engines, verdict):
    t0 = time.perf_counter()
    worst_flow = worst_proj = 0.0
    for name, eng in engines.items():
        for p in (BASE[name], np.array([0.37, 0.29])):
            ids = check_frame_identities(sample_orbit_frames(eng, p, 50))
            worst_flow = max(worst_flow, ids["flow_invariance"])
            worst_proj = max(worst_proj, ids["projection_commutation"])
    dt = time.perf_counter() - t0
    ok = worst_flow <= 1e-6 and worst_proj <= 1e-10 and dt < 5.0
    verdict("frame identities (N=50, three flows)", ok,
            f"A X = X' rel err {worst_flow:.2e} (<=1e-6), P'A = P'AP rel err {worst_proj:.2e} "
            f"(<=1e-10), {dt:.2f} s (<5 s)")


def test_reparam_inversion(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad = 0
    for i in range(1000):
        delta = float(rng.uniform(0.0, 0.5)) or 0.5
        alpha = rep_random(delta, 4, seed=i)
        if not rep_membership(rep_invert(alpha), inverse_rep_bound(delta)).member:
            bad += 1
    worst_gap = 0.0
    for delta in (0.05, 0.2, 0.5):
        dev = rep_membership(rep_invert(Reparam.linear(1.0 + delta, 3.0)), 2 * delta).max_deviation
        worst_gap = max(worst_gap, abs(dev - delta / (1.0 + delta)))
        bad += not dev < 2 * delta
    dt = time.perf_counter() - t0
    ok = bad == 0 and worst_gap < 1e-12 and dt < 1.0
    verdict("inverse reparametrizations", ok,
            f"{bad} failures among 1000 random inverses and linear cases, "
            f"linear-case deviation error {worst_gap:.1e}, {dt:.2f} s (<1 s)")


def test_defect_harness(shear, shear_ub, verdict):
    t0 = time.perf_counter()
    z = inhomogeneity_along(shear, BASE["plane-shear"], N_METHOD, "constant-normal")
    grid = DefectGrid(seed=0)
    short_max, violations, fits = 0.0, 0, {}
    for kappa in (0, 1):
        sups = []
        for d in D_LADDER:
            inst = build_method(shear, MethodConfig(d=d, r=0.1, N=N_METHOD, kappa=kappa, z=z,
                                                    base_point=BASE["plane-shear"]))
            rep = measure_defect(inst, grid, shear_ub)
            if d == D_LADDER[0]:
                short_max = max(short_max, rep.case_sup["flow-flow-short"])
            violations += rep.violations.size
            sups.append(rep.sup)
        fits[kappa] = fit_defect_bounds(D_LADDER, sups, kappa, shear_ub.g1)
    dt = time.perf_counter() - t0
    ok = (short_max <= 1e-8 and violations == 0 and dt < 120.0
          and all(min(f.K) >= 0 and f.rel_residual <= 0.1 for f in fits.values()))
    detail = ", ".join(f"kappa={k}: K=({f.K[0]:.3g}, {f.K[1]:.3g}) residual {f.rel_residual:.1e}"
                       for k, f in fits.items())
    verdict("defect harness on plane-shear", ok,
            f"unperturbed-case max {short_max:.1e} (<=1e-8), {violations} case-bound violations, "
            f"{detail} (<=10%), {dt:.1f} s (<120 s)")


def test_bounded_solvability_dichotomy(engines, verdict):
    t0 = time.perf_counter()
    Ns = [10, 20, 40]
    out = {name: estimate_L1_growth(engines[name], BASE[name], Ns, 0, 0, inhom="constant-normal")
           for name in engines}
    dt = time.perf_counter() - t0
    targets = {"plane-shear": 1.0 / (1.0 - math.exp(-1.0)),
               "torus-ms": 1.0 / (1.0 - math.exp(-2.0 * math.pi))}
    ok = dt < 30.0
    parts = []
    for name, target in targets.items():
        s = out[name].sup_norms
        change = abs(s[2] - s[1]) / s[1]
        ok &= abs(s[2] - target) <= 1e-3 and change <= 0.01 and out[name].verdict == "bounded"
        parts.append(f"{name} {s[2]:.6f} vs {target:.6f}, 20->40 change {change:.1e}")
    irr = out["torus-irr"]
    err = max(abs(v - n) for v, n in zip(irr.sup_norms, Ns))
    ok &= err <= 1e-6 and abs(irr.slope - 1.0) <= 0.05
    parts.append(f"torus-irr |sup - N| {err:.1e}, slope {irr.slope:.4f}")
    verdict("bounded solvability dichotomy", ok, "; ".join(parts) + f"; {dt:.1f} s (<30 s)")


def test_full_to_normal_reduction(engines, verdict):
    rng = np.random.default_rng(7)
    names = sorted(engines)
    worst_res, norm_violations = 0.0, 0
    for i in range(100):
        name = names[i % 3]
        eng = engines[name]
        p = rng.uniform([0.0, -1.5], [1.0, 1.5]) if name == "plane-shear" else rng.uniform(0, 1, 2)
        frames = sample_orbit_frames(eng, p, int(rng.integers(2, 7)))
        z = random_inhom(frames, seed=int(rng.integers(2**32)), kind="full", unit=False)
        full = solve_shift_system(frames, z)
        b = InhomSeq("full", np.array([f.P @ v for f, v in zip(frames, z.vectors)]))
        red = project_shift_solution(frames, full, b, tol=np.inf)
        worst_res = max(worst_res, red.residual)
        norm_violations += red.sup_norm > full.sup_norm * (1 + 1e-12)
    ok = worst_res <= 1e-9 and norm_violations == 0
    verdict("projection of full solutions", ok,
            f"100 instances, worst residual {worst_res:.1e} (<=1e-9), "
            f"{norm_violations} cases with a larger projected norm")


def test_solver_against_oracle(verdict):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        N = int(rng.integers(1, 7))
        Bs = rng.uniform(0.2, 5.0, 2 * N) * rng.choice([-1.0, 1.0], 2 * N)
        bs = rng.uniform(-1.0, 1.0, 2 * N + 1)
        ls = solve_window(Bs, bs)
        orc = scalar_oracle(Bs, bs)
        worst = max(worst, abs(ls.sup_norm - orc.sup_norm))
    verdict("least squares vs brute-force oracle", worst <= 1e-6,
            f"100 scalar windows, worst sup-norm gap {worst:.1e} (<=1e-6)")


def test_replay_identity(shear, verdict):
    z = inhomogeneity_along(shear, BASE["plane-shear"], N_METHOD, "constant-normal")
    parts, ok = [], True
    for d in D_LADDER[:2]:
        inst = build_method(shear, MethodConfig(d=d, r=0.1, N=N_METHOD, kappa=1, z=z,
                                                base_point=BASE["plane-shear"]))
        sh = shadow_search(inst, BASE["plane-shear"], L=4.0, budget=20, max_shift=0.5 * inst.tau)
        rep = check_replay_identity(inst, sh)
        if rep.regime_ok:
            ok &= rep.residual <= 1e-9
            parts.append(f"d={d:g}: residual {rep.residual:.1e}")
        else:
            ok = False  # a vacuous pass would hide a broken shadow search
            parts.append(f"d={d:g}: regime check failed ({rep.diagnostic})")
    verdict("replay recursion on plane-shear", ok, "; ".join(parts) + " (<=1e-9)")


def test_anchor_deviation_flatness(shear, verdict):
    z = inhomogeneity_along(shear, BASE["plane-shear"], N_METHOD, "constant-normal")
    lad = anchor_deviation_ladder(shear, BASE["plane-shear"], z, N_METHOD, D_LADDER, 0.1)
    verdict("anchor deviation ratio flatness", lad.variation <= 0.2,
            f"ratios {', '.join(f'{r:.4f}' for r in lad.ratios)}, variation {lad.variation:.1%} "
            f"(<=20%), constant estimate {max(lad.ratios):.4f}")


def test_blend_inequality(verdict):
    rng = np.random.default_rng(99)
    b = BumpGamma(1e-3, 0.1)
    worst = -np.inf
    for _ in range(10_000):
        x, y, z = rng.uniform(-5, 5, (3, 2))
        v = rng.uniform(-1, 1, 2)
        v *= rng.uniform(0, b.r) / np.linalg.norm(v)
        s = rng.uniform(-b.tau, b.tau)
        g = interp_gamma(x, y, v, s, b)
        worst = max(worst, np.linalg.norm(g - z) - np.linalg.norm(x - z) - np.linalg.norm(y - z))
    verdict("blend triangle inequality", worst <= 1e-12,
            f"10^4 samples, max excess {worst:.1e} (<=1e-12)")
