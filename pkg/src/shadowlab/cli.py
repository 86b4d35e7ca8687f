"""Command-line driver: orbit, defect, probe and replay experiments.

    shadowlab orbit|defect|probe|replay --config FILE --out DIR [--seed N]

Every run writes plain CSV tables and JSON summaries into DIR.  JSON files
carry a ``schema_version`` field; CSV headers are fixed:

    defect*.csv  t,s,case,delta,bound
    growth.csv   N,trial,sup_norm        (trial -1 is the constant-normal case)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, inhomogeneity_along
from .defect import DefectGrid, fit_defect_bounds, measure_defect
from .flow import FlowError
from .frames import check_frame_identities, frames_to_dict, sample_orbit_frames
from .linsys import estimate_L1_growth
from .methods import MethodConfig, MethodError, build_method
from .replay import anchor_deviation_ladder, check_replay_identity, shadow_search
from .ubconst import SampleSpec, estimate_ub_constants

SCHEMA_VERSION = 1
DEFAULT_L_SWEEP = (2.0, 4.0, 8.0)


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, command: str, cfg: ExperimentConfig, payload: dict) -> Path:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.to_dict()}
    doc.update(payload)
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path


def _ub_sample(engine, cfg, N):
    """Sample boxes around the base orbit (the whole torus on a torus)."""
    n = engine.dim
    if engine.space.is_torus:
        boxes = [(np.zeros(n), np.ones(n))]
    else:
        orbit = engine.trajectory(np.asarray(cfg.base_point, float), np.linspace(0, 2 * N + 1, 4 * N + 3))
        pad = cfg.r + 0.05
        boxes = [(orbit.min(axis=0) - pad, orbit.max(axis=0) + pad)]
    return SampleSpec(boxes=boxes, points_per_axis=cfg.ub_points_per_axis, seed=cfg.seed or 0)


# -- subcommands ---------------------------------------------------------------


def cmd_orbit(cfg: ExperimentConfig, out: Path) -> dict:
    engine = cfg.engine()
    frames = sample_orbit_frames(engine, cfg.base_point, cfg.N)
    ids = check_frame_identities(frames)
    write_json(out / "orbit.json", "orbit", cfg, {"identities": ids, "frames": frames_to_dict(frames)})
    return {"frames": len(frames), "identities": ids}


def cmd_defect(cfg: ExperimentConfig, out: Path) -> dict:
    cfg.require_seed("defect")
    engine = cfg.engine()
    ub = estimate_ub_constants(engine, _ub_sample(engine, cfg, cfg.N))
    z = inhomogeneity_along(engine, cfg.base_point, cfg.N, cfg.inhomogeneity, cfg.seed)
    grid = DefectGrid(t_uniform=cfg.t_uniform, s_uniform=cfg.s_uniform,
                      negative_fraction=cfg.negative_fraction, seed=cfg.seed)
    ds = cfg.d_ladder or [cfg.d]
    reports = []
    for i, d in enumerate(ds):
        mc = MethodConfig(d=d, r=cfg.r, N=cfg.N, kappa=cfg.kappa, z=z, base_point=cfg.base_point)
        inst = build_method(engine, mc, ub=ub, strict=cfg.strict)
        rep = measure_defect(inst, grid, ub)
        name = "defect.csv" if len(ds) == 1 else f"defect_{i}.csv"
        rep.write_csv(out / name)
        reports.append(dict(rep.summary(), csv=name))
    payload = {"ub": ub.to_dict(), "reports": reports}
    if len(ds) >= 2:
        fit = fit_defect_bounds(ds, [r["sup"] for r in reports], cfg.kappa, ub.g1)
        payload["fit"] = {"form": "K_a*d + K_b*" + ("g1(d^1.5)" if cfg.kappa else "d^1.5"),
                          "K": list(fit.K), "rel_residual": fit.rel_residual,
                          "fitted": fit.fitted, "observed": fit.observed}
    write_json(out / "defect.json", "defect", cfg, payload)
    return {"sups": [r["sup"] for r in reports],
            "violations": sum(r["bound_violations"] for r in reports)}


def cmd_probe(cfg: ExperimentConfig, out: Path) -> dict:
    if not cfg.N_list:
        raise ConfigError("N_list: required for 'probe'")
    cfg.require_seed("probe")
    engine = cfg.engine()
    mode = {"zero": "zero", "random": "random"}.get(
        cfg.inhomogeneity, "both" if cfg.trials > 0 else "constant-normal")
    trials = cfg.trials if mode != "random" else max(cfg.trials, 1)
    rep = estimate_L1_growth(engine, cfg.base_point, cfg.N_list, trials, cfg.seed, inhom=mode)
    with open(out / "growth.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "trial", "sup_norm"])
        for N, t, v in rep.rows:
            w.writerow([N, t, repr(float(v))])
    write_json(out / "growth.json", "probe", cfg, rep.summary())
    return {"verdict": rep.verdict, "slope": rep.slope, "sup_norms": rep.sup_norms}


def cmd_replay(cfg: ExperimentConfig, out: Path) -> dict:
    cfg.require_seed("replay")
    engine = cfg.engine()
    ds = cfg.d_ladder or [cfg.d]
    Ls = cfg.L_sweep or list(DEFAULT_L_SWEEP)
    z = inhomogeneity_along(engine, cfg.base_point, cfg.N, cfg.inhomogeneity, cfg.seed)
    p0 = np.asarray(cfg.base_point, float)
    ub = None
    if engine.space.is_torus and cfg.strict:
        ub = estimate_ub_constants(engine, _ub_sample(engine, cfg, cfg.N))
    entries, ws = [], []
    for d in ds:
        entry = {"d": d}
        try:
            inst = build_method(engine, MethodConfig(d=d, r=cfg.r, N=cfg.N, kappa=1, z=z, base_point=p0),
                                ub=ub, strict=cfg.strict)
        except MethodError as exc:
            entry.update(status="rejected", diagnostic=str(exc))
            entries.append(entry)
            ws.append(None)
            continue
        shadow = None
        for L in Ls:
            shadow = shadow_search(inst, p0, L, cfg.budget, max_shift=0.5 * inst.tau)
            if shadow.found:
                break
        entry.update(L=L, status=shadow.status, shadow=shadow.to_dict())
        defect = measure_defect(inst, DefectGrid(t_uniform=cfg.t_uniform, s_uniform=cfg.s_uniform,
                                                 negative_fraction=0.0))
        entry["refinement"] = {"L_times_defect": L * defect.sup, "tau_over_4N": inst.tau / (4 * cfg.N),
                               "holds": L * defect.sup <= inst.tau / (4 * cfg.N)}
        if shadow.found:
            rep = check_replay_identity(inst, shadow)
            entry["replay"] = rep.to_dict()
            ws.append(rep.w if rep.regime_ok else None)
        else:
            ws.append(None)
        entries.append(entry)
    cauchy = []
    for a, b, wa, wb in zip(ds[:-1], ds[1:], ws[:-1], ws[1:]):
        diff = None if wa is None or wb is None else float(np.abs(wa - wb).max())
        cauchy.append({"d": a, "d_next": b, "max_w_difference": diff})
    ladder = anchor_deviation_ladder(engine, p0, z, cfg.N, ds, cfg.r, ub=ub, strict=cfg.strict,
                                     L=Ls[-1], budget=cfg.budget)
    write_json(out / "replay.json", "replay", cfg,
               {"entries": entries, "cauchy": cauchy, "anchor_ladder": ladder.to_dict()})
    return {"statuses": [e["status"] for e in entries],
            "residuals": [e.get("replay", {}).get("residual") for e in entries]}


COMMANDS = {"orbit": cmd_orbit, "defect": cmd_defect, "probe": cmd_probe, "replay": cmd_replay}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowlab", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML or JSON experiment file")
    ap.add_argument("--out", required=True, help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, default=None, help="override the seed in the config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed: must be a nonnegative integer")
            cfg.seed = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MethodError, FlowError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_clean(result), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
