"""``curveflow`` command line: run, audit, identities, info.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 identity or audit failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, initial_metric, load_config
from .errors import ConfigError, CurveflowError
from .grid import l2_norm_sq
from .homogeneous import PRESETS, write_frame_csv
from .identities import run_identities, scopes
from .prolongation import (
    EnergySeries,
    abstract_energy_audit,
    build_differences,
    choose_weights,
    energies,
    gronwall_audit,
    verdict_record,
    write_verdict,
    xcf_pack,
)
from .runtime import Trajectory, run_flow, write_checkpoint
from .tensor_calc import dumps_records

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4
DEFAULT_FLOOR = 1e-8  # times |g|^2: 1e-2 of the energy of a 1e-3 perturbation


def _say(msg: str) -> None:
    print(msg, flush=True)


def _out_dir(args, cfg: RunConfig | None, default: str) -> Path:
    out = Path(args.out or (cfg.out if cfg and cfg.out else default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    if not 0 <= seed < 2**64:
        raise ConfigError("must be an unsigned 64-bit integer", field="--seed")
    return replace(cfg, perturb_seed=seed, recipe_seed=seed)


def _leg(cfg: RunConfig) -> Trajectory:
    return run_flow(initial_metric(cfg), cfg.spec, cfg.t_end, cfg.sample_every, cfg.dt, cfg.safety, cfg.static_only)


def _write_run(traj: Trajectory, cfg: RunConfig, out: Path, seed) -> None:
    write_checkpoint(traj, out, seed=seed, extra={"config": cfg.record(), "version": __version__})
    if traj.backend == "frame":
        write_frame_csv(out / "trajectory.csv", traj.times, traj.snapshots, traj.grid.structure, cfg.spec.sigma)


def cmd_run(args) -> int:
    if len(args.config) != 1:
        raise ConfigError("run takes exactly one config file", field="--config")
    cfg = _with_seed(load_config(args.config[0]), args.seed)
    if args.static_only:
        cfg = replace(cfg, static_only=True)
    out = _out_dir(args, cfg, "curveflow-run")
    t0 = time.perf_counter()
    traj = _leg(cfg)
    _write_run(traj, cfg, out, args.seed)
    _say(f"{traj.status}: {len(traj.times)} samples to t = {traj.times[-1]!r} in {time.perf_counter() - t0:.2f} s -> {out}")
    if traj.status == "aborted":
        _say(f"numerical abort: {traj.message}")
        return EXIT_NUMERIC
    if traj.status == "capped":
        _say(traj.message)
    return EXIT_OK


def _check_legs(a: RunConfig, b: RunConfig) -> None:
    if a.backend != b.backend:
        raise ConfigError("legs use different backends", field="geometry.backend")
    if a.grid() != b.grid():
        raise ConfigError("legs use different grids", field="geometry")
    if a.spec != b.spec:
        raise ConfigError("legs integrate different flows", field="flow")
    if a.t_end != b.t_end:
        raise ConfigError("legs have different end times", field="time.t_end")
    if a.static_only or b.static_only:
        raise ConfigError("an audit needs integrated legs", field="time.static_only")


def _same_times(ta: Trajectory, tb: Trajectory) -> bool:
    if len(ta.times) != len(tb.times):
        return False
    return bool(np.allclose(ta.times, tb.times, rtol=0, atol=1e-9 * max(ta.times[-1], 1e-300)))


def cmd_audit(args) -> int:
    if len(args.config) != 2:
        raise ConfigError("audit takes two config files, one per leg", field="--config")
    a, b = (load_config(p) for p in args.config)
    b = _with_seed(b, args.seed)
    _check_legs(a, b)
    out = _out_dir(args, a, "curveflow-audit")
    t0 = time.perf_counter()
    legs = [_leg(a), _leg(b)]
    for leg in legs:
        if leg.status != "completed":
            _say(f"numerical abort in a leg: {leg.status} ({leg.message})")
            return EXIT_NUMERIC
    ta, tb = legs
    if not _same_times(ta, tb):
        raise ConfigError("legs do not share the sample times; match dt * sample_every", field="time.sample_every")
    spec = a.spec
    n = ta.grid.dim
    extra = {}
    g0 = ta.metric(0)
    scale = math.sqrt(l2_norm_sq(g0, g0))
    if spec.kind == "xcf":
        ref = [ta.metric(i) for i in range(len(ta))]
        packs = [xcf_pack(ref[i], tb.metric(i)) for i in range(len(ta))]
        series = abstract_energy_audit(ta.times, [[p.W for p in packs]], [[p.h for p in packs], [p.A for p in packs]], ref)
        series = replace(series, scale=scale)
        extra["u_ratio_max"] = max(p.C_ratio for p in packs)
        k, alpha, beta = 0, 0.0, 0.0
    else:
        k, alpha, beta = spec.audit_k, spec.audit_alpha, spec.beta
        spec.check_audit_hypothesis(n)
        w = choose_weights(alpha, n)
        samples = [energies(build_differences(ta.metric(i), tb.metric(i), k), w.r) for i in range(len(ta))]
        series = EnergySeries.from_samples(ta.times, samples, w.r, w.eps, scale)
    identical = a.delta == 0 and b.delta == 0 and a.recipe == b.recipe and a.path == b.path and a.recipe_seed == b.recipe_seed
    floor = None
    if identical and not (ta.dt == tb.dt):
        floor = (b.floor if b.floor is not None else a.floor if a.floor is not None else DEFAULT_FLOOR * scale**2)
    res = gronwall_audit(series, identical=identical, floor=floor)
    series = series.with_audit(res)
    series.write_csv(out / "energy.csv")
    rec = verdict_record(series, res, spec.kind, k, alpha, beta)
    rec.update(identical=identical, floor=floor, dt=[ta.dt, tb.dt], E0=float(series.E[0]),
               E_max=float(np.max(series.E)), **extra)
    write_verdict(out / "verdict.json", rec)
    _say(f"audit {res.verdict}: C_fit = {res.C_fit!r}, max_violation = {res.max_violation!r}, "
         f"E(0) = {float(series.E[0])!r} ({time.perf_counter() - t0:.1f} s) -> {out}")
    return EXIT_OK if res.verdict.startswith("pass") else EXIT_FAIL


def cmd_identities(args) -> int:
    t0 = time.perf_counter()
    records = run_identities(args.scope, args.corrupt_convention, args.fd_order, args.seed or 0)
    for r in records:
        _say(f"{'PASS' if r['pass'] else 'FAIL'}  {r['check']:<34} defect {r['defect']:.3e}")
    failed = sum(not r["pass"] for r in records)
    report = {"schema": 1, "scope": args.scope, "corrupt_convention": args.corrupt_convention,
              "seconds": time.perf_counter() - t0, "failed": failed, "records": records}
    if args.out:
        out = _out_dir(args, None, args.out)
        (out / "identities.json").write_text(dumps_records(report) + "\n")
    _say(f"{len(records) - failed}/{len(records)} passed in {report['seconds']:.1f} s")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_info(args) -> int:
    info = {
        "version": __version__,
        "numpy": np.__version__,
        "threads": os.environ.get("CURVEFLOW_THREADS", "unset"),
        "flows": ["ricci", "l2", "family", "xcf"],
        "frame_presets": {k: list(v) for k, v in PRESETS.items()},
        "identity_scopes": scopes(),
        "conventions": {
            "riemann": "R_ijkl = g(R(e_i,e_j)e_k, e_l); sectional K = R_ijji",
            "ricci": "Rc_jk = g^il R_ijkl (unit S^3: Rc = 2g, S = 6)",
            "derivative_slots": "prepended",
        },
        "schemas": {"snapshot": 1, "manifest": 1, "energy_csv": 1},
    }
    _say(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curveflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"curveflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", action="append", default=[], metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int, metavar="U64")

    sp = sub.add_parser("run", help="integrate one flow and write a checkpoint")
    common(sp)
    sp.add_argument("--static-only", action="store_true", help="evaluate the initial data without integrating")
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("audit", help="uniqueness audit of two legs")
    common(sp)
    sp.set_defaults(func=cmd_audit)
    sp = sub.add_parser("identities", help="run the identity suite")
    common(sp)
    sp.add_argument("--scope", default="all")
    sp.add_argument("--fd-order", type=int, choices=(2, 4), default=4)
    sp.add_argument("--corrupt-convention", action="store_true", help="negative control: wrong Riemann slot order")
    sp.set_defaults(func=cmd_identities)
    sp = sub.add_parser("info", help="print version, conventions and presets")
    sp.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # guarded paths and bad selections (unknown scope, refused flows)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CurveflowError as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
