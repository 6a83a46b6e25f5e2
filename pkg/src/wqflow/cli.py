"""Command-line interface: simulate / verify / ode / special / distance1d.

Exit codes: 0 success, 1 usage or runtime error, 2 verification breach.
All outputs land under the --out directory; every run echoes its fully
resolved configuration into run.json so it can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .closedform import (
    c_np,
    scale_trajectory,
    special_geodesic,
    special_langevin,
    special_pheat,
)
from .config import KNOWN_KEYS, build_run_config, load_config, resolved_dict
from .diagnostics import entropy, wq_distance_1d, write_diagnostics_csv
from .fields import Grid, ModelParams, quadrature, read_field, write_field
from .flows import FlowError, run
from .verify import run_check


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_sets(pairs) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    overrides = _parse_sets(args.set)
    if args.regime:
        overrides["regime"] = args.regime
    if args.dump_fields:
        overrides["dump-fields"] = "1"
    cfg = load_config(args.config, overrides)
    run_cfg = build_run_config(cfg)
    out = _outdir(args)

    dumps = []
    dump = cfg.get("dump-fields", "0") not in ("0", "", "false")
    if dump:
        os.makedirs(os.path.join(out, "fields"), exist_ok=True)

    def on_record(state, rec):
        if dump:
            idx = len(dumps)
            for name, arr in (("rho", np.exp(state.logrho)), ("phi", state.phi), ("u", state.u)):
                write_field(os.path.join(out, "fields", f"rec{idx:04d}_{name}.bin"), run_cfg.grid, arr)
            dumps.append(rec.t)

    result = run(run_cfg, on_record=on_record)
    write_diagnostics_csv(os.path.join(out, "diagnostics.csv"), result.records)
    resolved = resolved_dict(cfg)
    resolved["derived-dt"] = repr(result.dt)
    resolved["initial-mass"] = repr(result.initial_mass)
    resolved["version"] = __version__
    _write_json(os.path.join(out, "run.json"), resolved)
    print(f"simulate: {len(result.records)} records -> {out}/diagnostics.csv")
    return 0


def _cmd_verify(args) -> int:
    overrides = _parse_sets(args.set)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        for key in overrides:
            if key not in KNOWN_KEYS:
                raise ValueError(f"unknown override key {key!r}")
        cfg = overrides
    p = float(cfg.get("p", "2.0"))
    c_raw = cfg.get("c", "1.0")
    c = math.inf if c_raw in ("inf", "infinity") else float(c_raw)
    n = int(cfg.get("n", "1"))
    eps = float(cfg.get("eps", "1e-8"))
    if args.check in ("wentropy", "convexity", "conservation"):
        c = math.inf
    elif args.check in ("wie", "hamiltonian") and not (0.0 < c < math.inf):
        c = 1.0
    params = ModelParams(p=p, c=c, eps=eps, n=n)
    N = int(cfg.get("N", "256").split(",")[0]) if "N" in cfg else None

    results, records = run_check(args.check, params, N=N)
    out = _outdir(args)
    if records:
        write_diagnostics_csv(os.path.join(out, "diagnostics.csv"), records)
    _write_json(
        os.path.join(out, "verify.json"),
        {
            "check": args.check,
            "params": {"p": p, "c": repr(c), "n": n, "eps": eps},
            "results": [
                {"name": r.name, "passed": r.passed, "value": repr(r.value), "tol": repr(r.tol)}
                for r in results
            ],
        },
    )
    for r in results:
        print(r.line())
    if all(r.passed for r in results):
        print(f"verify {args.check}: all {len(results)} checks passed")
        return 0
    failed = [r.name for r in results if not r.passed]
    print(f"verify {args.check}: FAILED {len(failed)}/{len(results)}: {'; '.join(failed)}")
    return 2


def _cmd_ode(args) -> int:
    c = math.inf if args.c in ("inf", "infinity") else float(args.c)
    traj = scale_trajectory(
        c, args.p, args.n, args.t0, args.T, args.dt,
        w0=args.w0, wdot0=args.wdot0, beta0=args.beta0,
    )
    res_p = traj.pode_residual()
    res_a = traj.alphaeq_residual()
    res_e = traj.eta_residual() if c != 0.0 else np.full_like(res_p, math.nan)

    out = _outdir(args)
    path = os.path.join(out, "ode.csv")
    cols = "t,w,wdot,alpha,beta,eta,pode_residual,alphaeq_residual,eta_residual"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(cols + "\n")
        m = len(traj.t)
        for i in range(m):
            # residual stencils drop two nodes at each end
            interior = 2 <= i < m - 2
            rp = res_p[i - 2] if interior else math.nan
            ra = res_a[i - 2] if interior else math.nan
            re = res_e[i - 2] if interior else math.nan
            row = (traj.t[i], traj.w[i], traj.wdot[i], traj.alpha[i], traj.beta[i], traj.eta[i], rp, ra, re)
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    _write_json(os.path.join(out, "run.json"), {
        "subcommand": "ode", "p": args.p, "c": repr(c), "n": args.n,
        "t0": args.t0, "T": args.T, "dt": args.dt,
        "w0": args.w0, "wdot0": args.wdot0, "beta0": repr(args.beta0),
        "version": __version__,
    })
    print(f"ode: {len(traj.t)} rows -> {path}; max residuals "
          f"pode={np.nanmax(np.abs(res_p)):.3e} alphaeq={np.nanmax(np.abs(res_a)):.3e} "
          f"eta={np.nanmax(np.abs(res_e)) if c != 0.0 else math.nan:.3e}")
    return 0


def _cmd_special(args) -> int:
    c = math.inf if args.c in ("inf", "infinity") else float(args.c)
    n, p, t = args.n, args.p, args.t
    grid = Grid((-args.L,) * n, (args.L,) * n, (args.N,) * n, periodic=False)
    if args.regime == "geodesic":
        sf = special_geodesic(grid, n, p, t)
        w, alpha = t, 1.0 / t
    elif args.regime == "pheat":
        sf = special_pheat(grid, n, p, t)
        w, alpha = t ** (1.0 / p), 1.0 / (p * t)
    elif args.regime == "langevin":
        if not (0.0 < c < math.inf):
            return _fail("special langevin needs finite positive c")
        # scale state solved from t0 = min(t, 1); degenerate windows get a
        # two-step stub so sampling at t stays on the trajectory grid
        t_start = min(1.0, t)
        dt = min(1e-3, 0.4 * c ** p)
        if t > t_start:
            dt = (t - t_start) / max(1, round((t - t_start) / dt))
            traj = scale_trajectory(c, p, n, t_start, t, dt)
        else:
            traj = scale_trajectory(c, p, n, t, t + 2.0 * dt, dt)
        s = traj.sample(t)
        sf = special_langevin(grid, n, p, c, s)
        w, alpha = s.w, s.alpha
    else:
        return _fail(f"unknown regime {args.regime!r} for special")

    out = _outdir(args)
    for name, arr in (("rho", sf.rho), ("phi", sf.phi), ("u", sf.u)):
        write_field(os.path.join(out, f"{name}.bin"), grid, arr)
    q = p / (p - 1.0)
    mass = quadrature(grid, sf.rho)
    ent = entropy(grid, sf.rho)
    ent_closed = -(n / q) * (1.0 + math.log(c_np(n, p) ** (-q / n) * w ** q))
    with open(os.path.join(out, "special.csv"), "w", encoding="ascii") as fh:
        fh.write("t,w,alpha,mass,Ent_quadrature,Ent_closed_form\n")
        fh.write(",".join(repr(float(x)) for x in (t, w, alpha, mass, ent, ent_closed)) + "\n")
    print(f"special {args.regime}: mass={mass:.12f} Ent={ent:.9f} closed={ent_closed:.9f} -> {out}")
    return 0


def _cmd_distance1d(args) -> int:
    grid0, rho0 = read_field(args.rho0)
    grid1, rho1 = read_field(args.rho1)
    if grid0 != grid1:
        return _fail("the two densities live on different grids")
    d = wq_distance_1d(grid0, rho0, rho1, args.q, n_samples=args.samples)
    print(repr(d))
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wqflow", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="integrate one flow and emit diagnostics.csv")
    sim.add_argument("--regime", choices=("geodesic", "langevin", "pheat", "langevin-backward"))
    sim.add_argument("--config", required=True)
    sim.add_argument("--set", action="append", metavar="KEY=VALUE")
    sim.add_argument("--dump-fields", action="store_true",
                     help="write rho/phi/u snapshots at every record")
    sim.add_argument("--out", default="wqflow-out")
    sim.set_defaults(fn=_cmd_simulate)

    ver = sub.add_parser("verify", help="run one named identity check; exit 2 on breach")
    ver.add_argument("--check", required=True,
                     choices=("wentropy", "wie", "hamiltonian", "bochner", "conservation", "convexity"))
    ver.add_argument("--config")
    ver.add_argument("--set", action="append", metavar="KEY=VALUE")
    ver.add_argument("--out", default="wqflow-out")
    ver.set_defaults(fn=_cmd_verify)

    ode = sub.add_parser("ode", help="solve the scale ODE system and report cross-residuals")
    ode.add_argument("--p", type=float, required=True)
    ode.add_argument("--c", default="1.0")
    ode.add_argument("--n", type=int, default=1)
    ode.add_argument("--t0", type=float, default=1.0)
    ode.add_argument("--T", type=float, default=2.0)
    ode.add_argument("--dt", type=float, default=1e-4)
    ode.add_argument("--w0", type=float, default=1.0)
    ode.add_argument("--wdot0", type=float, default=1.0)
    ode.add_argument("--beta0", type=float, default=None)
    ode.add_argument("--out", default="wqflow-out")
    ode.set_defaults(fn=_cmd_ode)

    spc = sub.add_parser("special", help="emit closed-form special-solution fields")
    spc.add_argument("--regime", default="geodesic", choices=("geodesic", "langevin", "pheat"))
    spc.add_argument("--p", type=float, required=True)
    spc.add_argument("--c", default="inf")
    spc.add_argument("--n", type=int, default=1)
    spc.add_argument("--t", type=float, default=1.0)
    spc.add_argument("--N", type=int, default=1024)
    spc.add_argument("--L", type=float, default=15.0)
    spc.add_argument("--out", default="wqflow-out")
    spc.set_defaults(fn=_cmd_special)

    dst = sub.add_parser("distance1d", help="L^q transport distance between two stored densities")
    dst.add_argument("--rho0", required=True)
    dst.add_argument("--rho1", required=True)
    dst.add_argument("--q", type=float, required=True)
    dst.add_argument("--samples", type=int, default=4096)
    dst.set_defaults(fn=_cmd_distance1d)
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError, FlowError, FloatingPointError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
