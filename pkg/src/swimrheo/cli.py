"""Command line front end: ``swimrheo <mode> [--config PATH] [--preset NAME] ...``.

Exit status is 0 on success; failures map onto the ``exit_code`` of the
package error category (configuration 2, parameter range 3, ...), and 1 when
an identity or comparison check fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .config import MODES, PRESETS, parse_config, resolve
from .errors import ConfigError, SwimRheoError
from .harness import audit_header, compare_layers, fmt, identity_suite, replica_rng, run_sweep
from .ibm import Interactions, default_dt, effective_viscosity_ibm, simulate
from .kinetic import steady_state, write_coefficients_csv, write_density_csv
from .rheology import compute_ACD, eta_from_density, reduced_kernel, rheology_report
from .sphere import SphereGrid

log = logging.getLogger("swimrheo")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swimrheo", description=__doc__.splitlines()[0])
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named sweep preset")
    p.add_argument("--seed", type=int, help="master seed (overrides seeds.master)")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--replicas", type=int, help="IBM replicas per point (overrides seeds.count)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args):
    data = {}
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"configuration file not found: {args.config}", key="path")
        try:
            data = yaml.safe_load(args.config.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"configuration is not valid YAML: {exc}", key="path") from None
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping at the top level")
    data["mode"] = args.mode
    if args.preset:
        data["preset"] = args.preset
    seeds = dict(data.get("seeds") or {})
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer", key="seeds.master")
        seeds["master"] = args.seed
    if args.replicas is not None:
        seeds["count"] = args.replicas
    if seeds:
        data["seeds"] = seeds
    if args.out is not None:
        data["output"] = {**(data.get("output") or {}), "dir": str(args.out)}
    return resolve(data)


def _run_simulate(cfg, out: Path) -> int:
    params = cfg.params
    ibm = cfg.ibm
    dt = ibm["dt"] or default_dt(params)
    n_steps = int(round(ibm["duration"] / dt))
    inter = Interactions(ibm["hydrodynamic"], ibm["collisions"])
    header = audit_header(cfg)
    trajectories = []
    for r in range(cfg.seeds["count"]):
        tr = simulate(params, n_steps, replica_rng(cfg.seeds["master"], 0, r), dt=dt,
                      sample_every=ibm["sample_every"], interactions=inter)
        tr.write_csv(out / f"stress_replica{r:03d}.csv", {**header, "replica": r, "dt": fmt(dt)})
        trajectories.append(tr)
    if params.gamma > 0:
        est = effective_viscosity_ibm(trajectories, params, ibm["burn_in"])
        lines = [f"{k}: {v}" for k, v in header.items()]
        for k in ("total", "total_stderr", "dipolar", "dipolar_stderr", "collision", "collision_stderr"):
            lines.append(f"eta_ibm_{k} = {fmt(getattr(est, k))}")
        (out / "viscosity_ibm.txt").write_text("\n".join(lines) + "\n")
        print("\n".join(lines[len(header):]))
    return 0


def _run_kinetic(cfg, out: Path) -> int:
    params = cfg.params
    coeffs = compute_ACD(cfg.density_spec(), cfg.quadrature)
    kc = cfg.kinetic
    rep = steady_state(reduced_kernel(coeffs, params), params.D, l_max=kc["l_max"], dt=kc["dt"],
                       t_max=kc["t_max"], tol=kc["tol"])
    header = {**audit_header(cfg), "steady_reached": rep.steady_reached, "residual": fmt(rep.residual)}
    write_density_csv(out / "kinetic_density.csv", rep.density, header=header)
    write_coefficients_csv(out / "kinetic_coefficients.csv", rep.density, header=header)
    print(f"steady_reached = {rep.steady_reached}\nresidual = {fmt(rep.residual)}")
    if params.gamma > 0:
        grid = SphereGrid(kc["l_max"])
        print(f"eta_from_density = {fmt(eta_from_density(rep.density.values(grid), grid, params))}")
    if not rep.steady_reached:
        log.warning("steady state not reached within t_max")
    return 0


def _run_asymptotic(cfg, out: Path) -> int:
    rep = rheology_report(cfg.params, compute_ACD(cfg.density_spec(), cfg.quadrature))
    header = "".join(f"# {k}: {v}\n" for k, v in audit_header(cfg).items())
    (out / "rheology.csv").write_text(header + rep.csv_text())
    (out / "rheology.txt").write_text(header + rep.text() + "\n")
    print(rep.text())
    return 0


def _run_sweep(cfg, out: Path) -> int:
    res = run_sweep(cfg, out_dir=out)
    flagged = sum(r.flagged for r in res.rows)
    print(f"wrote {res.path} ({len(res.rows)} rows, {flagged} flagged, {res.elapsed:.1f} s)")
    return 0


def _run_compare(cfg, out: Path) -> int:
    rep = compare_layers(cfg)
    lines = rep.lines()
    header = "".join(f"# {k}: {v}\n" for k, v in audit_header(cfg).items())
    (out / "compare.txt").write_text(header + "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if all(p is not False for *_, p in rep.checks) else 1


def _run_itest(cfg, out: Path) -> int:
    checks = identity_suite()
    lines = [c.line() for c in checks]
    (out / "itest.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if all(c.passed for c in checks) else 1


RUNNERS = {
    "simulate": _run_simulate, "kinetic": _run_kinetic, "asymptotic": _run_asymptotic,
    "sweep": _run_sweep, "compare": _run_compare, "itest": _run_itest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[cfg.mode](cfg, out)
    except SwimRheoError as exc:
        key = getattr(exc, "key", None)
        where = f" [{key}]" if key else ""
        print(f"error ({type(exc).__name__}){where}: {exc}", file=sys.stderr)
        return exc.exit_code


__all__ = ["main", "build_parser", "load_config", "parse_config"]
