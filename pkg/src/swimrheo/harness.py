"""Experiment drivers: parameter sweeps, cross-layer comparison and identity suites.

Seeds
-----
Replica ``r`` of sweep point ``i`` draws from
``numpy.random.SeedSequence(master, spawn_key=(i, r))`` fed to PCG64.  The
stream depends only on (master, i, r), so adding replicas or points never
changes the streams of existing ones.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_density, build_params
from .errors import (
    InstabilityError,
    ParameterRegimeError,
    StepSizeError,
    SwimRheoError,
)
from .ibm import Interactions, default_dt, effective_viscosity_ibm, orientation_histogram, simulate
from .kinetic import OrientationDensity, evolve, shear_kernel, steady_state
from .params import SuspensionParams
from .rheology import (
    compute_ACD,
    effective_noise,
    eta_from_density,
    eta_int,
    i_terms,
    normal_stresses,
    pd_asymptotic,
    reduced_kernel,
)
from .sphere import (
    SphereGrid,
    double_cross_field,
    lemma_divergence,
    sph_divergence,
)
from .stokes import (
    dipole_tensor,
    fourier_sym_gradient,
    fourier_velocity,
    stokes_residual,
)

log = logging.getLogger(__name__)


def replica_rng(master: int, point: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master, spawn_key=(point, replica))))


def fmt(v) -> str:
    """17 significant digits for floats; ``nan`` marks absent values."""
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path: Path, header: dict, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def audit_header(config: ExperimentConfig, params: SuspensionParams | None = None) -> dict:
    params = params or config.params
    out = {"swimrheo_version": __version__, "config_hash": config.config_hash, "mode": config.mode}
    if config.preset:
        out["preset"] = config.preset
    for k, v in params.as_dict().items():
        out[f"param.{k}"] = fmt(v)
    out["density"] = ", ".join(f"{k}={v}" for k, v in sorted(config.density.items()))
    out["seeds"] = f"count={config.seeds['count']}, master={config.seeds['master']}"
    return out


# -- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = [
    ("value", "swept parameter"),
    ("eta_int_formula", "viscosity"),
    ("eta_int_ibm_mean", "viscosity"),
    ("eta_int_ibm_stderr", "viscosity"),
    ("N12", "stress time^2"),
    ("N23", "stress time^2"),
    ("D_hat", "1/time"),
    ("eta_int_formula_relative", "1"),
    ("eta_int_rederived", "viscosity"),
    ("eta_dilute_kinetic", "viscosity"),
    ("eta_ibm_dipolar_mean", "viscosity"),
    ("eta_ibm_dipolar_stderr", "viscosity"),
    ("eta_ibm_collision_mean", "viscosity"),
    ("eta_ibm_collision_stderr", "viscosity"),
    ("phi", "1"),
    ("rho", "1/length^3"),
    ("A_hat", "1"),
    ("ibm_runs", "count"),
    ("flagged", "0/1"),
]


@dataclass
class SweepRow:
    value: float
    eta_int_formula: float
    eta_int_ibm_mean: float | None
    eta_int_ibm_stderr: float | None
    N12: float
    N23: float
    D_hat: float | None
    eta_int_formula_relative: float
    eta_int_rederived: float
    eta_dilute_kinetic: float | None = None
    eta_ibm_dipolar_mean: float | None = None
    eta_ibm_dipolar_stderr: float | None = None
    eta_ibm_collision_mean: float | None = None
    eta_ibm_collision_stderr: float | None = None
    phi: float = 0.0
    rho: float = 0.0
    A_hat: float = 0.0
    ibm_runs: int = 0
    flagged: bool = False
    message: str = ""

    def values(self):
        return [getattr(self, name) for name, _ in SWEEP_COLUMNS]


@dataclass
class SweepResult:
    parameter: str
    rows: list
    path: Path | None = None
    elapsed: float = 0.0

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows], dtype=float)


def params_at(config: ExperimentConfig, axis: str, value) -> SuspensionParams:
    section = dict(config.raw["params"])
    if axis == "phi":
        section.pop("L", None)
    elif axis == "L":
        section.pop("phi", None)
    section[axis] = int(value) if axis == "N" else value
    return build_params(section)


def _ibm_replica(args):
    params, ibm, master, point, replica = args
    rng = replica_rng(master, point, replica)
    dt = ibm["dt"] or default_dt(params)
    n_steps = int(round(ibm["duration"] / dt))
    inter = Interactions(ibm["hydrodynamic"], ibm["collisions"])
    try:
        tr = simulate(params, n_steps, rng, dt=dt, sample_every=ibm["sample_every"], interactions=inter)
    except (StepSizeError, InstabilityError, FloatingPointError) as exc:
        return None, f"replica {replica}: {exc}"
    if not np.all(np.isfinite(tr.sigma_d)) or not np.all(np.isfinite(tr.sigma_lj)):
        return None, f"replica {replica}: non-finite stress"
    return tr, ""


def dilute_viscosity(params: SuspensionParams, l_max: int = 16,
                     window: tuple[float, float] | None = None) -> float:
    """Dipolar viscosity of non-interacting swimmers from the kinetic layer.

    This is the part of the IBM dipolar stress that survives without any
    interaction; subtracting it isolates the interaction contribution.  With
    noise the steady state is used.  Without noise Jeffery orbits are closed
    and there is no steady state, so the viscosity is averaged over the
    sampling ``window`` = (burn_in, duration) starting from isotropy, as the
    simulation does.
    """
    grid = SphereGrid(l_max)
    kernel = shear_kernel(params.gamma, params.B)
    if params.D > 0:
        rep = steady_state(kernel, params.D, l_max=l_max, dt=0.05, t_max=200.0)
        if not rep.steady_reached:
            raise InstabilityError(f"dilute steady state not reached (residual {rep.residual:.3e})")
        return eta_from_density(rep.density.values(grid), grid, params)
    if window is None:
        raise ValueError("a sampling window is required without rotational noise")
    burn_in, duration = window
    dt = 0.01
    rep = evolve(OrientationDensity.uniform(l_max), kernel, 0.0, dt, duration, record_every=1)
    etas = [eta_from_density(OrientationDensity(c, t).values(grid), grid, params)
            for t, c in rep.history if t >= burn_in - 1e-12]
    return float(np.mean(etas))


def _formula_row(value, params, config) -> SweepRow:
    coeffs = compute_ACD(build_density(config.density, params), config.quadrature)
    eta = eta_int(params, coeffs)
    n12, n23 = normal_stresses(params, coeffs)
    try:
        dh = effective_noise(params, coeffs)
    except ParameterRegimeError:
        dh = None
    return SweepRow(
        value=value, eta_int_formula=eta, eta_int_ibm_mean=None, eta_int_ibm_stderr=None,
        N12=n12, N23=n23, D_hat=dh, eta_int_formula_relative=eta / params.eta0,
        eta_int_rederived=eta_int(params, coeffs, "rederived"),
        phi=params.phi, rho=params.rho, A_hat=coeffs.A_hat,
    )


def run_sweep(config: ExperimentConfig, out_dir: Path | None = None, ibm: bool | None = None,
              replicas: int | None = None) -> SweepResult:
    """Formula prediction and (optionally) an IBM ensemble for every swept value.

    The IBM interaction viscosity is the ensemble total (dipolar plus
    collision stress over gamma) minus the dilute kinetic baseline.  Replicas
    that fail flag their row and the sweep continues with the rest.
    """
    if config.sweep is None:
        raise SwimRheoError("run_sweep needs a sweep section")
    start = time.time()
    axis = config.sweep["parameter"]
    values = config.sweep["values"]
    ibm_cfg = dict(config.ibm)
    use_ibm = ibm_cfg["enabled"] if ibm is None else ibm
    n_rep = replicas or config.seeds["count"]
    master = config.seeds["master"]
    rows = []
    jobs = []
    for i, v in enumerate(values):
        p = params_at(config, axis, v)
        rows.append(_formula_row(v, p, config))
        if use_ibm:
            if p.gamma == 0:
                rows[-1].flagged = True
                rows[-1].message = "no shear: IBM viscosity undefined"
                continue
            jobs += [(p, ibm_cfg, master, i, r) for r in range(n_rep)]
    if jobs:
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                results = list(pool.map(_ibm_replica, jobs))
        else:
            results = [_ibm_replica(j) for j in jobs]
        by_point: dict[int, list] = {}
        for (p, _, _, i, _), (tr, msg) in zip(jobs, results):
            by_point.setdefault(i, []).append((p, tr, msg))
        for i, items in by_point.items():
            row = rows[i]
            p = items[0][0]
            good = [tr for _, tr, _ in items if tr is not None]
            msgs = [m for _, _, m in items if m]
            if msgs:
                row.flagged = True
                row.message = "; ".join(msgs)
                log.warning("sweep point %s=%s flagged: %s", axis, row.value, row.message)
            if good:
                est = effective_viscosity_ibm(good, p, burn_in=ibm_cfg["burn_in"])
                row.eta_dilute_kinetic = dilute_viscosity(p, window=(ibm_cfg["burn_in"], ibm_cfg["duration"]))
                row.eta_int_ibm_mean = est.total - row.eta_dilute_kinetic
                row.eta_int_ibm_stderr = est.total_stderr
                row.eta_ibm_dipolar_mean = est.dipolar
                row.eta_ibm_dipolar_stderr = est.dipolar_stderr
                row.eta_ibm_collision_mean = est.collision
                row.eta_ibm_collision_stderr = est.collision_stderr
                row.ibm_runs = len(good)
    result = SweepResult(axis, rows, elapsed=time.time() - start)
    if out_dir is not None:
        header = audit_header(config)
        header["sweep"] = f"{axis} = {values}"
        header["ibm"] = ", ".join(f"{k}={v}" for k, v in sorted(ibm_cfg.items())) if use_ibm else "disabled"
        if use_ibm:
            header["replicas"] = n_rep
        columns = [f"{name} [{unit}]" for name, unit in SWEEP_COLUMNS]
        name = f"sweep_{config.preset or axis}.csv"
        result.path = Path(out_dir) / name
        _write_csv(result.path, header, columns, [r.values() for r in rows])
    return result


# -- cross-layer comparison -------------------------------------------------

@dataclass
class CompareReport:
    B: float
    checks: list = field(default_factory=list)  # (name, value, tolerance, passed)
    values: dict = field(default_factory=dict)
    partial: bool = False
    notes: list = field(default_factory=list)

    def add(self, name, value, tol=None, passed=None):
        if passed is None and tol is not None:
            passed = bool(value <= tol)
        self.checks.append((name, value, tol, passed))

    def lines(self):
        out = []
        for name, value, tol, passed in self.checks:
            status = "INFO" if passed is None else ("PASS" if passed else "FAIL")
            tol_s = "" if tol is None else f" (tolerance {tol:.3g})"
            out.append(f"{status} {name} = {fmt(value)}{tol_s}")
        out += [f"NOTE {n}" for n in self.notes]
        if self.partial:
            out.append("NOTE report is partial")
        return out


#: kinetic-vs-asymptotic L-infinity distance divided by B^3, frozen from a
#: calibration at B = 0.05 with the documented compare parameters
COMPARE_CUBIC_CONSTANT = 1.5


def compare_layers(config: ExperimentConfig, ibm_replicas: int | None = None, ibm: bool = True,
                   l_max: int | None = None) -> CompareReport:
    """Kinetic steady state vs small-B formula vs IBM orientation histogram."""
    params = config.params
    if params.B > 0.2:
        raise SwimRheoError("layer comparison is for small B (<= 0.2)")
    rep = CompareReport(params.B)
    spec = build_density(config.density, params)
    coeffs = compute_ACD(spec, config.quadrature)
    l_max = l_max or config.kinetic["l_max"]
    grid = SphereGrid(l_max)
    a, b = grid.mesh()
    formula = {conv: pd_asymptotic(a, b, params.B, params, coeffs, conv) for conv in ("published", "rederived")}
    rep.values["eta_int_formula"] = eta_int(params, coeffs)
    rep.values["eta_int_rederived"] = eta_int(params, coeffs, "rederived")

    kin = None
    try:
        kernel = reduced_kernel(coeffs, params)
        free = reduced_kernel(coeffs, params.with_(U0=0.0))
        kc = config.kinetic
        sol = steady_state(kernel, params.D, l_max=l_max, dt=kc["dt"], t_max=kc["t_max"], tol=kc["tol"])
        sol_free = steady_state(free, params.D, l_max=l_max, dt=kc["dt"], t_max=kc["t_max"], tol=kc["tol"])
        if not (sol.steady_reached and sol_free.steady_reached):
            rep.partial = True
            rep.notes.append(f"kinetic steady state not reached (residual {sol.residual:.3e})")
        else:
            kin = sol.density.values(grid)
            for conv, P in formula.items():
                diff = kin - P
                rep.add(f"kinetic_vs_{conv}_Linf", float(np.max(np.abs(diff))),
                        COMPARE_CUBIC_CONSTANT * params.B**3)
                rep.add(f"kinetic_vs_{conv}_L2", float(np.sqrt(grid.integrate(diff**2))))
            eta_k = eta_from_density(kin, grid, params) - eta_from_density(sol_free.density.values(grid), grid, params)
            rep.values["eta_int_kinetic"] = eta_k
    except SwimRheoError as exc:
        rep.partial = True
        rep.notes.append(f"kinetic layer unavailable: {exc}")

    if ibm and params.gamma > 0:
        n_rep = ibm_replicas or config.seeds["count"]
        ibm_cfg = dict(config.ibm)
        dt = ibm_cfg["dt"] or default_dt(params)
        n_steps = int(round(ibm_cfg["duration"] / dt))
        with_h, without = [], []
        snaps = []
        for r in range(n_rep):
            for inter, sink in ((Interactions(True, ibm_cfg["collisions"]), with_h),
                                (Interactions(False, ibm_cfg["collisions"]), without)):
                rng = replica_rng(config.seeds["master"], 0, r)
                try:
                    tr = simulate(params, n_steps, rng, dt=dt, sample_every=ibm_cfg["sample_every"],
                                  interactions=inter, record_orientations=inter.hydrodynamic)
                except (StepSizeError, InstabilityError) as exc:
                    rep.partial = True
                    rep.notes.append(f"IBM replica {r} failed: {exc}")
                    continue
                sink.append(tr)
                if inter.hydrodynamic:
                    keep = tr.times >= ibm_cfg["burn_in"]
                    snaps.append(tr.orientations[keep])
        if with_h and without:
            e1 = effective_viscosity_ibm(with_h, params, ibm_cfg["burn_in"])
            e0 = effective_viscosity_ibm(without, params, ibm_cfg["burn_in"])
            rep.values["eta_int_ibm"] = e1.dipolar - e0.dipolar
            rep.values["eta_int_ibm_stderr"] = float(np.hypot(e1.dipolar_stderr, e0.dipolar_stderr))
            hist = orientation_histogram(np.concatenate(snaps), grid)
            for conv, P in formula.items():
                rep.add(f"ibm_hist_vs_{conv}_Linf", float(np.max(np.abs(hist - P))))
            if kin is not None:
                rep.add("ibm_hist_vs_kinetic_Linf", float(np.max(np.abs(hist - kin))))
    for k in ("eta_int_formula", "eta_int_rederived", "eta_int_kinetic", "eta_int_ibm"):
        if k in rep.values:
            rep.add(k, rep.values[k])
    for formula_key in ("eta_int_formula", "eta_int_rederived"):
        keys = [formula_key] + [k for k in ("eta_int_kinetic", "eta_int_ibm") if k in rep.values]
        if len(keys) > 1:
            signs = {float(np.sign(rep.values[k])) for k in keys}
            suffix = "published" if formula_key == "eta_int_formula" else "rederived"
            rep.add(f"eta_int_signs_agree_{suffix}", float(len(signs) == 1), passed=len(signs) == 1)
    return rep


# -- identity suites ----------------------------------------------------------

@dataclass
class IdentityCheck:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (tolerance {self.tolerance:.1e})"


def fourier_identity_checks(n_cases: int = 100, seed: int = 0) -> list:
    """Divergence-free velocity, Stokes residual and |k|-independence of the velocity gradient."""
    rng = np.random.default_rng(seed)
    div = res = scale_dep = 0.0
    for _ in range(n_cases):
        k = rng.standard_normal(3)
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        sig = dipole_tensor(d, rng.uniform(-2, 2))
        eta0 = rng.uniform(0.5, 2.0)
        u = fourier_velocity(k, sig, eta0)
        div = max(div, abs(np.dot(k, u)) / np.linalg.norm(k))
        res = max(res, float(np.max(np.abs(stokes_residual(k, sig, eta0)))))
        grads = [np.outer(1j * s * k, fourier_velocity(s * k, sig, eta0)) for s in (0.1, 1.0, 37.0)]
        scale_dep = max(scale_dep, max(float(np.max(np.abs(g - grads[1]))) for g in grads))
        sym = fourier_sym_gradient(5.0 * k, sig, eta0)
        full = np.outer(1j * k, fourier_velocity(k, sig, eta0))
        scale_dep = max(scale_dep, float(np.max(np.abs(0.5 * (full + full.T) - sym))))
    return [
        IdentityCheck("k . u~ = 0", div, 1e-12),
        IdentityCheck("Fourier Stokes residual", res, 1e-12),
        IdentityCheck("|k|-independence of F[grad u]", scale_dep, 1e-12),
    ]


def lemma_checks(n_cases: int = 100, seed: int = 1, l_max: int = 8) -> IdentityCheck:
    """div_d [d x (d x M d)] = 3 d.M d - tr M against the spectral divergence."""
    rng = np.random.default_rng(seed)
    grid = SphereGrid(l_max)
    pts = grid.points()
    worst = 0.0
    for _ in range(n_cases):
        M = rng.standard_normal((3, 3))
        spectral = sph_divergence(double_cross_field(grid, M)).values
        worst = max(worst, float(np.max(np.abs(spectral - lemma_divergence(M, pts)))))
    return IdentityCheck("lemma vs spectral divergence (100 random matrices)", worst, 1e-8)


def dipole_average_check(l_max: int = 4) -> IdentityCheck:
    grid = SphereGrid(l_max)
    sig = dipole_tensor(grid.points(), 1.0)
    integral = np.einsum("ab,abij->ij", grid.weights, sig)
    return IdentityCheck("integral of the dipole tensor over orientations", float(np.max(np.abs(integral))), 1e-12)


def i_term_checks(spec, params: SuspensionParams, l_max: int = 12) -> list:
    rep = i_terms(spec, params, l_max=l_max)
    return [
        IdentityCheck("I2 vanishes (relative)", rep.relative_residual(2), 1e-10),
        IdentityCheck("I3 vanishes (relative)", rep.relative_residual(3), 1e-10),
        IdentityCheck("I1 vs closed form (relative)", rep.relative_residual(1), 1e-6),
        IdentityCheck("I4 vs closed form (relative)", rep.relative_residual(4), 1e-6),
    ], rep


def identity_suite(spec=None, params: SuspensionParams | None = None) -> list:
    """All analytic identity checks plus the I-term quadratures."""
    from .rheology import SpatialDensitySpec

    spec = spec or SpatialDensitySpec.gaussian(1.0, 0.7, amplitude=1.0, tilt=0.3, n_particles=200)
    params = params or SuspensionParams(N=200, L=5.0, B=0.1, gamma=1.0)
    checks = fourier_identity_checks() + [lemma_checks(), dipole_average_check()]
    terms, _ = i_term_checks(spec, params)
    return checks + terms


__all__ = [
    "replica_rng", "run_sweep", "SweepResult", "SweepRow", "compare_layers", "CompareReport",
    "identity_suite", "IdentityCheck", "params_at", "audit_header", "fmt",
]
