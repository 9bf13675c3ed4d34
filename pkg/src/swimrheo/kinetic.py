"""Galerkin spectral solver for the orientation Fokker-Planck equation

    dP/dt = -div_d ( [ int K(d, d') P(d') dS' + k(d) ] P ) + D lap_d P

on the unit sphere.  P is stored as a half spectrum of orthonormal spherical
harmonics.  Diffusion and an optional rigid rotation about the z axis (the
vorticity part of a planar shear) are integrated exactly by an integrating
factor; everything else is stepped with a second-order Runge-Kutta method
and evaluated pseudo-spectrally on a grid that resolves band 2 l_max.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AccuracyError, ContractViolation, InstabilityError, StepSizeError
from .sphere import BandTransform, HarmonicCoeffs, SphereGrid, SphericalField
from .stokes import jeffery_rhs, shear_background

TANGENCY_TOL = 1e-10


# -- densities ------------------------------------------------------------

@dataclass(frozen=True)
class OrientationDensity:
    coeffs: HarmonicCoeffs
    t: float = 0.0

    @property
    def l_max(self):
        return self.coeffs.l_max

    @property
    def mass(self):
        return self.coeffs.mass

    @classmethod
    def uniform(cls, l_max: int) -> "OrientationDensity":
        half = np.zeros((l_max + 1, l_max + 1), dtype=complex)
        half[0, 0] = 1.0 / np.sqrt(4 * np.pi)
        return cls(HarmonicCoeffs.from_half(half))

    @classmethod
    def from_function(cls, fn, l_max: int, t: float = 0.0) -> "OrientationDensity":
        """Project ``fn(alpha, beta)`` onto harmonics up to ``l_max``."""
        g = SphereGrid(l_max, n_beta=2 * l_max + 2, n_alpha=4 * l_max + 4)
        a, b = g.mesh()
        half = g.analyze(np.asarray(fn(a, b), dtype=float) * np.ones(g.shape))
        return cls(HarmonicCoeffs.from_half(half[: l_max + 1, : l_max + 1]), t)

    def values(self, grid: SphereGrid | None = None) -> np.ndarray:
        grid = SphereGrid(self.l_max) if grid is None else grid
        half = _pad(self.coeffs.half(), grid.l_max)
        return grid.synthesize(half)

    def norm(self) -> float:
        return self.coeffs.norm()


def _pad(half, l_max):
    out = np.zeros((l_max + 1, l_max + 1), dtype=complex)
    k = min(l_max, half.shape[0] - 1)
    out[: k + 1, : k + 1] = half[: k + 1, : k + 1]
    return out


def _half_norm(half):
    """L2 norm of the real field represented by a half spectrum."""
    w = np.full(half.shape[1], 2.0)
    w[0] = 1.0
    return float(np.sqrt(np.sum(w[None, :] * np.abs(half) ** 2)))


# -- kernels --------------------------------------------------------------

class KernelSpec:
    """Drift specification for the kinetic equation.

    background   callable d -> k(d), Cartesian tangent vectors, shape (..., 3)
    rotation     rigid rotation rate about z (alpha-dot); part of k(d) that is
                 integrated exactly
    pair         callable (d, d') -> K(d, d') with broadcasting, shape (..., 3);
                 tabulated on the solver grid before use
    moment_drift callable (d, second_moment, mass) -> drift for kernels that
                 depend on P only through int d'd'^T P dS' (closed form)
    table        pre-tabulated kernel: dict with keys ``points`` (n, 3) matching
                 the solver grid, ``dprime`` (m, 3), ``weights`` (m,), ``K`` (n, m, 3)
    dprime_band  harmonic band of K in d'; P is truncated to it before the
                 d' quadrature, which is then exact
    meta         free-form annotations (e.g. consistency checks of a kernel)
    """

    def __init__(
        self,
        background: Callable | None = None,
        rotation: float = 0.0,
        pair: Callable | None = None,
        moment_drift: Callable | None = None,
        table: dict | None = None,
        dprime_band: int = 2,
        name: str = "",
        meta: dict | None = None,
    ):
        if sum(x is not None for x in (pair, moment_drift, table)) > 1:
            raise ValueError("give at most one of pair, moment_drift, table")
        self.background = background
        self.rotation = float(rotation)
        self.pair = pair
        self.moment_drift = moment_drift
        self.table = table
        self.dprime_band = int(dprime_band)
        self.name = name
        self.meta = dict(meta or {})

    @property
    def has_interactions(self):
        return any(x is not None for x in (self.pair, self.moment_drift, self.table))

    def with_interaction(self, **kw) -> "KernelSpec":
        base = dict(background=self.background, rotation=self.rotation, name=self.name,
                    dprime_band=self.dprime_band, meta=self.meta)
        base.update(kw)
        return KernelSpec(**base)

    def prepare(self, grid: SphereGrid) -> "_PreparedKernel":
        return _PreparedKernel(self, grid)


def shear_kernel(gamma: float, B: float) -> KernelSpec:
    """Background drift of a swimmer in the planar shear u = (0, gamma x, 0).

    The vorticity part is the rigid rotation alpha-dot = gamma/2; the strain
    part is -B d x (d x E d).
    """
    _, E, _ = shear_background(gamma)

    def strain(points):
        return jeffery_rhs(points, np.zeros(3), E, B)

    return KernelSpec(background=strain, rotation=0.5 * gamma, name=f"shear(gamma={gamma}, B={B})")


def _rotation_field(points, rate):
    ez = np.array([0.0, 0.0, 1.0])
    return rate * np.cross(ez, points)


def _check_tangent(points, vec, what):
    scale = max(1.0, float(np.max(np.abs(vec))) if vec.size else 1.0)
    normal = np.abs(np.sum(points * vec, axis=-1))
    if normal.size and float(np.max(normal)) > TANGENCY_TOL * scale:
        raise ContractViolation(f"{what} is not tangent to the sphere (normal part {np.max(normal):.3e})")


class _PreparedKernel:
    """Kernel evaluated against a specific grid."""

    def __init__(self, spec: KernelSpec, grid: SphereGrid):
        self.spec = spec
        self.grid = grid
        pts = grid.points()
        self.points = pts
        self.background = np.zeros(pts.shape)
        if spec.background is not None:
            self.background = np.asarray(spec.background(pts), dtype=float)
            _check_tangent(pts, self.background, "background drift k(d)")
        band = spec.dprime_band
        self.dp_grid = SphereGrid(2 * band)
        self.dp_points = self.dp_grid.points().reshape(-1, 3)
        self.dp_weights = self.dp_grid.weights.ravel()
        self.K = None
        if spec.pair is not None:
            self.K = tabulate_pair(spec.pair, pts.reshape(-1, 3), self.dp_points)
        elif spec.table is not None:
            t = spec.table
            if np.asarray(t["points"]).shape != (pts.size // 3, 3) or not np.allclose(t["points"], pts.reshape(-1, 3)):
                raise ContractViolation("tabulated kernel does not match the solver grid")
            self.dp_points = np.asarray(t["dprime"], dtype=float)
            self.dp_weights = np.asarray(t["weights"], dtype=float)
            self.K = np.asarray(t["K"], dtype=float)
            self.dp_grid = None
        if self.K is not None:
            _check_tangent(pts.reshape(-1, 1, 3), self.K, "kernel K(d, d')")
        if spec.moment_drift is not None:
            probe = spec.moment_drift(pts, np.diag([0.5, 0.3, 0.2]) + 0.1, 1.0)
            _check_tangent(pts, np.asarray(probe), "moment kernel")

    def _dprime_values(self, half):
        if self.dp_grid is None:
            raise ContractViolation("tabulated kernel needs its own d' values")
        band = self.spec.dprime_band
        return self.dp_grid.synthesize(_pad(_pad(half, band), self.dp_grid.l_max)).ravel()

    def second_moment(self, half):
        vals = self._dprime_values(half)
        w = self.dp_weights * vals
        return np.einsum("n,ni,nj->ij", w, self.dp_points, self.dp_points), float(np.sum(w))

    def interaction(self, half):
        spec = self.spec
        if spec.moment_drift is not None:
            M, mass = self.second_moment(half)
            return np.asarray(spec.moment_drift(self.points, M, mass), dtype=float)
        if self.K is not None:
            if self.dp_grid is None:
                # tabulated kernels are integrated against P sampled on their own nodes
                vals = _synth_at(half, self.dp_points)
            else:
                vals = self._dprime_values(half)
            v = np.einsum("pqi,q->pi", self.K, self.dp_weights * vals)
            return v.reshape(self.points.shape)
        return np.zeros(self.points.shape)

    def drift(self, half, include_rotation=True):
        v = self.background + self.interaction(half)
        if include_rotation and self.spec.rotation:
            v = v + _rotation_field(self.points, self.spec.rotation)
        return v


def _synth_at(half, points):
    """Evaluate a half spectrum at arbitrary unit vectors (slow path)."""
    from .sphere import angles_from_vector, normalized_legendre

    l_max = half.shape[0] - 1
    a, b = angles_from_vector(points)
    plm = normalized_legendre(l_max, np.cos(b))
    m = np.arange(l_max + 1)
    phase = np.exp(1j * np.outer(a, m))
    fac = np.full(l_max + 1, 2.0)
    fac[0] = 1.0
    return np.real(np.einsum("nlm,lm,nm,m->n", plm, half, phase, fac))


def tabulate_pair(pair, points, dprime, chunk=4096):
    """K[n, m, :] = pair(points[n], dprime[m])."""
    out = np.empty((points.shape[0], dprime.shape[0], 3))
    for s in range(0, points.shape[0], chunk):
        p = points[s : s + chunk]
        out[s : s + chunk] = pair(p[:, None, :], dprime[None, :, :])
    return out


def assemble_flux(P: OrientationDensity, kernel: KernelSpec, grid: SphereGrid | None = None) -> SphericalField:
    """V(d) = int K(d, d') P(d') dS' + k(d) as a tangent field on ``grid``."""
    grid = SphereGrid(P.l_max) if grid is None else grid
    prepared = kernel.prepare(grid)
    v = prepared.drift(P.coeffs.half())
    return SphericalField.from_cartesian(grid, v)


# -- solver ---------------------------------------------------------------

def _pack(half):
    """Real vector of the l >= 1 coefficients of a half spectrum."""
    L = half.shape[0] - 1
    parts = [half[1:, 0].real]
    for m in range(1, L + 1):
        parts += [half[m:, m].real, half[m:, m].imag]
    return np.concatenate(parts)


def _unpack(vec, L, c00):
    half = np.zeros((L + 1, L + 1), dtype=complex)
    half[0, 0] = c00
    half[1:, 0] = vec[:L]
    i = L
    for m in range(1, L + 1):
        n = L + 1 - m
        half[m:, m] = vec[i : i + n] + 1j * vec[i + n : i + 2 * n]
        i += 2 * n
    return half


@dataclass
class SolveReport:
    density: OrientationDensity
    steps: int
    residual: float
    steady_reached: bool = False
    positivity_violated: bool = False
    min_value: float = np.inf
    max_norm: float = 0.0
    history: list = field(default_factory=list)
    newton_iterations: int = 0


class KineticSolver:
    """Integrating-factor RK2 stepper at band ``l_max``."""

    def __init__(self, kernel: KernelSpec, D: float, l_max: int, dt: float,
                 blowup_factor: float = 1e3, positivity_tol: float = 1e-6):
        if dt <= 0:
            raise StepSizeError(f"time step must be positive, got {dt}")
        if D < 0:
            raise ValueError("diffusion coefficient must be non-negative")
        self.kernel = kernel
        self.D = float(D)
        self.l_max = int(l_max)
        self.dt = float(dt)
        self.blowup_factor = blowup_factor
        self.positivity_tol = positivity_tol
        self.grid = SphereGrid(2 * self.l_max)
        self.prepared = kernel.prepare(self.grid)
        self.band = BandTransform(self.grid, self.l_max)
        ea, eb = self.grid.basis()
        self._ea, self._eb = ea, eb
        l = np.arange(self.l_max + 1)[:, None]
        m = np.arange(self.l_max + 1)[None, :]
        self._mask = m <= l
        self._lin = -self.D * l * (l + 1.0) - 1j * m * kernel.rotation
        self._lin = np.where(self._mask, self._lin, 0.0)
        self._E = np.exp(self._lin * self.dt)

    def nonlinear(self, half):
        """Explicit tendency -div(V P) projected to band l_max."""
        P = self.band.synthesize(half)
        V = self.prepared.drift(half, include_rotation=False)
        fa = np.sum(V * self._ea, -1) * P
        fb = np.sum(V * self._eb, -1) * P
        div = self.band.divergence(fa, fb)
        out = -div * self._mask
        scale = max(1.0, float(np.max(np.abs(out))))
        if abs(out[0, 0]) > 1e-10 * scale:
            raise AccuracyError(f"drift produced a mass tendency {abs(out[0, 0]):.3e}")
        out[0, 0] = 0.0
        return out

    def tendency(self, half):
        return self.nonlinear(half) + self._lin * half

    def residual(self, half):
        return _half_norm(self.tendency(half))

    def step(self, half):
        dt = self.dt
        k1 = self.nonlinear(half)
        mid = self._E * (half + dt * k1)
        k2 = self.nonlinear(mid)
        new = self._E * half + 0.5 * dt * (self._E * k1 + k2)
        new[:, 0] = new[:, 0].real
        return new

    def newton(self, half, tol: float = 1e-9, max_iter: int = 8):
        """Solve tendency(P) = 0 at fixed mass by Newton's method.

        The tendency is at most quadratic in P, so central differences give
        the Jacobian exactly up to rounding.  Returns (half, residual, iterations).
        """
        L = self.l_max
        half = _pad(half, L)
        c00 = half[0, 0]
        x = _pack(half)
        h = 1e-3
        res = self.residual(half)
        it = 0
        while res > tol and it < max_iter:
            f0 = _pack(self.tendency(_unpack(x, L, c00)))
            J = np.empty((x.size, x.size))
            for j in range(x.size):
                e = np.zeros(x.size)
                e[j] = h
                J[:, j] = (_pack(self.tendency(_unpack(x + e, L, c00)))
                           - _pack(self.tendency(_unpack(x - e, L, c00)))) / (2 * h)
            try:
                x = x - np.linalg.solve(J, f0)
            except np.linalg.LinAlgError:
                break
            it += 1
            res = self.residual(_unpack(x, L, c00))
        return _unpack(x, L, c00), res, it

    def min_value(self, half):
        return float(np.min(self.band.synthesize(half)))

    def run(self, P0: OrientationDensity, T: float, check_every: int = 20, tol: float | None = None,
            record_every: int | None = None, t0: float = 0.0) -> SolveReport:
        half = _pad(P0.coeffs.half(), self.l_max)
        n0 = max(_half_norm(half), 1e-300)
        n_steps = int(np.ceil(T / self.dt - 1e-9))
        report = SolveReport(P0, 0, np.inf, max_norm=n0)
        minv = self.min_value(half)
        t = t0
        for i in range(1, n_steps + 1):
            half = self.step(half)
            t = t0 + i * self.dt
            nrm = _half_norm(half)
            if not np.isfinite(nrm) or nrm > self.blowup_factor * n0:
                raise InstabilityError(
                    f"L2 norm grew to {nrm:.3e} at t={t:.4g}; reduce dt or raise l_max"
                )
            report.max_norm = max(report.max_norm, nrm)
            if record_every and i % record_every == 0:
                report.history.append((t, HarmonicCoeffs.from_half(half.copy())))
            if i % check_every == 0 or i == n_steps:
                minv = min(minv, self.min_value(half))
                if tol is not None:
                    res = self.residual(half)
                    if res <= tol:
                        report.steps = i
                        report.residual = res
                        report.steady_reached = True
                        break
        else:
            report.steps = n_steps
            report.residual = self.residual(half)
        report.density = OrientationDensity(HarmonicCoeffs.from_half(half), t)
        report.min_value = minv
        report.positivity_violated = minv < -self.positivity_tol
        if tol is not None and report.residual <= tol:
            report.steady_reached = True
        return report


def default_dt(kernel: KernelSpec, gamma: float | None = None, l_max: int = 32) -> float:
    """min(1e-2/gamma, CFL-type bound from the explicit background speed)."""
    grid = SphereGrid(8)
    speed = 0.0
    if kernel.background is not None:
        speed = float(np.max(np.linalg.norm(kernel.background(grid.points()), axis=-1)))
    bound = np.inf if speed == 0 else 0.5 / (speed * max(l_max, 1))
    cap = 1e-2 / gamma if gamma else 1e-2
    return float(min(cap, bound))


def evolve(P0: OrientationDensity, kernel: KernelSpec, D: float, dt: float, T: float,
           l_max: int | None = None, record_every: int | None = None) -> SolveReport:
    """March from P0 to time T."""
    if abs(P0.mass - 1.0) > 1e-8:
        raise ValueError(f"initial density has mass {P0.mass}, expected 1")
    solver = KineticSolver(kernel, D, l_max or P0.l_max, dt)
    return solver.run(P0, T, record_every=record_every, t0=P0.t)


def steady_state(kernel: KernelSpec, D: float, P0: OrientationDensity | None = None, l_max: int = 32,
                 dt: float | None = None, tol: float = 1e-9, t_max: float | None = None,
                 gamma: float | None = None, check_every: int = 20, polish: bool = True) -> SolveReport:
    """March until the L2 norm of dP/dt drops below ``tol`` or ``t_max`` is reached.

    The fixed point of the time-discrete scheme differs from the steady state
    by O(dt^2), which can leave the residual above ``tol``.  With ``polish``
    the marched state is then refined by Newton iteration on dP/dt = 0.
    """
    P0 = OrientationDensity.uniform(l_max) if P0 is None else P0
    if gamma is None:
        gamma = 2.0 * abs(kernel.rotation) if kernel.rotation else None
    dt = default_dt(kernel, gamma, l_max) if dt is None else dt
    if t_max is None:
        t_max = 1e3 / gamma if gamma else 1e3
    solver = KineticSolver(kernel, D, l_max, dt)
    report = solver.run(P0, t_max, check_every=check_every, tol=tol)
    if polish and not report.steady_reached and D > 0:
        half, res, it = solver.newton(report.density.coeffs.half(), tol=tol)
        report.newton_iterations = it
        if res < report.residual:
            report.density = OrientationDensity(HarmonicCoeffs.from_half(half), report.density.t)
            report.residual = res
            report.min_value = min(report.min_value, solver.min_value(half))
            report.positivity_violated = report.min_value < -solver.positivity_tol
        report.steady_reached = res <= tol
    return report


@dataclass
class SmoothingReport:
    times: np.ndarray
    norms: dict
    diffusion_disabled: bool = False

    def envelope(self, m):
        """t^m ||P(t)||^2_{H^(s+m)} for each sampled time."""
        return self.times**m * self.norms[m]


def smoothing_probe(P0: OrientationDensity, D: float, T: float, kernel: KernelSpec | None = None,
                    s: float = 0.0, m_values=(1, 2), n_times: int = 9, t_min: float | None = None,
                    dt: float | None = None) -> SmoothingReport:
    """Squared Sobolev norms ||P(t)||^2_{H^(s+m)} at log-spaced times in [t_min, T]."""
    if D <= 0:
        return SmoothingReport(np.array([]), {}, diffusion_disabled=True)
    kernel = KernelSpec() if kernel is None else kernel
    t_min = T / 100.0 if t_min is None else t_min
    times = np.geomspace(t_min, T, n_times)
    dt = min(t_min / 4.0, 1e-2) if dt is None else dt
    solver = KineticSolver(kernel, D, P0.l_max, dt)
    half = P0.coeffs.half()
    l = np.arange(P0.l_max + 1)[:, None]
    wm = np.full(P0.l_max + 1, 2.0)
    wm[0] = 1.0
    norms = {m: np.empty(n_times) for m in m_values}
    t = 0.0
    for i, target in enumerate(times):
        n = int(round((target - t) / dt))
        for _ in range(n):
            half = solver.step(half)
        t += n * dt
        times[i] = t
        for m in m_values:
            w = (1.0 + l * (l + 1.0)) ** (s + m)
            norms[m][i] = float(np.sum(w * wm[None, :] * np.abs(half) ** 2))
    return SmoothingReport(times, norms)


def lipschitz_ratio(P_a: OrientationDensity, P_b: OrientationDensity, kernel: KernelSpec, D: float,
                    T: float, dt: float) -> float:
    """sup_t ||P_a(t) - P_b(t)|| / ||P_a(0) - P_b(0)|| over steps in [0, T]."""
    solver = KineticSolver(kernel, D, P_a.l_max, dt)
    a = P_a.coeffs.half()
    b = P_b.coeffs.half()
    d0 = _half_norm(a - b)
    worst = 1.0
    for _ in range(int(round(T / dt))):
        a = solver.step(a)
        b = solver.step(b)
        worst = max(worst, _half_norm(a - b) / d0)
    return worst


# -- output ---------------------------------------------------------------

def write_density_csv(path, P: OrientationDensity, grid: SphereGrid | None = None, header: dict | None = None):
    grid = SphereGrid(P.l_max) if grid is None else grid
    vals = P.values(grid)
    a, b = grid.mesh()
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(["alpha [rad]", "beta [rad]", "P [1/sr]"])
        for ai, bi, vi in zip(a.ravel(), b.ravel(), vals.ravel()):
            w.writerow([f"{ai:.17g}", f"{bi:.17g}", f"{vi:.17g}"])


def write_coefficients_csv(path, P: OrientationDensity, header: dict | None = None):
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(["l", "m", "re", "im"])
        L = P.l_max
        for l in range(L + 1):
            for m in range(-l, l + 1):
                c = P.coeffs.get(l, m)
                w.writerow([l, m, f"{c.real:.17g}", f"{c.imag:.17g}"])
