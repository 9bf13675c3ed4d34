"""Small-B asymptotics of the orientation distribution and the rheology it implies.

The spatial density enters only through its reduced planar profile
H(k1, k2), with (F[P_x])^2 = delta(k3) H^2.  All k-space integrals are
therefore planar, and every interaction quantity below is a moment of the
angular weight

    W(theta) = int_0^inf H^2(k cos theta, k sin theta) mu(k) dk,

where mu(k) = k (planar area element, default) or mu(k) = k^2.

Two sets of closed forms are provided.  ``published`` reproduces the
published coefficients verbatim.  ``rederived`` uses the coefficients
recomputed from the same model with the sign and factor conventions of
:mod:`swimrheo.stokes`; they are what the numerical quadratures and the
kinetic solver reproduce.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AccuracyError,
    ParameterRegimeError,
    ShearRequiredError,
    SwimRheoError,
)
from .kinetic import KernelSpec, OrientationDensity, shear_kernel
from .params import SuspensionParams, UnitSystem
from .sphere import (
    SphereGrid,
    SphericalField,
    angles_from_vector,
    sph_divergence,
    sph_gradient,
)
from .stokes import dipole_tensor, fourier_E, fourier_omega

log = logging.getLogger(__name__)

CONVENTIONS = ("published", "rederived")
MEASURES = ("area", "literal")
KERNEL_DISCREPANCY_TOL = 1e-6

_EYE = np.eye(3)
_EPS = np.zeros((3, 3, 3))
_EPS[0, 1, 2] = _EPS[1, 2, 0] = _EPS[2, 0, 1] = 1.0
_EPS[0, 2, 1] = _EPS[2, 1, 0] = _EPS[1, 0, 2] = -1.0


# -- spatial density ------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSettings:
    """Resolution of the planar k-space quadratures.

    Polar specs use Gauss-Legendre in k on [0, k_max] and the trapezoidal
    rule in theta; the box uses Gauss panels one half-period wide on the
    square [0, box_periods * pi / L]^2 plus an analytic far-field tail.
    The error estimate compares this resolution with a doubled one.
    """

    n_radial: int = 48
    n_theta: int = 96
    k_max: float | None = None
    measure: str = "area"
    rtol: float = 1e-8
    box_periods: int = 48
    box_nodes: int = 8

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {MEASURES}, got {self.measure!r}")

    def refined(self) -> "QuadratureSettings":
        return replace(self, n_radial=2 * self.n_radial, n_theta=2 * self.n_theta,
                       box_nodes=2 * self.box_nodes)


class SpatialDensitySpec:
    """Reduced planar Fourier profile H(k1, k2) of the spatial density.

    Variants: ``uniform_box`` (a uniform density in the cube of half-width L),
    ``gaussian`` (possibly anisotropic and tilted) and ``tabulated`` (H on a
    polar (k, theta) grid).  ``n_particles`` is the N used in the normalized
    coefficient A_hat = A / N^2.
    """

    def __init__(self, kind: str, n_particles: float, **data):
        if kind not in ("uniform_box", "gaussian", "tabulated"):
            raise ValueError(f"unknown spatial density kind {kind!r}")
        if n_particles <= 0:
            raise ValueError("n_particles must be positive")
        self.kind = kind
        self.n_particles = float(n_particles)
        self.data = data

    def __repr__(self):
        items = {k: v for k, v in self.data.items() if np.isscalar(v)}
        return f"SpatialDensitySpec({self.kind}, N={self.n_particles:g}, {items})"

    @classmethod
    def uniform_box(cls, L: float, n_particles: float) -> "SpatialDensitySpec":
        """H^2 = sqrt(L) (sin(k1 L)/k1)^2 (sin(k2 L)/k2)^2."""
        if L <= 0:
            raise ValueError("L must be positive")
        return cls("uniform_box", n_particles, L=float(L))

    @classmethod
    def gaussian(cls, sigma_x: float, sigma_y: float | None = None, amplitude: float = 1.0,
                 tilt: float = 0.0, n_particles: float = 1.0) -> "SpatialDensitySpec":
        """H^2 = amplitude N^2 exp(-(sigma_x^2 k1'^2 + sigma_y^2 k2'^2)), k' rotated by ``tilt``."""
        sigma_y = sigma_x if sigma_y is None else sigma_y
        if sigma_x <= 0 or sigma_y <= 0 or amplitude < 0:
            raise ValueError("gaussian widths must be positive and the amplitude non-negative")
        return cls("gaussian", n_particles, sigma_x=float(sigma_x), sigma_y=float(sigma_y),
                   amplitude=float(amplitude), tilt=float(tilt))

    @classmethod
    def tabulated(cls, k, theta, H, n_particles: float = 1.0) -> "SpatialDensitySpec":
        """H sampled on the tensor grid k (ascending, >= 0) x theta (uniform on [0, 2 pi))."""
        k = np.asarray(k, dtype=float)
        theta = np.asarray(theta, dtype=float)
        H = np.asarray(H, dtype=float)
        if H.shape != (k.size, theta.size):
            raise ValueError(f"H has shape {H.shape}, expected {(k.size, theta.size)}")
        if np.any(np.diff(k) <= 0) or k[0] < 0:
            raise ValueError("k grid must be ascending and non-negative")
        step = 2 * np.pi / theta.size
        if not np.allclose(theta, theta[0] + step * np.arange(theta.size), atol=1e-9):
            raise ValueError("theta grid must be uniform over one period")
        if not np.all(np.isfinite(H)):
            raise ValueError("H must be finite")
        return cls("tabulated", n_particles, k=k, theta=theta, H=H)

    @classmethod
    def from_csv(cls, path, n_particles: float = 1.0) -> "SpatialDensitySpec":
        """Read a table with columns ``k, theta, H`` (one row per grid node)."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(x) for x in rec[:3]])
                except ValueError:
                    if rows:
                        raise
                    # header line
        rows = np.atleast_2d(np.array(rows, dtype=float))
        k = np.unique(rows[:, 0])
        theta = np.unique(rows[:, 1])
        if rows.shape[0] != k.size * theta.size:
            raise ValueError("tabulated profile is not a full (k, theta) grid")
        H = np.full((k.size, theta.size), np.nan)
        ik = np.searchsorted(k, rows[:, 0])
        it = np.searchsorted(theta, rows[:, 1])
        H[ik, it] = rows[:, 2]
        return cls.tabulated(k, theta, H, n_particles)

    def to_csv(self, path, k=None, theta=None):
        """Write the profile as a ``k, theta, H`` table.

        Non-tabulated specs are sampled on the given grids.
        """
        if self.kind == "tabulated":
            k, theta, H = self.data["k"], self.data["theta"], self.data["H"]
        else:
            if k is None or theta is None:
                raise ValueError("sampling grids k and theta are required")
            k = np.asarray(k, dtype=float)
            theta = np.asarray(theta, dtype=float)
            kk, tt = np.meshgrid(k, theta, indexing="ij")
            H = np.sqrt(self.h_squared(kk * np.cos(tt), kk * np.sin(tt)))
        with open(path, "w", newline="") as fh:
            fh.write(f"# spatial density profile, n_particles={self.n_particles:.17g}\n")
            w = csv.writer(fh)
            w.writerow(["k", "theta", "H"])
            for i, ki in enumerate(k):
                for j, tj in enumerate(theta):
                    w.writerow([f"{ki:.17g}", f"{tj:.17g}", f"{H[i, j]:.17g}"])

    def sampled(self, k, theta) -> "SpatialDensitySpec":
        k = np.asarray(k, dtype=float)
        theta = np.asarray(theta, dtype=float)
        kk, tt = np.meshgrid(k, theta, indexing="ij")
        H = np.sqrt(self.h_squared(kk * np.cos(tt), kk * np.sin(tt)))
        return SpatialDensitySpec.tabulated(k, theta, H, self.n_particles)

    @property
    def is_radial(self) -> bool:
        if self.kind == "gaussian":
            return self.data["sigma_x"] == self.data["sigma_y"]
        if self.kind == "tabulated":
            H = self.data["H"]
            return bool(np.allclose(H, H[:, :1], rtol=1e-14, atol=0))
        return False

    def h_squared(self, k1, k2):
        k1 = np.asarray(k1, dtype=float)
        k2 = np.asarray(k2, dtype=float)
        d = self.data
        if self.kind == "uniform_box":
            L = d["L"]
            return np.sqrt(L) * (L * np.sinc(k1 * L / np.pi)) ** 2 * (L * np.sinc(k2 * L / np.pi)) ** 2
        if self.kind == "gaussian":
            c, s = np.cos(d["tilt"]), np.sin(d["tilt"])
            p = c * k1 + s * k2
            q = -s * k1 + c * k2
            expo = d["sigma_x"] ** 2 * p * p + d["sigma_y"] ** 2 * q * q
            return d["amplitude"] * self.n_particles**2 * np.exp(-expo)
        # tabulated: bilinear in (k, theta), periodic in theta, zero beyond the table
        from scipy.interpolate import RegularGridInterpolator

        k, theta, H = d["k"], d["theta"], d["H"]
        th = np.concatenate([theta, [theta[0] + 2 * np.pi]])
        Hp = np.concatenate([H, H[:, :1]], axis=1)
        interp = RegularGridInterpolator((k, th), Hp, bounds_error=False, fill_value=0.0)
        kr = np.hypot(k1, k2)
        ang = np.mod(np.arctan2(k2, k1) - theta[0], 2 * np.pi) + theta[0]
        return interp(np.stack([kr, ang], axis=-1)) ** 2


# -- coefficients A, C, D -------------------------------------------------

@dataclass(frozen=True, eq=False)
class InteractionCoefficients:
    """A = (1/2) int sin^2(2 theta) H^2, C = -(1/2) int sin(4 theta) H^2,
    D = int cos(theta) sin(theta) H^2 over the plane with measure mu(k) dk dtheta.

    ``theta`` and ``w_theta`` hold the angular quadrature of W(theta) (nodes and
    weights including W); they give the kernel moments.  ``error`` is the
    difference to a refined quadrature.
    """

    A: float
    C: float
    D: float
    n_particles: float
    error: float = 0.0
    measure: str = "area"
    L: float | None = None
    theta: np.ndarray | None = field(default=None, repr=False)
    w_theta: np.ndarray | None = field(default=None, repr=False)

    @property
    def A_hat(self):
        return self.A / self.n_particles**2

    @property
    def C_hat(self):
        return self.C / self.n_particles**2

    @property
    def D_hat(self):
        return self.D / self.n_particles**2

    @property
    def A_tilde(self):
        """A L^(-5/2): deviation of the spatial density from uniform."""
        if self.L is None:
            raise ValueError("A_tilde needs the box half-width L")
        return self.A * self.L ** (-2.5)

    @classmethod
    def from_values(cls, A=0.0, C=0.0, D=0.0, n_particles=1.0) -> "InteractionCoefficients":
        """Coefficients given directly, without a spatial profile."""
        return cls(float(A), float(C), float(D), float(n_particles))

    @classmethod
    def from_hat(cls, A_hat=0.0, C_hat=0.0, D_hat=0.0) -> "InteractionCoefficients":
        return cls(float(A_hat), float(C_hat), float(D_hat), 1.0)

    def _unit_k(self):
        if self.theta is None:
            raise SwimRheoError("kernel moments are not available for this density profile")
        t = self.theta
        return np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=-1)

    @property
    def m2(self):
        """int W k^ k^T dtheta (3x3, in-plane)."""
        k = self._unit_k()
        return np.einsum("q,qi,qj->ij", self.w_theta, k, k)

    @property
    def m4(self):
        """int W k^ k^ k^ k^ dtheta (3x3x3x3)."""
        k = self._unit_k()
        return np.einsum("q,qi,qj,qk,ql->ijkl", self.w_theta, k, k, k, k, optimize=True)

    def as_dict(self):
        out = dict(A=self.A, C=self.C, D=self.D, A_hat=self.A_hat, C_hat=self.C_hat, D_hat=self.D_hat,
                   n_particles=self.n_particles, measure=self.measure, quadrature_error=self.error)
        if self.L is not None:
            out["A_tilde"] = self.A_tilde
        return out


def _angular_moments(theta, w):
    c, s = np.cos(theta), np.sin(theta)
    A = 2.0 * np.sum(w * c * c * s * s)
    C = -2.0 * np.sum(w * (c**3 * s - c * s**3))
    D = np.sum(w * c * s)
    return np.array([A, C, D])


def _k_max(spec: SpatialDensitySpec, settings: QuadratureSettings):
    if settings.k_max is not None:
        return settings.k_max
    d = spec.data
    # exp(-36) leaves a tail far below 1e-8 of A for either measure
    return np.sqrt(36.0) / min(d["sigma_x"], d["sigma_y"])


def angular_weights(spec: SpatialDensitySpec, settings: QuadratureSettings | None = None):
    """Nodes theta_j and weights W(theta_j) * dtheta for polar specs."""
    settings = settings or QuadratureSettings()
    power = 1 if settings.measure == "area" else 2
    if spec.kind == "gaussian":
        n_t = settings.n_theta
        theta = 2 * np.pi * np.arange(n_t) / n_t
        x, wx = np.polynomial.legendre.leggauss(settings.n_radial)
        kmax = _k_max(spec, settings)
        k = 0.5 * kmax * (x + 1)
        wk = 0.5 * kmax * wx * k**power
        H2 = spec.h_squared(np.outer(k, np.cos(theta)), np.outer(k, np.sin(theta)))
        W = wk @ H2
        return theta, W * (2 * np.pi / n_t)
    if spec.kind == "tabulated":
        k = spec.data["k"]
        theta = spec.data["theta"]
        H2 = spec.data["H"] ** 2
        W = np.trapezoid(H2 * (k**power)[:, None], k, axis=0)
        return theta.copy(), W * (2 * np.pi / theta.size)
    raise SwimRheoError("angular weights are undefined for the uniform box (W is singular on the axes)")


def _box_A(spec, settings, periods, nodes):
    """A for the uniform box: Gauss panels over [0, Q]^2 plus the far-field tail."""
    L = spec.data["L"]
    power = 1 if settings.measure == "area" else 2
    half = np.pi / L
    Q = periods * half
    x, wx = np.polynomial.legendre.leggauss(nodes)
    edges = np.arange(periods) * half
    k = (edges[:, None] + 0.5 * half * (x[None, :] + 1)).ravel()
    w = np.tile(0.5 * half * wx, periods)
    g = np.sqrt(L) ** 0.5 * (L * np.sinc(k * L / np.pi)) ** 2  # sqrt(L) split over both factors
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    kk2 = k1 * k1 + k2 * k2
    weight = 2.0 * k1 * k1 * k2 * k2 / kk2**2 * np.sqrt(kk2) ** (power - 1)
    wg = w * g
    block = wg[:, None] * wg[None, :] * weight
    # the angular factor is not smooth at the origin: redo that panel with a Duffy map
    block[:nodes, :nodes] = 0.0
    u = 0.5 * half * (x + 1)
    wu = 0.5 * half * wx
    v = 0.5 * (x + 1)
    wv = 0.5 * wx
    a1 = u[:, None]
    a2 = u[:, None] * v[None, :]
    ka = np.hypot(a1, a2)
    gfun = lambda kk: np.sqrt(L) ** 0.5 * (L * np.sinc(kk * L / np.pi)) ** 2
    ang = 2.0 * a1 * a1 * a2 * a2 / ka**4 * ka ** (power - 1)
    tri = np.sum((wu * u)[:, None] * wv[None, :] * gfun(a1) * gfun(a2) * ang)
    core = 4.0 * (np.sum(block) + 2.0 * tri)
    # outside the square, (sin kL / k)^2 averages to 1/(2 k^2)
    if power == 1:
        tail = np.sqrt(L) * (np.pi / 2 + 1) / (2 * Q**2)
    else:
        tail = 2 * np.sqrt(2) * np.sqrt(L) / Q
    return core + tail


def compute_ACD(spec: SpatialDensitySpec, settings: QuadratureSettings | None = None,
                check: bool = True) -> InteractionCoefficients:
    """Coefficients A, C, D with a two-resolution error estimate.

    Raises :class:`AccuracyError` when the refined quadrature differs by more
    than ``settings.rtol`` relative to the scale of the coefficients.
    """
    settings = settings or QuadratureSettings()
    if spec.kind == "uniform_box":
        A = _box_A(spec, settings, settings.box_periods, settings.box_nodes)
        A2 = _box_A(spec, settings, 2 * settings.box_periods, 2 * settings.box_nodes)
        err = abs(A2 - A)
        # C and D vanish by the reflection symmetries of the box profile
        coeffs = InteractionCoefficients(A2, 0.0, 0.0, spec.n_particles, err, settings.measure, L=spec.data["L"])
        scale = abs(A2)
        tol = max(settings.rtol, 1e-4)
    else:
        theta, w = angular_weights(spec, settings)
        vals = _angular_moments(theta, w)
        if spec.kind == "tabulated":
            # compare with every other node in k and theta
            sub = SpatialDensitySpec.tabulated(spec.data["k"][::2], spec.data["theta"][::2],
                                               spec.data["H"][::2, ::2], spec.n_particles)
            ref = _angular_moments(*angular_weights(sub, settings))
            best = vals
        else:
            theta2, w2 = angular_weights(spec, settings.refined())
            ref = vals
            best = _angular_moments(theta2, w2)
            theta, w = theta2, w2
        err = float(np.max(np.abs(best - ref)))
        scale = max(float(np.max(np.abs(best))), float(np.sum(np.abs(w))))
        tol = settings.rtol
        coeffs = InteractionCoefficients(float(best[0]), float(best[1]), float(best[2]), spec.n_particles,
                                         err, settings.measure, theta=theta, w_theta=w)
    if check and err > tol * max(scale, 1e-300):
        raise AccuracyError(
            f"A, C, D quadrature not converged: refinement changes them by {err:.3e} "
            f"(scale {scale:.3e}); the profile is too rough or under-resolved"
        )
    return coeffs


def compute_ACD_mollified(spec: SpatialDensitySpec, Lz: float, settings: QuadratureSettings | None = None,
                          periods: int = 200, nodes: int = 8) -> float:
    """Cross-check of A with the delta(k3) factor replaced by (sin(k3 Lz)/k3)^2 / (pi Lz).

    Uses the full out-of-plane strain matrix entry 2 k1^2 - 2 k1^4 + 2 k1^2 k2^2
    of the unit wavevector with the three-dimensional measure; tends to A as
    Lz grows.
    """
    settings = settings or QuadratureSettings()
    if settings.measure != "area":
        raise ValueError("the mollified cross-check uses the volume element, i.e. the area measure in-plane")
    x, wx = np.polynomial.legendre.leggauss(settings.n_radial)
    kmax = _k_max(spec, settings) if spec.kind == "gaussian" else spec.data["k"][-1]
    k = 0.5 * kmax * (x + 1)
    wk = 0.5 * kmax * wx * k
    n_t = settings.n_theta
    theta = 2 * np.pi * np.arange(n_t) / n_t
    H2 = spec.h_squared(np.outer(k, np.cos(theta)), np.outer(k, np.sin(theta)))
    half = np.pi / Lz
    z, wz = np.polynomial.legendre.leggauss(nodes)
    edges = np.arange(periods) * half
    k3 = (edges[:, None] + 0.5 * half * (z[None, :] + 1)).ravel()
    w3 = 2 * np.tile(0.5 * half * wz, periods) * (Lz * np.sinc(k3 * Lz / np.pi)) ** 2 / (np.pi * Lz)
    kk = k[:, None, None]
    c = np.cos(theta)[None, :, None]
    s = np.sin(theta)[None, :, None]
    norm = np.sqrt(kk**2 + k3[None, None, :] ** 2)
    e1 = kk * c / norm
    e2 = kk * s / norm
    m11 = 2 * e1**2 - 2 * e1**4 + 2 * e1**2 * e2**2
    total = np.einsum("i,ij,ijq,q->", wk, H2, m11, w3) * (2 * np.pi / n_t)
    return 0.5 * total


# -- asymptotic orientation distribution ----------------------------------

def _require_shear(params: SuspensionParams):
    if params.gamma == 0:
        raise ShearRequiredError("the small-B expansion requires a nonzero shear rate gamma")


def _check_convention(convention):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def interaction_scale(params: SuspensionParams, coeffs: InteractionCoefficients) -> float:
    """Prefactor 1/(N |V_L|) of the raw coefficients, written as rho / N^2."""
    return params.rho / coeffs.n_particles**2


def first_order_density(alpha, beta):
    """P^(1) = -(3/8 pi) sin^2(beta) cos(2 alpha)."""
    return -3.0 / (8 * np.pi) * np.sin(beta) ** 2 * np.cos(2 * alpha)


def second_order_coefficients(params: SuspensionParams, coeffs: InteractionCoefficients,
                              convention: str = "published"):
    """(C1, C2, C3) of P^(2) = C1 s^4 cos 4a + C2 s^2 cos 2a + C3 s^2 sin 2a."""
    _check_convention(convention)
    _require_shear(params)
    U0, g, eta0 = params.U0, params.gamma, params.eta0
    rA = params.rho * coeffs.A_hat
    rC = params.rho * coeffs.C_hat
    rD = params.rho * coeffs.D_hat
    if convention == "published":
        C1 = 3.0 / (16 * np.pi)
        C2 = -U0 * (rC + 12 * rD) / (40 * g * np.pi * eta0)
        C3 = -U0 * rA / (40 * g * np.pi * eta0)
    else:
        C1 = 15.0 / (64 * np.pi)
        C2 = -3 * U0 * (rC + 2 * rD) / (40 * np.pi * g * eta0)
        C3 = 3 * U0 * rA / (20 * np.pi * g * eta0)
    return C1, C2, C3


def second_order_density(alpha, beta, params, coeffs, convention="published"):
    C1, C2, C3 = second_order_coefficients(params, coeffs, convention)
    s2 = np.sin(beta) ** 2
    return C1 * s2 * s2 * np.cos(4 * alpha) + C2 * s2 * np.cos(2 * alpha) + C3 * s2 * np.sin(2 * alpha)


def pd_asymptotic(alpha, beta, B, params: SuspensionParams, coeffs: InteractionCoefficients,
                  convention: str = "published", split: bool = False):
    """P_d to second order in B; with ``split`` returns (P0, P1, P2) instead of the sum."""
    if B < 0:
        raise ValueError("B must be non-negative")
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    p0 = np.full(np.broadcast(alpha, beta).shape, 1.0 / (4 * np.pi))
    p1 = first_order_density(alpha, beta)
    p2 = second_order_density(alpha, beta, params, coeffs, convention)
    if split:
        return p0, p1, p2
    return p0 + B * p1 + B * B * p2


# -- rheology -------------------------------------------------------------

def eta_int(params: SuspensionParams, coeffs: InteractionCoefficients, convention: str = "published") -> float:
    """Interaction contribution to the effective viscosity, correct to O(B^2).

    ``published``: -U0^2 B^2 rho^2 A_hat / (75 gamma^2 pi eta0).
    ``rederived``: the orientation average of the dipolar shear stress over the
    rederived P^(2), (2/25) U0^2 B^2 rho^2 A_hat / (gamma^2 eta0).
    """
    _check_convention(convention)
    _require_shear(params)
    U0, B, rho, g, eta0 = params.U0, params.B, params.rho, params.gamma, params.eta0
    if convention == "published":
        return -(U0**2) * B**2 * rho**2 * coeffs.A_hat / (75 * g**2 * np.pi * eta0)
    return 2.0 / 25.0 * U0**2 * B**2 * rho**2 * coeffs.A_hat / (g**2 * eta0)


def eta_from_density(values, grid: SphereGrid, params: SuspensionParams) -> float:
    """(rho / gamma) int Sigma^d_xy P dS with Sigma^d = U0 (d d - I/3)."""
    _require_shear(params)
    d = grid.points()
    return params.rho / params.gamma * params.U0 * grid.integrate(d[..., 0] * d[..., 1] * values)


def normal_stresses_from_density(values, grid: SphereGrid, params: SuspensionParams):
    """(N12, N23) = rho U0 (<d1^2 - d2^2>, <d2^2 - d3^2>) / gamma^2."""
    _require_shear(params)
    d = grid.points()
    f = params.rho * params.U0 / params.gamma**2
    n12 = f * grid.integrate((d[..., 0] ** 2 - d[..., 1] ** 2) * values)
    n23 = f * grid.integrate((d[..., 1] ** 2 - d[..., 2] ** 2) * values)
    return n12, n23


def normal_stresses(params: SuspensionParams, coeffs: InteractionCoefficients, convention: str = "published"):
    """First and second dipolar normal stress coefficients (N12, N23)."""
    _check_convention(convention)
    _require_shear(params)
    U0, B, rho, g, eta0 = params.U0, params.B, params.rho, params.gamma, params.eta0
    pref = U0 * rho / g**2
    if convention == "published":
        corr = U0 * rho * (coeffs.C_hat + 12 * coeffs.D_hat) * B**2 / (75 * g * np.pi * eta0)
        return pref * (-0.4 - 2 * corr), pref * (0.2 + corr)
    _, C2, _ = second_order_coefficients(params, coeffs, "rederived")
    return (pref * (-0.4 * B + 16 * np.pi / 15 * C2 * B**2),
            pref * (0.2 * B - 8 * np.pi / 15 * C2 * B**2))


def effective_noise(params: SuspensionParams, coeffs: InteractionCoefficients) -> float | None:
    """Noise strength that matches the dilute tumbling viscosity; ``None`` when A_hat B = 0.

    Evaluated as -A_hat B gamma^2 rho U0 / (12 (15 eta0 gamma^2 + sqrt(disc))),
    algebraically equal to the difference form but free of cancellation.
    """
    _require_shear(params)
    U0, B, rho, g, eta0 = params.U0, params.B, params.rho, params.gamma, params.eta0
    A = coeffs.A_hat
    if U0 >= 0:
        raise ParameterRegimeError("effective noise is defined for pushers only (U0 < 0)")
    disc = 225 * eta0**2 * g**4 - A**2 * B**2 * g**2 * rho**2 * U0**2
    if disc < 0:
        raise ParameterRegimeError(f"effective noise discriminant is negative ({disc:.3e})")
    if A * B == 0:
        return None
    return -A * B * g**2 * rho * U0 / (12 * (15 * eta0 * g**2 + np.sqrt(disc)))


# -- units ----------------------------------------------------------------

#: exponents of (kg, m, s)
DIMENSIONS = {
    "U0": (1, 2, -2),
    "rho": (0, -3, 0),
    "eta0": (1, -1, -1),
    "gamma": (0, 0, -1),
    "B": (0, 0, 0),
    "A_hat": (0, 0, 0),
    "L": (0, 1, 0),
    "V0": (0, 1, -1),
}


def dimension_of(**powers):
    """Exponents of (kg, m, s) of the product of named quantities raised to ``powers``."""
    out = np.zeros(3)
    for name, p in powers.items():
        out += p * np.asarray(DIMENSIONS[name], dtype=float)
    return tuple(out)


def eta_int_dimension():
    """Dimension of U0^2 B^2 rho^2 A_hat / (gamma^2 eta0)."""
    return dimension_of(U0=2, B=2, rho=2, A_hat=1, gamma=-2, eta0=-1)


def to_units(params: SuspensionParams, units: UnitSystem) -> SuspensionParams:
    """Express model parameters in the given unit system (e.g. SI)."""
    return params.with_(
        L=params.L * units.length,
        V0=params.V0 * units.velocity,
        U0=params.U0 * units.dipole,
        gamma=params.gamma / units.time,
        eta0=params.eta0 * units.viscosity,
        D0=params.D0 / units.time,
        sigma_lj=params.sigma_lj * units.length,
        r_cut=params.r_cut * units.length,
        semi_major=params.semi_major * units.length,
        semi_minor=params.semi_minor * units.length,
        eps_lj=params.eps_lj * units.stress * units.length**3,
        f_max=params.f_max * units.stress * units.length**2,
    )


# -- reports --------------------------------------------------------------

REPORT_FIELDS = (
    "eta_int", "eta_int_relative", "eta_int_rederived", "N12", "N23",
    "N12_rederived", "N23_rederived", "noise_effective",
)


@dataclass
class RheologyReport:
    eta_int: float
    eta_int_relative: float
    eta_int_rederived: float
    N12: float
    N23: float
    N12_rederived: float
    N23_rederived: float
    noise_effective: float | None
    coefficients: dict
    params: dict

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in REPORT_FIELDS}
        out.update({f"coef_{k}": v for k, v in self.coefficients.items()})
        out.update({f"param_{k}": v for k, v in self.params.items()})
        return out

    def csv_text(self) -> str:
        row = self.row()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([_fmt(v) for v in row.values()])
        return buf.getvalue()

    def text(self) -> str:
        lines = ["[rheology]"]
        for k in REPORT_FIELDS:
            lines.append(f"{k} = {_fmt(getattr(self, k))}")
        lines.append("[coefficients]")
        lines += [f"{k} = {_fmt(v)}" for k, v in self.coefficients.items()]
        lines.append("[parameters]")
        lines += [f"{k} = {_fmt(v)}" for k, v in self.params.items()]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return "absent"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def rheology_report(params: SuspensionParams, coeffs: InteractionCoefficients) -> RheologyReport:
    eta = eta_int(params, coeffs)
    n12, n23 = normal_stresses(params, coeffs)
    r12, r23 = normal_stresses(params, coeffs, "rederived")
    try:
        dh = effective_noise(params, coeffs)
    except ParameterRegimeError:
        dh = None
    return RheologyReport(
        eta_int=eta,
        eta_int_relative=eta / params.eta0,
        eta_int_rederived=eta_int(params, coeffs, "rederived"),
        N12=n12, N23=n23, N12_rederived=r12, N23_rederived=r23,
        noise_effective=dh,
        coefficients=coeffs.as_dict(),
        params=params.as_dict(),
    )


# -- reduced interaction kernel -------------------------------------------

def closed_interaction(points, second_moment, mass, m2, m4, U0, eta0, B, scale):
    """Drift int K(d, d') P(d') dS' from the second moment of P.

    With S = U0 (int d'd'^T P - mass I/3), the vorticity part is
    (1/(2 eta0)) d x a with a_i = eps_ijk (m2 S)_jk, and the strain part is
    B (G d - d (d.G d)) with G = -(S m2 + m2 S - 2 m4:S) / (2 eta0).
    """
    S = U0 * (np.asarray(second_moment) - mass * _EYE / 3.0)
    a = np.einsum("ijk,jk->i", _EPS, m2 @ S)
    G = -(S @ m2 + m2 @ S - 2 * np.einsum("ijkl,kl->ij", m4, S)) / (2 * eta0)
    Gd = points @ G.T
    strain = Gd - points * np.sum(points * Gd, axis=-1)[..., None]
    return scale * (np.cross(points, a) / (2 * eta0) + B * strain)


def _tabulated_moments(dprime, coeffs: InteractionCoefficients, U0, eta0):
    """Per-d' theta quadratures of the Fourier vorticity and strain kernels."""
    khat = coeffs._unit_k()
    w = coeffs.w_theta
    sig = dipole_tensor(dprime, U0)
    from .stokes import fourier_curl, fourier_sym_gradient

    curl = np.einsum("q,qmi->mi", w, fourier_curl(khat[:, None, :], sig[None], eta0))
    grad = np.einsum("q,qmij->mij", w, fourier_sym_gradient(khat[:, None, :], sig[None], eta0))
    return curl, grad


def tabulated_pair(coeffs: InteractionCoefficients, params: SuspensionParams):
    """K(d, d') by direct theta quadrature of the Fourier kernels."""
    scale = interaction_scale(params, coeffs)
    B, U0, eta0 = params.B, params.U0, params.eta0

    def pair(d, dp):
        d, dp = np.broadcast_arrays(np.asarray(d, float), np.asarray(dp, float))
        flat_dp = dp.reshape(-1, 3)
        uniq, inv = np.unique(flat_dp, axis=0, return_inverse=True)
        curl, grad = _tabulated_moments(uniq, coeffs, U0, eta0)
        curl = curl[inv.ravel()].reshape(dp.shape)
        grad = grad[inv.ravel()].reshape(dp.shape + (3,))
        rot = -0.5 * np.cross(d, curl)
        Gd = np.einsum("...ij,...j->...i", grad, d)
        strain = Gd - d * np.sum(d * Gd, axis=-1)[..., None]
        return scale * (rot + B * strain)

    return pair


def reduced_kernel(spec: SpatialDensitySpec | InteractionCoefficients, params: SuspensionParams,
                   form: str = "closed", settings: QuadratureSettings | None = None,
                   include_background: bool = True, check: bool = True) -> KernelSpec:
    """Kinetic drift for the dipole suspension in planar shear.

    ``closed`` evaluates the interaction through the second moment of P and
    the kernel moments m2, m4; ``tabulated`` integrates the Fourier vorticity
    and strain kernels over theta for every d'.  With ``check`` the tabulated
    form is compared with the closed one and the relative discrepancy is stored
    in ``kernel.meta``; values above 1e-6 are flagged.
    """
    coeffs = spec if isinstance(spec, InteractionCoefficients) else compute_ACD(spec, settings)
    scale = interaction_scale(params, coeffs)
    base = shear_kernel(params.gamma, params.B) if include_background else KernelSpec()
    m2, m4 = coeffs.m2, coeffs.m4
    U0, eta0, B = params.U0, params.eta0, params.B
    if form == "closed":
        def moment_drift(points, second_moment, mass):
            return closed_interaction(points, second_moment, mass, m2, m4, U0, eta0, B, scale)

        kernel = base.with_interaction(moment_drift=moment_drift, name=f"dipole-closed {base.name}")
    elif form == "tabulated":
        kernel = base.with_interaction(pair=tabulated_pair(coeffs, params), name=f"dipole-tabulated {base.name}")
        if check:
            disc = kernel_discrepancy(coeffs, params)
            kernel.meta["discrepancy"] = disc
            kernel.meta["discrepancy_flag"] = disc > KERNEL_DISCREPANCY_TOL
            if disc > KERNEL_DISCREPANCY_TOL:
                log.warning("closed and tabulated dipole kernels differ by %.3e", disc)
    else:
        raise ValueError("form must be 'closed' or 'tabulated'")
    kernel.meta["coefficients"] = coeffs
    return kernel


def kernel_discrepancy(coeffs: InteractionCoefficients, params: SuspensionParams, l_max: int = 6) -> float:
    """Relative max difference of the closed and tabulated interaction drifts."""
    grid = SphereGrid(l_max)
    test = OrientationDensity.from_function(
        lambda a, b: 1 / (4 * np.pi) + 0.1 * np.sin(b) ** 2 * np.cos(2 * a - 0.3)
        + 0.05 * np.cos(b) ** 2 + 0.04 * np.sin(2 * b) * np.cos(a + 0.2),
        2,
    )
    half = test.coeffs.half()
    closed = reduced_kernel(coeffs, params, "closed", include_background=False).prepare(grid)
    tab = reduced_kernel(coeffs, params, "tabulated", include_background=False, check=False).prepare(grid)
    a = closed.interaction(half)
    b = tab.interaction(half)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))


# -- integral terms of the second-order balance ---------------------------

@dataclass
class ITermsReport:
    grid: SphereGrid
    fields: dict
    closed: dict
    published: dict
    scale: float

    def residual(self, i, against="closed"):
        ref = (self.closed if against == "closed" else self.published)[i]
        return float(np.max(np.abs(self.fields[i] - ref)))

    def relative_residual(self, i, against="closed"):
        return self.residual(i, against) / self.scale


def i_terms(spec: SpatialDensitySpec | InteractionCoefficients, params: SuspensionParams, l_max: int = 12,
            settings: QuadratureSettings | None = None, chunk: int = 16) -> ITermsReport:
    """The four integral terms of the O(B^2) balance by direct quadrature.

    Quadrature runs over the in-plane wavevector angle and over d' on an
    exact sphere grid, using the Fourier kernels of :mod:`swimrheo.stokes`
    pointwise in (theta, d, d').  Closed forms are returned alongside.
    """
    coeffs = spec if isinstance(spec, InteractionCoefficients) else compute_ACD(spec, settings)
    _require_shear(params)
    kappa = interaction_scale(params, coeffs)
    U0, eta0 = params.U0, params.eta0
    grid = SphereGrid(l_max)
    pts = grid.points()
    a, b = grid.mesh()
    dgrid = SphereGrid(4)
    dp = dgrid.points().reshape(-1, 3)
    dw = dgrid.weights.ravel()
    da, db = angles_from_vector(dp)
    p1p = first_order_density(da, db)
    sig = dipole_tensor(dp, U0)
    khat = coeffs._unit_k()
    wq = coeffs.w_theta

    E_uni = np.zeros(pts.shape)
    E_p1 = np.zeros(pts.shape)
    W_uni = np.zeros(pts.shape)
    W_p1 = np.zeros(pts.shape)
    d = pts[:, :, None, None, :]
    for s in range(0, khat.shape[0], chunk):
        k = khat[s : s + chunk][None, None, :, None, :]
        w = wq[s : s + chunk]
        S = sig[None, None, None, :, :, :]
        fe = fourier_E(k, d, S, eta0)
        fo = fourier_omega(k, d, S, eta0)
        E_uni += np.einsum("q,m,abqmi->abi", w, dw, fe)
        E_p1 += np.einsum("q,m,abqmi->abi", w, dw * p1p, fe)
        W_uni += np.einsum("q,m,abqmi->abi", w, dw, fo)
        W_p1 += np.einsum("q,m,abqmi->abi", w, dw * p1p, fo)

    def grad(vals):
        return sph_gradient(SphericalField(grid, vals)).to_cartesian()

    p1 = first_order_density(a, b)
    p2 = second_order_density(a, b, params, coeffs, "rederived")
    g1 = grad(p1)
    g2 = grad(p2)
    I1 = kappa / (4 * np.pi) * sph_divergence(SphericalField.from_cartesian(grid, E_p1)).values
    I2 = kappa / (4 * np.pi) * np.sum(g2 * W_uni, axis=-1)
    I3 = kappa / (4 * np.pi) * np.sum(g1 * E_uni, axis=-1)
    I4 = kappa * np.sum(g1 * W_p1, axis=-1)

    s2 = np.sin(b) ** 2
    A, C, D = coeffs.A, coeffs.C, coeffs.D
    zero = np.zeros(grid.shape)
    closed = {
        1: -3 * U0 * kappa / (40 * np.pi * eta0) * (2 * A * s2 * np.cos(2 * a) + C * s2 * np.sin(2 * a)),
        2: zero,
        3: zero,
        4: -3 * U0 * kappa * D / (20 * np.pi * eta0) * s2 * np.sin(2 * a),
    }
    published = {
        1: U0 * kappa / (40 * np.pi * eta0) * (A * s2 * np.cos(2 * a) + C * s2 * np.sin(2 * a)),
        2: zero,
        3: zero,
        4: 3 * U0 * kappa * D / (10 * np.pi * eta0) * s2 * np.sin(2 * a),
    }
    fields = {1: I1, 2: I2, 3: I3, 4: I4}
    scale = max(float(np.max(np.abs(I1))), float(np.max(np.abs(I4))), 1e-300)
    return ITermsReport(grid, fields, closed, published, scale)
