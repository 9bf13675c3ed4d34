"""Orientation geometry on the unit sphere.

Coordinates follow d = (cos a sin b, sin a sin b, cos b) with azimuth a in
[0, 2pi) and polar angle b in [0, pi].  Tangent fields are stored by their
components along the unit vectors

    e_alpha = (-sin a, cos a, 0)
    e_beta  = (cos a cos b, sin a cos b, -sin b).

Scalar fields are sampled on a Gauss-Legendre (in cos b) by uniform (in a)
grid and expanded in orthonormal complex spherical harmonics with the
Condon-Shortley phase.  Derivatives are taken in harmonic space; the
divergence uses the weak form

    <div A, Y_lm> = -<A, grad Y_lm>,

which is exact on the grid for band-limited integrands and never samples the
poles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ResolutionError, SymmetryError

SYMMETRY_TOL = 1e-10
_POLE_EPS = 1e-15


def unit_vector(alpha, beta):
    """Cartesian unit vector(s) for the given angles; trailing axis has length 3."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    sb = np.sin(beta)
    return np.stack([np.cos(alpha) * sb, np.sin(alpha) * sb, np.cos(beta) * np.ones_like(alpha)], axis=-1)


def basis_alpha(alpha, beta=None):
    alpha = np.asarray(alpha, dtype=float)
    if beta is not None:
        alpha = alpha + 0.0 * np.asarray(beta, dtype=float)
    return np.stack([-np.sin(alpha), np.cos(alpha), np.zeros_like(alpha)], axis=-1)


def basis_beta(alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    cb = np.cos(beta)
    return np.stack([np.cos(alpha) * cb, np.sin(alpha) * cb, -np.sin(beta) * np.ones_like(alpha)], axis=-1)


def angles_from_vector(v):
    """Return (alpha, beta) for vector(s) ``v``; alpha is set to 0 on the poles."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    u = v / r[..., None]
    rho = np.hypot(u[..., 0], u[..., 1])
    beta = np.arctan2(rho, u[..., 2])
    alpha = np.mod(np.arctan2(u[..., 1], u[..., 0]), 2 * np.pi)
    alpha = np.where(rho < _POLE_EPS, 0.0, alpha)
    return alpha, beta


@dataclass(frozen=True)
class Orientation:
    """A unit orientation vector with cached angles.

    Equality compares the unit vectors, so the arbitrary azimuth at a pole
    does not matter.
    """

    alpha: float
    beta: float
    d: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_angles(cls, alpha, beta):
        beta = float(beta)
        if not 0.0 <= beta <= np.pi:
            raise ValueError(f"polar angle {beta} outside [0, pi]")
        alpha = float(np.mod(alpha, 2 * np.pi))
        if np.sin(beta) < _POLE_EPS:
            alpha = 0.0
        d = unit_vector(alpha, beta)
        return cls(alpha, beta, d)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0.0:
            raise ValueError("orientation needs a finite nonzero 3-vector")
        alpha, beta = angles_from_vector(v)
        return cls.from_angles(float(alpha), float(beta))

    def __eq__(self, other):
        if not isinstance(other, Orientation):
            return NotImplemented
        return bool(np.allclose(self.d, other.d, atol=1e-12, rtol=0.0))

    def __hash__(self):
        return hash(tuple(np.round(self.d, 12)))


def normalized_legendre(l_max, x):
    """Orthonormal associated Legendre values.

    Returns ``P[j, l, m]`` for ``0 <= m <= l <= l_max`` so that
    Y_lm(b, a) = P[., l, m](cos b) exp(i m a) is orthonormal on the sphere
    (Condon-Shortley phase included).  Entries with m > l are zero.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.zeros((x.size, l_max + 1, l_max + 1))
    pmm = np.full(x.size, np.sqrt(1.0 / (4 * np.pi)))
    for m in range(l_max + 1):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        out[:, m, m] = pmm
        if m + 1 <= l_max:
            out[:, m + 1, m] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, l_max + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[:, l, m] = a * (x * out[:, l - 1, m] - b * out[:, l - 2, m])
    return out


def _legendre_beta_derivative(plm, x):
    """d/db of the orthonormal Legendre table at interior nodes."""
    l_max = plm.shape[1] - 1
    s = np.sqrt(1.0 - x * x)
    d = np.zeros_like(plm)
    for l in range(l_max + 1):
        for m in range(l + 1):
            term = l * x * plm[:, l, m]
            if l > m:
                c = np.sqrt((2.0 * l + 1.0) / (2.0 * l - 1.0) * (l - m) * (l + m))
                term = term - c * plm[:, l - 1, m]
            d[:, l, m] = term / s
    return d


@lru_cache(maxsize=32)
def _grid_tables(l_max, n_beta):
    x, w = np.polynomial.legendre.leggauss(n_beta)
    order = np.argsort(-x)  # ascending beta
    x, w = x[order], w[order]
    plm = normalized_legendre(l_max, x)
    dplm = _legendre_beta_derivative(plm, x)
    over_sin = plm / np.sqrt(1.0 - x * x)[:, None, None]
    for arr in (x, w, plm, dplm, over_sin):
        arr.setflags(write=False)
    return x, w, plm, dplm, over_sin


class SphereGrid:
    """Gauss-Legendre x uniform-azimuth grid for a harmonic band limit.

    Defaults give the smallest grid on which products of two band-``l_max``
    fields integrate exactly: ``n_beta = l_max + 1`` and
    ``n_alpha = 2 * l_max + 2``.
    """

    def __init__(self, l_max: int, n_beta: int | None = None, n_alpha: int | None = None):
        l_max = int(l_max)
        if l_max < 0:
            raise ValueError("l_max must be non-negative")
        n_beta = l_max + 1 if n_beta is None else int(n_beta)
        n_alpha = 2 * l_max + 2 if n_alpha is None else int(n_alpha)
        if n_beta < l_max + 1:
            raise ResolutionError(f"n_beta={n_beta} < l_max+1={l_max + 1}")
        if n_alpha < 2 * l_max + 1:
            raise ResolutionError(f"n_alpha={n_alpha} < 2*l_max+1={2 * l_max + 1}")
        self.l_max = l_max
        self.n_beta = n_beta
        self.n_alpha = n_alpha
        x, w, plm, dplm, over_sin = _grid_tables(l_max, n_beta)
        self.cos_beta = x
        self.beta = np.arccos(x)
        self.alpha = 2 * np.pi * np.arange(n_alpha) / n_alpha
        self.weights = np.outer(w, np.full(n_alpha, 2 * np.pi / n_alpha))
        self._plm = plm
        self._dplm = dplm
        self._over_sin = over_sin
        self._m = np.arange(l_max + 1)

    def __repr__(self):
        return f"SphereGrid(l_max={self.l_max}, n_beta={self.n_beta}, n_alpha={self.n_alpha})"

    @property
    def shape(self):
        return (self.n_beta, self.n_alpha)

    def mesh(self):
        """Return (alpha, beta) arrays of the grid shape."""
        return np.meshgrid(self.alpha, self.beta)

    def points(self):
        """Unit vectors at the grid nodes, shape (n_beta, n_alpha, 3)."""
        a, b = self.mesh()
        return unit_vector(a, b)

    def basis(self):
        a, b = self.mesh()
        return basis_alpha(a, b), basis_beta(a, b)

    def integrate(self, values):
        return float(np.sum(self.weights * values))

    # -- transforms on half spectra: array c[l, m] for m >= 0 ---------------
    def _azimuthal(self, values):
        f = np.fft.fft(values, axis=-1)[..., : self.l_max + 1]
        return f * (2 * np.pi / self.n_alpha)

    def analyze(self, values, table=None):
        """Grid values -> half spectrum ``c[l, m]`` (m >= 0)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ResolutionError(f"values shape {values.shape} does not match grid {self.shape}")
        fm = self._azimuthal(values)
        plm = self._plm if table is None else table
        w = self.weights[:, 0] * self.n_alpha / (2 * np.pi)
        return np.einsum("j,jlm,jm->lm", w, plm, fm)

    def _synth_table(self, half, table, factor=None):
        g = np.einsum("lm,jlm->jm", half, table)
        if factor is not None:
            g = g * factor[None, :]
        spec = np.zeros((self.n_beta, self.n_alpha // 2 + 1), dtype=complex)
        spec[:, : self.l_max + 1] = g * self.n_alpha
        spec[:, 0] = g[:, 0].real * self.n_alpha
        return np.fft.irfft(spec, n=self.n_alpha, axis=-1)

    def synthesize(self, half):
        """Half spectrum -> grid values of the real field."""
        half = _check_half(half, self.l_max)
        return self._synth_table(half, self._plm)

    def synthesize_gradient(self, half):
        """Tangent gradient (alpha, beta components) of the field ``half``."""
        half = _check_half(half, self.l_max)
        ga = self._synth_table(half, self._over_sin, 1j * self._m)
        gb = self._synth_table(half, self._dplm)
        return ga, gb

    def divergence_half(self, a_alpha, a_beta):
        """Weak-form spherical divergence; returns the half spectrum."""
        fa = self._azimuthal(np.asarray(a_alpha, dtype=float))
        fb = self._azimuthal(np.asarray(a_beta, dtype=float))
        w = self.weights[:, 0] * self.n_alpha / (2 * np.pi)
        ta = np.einsum("j,jlm,jm->lm", w, self._over_sin, fa) * (-1j * self._m)[None, :]
        tb = np.einsum("j,jlm,jm->lm", w, self._dplm, fb)
        return -(ta + tb)


class BandTransform:
    """Fast transforms for fields of band ``band`` sampled on a finer grid.

    Tables are laid out per azimuthal order so each transform is one batched
    matrix product.  Used by the kinetic solver, where products are formed on a
    grid of band 2 l_max and projected back to l_max.
    """

    def __init__(self, grid: SphereGrid, band: int):
        if band > grid.l_max:
            raise ResolutionError(f"band {band} exceeds grid l_max={grid.l_max}")
        self.grid = grid
        self.band = band
        n = band + 1
        w = grid.weights[:, 0] * grid.n_alpha / (2 * np.pi)
        plm = grid._plm[:, :n, :n]
        dplm = grid._dplm[:, :n, :n]
        osin = grid._over_sin[:, :n, :n]
        m = np.arange(n)
        self._m = m
        # synthesis tables (m, j, l)
        self._syn = np.ascontiguousarray(np.transpose(plm, (2, 0, 1)))
        self._syn_a = np.ascontiguousarray(np.transpose(osin, (2, 0, 1))) * (1j * m)[:, None, None]
        self._syn_b = np.ascontiguousarray(np.transpose(dplm, (2, 0, 1)))
        # analysis tables (m, l, j) with quadrature weights folded in
        self._ana = np.ascontiguousarray(np.transpose(plm * w[:, None, None], (2, 1, 0)))
        self._div_a = np.ascontiguousarray(np.transpose(osin * w[:, None, None], (2, 1, 0))) * (1j * m)[:, None, None]
        self._div_b = np.ascontiguousarray(np.transpose(dplm * w[:, None, None], (2, 1, 0)))

    def _to_grid(self, table, half):
        g = np.matmul(table, half.T[:, :, None])[:, :, 0]  # (m, j)
        spec = np.zeros((self.grid.n_beta, self.grid.n_alpha // 2 + 1), dtype=complex)
        spec[:, : self.band + 1] = g.T * self.grid.n_alpha
        spec[:, 0] = spec[:, 0].real
        return np.fft.irfft(spec, n=self.grid.n_alpha, axis=-1)

    def _from_grid(self, table, values):
        f = self.grid._azimuthal(values)[:, : self.band + 1]  # (j, m)
        return np.matmul(table, f.T[:, :, None])[:, :, 0].T  # (l, m)

    def synthesize(self, half):
        return self._to_grid(self._syn, half)

    def gradient(self, half):
        return self._to_grid(self._syn_a, half), self._to_grid(self._syn_b, half)

    def analyze(self, values):
        return self._from_grid(self._ana, values)

    def divergence(self, a_alpha, a_beta):
        """Weak-form divergence projected onto band ``band``."""
        return self._from_grid(self._div_a, a_alpha) - self._from_grid(self._div_b, a_beta)


def _check_half(half, l_max):
    half = np.asarray(half)
    if half.shape != (l_max + 1, l_max + 1):
        raise ResolutionError(f"half spectrum shape {half.shape} does not match band limit {l_max}")
    return half


def _half_to_full(half):
    l_max = half.shape[0] - 1
    full = np.zeros((l_max + 1, 2 * l_max + 1), dtype=complex)
    for m in range(l_max + 1):
        full[m:, l_max + m] = half[m:, m]
        if m > 0:
            full[m:, l_max - m] = (-1) ** m * np.conj(half[m:, m])
    return full


@dataclass(frozen=True)
class HarmonicCoeffs:
    """Complex coefficients ``coeffs[l, m + l_max]`` of a real field."""

    l_max: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        L = self.l_max
        if c.shape != (L + 1, 2 * L + 1):
            raise ResolutionError(f"coefficient array shape {c.shape} inconsistent with l_max={L}")
        ls = np.arange(L + 1)[:, None]
        ms = np.arange(-L, L + 1)[None, :]
        outside = np.abs(ms) > ls
        if np.any(c[outside] != 0):
            raise SymmetryError("nonzero coefficient with |m| > l")
        scale = max(1.0, float(np.max(np.abs(c))))
        sign = (-1.0) ** np.abs(ms)
        mirrored = sign * np.conj(c[:, ::-1])
        viol = float(np.max(np.abs(c - mirrored)))
        if viol > SYMMETRY_TOL * scale:
            raise SymmetryError(f"conjugate symmetry violated by {viol:.3e}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_half(cls, half):
        half = np.asarray(half, dtype=complex).copy()
        half[:, 0] = half[:, 0].real
        return cls(half.shape[0] - 1, _half_to_full(half))

    @classmethod
    def zeros(cls, l_max):
        return cls(l_max, np.zeros((l_max + 1, 2 * l_max + 1), dtype=complex))

    def half(self):
        L = self.l_max
        out = np.zeros((L + 1, L + 1), dtype=complex)
        for m in range(L + 1):
            out[:, m] = self.coeffs[:, L + m]
        return out

    def get(self, l, m):
        return complex(self.coeffs[l, self.l_max + m])

    @property
    def mass(self):
        return float(np.sqrt(4 * np.pi) * self.coeffs[0, self.l_max].real)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def truncate(self, l_max):
        """Restrict (or zero-pad) to a new band limit."""
        half = np.zeros((l_max + 1, l_max + 1), dtype=complex)
        k = min(l_max, self.l_max)
        half[: k + 1, : k + 1] = self.half()[: k + 1, : k + 1]
        return HarmonicCoeffs.from_half(half)


@dataclass(frozen=True)
class SphericalField:
    """Grid samples of a scalar (``values``) or tangent field.

    For tangent fields ``values`` has a trailing axis of length 2 holding the
    (alpha, beta) components.  ``band_limit`` records the harmonic content the
    data is claimed to have; it must fit on the grid.
    """

    grid: SphereGrid
    values: np.ndarray
    band_limit: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape not in (self.grid.shape, self.grid.shape + (2,)):
            raise ResolutionError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        bl = self.grid.l_max if self.band_limit is None else int(self.band_limit)
        if bl > self.grid.l_max:
            raise ResolutionError(
                f"field band limit {bl} exceeds grid capacity l_max={self.grid.l_max}"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "band_limit", bl)

    @property
    def is_tangent(self):
        return self.values.ndim == 3

    @classmethod
    def from_cartesian(cls, grid, vectors, band_limit=None):
        """Tangent field from Cartesian vectors on the grid (normal part dropped)."""
        ea, eb = grid.basis()
        comps = np.stack([np.sum(vectors * ea, -1), np.sum(vectors * eb, -1)], axis=-1)
        return cls(grid, comps, band_limit)

    def to_cartesian(self):
        ea, eb = self.grid.basis()
        return self.values[..., 0:1] * ea + self.values[..., 1:2] * eb


def sh_forward(f: SphericalField) -> HarmonicCoeffs:
    if f.is_tangent:
        raise TypeError("sh_forward expects a scalar field")
    return HarmonicCoeffs.from_half(f.grid.analyze(f.values))


def sh_backward(c: HarmonicCoeffs, grid: SphereGrid | None = None) -> SphericalField:
    grid = SphereGrid(c.l_max) if grid is None else grid
    if c.l_max > grid.l_max:
        raise ResolutionError(f"band limit {c.l_max} exceeds grid l_max={grid.l_max}")
    half = c.truncate(grid.l_max).half()
    return SphericalField(grid, grid.synthesize(half), c.l_max)


def sph_gradient(f: SphericalField) -> SphericalField:
    """Spherical gradient of a band-limited scalar field."""
    if f.is_tangent:
        raise TypeError("sph_gradient expects a scalar field")
    half = f.grid.analyze(f.values)
    ga, gb = f.grid.synthesize_gradient(half)
    return SphericalField(f.grid, np.stack([ga, gb], axis=-1), f.band_limit)


def sph_divergence(field: SphericalField) -> SphericalField:
    """Spherical divergence (1/sin b)[d_a A_a + d_b(sin b A_b)] of a tangent field."""
    if not field.is_tangent:
        raise TypeError("sph_divergence expects a tangent field")
    g = field.grid
    half = g.divergence_half(field.values[..., 0], field.values[..., 1])
    return SphericalField(g, g.synthesize(half), g.l_max)


def laplacian_half(half):
    l = np.arange(half.shape[0])
    return -(l * (l + 1))[:, None] * half


def lemma_divergence(matrix, d) -> float | np.ndarray:
    """Closed form of div_d [d x (d x M d)] = 3 (d, M d) - tr M for constant M."""
    matrix = np.asarray(matrix, dtype=float)
    if isinstance(d, Orientation):
        d = d.d
    d = np.asarray(d, dtype=float)
    quad = np.einsum("...i,ij,...j->...", d, matrix, d)
    return 3.0 * quad - np.trace(matrix)


def double_cross_field(grid: SphereGrid, matrix) -> SphericalField:
    """Tangent field d x (d x M d) sampled on ``grid``."""
    d = grid.points()
    md = np.einsum("ij,...j->...i", np.asarray(matrix, dtype=float), d)
    v = np.cross(d, np.cross(d, md))
    return SphericalField.from_cartesian(grid, v, band_limit=min(grid.l_max, 3))


def sobolev_norm(c: HarmonicCoeffs, s: float) -> float:
    """H^s norm with weights (1 + l(l+1))^s."""
    l = np.arange(c.l_max + 1)[:, None]
    w = (1.0 + l * (l + 1.0)) ** s
    return float(np.sqrt(np.sum(w * np.abs(c.coeffs) ** 2)))
