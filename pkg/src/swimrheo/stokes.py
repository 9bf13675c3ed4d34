"""Point force dipole hydrodynamics in real and Fourier space.

Sign conventions
----------------
The flow of a dipole with moment tensor D = U0 (d d - I/3) solves

    -eta0 lap u + grad p = div (D delta),  div u = 0,

so u_k = (1/(8 pi eta0)) D_lm d_m Gbar_kl with the unscaled Oseen tensor
Gbar = I/r + x x^T / r^3.  Pushers have U0 < 0 and push fluid outwards along
their axis.  Fourier transforms use f~(k) = int exp(-i k.x) f(x) dx, hence
F[d_j f] = i k_j f~ and F[curl u] = i k x u~.

``omega`` always denotes the full vorticity (curl u); the rotation rate of a
sphere is omega / 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedFrequencyError
from .sphere import Orientation

_EYE = np.eye(3)


def dipole_tensor(d, U0: float) -> np.ndarray:
    """U0 (d d^T - I/3) for a unit vector (or stack of vectors) ``d``."""
    if isinstance(d, Orientation):
        d = d.d
    d = np.asarray(d, dtype=float)
    return U0 * (np.einsum("...i,...j->...ij", d, d) - _EYE / 3.0)


def oseen(x, eta0: float = 1.0, r_min: float = 0.0, return_flag: bool = False):
    """Oseen tensor (1/(8 pi eta0)) (I/|x| + x x^T/|x|^3).

    Inside ``r_min`` the tensor is evaluated at the clamped radius along the
    same direction and the flag is raised.
    """
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0 and r_min <= 0.0:
        raise ZeroDivisionError("Oseen tensor is singular at x = 0")
    clamped = r < r_min
    if clamped:
        x = (x / r if r > 0 else np.array([1.0, 0.0, 0.0])) * r_min
        r = r_min
    G = (_EYE / r + np.outer(x, x) / r**3) / (8 * np.pi * eta0)
    return (G, clamped) if return_flag else G


@dataclass(frozen=True)
class FlowSample:
    u: np.ndarray
    gradU: np.ndarray  # gradU[k, j] = d u_k / d x_j
    E: np.ndarray
    curl: np.ndarray
    regularized: bool = False


def dipole_flow(x, d, U0: float, eta0: float = 1.0, r_min: float = 0.0) -> FlowSample:
    """Velocity, gradient, strain rate and vorticity of a dipole at the origin.

    Closed forms, with s = d.x and c = U0/(8 pi eta0):

        u      = c (x/r^3 - 3 s^2 x / r^5)
        du/dx  = c [I/r^3 - 3 x x^T/r^5 - 6 s x d^T/r^5 - 3 s^2 I/r^5
                    + 15 s^2 x x^T/r^7]
        curl u = -6 c s (d x x) / r^5
    """
    if isinstance(d, Orientation):
        d = d.d
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    r = float(np.linalg.norm(x))
    regularized = r < r_min
    if regularized:
        x = (x / r if r > 0 else np.array([1.0, 0.0, 0.0])) * r_min
        r = r_min
    if r == 0.0:
        raise ZeroDivisionError("dipole flow is singular at x = 0")
    c = U0 / (8 * np.pi * eta0)
    s = float(d @ x)
    r2 = r * r
    r3 = r2 * r
    r5 = r3 * r2
    r7 = r5 * r2
    u = c * (x / r3 - 3 * s * s * x / r5)
    xx = np.outer(x, x)
    grad = c * (_EYE / r3 - 3 * xx / r5 - 6 * s * np.outer(x, d) / r5 - 3 * s * s * _EYE / r5 + 15 * s * s * xx / r7)
    E = 0.5 * (grad + grad.T)
    curl = -6 * c * s * np.cross(d, x) / r5
    return FlowSample(u, grad, E, curl, regularized)


def dipole_velocity_via_oseen(x, d, U0: float, eta0: float = 1.0, h: float = 1e-4) -> np.ndarray:
    """Velocity from the defining contraction D_lm d_m G_kl, differenced numerically.

    Independent of the closed form in :func:`dipole_flow`; used as an oracle.
    """
    D = dipole_tensor(d, U0)
    x = np.asarray(x, dtype=float)
    dG = np.zeros((3, 3, 3))  # dG[k, l, m] = d G_kl / d x_m
    for m in range(3):
        e = np.zeros(3)
        e[m] = h
        dG[:, :, m] = (oseen(x + e, eta0) - oseen(x - e, eta0)) / (2 * h)
    return np.einsum("lm,klm->k", D, dG)


def jeffery_rhs(d, omega, E, B: float) -> np.ndarray:
    """Orientation drift -1/2 d x omega - B d x (d x (E d)).

    With ``omega`` the vorticity this is Jeffery's equation: rotation at half
    the vorticity plus B times the tangential projection of the strain.
    """
    if isinstance(d, Orientation):
        d = d.d
    d = np.asarray(d, dtype=float)
    omega = np.asarray(omega, dtype=float)
    Ed = np.einsum("...ij,...j->...i", E, d)
    return -0.5 * np.cross(d, omega) - B * np.cross(d, np.cross(d, Ed))


def shear_background(gamma: float):
    """Velocity gradient, strain and vorticity of u = (0, gamma x, 0)."""
    grad = np.zeros((3, 3))
    grad[1, 0] = gamma
    E = 0.5 * (grad + grad.T)
    omega = np.array([0.0, 0.0, gamma])
    return grad, E, omega


# -- Fourier-space kernels -------------------------------------------------

def _unit_k(k):
    k = np.asarray(k, dtype=float)
    n = np.linalg.norm(k, axis=-1)
    if np.any(n == 0.0):
        raise UndefinedFrequencyError("Fourier kernel evaluated at k = 0")
    return k / n[..., None], n


def fourier_pressure(k, sigma) -> float:
    """p~ = (Sigma~ : k k^T) / |k|^2."""
    kh, _ = _unit_k(k)
    return np.einsum("...i,...ij,...j->...", kh, sigma, kh)


def fourier_velocity(k, sigma, eta0: float = 1.0) -> np.ndarray:
    """u~ = (i / (eta0 |k|)) (I - k^ k^T) Sigma~ k^."""
    kh, n = _unit_k(k)
    sk = np.einsum("...ij,...j->...i", sigma, kh)
    proj = sk - kh * np.sum(kh * sk, axis=-1)[..., None]
    return 1j * proj / (eta0 * n[..., None])


def fourier_sym_gradient(k, sigma, eta0: float = 1.0) -> np.ndarray:
    """F[sym grad u] = -(1/(2 eta0)) (S k^k^T - 2 k^k^T S k^k^T + k^k^T S).

    Homogeneous of degree 0 in k, hence evaluated from the unit vector only.
    """
    kh, _ = _unit_k(k)
    kk = np.einsum("...i,...j->...ij", kh, kh)
    skk = np.einsum("...ij,...jk->...ik", sigma, kk)
    kks = np.swapaxes(skk, -1, -2)  # exact transpose keeps the result symmetric
    ksk = np.einsum("...i,...ij,...j->...", kh, sigma, kh)
    return -((skk + kks) - 2 * ksk[..., None, None] * kk) / (2 * eta0)


def fourier_curl(k, sigma, eta0: float = 1.0) -> np.ndarray:
    """F[curl u] = i k x u~ = -(1/eta0) k^ x Sigma~ k^ (real)."""
    kh, _ = _unit_k(k)
    sk = np.einsum("...ij,...j->...i", sigma, kh)
    return -np.cross(kh, sk) / eta0


def fourier_E(k, d, sigma, eta0: float = 1.0) -> np.ndarray:
    """Tangential strain drift G d - d (d.G d) with G the Fourier strain rate."""
    if isinstance(d, Orientation):
        d = d.d
    G = fourier_sym_gradient(k, sigma, eta0)
    Gd = np.einsum("...ij,...j->...i", G, d)
    return Gd - d * np.sum(d * Gd, axis=-1)[..., None]


def fourier_omega(k, d, sigma, eta0: float = 1.0) -> np.ndarray:
    """Rotational drift -1/2 d x F[curl u]."""
    if isinstance(d, Orientation):
        d = d.d
    return -0.5 * np.cross(d, fourier_curl(k, sigma, eta0))


def stokes_residual(k, sigma, eta0: float = 1.0) -> np.ndarray:
    """-eta0 |k|^2 u~ - i k p~ + i Sigma~ k, which vanishes for the exact solution."""
    k = np.asarray(k, dtype=float)
    u = fourier_velocity(k, sigma, eta0)
    p = fourier_pressure(k, sigma)
    return -eta0 * np.dot(k, k) * u - 1j * k * p + 1j * (sigma @ k)
