"""Individual-based simulation of interacting dipole swimmers in planar shear.

Swimmers live in the cube [-L, L)^3 and interact through the regularized
dipole flow of :mod:`swimrheo.stokes` (all pairs, minimum image) and a purely
repulsive WCA force.  The background shear u = (0, gamma x, 0) is applied as
a local linear flow with Lees-Edwards boundaries: the periodic images across
the x faces slide in y by gamma * 2L * t, so neighbours across those faces
keep the relative velocity the shear prescribes.  Pair sums run in numba kernels; the rest
is vectorized numpy.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ShearRequiredError, StepSizeError, SwimRheoError
from .params import SuspensionParams
from .sphere import angles_from_vector, basis_alpha, basis_beta
from .stokes import jeffery_rhs, shear_background

LJ_CAP_RADIUS = 0.3  # in units of sigma_lj; the force is capped inside it
SWIM_CFL = 0.01  # largest swim displacement per step, in units of sigma_lj


@dataclass
class SwimmerState:
    """Positions (N, 3) in [-L, L)^3, unit orientations (N, 3) and time."""

    positions: np.ndarray
    orientations: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        self.orientations = np.ascontiguousarray(self.orientations, dtype=float)
        if self.positions.shape != self.orientations.shape or self.positions.shape[-1] != 3:
            raise ValueError("positions and orientations must both have shape (N, 3)")

    @property
    def n(self):
        return self.positions.shape[0]

    def copy(self) -> "SwimmerState":
        return SwimmerState(self.positions.copy(), self.orientations.copy(), self.t)

    @classmethod
    def random(cls, params: SuspensionParams, rng: np.random.Generator, min_separation: float | None = None):
        """Uniform positions (rejecting overlaps closer than ``min_separation``) and isotropic orientations."""
        L = params.L
        sep = params.sigma_lj if min_separation is None else min_separation
        pos = np.empty((params.N, 3))
        placed = 0
        attempts = 0
        while placed < params.N:
            attempts += 1
            if attempts > 1000 * params.N:
                raise SwimRheoError("could not place swimmers without overlap; the box is too crowded")
            p = rng.uniform(-L, L, 3)
            if placed:
                r = pos[:placed] - p
                r -= 2 * L * np.round(r / (2 * L))
                if np.min(np.einsum("ij,ij->i", r, r)) < sep * sep:
                    continue
            pos[placed] = p
            placed += 1
        d = rng.standard_normal((params.N, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        return cls(pos, d, 0.0)


@dataclass(frozen=True)
class StressSample:
    """Dipolar and collision stress tensors at time ``t``."""

    t: float
    sigma_d: np.ndarray
    sigma_lj: np.ndarray

    @property
    def total(self):
        return self.sigma_d + self.sigma_lj


@dataclass(frozen=True)
class Interactions:
    """Which pair interactions are active."""

    hydrodynamic: bool = True
    collisions: bool = True

    @classmethod
    def none(cls):
        return cls(False, False)


# -- pair kernels -----------------------------------------------------------

@njit(cache=True)
def _lj_radial(r, eps, sigma, r_cut, f_max):
    """Magnitude of the shifted WCA force (positive = repulsive)."""
    if r >= r_cut or eps == 0.0:
        return 0.0
    if r < LJ_CAP_RADIUS * sigma:
        return f_max
    sr6 = (sigma / r) ** 6
    sc6 = (sigma / r_cut) ** 6
    f = 24.0 * eps * (2.0 * sr6 * sr6 - sr6) / r
    f_cut = 24.0 * eps * (2.0 * sc6 * sc6 - sc6) / r_cut
    return min(f - f_cut, f_max)


@njit(cache=True, inline="always", error_model="numpy")
def _dipole_add(vel, grad, i, x0, x1, x2, r, d0, d1, d2, c, sign):
    """Add the flow of a dipole d at separation sign*x to swimmer i (u is odd, grad u even in x)."""
    s = d0 * x0 + d1 * x1 + d2 * x2
    ir2 = 1.0 / (r * r)
    ir3 = ir2 / r
    ir5 = ir3 * ir2
    s2 = s * s
    q = c * (ir3 - 3.0 * s2 * ir5)
    vel[i, 0] += sign * q * x0
    vel[i, 1] += sign * q * x1
    vel[i, 2] += sign * q * x2
    cxx = c * ir5 * (15.0 * s2 * ir2 - 3.0)
    cxd = -6.0 * c * s * ir5
    a0 = cxx * x0 + cxd * d0
    a1 = cxx * x1 + cxd * d1
    a2 = cxx * x2 + cxd * d2
    # grad[a, b] = q delta_ab + x_a (cxx x_b + cxd d_b)
    grad[i, 0, 0] += q + x0 * a0
    grad[i, 0, 1] += x0 * a1
    grad[i, 0, 2] += x0 * a2
    grad[i, 1, 0] += x1 * a0
    grad[i, 1, 1] += q + x1 * a1
    grad[i, 1, 2] += x1 * a2
    grad[i, 2, 0] += x2 * a0
    grad[i, 2, 1] += x2 * a1
    grad[i, 2, 2] += q + x2 * a2


@njit(cache=True, error_model="numpy")
def _pair_sums(pos, ori, L, shift, U0, eta0, r_min, eps, sigma, r_cut, f_max, hydro, collide):
    """Pair sums over unordered pairs; each pair contributes to both partners.

    ``shift`` is the Lees-Edwards offset in y of the images across the x faces.
    """
    n = pos.shape[0]
    vel = np.zeros((n, 3))
    grad = np.zeros((n, 3, 3))
    force = np.zeros((n, 3))
    virial = np.zeros((3, 3))
    clamped = 0
    c = U0 / (8.0 * np.pi * eta0)
    box = 2.0 * L
    for i in range(n):
        for j in range(i + 1, n):
            # x = x_i - x_j, minimum image
            v = pos[i, 0] - pos[j, 0]
            nx = np.floor(v / box + 0.5)
            x0 = v - box * nx
            v = pos[i, 1] - pos[j, 1] - nx * shift
            x1 = v - box * np.floor(v / box + 0.5)
            v = pos[i, 2] - pos[j, 2]
            x2 = v - box * np.floor(v / box + 0.5)
            r = np.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
            if collide and r < r_cut:
                if r == 0.0:
                    f = f_max if eps > 0.0 else 0.0
                    h0, h1, h2 = 1.0, 0.0, 0.0
                else:
                    f = _lj_radial(r, eps, sigma, r_cut, f_max)
                    h0, h1, h2 = x0 / r, x1 / r, x2 / r
                fx, fy, fz = f * h0, f * h1, f * h2
                force[i, 0] += fx
                force[i, 1] += fy
                force[i, 2] += fz
                force[j, 0] -= fx
                force[j, 1] -= fy
                force[j, 2] -= fz
                # ordered pairs (i, j) and (j, i) give the same F x^T
                virial[0, 0] += 2 * fx * x0
                virial[0, 1] += 2 * fx * x1
                virial[0, 2] += 2 * fx * x2
                virial[1, 0] += 2 * fy * x0
                virial[1, 1] += 2 * fy * x1
                virial[1, 2] += 2 * fy * x2
                virial[2, 0] += 2 * fz * x0
                virial[2, 1] += 2 * fz * x1
                virial[2, 2] += 2 * fz * x2
            if not hydro:
                continue
            if r < r_min:
                clamped += 1
                if r == 0.0:
                    x0, x1, x2 = r_min, 0.0, 0.0
                else:
                    sc = r_min / r
                    x0 *= sc
                    x1 *= sc
                    x2 *= sc
                r = r_min
            _dipole_add(vel, grad, i, x0, x1, x2, r, ori[j, 0], ori[j, 1], ori[j, 2], c, 1.0)
            _dipole_add(vel, grad, j, x0, x1, x2, r, ori[i, 0], ori[i, 1], ori[i, 2], c, -1.0)
    return vel, grad, force, virial, clamped


def lj_force(r, params: SuspensionParams) -> np.ndarray:
    """Shifted WCA force on a particle at separation ``r`` from its partner."""
    r = np.asarray(r, dtype=float)
    n = float(np.linalg.norm(r))
    if n == 0.0:
        raise ZeroDivisionError("LJ force direction is undefined at r = 0")
    f = _lj_radial(n, params.eps_lj, params.sigma_lj, params.r_cut, params.f_max)
    return f * r / n


def minimum_image(r, L, shift: float = 0.0):
    """Nearest periodic image of a separation, with images across the x faces offset by ``shift`` in y."""
    r = np.array(r, dtype=float)
    box = 2 * L
    nx = np.floor(r[..., 0] / box + 0.5)
    r[..., 0] -= box * nx
    r[..., 1] -= nx * shift
    r[..., 1:] -= box * np.floor(r[..., 1:] / box + 0.5)
    return r


def lees_edwards_shift(params: SuspensionParams, t: float) -> float:
    """y offset in [0, 2L) of the images across the x faces at time t."""
    box = 2 * params.L
    return float(np.mod(params.gamma * box * t, box))


# -- dynamics ---------------------------------------------------------------

@dataclass
class Drift:
    velocity: np.ndarray
    orientation: np.ndarray
    lj_force: np.ndarray
    lj_virial: np.ndarray
    clamped_pairs: int


def rhs(state: SwimmerState, params: SuspensionParams, interactions: Interactions = Interactions()) -> Drift:
    """Deterministic position and orientation velocities of every swimmer."""
    grad_bg, E_bg, omega_bg = shear_background(params.gamma)
    vel, grad, force, virial, clamped = _pair_sums(
        state.positions, state.orientations, params.L, lees_edwards_shift(params, state.t), params.U0, params.eta0, params.r_min,
        params.eps_lj, params.sigma_lj, params.r_cut, params.f_max,
        interactions.hydrodynamic, interactions.collisions,
    )
    grad = grad + grad_bg
    E = 0.5 * (grad + np.swapaxes(grad, 1, 2))
    omega = np.stack([grad[:, 2, 1] - grad[:, 1, 2], grad[:, 0, 2] - grad[:, 2, 0], grad[:, 1, 0] - grad[:, 0, 1]], axis=1)
    d = state.orientations
    xdot = params.V0 * d + vel + force + state.positions @ grad_bg.T
    ddot = jeffery_rhs(d, omega, E, params.B)
    return Drift(xdot, ddot, force, virial, int(clamped))


def default_dt(params: SuspensionParams) -> float:
    """1e-3 / gamma, limited so that free swimming moves at most 0.01 sigma per step."""
    limit = SWIM_CFL * params.sigma_lj / max(abs(params.V0), 1e-300)
    return min(1e-3 / params.gamma, limit) if params.gamma > 0 else limit


def tangent_noise(orientations, rng: np.random.Generator):
    """Independent standard Gaussians along the alpha and beta unit vectors."""
    a, b = angles_from_vector(orientations)
    xi = rng.standard_normal((orientations.shape[0], 2))
    return xi[:, :1] * basis_alpha(a) + xi[:, 1:] * basis_beta(a, b)


def step(state: SwimmerState, dt: float, rng: np.random.Generator | None, params: SuspensionParams,
         interactions: Interactions = Interactions(), drift: Drift | None = None) -> SwimmerState:
    """One Euler-Maruyama step with renormalization of d and Lees-Edwards wrapping."""
    if not dt > 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    drift = rhs(state, params, interactions) if drift is None else drift
    # affine advection by the background shear does not bring neighbours together
    grad_bg = shear_background(params.gamma)[0]
    peculiar = drift.velocity - state.positions @ grad_bg.T
    move = dt * np.max(np.linalg.norm(peculiar, axis=1))
    if move > 0.5 * params.sigma_lj:
        raise StepSizeError(
            f"a swimmer would move {move:.3g} > sigma_lj/2 in one step at t={state.t:.6g}; reduce dt"
        )
    pos = state.positions + dt * drift.velocity
    d = state.orientations + dt * drift.orientation
    D = params.D
    if D > 0:
        if rng is None:
            raise ValueError("a random generator is required when D > 0")
        d = d + np.sqrt(2 * D * dt) * tangent_noise(state.orientations, rng)
    d /= np.linalg.norm(d, axis=1)[:, None]
    L = params.L
    box = 2 * L
    t = state.t + dt
    # a swimmer leaving through an x face re-enters on a sliding image
    nx = np.floor((pos[:, 0] + L) / box)
    pos[:, 0] -= box * nx
    pos[:, 1] -= nx * lees_edwards_shift(params, t)
    pos[:, 1:] -= box * np.floor((pos[:, 1:] + L) / box)
    return SwimmerState(pos, d, t)


def measure_stress(state: SwimmerState, params: SuspensionParams, drift: Drift | None = None) -> StressSample:
    """Dipolar stress U0/|V| sum (d d - I/3) and collision stress -sum F r^T / |V|.

    The collision stress sums over ordered pairs with minimum-image separations.
    It carries the sign that makes repulsion under compression a positive
    shear stress.
    """
    V = params.volume
    d = state.orientations
    sig_d = params.U0 / V * (d.T @ d - d.shape[0] * np.eye(3) / 3)
    if drift is None:
        _, _, _, virial, _ = _pair_sums(
            state.positions, d, params.L, lees_edwards_shift(params, state.t), params.U0, params.eta0, params.r_min,
            params.eps_lj, params.sigma_lj, params.r_cut, params.f_max, False, True,
        )
    else:
        virial = drift.lj_virial
    sig_lj = -virial / V
    return StressSample(state.t, sig_d, 0.5 * (sig_lj + sig_lj.T))


# -- runs -------------------------------------------------------------------

@dataclass
class Trajectory:
    """Stress time series of one run plus bookkeeping."""

    times: np.ndarray
    sigma_d: np.ndarray
    sigma_lj: np.ndarray
    final: SwimmerState
    clamped_pairs: int = 0
    orientations: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def samples(self):
        return [StressSample(t, a, b) for t, a, b in zip(self.times, self.sigma_d, self.sigma_lj)]

    def write_csv(self, path, header: dict | None = None, full: bool = False):
        """Columns t, sigma_d_xy, sigma_lj_xy (and all tensor entries with ``full``)."""
        with open(path, "w", newline="") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh)
            cols = ["t", "sigma_d_xy", "sigma_lj_xy"]
            names = "xyz"
            if full:
                cols += [f"sigma_d_{names[a]}{names[b]}" for a in range(3) for b in range(3)]
                cols += [f"sigma_lj_{names[a]}{names[b]}" for a in range(3) for b in range(3)]
            w.writerow(cols)
            for t, sd, sl in zip(self.times, self.sigma_d, self.sigma_lj):
                row = [t, sd[0, 1], sl[0, 1]]
                if full:
                    row += list(sd.ravel()) + list(sl.ravel())
                w.writerow([f"{float(x):.17g}" for x in row])


def simulate(params: SuspensionParams, n_steps: int, rng: np.random.Generator, dt: float | None = None,
             state: SwimmerState | None = None, sample_every: int = 10,
             interactions: Interactions = Interactions(), record_orientations: bool = False) -> Trajectory:
    """Run ``n_steps`` Euler-Maruyama steps, sampling the stress every ``sample_every`` steps."""
    dt = default_dt(params) if dt is None else dt
    state = SwimmerState.random(params, rng) if state is None else state.copy()
    times, sd, sl, snaps = [], [], [], []
    clamped = 0
    for n in range(n_steps):
        drift = rhs(state, params, interactions)
        clamped += drift.clamped_pairs
        if n % sample_every == 0:
            s = measure_stress(state, params, drift)
            times.append(s.t)
            sd.append(s.sigma_d)
            sl.append(s.sigma_lj)
            if record_orientations:
                snaps.append(state.orientations.copy())
        state = step(state, dt, rng, params, interactions, drift)
    return Trajectory(
        np.array(times), np.array(sd).reshape(-1, 3, 3), np.array(sl).reshape(-1, 3, 3), state, clamped,
        np.array(snaps) if record_orientations else None, {"dt": dt, "n_steps": n_steps},
    )


@dataclass(frozen=True)
class ViscosityEstimate:
    """Ensemble mean and standard error of Sigma_xy / gamma over independent runs."""

    dipolar: float
    dipolar_stderr: float
    total: float
    total_stderr: float
    collision: float
    collision_stderr: float
    n_runs: int

    def relative(self, eta0):
        return self.dipolar / eta0, self.total / eta0


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def effective_viscosity_ibm(trajectories, params: SuspensionParams, burn_in: float = 0.0) -> ViscosityEstimate:
    """Time average of Sigma_xy / gamma after ``burn_in``, then mean and standard error across runs."""
    if params.gamma == 0:
        raise ShearRequiredError("the effective viscosity is undefined without shear (gamma = 0)")
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    dip, col = [], []
    for tr in trajectories:
        keep = tr.times >= burn_in
        if not np.any(keep):
            raise ValueError("burn-in discards every stress sample")
        dip.append(np.mean(tr.sigma_d[keep, 0, 1]) / params.gamma)
        col.append(np.mean(tr.sigma_lj[keep, 0, 1]) / params.gamma)
    dip = np.array(dip)
    col = np.array(col)
    md, ed = _mean_stderr(dip)
    mc, ec = _mean_stderr(col)
    mt, et = _mean_stderr(dip + col)
    return ViscosityEstimate(md, ed, mt, et, mc, ec, len(dip))


# -- checkpoints ------------------------------------------------------------

CHECKPOINT_MAGIC = b"SWRS"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIQd")


def write_checkpoint(path, state: SwimmerState):
    """Fixed little-endian record.

    Layout: 4-byte magic ``SWRS``, uint32 version, uint64 N, float64 t, then
    N x 3 float64 positions and N x 3 float64 orientations, row-major.
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, state.n, state.t))
        fh.write(np.ascontiguousarray(state.positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.orientations, dtype="<f8").tobytes())


def read_checkpoint(path) -> SwimmerState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("checkpoint is truncated")
    magic, version, n, t = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ValueError("not a swimmer checkpoint (bad magic or version)")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 6 * n:
        raise ValueError(f"checkpoint body has {body.size} values, expected {6 * n}")
    pos = body[: 3 * n].reshape(n, 3).astype(float)
    ori = body[3 * n :].reshape(n, 3).astype(float)
    return SwimmerState(pos, ori, t)


# -- orientation statistics -------------------------------------------------

def jeffery_orbit(alpha0, beta0, t, B, gamma):
    """Closed-form orientation of an isolated spheroid in u = (0, gamma x, 0).

    tan(alpha) = k tan(w t + phi) with k = sqrt((1 + B)/(1 - B)),
    w = (gamma/2) sqrt(1 - B^2); tan(beta) sqrt(1 + B cos 2 alpha) is conserved.
    Returns alpha unwrapped (continuous in t).
    """
    t = np.asarray(t, dtype=float)
    k = np.sqrt((1 + B) / (1 - B))
    w = 0.5 * gamma * np.sqrt(1 - B * B)
    # phase psi with tan(psi) = tan(alpha)/k; psi and alpha share a quadrant
    psi = np.arctan2(np.sin(alpha0) / k, np.cos(alpha0)) + w * t
    principal = np.arctan2(k * np.sin(psi), np.cos(psi))
    alpha = psi + np.mod(principal - psi + np.pi, 2 * np.pi) - np.pi
    start = np.arctan2(np.sin(alpha0), np.cos(alpha0))
    alpha = alpha + (alpha0 - start)
    if abs(np.cos(beta0)) < 1e-15:
        return alpha, np.full_like(alpha, np.pi / 2)
    const = np.tan(beta0) * np.sqrt(1 + B * np.cos(2 * alpha0))
    beta = np.arctan(const / np.sqrt(1 + B * np.cos(2 * alpha)))
    if np.cos(beta0) < 0:
        beta = beta + np.pi
    return alpha, beta


def orientation_histogram(samples, grid, band: int = 4):
    """Density estimate on ``grid`` from orientation samples, truncated to harmonics l <= band."""
    from .sphere import normalized_legendre

    d = np.asarray(samples, dtype=float).reshape(-1, 3)
    a, b = angles_from_vector(d)
    plm = normalized_legendre(band, np.cos(b))
    m = np.arange(band + 1)
    half = np.einsum("nlm,nm->lm", plm, np.exp(-1j * np.outer(a, m))) / d.shape[0]
    half = np.tril(half)
    full = np.zeros((grid.l_max + 1, grid.l_max + 1), dtype=complex)
    full[: band + 1, : band + 1] = half
    return grid.synthesize(full)


__all__ = [
    "SwimmerState", "StressSample", "Interactions", "Drift", "Trajectory", "ViscosityEstimate",
    "lj_force", "minimum_image", "lees_edwards_shift", "rhs", "step", "default_dt", "tangent_noise", "measure_stress",
    "simulate", "effective_viscosity_ibm", "write_checkpoint", "read_checkpoint", "jeffery_orbit",
    "orientation_histogram",
]
