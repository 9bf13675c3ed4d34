import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swimrheo.errors import UndefinedFrequencyError
from swimrheo.sphere import Orientation, SphereGrid
from swimrheo.stokes import (
    dipole_flow,
    dipole_tensor,
    dipole_velocity_via_oseen,
    fourier_curl,
    fourier_E,
    fourier_omega,
    fourier_pressure,
    fourier_sym_gradient,
    fourier_velocity,
    jeffery_rhs,
    oseen,
    shear_background,
    stokes_residual,
)

vec3 = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.2)
unit = vec3.map(lambda v: v / np.linalg.norm(v))


def test_dipole_tensor_invariants():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        D = dipole_tensor(d, -1.7)
        assert np.max(np.abs(D - D.T)) < 1e-14
        assert abs(np.trace(D)) < 1e-14
        assert np.linalg.norm(D) == pytest.approx(1.7 * np.sqrt(2 / 3), rel=1e-14)


def test_oseen_examples():
    G = oseen([1.0, 0, 0], eta0=1 / (8 * np.pi))
    assert np.allclose(G, np.diag([2.0, 1.0, 1.0]), atol=1e-15)
    x = np.array([0.3, -0.8, 1.1])
    assert np.allclose(oseen(x), oseen(-x), atol=1e-15)
    assert np.allclose(oseen(2 * x), oseen(x) / 2, atol=1e-15)
    G, flag = oseen([0.01, 0, 0], r_min=0.5, return_flag=True)
    assert flag and np.allclose(G, oseen([0.5, 0, 0]))


@settings(max_examples=100)
@given(vec3, unit)
def test_dipole_flow_matches_oseen_contraction(x, d):
    U0 = -1.3
    f = dipole_flow(x, d, U0, eta0=0.7)
    ref = dipole_velocity_via_oseen(x, d, U0, eta0=0.7, h=1e-5)
    assert np.allclose(f.u, ref, atol=1e-8 * (1 + np.max(np.abs(ref))))


@settings(max_examples=100)
@given(vec3, unit)
def test_dipole_gradient_matches_difference_of_velocity(x, d):
    f = dipole_flow(x, d, 1.0)
    h = 1e-6
    num = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        num[:, j] = (dipole_flow(x + e, d, 1.0).u - dipole_flow(x - e, d, 1.0).u) / (2 * h)
    scale = 1 + np.max(np.abs(num))
    assert np.allclose(f.gradU, num, atol=1e-6 * scale)
    curl = np.array([num[2, 1] - num[1, 2], num[0, 2] - num[2, 0], num[1, 0] - num[0, 1]])
    assert np.allclose(f.curl, curl, atol=1e-6 * scale)


@settings(max_examples=100)
@given(vec3, unit)
def test_dipole_flow_invariants(x, d):
    f = dipole_flow(x, d, -2.0)
    assert abs(np.trace(f.gradU)) < 1e-10
    assert np.array_equal(f.E, 0.5 * (f.gradU + f.gradU.T))
    assert abs(np.sum(np.linalg.eigvalsh(f.E))) < 1e-10
    assert np.linalg.norm(dipole_flow(2 * x, d, -2.0).u) == pytest.approx(np.linalg.norm(f.u) / 4, rel=1e-12, abs=1e-300)


def test_pusher_pushes_outward_along_axis():
    f = dipole_flow([2.0, 0, 0], [1.0, 0, 0], U0=-1.0)
    assert f.u[0] > 0


def test_velocity_integrates_to_zero_over_orientations():
    g = SphereGrid(8)
    x = np.array([0.4, -1.0, 0.7])
    total = np.zeros(3)
    for d, w in zip(g.points().reshape(-1, 3), g.weights.ravel()):
        total += w * dipole_flow(x, d, 1.0).u
    assert np.max(np.abs(total)) < 1e-14


def test_regularized_flag():
    f = dipole_flow([0.1, 0, 0], [0, 1.0, 0], 1.0, r_min=0.9)
    assert f.regularized
    assert np.allclose(f.u, dipole_flow([0.9, 0, 0], [0, 1.0, 0], 1.0).u)


def test_jeffery_sphere_in_shear():
    gamma = 0.3
    _, E, omega = shear_background(gamma)
    for a in np.linspace(0, 2 * np.pi, 7):
        d = np.array([np.cos(a), np.sin(a), 0.0])
        v = jeffery_rhs(d, omega, E, B=0.0)
        assert abs(v @ d) < 1e-12
        assert np.linalg.norm(v) == pytest.approx(gamma / 2, rel=1e-12)
    assert np.all(jeffery_rhs(d, np.zeros(3), np.zeros((3, 3)), 0.5) == 0)


@settings(max_examples=50)
@given(st.floats(0, 2 * np.pi), st.floats(0.05, np.pi - 0.05), st.floats(0, 0.95))
def test_jeffery_drift_in_angles(a, b, B):
    gamma = 0.7
    _, E, omega = shear_background(gamma)
    o = Orientation.from_angles(a, b)
    v = jeffery_rhs(o, omega, E, B)
    ea = np.array([-np.sin(a), np.cos(a), 0])
    eb = np.array([np.cos(a) * np.cos(b), np.sin(a) * np.cos(b), -np.sin(b)])
    alpha_dot = v @ ea / np.sin(b)
    beta_dot = v @ eb
    assert alpha_dot == pytest.approx(gamma / 2 * (1 + B * np.cos(2 * a)), abs=1e-12)
    assert beta_dot == pytest.approx(gamma * B / 4 * np.sin(2 * a) * np.sin(2 * b), abs=1e-12)
    assert abs(v @ o.d) < 1e-12


# -- Fourier kernels ------------------------------------------------------

def test_zero_frequency_rejected():
    S = dipole_tensor([1.0, 0, 0], 1.0)
    for fn in (fourier_velocity, fourier_sym_gradient, fourier_curl):
        with pytest.raises(UndefinedFrequencyError):
            fn(np.zeros(3), S)
    with pytest.raises(ZeroDivisionError):
        fourier_pressure(np.zeros(3), S)


def test_pressure_examples():
    k = np.array([0.3, 2.0, -1.0])
    assert fourier_pressure(k, np.eye(3)) == pytest.approx(1.0)
    U0 = -0.8
    assert fourier_pressure([0, 0, 1.0], dipole_tensor([1.0, 0, 0], U0)) == pytest.approx(-U0 / 3)
    S = dipole_tensor([0.6, 0.8, 0], U0)
    assert fourier_pressure(5 * k, S) == pytest.approx(fourier_pressure(k, S), rel=1e-14)


@settings(max_examples=100)
@given(vec3, unit, st.floats(0.1, 10))
def test_fourier_identities(k, d, scale):
    U0, eta0 = -1.1, 0.8
    S = dipole_tensor(d, U0)
    u = fourier_velocity(k, S, eta0)
    assert abs(k @ u) < 1e-12
    assert np.max(np.abs(stokes_residual(k, S, eta0))) < 1e-12
    assert np.allclose(fourier_velocity(scale * k, S, eta0), u / scale, atol=1e-14)
    G = fourier_sym_gradient(k, S, eta0)
    assert np.max(np.abs(fourier_sym_gradient(scale * k, S, eta0) - G)) < 1e-12
    assert abs(np.trace(G)) < 1e-14
    assert np.max(np.abs(G - G.T)) == 0
    # the symmetric part of i k u~^T reproduces the closed form
    full = 1j * np.outer(u, k)
    assert np.allclose(0.5 * (full + full.T), G, atol=1e-13)
    curl = 1j * np.cross(k, u)
    assert np.allclose(curl, fourier_curl(k, S, eta0), atol=1e-13)
    dd = np.array([0.2, -0.5, 0.84])
    dd /= np.linalg.norm(dd)
    assert abs(fourier_E(k, dd, S, eta0) @ dd) < 1e-13
    assert abs(fourier_omega(k, dd, S, eta0) @ dd) < 1e-13


def test_projection_removes_parallel_stress():
    S = dipole_tensor([1.0, 0, 0], 2.0)
    assert np.max(np.abs(fourier_velocity([1.0, 0, 0], S))) == 0


def _orientation_quadrature(fn, l_max=6):
    g = SphereGrid(l_max)
    pts = g.points().reshape(-1, 3)
    w = g.weights.ravel()
    a, b = g.mesh()
    return sum(wi * fn(di, ai, bi) for di, wi, ai, bi in zip(pts, w, a.ravel(), b.ravel()))


def test_orientation_averages_vanish():
    k = np.array([0.3, -1.2, 0.5])
    d = np.array([0.0, 0.6, 0.8])
    assert np.max(np.abs(_orientation_quadrature(lambda dp, a, b: dipole_tensor(dp, 1.0)))) < 1e-12
    assert np.max(np.abs(_orientation_quadrature(lambda dp, a, b: fourier_sym_gradient(k, dipole_tensor(dp, 1.0))))) < 1e-12
    assert np.max(np.abs(_orientation_quadrature(lambda dp, a, b: fourier_omega(k, d, dipole_tensor(dp, 1.0))))) < 1e-12


@pytest.mark.parametrize("theta", [0.3, 1.1, 2.5])
def test_rotation_moment_against_first_order_density_in_plane(theta):
    U0, eta0 = -1.4, 0.9
    alpha, beta = 0.7, 1.2
    o = Orientation.from_angles(alpha, beta)
    k = np.array([np.cos(theta), np.sin(theta), 0.0])
    p1 = lambda a, b: -3 / (8 * np.pi) * np.sin(b) ** 2 * np.cos(2 * a)
    M = _orientation_quadrature(lambda dp, a, b: fourier_omega(k, o, dipole_tensor(dp, U0), eta0) * p1(a, b))
    direction = np.array([-np.sin(alpha) * np.sin(beta), np.cos(alpha) * np.sin(beta), 0.0])
    # with curl u transformed as +i k x u~ the moment carries a minus sign
    expect = -(U0 / (10 * eta0)) * np.sin(2 * theta) * direction
    assert np.allclose(M, expect, atol=1e-13)


# -- real space vs Fourier space ------------------------------------------

def _correlation_gaussian(mean, cov):
    inv = np.linalg.inv(cov)
    norm = 1 / np.sqrt((2 * np.pi) ** 3 * np.linalg.det(cov))

    def grad(x):
        y = x - mean
        val = norm * np.exp(-0.5 * np.einsum("...i,ij,...j->...", y, inv, y))
        return -val[..., None] * (y @ inv)

    return grad


def _real_space_moments(d, U0, eta0, mean, cov, n_r=160, l_max=48):
    """int curl(u) g and int sym grad(u) g by parts: -int (grad g) x u and -sym int u (grad g)^T.

    r^2 u depends only on direction, so a radial Gauss rule on [0, R] is smooth.
    """
    grad_g = _correlation_gaussian(mean, cov)
    g = SphereGrid(l_max)
    dirs = g.points().reshape(-1, 3)
    w_ang = g.weights.ravel()
    c = U0 / (8 * np.pi * eta0)
    s = dirs @ d
    ang_u = c * dirs * (1 - 3 * s**2)[:, None]  # r^2 u
    R = np.linalg.norm(mean) + 9 * np.sqrt(np.max(np.linalg.eigvalsh(cov)))
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * R * (xr + 1)
    wr = 0.5 * R * wr
    curl = np.zeros(3)
    grad = np.zeros((3, 3))
    for ri, wi in zip(r, wr):
        gg = grad_g(ri * dirs)
        curl -= wi * np.sum(w_ang[:, None] * np.cross(gg, ang_u), axis=0)
        grad -= wi * np.einsum("n,nk,nj->kj", w_ang, ang_u, gg)
    return curl, 0.5 * (grad + grad.T)


def _fourier_moments(d, U0, eta0, mean, cov, l_max=48):
    """(2 pi)^-3 int F[H](k) cos(k.mean) exp(-k.cov.k/2) dk with the radial part in closed form."""
    g = SphereGrid(l_max)
    dirs = g.points().reshape(-1, 3)
    w_ang = g.weights.ravel()
    S = dipole_tensor(d, U0)
    a = dirs @ mean
    b = np.einsum("ni,ij,nj->n", dirs, cov, dirs)
    radial = np.sqrt(np.pi / 2) * b**-1.5 * (1 - a**2 / b) * np.exp(-(a**2) / (2 * b))
    wt = w_ang * radial / (2 * np.pi) ** 3
    curl = np.einsum("n,ni->i", wt, fourier_curl(dirs, S, eta0))
    grad = np.einsum("n,nij->ij", wt, fourier_sym_gradient(dirs, S, eta0))
    return curl, grad


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_real_and_fourier_space_agree(seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    mean = rng.normal(size=3) * 0.8
    A = rng.normal(size=(3, 3)) * 0.2
    cov = np.eye(3) * 0.6 + A @ A.T
    U0, eta0 = -1.0, 1.3
    c_real, g_real = _real_space_moments(d, U0, eta0, mean, cov)
    c_four, g_four = _fourier_moments(d, U0, eta0, mean, cov)
    scale = max(np.max(np.abs(c_real)), np.max(np.abs(g_real)))
    assert np.max(np.abs(c_real - c_four)) < 1e-6 * scale
    assert np.max(np.abs(g_real - g_four)) < 1e-6 * scale
    # the opposite vorticity sign would fail this check outright
    assert np.max(np.abs(c_real + c_four)) > 1e-2 * scale
