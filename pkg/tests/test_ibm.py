import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swimrheo.errors import ShearRequiredError, StepSizeError
from swimrheo.ibm import (
    Interactions,
    SwimmerState,
    effective_viscosity_ibm,
    jeffery_orbit,
    lees_edwards_shift,
    lj_force,
    measure_stress,
    minimum_image,
    orientation_histogram,
    read_checkpoint,
    rhs,
    simulate,
    step,
    write_checkpoint,
)
from swimrheo.params import WCA_CUTOFF, SuspensionParams
from swimrheo.sphere import SphereGrid, angles_from_vector, unit_vector
from swimrheo.stokes import dipole_flow

QUIET = dict(gamma=0.0, D0=0.0)


def single(d, x=(0.0, 0.0, 0.0), **kw):
    p = SuspensionParams(N=1, L=5.0, **kw)
    return p, SwimmerState(np.array([x], dtype=float), np.array([d], dtype=float))


def test_free_swimmer_is_exact():
    d = unit_vector(0.7, 1.1)
    p, s = single(d, x=(0.3, -0.2, 0.1), **QUIET)
    dt = 0.01
    for _ in range(1000):
        s = step(s, dt, None, p)
    expect = np.array([0.3, -0.2, 0.1]) + p.V0 * d * s.t
    expect = expect - 2 * p.L * np.floor((expect + p.L) / (2 * p.L))
    assert np.max(np.abs(s.positions[0] - expect)) < 1e-12
    assert np.max(np.abs(s.orientations[0] - d)) < 1e-15


def test_sphere_in_shear_rotates_at_half_rate():
    gamma = 0.8
    errs = []
    for dt in (0.04, 0.02, 0.01):
        p, s = single(unit_vector(0.3, np.pi / 2), gamma=gamma, B=0.0, D0=0.0, V0=0.0)
        n = int(round(2.0 / dt))
        a0 = 0.3
        for _ in range(n):
            s = step(s, dt, None, p)
        a, _ = angles_from_vector(s.orientations[0])
        rate = (a - a0) / s.t
        errs.append(abs(rate - gamma / 2))
    assert errs[-1] < 1e-3
    assert errs[0] >= errs[1] >= errs[2]


def test_jeffery_orbit_convergence():
    gamma, B, T = 1.0, 0.6, 6.0
    a0, b0 = 0.4, 1.0
    errs = []
    for dt in (0.02, 0.01, 0.005):
        p, s = single(unit_vector(a0, b0), gamma=gamma, B=B, D0=0.0, V0=0.0)
        alpha = [a0]
        beta = [b0]
        times = [0.0]
        for _ in range(int(round(T / dt))):
            s = step(s, dt, None, p, Interactions.none())
            a, b = angles_from_vector(s.orientations[0])
            alpha.append(float(a))
            beta.append(float(b))
            times.append(s.t)
        alpha = np.unwrap(alpha)
        ra, rb = jeffery_orbit(a0, b0, np.array(times), B, gamma)
        errs.append(max(np.max(np.abs(alpha - ra)), np.max(np.abs(np.array(beta) - rb))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)


def test_jeffery_orbit_closed_form_solves_ode():
    B, gamma = 0.4, 0.7
    t = np.linspace(0, 20, 2001)
    for b0 in (0.8, 2.2):
        a, b = jeffery_orbit(2.5, b0, t, B, gamma)
        da = np.gradient(a, t, edge_order=2)
        db = np.gradient(b, t, edge_order=2)
        assert np.max(np.abs(da - gamma / 2 * (1 + B * np.cos(2 * a)))) < 1e-3
        assert np.max(np.abs(db - gamma * B / 4 * np.sin(2 * a) * np.sin(2 * b))) < 1e-3


def test_rotational_diffusion_autocorrelation():
    # D = D0 B^2 needs B > 0; without shear the shape term is inactive, as for a sphere
    D0, B = 1.0, 0.5
    p = SuspensionParams(N=1000, L=50.0, B=B, D0=D0, gamma=0.0, V0=0.0)
    rng = np.random.default_rng(2024)
    s = SwimmerState.random(p, rng, min_separation=0.0)
    d0 = s.orientations.copy()
    dt = 1e-3
    checkpoints = {200: None, 600: None, 1000: None}
    for n in range(1, 1001):
        s = step(s, dt, rng, p, Interactions.none())
        if n in checkpoints:
            checkpoints[n] = np.sum(s.orientations * d0, axis=1)
    for n, c in checkpoints.items():
        expect = np.exp(-2 * p.D * n * dt)
        se = c.std(ddof=1) / np.sqrt(c.size)
        assert abs(c.mean() - expect) < 3 * se


def test_pair_velocity_matches_dipole_flow():
    p = SuspensionParams(N=2, L=10.0, gamma=0.0, V0=0.0, eps_lj=0.0, U0=-1.7, eta0=1.3)
    pos = np.array([[0.0, 0.0, 0.0], [1.3, 0.4, -0.2]])
    ori = np.array([unit_vector(0.2, 1.0), unit_vector(1.1, 2.0)])
    dr = rhs(SwimmerState(pos, ori), p, Interactions(True, False))
    f = dipole_flow(pos[0] - pos[1], ori[1], p.U0, p.eta0)
    assert np.allclose(dr.velocity[0], f.u, atol=1e-15)
    g = dipole_flow(pos[1] - pos[0], ori[0], p.U0, p.eta0)
    assert np.allclose(dr.velocity[1], g.u, atol=1e-15)


def test_dipole_speed_ratio_and_minimum_image():
    p = SuspensionParams(N=2, L=20.0, gamma=0.0, V0=0.0, eps_lj=0.0)
    d = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    near = rhs(SwimmerState(np.array([[0.0, 0, 0], [2.0, 0, 0]]), d), p).velocity[0]
    far = rhs(SwimmerState(np.array([[0.0, 0, 0], [4.0, 0, 0]]), d), p).velocity[0]
    assert np.linalg.norm(near) / np.linalg.norm(far) == pytest.approx(4.0, rel=1e-12)
    # partner just across the periodic boundary is at distance 2, not 38
    wrap = rhs(SwimmerState(np.array([[-19.0, 0, 0], [19.0, 0, 0]]), d), p).velocity[0]
    assert np.allclose(wrap, -near, rtol=1e-12)
    assert np.allclose(minimum_image([39.0, -21.0, 1.0], 20.0), [-1.0, 19.0, 1.0])


def test_lees_edwards_image_across_x_face():
    p = SuspensionParams(N=2, L=5.0, gamma=0.5, B=0.0, D0=0.0, V0=0.0)
    t = 1.3
    shift = lees_edwards_shift(p, t)
    assert shift == pytest.approx(0.5 * 10.0 * 1.3)
    # j sits just across the +x face from i, on the sliding image
    xi = np.array([4.8, 0.2, 0.0])
    xj = np.array([-4.9, 0.2 - shift, 0.0])
    sep = minimum_image(xi - xj, p.L, shift)
    assert np.allclose(sep, [-0.3, 0.0, 0.0])
    s = SwimmerState(np.array([xi, xj]), np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), t)
    f = rhs(s, p, Interactions(False, True)).lj_force
    assert np.allclose(f[0], lj_force(sep, p))
    assert np.allclose(f[1], -f[0])


def test_lees_edwards_wrap_follows_the_shear():
    p, s = single([1.0, 0.0, 0.0], x=(4.9, 1.0, 0.0), gamma=2.0, B=0.3, D0=0.0, V0=1.0)
    dt = 0.01
    free = s.copy()
    for _ in range(50):
        drift = rhs(free, p)
        d = free.orientations + dt * drift.orientation
        free = SwimmerState(free.positions + dt * drift.velocity, d / np.linalg.norm(d), free.t + dt)
        s = step(s, dt, None, p)
    assert free.positions[0, 0] > p.L  # the unwrapped path crossed the x face
    assert np.allclose(s.orientations, free.orientations, atol=1e-12)
    gap = minimum_image(s.positions[0] - free.positions[0], p.L, lees_edwards_shift(p, s.t))
    assert np.allclose(gap, 0.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-60, 60), min_size=3, max_size=3), st.floats(0, 9.99))
def test_minimum_image_lands_in_the_sheared_cell(r, shift):
    L = 5.0
    out = minimum_image(r, L, shift)
    assert np.all(np.abs(out) <= L + 1e-9)
    diff = np.asarray(r) - out
    nx = round(diff[0] / (2 * L))
    assert diff[0] == pytest.approx(2 * L * nx, abs=1e-9)
    ny = (diff[1] - nx * shift) / (2 * L)
    assert ny == pytest.approx(round(ny), abs=1e-9)
    assert diff[2] / (2 * L) == pytest.approx(round(diff[2] / (2 * L)), abs=1e-9)


def test_overlap_is_clamped_and_flagged():
    p = SuspensionParams(N=2, L=10.0, gamma=0.0, eps_lj=0.0)
    s = SwimmerState(np.array([[0.0, 0, 0], [0.1, 0.2, 0.0]]), np.array([[0, 0, 1.0], [0, 1.0, 0]]))
    dr = rhs(s, p)
    assert dr.clamped_pairs == 1
    x = s.positions[0] - s.positions[1]
    f = dipole_flow(x, s.orientations[1], p.U0, p.eta0, r_min=p.r_min)
    assert f.regularized
    assert np.allclose(dr.velocity[0] - p.V0 * s.orientations[0], f.u)


def test_lj_force_properties():
    p = SuspensionParams()
    e = np.array([0.6, 0.0, 0.8])
    assert np.allclose(lj_force(p.r_cut * e, p), 0.0, atol=1e-12)
    assert lj_force(p.sigma_lj * e, p) @ e > 0
    assert np.allclose(lj_force(0.1 * e, p), p.f_max * e)
    assert np.allclose(lj_force(-0.95 * e, p), -lj_force(0.95 * e, p))
    assert np.allclose(lj_force(1.5 * e, p), 0.0)
    assert p.r_cut == pytest.approx(WCA_CUTOFF)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_collision_forces_sum_to_zero_and_drift_is_tangent(seed):
    p = SuspensionParams(N=40, L=2.0, B=0.4, gamma=0.3)
    rng = np.random.default_rng(seed)
    s = SwimmerState(rng.uniform(-2, 2, (40, 3)), unit_vector(rng.uniform(0, 6.3, 40), rng.uniform(0, 3.1, 40)))
    dr = rhs(s, p)
    assert np.max(np.abs(dr.lj_force.sum(axis=0))) <= 1e-10 * max(1.0, np.max(np.abs(dr.lj_force)))
    assert np.max(np.abs(np.sum(dr.orientation * s.orientations, axis=1))) < 1e-12
    sample = measure_stress(s, p, dr)
    assert abs(np.trace(sample.sigma_d)) < 1e-12
    assert np.allclose(sample.sigma_d, sample.sigma_d.T, atol=1e-15)
    assert np.allclose(sample.sigma_lj, sample.sigma_lj.T)


def test_mirror_symmetric_head_on_pair():
    p = SuspensionParams(N=2, L=10.0, gamma=0.0, D0=0.0)
    s = SwimmerState(np.array([[-1.5, 0.0, 0.0], [1.5, 0.0, 0.0]]), np.array([[1.0, 0, 0], [-1.0, 0, 0]]))
    for _ in range(300):
        s = step(s, 0.005, None, p)
        assert np.allclose(s.positions[0], -s.positions[1], atol=1e-12)
        assert np.allclose(s.orientations[0], -s.orientations[1], atol=1e-12)
    # they came into contact and were held apart by the repulsion
    assert 0.8 < s.positions[1, 0] - s.positions[0, 0] < p.r_cut


def test_step_size_guard_and_determinism():
    p = SuspensionParams(N=30, L=4.0, B=0.3, gamma=0.5, D0=1.0)
    with pytest.raises(StepSizeError):
        step(SwimmerState.random(p, np.random.default_rng(0)), 0.0, None, p)
    s0 = SwimmerState.random(p, np.random.default_rng(5))
    with pytest.raises(StepSizeError):
        step(s0, 10.0, np.random.default_rng(0), p)
    a = simulate(p, 50, np.random.default_rng(9), state=s0)
    b = simulate(p, 50, np.random.default_rng(9), state=s0)
    assert a.final.positions.tobytes() == b.final.positions.tobytes()
    assert a.final.orientations.tobytes() == b.final.orientations.tobytes()
    assert np.all(np.abs(np.linalg.norm(a.final.orientations, axis=1) - 1) < 1e-12)
    assert np.all(np.abs(a.final.positions) <= p.L)


def test_stress_examples():
    p = SuspensionParams(N=1, L=5.0)
    s = SwimmerState(np.zeros((1, 3)), np.array([[1.0, 0, 0]]))
    assert measure_stress(s, p).sigma_d[0, 1] == 0.0
    s = SwimmerState(np.zeros((1, 3)), unit_vector(np.array([np.pi / 4]), np.array([np.pi / 2])))
    assert measure_stress(s, p).sigma_d[0, 1] == pytest.approx(p.U0 / (2 * p.volume), rel=1e-14)


def test_isotropic_dipolar_stress_averages_to_zero():
    p = SuspensionParams(N=10_000, L=100.0)
    rng = np.random.default_rng(11)
    d = rng.standard_normal((p.N, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    terms = p.U0 / p.volume * d[:, 0] * d[:, 1]
    assert abs(terms.sum()) < 3 * terms.std(ddof=1) * np.sqrt(p.N)


def test_collision_stress_sign_under_compression():
    # a pair pressed together along the compressional axis of the shear
    p = SuspensionParams(N=2, L=10.0)
    e = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    s = SwimmerState(np.array([0.5 * e, -0.5 * e]), np.array([[0, 0, 1.0], [0, 0, 1.0]]))
    sample = measure_stress(s, p)
    assert sample.sigma_lj[0, 1] > 0


def test_viscosity_estimates():
    p = SuspensionParams(N=60, L=6.0, B=0.0, gamma=0.5, D0=0.0)
    runs = [simulate(p, 200, np.random.default_rng(k), interactions=Interactions(True, False)) for k in range(6)]
    est = effective_viscosity_ibm(runs, p, burn_in=0.0)
    # B = 0: orientations only rotate rigidly about z; the mean stays within noise of zero
    assert abs(est.dipolar) < 4 * est.dipolar_stderr + 1e-12
    assert est.collision == 0.0
    with pytest.raises(ShearRequiredError):
        effective_viscosity_ibm(runs, p.with_(gamma=0.0))
    with pytest.raises(ValueError):
        effective_viscosity_ibm(runs, p, burn_in=1e9)


def test_frozen_isotropic_orientations_give_zero_viscosity():
    p = SuspensionParams(N=200, L=10.0, gamma=0.1)
    vals = []
    for k in range(30):
        rng = np.random.default_rng(100 + k)
        s = SwimmerState.random(p, rng)
        vals.append(measure_stress(s, p).sigma_d[0, 1] / p.gamma)
    vals = np.array(vals)
    assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_checkpoint_roundtrip(tmp_path):
    p = SuspensionParams(N=17, L=3.0)
    s = SwimmerState.random(p, np.random.default_rng(1))
    s.t = 12.5
    write_checkpoint(tmp_path / "c.bin", s)
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:4] == b"SWRS" and len(raw) == 24 + 6 * 17 * 8
    back = read_checkpoint(tmp_path / "c.bin")
    assert back.t == 12.5
    assert back.positions.tobytes() == s.positions.tobytes()
    (tmp_path / "bad.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_checkpoint(tmp_path / "bad.bin")


def test_trajectory_csv(tmp_path):
    p = SuspensionParams(N=10, L=3.0, gamma=0.2)
    tr = simulate(p, 20, np.random.default_rng(0), sample_every=5)
    tr.write_csv(tmp_path / "t.csv", header={"seed": 0}, full=True)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "# seed: 0"
    assert lines[1].split(",")[:3] == ["t", "sigma_d_xy", "sigma_lj_xy"]
    assert len(lines) == 2 + 4


def test_orientation_histogram_of_uniform_samples():
    rng = np.random.default_rng(4)
    d = rng.standard_normal((200_000, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    g = SphereGrid(8)
    h = orientation_histogram(d, g)
    assert g.integrate(h) == pytest.approx(1.0, rel=1e-10)
    assert np.max(np.abs(h - 1 / (4 * np.pi))) < 0.02
