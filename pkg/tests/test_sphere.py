import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swimrheo.errors import ResolutionError, SymmetryError
from swimrheo.sphere import (
    HarmonicCoeffs,
    Orientation,
    SphereGrid,
    SphericalField,
    double_cross_field,
    laplacian_half,
    lemma_divergence,
    sh_backward,
    sh_forward,
    sobolev_norm,
    sph_divergence,
    sph_gradient,
)


def random_coeffs(l_max, rng):
    half = rng.normal(size=(l_max + 1, l_max + 1)) + 1j * rng.normal(size=(l_max + 1, l_max + 1))
    half = np.tril(half)
    half[:, 0] = half[:, 0].real
    return HarmonicCoeffs.from_half(half)


angles = st.tuples(st.floats(0, 2 * np.pi, exclude_max=True), st.floats(0, np.pi))


@given(angles)
def test_orientation_unit_and_round_trip(ab):
    a, b = ab
    o = Orientation.from_angles(a, b)
    assert abs(np.linalg.norm(o.d) - 1) < 1e-12
    back = Orientation.from_vector(o.d)
    assert back == o
    if 1e-6 < b < np.pi - 1e-6:
        assert abs(back.beta - b) < 1e-9
        assert abs(np.angle(np.exp(1j * (back.alpha - a)))) < 1e-9


def test_pole_canonical_azimuth():
    assert Orientation.from_angles(1.3, 0.0).alpha == 0.0
    assert Orientation.from_vector([0, 0, -2]).alpha == 0.0
    assert Orientation.from_angles(1.3, 0.0) == Orientation.from_angles(4.0, 0.0)


def test_grid_resolution_guard():
    with pytest.raises(ResolutionError):
        SphereGrid(8, n_beta=8)
    with pytest.raises(ResolutionError):
        SphereGrid(8, n_alpha=16)
    g = SphereGrid(4)
    with pytest.raises(ResolutionError):
        SphericalField(g, np.zeros(g.shape), band_limit=5)


def test_symmetry_violation_rejected():
    c = HarmonicCoeffs.zeros(2).coeffs.copy()
    c[1, 2 + 1] = 1.0
    with pytest.raises(SymmetryError):
        HarmonicCoeffs(2, c)


@pytest.mark.parametrize("l_max", [4, 16, 32])
def test_round_trips(l_max):
    rng = np.random.default_rng(l_max)
    c = random_coeffs(l_max, rng)
    g = SphereGrid(l_max)
    f = sh_backward(c, g)
    c2 = sh_forward(f)
    assert np.max(np.abs(c2.coeffs - c.coeffs)) < 1e-12 * max(1, np.max(np.abs(c.coeffs)))
    f2 = sh_backward(c2, g)
    assert np.max(np.abs(f2.values - f.values)) < 1e-12 * np.max(np.abs(f.values))


def test_constant_and_sectoral_projection():
    g = SphereGrid(8)
    c = sh_forward(SphericalField(g, np.full(g.shape, 1 / (4 * np.pi))))
    assert abs(c.get(0, 0) - np.sqrt(4 * np.pi) / (4 * np.pi)) < 1e-14
    assert abs(c.mass - 1) < 1e-13
    a, b = g.mesh()
    c = sh_forward(SphericalField(g, np.sin(b) ** 2 * np.cos(2 * a)))
    mask = np.ones_like(c.coeffs, dtype=bool)
    mask[2, 8 + 2] = mask[2, 8 - 2] = False
    assert np.max(np.abs(c.coeffs[mask])) < 1e-14
    # sin^2 b cos 2a = sqrt(8 pi / 15) (Y_2,2 + Y_2,-2)
    assert abs(c.get(2, 2) - np.sqrt(8 * np.pi / 15)) < 1e-13


def test_parseval():
    g = SphereGrid(12)
    c = random_coeffs(12, np.random.default_rng(1))
    f = sh_backward(c, g)
    assert abs(np.sqrt(g.integrate(f.values**2)) - c.norm()) < 1e-10 * c.norm()


def test_gradient_examples():
    g = SphereGrid(8)
    a, b = g.mesh()
    grad = sph_gradient(SphericalField(g, np.full(g.shape, 3.0)))
    assert np.max(np.abs(grad.values)) < 1e-12
    grad = sph_gradient(SphericalField(g, np.cos(b)))
    assert np.max(np.abs(grad.values[..., 0])) < 1e-12
    assert np.max(np.abs(grad.values[..., 1] + np.sin(b))) < 1e-12


def test_gradient_of_first_order_density():
    # Cartesian gradient of -(3/8pi) sin^2 b cos 2a written out by hand
    g = SphereGrid(8)
    a, b = g.mesh()
    p1 = -3 / (8 * np.pi) * np.sin(b) ** 2 * np.cos(2 * a)
    cart = sph_gradient(SphericalField(g, p1)).to_cartesian()
    pref = 3 / (8 * np.pi)
    expect = pref * np.stack(
        [
            -2 * np.sin(b) * np.sin(2 * a) * np.sin(a) - 2 * np.sin(b) * np.cos(b) ** 2 * np.cos(2 * a) * np.cos(a),
            2 * np.sin(b) * np.sin(2 * a) * np.cos(a) - 2 * np.sin(b) * np.cos(b) ** 2 * np.cos(2 * a) * np.sin(a),
            2 * np.sin(b) ** 2 * np.cos(b) * np.cos(2 * a),
        ],
        axis=-1,
    )
    assert np.max(np.abs(cart - expect)) < 1e-12


def test_divergence_examples():
    g = SphereGrid(16)
    d = g.points()
    c = np.array([0.3, -1.2, 0.7])
    rigid = SphericalField.from_cartesian(g, np.cross(d, c))
    assert np.max(np.abs(sph_divergence(rigid).values)) < 1e-10
    assert np.max(np.abs(sph_divergence(SphericalField(g, np.zeros(g.shape + (2,)))).values)) == 0.0
    # tangential projection of M d for M = diag(1, -1, 0)
    M = np.diag([1.0, -1.0, 0.0])
    field = double_cross_field(g, M)
    proj = SphericalField(g, -field.values)
    div = sph_divergence(proj).values
    expect = 3 * (d[..., 0] ** 2 - d[..., 1] ** 2)
    # div of the projection is tr M - 3 dMd; of the double cross, the opposite
    assert np.max(np.abs(div + expect)) < 1e-8
    assert np.max(np.abs(sph_divergence(field).values - lemma_divergence(M, d))) < 1e-8


def test_lemma_examples():
    assert lemma_divergence(np.eye(3), Orientation.from_angles(0.4, 1.1)) == pytest.approx(0.0, abs=1e-14)
    A, C = 0.7, -0.3
    M = np.array([[A, C, 0], [C, -A, 0], [0, 0, 0]])
    for a, b in [(0.3, 0.9), (2.0, 2.5), (5.0, 1.57)]:
        o = Orientation.from_angles(a, b)
        s2 = np.sin(b) ** 2
        closed = 3 * (A * s2 * np.cos(2 * a) + C * s2 * np.sin(2 * a))
        assert lemma_divergence(M, o) == pytest.approx(closed, abs=1e-13)


def test_lemma_vs_spectral_random():
    rng = np.random.default_rng(7)
    for _ in range(100):
        M = rng.normal(size=(3, 3))
        g = SphereGrid(int(rng.integers(4, 12)))
        field = double_cross_field(g, M)
        div = sph_divergence(field).values
        assert np.max(np.abs(div - lemma_divergence(M, g.points()))) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 14))
def test_divergence_theorem(seed, l_max):
    rng = np.random.default_rng(seed)
    g = SphereGrid(l_max)
    fa = sh_backward(random_coeffs(l_max // 2, rng), g).values
    fb = sh_backward(random_coeffs(l_max // 2, rng), g).values
    div = sph_divergence(SphericalField(g, np.stack([fa, fb], -1)))
    assert abs(g.integrate(div.values)) < 1e-10 * max(1, np.max(np.abs(div.values)))


@pytest.mark.parametrize("l_max", [8, 16])
def test_laplacian_diagonal(l_max):
    g = SphereGrid(l_max)
    c = random_coeffs(l_max, np.random.default_rng(3))
    half = c.half()
    ga, gb = g.synthesize_gradient(half)
    lap = g.divergence_half(ga, gb)
    scale = np.max(np.abs(laplacian_half(half)))
    assert np.max(np.abs(lap - laplacian_half(half))) < 1e-10 * scale


def test_sobolev_weights():
    c = HarmonicCoeffs.zeros(3).coeffs.copy()
    c[2, 3] = 1.0
    assert sobolev_norm(HarmonicCoeffs(3, c), 1.0) == pytest.approx(np.sqrt(7.0))
