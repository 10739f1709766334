import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdivmg.element import (
    ReferenceBasis,
    face_points,
    gauss_1d,
    legendre_table,
    piola_scales,
    piola_transform,
    reference_basis,
)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_dimensions(k):
    b = reference_basis(k)
    assert b.velocity_dim == 2 * (k + 1) * (k + 2)
    assert b.pressure_dim == (k + 1) ** 2
    assert len(b.interior_dofs) == 2 * k * (k + 1)


def test_lowest_order_dimensions_and_constant_divergence():
    b = reference_basis(0)
    assert (b.velocity_dim, b.pressure_dim) == (4, 1)
    q = np.random.default_rng(0).random((7, 2))
    div = b.divergences(q)
    assert np.allclose(div, div[:, :1])


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_unisolvence(k):
    b = reference_basis(k)
    # degrees of freedom applied to the shape functions give the identity
    mat = b.apply_dofs(b.values)
    assert np.allclose(mat, np.eye(b.velocity_dim), atol=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_divergence_in_pressure_space(k):
    b = reference_basis(k)
    q, w = b.cell_rule.points, b.cell_rule.weights
    div = b.divergences(q)
    psi = b.pressure_values(q)
    resid = div - np.einsum("mq,iq,q->mi", div, psi, w) @ psi
    assert np.abs(resid).max() <= 1e-12 * max(1.0, np.abs(div).max())


@pytest.mark.parametrize("k", [1, 2])
def test_face_function_has_no_normal_flux_elsewhere(k):
    b = reference_basis(k)
    s = gauss_1d(k + 2)
    for lf in range(4):
        axis = lf // 2
        vals = b.values(face_points(lf, s.points))[..., axis]
        flux = vals @ s.weights
        own = b.face_dofs(lf)
        others = np.setdiff1d(np.arange(b.velocity_dim), own)
        assert np.allclose(flux[others], 0.0, atol=1e-12)
        assert np.allclose(flux[own[0]], 1.0)


def test_pressure_basis_orthonormal():
    b = reference_basis(2)
    q, w = b.cell_rule.points, b.cell_rule.weights
    psi = b.pressure_values(q)
    assert np.allclose(psi * w @ psi.T, np.eye(b.pressure_dim))


def test_legendre_derivative():
    x = np.linspace(0, 1, 5)
    vals, ders = legendre_table(2, x)
    # second orthonormal shifted Legendre polynomial: sqrt(5) (6x^2 - 6x + 1)
    assert np.allclose(vals[2], np.sqrt(5) * (6 * x**2 - 6 * x + 1))
    assert np.allclose(ders[2], np.sqrt(5) * (12 * x - 6))


def test_project_pressure_exact_for_polynomials():
    b = reference_basis(1)
    coef = b.project_pressure(lambda x: 2 + x[:, 0] - 3 * x[:, 0] * x[:, 1])
    pts = np.random.default_rng(2).random((6, 2))
    assert np.allclose(coef @ b.pressure_values(pts), 2 + pts[:, 0] - 3 * pts[:, 0] * pts[:, 1])


def test_piola_preserves_divergence_integral():
    b = reference_basis(1)
    J = np.diag([0.5, 0.25])
    det = np.linalg.det(J)
    q, w = b.cell_rule.points, b.cell_rule.weights
    _, div = piola_transform(J, b.values(q), b.divergences(q))
    # integral over the physical cell equals the reference integral
    assert np.allclose((div * det) @ w, b.divergences(q) @ w)


def test_piola_scales_match_general_map():
    h = np.array([[0.5, 0.25]])
    vs, gs, det = piola_scales(h)
    b = reference_basis(1)
    q = b.cell_rule.points[:3]
    ref = b.values(q)
    assert np.allclose(piola_transform(np.diag(h[0]), ref), ref * vs[0])
    assert np.isclose(det[0], 0.125)
    # d(v_i)/dx_j scales by (h_i / det) / h_j
    assert np.allclose(gs[0], [[8.0, 16.0], [4.0, 8.0]])


def test_singular_jacobian_rejected():
    with pytest.raises(ValueError):
        piola_transform(np.zeros((2, 2)), np.ones((1, 2)))


@pytest.mark.parametrize("k", [-1, 4])
def test_unsupported_degree(k):
    with pytest.raises(ValueError):
        ReferenceBasis(k)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.floats(0, 1), st.floats(0, 1))
def test_divergence_matches_gradient_trace(k, x, y):
    b = reference_basis(k)
    pt = np.array([[x, y]])
    g = b.gradients(pt)
    assert np.allclose(b.divergences(pt), g[..., 0, 0] + g[..., 1, 1])
