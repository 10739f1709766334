import numpy as np
import pytest
import scipy.sparse as sp

from hdivmg.assembly import (
    INHERITED,
    NONINHERITED,
    PenaltyConfig,
    assemble_gradient,
    assemble_ip,
    default_sigma_bar,
    dump_coo,
)
from hdivmg.mesh import build_hierarchy
from hdivmg import verify


def test_default_penalty():
    assert default_sigma_bar(1) == 6.0
    assert default_sigma_bar(2) == 12.0


def test_penalty_strategies():
    hier = build_hierarchy(L=3)
    inh = PenaltyConfig.for_hierarchy(hier, 1, INHERITED)
    non = PenaltyConfig.for_hierarchy(hier, 1, NONINHERITED)
    assert inh.sigma(hier[1]) == inh.sigma(hier[3]) == 6.0 / 0.25
    assert non.sigma(hier[1]) == 6.0 / 1.0
    assert non.sigma(hier[3]) == inh.sigma(hier[3])
    with pytest.raises(ValueError):
        PenaltyConfig("other", 1.0, 1.0)
    with pytest.raises(ValueError):
        PenaltyConfig(INHERITED, 0.0, 1.0)


def test_constant_field_energy(level_ops):
    ops = level_ops(1, 1)[1]
    u = ops.dofs.interpolate_velocity(lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    # no gradient; tangential boundary jump 1 on a boundary of length 8
    assert np.isclose(u @ ops.A_full @ u, 16 * ops.sigma)


@pytest.mark.parametrize("level", [1, 2])
def test_quadratic_field_energy_and_load(level_ops, level):
    ops = level_ops(level, 1)[level]
    g = lambda x: np.column_stack([1 - x[:, 0] ** 2, np.zeros(len(x))])  # noqa: E731
    u = ops.dofs.interpolate_velocity(g)
    assert np.allclose(u[ops.dofs.boundary_normal_dofs], 0.0)
    s = ops.sigma
    assert np.isclose(u @ ops.A_full @ u, 16 / 3 + 64 * s / 15)
    uf = u[ops.dofs.free]
    assert np.isclose(ops.rhs((1.0, 1.0)) @ uf, 8 / 3)


@pytest.mark.parametrize("k", [1, 2])
def test_symmetric_positive_definite(level_ops, k):
    ops = level_ops(2, k)[2]
    A = ops.A.toarray()
    assert np.allclose(A, A.T, atol=1e-10 * np.abs(A).max())
    assert np.linalg.eigvalsh(A).min() > 0


def test_divergence_annihilates_constants_and_mass(level_ops):
    ops = level_ops(2, 1)[2]
    w = ops.dofs.pressure_mean_weights
    assert np.allclose(w @ ops.B.toarray(), 0.0, atol=1e-12)
    area = ops.dofs.mesh.cell_area[0]
    assert np.allclose(ops.M.toarray(), area * np.eye(ops.dofs.n_pressure))
    Minv = sp.diags(1 / ops.M.diagonal())
    assert np.allclose((ops.B.T @ Minv @ ops.B).toarray(), ops.D.toarray(), atol=1e-12)


def test_divergence_matches_exact(level_ops):
    ops = level_ops(2, 1)[2]
    d = ops.dofs
    u = d.interpolate_velocity(lambda x: np.column_stack([x[:, 0] ** 2 * (1 - x[:, 0] ** 2), np.zeros(len(x))]))
    # B u / area are the L2 projection coefficients of div u
    divp = (ops.B @ u[d.free]) / d.mesh.cell_area[0]
    pts = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    exact_proj = d.interpolate_pressure(lambda x: 2 * x[:, 0] - 4 * x[:, 0] ** 3)
    # RT interpolation commutes with the L2 projection onto Q_k
    assert np.allclose(d.evaluate_pressure(divp, pts), d.evaluate_pressure(exact_proj, pts))


def test_elliptic_needs_positive_epsilon(level_ops):
    ops = level_ops(1, 1)[1]
    with pytest.raises(ValueError):
        ops.elliptic(0.0)
    E = ops.elliptic(0.5)
    assert np.allclose(E.toarray(), (ops.A + 2 * ops.D).toarray())


def test_block_operator_signs(level_ops):
    ops = level_ops(1, 1)[1]
    K = ops.mixed(1e-2)
    mat = K.matrix.toarray()
    n = ops.dofs.n_free
    assert np.allclose(mat[:n, n:], ops.B.T.toarray())
    assert np.allclose(mat[n:, :n], -ops.B.toarray())
    assert np.allclose(mat[n:, n:], 1e-2 * ops.M.toarray())
    x = np.arange(K.shape[0], dtype=float)
    u, p = K.split(x)
    assert len(u) == n and len(p) == ops.dofs.n_pressure
    assert np.allclose(K @ x, mat @ x)


def test_gradient_kernel(level_ops):
    ops = level_ops(1, 1)[1]
    G = assemble_gradient(ops.dofs)
    u = ops.dofs.interpolate_velocity(lambda x: np.column_stack([np.full(len(x), 2.0), np.full(len(x), -1.0)]))
    grads = (G @ u).reshape(-1)
    assert np.allclose(grads, 0.0, atol=1e-12)


def test_ip_scales_linearly_in_sigma(level_ops):
    ops = level_ops(1, 1)[1]
    a1 = assemble_ip(ops.dofs, 1.0).toarray()
    a2 = assemble_ip(ops.dofs, 3.0).toarray()
    a0 = 1.5 * a1 - 0.5 * a2
    assert np.allclose(a1 + 2 * (a1 - a0), a2)


def test_dense_matches_sparse(level_ops):
    assert verify.check_dense_sparse(level_ops(1, 1)[1]).passed


def test_dump_coo():
    text = dump_coo(sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 2.5]])))
    assert text.splitlines() == ["0 0 1", "1 1 2.5"]


def test_constant_load_is_a_gradient(level_ops):
    # f = (1, 1) = grad(x + y): the discrete Stokes velocity vanishes
    ops = level_ops(2, 1)[2]
    F = ops.rhs((1.0, 1.0))
    K = ops.mixed(0.0).matrix.toarray()
    w = np.concatenate([np.zeros(ops.dofs.n_free), ops.dofs.pressure_mean_weights])
    bordered = np.block([[K, w[:, None]], [w[None, :], np.zeros((1, 1))]])
    sol = np.linalg.solve(bordered, np.concatenate([F, np.zeros(ops.dofs.n_pressure + 1)]))
    n = ops.dofs.n_free
    assert np.abs(sol[:n]).max() < 1e-12
    p = sol[n:-1]
    pts = np.random.default_rng(3).uniform(-1, 1, (6, 2))
    # (grad(x+y), v) = -(x+y, div v), so p = -(x+y) in this sign convention
    assert np.allclose(ops.dofs.evaluate_pressure(p, pts), -pts.sum(axis=1))
