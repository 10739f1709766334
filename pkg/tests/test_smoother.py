import numpy as np
import pytest

from hdivmg.smoother import (
    ELLIPTIC,
    MIXED,
    SmootherConfig,
    build_patch_solvers,
    dense_blocks,
    local_matrices,
)


def mixed_smoother(ops, eps=0.0, eta=0.5):
    return build_patch_solvers(ops.dofs, ops.mixed(eps), SmootherConfig(eta=eta))


def test_config_validation():
    with pytest.raises(ValueError):
        SmootherConfig(eta=0.0)
    with pytest.raises(ValueError):
        SmootherConfig(variant="multiplicative")


def test_dense_blocks_matches_slicing(level_ops, rng):
    A = level_ops(2, 1)[2].A
    idx = rng.choice(A.shape[0], size=(3, 7), replace=False)
    blocks = dense_blocks(A, idx)
    for b, i in zip(blocks, idx):
        assert np.allclose(b, A.toarray()[np.ix_(i, i)])


def test_interior_patch_local_system(level_ops):
    ops = level_ops(2, 1)[2]
    K = ops.mixed(0.0)
    S = mixed_smoother(ops)
    locals_ = local_matrices(S, K)
    sizes = [len(p.index) for p in S.patches]
    full = [n for n, p in enumerate(S.patches) if len(p.dofs.patch.cells) == 4]
    for n in full:
        assert sizes[n] == 40
        # pressure constants on the patch are in the kernel of the local matrix
        assert np.linalg.matrix_rank(locals_[n]) == sizes[n] - 1
        c = S.patches[n].constraint
        bordered = np.block([[locals_[n], c[:, None]], [c[None, :], np.zeros((1, 1))]])
        assert bordered.shape == (41, 41)
        assert np.linalg.matrix_rank(bordered) == 41


def test_exact_local_solve(level_ops, rng):
    ops = level_ops(2, 1)[2]
    K = ops.mixed(0.0)
    S = mixed_smoother(ops)
    patch = next(p for p in S.patches if len(p.dofs.patch.cells) == 4)
    local = dense_blocks(K.matrix, patch.index[None])[0]
    x = rng.standard_normal(len(patch.index))
    x[-len(patch.dofs.pressure_dofs):] -= (patch.constraint @ x) / (patch.constraint @ patch.constraint) * patch.constraint[-len(patch.dofs.pressure_dofs):]
    assert np.isclose(patch.constraint @ x, 0.0)
    assert np.allclose(patch.inverse @ (local @ x), x)


def test_mixed_smoother_symmetric_in_j_metric(level_ops):
    ops = level_ops(2, 1)[2]
    S = mixed_smoother(ops).as_dense()
    n = ops.dofs.n_free
    J = np.ones(S.shape[0])
    J[n:] = -1
    SJ = S * J[None, :]
    assert np.allclose(SJ, SJ.T, atol=1e-10)


def test_elliptic_smoother_spd(level_ops):
    ops = level_ops(2, 1)[2]
    S = build_patch_solvers(ops.dofs, ops.elliptic(1.0), SmootherConfig(variant=ELLIPTIC)).as_dense()
    assert np.allclose(S, S.T, atol=1e-12)
    assert np.linalg.eigvalsh(S).min() > 0


def test_elliptic_local_matrices_cholesky(level_ops):
    ops = level_ops(2, 1)[2]
    S = build_patch_solvers(ops.dofs, ops.elliptic(1.0), SmootherConfig(variant=ELLIPTIC))
    for local in local_matrices(S, ops.elliptic(1.0)):
        np.linalg.cholesky(local)


def test_smoother_preserves_divergence_free_subspace(level_ops, rng):
    ops = level_ops(2, 1)[2]
    S = mixed_smoother(ops)
    n = ops.dofs.n_free
    # residual with zero pressure part: local corrections are discretely divergence free
    r = np.concatenate([rng.standard_normal(n), np.zeros(ops.dofs.n_pressure)])
    u = S.apply(r)[:n]
    assert np.linalg.norm(ops.B @ u) < 1e-10 * np.linalg.norm(u)


@pytest.mark.parametrize("eps", [1.0, 1e-2])
def test_mixed_elliptic_equivalence(level_ops, rng, eps):
    # eliminating the local pressure turns each mixed patch solve into the penalty one
    ops = level_ops(2, 1)[2]
    n = ops.dofs.n_free
    Sm = build_patch_solvers(ops.dofs, ops.mixed(eps), SmootherConfig(eta=1.0))
    Se = build_patch_solvers(ops.dofs, ops.elliptic(eps), SmootherConfig(eta=1.0, variant=ELLIPTIC))
    f = rng.standard_normal(n)
    um = Sm.apply(np.concatenate([f, np.zeros(ops.dofs.n_pressure)]))[:n]
    ue = Se.apply(f)
    assert np.allclose(um, ue, atol=1e-10 * np.linalg.norm(ue))


def test_operator_type_checked(level_ops):
    ops = level_ops(1, 1)[1]
    with pytest.raises(TypeError):
        build_patch_solvers(ops.dofs, ops.A, SmootherConfig(variant=MIXED))
    with pytest.raises(TypeError):
        build_patch_solvers(ops.dofs, ops.mixed(0.0), SmootherConfig(variant=ELLIPTIC))


def test_eta_scales_linearly(level_ops, rng):
    ops = level_ops(1, 1)[1]
    r = rng.standard_normal(ops.dofs.n_unknowns)
    a = mixed_smoother(ops, eta=0.5).apply(r)
    b = mixed_smoother(ops, eta=0.25).apply(r)
    assert np.allclose(a, 2 * b)
