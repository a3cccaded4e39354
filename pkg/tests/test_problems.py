import math

import numpy as np
import pytest
import scipy.sparse as sp

from sketchprecond.exceptions import BreakdownIfZero, InvalidResidual, RankDeficient, UnsupportedFormat
from sketchprecond.linalg import singular_values
from sketchprecond.metrics import forward_error_from_residuals, orthonormal_basis
from sketchprecond.problems import (
    build_krylov_basis, gen_dense, gen_identity_columns, gen_krylov, gen_rhs,
    gen_sparse_sign_matrix, load_matrix_market, make_problem, save_matrix_market, stack_copies,
)


def test_dense_cond_one(rng):
    np.testing.assert_allclose(singular_values(gen_dense(50, 5, 1.0, rng)), 1.0, rtol=1e-12)


def test_dense_spectrum(rng):
    A = gen_dense(2000, 30, 1e3, rng)
    s = np.linalg.svd(A, compute_uv=False)
    np.testing.assert_allclose(s, np.logspace(0, -3, 30), rtol=1e-10)
    assert abs(s[0] / s[-1] - 1e3) <= 10


def test_dense_single_column(rng):
    A = gen_dense(10, 1, 1e6, rng)
    assert A.shape == (10, 1)
    assert np.linalg.norm(A) == pytest.approx(1.0)


def test_sparse_sign_matrix_extremes(rng):
    A = gen_sparse_sign_matrix(20, 5, 1.0, rng)
    assert A.nnz == 100 and set(np.unique(A.data)) <= {-1.0, 1.0}
    assert gen_sparse_sign_matrix(20, 5, 0.0, rng).nnz == 0


def test_sparse_sign_matrix_density(rng):
    m, n, p = 100_000, 100, 0.01
    A = gen_sparse_sign_matrix(m, n, p, rng)
    sigma = math.sqrt(p * (1 - p) / (m * n))
    assert abs(A.nnz / (m * n) - p) <= 3 * sigma


def test_identity_columns():
    A = gen_identity_columns(30, 4)
    assert A.nnz == 4
    np.testing.assert_array_equal((A.T @ A).toarray(), np.eye(4))


@pytest.mark.parametrize("seed", range(100))
def test_rhs_constraints(seed):
    rng = np.random.default_rng(seed)
    A = gen_dense(300, 8, 100.0, rng)
    b, x, res = gen_rhs(A, 0.5, rng)
    r = b - A @ x
    U = orthonormal_basis(A)
    assert abs(np.linalg.norm(b) - 1) <= 1e-12
    assert abs(res - 0.5) <= 1e-10
    assert np.linalg.norm(U.T @ r) <= 1e-10
    # Pythagoras: ||A x*|| completes the right triangle with the residual
    assert forward_error_from_residuals(np.linalg.norm(b), res) == pytest.approx(np.linalg.norm(A @ x), rel=1e-10)


def test_rhs_consistent(rng):
    A = gen_dense(100, 4, 10.0, rng)
    b, x, res = gen_rhs(A, 0.0, rng)
    assert res <= 1e-13
    np.testing.assert_allclose(A @ x, b, atol=1e-13)


def test_rhs_invalid(rng):
    with pytest.raises(InvalidResidual):
        gen_rhs(np.eye(3)[:, :2], 1.0, rng)


def test_rhs_sparse_input(rng):
    b, x, res = gen_rhs(gen_identity_columns(50, 5), 0.5, rng)
    np.testing.assert_allclose(b[:5], x, atol=1e-14)
    assert res == pytest.approx(0.5, abs=1e-12)


def test_krylov_hand_example():
    K = build_krylov_basis(sp.diags([1.0, 2.0]), np.array([1.0, 1.0]), 2)
    np.testing.assert_allclose(K[:, 0], np.array([1, 1]) / math.sqrt(2))
    np.testing.assert_allclose(K[:, 1], np.array([1, 2]) / math.sqrt(5))


def test_krylov_identity_degenerate(rng):
    K = build_krylov_basis(sp.identity(10), rng.standard_normal(10), 3)
    with pytest.raises(RankDeficient):
        orthonormal_basis(K)


def test_krylov_breakdown():
    B = sp.csr_matrix((3, 3))
    with pytest.raises(BreakdownIfZero):
        build_krylov_basis(B, np.ones(3), 2)


def test_krylov_columns_unit(rng):
    K = gen_krylov(500, 12, rng)
    np.testing.assert_allclose(np.linalg.norm(K, axis=0), 1.0, rtol=1e-14)
    c6 = np.linalg.cond(K[:, :6])
    c12 = np.linalg.cond(K)
    assert c12 >= c6  # smoke check only


def test_problem_instance_invariant():
    inst = make_problem("dense", 500, 10, seed=3)
    A, b = inst.A, inst.b
    assert inst.normal_residual() <= 1e-8 * np.linalg.norm(A, 2) * np.linalg.norm(b)
    assert inst.descriptor["kind"] == "dense"


def test_stack_copies():
    inst = make_problem("sparse", 400, 5, density=0.2, seed=1)
    st = stack_copies(inst, 3)
    assert st.shape == (1200, 5)
    assert st.res_star == pytest.approx(inst.res_star * math.sqrt(3))
    assert st.normal_residual() <= 1e-10


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_problem("mnist")


# -- Matrix Market ----------------------------------------------------------

def test_mm_roundtrip_sparse(tmp_path, rng):
    A = sp.random(30, 7, density=0.2, random_state=3, format="csc")
    A.data = rng.standard_normal(A.nnz) * 10.0 ** rng.integers(-30, 30, A.nnz)
    save_matrix_market(tmp_path / "a.mtx", A)
    B = load_matrix_market(tmp_path / "a.mtx")
    assert sp.issparse(B) and B.shape == A.shape
    np.testing.assert_array_equal(B.toarray(), A.toarray())


def test_mm_roundtrip_dense(tmp_path, rng):
    A = rng.standard_normal((6, 3))
    save_matrix_market(tmp_path / "d.mtx", A)
    np.testing.assert_array_equal(load_matrix_market(tmp_path / "d.mtx"), A)


def test_mm_one_based(tmp_path):
    (tmp_path / "c.mtx").write_text(
        "%%MatrixMarket matrix coordinate real general\n3 2 2\n1 1 4.5\n3 2 -1\n")
    A = load_matrix_market(tmp_path / "c.mtx").toarray()
    assert A[0, 0] == 4.5 and A[2, 1] == -1.0 and np.count_nonzero(A) == 2


def test_mm_rejects_complex(tmp_path):
    (tmp_path / "z.mtx").write_text(
        "%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1.0 2.0\n")
    with pytest.raises(UnsupportedFormat):
        load_matrix_market(tmp_path / "z.mtx")


def test_mm_rejects_garbage(tmp_path):
    (tmp_path / "g.mtx").write_text("hello\n")
    with pytest.raises(UnsupportedFormat):
        load_matrix_market(tmp_path / "g.mtx")


def test_mtx_problem(tmp_path, rng):
    save_matrix_market(tmp_path / "p.mtx", rng.standard_normal((40, 3)))
    inst = make_problem("mtx", path=tmp_path / "p.mtx", seed=0)
    assert inst.shape == (40, 3)


def test_sketch_to_matrix_market(tmp_path):
    from sketchprecond.sketches import generate_sparse_sign
    S = generate_sparse_sign(10, 50, 3, seed=2).matrix
    save_matrix_market(tmp_path / "s.mtx", S)
    np.testing.assert_array_equal(load_matrix_market(tmp_path / "s.mtx").toarray(), S.toarray())
