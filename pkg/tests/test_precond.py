import math

import numpy as np
import pytest
import scipy.linalg

from sketchprecond.exceptions import DimensionMismatch, RankDeficient
from sketchprecond.linalg import singular_values
from sketchprecond.metrics import distortion, orthonormal_basis
from sketchprecond.precond import (
    apply_M, apply_Mt, build_preconditioner, identity_preconditioner, initial_guess,
)
from sketchprecond.problems import gen_dense, gen_rhs
from sketchprecond.sketches import apply_sketch, generate_sparse_sign, sketch_vector


def test_identity_sketch():
    P = build_preconditioner(np.eye(4))
    np.testing.assert_allclose(P.M, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(P.Q, np.eye(4), atol=1e-15)
    assert P.d == 4 and P.n == 4


def test_diagonal_sketch():
    P = build_preconditioner(np.diag([2.0, 4.0]))
    np.testing.assert_allclose(P.M, np.diag([0.5, 0.25]), atol=1e-15)


def test_sketch_becomes_orthonormal(rng):
    Y = rng.standard_normal((80, 10))
    P = build_preconditioner(Y)
    YM = Y @ P.M
    assert np.max(np.abs(YM.T @ YM - np.eye(10))) <= 1e-10
    np.testing.assert_allclose(YM, P.Q, atol=1e-10)
    assert np.all(np.tril(P.M, -1) == 0)
    assert P.build_time >= 0


def test_rank_deficient_sketch(rng):
    Y = rng.standard_normal((30, 4))
    Y[:, 3] = 2 * Y[:, 1]
    with pytest.raises(RankDeficient):
        build_preconditioner(Y)


def test_initial_guess_zero(rng):
    P = build_preconditioner(rng.standard_normal((10, 3)))
    np.testing.assert_array_equal(initial_guess(P, np.zeros(10)), np.zeros(3))


def test_initial_guess_consistent(rng):
    Y = rng.standard_normal((6, 2))
    z = np.array([1.5, -0.25])
    P = build_preconditioner(Y)
    x0 = initial_guess(P, Y @ z)
    assert np.linalg.norm(Y @ z - Y @ x0) <= 1e-12
    np.testing.assert_allclose(x0, z, rtol=1e-12)


def test_initial_guess_normal_equations_oracle(rng):
    Y = rng.standard_normal((40, 6))
    Sb = rng.standard_normal(40)
    x0 = initial_guess(build_preconditioner(Y), Sb)
    ref = np.linalg.solve(Y.T @ Y, Y.T @ Sb)
    np.testing.assert_allclose(x0, ref, rtol=1e-9)


def test_initial_guess_dims(rng):
    P = build_preconditioner(rng.standard_normal((10, 3)))
    with pytest.raises(DimensionMismatch):
        initial_guess(P, np.ones(9))


def test_apply_against_back_substitution(rng):
    Y = rng.standard_normal((30, 5))
    P = build_preconditioner(Y)
    R = np.linalg.qr(Y)[1]
    R *= np.sign(np.diag(R))[:, None]
    v = rng.standard_normal(5)
    np.testing.assert_allclose(apply_M(P, v), scipy.linalg.solve_triangular(R, v), rtol=1e-12)
    np.testing.assert_allclose(apply_Mt(P, v), scipy.linalg.solve_triangular(R, v, trans="T"), rtol=1e-12)
    assert np.array_equal(P.apply(v), apply_M(P, v))
    with pytest.raises(DimensionMismatch):
        apply_M(P, np.ones(4))


def test_identity_preconditioner(rng):
    P = identity_preconditioner(3)
    v = rng.standard_normal(3)
    np.testing.assert_array_equal(apply_M(P, v), v)
    np.testing.assert_array_equal(apply_Mt(P, v), v)


@pytest.mark.parametrize("seed", range(5))
def test_sketch_and_solve_bounds(seed):
    rng = np.random.default_rng(seed)
    m, n, d = 3000, 20, 160
    A = gen_dense(m, n, 100.0, rng)
    b, x_star, res_star = gen_rhs(A, 0.5, rng)
    S = generate_sparse_sign(d, m, 8, seed=seed)
    P = build_preconditioner(apply_sketch(S, A))
    x0 = initial_guess(P, sketch_vector(S, b))
    U = orthonormal_basis(A)
    eta_ab = distortion(S, U, also_b=b).eta
    eta_a = distortion(S, U).eta
    res0 = np.linalg.norm(b - A @ x0)
    assert res0 <= (1 + eta_ab) / (1 - eta_ab) * res_star
    sharp = math.sqrt(1 + (2 * eta_ab + eta_ab**2) ** 2 / (1 - eta_ab) ** 4)
    assert res0 <= sharp * res_star
    assert np.linalg.norm(A @ (x_star - x0)) <= math.sqrt(2 * eta_ab / (1 - eta_ab)) * res_star
    s = singular_values(A @ P.M)
    assert s[0] / s[-1] <= (1 + eta_a) / (1 - eta_a)
