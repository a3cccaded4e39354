"""Both kernel backends must agree bit for bit."""

import numpy as np
import pytest
import scipy.sparse as sp

from sketchprecond import kernels
from sketchprecond.linalg import as_csc

from conftest import BACKENDS

needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def _both():
    return kernels.get_backend("python"), kernels.get_backend("cython")


@needs_both
def test_csc_dense_bit_identical(rng):
    S = as_csc(sp.random(50, 400, density=0.05, random_state=0, format="csc"))
    A = np.asfortranarray(rng.standard_normal((400, 6)))
    outs = []
    for k in _both():
        out = np.zeros((50, 6), order="F")
        k.csc_dense_accumulate(S.indptr, S.indices, S.data, A, out)
        outs.append(out)
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_allclose(outs[0], S.toarray() @ A, rtol=1e-13, atol=1e-13)


@needs_both
def test_csc_csr_bit_identical():
    S = as_csc(sp.random(40, 300, density=0.05, random_state=1, format="csc"))
    A = sp.random(300, 8, density=0.2, random_state=2, format="csr")
    A.sort_indices()
    outs = []
    for k in _both():
        out = np.zeros((40, 8), order="F")
        k.csc_csr_accumulate(S.indptr, S.indices, S.data, A.indptr.astype(np.int64),
                             A.indices.astype(np.int64), A.data, out)
        outs.append(out)
    np.testing.assert_array_equal(outs[0], outs[1])


@needs_both
def test_duplicates_identical(rng):
    base = rng.integers(0, 10, size=(500, 6)).astype(np.int64)
    res = []
    for k in _both():
        C = base.copy()
        bi, bj = k.sort_rows_find_duplicates(C, np.arange(500, dtype=np.int64))
        res.append((C, np.asarray(bi), np.asarray(bj)))
    for a, b in zip(res[0], res[1]):
        np.testing.assert_array_equal(a, b)


def test_duplicates_oracle(backend, rng):
    C = rng.integers(0, 5, size=(200, 4)).astype(np.int64)
    expect = []
    srt = np.sort(C, axis=1)
    for i in range(200):
        for j in range(3):
            if srt[i, j] == srt[i, j + 1]:
                expect.append((i, j))
    bi, bj = backend.sort_rows_find_duplicates(C, np.arange(200, dtype=np.int64))
    np.testing.assert_array_equal(C, srt)
    assert list(zip(np.asarray(bi).tolist(), np.asarray(bj).tolist())) == expect


def test_duplicates_only_listed_rows(backend):
    C = np.array([[3, 1, 1], [2, 2, 0]], dtype=np.int64)
    bi, bj = backend.sort_rows_find_duplicates(C, np.array([1], dtype=np.int64))
    np.testing.assert_array_equal(C[0], [3, 1, 1])  # untouched
    np.testing.assert_array_equal(C[1], [0, 2, 2])
    assert list(bi) == [1] and list(bj) == [1]


def test_fwht_against_hadamard(backend, rng):
    from scipy.linalg import hadamard
    X = np.asfortranarray(rng.standard_normal((16, 3)))
    ref = hadamard(16) @ X
    backend.fwht_columns(X)
    np.testing.assert_allclose(X, ref, rtol=1e-13, atol=1e-13)


@needs_both
def test_fwht_bit_identical(rng):
    X0 = np.asfortranarray(rng.standard_normal((64, 5)))
    outs = []
    for k in _both():
        X = X0.copy(order="F")
        k.fwht_columns(X)
        outs.append(X)
    np.testing.assert_array_equal(outs[0], outs[1])


def test_jacobi_eigenvalues(backend, rng):
    X = rng.standard_normal((12, 12))
    G = np.ascontiguousarray(X @ X.T)
    w, sweeps = backend.jacobi_eigenvalues(G.copy(), 1e-15, 60)
    np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(G), rtol=1e-10, atol=1e-11)
    assert 0 < sweeps <= 60
