import csv
import json
import math

import numpy as np
import pytest
import scipy.integrate
import scipy.sparse as sp

from sketchprecond.exceptions import InvalidDistortion, InvalidResidual, RankDeficient
from sketchprecond.metrics import (
    coherence_stats, cond_bound, distortion, distortion_trials, extend_basis,
    forward_error_from_residuals, leverage_scores, marchenko_pastur_pdf,
    marchenko_pastur_support, orthonormal_basis, sketched_spectrum,
)
from sketchprecond.problems import gen_dense, gen_identity_columns
from sketchprecond.sketches import generate_gaussian, generate_sparse_sign


def test_orthonormal_basis_identity_columns():
    U = orthonormal_basis(np.eye(5)[:, :3])
    np.testing.assert_allclose(U, np.eye(5)[:, :3], atol=1e-15)


def test_orthonormal_basis_already_orthonormal(rng):
    U0, _ = np.linalg.qr(rng.standard_normal((30, 4)))
    U = orthonormal_basis(U0)
    assert np.max(np.abs(U.T @ U - np.eye(4))) <= 1e-12


def test_orthonormal_basis_spans_range(rng):
    A = rng.standard_normal((60, 7))
    U = orthonormal_basis(A)
    assert np.max(np.abs(U.T @ U - np.eye(7))) <= 1e-10
    assert np.linalg.norm(A - U @ (U.T @ A)) <= 1e-10 * np.linalg.norm(A)


def test_orthonormal_basis_rank_deficient():
    with pytest.raises(RankDeficient):
        orthonormal_basis(np.ones((5, 2)))


def test_distortion_isometry(rng):
    m = 40
    Qo, _ = np.linalg.qr(rng.standard_normal((m, m)))
    U = orthonormal_basis(rng.standard_normal((m, 5)))
    assert distortion(Qo, U).eta <= 1e-10


def test_distortion_scaling(rng):
    U = orthonormal_basis(rng.standard_normal((20, 3)))
    rep = distortion(2 * np.eye(20), U)
    assert rep.eta == pytest.approx(1.0, abs=1e-12)
    assert rep.sigma_max == pytest.approx(2.0)


def test_extend_basis(rng):
    U = orthonormal_basis(rng.standard_normal((30, 3)))
    b = rng.standard_normal(30)
    V = extend_basis(U, b)
    assert V.shape == (30, 4)
    assert np.max(np.abs(V.T @ V - np.eye(4))) <= 1e-12
    assert np.linalg.norm(b - V @ (V.T @ b)) <= 1e-12 * np.linalg.norm(b)
    assert extend_basis(U, U @ np.ones(3)).shape == (30, 3)


def test_distortion_with_rhs_not_smaller(rng):
    A = rng.standard_normal((500, 5))
    U = orthonormal_basis(A)
    b = rng.standard_normal(500)
    S = generate_sparse_sign(40, 500, 4, seed=1)
    assert distortion(S, U, also_b=b).eta >= distortion(S, U).eta - 1e-12


def test_median_distortion_envelope():
    m, n, d = 20_000, 200, 1600
    U = orthonormal_basis(gen_dense(m, n, 1e3, np.random.default_rng(0)))
    rep = distortion_trials(lambda s: generate_sparse_sign(d, m, 8, seed=s), U, 50)
    r = math.sqrt(n / d)
    assert 0.7 * r <= rep.quantiles[1] <= 1.4 * r
    assert rep.quantiles[0] <= rep.quantiles[1] <= rep.quantiles[2]
    assert rep.trials == 50 and len(rep.etas) == 50


def test_two_sided_embedding(rng):
    m, n = 2000, 10
    U = orthonormal_basis(rng.standard_normal((m, n)))
    S = generate_sparse_sign(80, m, 4, seed=3)
    eta = distortion(S, U).eta
    for _ in range(100):
        z = U @ rng.standard_normal(n)
        nz, nsz = np.linalg.norm(z), np.linalg.norm(S.apply(z))
        assert (1 - eta) * nz - 1e-10 <= nsz <= (1 + eta) * nz + 1e-10


def test_distortion_depends_only_on_range(rng):
    m, n, d = 5000, 20, 160
    A = rng.standard_normal((m, n))
    G = rng.standard_normal((n, n)) + 5 * np.eye(n)
    factory = lambda s: generate_sparse_sign(d, m, 8, seed=s)  # noqa: E731
    e1 = distortion_trials(factory, orthonormal_basis(A), 20).eta
    e2 = distortion_trials(factory, orthonormal_basis(A @ G), 20).eta
    assert abs(e1 - e2) <= 0.02 * e1


def test_distortion_report_io(tmp_path, rng):
    U = orthonormal_basis(rng.standard_normal((300, 4)))
    rep = distortion_trials(lambda s: generate_sparse_sign(40, 300, 4, seed=s), U, 5)
    rep.write_csv(tmp_path / "eta.csv")
    rows = list(csv.reader(open(tmp_path / "eta.csv")))
    assert rows[0] == ["trial", "eta"] and len(rows) == 6
    assert json.loads(rep.to_json())["trials"] == 5


def test_cond_bound():
    assert cond_bound(0.0) == 1.0
    assert cond_bound(0.5) == pytest.approx(3.0)
    with pytest.raises(InvalidDistortion):
        cond_bound(1.0)


def test_forward_error_examples():
    assert forward_error_from_residuals(0.7, 0.7) == 0.0
    assert forward_error_from_residuals(2.5, 0.0) == 2.5
    assert forward_error_from_residuals(5.0, 3.0) == pytest.approx(4.0)
    assert forward_error_from_residuals(1.0, 1.0 + 1e-14) == 0.0
    with pytest.raises(InvalidResidual):
        forward_error_from_residuals(1.0, 2.0)
    with pytest.raises(InvalidResidual):
        forward_error_from_residuals(-1.0, 0.0)


def test_marchenko_pastur_support_and_mass():
    assert marchenko_pastur_support(1.0) == (0.0, 4.0)
    assert marchenko_pastur_pdf(5.0, 0.25) == 0.0
    assert marchenko_pastur_pdf(0.1, 0.25) == 0.0
    for ratio in (0.125, 0.25, 0.5):
        lo, hi = marchenko_pastur_support(ratio)
        mass, _ = scipy.integrate.quad(lambda x: marchenko_pastur_pdf(x, ratio), lo, hi, limit=200)
        assert abs(mass - 1) <= 1e-6


def test_coherence_identity_columns():
    A = gen_identity_columns(50, 5)
    s = leverage_scores(A)
    assert np.sum(s == 1.0) == 5 and np.sum(s == 0.0) == 45
    c = coherence_stats(A)
    assert c.maximum == 1.0 and c.total == pytest.approx(5.0, abs=1e-8)


def test_coherence_dense_concentrates(rng):
    m, n = 4000, 20
    c = coherence_stats(gen_dense(m, n, 10.0, rng))
    assert c.total == pytest.approx(n, abs=1e-8)
    assert 0.5 * n / m <= c.median <= 1.5 * n / m
    assert c.maximum <= 3 * n / m


def test_spectrum_orthogonal_point_mass(rng):
    m = 32
    Qo, _ = np.linalg.qr(rng.standard_normal((m, m)))
    U = orthonormal_basis(rng.standard_normal((m, 4)))
    h = sketched_spectrum(lambda s: Qo, U, 3, bins=10)
    assert h.counts.sum() == 12
    np.testing.assert_allclose(h.samples, 1.0, atol=1e-12)


def test_spectrum_gaussian_in_mp_support(rng):
    m, n, d = 4000, 50, 400
    U = orthonormal_basis(rng.standard_normal((m, n)))
    h = sketched_spectrum(lambda s: generate_gaussian(d, m, seed=s), U, 20)
    assert h.counts.sum() == n * 20
    assert h.fraction_in_support() >= 0.97
    assert h.overlay.shape == h.counts.shape


def test_spectrum_deterministic(rng, tmp_path):
    U = orthonormal_basis(rng.standard_normal((200, 4)))
    f = lambda s: generate_sparse_sign(40, 200, 4, seed=s)  # noqa: E731
    a, b = sketched_spectrum(f, U, 5), sketched_spectrum(f, U, 5)
    np.testing.assert_array_equal(a.samples, b.samples)
    a.write_csv(tmp_path / "h.csv")
    assert open(tmp_path / "h.csv").readline().startswith("bin_left")


def test_sparse_input_basis():
    U = orthonormal_basis(sp.eye(10, 3, format="csc"))
    assert U.shape == (10, 3)
