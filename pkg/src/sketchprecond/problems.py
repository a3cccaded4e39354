"""Synthetic least-squares problems and Matrix Market I/O."""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .exceptions import BreakdownIfZero, InvalidDims, InvalidResidual, UnsupportedFormat

PROBLEM_KINDS = ("dense", "sparse", "identity", "krylov", "mtx")


@dataclass
class ProblemInstance:
    A: object
    b: np.ndarray
    x_star: np.ndarray | None = None
    res_star: float | None = None
    descriptor: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.A.shape

    def normal_residual(self):
        """``||A^T (b - A x*)||``; near zero for a valid instance."""
        r = self.b - self.A @ self.x_star
        return float(np.linalg.norm(self.A.T @ r))


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _haar_columns(rng, m, n):
    Q, R = np.linalg.qr(rng.standard_normal((m, n)))
    # sign fix makes the distribution Haar rather than QR-biased
    return Q * np.sign(np.diag(R))


def gen_dense(m, n, cond, rng=None):
    """``U diag(sigma) V^T`` with ``sigma`` log-spaced from 1 down to ``1/cond``
    and Haar-distributed ``U`` (``m x n``) and ``V`` (``n x n``)."""
    if not m >= n >= 1:
        raise InvalidDims(f"need m >= n >= 1, got m={m}, n={n}")
    if cond < 1:
        raise ValueError(f"condition number must be >= 1, got {cond}")
    rng = _rng(rng)
    sigma = np.logspace(0.0, -math.log10(cond), n) if n > 1 else np.ones(1)
    U = _haar_columns(rng, m, n)
    V = _haar_columns(rng, n, n)
    return (U * sigma) @ V.T


def gen_sparse_sign_matrix(m, n, density, rng=None):
    """``m x n`` matrix whose entries are independently ``+-1`` with probability ``density``."""
    if not 0 <= density <= 1:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    rng = _rng(rng)
    nnz = rng.binomial(m * n, density)
    flat = rng.choice(m * n, size=nnz, replace=False) if nnz else np.empty(0, dtype=np.int64)
    rows, cols = np.divmod(flat, n)
    vals = np.where(rng.integers(0, 2, size=nnz) == 1, 1.0, -1.0)
    return sp.csc_matrix((vals, (rows, cols)), shape=(m, n))


def gen_identity_columns(m, n):
    """First ``n`` columns of the ``m x m`` identity (maximally coherent)."""
    if not m >= n >= 1:
        raise InvalidDims(f"need m >= n >= 1, got m={m}, n={n}")
    return sp.eye(m, n, format="csc")


def build_krylov_basis(B, v, n):
    """Columns ``v, Bv, ..., B^{n-1} v``, each scaled to unit norm."""
    v = np.asarray(v, dtype=np.float64)
    m = v.shape[0]
    if B.shape != (m, m):
        raise InvalidDims(f"B must be {m} x {m}, got {B.shape}")
    K = np.empty((m, n))
    col = v
    for k in range(n):
        if k:
            col = np.asarray(B @ K[:, k - 1]).ravel()
        nrm = np.linalg.norm(col)
        if nrm < 1e-300:
            raise BreakdownIfZero(f"Krylov column {k} vanished")
        K[:, k] = col / nrm
    return K


def gen_krylov(m, n, rng=None, nnz_per_row=5):
    """Krylov basis for a random sparse ``m x m`` matrix and a random start vector."""
    rng = _rng(rng)
    B = gen_sparse_sign_matrix(m, m, min(1.0, nnz_per_row / m), rng) + sp.eye(m)
    return build_krylov_basis(B.tocsr(), rng.standard_normal(m), n)


def gen_rhs(A, rho=0.5, rng=None):
    """Right-hand side with ``||b|| = 1`` and optimal residual norm ``rho``.

    Raw components are uniform on ``[-1, 1]``; the parts inside and
    orthogonal to ``range(A)`` are scaled to norms ``sqrt(1 - rho^2)`` and
    ``rho``. Returns ``(b, x_star, res_star)``.
    """
    if not 0 <= rho < 1:
        raise InvalidResidual(f"need 0 <= rho < 1, got {rho}")
    rng = _rng(rng)
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
    m, n = Ad.shape
    Q, R = np.linalg.qr(Ad)
    y = rng.uniform(-1.0, 1.0, size=m)
    z = rng.uniform(-1.0, 1.0, size=m)
    p = Q @ (Q.T @ y)
    r = z - Q @ (Q.T @ z)
    r -= Q @ (Q.T @ r)
    p *= math.sqrt(1.0 - rho * rho) / np.linalg.norm(p)
    r *= rho / np.linalg.norm(r)
    b = p + r
    x_star = scipy.linalg.solve_triangular(R, Q.T @ p)
    res_star = float(np.linalg.norm(b - A @ x_star))
    return b, x_star, res_star


def stack_copies(inst, k):
    """``k`` vertically stacked copies of a problem; same ``x*``, residual scaled by ``sqrt(k)``."""
    A = sp.vstack([inst.A] * k, format="csr") if sp.issparse(inst.A) else np.vstack([inst.A] * k)
    desc = dict(inst.descriptor, copies=k)
    res = None if inst.res_star is None else inst.res_star * math.sqrt(k)
    return ProblemInstance(A, np.tile(inst.b, k), inst.x_star, res, desc)


def make_problem(kind, m=20000, n=200, cond=1e3, density=0.01, rho=0.5, seed=0, path=None):
    """Problem instance by name; ``kind`` is one of :data:`PROBLEM_KINDS`."""
    rng = np.random.default_rng(seed)
    if kind == "dense":
        A = gen_dense(m, n, cond, rng)
    elif kind == "sparse":
        A = gen_sparse_sign_matrix(m, n, density, rng)
    elif kind == "identity":
        A = gen_identity_columns(m, n)
    elif kind == "krylov":
        A = gen_krylov(m, n, rng)
    elif kind == "mtx":
        if path is None:
            raise ValueError("problem kind 'mtx' needs a path")
        A = load_matrix_market(path)
        m, n = A.shape
    else:
        raise ValueError(f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}")
    b, x_star, res_star = gen_rhs(A, rho, rng)
    desc = {"kind": kind, "m": m, "n": n, "rho": rho, "seed": seed}
    if kind == "dense":
        desc["cond"] = cond
    if kind == "sparse":
        desc["density"] = density
    if kind == "mtx":
        desc["path"] = str(path)
    return ProblemInstance(A, b, x_star, res_star, desc)


# ---------------------------------------------------------------------------
# Matrix Market


def load_matrix_market(path):
    """Read a real Matrix Market file: coordinate files become CSC, array files dense."""
    try:
        info = scipy.io.mminfo(path)
    except (ValueError, OSError) as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    fmt, field_ = info[3], info[4]
    if field_ not in ("real", "integer"):
        raise UnsupportedFormat(f"{path}: field {field_!r} is not supported (need real)")
    M = scipy.io.mmread(path)
    if fmt == "coordinate":
        return sp.csc_matrix(M, dtype=np.float64)
    return np.asarray(M, dtype=np.float64)


def save_matrix_market(path, A, comment=""):
    """Write ``A`` with 17 significant digits so values round-trip exactly."""
    if sp.issparse(A):
        A = sp.coo_matrix(A)
    scipy.io.mmwrite(path, A, comment=comment, field="real", precision=17)
