"""Dense and sparse primitives: Householder QR, triangular inverse, singular
values, and sparse-times-dense products with a fixed accumulation order.

Dense matrices are plain ``numpy.ndarray`` objects (float64); routines that
care about layout return Fortran-ordered arrays. Sparse matrices are
``scipy.sparse`` CSC matrices with int64 indices, sorted within columns.
"""

import numpy as np
import scipy.sparse as sp

from . import kernels
from .exceptions import DimensionMismatch, RankDeficient, SingularTriangular

# panel width for the blocked Householder factorization
QR_BLOCK = 32
# below this size tri_inverse falls back to row-by-row back substitution
TRI_BLOCK = 64


# ---------------------------------------------------------------------------
# CSC helpers


def as_csc(S):
    """Return ``S`` as a canonical CSC matrix (int64 indices, sorted rows)."""
    if isinstance(S, np.ndarray):
        S = sp.csc_matrix(S)
    elif not sp.issparse(S):
        raise TypeError(f"expected a sparse matrix or ndarray, got {type(S).__name__}")
    S = sp.csc_matrix(S)
    if not S.has_sorted_indices:
        S = S.sorted_indices()
    if S.indices.dtype != np.int64 or S.indptr.dtype != np.int64:
        # the constructor would downcast small index arrays to int32 again
        S = S.copy()
        S.indices = S.indices.astype(np.int64)
        S.indptr = S.indptr.astype(np.int64)
    if S.data.dtype != np.float64:
        S.data = S.data.astype(np.float64)
    return S


def validate_csc(S):
    """Check the CSC invariants; raises ``ValueError`` naming the first violation."""
    d, m = S.shape
    ptr, idx = np.asarray(S.indptr), np.asarray(S.indices)
    if len(ptr) != m + 1:
        raise ValueError("col_pointers must have length cols+1")
    if ptr[0] != 0 or ptr[-1] != len(idx):
        raise ValueError("col_pointers must start at 0 and end at nnz")
    if np.any(np.diff(ptr) < 0):
        raise ValueError("col_pointers must be nondecreasing")
    if len(idx) and (idx.min() < 0 or idx.max() >= d):
        raise ValueError("row index out of range")
    # strictly increasing inside each column: only column starts may step down
    steps = np.diff(idx)
    starts = np.zeros(len(idx), dtype=bool)
    starts[ptr[1:-1][ptr[1:-1] < len(idx)]] = True
    if np.any((steps <= 0) & ~starts[1:]):
        raise ValueError("row indices must be strictly increasing within columns")
    if not np.all(np.isfinite(S.data)):
        raise ValueError("non-finite value")
    return True


# ---------------------------------------------------------------------------
# products


def spmm(S, A):
    """Compute ``S @ A`` for a sparse ``S`` (d x m) and dense or sparse ``A``.

    Each output entry accumulates its contributions column-by-column of ``S``
    and by ascending row index inside a column, so repeated calls (and both
    kernel backends) give bit-identical results. A dense ``S`` is converted to
    CSC first and handled the same way.

    Returns a Fortran-ordered ``(d, n)`` array, or a length-``d`` vector when
    ``A`` is one-dimensional.
    """
    S = as_csc(S)
    d, m = S.shape
    vector = False
    if sp.issparse(A):
        if A.shape[0] != m:
            raise DimensionMismatch(f"spmm: S is {S.shape}, A is {A.shape}")
        A = sp.csr_matrix(A)
        A.sort_indices()
        out = np.zeros((d, A.shape[1]), order="F")
        kernels.csc_csr_accumulate(
            S.indptr, S.indices, S.data,
            A.indptr.astype(np.int64), A.indices.astype(np.int64),
            A.data.astype(np.float64), out,
        )
        return out
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        vector = True
        A = A[:, None]
    if A.shape[0] != m:
        raise DimensionMismatch(f"spmm: S is {S.shape}, A has {A.shape[0]} rows")
    A = np.asfortranarray(A)
    out = np.zeros((d, A.shape[1]), order="F")
    kernels.csc_dense_accumulate(S.indptr, S.indices, S.data, A, out)
    return out[:, 0].copy() if vector else out


def matvec(A, x):
    """``A @ x`` for dense or sparse ``A``."""
    if A.shape[1] != len(x):
        raise DimensionMismatch(f"matvec: A is {A.shape}, x has length {len(x)}")
    return np.asarray(A @ x).ravel()


def rmatvec(A, y):
    """``A.T @ y`` for dense or sparse ``A``."""
    if A.shape[0] != len(y):
        raise DimensionMismatch(f"rmatvec: A is {A.shape}, y has length {len(y)}")
    return np.asarray(A.T @ y).ravel()


def axpy(alpha, x, y):
    """In place ``y += alpha * x``; returns ``y``."""
    if len(x) != len(y):
        raise DimensionMismatch("axpy: length mismatch")
    y += alpha * x
    return y


def scal(alpha, x):
    """In place ``x *= alpha``; returns ``x``."""
    x *= alpha
    return x


def dot(x, y):
    if len(x) != len(y):
        raise DimensionMismatch("dot: length mismatch")
    return float(np.dot(x, y))


def norm2(x):
    # scaled by max |x_i| so huge or tiny entries neither overflow nor underflow
    x = np.asarray(x, dtype=np.float64)
    scale = np.max(np.abs(x)) if x.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return float(scale)
    return float(scale * np.linalg.norm(x / scale))


# ---------------------------------------------------------------------------
# Householder QR


def _reflector(x):
    """Householder vector ``v`` (``v[0] = 1``), ``tau`` and ``beta`` with
    ``(I - tau v v^T) x = beta e_1``."""
    alpha = x[0]
    sigma = np.linalg.norm(x[1:])
    v = x.copy()
    v[0] = 1.0
    if sigma == 0.0:
        return v, 0.0, alpha
    beta = -np.copysign(np.hypot(alpha, sigma), alpha)
    v[1:] = x[1:] / (alpha - beta)
    tau = (beta - alpha) / beta
    return v, tau, beta


def _larft(V, tau):
    """Triangular factor ``T`` with ``H_1 ... H_k = I - V T V^T``."""
    k = len(tau)
    T = np.zeros((k, k))
    for i in range(k):
        T[i, i] = tau[i]
        if i:
            T[:i, i] = -tau[i] * (T[:i, :i] @ (V[:, :i].T @ V[:, i]))
    return T


def householder_qr(Y, check_rank=True):
    """Thin QR factorization of a tall matrix by blocked Householder reflections.

    Returns ``Q`` (d x n, orthonormal columns) and ``R`` (n x n, upper
    triangular, nonnegative diagonal). Raises :class:`RankDeficient` when a
    diagonal entry of ``R`` falls below ``1e-12 * max|Y|``.
    """
    W = np.array(Y, dtype=np.float64, order="F", copy=True)
    if W.ndim != 2:
        raise DimensionMismatch("householder_qr expects a 2-D array")
    d, n = W.shape
    if d < n:
        raise DimensionMismatch(f"householder_qr needs rows >= cols, got {W.shape}")
    ymax = np.max(np.abs(W)) if W.size else 0.0
    if not np.isfinite(ymax):
        raise ValueError("householder_qr: non-finite entries")

    tau = np.zeros(n)
    blocks = []
    for k0 in range(0, n, QR_BLOCK):
        k1 = min(k0 + QR_BLOCK, n)
        V = np.zeros((d - k0, k1 - k0), order="F")
        for k in range(k0, k1):
            v, tau[k], beta = _reflector(W[k:, k])
            V[k - k0:, k - k0] = v
            W[k, k] = beta
            W[k + 1:, k] = 0.0
            if tau[k] != 0.0 and k + 1 < k1:
                C = W[k:, k + 1:k1]
                C -= tau[k] * np.outer(v, v @ C)
        T = _larft(V, tau[k0:k1])
        if k1 < n:
            C = W[k0:, k1:]
            C -= V @ (T.T @ (V.T @ C))
        blocks.append((k0, V, T))

    R = np.triu(W[:n, :])
    Q = np.zeros((d, n), order="F")
    Q[np.arange(n), np.arange(n)] = 1.0
    for k0, V, T in reversed(blocks):
        C = Q[k0:, k0:]
        C -= V @ (T @ (V.T @ C))

    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    R *= signs[:, None]
    Q *= signs[None, :]

    if check_rank and n:
        small = np.abs(np.diag(R)) < 1e-12 * ymax
        if ymax == 0.0 or np.any(small):
            i = int(np.argmax(small)) if ymax else 0
            raise RankDeficient(f"R[{i},{i}] is negligible: input is (numerically) rank deficient")
    return Q, R


# ---------------------------------------------------------------------------
# triangular inverse


def _tri_inverse_rows(R):
    n = R.shape[0]
    X = np.zeros((n, n))
    for i in range(n - 1, -1, -1):
        row = -(R[i, i + 1:] @ X[i + 1:, :])
        row[i] += 1.0
        X[i, i:] = row[i:] / R[i, i]
    return X


def _tri_inverse_rec(R):
    n = R.shape[0]
    if n <= TRI_BLOCK:
        return _tri_inverse_rows(R)
    h = n // 2
    X11 = _tri_inverse_rec(R[:h, :h])
    X22 = _tri_inverse_rec(R[h:, h:])
    X = np.zeros((n, n))
    X[:h, :h] = X11
    X[h:, h:] = X22
    X[:h, h:] = -X11 @ (R[:h, h:] @ X22)
    return X


def tri_inverse(R):
    """Explicit inverse of an upper-triangular matrix.

    Block recursion ``[[A, B], [0, C]]^-1 = [[A^-1, -A^-1 B C^-1], [0, C^-1]]``
    down to row-wise back substitution. The result is exactly upper triangular.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionMismatch(f"tri_inverse needs a square matrix, got {R.shape}")
    diag = np.diag(R)
    if np.any(diag == 0.0):
        i = int(np.argmin(np.abs(diag)))
        raise SingularTriangular(f"R[{i},{i}] is zero")
    return np.asfortranarray(_tri_inverse_rec(np.triu(R)))


# ---------------------------------------------------------------------------
# singular values


def jacobi_eigvalsh(G, tol=1e-15, max_sweeps=60):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations (ascending)."""
    G = np.array(G, dtype=np.float64, order="C", copy=True)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionMismatch("jacobi_eigvalsh needs a square matrix")
    G = 0.5 * (G + G.T)
    w, _ = kernels.jacobi_eigenvalues(np.ascontiguousarray(G), tol, max_sweeps)
    return np.sort(w)


def singular_values(B, method="lapack"):
    """Singular values of a tall matrix, descending.

    Computed from the eigenvalues of the Gram matrix ``B^T B`` (symmetric
    LAPACK solver by default, ``method="jacobi"`` for the in-house Jacobi
    kernel). Squares the condition number, so tiny singular values relative
    to the largest lose accuracy; fine for distortion measurements.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise DimensionMismatch("singular_values expects a 2-D array")
    d, n = B.shape
    if d < n:
        raise DimensionMismatch(f"singular_values needs rows >= cols, got {B.shape}")
    G = B.T @ B
    if method == "lapack":
        w = np.linalg.eigvalsh(G)
    elif method == "jacobi":
        w = jacobi_eigvalsh(G)
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.sqrt(np.clip(w, 0.0, None))[::-1].copy()


def cond(B):
    """2-norm condition number from :func:`singular_values`."""
    s = singular_values(B)
    return np.inf if s[-1] == 0 else float(s[0] / s[-1])
