"""Sketching operators: sparse sign (the default), Gaussian, and subsampled
randomized Walsh-Hadamard.

Random streams: every sketch is a pure function of its integer ``seed``. The
sparse sign generator splits the columns into fixed blocks of
``GEN_BLOCK`` columns and draws block ``k`` from its own Philox substream,
so any subset of columns can be regenerated independently and parallel
generation is bit-identical to serial generation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp

from . import kernels
from .exceptions import AllocationTooLarge, DimensionMismatch, InvalidDims, InvalidSparsity
from .linalg import as_csc, spmm

GEN_BLOCK = 4096
GAUSSIAN_MAX_BYTES = 2 * 1024**3

_TAG_SPARSE, _TAG_GAUSS, _TAG_TRIG = 1, 2, 3
KINDS = ("sparse_sign", "gaussian", "trig")


def substream(seed, tag, block=0):
    """Independent ``Generator`` for ``(seed, tag, block)``; derivable in any order."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(block)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SketchParams:
    d: int
    zeta: int = 8
    kind: str = "sparse_sign"
    seed: int = 0

    def validate(self, m, n=None):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}; expected one of {KINDS}")
        if n is not None and not n < self.d:
            raise InvalidDims(f"embedding dimension d={self.d} must exceed n={n}")
        if self.d > m:
            raise InvalidDims(f"embedding dimension d={self.d} exceeds m={m}")
        if self.kind == "sparse_sign" and not 1 <= self.zeta <= self.d:
            raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={self.zeta}, d={self.d}")


# ---------------------------------------------------------------------------
# sampling without replacement


def fisher_yates_sample(d, zeta, rng, scratch=None):
    """``zeta`` distinct indices from ``range(d)`` by a partial Fisher-Yates shuffle.

    Picks from a list of ``d`` integers and swaps each pick to the end of the
    live region. ``scratch`` (a list/array holding a permutation of
    ``range(d)``) is reused when given; it stays a permutation afterwards.
    """
    if not 1 <= zeta <= d:
        raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={zeta}, d={d}")
    pool = np.arange(d) if scratch is None else scratch
    out = np.empty(zeta, dtype=np.int64)
    for i in range(zeta):
        last = d - 1 - i
        j = int(rng.integers(0, last + 1))
        out[i] = pool[j]
        pool[j], pool[last] = pool[last], pool[j]
    return out


def fisher_yates_insert_sample(d, zeta, rng):
    """Comparison variant: draw from ``range(d - j)`` and shift past earlier picks.

    O(zeta^2) per call, no length-``d`` scratch.
    """
    if not 1 <= zeta <= d:
        raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={zeta}, d={d}")
    chosen = []
    for j in range(zeta):
        x = int(rng.integers(0, d - j))
        for c in chosen:  # chosen is kept sorted
            if c <= x:
                x += 1
            else:
                break
        chosen.insert(int(np.searchsorted(chosen, x)), x)
    return np.asarray(chosen, dtype=np.int64)


def fisher_yates_columns(d, m, zeta, rng):
    """``m`` independent Fisher-Yates draws as a ``(zeta, m)`` array (sorted columns).

    Vectorized over columns with an ``m x d`` scratch table; intended as a
    reference sampler for modest ``d``.
    """
    if not 1 <= zeta <= d:
        raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={zeta}, d={d}")
    pool = np.tile(np.arange(d, dtype=np.int64), (m, 1))
    rows = np.arange(m)
    out = np.empty((m, zeta), dtype=np.int64)
    for i in range(zeta):
        last = d - 1 - i
        j = rng.integers(0, last + 1, size=m)
        out[:, i] = pool[rows, j]
        pool[rows, j] = pool[rows, last]
        pool[rows, last] = out[:, i]
    out.sort(axis=1)
    return out.T


@dataclass
class RejectionStats:
    bad_columns: int = 0  # columns with a duplicate in the first draw
    resampled: int = 0  # total entries redrawn
    rounds: int = 0


def rejection_sample_columns(d, m, zeta, rng, stats=None):
    """Row indices for ``m`` sparse columns by rejection sampling.

    Draw ``zeta`` indices per column with replacement, sort each column,
    redraw only the entries that duplicate their right neighbour, and repeat
    on the affected columns until all are distinct. Returns a ``(zeta, m)``
    int64 array whose columns are sorted and duplicate-free. Pass a
    :class:`RejectionStats` to collect counts.
    """
    if not 1 <= zeta <= d:
        raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={zeta}, d={d}")
    C = rng.integers(0, d, size=(m, zeta), dtype=np.int64)
    bad_i, bad_j = kernels.sort_rows_find_duplicates(C, np.arange(m, dtype=np.int64))
    if stats is not None:
        stats.bad_columns += int(np.unique(bad_i).size)
    while len(bad_i):
        C[bad_i, bad_j] = rng.integers(0, d, size=len(bad_i), dtype=np.int64)
        if stats is not None:
            stats.resampled += len(bad_i)
            stats.rounds += 1
        bad_i, bad_j = kernels.sort_rows_find_duplicates(C, np.unique(bad_i))
    return C.T


# ---------------------------------------------------------------------------
# sparse sign


@dataclass(frozen=True)
class SparseSignSketch:
    matrix: sp.csc_matrix
    zeta: int
    seed: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def m(self):
        return self.matrix.shape[1]

    def apply(self, A):
        return spmm(self.matrix, A)


def _sparse_sign_block(d, zeta, seed, block, ncols, stats=None):
    rng = substream(seed, _TAG_SPARSE, block)
    C = rejection_sample_columns(d, ncols, zeta, rng, stats)
    s = 1.0 / math.sqrt(zeta)
    bits = rng.integers(0, 2, size=ncols * zeta)
    values = np.where(bits == 1, s, -s)
    return C.T.ravel(), values


def sparse_sign_columns(d, m, zeta, seed, start, stop, stats=None):
    """Columns ``start:stop`` of the ``d x m`` sparse sign sketch for ``seed``.

    Returns ``(indices, values)`` laid out column after column (``zeta`` per
    column, sorted rows).
    """
    if not 0 <= start <= stop <= m:
        raise ValueError(f"bad column range [{start}, {stop}) for m={m}")
    if not 1 <= zeta <= d:
        raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={zeta}, d={d}")
    idx, val = [], []
    for block in range(start // GEN_BLOCK, -(-stop // GEN_BLOCK)):
        b0 = block * GEN_BLOCK
        b1 = min(b0 + GEN_BLOCK, m)
        i, v = _sparse_sign_block(d, zeta, seed, block, b1 - b0, stats)
        lo, hi = (max(start, b0) - b0) * zeta, (min(stop, b1) - b0) * zeta
        idx.append(i[lo:hi])
        val.append(v[lo:hi])
    if not idx:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate(idx), np.concatenate(val)


def _csc_from_columns(d, ncols, zeta, indices, values):
    indptr = np.arange(ncols + 1, dtype=np.int64) * zeta
    S = sp.csc_matrix((values, indices, indptr), shape=(d, ncols))
    S.indices, S.indptr = indices.astype(np.int64, copy=False), indptr
    S.has_sorted_indices = True
    return S


def generate_sparse_sign(d, m, zeta, seed=0, workers=1, stats=None):
    """Sample a ``d x m`` sparse sign sketch with ``zeta`` nonzeros per column.

    Entries are ``+-1/sqrt(zeta)`` so every column has unit norm and
    ``E[S^T S] = I``. ``workers > 1`` generates column blocks concurrently;
    the result does not depend on ``workers``.
    """
    if not 1 <= zeta <= d:
        raise InvalidSparsity(f"need 1 <= zeta <= d, got zeta={zeta}, d={d}")
    nblocks = -(-m // GEN_BLOCK)

    def block(k):
        ncols = min(GEN_BLOCK, m - k * GEN_BLOCK)
        return _sparse_sign_block(d, zeta, seed, k, ncols, stats)

    if workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(block, range(nblocks)))
    else:
        parts = [block(k) for k in range(nblocks)]
    if parts:
        indices = np.concatenate([p[0] for p in parts])
        values = np.concatenate([p[1] for p in parts])
    else:
        indices, values = np.empty(0, dtype=np.int64), np.empty(0)
    return SparseSignSketch(_csc_from_columns(d, m, zeta, indices, values), zeta, seed)


# ---------------------------------------------------------------------------
# Gaussian


@dataclass(frozen=True)
class GaussianSketch:
    matrix: np.ndarray
    seed: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def m(self):
        return self.matrix.shape[1]

    def apply(self, A):
        if A.shape[0] != self.m:
            raise DimensionMismatch(f"sketch is {self.shape}, input has {A.shape[0]} rows")
        if sp.issparse(A):
            return np.asfortranarray((A.T @ self.matrix.T).T)
        return self.matrix @ A


def generate_gaussian(d, m, seed=0, max_bytes=GAUSSIAN_MAX_BYTES):
    """Dense ``d x m`` sketch with i.i.d. N(0, 1/d) entries."""
    nbytes = 8 * d * m
    if nbytes > max_bytes:
        raise AllocationTooLarge(
            f"Gaussian sketch needs {nbytes / 2**30:.2f} GiB (cap {max_bytes / 2**30:.2f} GiB)"
        )
    rng = substream(seed, _TAG_GAUSS)
    return GaussianSketch(rng.standard_normal((d, m)) / math.sqrt(d), seed)


# ---------------------------------------------------------------------------
# subsampled randomized Walsh-Hadamard


@dataclass(frozen=True)
class TrigSketch:
    d: int
    m: int
    padded_len: int
    signs: np.ndarray = field(repr=False)
    permutation: np.ndarray = field(repr=False)
    selected_rows: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def shape(self):
        return (self.d, self.m)

    def apply(self, A):
        return apply_trig(self, A)


def generate_trig(d, m, seed=0):
    """``S = sqrt(L/d) * R H D P``: permutation, random signs on the zero-padded
    length ``L = 2^ceil(log2 m)``, orthonormal Hadamard, restriction to ``d`` rows."""
    L = 1 << max(0, (m - 1).bit_length())
    if not 1 <= d <= L:
        raise InvalidDims(f"need 1 <= d <= padded length {L}, got d={d}")
    rng = substream(seed, _TAG_TRIG)
    perm = rng.permutation(m)
    signs = np.where(rng.integers(0, 2, size=L) == 1, 1.0, -1.0)
    rows = np.sort(fisher_yates_sample(L, d, rng))
    return TrigSketch(d, m, L, signs, perm, rows, seed)


def fwht(X):
    """Orthonormal Walsh-Hadamard transform along axis 0 (length a power of two)."""
    X = np.array(X, dtype=np.float64, order="F", copy=True)
    vector = X.ndim == 1
    if vector:
        X = X.reshape(-1, 1, order="F")
    L = X.shape[0]
    if L & (L - 1):
        raise DimensionMismatch(f"fwht length must be a power of two, got {L}")
    kernels.fwht_columns(X)
    X /= math.sqrt(L)
    return X[:, 0] if vector else X


def apply_trig(T, A):
    """Apply a :class:`TrigSketch` to an ``m``-row matrix or vector."""
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=np.float64)
    vector = A.ndim == 1
    if vector:
        A = A[:, None]
    if A.shape[0] != T.m:
        raise DimensionMismatch(f"sketch is {T.shape}, input has {A.shape[0]} rows")
    X = np.zeros((T.padded_len, A.shape[1]), order="F")
    X[: T.m] = A[T.permutation]
    X *= T.signs[:, None]
    kernels.fwht_columns(X)
    out = X[T.selected_rows] * math.sqrt(1.0 / T.d)
    return out[:, 0] if vector else np.asfortranarray(out)


# ---------------------------------------------------------------------------
# dispatch


def make_sketch(params, m, workers=1):
    """Build the sketch described by a :class:`SketchParams` for ``m`` rows."""
    params.validate(m)
    if params.kind == "sparse_sign":
        return generate_sparse_sign(params.d, m, params.zeta, params.seed, workers=workers)
    if params.kind == "gaussian":
        return generate_gaussian(params.d, m, params.seed)
    return generate_trig(params.d, m, params.seed)


def apply_sketch(S, A):
    """``S @ A`` for any sketch object, sparse matrix, or dense array."""
    if hasattr(S, "apply"):
        return S.apply(A)
    if sp.issparse(S):
        return spmm(as_csc(S), A)
    S = np.asarray(S)
    if sp.issparse(A):
        return np.asfortranarray((A.T @ S.T).T)
    return S @ A


def sketch_vector(S, b):
    """``S @ b`` for a length-``m`` vector."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise DimensionMismatch("sketch_vector expects a 1-D vector")
    return np.asarray(apply_sketch(S, b)).ravel()
