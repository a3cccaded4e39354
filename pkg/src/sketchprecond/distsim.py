"""Row-partitioned multi-worker execution with synchronization accounting.

A :class:`WorkerPool` of ``p`` workers owns the row blocks of every
:class:`DistributedMatrix` / :class:`DistributedVector` bound to it. Local
work (axpy, scaling, block matvecs) runs concurrently on threads without
touching other blocks. The only cross-block data paths are

* reductions (global norms, ``A^T y``, sketch partial sums), combined in a
  fixed pairwise tree order, each counted once in the pool's
  :class:`SyncCounter`;
* broadcasts of a replicated length-``n`` vector (the argument of
  ``A x``), counted once each.

Short vectors and products with ``M`` live on worker 0 and are plain numpy.
"""

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
import threading

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch
from .linalg import as_csc, spmm
from .sketches import SparseSignSketch, _csc_from_columns, sparse_sign_columns


class SyncCounter:
    """Monotone counts of reductions and broadcasts."""

    def __init__(self):
        self.reductions = 0
        self.broadcasts = 0
        self._paused = 0
        self._lock = threading.Lock()

    def reduce(self, k=1):
        with self._lock:
            if not self._paused:
                self.reductions += k

    def broadcast(self, k=1):
        with self._lock:
            if not self._paused:
                self.broadcasts += k

    @contextmanager
    def paused(self):
        """Suspend counting (for instrumentation that is not part of an algorithm)."""
        with self._lock:
            self._paused += 1
        try:
            yield self
        finally:
            with self._lock:
                self._paused -= 1

    def snapshot(self):
        return self.reductions, self.broadcasts

    def __repr__(self):
        return f"SyncCounter(reductions={self.reductions}, broadcasts={self.broadcasts})"


class WorkerPool:
    """``p`` logical workers. With ``p > 1`` local work runs on a thread pool."""

    def __init__(self, p=1, counter=None, threads=True):
        if p < 1:
            raise ValueError("need at least one worker")
        self.p = p
        self.counter = counter if counter is not None else SyncCounter()
        self._executor = ThreadPoolExecutor(max_workers=p) if (threads and p > 1) else None

    def run(self, fn):
        """``[fn(0), ..., fn(p-1)]`` evaluated on the workers."""
        if self._executor is None:
            return [fn(k) for k in range(self.p)]
        return list(self._executor.map(fn, range(self.p)))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"WorkerPool(p={self.p})"


@dataclass(frozen=True)
class RowPartition:
    m: int
    boundaries: tuple

    @property
    def p(self):
        return len(self.boundaries) - 1

    def block(self, k):
        return slice(self.boundaries[k], self.boundaries[k + 1])

    @property
    def blocks(self):
        return [self.block(k) for k in range(self.p)]

    @property
    def sizes(self):
        return list(np.diff(self.boundaries))


def partition_rows(m, p):
    """Contiguous blocks of ``m // p`` rows; the last block takes the remainder."""
    if p < 1:
        raise ValueError("need at least one block")
    stride = m // p
    bounds = [k * stride for k in range(p)] + [m]
    return RowPartition(m, tuple(int(b) for b in bounds))


def tree_reduce(parts):
    """Sum ``parts`` pairwise in a fixed order: ((0+1)+(2+3))+..."""
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


class DistributedVector:
    """Length-``m`` vector split across the pool by a :class:`RowPartition`.

    Arithmetic with scalars and with vectors on the same partition is local.
    """

    def __init__(self, chunks, partition, pool):
        self.chunks = chunks
        self.partition = partition
        self.pool = pool

    @classmethod
    def from_array(cls, x, partition, pool):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (partition.m,):
            raise DimensionMismatch(f"vector of shape {x.shape} does not fit partition of {partition.m}")
        return cls([x[s].copy() for s in partition.blocks], partition, pool)

    def __len__(self):
        return self.partition.m

    def gather(self):
        return np.concatenate(self.chunks)

    def copy(self):
        return DistributedVector([c.copy() for c in self.chunks], self.partition, self.pool)

    def _check(self, other):
        if not isinstance(other, DistributedVector) or other.partition != self.partition:
            raise DimensionMismatch("distributed vectors must share a partition")

    def _map(self, fn):
        return DistributedVector(self.pool.run(fn), self.partition, self.pool)

    def __add__(self, other):
        self._check(other)
        return self._map(lambda k: self.chunks[k] + other.chunks[k])

    def __sub__(self, other):
        self._check(other)
        return self._map(lambda k: self.chunks[k] - other.chunks[k])

    def __mul__(self, alpha):
        return self._map(lambda k: self.chunks[k] * alpha)

    __rmul__ = __mul__

    def __truediv__(self, alpha):
        return self._map(lambda k: self.chunks[k] / alpha)

    def __neg__(self):
        return self._map(lambda k: -self.chunks[k])

    def __iadd__(self, other):
        self._check(other)

        def add(k):
            self.chunks[k] += other.chunks[k]

        self.pool.run(add)
        return self

    def __isub__(self, other):
        self._check(other)

        def sub(k):
            self.chunks[k] -= other.chunks[k]

        self.pool.run(sub)
        return self

    def __imul__(self, alpha):
        def mul(k):
            self.chunks[k] *= alpha

        self.pool.run(mul)
        return self

    def __itruediv__(self, alpha):
        def div(k):
            self.chunks[k] /= alpha

        self.pool.run(div)
        return self

    def norm(self):
        return dist_norm(self)

    def __repr__(self):
        return f"DistributedVector(m={self.partition.m}, p={self.partition.p})"


class DistributedMatrix:
    """Tall ``m x n`` matrix (dense or sparse) split into row blocks."""

    def __init__(self, chunks, partition, pool, shape):
        self.chunks = chunks
        self.partition = partition
        self.pool = pool
        self.shape = shape

    @property
    def counter(self):
        return self.pool.counter

    @property
    def issparse(self):
        return sp.issparse(self.chunks[0])

    def gather(self):
        if self.issparse:
            return sp.vstack(self.chunks, format="csr")
        return np.vstack(self.chunks)

    def vector(self, x):
        """Distribute a length-``m`` array on this matrix's partition."""
        if isinstance(x, DistributedVector):
            if x.partition != self.partition:
                raise DimensionMismatch("vector partition does not match the matrix")
            return x
        return DistributedVector.from_array(x, self.partition, self.pool)

    def matvec(self, x):
        return dist_matvec(self, x)

    def rmatvec(self, y):
        return dist_rmatvec(self, y)

    def rmatvec_norm(self, y):
        return dist_rmatvec_norm(self, y)

    def __repr__(self):
        return f"DistributedMatrix(shape={self.shape}, p={self.partition.p})"


def distribute(A, pool):
    """Split ``A`` (dense array or sparse matrix) row-wise over ``pool``."""
    if isinstance(pool, int):
        pool = WorkerPool(pool)
    part = partition_rows(A.shape[0], pool.p)
    if sp.issparse(A):
        A = sp.csr_matrix(A)
        chunks = [A[s] for s in part.blocks]
    else:
        A = np.asarray(A, dtype=np.float64)
        chunks = [np.ascontiguousarray(A[s]) for s in part.blocks]
    return DistributedMatrix(chunks, part, pool, A.shape)


# ---------------------------------------------------------------------------
# operations


def dist_axpy(y, alpha, z):
    """In place ``y += alpha * z``; purely local."""
    y._check(z)

    def axpy(k):
        y.chunks[k] += alpha * z.chunks[k]

    y.pool.run(axpy)
    return y


def dist_norm(y):
    """Global 2-norm: local sums of squares, one reduction."""
    partials = y.pool.run(lambda k: float(np.dot(y.chunks[k], y.chunks[k])))
    y.pool.counter.reduce()
    return float(np.sqrt(tree_reduce(partials)))


def dist_matvec(A, x):
    """``A @ x`` for a replicated length-``n`` ``x``: one broadcast, local products."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise DimensionMismatch(f"matvec: A is {A.shape}, x has shape {x.shape}")
    A.pool.counter.broadcast()
    chunks = A.pool.run(lambda k: np.asarray(A.chunks[k] @ x).ravel())
    return DistributedVector(chunks, A.partition, A.pool)


def dist_rmatvec(A, y):
    """``A^T y``: local products, one reduction of length-``n`` partials."""
    y = A.vector(y)
    partials = A.pool.run(lambda k: np.asarray(A.chunks[k].T @ y.chunks[k]).ravel())
    A.pool.counter.reduce()
    return tree_reduce(partials)


def dist_rmatvec_norm(A, y):
    """``(A^T y, ||y||)`` combined into a single reduction of ``n + 1`` numbers."""
    y = A.vector(y)
    n = A.shape[1]

    def local(k):
        out = np.empty(n + 1)
        out[:n] = np.asarray(A.chunks[k].T @ y.chunks[k]).ravel()
        out[n] = np.dot(y.chunks[k], y.chunks[k])
        return out

    partials = A.pool.run(local)
    A.pool.counter.reduce()
    total = tree_reduce(partials)
    return total[:n], float(np.sqrt(total[n]))


@dataclass(frozen=True)
class SparseSignSpec:
    """Recipe for a sparse sign sketch that each worker materializes locally."""

    d: int
    zeta: int
    seed: int = 0


def _sketch_block(S, k, part):
    """Columns of the sketch matching row block ``k``."""
    s = part.block(k)
    if isinstance(S, SparseSignSketch):
        return S.matrix[:, s]
    if isinstance(S, SparseSignSpec):
        idx, val = sparse_sign_columns(S.d, part.m, S.zeta, S.seed, s.start, s.stop)
        return _csc_from_columns(S.d, s.stop - s.start, S.zeta, idx, val)
    return as_csc(S)[:, s]


def dist_sketch_apply(S, A):
    """``S @ A`` where worker ``k`` holds only ``S[:, I_k]`` and ``A[I_k, :]``.

    ``S`` may be a :class:`SparseSignSpec` (each worker generates its own
    columns from the seed, so nothing of ``S`` is ever assembled), a
    :class:`~sketchprecond.sketches.SparseSignSketch`, or a sparse matrix.
    ``A`` is a :class:`DistributedMatrix` or :class:`DistributedVector`. One
    reduction of the ``d x n`` partial sums.
    """
    part, pool = A.partition, A.pool
    is_vec = isinstance(A, DistributedVector)

    def local(k):
        return spmm(_sketch_block(S, k, part), A.chunks[k])

    partials = pool.run(local)
    pool.counter.reduce()
    out = tree_reduce(partials)
    return out if is_vec else np.asfortranarray(out)
