"""QR-based preconditioner from a sketch ``Y = S A``."""

from dataclasses import dataclass
import time

import numpy as np

from .exceptions import DimensionMismatch
from .linalg import householder_qr, tri_inverse


@dataclass(frozen=True)
class Preconditioner:
    """``M = R^{-1}`` stored explicitly, plus the orthonormal factor ``Q``."""

    M: np.ndarray
    Q: np.ndarray
    build_time: float
    d: int

    @property
    def n(self):
        return self.M.shape[0]

    def apply(self, v):
        return apply_M(self, v)

    def apply_t(self, v):
        return apply_Mt(self, v)


def build_preconditioner(Y):
    """Factor ``Y = QR`` and invert ``R``.

    ``Y @ M`` equals ``Q`` and so has orthonormal columns. Raises
    :class:`~sketchprecond.exceptions.RankDeficient` if the sketch lost rank
    (``d`` too small or ``A`` itself degenerate); no automatic re-sketch.
    """
    t0 = time.perf_counter()
    Q, R = householder_qr(Y)
    M = tri_inverse(R)
    return Preconditioner(M=M, Q=Q, build_time=time.perf_counter() - t0, d=Y.shape[0])


def initial_guess(P, Sb):
    """Sketch-and-solve initial iterate ``x0 = M Q^T (S b)``."""
    Sb = np.asarray(Sb, dtype=np.float64)
    if Sb.shape != (P.Q.shape[0],):
        raise DimensionMismatch(f"sketched rhs has shape {Sb.shape}, expected ({P.Q.shape[0]},)")
    return P.M @ (P.Q.T @ Sb)


def apply_M(P, v):
    if len(v) != P.n:
        raise DimensionMismatch(f"apply_M: vector length {len(v)} != {P.n}")
    return P.M @ v


def apply_Mt(P, v):
    if len(v) != P.n:
        raise DimensionMismatch(f"apply_Mt: vector length {len(v)} != {P.n}")
    return P.M.T @ v


def identity_preconditioner(n):
    """``M = I`` (no preconditioning); ``Q`` is the identity as well."""
    eye = np.eye(n, order="F")
    return Preconditioner(M=eye, Q=eye.copy(), build_time=0.0, d=n)
