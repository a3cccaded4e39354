"""Sketch-and-precondition least squares with sparse sign embeddings.

Typical use::

    from sketchprecond import sketch_and_solve_lsqr
    x, report = sketch_and_solve_lsqr(A, b, d=8 * A.shape[1])
"""

__version__ = "0.1.0"

from .kernels import BACKEND
from .exceptions import (
    AllocationTooLarge, BreakdownIfZero, ConfigError, DimensionMismatch, Divergence,
    InvalidDims, InvalidDistortion, InvalidResidual, InvalidSparsity, NegativeArgument,
    RankDeficient, SingularTriangular, SketchError, UnsupportedFormat,
)
from .linalg import householder_qr, singular_values, spmm, tri_inverse
from .sketches import (
    SketchParams, SparseSignSketch, apply_sketch, generate_gaussian, generate_sparse_sign,
    generate_trig, make_sketch, sketch_vector,
)
from .precond import Preconditioner, build_preconditioner, initial_guess
from .solvers import (
    GradientParams, SolveReport, Termination, gd_step_size, gradient_descent,
    gradient_descent_hbm, hbm_params, heavy_ball, lsqr, lsqr_one_sync,
)
from .embedding import select_embedding_dim, iterations_for, lambert_w
from .metrics import cond_bound, distortion, forward_error_from_residuals, orthonormal_basis
from .problems import ProblemInstance, gen_dense, gen_rhs, load_matrix_market, make_problem
from .distsim import WorkerPool, distribute


def sketch_and_solve_lsqr(A, b, d, zeta=8, seed=0, eps=1e-10, maxit=100, one_sync=False, **kw):
    """Full pipeline: sparse sign sketch, QR preconditioner, sketched initial
    guess, then preconditioned LSQR. Returns ``(x, report)``."""
    S = generate_sparse_sign(d, A.shape[0], zeta, seed)
    P = build_preconditioner(apply_sketch(S, A))
    x0 = initial_guess(P, sketch_vector(S, b))
    return lsqr(A, P, b, x0, eps=eps, maxit=maxit, one_sync=one_sync, **kw)
