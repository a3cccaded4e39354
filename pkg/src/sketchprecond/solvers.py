"""Preconditioned iterative least-squares solvers.

All solvers take ``A`` as a dense array, a sparse matrix, or a
:class:`~sketchprecond.distsim.DistributedMatrix`. Serial inputs run on a
single-worker pool, so every solve reports reductions and broadcasts the
same way. Length-``n`` vectors and products with ``M`` stay local.
"""

from dataclasses import dataclass, field
import csv
import enum
import json
import math
import time

import numpy as np

from .distsim import DistributedMatrix, DistributedVector, WorkerPool, distribute
from .exceptions import DimensionMismatch, Divergence, InvalidDistortion

BREAKDOWN_TOL = 1e-300


class Termination(str, enum.Enum):
    TOLERANCE = "tolerance"
    MAXITER = "maxiter"
    BREAKDOWN = "breakdown"


@dataclass
class SolveReport:
    """Per-iteration history of a solve.

    Index 0 of ``iterates_error`` and ``residual_estimate`` describes the
    initial guess; index ``t`` the iterate after ``t`` iterations.
    ``sync_count``/``broadcasts`` cover the iteration loop only; the
    start-up work is in ``setup_reductions``/``setup_broadcasts``.
    """

    method: str
    iterations: int = 0
    termination: Termination = Termination.MAXITER
    residual_estimate: list = field(default_factory=list)
    iterates_error: list | None = None
    sync_count: int = 0
    broadcasts: int = 0
    setup_reductions: int = 0
    setup_broadcasts: int = 0
    wall_time: float = 0.0
    workers: int = 1
    residual_checks: list = field(default_factory=list)
    iterates: list | None = None
    state: object = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "method": self.method,
            "iterations": self.iterations,
            "termination": self.termination.value,
            "residual_estimate": [float(v) for v in self.residual_estimate],
            "iterates_error": None if self.iterates_error is None else [float(v) for v in self.iterates_error],
            "sync_count": self.sync_count,
            "broadcasts": self.broadcasts,
            "setup_reductions": self.setup_reductions,
            "setup_broadcasts": self.setup_broadcasts,
            "reductions_per_iteration": self.sync_count / self.iterations if self.iterations else 0.0,
            "wall_time": self.wall_time,
            "workers": self.workers,
        }
        if self.residual_checks:
            out["residual_checks"] = [list(map(float, c)) for c in self.residual_checks]
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def write_csv(self, path):
        """One row per iterate: ``iteration, residual_estimate, error``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual_estimate", "error"])
            errs = self.iterates_error or []
            for t, r in enumerate(self.residual_estimate):
                w.writerow([t, repr(float(r)), repr(float(errs[t])) if t < len(errs) else ""])


@dataclass(frozen=True)
class GradientParams:
    alpha: float
    beta: float
    eta_hat: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"step size must be positive, got {self.alpha}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.beta}")


def hbm_params(eta_hat):
    """Heavy-ball parameters ``alpha = (1 - eta^2)^2``, ``beta = eta^2`` tuned for
    ``cond(AM) <= (1 + eta) / (1 - eta)``."""
    if not 0 <= eta_hat < 1:
        raise InvalidDistortion(f"distortion estimate must lie in [0, 1), got {eta_hat}")
    e2 = eta_hat * eta_hat
    return GradientParams(alpha=(1 - e2) ** 2, beta=e2, eta_hat=eta_hat)


def gd_step_size(eta_hat):
    """Optimal plain gradient step ``(1 - eta^2)^2 / (1 + eta^2)``."""
    if not 0 <= eta_hat <= 1:
        raise InvalidDistortion(f"distortion estimate must lie in [0, 1], got {eta_hat}")
    e2 = eta_hat * eta_hat
    return (1 - e2) ** 2 / (1 + e2)


# ---------------------------------------------------------------------------
# plumbing


def _prepare(A, b):
    if isinstance(A, DistributedMatrix):
        Ad = A
    else:
        Ad = distribute(A, WorkerPool(1))
    if len(b) != Ad.shape[0]:
        raise DimensionMismatch(f"A is {Ad.shape}, b has length {len(b)}")
    return Ad, Ad.vector(b)


def _x0(x0, n):
    if x0 is None:
        return np.zeros(n)
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({n},)")
    return x0


class _Tracker:
    """Error instrumentation, excluded from synchronization counts."""

    def __init__(self, Ad, bd, x_star, res_star):
        self.Ad, self.bd = Ad, bd
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=np.float64)
        self.res_star = res_star
        self.enabled = self.x_star is not None or res_star is not None

    def error(self, x):
        with self.Ad.counter.paused():
            if self.x_star is not None:
                return self.Ad.matvec(self.x_star - x).norm()
            res = (self.bd - self.Ad.matvec(x)).norm()
        from .metrics import forward_error_from_residuals

        return forward_error_from_residuals(res, self.res_star)

    def residual(self, x):
        with self.Ad.counter.paused():
            return (self.bd - self.Ad.matvec(x)).norm()


# ---------------------------------------------------------------------------
# LSQR


@dataclass
class LsqrState:
    """Bidiagonalization and QR-update quantities of one LSQR iteration.

    ``u`` is distributed over the rows of ``A``; the rest is length ``n``
    or scalar. ``u`` and ``v`` have unit norm while no breakdown occurred.
    """

    u: DistributedVector
    v: np.ndarray
    w: np.ndarray
    x: np.ndarray
    alpha: float
    beta: float
    rho_bar: float
    phi_bar: float
    rho: float = 0.0
    phi: float = 0.0
    c: float = 1.0
    s: float = 0.0
    theta: float = 0.0
    t: int = 0


def _finish(report, counter, r1, t_start):
    r2 = counter.snapshot()
    report.sync_count, report.broadcasts = r2[0] - r1[0], r2[1] - r1[1]
    report.wall_time = time.perf_counter() - t_start


def lsqr(A, P, b, x0=None, eps=1e-10, maxit=100, x_star=None, res_star=None,
         keep_iterates=False, check_every=10, one_sync=False, callback=None):
    """Right-preconditioned LSQR on ``min ||b - A M y||``, ``x = M y``, from ``x0``.

    Stops when ``phibar_{t+1} <= eps * beta_1`` (relative residual of the
    shifted problem), when the recurrence estimate of ``||(AM)^T r_t||`` has
    dropped by ``eps`` relative to its initial value ``alpha_1 beta_1``, or
    after ``maxit`` iterations; ``eps=0`` runs exactly ``maxit`` iterations. Every ``check_every`` iterations ``phibar`` is
    compared against a recomputed ``||b - A x_t||`` (stored in
    ``report.residual_checks`` as ``(t, phibar, true)``).

    ``one_sync=True`` selects the single-reduction restructure: ``A^T u_hat``
    and ``||u_hat||`` are reduced together and ``A^T u = A^T u_hat / beta``.
    ``callback(state)`` is called after every iteration.

    Returns ``(x, report)``; the final :class:`LsqrState` is ``report.state``.
    """
    Ad, bd = _prepare(A, b)
    M = P.M
    n = Ad.shape[1]
    if M.shape != (n, n):
        raise DimensionMismatch(f"preconditioner is {M.shape}, A has {n} columns")
    x = _x0(x0, n)
    counter = Ad.counter
    track = _Tracker(Ad, bd, x_star, res_star)
    report = SolveReport(method="lsqr1sync" if one_sync else "lsqr", workers=Ad.partition.p)
    if track.enabled:
        report.iterates_error = [track.error(x)]
    if keep_iterates:
        report.iterates = [x.copy()]

    t_start = time.perf_counter()
    r0 = counter.snapshot()
    u = bd - Ad.matvec(x)
    if one_sync:
        atu, beta = Ad.rmatvec_norm(u)
        if beta > BREAKDOWN_TOL:
            atu = atu / beta
            u /= beta
    else:
        beta = u.norm()
        if beta > BREAKDOWN_TOL:
            u /= beta
        atu = Ad.rmatvec(u)
    beta1 = beta
    report.residual_estimate.append(beta1)
    r1 = counter.snapshot()
    report.setup_reductions, report.setup_broadcasts = r1[0] - r0[0], r1[1] - r0[1]

    v = M.T @ atu
    alpha = float(np.linalg.norm(v))
    st = LsqrState(u=u, v=v, w=np.zeros(n), x=x, alpha=alpha, beta=beta,
                   rho_bar=alpha, phi_bar=beta1)
    report.state = st
    if beta1 <= BREAKDOWN_TOL or alpha <= BREAKDOWN_TOL:
        report.termination = Termination.BREAKDOWN
        _finish(report, counter, r1, t_start)
        return x, report
    st.v = v / alpha
    st.w = M @ st.v
    normal0 = alpha * beta1

    for t in range(1, maxit + 1):
        uhat = Ad.matvec(M @ st.v)
        uhat -= st.alpha * st.u
        if one_sync:
            atu_hat, beta = Ad.rmatvec_norm(uhat)
        else:
            beta = uhat.norm()
        stop = None
        if beta <= BREAKDOWN_TOL:
            # A M v_t lies in span(u_t): the current update is exact
            beta, alpha_next, stop = 0.0, 0.0, Termination.BREAKDOWN
            v_next = np.zeros(n)
        else:
            st.u = uhat / beta
            if one_sync:
                vhat = M.T @ (atu_hat / beta) - beta * st.v
            else:
                vhat = M.T @ Ad.rmatvec(st.u) - beta * st.v
            alpha_next = float(np.linalg.norm(vhat))
            if alpha_next <= BREAKDOWN_TOL:
                alpha_next, stop = 0.0, Termination.BREAKDOWN
                v_next = np.zeros(n)
            else:
                v_next = vhat / alpha_next

        st.rho = math.hypot(st.rho_bar, beta)
        st.c, st.s = st.rho_bar / st.rho, beta / st.rho
        st.theta = st.s * alpha_next
        st.rho_bar = -st.c * alpha_next
        st.phi = st.c * st.phi_bar
        st.phi_bar = st.s * st.phi_bar
        st.x = st.x + (st.phi / st.rho) * st.w
        st.w = M @ v_next - (st.theta / st.rho) * st.w
        st.v, st.alpha, st.beta, st.t = v_next, alpha_next, beta, t

        report.iterations = t
        report.residual_estimate.append(abs(st.phi_bar))
        if track.enabled:
            report.iterates_error.append(track.error(st.x))
        if keep_iterates:
            report.iterates.append(st.x.copy())
        if check_every and t % check_every == 0:
            report.residual_checks.append((t, abs(st.phi_bar), track.residual(st.x)))
        if callback is not None:
            with counter.paused():
                callback(st)
        # ||(AM)^T r_t|| = |phibar_{t+1} alpha_{t+1} c_t|; this test is the one
        # that fires on inconsistent problems, where phibar levels off at ||r*||
        normal_res = abs(st.phi_bar * alpha_next * st.c)
        if stop is None and (abs(st.phi_bar) <= eps * beta1 or normal_res <= eps * normal0):
            stop = Termination.TOLERANCE
        if stop is not None:
            report.termination = stop
            break

    _finish(report, counter, r1, t_start)
    return st.x, report


def lsqr_one_sync(A, P, b, x0=None, eps=1e-10, maxit=100, **kw):
    """LSQR with one reduction per iteration; same iterates as :func:`lsqr`."""
    return lsqr(A, P, b, x0, eps, maxit, one_sync=True, **kw)


# ---------------------------------------------------------------------------
# gradient methods


def gradient_descent_hbm(A, P, b, x0, params, eps=1e-10, maxit=1000, x_star=None,
                         res_star=None, keep_iterates=False, divergence_factor=1e6):
    """Preconditioned heavy-ball iteration
    ``x_t = x_{t-1} + alpha g_t + beta (x_{t-1} - x_{t-2})`` with
    ``g_t = M M^T A^T (b - A x_{t-1})``; ``beta = 0`` is gradient descent.

    Convergence is declared when ``||M^T A^T r_t||`` has dropped by ``eps``
    relative to its value at ``x0``. Raises :class:`Divergence` when that
    quantity (or the tracked error, if available) grows by
    ``divergence_factor``.
    """
    Ad, bd = _prepare(A, b)
    M = P.M
    n = Ad.shape[1]
    x = _x0(x0, n)
    x_prev = x.copy()
    counter = Ad.counter
    track = _Tracker(Ad, bd, x_star, res_star)
    method = "hbm" if params.beta > 0 else "gd"
    report = SolveReport(method=method, workers=Ad.partition.p)
    if track.enabled:
        report.iterates_error = [track.error(x)]
    if keep_iterates:
        report.iterates = [x.copy()]

    def grad():
        return M.T @ Ad.rmatvec(bd - Ad.matvec(x))

    t_start = time.perf_counter()
    r0 = counter.snapshot()
    h = grad()
    g0 = float(np.linalg.norm(h))
    r1 = counter.snapshot()
    report.setup_reductions, report.setup_broadcasts = r1[0] - r0[0], r1[1] - r0[1]
    report.residual_estimate.append(1.0 if g0 > 0 else 0.0)
    if g0 <= BREAKDOWN_TOL:
        report.termination = Termination.BREAKDOWN
        _finish(report, counter, r1, t_start)
        return x, report

    for t in range(1, maxit + 1):
        x, x_prev = x + params.alpha * (M @ h) + params.beta * (x - x_prev), x
        h = grad()
        rel = float(np.linalg.norm(h)) / g0
        report.iterations = t
        report.residual_estimate.append(rel)
        if track.enabled:
            report.iterates_error.append(track.error(x))
        if keep_iterates:
            report.iterates.append(x.copy())
        err_blowup = track.enabled and (
            report.iterates_error[-1] > divergence_factor * max(report.iterates_error[0], 1e-300))
        if rel > divergence_factor or err_blowup or not np.isfinite(rel):
            _finish(report, counter, r1, t_start)
            raise Divergence(
                f"{method} diverged after {t} iterations (eta_hat={params.eta_hat})",
                x=x, report=report,
            )
        if rel <= eps:
            report.termination = Termination.TOLERANCE
            break

    _finish(report, counter, r1, t_start)
    return x, report


def gradient_descent(A, P, b, x0, eta_hat, **kw):
    """Plain preconditioned gradient descent with the optimal fixed step."""
    return gradient_descent_hbm(A, P, b, x0, GradientParams(gd_step_size(eta_hat), 0.0, eta_hat), **kw)


def heavy_ball(A, P, b, x0, eta_hat, **kw):
    return gradient_descent_hbm(A, P, b, x0, hbm_params(eta_hat), **kw)


# ---------------------------------------------------------------------------
# iterative Hessian sketch


def ihs_update_oracle(A, P, x_prev, b, d):
    """Minimizer of ``(1/2d) ||S A (x - x_prev)||^2 - (x - x_prev)^T A^T (b - A x_prev)``
    by a dense solve of its normal equations.

    ``S A`` is rebuilt as ``Q R`` with ``R = inv(M)`` from a general inverse,
    so this does not share code with the closed form below.
    """
    A_dense = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
    R = np.linalg.inv(P.M)
    SA = P.Q @ R
    H = SA.T @ SA / d
    g = A_dense.T @ (b - A_dense @ x_prev)
    return x_prev + np.linalg.solve(H, g)


def ihs_closed_form(A, P, x_prev, b, d):
    """``x_prev + d * M M^T A^T (b - A x_prev)``: one preconditioned gradient step."""
    r = b - A @ x_prev
    return x_prev + d * (P.M @ (P.M.T @ np.asarray(A.T @ r).ravel()))


SOLVERS = {
    "lsqr": lsqr,
    "lsqr1sync": lsqr_one_sync,
    "gd": gradient_descent,
    "hbm": heavy_ball,
}
