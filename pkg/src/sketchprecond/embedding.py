"""Convergence-rate estimates and embedding-dimension selection."""

from dataclasses import dataclass
import math

from .exceptions import InvalidDims, NegativeArgument

# constant ratio d = 12 n used as the comparison baseline
BASELINE_RATIO = 12


@dataclass(frozen=True)
class DimensionPlan:
    d: int
    predicted_iters: int
    predicted_kappa: float
    eps: float
    d_real: float  # unrounded, unclamped balance solution


def estimate_rate(n, d):
    """Per-iteration LSQR rate ``sqrt(n/d)`` and the matching condition number
    ``(1 + sqrt(n/d)) / (1 - sqrt(n/d))`` under the Gaussian-like distortion guess."""
    if not d > n:
        raise InvalidDims(f"need d > n, got n={n}, d={d}")
    r = math.sqrt(n / d)
    return r, (1 + r) / (1 - r)


def iterations_for(eps, n, d):
    """``ceil(log(eps) / log(n/d))``, at least 1: the fixed iteration budget of
    the runtime experiments."""
    if not d > n:
        raise InvalidDims(f"need d > n, got n={n}, d={d}")
    t = math.ceil(math.log(eps) / math.log(n / d) - 1e-12)
    return max(1, t)


def iterations_for_rate(eps, n, d):
    """Iterations for ``sqrt(n/d)**t <= eps``, i.e. the rate from :func:`estimate_rate`.

    Twice :func:`iterations_for` up to rounding.
    """
    rate, _ = estimate_rate(n, d)
    return max(1, math.ceil(math.log(eps) / math.log(rate) - 1e-12))


def lambert_w(x, tol=1e-15, maxiter=100):
    """Principal branch of the Lambert W function for ``x >= 0``.

    Halley's iteration from ``log(1 + x)``, kept inside the bracket
    ``[0, log(1 + x)]`` (which always contains the root) with a bisection
    fallback.
    """
    x = float(x)
    if x < 0 or math.isnan(x):
        raise NegativeArgument(f"lambert_w is only defined here for x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    lo, hi = 0.0, math.log1p(x)
    w = hi
    for _ in range(maxiter):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            return w
        if f > 0:
            hi = min(hi, w)
        else:
            lo = max(lo, w)
        fp = ew * (w + 1.0)
        step = f / (fp - (w + 2.0) * f / (2.0 * w + 2.0))
        w_new = w - step
        if not lo <= w_new <= hi:
            w_new = 0.5 * (lo + hi)
        if abs(w_new - w) <= tol * max(1.0, abs(w_new)):
            return w_new
        w = w_new
    return w


def balanced_dimension(m, n, eps, cost_ratio=1.0):
    """Real ``d`` equating sketch-and-QR cost ``d n^2`` with iteration cost
    ``t m n`` where ``t = log(eps)/log(n/d)``.

    ``cost_ratio`` scales the per-iteration cost relative to a dense ``m x n``
    matvec (e.g. ``nnz(A)/(m n)`` for sparse ``A``).
    """
    if not m > n >= 1:
        raise InvalidDims(f"need m > n >= 1, got m={m}, n={n}")
    if not 0 < eps < 1:
        raise ValueError(f"need 0 < eps < 1, got {eps}")
    arg = -cost_ratio * m * math.log(eps) / n**2
    return n * math.exp(lambert_w(arg))


def select_embedding_dim(m, n, eps, cost_ratio=1.0):
    """Embedding dimension balancing preconditioner build against iterations.

    The real balance solution is rounded half-up and clamped to ``[n+1, m]``.
    """
    if not m > n >= 1:
        raise InvalidDims(f"need m > n >= 1, got m={m}, n={n}")
    if not 0 < eps < 1:
        raise ValueError(f"need 0 < eps < 1, got {eps}")
    d_real = balanced_dimension(m, n, eps, cost_ratio)
    d = min(max(int(math.floor(d_real + 0.5)), n + 1), m)
    _, kappa = estimate_rate(n, d)
    return DimensionPlan(d, iterations_for(eps, n, d), kappa, eps, d_real)


def fixed_ratio_dim(m, n, ratio=BASELINE_RATIO, eps=1e-10):
    """Plan for the constant-ratio rule ``d = ratio * n`` (clamped to ``[n+1, m]``)."""
    d = min(max(int(ratio * n), n + 1), m)
    _, kappa = estimate_rate(n, d)
    return DimensionPlan(d, iterations_for(eps, n, d), kappa, eps, float(ratio * n))
