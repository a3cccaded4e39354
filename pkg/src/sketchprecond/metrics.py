"""Sketch-quality and solution-quality measurements."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import csv
import json
import math

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch, InvalidDistortion, InvalidResidual
from .linalg import householder_qr, singular_values
from .sketches import apply_sketch


def orthonormal_basis(A):
    """Orthonormal basis ``U`` (``m x n``) of ``range(A)`` via Householder QR."""
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise DimensionMismatch(f"orthonormal_basis needs a tall matrix, got shape {A.shape}")
    U, _ = householder_qr(A)  # raises RankDeficient
    return U


def extend_basis(U, b, tol=1e-12):
    """``[U | q]`` with ``q`` the normalized component of ``b`` orthogonal to
    ``range(U)``; ``U`` unchanged when ``b`` lies in the range."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (U.shape[0],):
        raise DimensionMismatch(f"b has shape {b.shape}, basis has {U.shape[0]} rows")
    r = b - U @ (U.T @ b)
    r -= U @ (U.T @ r)  # second pass for orthogonality
    nb = np.linalg.norm(b)
    nr = np.linalg.norm(r)
    if nb == 0 or nr <= tol * nb:
        return U
    return np.column_stack([U, r / nr])


@dataclass
class DistortionReport:
    eta: float
    sigma_min: float
    sigma_max: float
    d: int
    zeta: int | None = None
    trials: int = 1
    quantiles: tuple = (0.0, 0.0, 0.0)
    etas: list = field(default_factory=list, repr=False)

    def to_dict(self):
        out = asdict(self)
        out["quantiles"] = list(self.quantiles)
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def write_csv(self, path):
        """One row per trial."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "eta"])
            for i, e in enumerate(self.etas or [self.eta]):
                w.writerow([i, repr(float(e))])


def _zeta_of(S):
    return getattr(S, "zeta", None)


def distortion(S, U, also_b=None):
    """Distortion ``eta = max(1 - sigma_min, sigma_max - 1)`` of ``S`` on ``range(U)``.

    With ``also_b`` the basis is first extended to cover ``range(U) + span(b)``.
    """
    if also_b is not None:
        U = extend_basis(U, also_b)
    SU = np.asarray(apply_sketch(S, U))
    if SU.shape[0] < SU.shape[1]:
        raise DimensionMismatch(f"sketch has {SU.shape[0]} rows, fewer than {SU.shape[1]} columns")
    s = singular_values(SU)
    eta = max(1.0 - s[-1], s[0] - 1.0, 0.0)
    return DistortionReport(eta=float(eta), sigma_min=float(s[-1]), sigma_max=float(s[0]),
                            d=SU.shape[0], zeta=_zeta_of(S), trials=1,
                            quantiles=(float(eta),) * 3, etas=[float(eta)])


def distortion_trials(sketch_factory, U, trials, also_b=None, workers=1, seed0=0):
    """Distortion over independent sketches ``sketch_factory(seed0 + i)``.

    The reported ``eta``/``sigma_*`` are those of the median trial and
    ``quantiles`` are the 5/50/95% points of the per-trial distortions.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if also_b is not None:
        U = extend_basis(U, also_b)

    def one(i):
        return distortion(sketch_factory(seed0 + i), U)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            reps = list(ex.map(one, range(trials)))
    else:
        reps = [one(i) for i in range(trials)]
    etas = np.array([r.eta for r in reps])
    q = np.quantile(etas, [0.05, 0.5, 0.95])
    med = reps[int(np.argsort(etas)[(trials - 1) // 2])]
    return DistortionReport(eta=float(q[1]), sigma_min=med.sigma_min, sigma_max=med.sigma_max,
                            d=med.d, zeta=med.zeta, trials=trials,
                            quantiles=tuple(float(v) for v in q), etas=etas.tolist())


def cond_bound(eta):
    """``(1 + eta) / (1 - eta)``: condition-number bound of ``A M`` for a sketch of distortion ``eta``."""
    if not 0 <= eta < 1:
        raise InvalidDistortion(f"condition bound needs 0 <= eta < 1, got {eta}")
    return (1.0 + eta) / (1.0 - eta)


def forward_error_from_residuals(res_hat, res_star, slack=1e-12):
    """``||A(x* - x)|| = sqrt(||b - A x||^2 - ||b - A x*||^2)``.

    Small negative differences (rounding, within ``slack`` relative to
    ``res_hat^2``) are clamped to zero.
    """
    if res_hat < 0 or res_star < 0:
        raise InvalidResidual(f"residual norms must be nonnegative, got {res_hat}, {res_star}")
    diff = res_hat * res_hat - res_star * res_star
    if diff < 0:
        if -diff > slack * max(res_hat * res_hat, res_star * res_star):
            raise InvalidResidual(f"res_hat={res_hat} is smaller than the optimal residual {res_star}")
        return 0.0
    return math.sqrt(diff)


@dataclass(frozen=True)
class CoherenceStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    total: float
    coherence: float  # max score times m / n

    def to_dict(self):
        return asdict(self)


def leverage_scores(A):
    """Squared row norms of an orthonormal basis of ``range(A)``."""
    U = orthonormal_basis(A)
    return np.einsum("ij,ij->i", U, U)


def coherence_stats(A):
    """Five-number summary of the leverage scores of ``A``."""
    s = leverage_scores(A)
    m, n = A.shape
    q = np.quantile(s, [0.0, 0.25, 0.5, 0.75, 1.0])
    return CoherenceStats(*(float(v) for v in q), total=float(s.sum()), coherence=float(q[-1] * m / n))


def marchenko_pastur_pdf(x, ratio):
    """Marchenko-Pastur density with aspect ratio ``ratio = n/d`` (unit variance).

    ``sqrt((l+ - x)(x - l-)) / (2 pi ratio x)`` on ``[l-, l+]`` with
    ``l+- = (1 +- sqrt(ratio))^2``, zero outside.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"need 0 < ratio <= 1, got {ratio}")
    x = np.asarray(x, dtype=np.float64)
    lo, hi = (1 - math.sqrt(ratio)) ** 2, (1 + math.sqrt(ratio)) ** 2
    inside = (x > lo) & (x < hi) & (x > 0)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.sqrt((hi - xi) * (xi - lo)) / (2 * math.pi * ratio * xi)
    return out if out.ndim else float(out)


def marchenko_pastur_support(ratio):
    r = math.sqrt(ratio)
    return (1 - r) ** 2, (1 + r) ** 2


@dataclass
class SpectrumHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    overlay: np.ndarray
    ratio: float
    trials: int
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def density(self):
        widths = np.diff(self.bin_edges)
        return self.counts / (self.counts.sum() * widths)

    def fraction_in_support(self):
        lo, hi = marchenko_pastur_support(self.ratio)
        s = self.samples
        return float(np.mean((s >= lo) & (s <= hi)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count", "density", "mp_density"])
            for i, c in enumerate(self.counts):
                w.writerow([repr(float(self.bin_edges[i])), repr(float(self.bin_edges[i + 1])),
                            int(c), repr(float(self.density[i])), repr(float(self.overlay[i]))])


def sketched_spectrum(sketch_factory, U, trials, bins=60, seed0=0, range_=None):
    """Histogram of the squared singular values of ``S U`` over ``trials``
    independent sketches ``sketch_factory(seed0 + i)``, with the
    Marchenko-Pastur density for ``n/d`` evaluated at the bin centers."""
    samples = []
    d = None
    for i in range(trials):
        SU = np.asarray(apply_sketch(sketch_factory(seed0 + i), U))
        d = SU.shape[0]
        samples.append(singular_values(SU) ** 2)
    samples = np.concatenate(samples)
    n = U.shape[1]
    ratio = min(n / d, 1.0)
    if range_ is None:
        lo, hi = marchenko_pastur_support(ratio)
        range_ = (min(lo, samples.min()), max(hi, samples.max()))
        if range_[1] - range_[0] < 1e-9:
            range_ = (range_[0] - 0.5, range_[1] + 0.5)
    counts, edges = np.histogram(samples, bins=bins, range=range_)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return SpectrumHistogram(edges, counts, marchenko_pastur_pdf(centers, ratio), ratio, trials, samples)
