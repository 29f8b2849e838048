"""Numeric kernels for p-values.

Chi-square survival functions and their one-sided mixtures, rectangle
probabilities of a zero-mean multivariate normal, and the tail of the
combined statistic that adds an independent squared normal to the
maximum of positive-part squared correlated normals.

The rectangle probability is computed with the sequential-conditioning
transform: after a variable-reordered (semidefinite-safe) Cholesky
factorization, the probability becomes an integral over the unit cube
that is evaluated on low-discrepancy digital-net points, randomized by
independent digital shifts.  The spread of the estimates across the
shifted streams provides the error estimate, and the point count is
doubled until the target accuracy or the point budget is reached.
Results are deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaincc, ndtr, ndtri
from scipy.stats import qmc

from .errors import DataValidationError, NumericError

# Coordinates with bounds this many standard deviations out carry no
# probability mass at the tolerances used here.
_BOUND_CUTOFF = 8.5
_SINGULAR_TOL = 1e-10
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_FIRST_ROUND_POINTS = 512

# Unscrambled digital-net points, cached per dimension as 53-bit integers.
# Randomization happens per call through digital (xor) shifts, so the
# base points can be shared by every call in the process.
_NET_BITS = 53
_NET_SCALE = 2.0 ** -_NET_BITS
_net_cache: dict[int, np.ndarray] = {}


def _net_block(dim: int, n_points: int) -> np.ndarray:
    cached = _net_cache.get(dim)
    if cached is None or cached.shape[0] < n_points:
        size = 1 << max(13, (n_points - 1).bit_length())
        pts = qmc.Sobol(d=dim, scramble=False, bits=_NET_BITS).random(size)
        cached = np.round(pts * (1 << _NET_BITS)).astype(np.uint64)
        _net_cache[dim] = cached
    return cached


@dataclass(frozen=True)
class MvnConfig:
    """Accuracy and reproducibility controls for the rectangle probability."""

    target_abs_error: float = 1e-5
    max_points: int = 1 << 17
    randomizations: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.target_abs_error <= 0:
            raise DataValidationError("target_abs_error must be positive")
        if self.randomizations < 2:
            raise DataValidationError("randomizations must be >= 2")
        if self.max_points < self.randomizations:
            raise DataValidationError("max_points must cover at least one point per shift")


@dataclass(frozen=True)
class MvnResult:
    prob: float
    abs_error_estimate: float


def chi2_sf(t: float, k: int) -> float:
    """Survival probability of a chi-square variable with 1 or 2 degrees of freedom."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if k == 1:
        return float(gammaincc(0.5, t / 2.0))
    if k == 2:
        return math.exp(-t / 2.0)
    raise ValueError(f"unsupported degrees of freedom {k}; only 1 and 2 are needed")


def _validate_correlation(corr: np.ndarray) -> np.ndarray:
    c = np.atleast_2d(np.asarray(corr, dtype=float))
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise NumericError("correlation matrix must be square")
    if not np.isfinite(c).all():
        raise NumericError("correlation matrix has non-finite entries")
    if np.abs(np.diag(c) - 1.0).max() > 1e-8:
        raise NumericError("correlation matrix must have unit diagonal")
    if np.abs(c - c.T).max() > 1e-8:
        raise NumericError("correlation matrix must be symmetric")
    if np.linalg.eigvalsh(c)[0] < -1e-8:
        raise NumericError("correlation matrix is not positive semidefinite")
    c = (c + c.T) / 2.0
    np.fill_diagonal(c, 1.0)
    return c


def _phi(v: float) -> float:
    return math.exp(-0.5 * v * v) / _SQRT_2PI


def _truncated_mean(e: float) -> float:
    """E[Z | Z <= e] for standard normal Z, stable far in the lower tail."""
    if e < -20.0:
        return e - 1.0 / e
    fe = ndtr(e)
    if fe <= 0.0:
        return e - 1.0 / e
    return float(-_phi(e) / fe)


def _cholesky_reorder(corr: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Semidefinite Cholesky factor with variables reordered so that the
    coordinate with the smallest expected conditional probability comes first."""
    m = corr.shape[0]
    c = corr.copy()
    b = upper.astype(float).copy()
    lower = np.zeros((m, m))
    y = np.zeros(m)
    for j in range(m):
        best_i = j
        best_p = np.inf
        for i in range(j, m):
            s = c[i, i] - lower[i, :j] @ lower[i, :j]
            den = math.sqrt(max(s, 0.0))
            num = b[i] - lower[i, :j] @ y[:j]
            if den > _SINGULAR_TOL:
                p = float(ndtr(num / den))
            else:
                p = 1.0 if num >= 0.0 else 0.0
            if p < best_p:
                best_p = p
                best_i = i
        if best_i != j:
            order = np.arange(m)
            order[j], order[best_i] = order[best_i], order[j]
            c = c[np.ix_(order, order)]
            b = b[order]
            lower[[j, best_i], :j] = lower[[best_i, j], :j]
        s = c[j, j] - lower[j, :j] @ lower[j, :j]
        if s > _SINGULAR_TOL:
            lower[j, j] = math.sqrt(s)
            for i in range(j + 1, m):
                lower[i, j] = (c[i, j] - lower[i, :j] @ lower[j, :j]) / lower[j, j]
            e = (b[j] - lower[j, :j] @ y[:j]) / lower[j, j]
            y[j] = _truncated_mean(e)
        else:
            # Redundant coordinate: deterministic given the previous ones.
            y[j] = 0.0
    return lower, b


def _integrand_sums(lower: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-stream sums of the sequentially conditioned integrand.

    ``w`` has shape (streams, points, m - 1) with entries in [0, 1).
    """
    m = b.shape[0]
    n_streams, n_points, _ = w.shape
    tiny = 1e-300
    top = np.nextafter(1.0, 0.0)
    if lower[0, 0] > 0.0:
        d0 = float(ndtr(b[0] / lower[0, 0]))
    else:
        d0 = 1.0 if b[0] >= 0.0 else 0.0
    f = np.full((n_streams, n_points), d0)
    d_prev = np.full((n_streams, n_points), d0)
    ys = np.empty((n_streams, n_points, m - 1))
    for j in range(1, m):
        arg = np.clip(w[:, :, j - 1] * d_prev, tiny, top)
        ys[:, :, j - 1] = ndtri(arg)
        num = b[j] - ys[:, :, :j] @ lower[j, :j]
        if lower[j, j] > 0.0:
            d = ndtr(num / lower[j, j])
        else:
            d = (num >= 0.0).astype(float)
        f = f * d
        d_prev = d
    return f.sum(axis=1)


def mvn_cdf(upper, corr, cfg: MvnConfig | None = None) -> MvnResult:
    """P(Z_1 <= upper_1, ..., Z_m <= upper_m) for zero-mean unit-variance
    normals with the given correlation matrix.

    Coordinates with bounds beyond +-8.5 standard deviations are resolved
    exactly (dropped, or the probability is zero).  Dimensions 0 and 1
    are exact; otherwise the randomized low-discrepancy estimate is
    refined until the error estimate (three standard errors across the
    shifted streams) meets ``cfg.target_abs_error`` or the point budget
    is exhausted.
    """
    cfg = cfg or MvnConfig()
    u = np.atleast_1d(np.asarray(upper, dtype=float))
    if u.ndim != 1 or u.size < 1:
        raise NumericError("upper bounds must form a nonempty vector")
    if np.isnan(u).any():
        raise NumericError("upper bounds must not be NaN")
    c = _validate_correlation(corr)
    if c.shape[0] != u.size:
        raise NumericError("bounds and correlation matrix sizes differ")

    if np.any(u <= -_BOUND_CUTOFF):
        return MvnResult(prob=0.0, abs_error_estimate=0.0)
    keep = u < _BOUND_CUTOFF
    u = u[keep]
    c = c[np.ix_(keep, keep)]
    m = u.size
    if m == 0:
        return MvnResult(prob=1.0, abs_error_estimate=0.0)
    if m == 1:
        return MvnResult(prob=float(ndtr(u[0])), abs_error_estimate=0.0)

    lower, b = _cholesky_reorder(c, u)
    n_streams = cfg.randomizations
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    shifts = rng.integers(0, 1 << _NET_BITS, size=(n_streams, m - 1), dtype=np.uint64)

    round_points = _FIRST_ROUND_POINTS
    while round_points * n_streams > cfg.max_points and round_points > 8:
        round_points //= 2
    sums = np.zeros(n_streams)
    points_per_stream = 0
    while True:
        block = _net_block(m - 1, points_per_stream + round_points)
        fresh = block[points_per_stream : points_per_stream + round_points]
        w = (fresh[None, :, :] ^ shifts[:, None, :]).astype(np.float64) * _NET_SCALE
        sums += _integrand_sums(lower, b, w)
        points_per_stream += round_points
        means = sums / points_per_stream
        prob = float(means.mean())
        err = 3.0 * float(means.std(ddof=1)) / math.sqrt(n_streams)
        if err <= cfg.target_abs_error:
            break
        if 2 * points_per_stream * n_streams > cfg.max_points:
            break
        round_points = points_per_stream  # doubles the stream length
    return MvnResult(prob=float(np.clip(prob, 0.0, 1.0)), abs_error_estimate=err)


def _mix_seed(seed: int, index: int) -> int:
    """Derive a per-node seed; splitmix64 finalizer keeps streams disjoint."""
    mask = (1 << 64) - 1
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return (z ^ (z >> 31)) & mask


def rsmax_sf(t: float, sigma_s, cfg: MvnConfig | None = None) -> float:
    """Tail probability of the maximum of positive-part squared correlated
    normals; equals 1 exactly at t = 0 (the statistic has an atom there)."""
    p, _ = rsmax_sf_with_error(t, sigma_s, cfg)
    return p


def rsmax_sf_with_error(
    t: float, sigma_s, cfg: MvnConfig | None = None
) -> tuple[float, float]:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return 1.0, 0.0
    c = _validate_correlation(sigma_s)
    res = mvn_cdf(np.full(c.shape[0], math.sqrt(t)), c, cfg)
    return float(np.clip(1.0 - res.prob, 0.0, 1.0)), res.abs_error_estimate


def ssmax_sf(
    t: float, sigma_s, cfg: MvnConfig | None = None, quad_nodes: int = 96
) -> float:
    """Tail probability of an independent squared normal plus the maximum of
    positive-part squared correlated normals."""
    p, _ = ssmax_sf_with_error(t, sigma_s, cfg, quad_nodes)
    return p


def ssmax_sf_with_error(
    t: float, sigma_s, cfg: MvnConfig | None = None, quad_nodes: int = 96
) -> tuple[float, float]:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if quad_nodes < 2:
        raise ValueError("quad_nodes must be >= 2")
    if t == 0.0:
        return 1.0, 0.0
    cfg = cfg or MvnConfig()
    c = _validate_correlation(sigma_s)
    m = c.shape[0]
    root = math.sqrt(t)
    nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
    nodes = 0.5 * root * (nodes + 1.0)
    weights = 0.5 * root * weights

    total = 0.0
    err = 0.0
    for idx, (v, wt) in enumerate(zip(nodes, weights)):
        bound = math.sqrt(max(t - v * v, 0.0))
        node_cfg = replace(cfg, seed=_mix_seed(cfg.seed, idx))
        res = mvn_cdf(np.full(m, bound), c, node_cfg)
        total += wt * res.prob * _phi(float(v))
        err += wt * res.abs_error_estimate * _phi(float(v))
    p = 1.0 - 2.0 * total
    return float(np.clip(p, 0.0, 1.0)), 2.0 * err
