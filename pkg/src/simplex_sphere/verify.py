"""Statistical checks that turn sample batches into pass/fail evidence."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import DegenerateCovarianceError, InconclusiveError, SpecInvalidError
from .geometry import ShellSpec, in_shell_mask
from .rng import as_generator
from .samplers import SampleBatch
from .tilted import TiltedParams, sample_tilted, tilted_moments

KS_1PCT = 1.63


@dataclass
class KSReport:
    statistic: float
    n_samples: int
    reference: str
    critical_1pct: float
    n_samples_2: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical_1pct

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def ks_one_sample(values, cdf: Callable, reference: str = "custom") -> KSReport:
    """sup_x |F_N(x) - F(x)| for a continuous reference CDF."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    if n == 0:
        raise ValueError("ks_one_sample needs at least one value")
    f = np.asarray(cdf(v), dtype=float)
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return KSReport(stat, n, reference, KS_1PCT / math.sqrt(n))


def ks_two_sample(a, b) -> KSReport:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample needs two non-empty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    stat = float(np.max(np.abs(fa - fb)))
    crit = KS_1PCT * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KSReport(stat, a.size, "empirical", crit, n_samples_2=b.size)


def ks_bootstrap_se(values, cdf: Callable, n_boot: int = 100, rng=0) -> float:
    """Bootstrap standard error of the one-sample KS statistic."""
    rng, _ = as_generator(rng)
    v = np.asarray(values, dtype=float).ravel()
    stats = [ks_one_sample(v[rng.integers(0, v.size, v.size)], cdf).statistic
             for _ in range(n_boot)]
    return float(np.std(stats, ddof=1))


def ks_joint_pair(pairs, cdf: Callable, grid: int = 10) -> float:
    """max over a grid x grid quantile lattice of |F_N(s, t) - F(s) F(t)|.

    Approximates the two-dimensional supremum for independent reference
    marginals; the lattice uses the empirical quantiles of each coordinate.
    """
    xy = np.asarray(pairs, dtype=float)
    qs = (np.arange(1, grid + 1) - 0.5) / grid
    tx = np.quantile(xy[:, 0], qs)
    ty = np.quantile(xy[:, 1], qs)
    below_x = xy[:, 0][:, None] <= tx[None, :]
    below_y = xy[:, 1][:, None] <= ty[None, :]
    emp = below_x.T.astype(float) @ below_y.astype(float) / xy.shape[0]
    ref = np.outer(cdf(tx), cdf(ty))
    return float(np.max(np.abs(emp - ref)))


# --- moments ---------------------------------------------------------------------

def moment_report(batch: SampleBatch, k_max: int = 4, n_boot: int = 200, rng=0):
    """(k, coordinate-pooled mean of x^k, bootstrap standard error) for k <= k_max.

    Resampling is over points, never over coordinates of one point.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if not 1 <= k_max <= 4:
        raise ValueError("k_max must be between 1 and 4")
    rng, _ = as_generator(rng)
    pts = batch.points
    per_point = np.stack([np.mean(pts**k, axis=1) for k in range(1, k_max + 1)], axis=1)
    est = per_point.mean(axis=0)
    m = len(batch)
    boots = np.empty((n_boot, k_max))
    for i in range(n_boot):
        boots[i] = per_point[rng.integers(0, m, m)].mean(axis=0)
    se = boots.std(axis=0, ddof=1) if m > 1 else np.full(k_max, np.nan)
    return [(k, float(est[k - 1]), float(se[k - 1])) for k in range(1, k_max + 1)]


# --- extremes ----------------------------------------------------------------------

@dataclass
class ExtremeReport:
    M: float
    M2: float
    ratio_loc: Optional[float]
    ratio_m2: float


@dataclass
class ExtremeSummary:
    n: int
    b: float
    reports: List[ExtremeReport]
    M: np.ndarray
    M2: np.ndarray
    ratio_loc: Optional[np.ndarray]
    ratio_m2: np.ndarray

    @staticmethod
    def _q(a):
        if a is None:
            return None
        q5, q50, q95 = np.quantile(a, [0.05, 0.5, 0.95])
        return {"median": float(q50), "q05": float(q5), "q95": float(q95)}

    @property
    def median_ratio_loc(self):
        return None if self.ratio_loc is None else float(np.median(self.ratio_loc))

    @property
    def median_ratio_m2(self):
        return float(np.median(self.ratio_m2))

    def median_scaled_max(self, scale: float) -> float:
        return float(np.median(self.M / scale))

    def to_dict(self):
        return {
            "n": self.n,
            "b": self.b,
            "points": len(self.reports),
            "M": self._q(self.M),
            "M2": self._q(self.M2),
            "ratio_loc": self._q(self.ratio_loc),
            "ratio_m2": self._q(self.ratio_m2),
        }


def extreme_report(batch: SampleBatch) -> ExtremeSummary:
    if len(batch) == 0:
        raise ValueError("empty batch")
    n, b = batch.spec.n, batch.spec.b
    top2 = np.sort(np.partition(batch.points, n - 2, axis=1)[:, n - 2:], axis=1)
    M, M2 = top2[:, 1], top2[:, 0]
    loc = M**2 / ((b - 2.0) * n) if b > 2 else None
    m2 = M2**2 / n
    reports = [
        ExtremeReport(float(M[i]), float(M2[i]), None if loc is None else float(loc[i]), float(m2[i]))
        for i in range(len(M))
    ]
    return ExtremeSummary(n, b, reports, M, M2, loc, m2)


# --- local limit theorem ----------------------------------------------------------------

@dataclass
class LLTReport:
    n: int
    n_reps: int
    bins: int
    x_edges: np.ndarray
    y_edges: np.ndarray
    grid: np.ndarray          # bin probabilities, sums to <= 1
    rho: np.ndarray           # limiting Gaussian density at bin centers
    sup_err: float
    cov: np.ndarray           # Cov(Y, Y^2) from the moments
    empirical_cov: np.ndarray
    empirical_cov_se: np.ndarray

    @property
    def density(self) -> np.ndarray:
        area = np.diff(self.x_edges)[:, None] * np.diff(self.y_edges)[None, :]
        return self.grid / area

    def cov_z_scores(self) -> np.ndarray:
        return (self.empirical_cov - self.cov) / self.empirical_cov_se

    def to_dict(self):
        return {
            "n": self.n,
            "n_reps": self.n_reps,
            "bins": self.bins,
            "sup_err": self.sup_err,
            "peak_rho": float(self.rho.max()),
            "cov": self.cov.tolist(),
            "empirical_cov": self.empirical_cov.tolist(),
            "empirical_cov_se": self.empirical_cov_se.tolist(),
            "x_range": [float(self.x_edges[0]), float(self.x_edges[-1])],
            "y_range": [float(self.y_edges[0]), float(self.y_edges[-1])],
        }


def gaussian_density_2d(cov: np.ndarray, x, y):
    cov = np.asarray(cov, dtype=float)
    det = float(np.linalg.det(cov))
    inv = np.linalg.inv(cov)
    x, y = np.asarray(x), np.asarray(y)
    quad = inv[0, 0] * x * x + 2 * inv[0, 1] * x * y + inv[1, 1] * y * y
    return np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))


def simulate_v(p: TiltedParams, n: int, n_reps: int, rng, chunk_values: int = 1 << 22):
    """n_reps draws of n^{-1/2} (sum (Y_i - EY), sum (Y_i^2 - EY^2))."""
    rng, _ = as_generator(rng)
    mom = tilted_moments(p)
    m1, m2 = mom.m[0], mom.m[1]
    out = np.empty((n_reps, 2))
    rows = max(1, chunk_values // n)
    root_n = math.sqrt(n)
    for start in range(0, n_reps, rows):
        k = min(rows, n_reps - start)
        y = sample_tilted(p, rng, k * n).reshape(k, n)
        out[start:start + k, 0] = (y - m1).sum(axis=1) / root_n
        out[start:start + k, 1] = (y * y - m2).sum(axis=1) / root_n
    return out


def llt_check(p: TiltedParams, n: int, n_reps: int, bins: int = 25, rng=0) -> LLTReport:
    if n < 10 or n_reps < 10**4:
        raise ValueError("llt_check needs n >= 10 and n_reps >= 1e4")
    cov = tilted_moments(p).pair_covariance()
    if np.linalg.det(cov) < 1e-12:
        raise DegenerateCovarianceError(f"Cov(Y, Y^2) is numerically singular for {p}")
    v = simulate_v(p, n, n_reps, rng)
    sx, sy = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    xe = np.linspace(-4 * sx, 4 * sx, bins + 1)
    ye = np.linspace(-4 * sy, 4 * sy, bins + 1)
    counts, _, _ = np.histogram2d(v[:, 0], v[:, 1], bins=[xe, ye])
    grid = counts / n_reps
    xc = 0.5 * (xe[:-1] + xe[1:])
    yc = 0.5 * (ye[:-1] + ye[1:])
    rho = gaussian_density_2d(cov, xc[:, None], yc[None, :])
    area = np.diff(xe)[:, None] * np.diff(ye)[None, :]
    sup_err = float(np.max(np.abs(grid / area - rho)))
    # sample covariance (population means are known to be zero) and its SE
    prods = np.stack([v[:, 0] * v[:, 0], v[:, 0] * v[:, 1], v[:, 1] * v[:, 1]], axis=1)
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(n_reps)
    emp = np.array([[est[0], est[1]], [est[1], est[2]]])
    emp_se = np.array([[se[0], se[1]], [se[1], se[2]]])
    return LLTReport(n, n_reps, bins, xe, ye, grid, rho, sup_err, cov, emp, emp_se)


# --- thick-shell sandwich ----------------------------------------------------------------

def _f_one(x, shell):
    return np.ones(x.shape[0])


def _f_x1_le_1(x, shell):
    return (x[:, 0] <= 1.0).astype(float)


def _f_x1_sq_scaled(x, shell):
    # x_1^2 <= sum x^2 < n b (1 + eps) inside the shell
    return x[:, 0] ** 2 / (shell.n * shell.b * (1.0 + shell.eps))


def _f_max_le_2(x, shell):
    return (x.max(axis=1) <= 2.0).astype(float)


def _f_min_gt_quarter(x, shell):
    return (x.min(axis=1) > 0.25).astype(float)


TEST_FUNCTIONALS: Dict[str, Callable] = {
    "one": _f_one,
    "x1_le_1": _f_x1_le_1,
    "x1_sq_scaled": _f_x1_sq_scaled,
    "max_le_2": _f_max_le_2,
    "min_gt_quarter": _f_min_gt_quarter,
}

SANDWICH_MAX_N = 12


@dataclass
class SandwichReport:
    f_id: str
    B: float
    bound: float              # exp(B eps n)
    lhs: float
    mid: float
    rhs: float
    uniform_mean: float
    uniform_se: float
    mid_se: float
    uniform_accepts: int
    product_accepts: int
    proposals: int
    passed: bool

    def to_dict(self):
        return asdict(self)


def uniform_shell_points(shell: ShellSpec, proposals: int, rng):
    """Lebesgue-uniform points of K^eps by rejection from the corner simplex
    {x > 0, sum x <= n (1 + 2 eps)}, which contains K^eps."""
    rng, _ = as_generator(rng)
    n = shell.n
    total = n * (1.0 + 2.0 * shell.eps)
    kept = []
    rows = max(1, (1 << 21) // (n + 1))
    for start in range(0, proposals, rows):
        k = min(rows, proposals - start)
        e = rng.exponential(1.0, (k, n + 1))
        x = total * e[:, :n] / e.sum(axis=1, keepdims=True)
        kept.append(x[in_shell_mask(x, shell)])
    return np.concatenate(kept, axis=0)


def product_shell_points(shell: ShellSpec, p: TiltedParams, proposals: int, rng):
    """i.i.d. G(r, s) vectors that land in K^eps, from a fixed proposal budget."""
    rng, _ = as_generator(rng)
    n = shell.n
    kept = []
    rows = max(1, (1 << 21) // n)
    for start in range(0, proposals, rows):
        k = min(rows, proposals - start)
        y = sample_tilted(p, rng, k * n).reshape(k, n)
        kept.append(y[in_shell_mask(y, shell)])
    return np.concatenate(kept, axis=0)


def _mean_se(v):
    if v.size < 2:
        return float(v.mean()), math.inf
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def sandwich_from_points(shell: ShellSpec, p: TiltedParams, f_id: str,
                         uniform_pts, product_pts, proposals: int) -> SandwichReport:
    if f_id not in TEST_FUNCTIONALS:
        raise ValueError(f"unknown functional {f_id!r}; choose from {sorted(TEST_FUNCTIONALS)}")
    if len(uniform_pts) == 0 or len(product_pts) == 0:
        raise InconclusiveError(
            "no acceptances on one side of the sandwich",
            counts={"uniform": len(uniform_pts), "product": len(product_pts)},
        )
    f = TEST_FUNCTIONALS[f_id]
    u_mean, u_se = _mean_se(f(uniform_pts, shell))
    mid, mid_se = _mean_se(f(product_pts, shell))
    B = p.sandwich_constant(shell.b)
    bound = math.exp(B * shell.eps * shell.n)
    lhs, rhs = u_mean / bound, u_mean * bound
    if f_id == "one":
        u_se = mid_se = 0.0
    lo_se = math.hypot(mid_se, u_se / bound)
    hi_se = math.hypot(mid_se, u_se * bound)
    passed = (mid + 3.0 * lo_se >= lhs) and (mid - 3.0 * hi_se <= rhs)
    return SandwichReport(f_id, B, bound, lhs, mid, rhs, u_mean, u_se, mid_se,
                          len(uniform_pts), len(product_pts), proposals, bool(passed))


def sandwich_check(shell: ShellSpec, p: TiltedParams, f_id: str, n_reps: int, rng=0) -> SandwichReport:
    """Compare E f under the shell-conditioned product law with the two-sided
    bound exp(-+B eps n) E f(uniform on K^eps), B = 2 b r + 4 |s|.

    ``n_reps`` is the proposal budget spent on each side.
    """
    if shell.n > SANDWICH_MAX_N:
        raise SpecInvalidError(f"the Lebesgue oracle is only feasible for n <= {SANDWICH_MAX_N}")
    rng, _ = as_generator(rng)
    uni = uniform_shell_points(shell, n_reps, rng)
    prod = product_shell_points(shell, p, n_reps, rng)
    return sandwich_from_points(shell, p, f_id, uni, prod, n_reps)


# --- rate probe ---------------------------------------------------------------------

def rate_envelope(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return np.sqrt(np.log(n) / n)


@dataclass
class RateProbe:
    ns: List[int]
    ks: List[float]
    se: List[float]
    C: float
    bound_factor: float = 1.5
    slack_sigmas: float = 2.0
    notes: Dict[str, bool] = field(default_factory=dict)

    @property
    def nonincreasing(self) -> bool:
        for i in range(len(self.ns) - 1):
            slack = self.slack_sigmas * math.hypot(self.se[i], self.se[i + 1])
            if self.ks[i + 1] > self.ks[i] + slack:
                return False
        return True

    @property
    def within_rate(self) -> bool:
        env = rate_envelope(self.ns)
        return all(k <= self.bound_factor * self.C * e for k, e in zip(self.ks[1:], env[1:]))

    @property
    def passed(self) -> bool:
        return self.nonincreasing and self.within_rate

    def to_dict(self):
        return {
            "ns": list(self.ns),
            "ks": list(self.ks),
            "se": list(self.se),
            "C": self.C,
            "bound": [self.bound_factor * self.C * e for e in rate_envelope(self.ns)],
            "nonincreasing": self.nonincreasing,
            "within_rate": self.within_rate,
            "passed": self.passed,
        }


def rate_probe(ns: Sequence[int], ks: Sequence[float], se: Sequence[float]) -> RateProbe:
    """Fit C from the first (smallest n) measurement; check the rest against
    1.5 C sqrt(log n / n) and monotonicity up to 2 combined standard errors."""
    C = ks[0] / float(rate_envelope(ns[0]))
    return RateProbe(list(ns), list(ks), list(se), C)
