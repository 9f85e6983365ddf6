"""The family G(r, s): density proportional to exp(-r x^2 - s x) on (0, inf).

For r > 0 completing the square gives X = sigma * (W - alpha) with W a standard
normal truncated to (alpha, inf), sigma = 1/sqrt(2r) and alpha = s * sigma.
Everything below (normalizer, moments, CDF, sampler) is written in terms of the
excess W - alpha so that the r -> 0 limit (alpha -> inf) stays accurate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special

from .errors import (
    ConditioningError,
    InadmissibleParamsError,
    NonConvergenceError,
    OutOfRangeError,
)

SQRT2 = math.sqrt(2.0)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# below alpha_cf the forward moment recursion is stable, above it the
# backward continued fraction is (both verified against 50-digit arithmetic)
_ALPHA_CF = 1.5
_CF_DEPTH = 300
THETA_HALF_GAUSSIAN = math.pi / 2.0
MAX_ORDER = 4


@dataclass(frozen=True)
class TiltedParams:
    r: float
    s: float

    def __post_init__(self):
        r, s = float(self.r), float(self.s)
        if not (math.isfinite(r) and math.isfinite(s)) or not (r > 0 or (r == 0 and s > 0)):
            raise InadmissibleParamsError(
                f"(r, s) = ({self.r}, {self.s}) is not admissible: need r > 0, or r = 0 and s > 0"
            )
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)

    @property
    def sigma(self) -> float:
        return math.inf if self.r == 0 else 1.0 / math.sqrt(2.0 * self.r)

    @property
    def alpha(self) -> float:
        return math.inf if self.r == 0 else self.s / math.sqrt(2.0 * self.r)

    def scaled(self, factor: float) -> "TiltedParams":
        """Parameters of factor * W when W ~ G(r, s)."""
        return TiltedParams(self.r / factor**2, self.s / factor)

    def sandwich_constant(self, b: float) -> float:
        return 2.0 * b * self.r + 4.0 * abs(self.s)


@dataclass(frozen=True)
class TiltedMoments:
    log_z: float
    m: Tuple[float, float, float, float]

    @property
    def z(self) -> float:
        return math.exp(self.log_z) if self.log_z < 709.0 else math.inf

    @property
    def beta(self) -> float:
        return self.m[1]

    @property
    def theta(self) -> float:
        return self.m[1] / self.m[0] ** 2

    @property
    def mean(self) -> float:
        return self.m[0]

    @property
    def variance(self) -> float:
        return self.m[1] - self.m[0] ** 2

    def pair_covariance(self) -> np.ndarray:
        """Covariance matrix of (Y, Y^2) for Y ~ G(r, s)."""
        m1, m2, m3, m4 = self.m
        return np.array([[m2 - m1 * m1, m3 - m1 * m2], [m3 - m1 * m2, m4 - m2 * m2]])


def _as_params(p) -> TiltedParams:
    if isinstance(p, TiltedParams):
        return p
    r, s = p
    return TiltedParams(r, s)


def log_mills_ratio(a: float) -> float:
    """log of Q(a)/phi(a), Q the standard normal upper tail."""
    if a > -20.0:
        return 0.5 * math.log(math.pi / 2.0) + math.log(special.erfcx(a / SQRT2))
    return math.log(special.ndtr(-a)) + HALF_LOG_2PI + 0.5 * a * a


def _excess_moments(alpha: float):
    """E[(W - alpha)^k | W > alpha] for k = 1..4 and log Q(alpha)/phi(alpha)."""
    log_r = log_mills_ratio(alpha)
    if alpha >= _ALPHA_CF:
        h = 0.0
        ratios = [0.0] * (MAX_ORDER + 1)
        for k in range(_CF_DEPTH, 0, -1):
            h = k / (alpha + h)
            if k <= MAX_ORDER:
                ratios[k] = h
        d = []
        acc = 1.0
        for k in range(1, MAX_ORDER + 1):
            acc *= ratios[k]
            d.append(acc)
    else:
        d_prev, d_cur = 1.0, math.exp(-log_r) - alpha
        d = [d_cur]
        for k in range(1, MAX_ORDER):
            d_prev, d_cur = d_cur, k * d_prev - alpha * d_cur
            d.append(d_cur)
    return log_r, d


def tilted_moments(p, verify: bool = False) -> TiltedMoments:
    """Normalizer and raw moments 1..4 of G(r, s) in closed form.

    With ``verify=True`` the result is also computed by adaptive quadrature and
    a ``ArithmeticError`` is raised if the two disagree beyond 1e-10 relative.
    """
    p = _as_params(p)
    if p.r == 0.0:
        s = p.s
        out = TiltedMoments(-math.log(s), (1.0 / s, 2.0 / s**2, 6.0 / s**3, 24.0 / s**4))
    else:
        sigma, alpha = p.sigma, p.alpha
        log_r, d = _excess_moments(alpha)
        out = TiltedMoments(
            math.log(sigma) + log_r,
            tuple(sigma ** (k + 1) * d[k] for k in range(MAX_ORDER)),
        )
    if verify:
        check = tilted_moments_quadrature(p)
        err = moment_discrepancy(out, check)
        if err > 1e-10:
            raise ArithmeticError(f"closed form and quadrature disagree by {err:.2e} at {p}")
    return out


def moment_discrepancy(a: TiltedMoments, b: TiltedMoments) -> float:
    """Largest relative difference between two moment records (z via log)."""
    errs = [abs(x - y) / abs(y) for x, y in zip(a.m, b.m)]
    errs.append(abs(a.log_z - b.log_z) / max(1.0, abs(b.log_z)))
    return max(errs)


def _exponent_floor(p: TiltedParams):
    """Minimizer x* >= 0 of r x^2 + s x and the minimum value."""
    if p.r > 0 and p.s < 0:
        x_star = -p.s / (2.0 * p.r)
        return x_star, -p.s * p.s / (4.0 * p.r)
    return 0.0, 0.0


def _quadrature_range(p: TiltedParams):
    x_star, floor = _exponent_floor(p)
    # exponent rise of 80 above the floor leaves a tail far below 1e-14 * z,
    # even after the x^4 weight
    budget = 80.0
    if p.r > 0:
        disc = p.s * p.s + 4.0 * p.r * (budget + floor)
        x_max = (-p.s + math.sqrt(disc)) / (2.0 * p.r)
        if p.s > 0:
            x_max = min(x_max, budget / p.s)
    else:
        x_max = budget / p.s
    width = min(p.sigma, 1.0 / p.s if p.s > 0 else math.inf)
    return x_star, floor, x_max, width


def tilted_moments_quadrature(p) -> TiltedMoments:
    """Same quantities as :func:`tilted_moments`, by adaptive quadrature."""
    p = _as_params(p)
    x_star, floor, x_max, width = _quadrature_range(p)
    r, s = p.r, p.s

    breaks = sorted({x for x in (x_star, x_star + width, x_star + 4 * width, x_star + 16 * width)
                     if 0.0 < x < x_max})

    def integral(k):
        total = 0.0
        edges = [0.0] + breaks + [x_max]
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(
                lambda x: x**k * math.exp(-(r * x * x + s * x) + floor),
                a, b, epsabs=0.0, epsrel=2e-14, limit=400,
            )
            total += val
        return total

    with warnings.catch_warnings():
        # quad flags roundoff near the requested 2e-14; agreement is checked elsewhere
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        i0 = integral(0)
        m = tuple(integral(k) / i0 for k in range(1, MAX_ORDER + 1))
    return TiltedMoments(math.log(i0) - floor, m)


def tilted_cdf(p, x):
    """F(x) = P(Y <= x) for Y ~ G(r, s); vectorized over x, 0 for x <= 0."""
    p = _as_params(p)
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    if p.r == 0.0:
        out = -np.expm1(-p.s * xp)
    else:
        alpha = p.alpha
        t = xp / p.sigma
        if alpha >= 0.0:
            # upper tail ratio Q(alpha+t)/Q(alpha) through scaled erfc
            with np.errstate(under="ignore"):
                ratio = special.erfcx((alpha + t) / SQRT2) / special.erfcx(alpha / SQRT2)
                out = 1.0 - ratio * np.exp(-(alpha * t + 0.5 * t * t))
        else:
            log_tail = special.log_ndtr(-(alpha + t)) - special.log_ndtr(-alpha)
            out = -np.expm1(log_tail)
    out = np.clip(out, 0.0, 1.0)
    out = np.where(x > 0, out, 0.0)
    return out if out.ndim else float(out)


def _truncated_normal_excess(alpha: float, size: int, rng) -> np.ndarray:
    """Draws of W - alpha with W ~ N(0, 1) conditioned on W > alpha."""
    out = np.empty(size)
    filled = 0
    if alpha < 0.0:
        # plain rejection, acceptance Q(alpha) >= 1/2
        while filled < size:
            need = size - filled
            w = rng.standard_normal(2 * need + 16)
            w = w[w > alpha][:need] - alpha
            out[filled:filled + w.size] = w
            filled += w.size
        return out
    # translated-exponential proposal with the optimal rate
    root = math.sqrt(alpha * alpha + 4.0)
    lam = 0.5 * (alpha + root)
    gap = 2.0 / (root + alpha)  # lam - alpha, free of cancellation
    while filled < size:
        need = size - filled
        m = int(need * 1.35) + 16
        e = rng.exponential(1.0 / lam, m)
        u = rng.random(m)
        keep = e[u <= np.exp(-0.5 * (e - gap) ** 2)][:need]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def sample_tilted(p, rng, size: Optional[int] = None):
    """Exact draws from G(r, s). Returns a float when size is None."""
    p = _as_params(p)
    k = 1 if size is None else int(size)
    if p.r == 0.0:
        draws = rng.exponential(1.0 / p.s, k)
    else:
        draws = p.sigma * _truncated_normal_excess(p.alpha, k, rng)
    return float(draws[0]) if size is None else draws


# --- moment matching -------------------------------------------------------

B_MIN_MARGIN = 1e-4
_NEWTON_TOL = 1e-13
_MAX_HALVINGS = 60


def _theta(r, s):
    return tilted_moments(TiltedParams(r, s)).theta


def _bisect(fn, lo, hi, target, increasing, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = fn(mid) > target
        if above == increasing:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def homotopy_start(b: float) -> TiltedParams:
    """Starting point for the moment-matching Newton iteration.

    theta = E W^2 / (E W)^2 is scale free.  Along (r, 1) it falls from 2 (r = 0)
    to pi/2 (r -> inf); along G(1/(1-u), -2u/(1-u)) it falls from pi/2 (u = 0)
    to 1 (u -> 1).  Locate b on the right curve by bisection, then rescale so
    the mean is one.
    """
    if b >= 2.0:
        return TiltedParams(0.0, 1.0)
    if b >= THETA_HALF_GAUSSIAN:
        # theta(exp(t), 1) is decreasing in t
        t = _bisect(lambda t: _theta(math.exp(t), 1.0), -40.0, 40.0, b, increasing=False)
        base = TiltedParams(math.exp(t), 1.0)
    else:
        # u = 1 - exp(-t); theta decreasing in t
        def theta_u(t):
            one_minus_u = math.exp(-t)
            return _theta(1.0 / one_minus_u, -2.0 * (1.0 - one_minus_u) / one_minus_u)

        t = _bisect(theta_u, 0.0, 40.0, b, increasing=False)
        omu = math.exp(-t)
        base = TiltedParams(1.0 / omu, -2.0 * (1.0 - omu) / omu)
    mean = tilted_moments(base).mean
    return base.scaled(1.0 / mean)


def _residual(p: TiltedParams, b: float):
    mom = tilted_moments(p)
    return np.array([mom.m[0] - 1.0, mom.m[1] - b]), mom


def _jacobian(mom: TiltedMoments) -> np.ndarray:
    m1, m2, m3, m4 = mom.m
    # d/dr E[Y^k] = -(E Y^{k+2} - E Y^k E Y^2), d/ds E[Y^k] = -(E Y^{k+1} - E Y^k E Y)
    return -np.array([[m3 - m1 * m2, m2 - m1 * m1], [m4 - m2 * m2, m3 - m2 * m1]])


def newton_match(b: float, start: TiltedParams, max_iter: int = 100) -> TiltedParams:
    """Damped Newton on (E Y - 1, E Y^2 - b) over admissible (r, s).

    The start is first rescaled to unit mean; the family is closed under
    scaling, and without this far-off starts drift along r = 0.
    """
    p = _as_params(start)
    p = p.scaled(1.0 / tilted_moments(p).m[0])
    f, mom = _residual(p, b)
    norm = float(np.max(np.abs(f)))
    for _ in range(max_iter):
        if norm <= _NEWTON_TOL * max(1.0, b):
            return p
        try:
            step = np.linalg.solve(_jacobian(mom), -f)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError(f"singular Jacobian at {p}") from exc
        scale = 1.0
        for _ in range(_MAX_HALVINGS):
            # steps past r = 0 land on the boundary (admissible iff s > 0)
            r_new = max(p.r + scale * step[0], 0.0)
            s_new = p.s + scale * step[1]
            try:
                cand = TiltedParams(r_new, s_new)
                f_new, mom_new = _residual(cand, b)
            except (InadmissibleParamsError, OverflowError, ValueError, ZeroDivisionError):
                scale *= 0.5
                continue
            new_norm = float(np.max(np.abs(f_new)))
            if np.isfinite(new_norm) and new_norm < norm:
                p, f, mom, norm = cand, f_new, mom_new, new_norm
                break
            scale *= 0.5
        else:
            if norm <= 1e-10:
                return p
            raise NonConvergenceError(
                f"moment matching for b={b} stalled at {p} (residual {norm:.3e})"
            )
    if norm <= 1e-10:
        return p
    raise NonConvergenceError(f"moment matching for b={b} did not converge (residual {norm:.3e})")


def solve_params(b: float, start: Optional[TiltedParams] = None) -> TiltedParams:
    """The unique admissible (r, s) with E Y = 1 and E Y^2 = b, for 1 < b <= 2."""
    b = float(b)
    if not (1.0 < b <= 2.0):
        raise OutOfRangeError(
            f"moment matching needs 1 < b <= 2 (got b={b}); for b > 2 the limit law is Exp(1)"
        )
    if b < 1.0 + B_MIN_MARGIN:
        raise ConditioningError(
            f"b={b} is within {B_MIN_MARGIN} of 1; r would exceed ~1e8 and the match is ill-conditioned"
        )
    if start is None:
        start = homotopy_start(b)
    return newton_match(b, start)


def limit_params(b: float) -> TiltedParams:
    """Marginal limit law of the uniform distribution on K for fixed b > 1."""
    if b > 2.0:
        return TiltedParams(0.0, 1.0)
    return solve_params(b)
