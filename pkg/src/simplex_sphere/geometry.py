"""Vector statistics, the normalizing maps and membership tests for

    K   = {x > 0 : sum x = n, sum x^2 = n b}
    K^e = {x > 0 : e < mean - 1 < 2e, e < mean_sq - b < b e}

Array functions act on the last axis, so a 2-D array is treated as a stack of
points (one per row).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SpecInvalidError

# relative threshold below which a vector counts as constant (phi -> 0)
CONSTANT_RTOL = 1e-12
# per-unit-n tolerance on the two constraint sums
MEMBERSHIP_RTOL = 1e-9


@dataclass(frozen=True)
class ManifoldSpec:
    n: int
    b: float
    b_prime: float = field(init=False)
    d: float = field(init=False)
    q: Optional[float] = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise SpecInvalidError(f"n must be an integer >= 2, got {self.n!r}")
        if not (1.0 <= self.b < self.n):
            raise SpecInvalidError(
                f"K is empty unless 1 <= b < n (got n={self.n}, b={self.b})"
            )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "b", float(self.b))
        bp = math.sqrt(self.b - 1.0)
        object.__setattr__(self, "b_prime", bp)
        object.__setattr__(self, "d", 1.0 / bp if bp > 0 else math.inf)
        object.__setattr__(self, "q", math.sqrt(self.b - 2.0) if self.b > 2 else None)

    @property
    def trivial(self) -> bool:
        """b == 1: K is the single point (1, ..., 1)."""
        return self.b == 1.0


@dataclass(frozen=True)
class ShellSpec:
    n: int
    b: float
    eps: float

    def __post_init__(self):
        ManifoldSpec(self.n, self.b)
        if not (0.0 < self.eps < 0.5):
            raise SpecInvalidError(f"shell thickness must satisfy 0 < eps < 1/2, got {self.eps}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def manifold(self) -> ManifoldSpec:
        return ManifoldSpec(self.n, self.b)

    @property
    def mean_bounds(self):
        return 1.0 + self.eps, 1.0 + 2.0 * self.eps

    @property
    def mean_sq_bounds(self):
        return self.b + self.eps, self.b + self.b * self.eps


@dataclass(frozen=True)
class VectorStats:
    mu: float
    mu2: float
    sigma: float
    min_coord: float


class Membership(enum.Enum):
    ON_K = "on_K"
    IN_SHELL = "in_shell"
    OUTSIDE = "outside"


def stats(x) -> VectorStats:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("stats expects a non-empty 1-D vector")
    mu = float(x.mean())
    mu2 = float(np.mean(x * x))
    # two-pass variance: mu2 - mu^2 cancels badly when b is close to 1
    sigma = math.sqrt(max(0.0, float(np.mean((x - mu) ** 2))))
    return VectorStats(mu=mu, mu2=mu2, sigma=sigma, min_coord=float(x.min()))


def _center_scale(x):
    mu = x.mean(axis=-1, keepdims=True)
    dev = x - mu
    sigma = np.sqrt(np.mean(dev * dev, axis=-1, keepdims=True))
    return mu, dev, sigma


def phi(x):
    """Center and scale x to mean 0 and standard deviation 1.

    Constant vectors (sigma < 1e-12 * (1 + |mean|)) map to the zero vector.
    Accepts a single point or a stack of points.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 0:
        raise ValueError("phi expects non-empty vectors")
    mu, dev, sigma = _center_scale(x)
    flat = sigma < CONSTANT_RTOL * (1.0 + np.abs(mu))
    safe = np.where(flat, 1.0, sigma)
    return np.where(flat, 0.0, dev / safe)


def psi(x, spec):
    """b' * phi(x) + 1: maps any off-diagonal vector onto {mean 1, mean_sq b}.

    ``spec`` may be a ManifoldSpec or a bare b >= 1 (the map itself needs no
    b < n, so boundary cases such as n = b = 2 stay expressible).
    """
    if isinstance(spec, ManifoldSpec):
        b_prime = spec.b_prime
    else:
        if not spec >= 1.0:
            raise SpecInvalidError(f"psi needs b >= 1, got {spec!r}")
        b_prime = math.sqrt(spec - 1.0)
    return b_prime * phi(x) + 1.0


def affine_l(x, spec: ManifoldSpec):
    """The affine map y -> b' y + 1 that carries the centered sphere onto K."""
    return spec.b_prime * np.asarray(x, dtype=float) + 1.0


def affine_l_inv(x, spec: ManifoldSpec):
    return spec.d * (np.asarray(x, dtype=float) - 1.0)


def default_tol(n: int) -> float:
    return MEMBERSHIP_RTOL * n


def on_k_mask(points, spec: ManifoldSpec, tol: Optional[float] = None):
    """Row-wise test of the K constraints; tol bounds |sum - n| and |sum sq - n b|."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tol = default_tol(spec.n) if tol is None else tol
    s1 = pts.sum(axis=1)
    s2 = np.einsum("ij,ij->i", pts, pts)
    return (
        (pts.min(axis=1) > 0)
        & (np.abs(s1 - spec.n) <= tol)
        & (np.abs(s2 - spec.n * spec.b) <= tol)
    )


def in_shell_mask(points, shell: ShellSpec):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    mu = pts.sum(axis=1) / n
    mu2 = np.einsum("ij,ij->i", pts, pts) / n
    lo1, hi1 = shell.mean_bounds
    lo2, hi2 = shell.mean_sq_bounds
    return (pts.min(axis=1) > 0) & (mu > lo1) & (mu < hi1) & (mu2 > lo2) & (mu2 < hi2)


def membership(x, spec: ManifoldSpec, shell: Optional[ShellSpec] = None,
               tol: Optional[float] = None) -> Membership:
    """Classify a point as on K, inside the shell K^eps, or outside both.

    ``tol`` bounds the deviation of the two constraint sums (sum x and
    sum x^2); it defaults to 1e-9 * n since both sums grow with n.
    """
    if tol is not None and tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != spec.n:
        raise ValueError(f"expected a vector of length {spec.n}")
    if on_k_mask(x, spec, tol)[0]:
        return Membership.ON_K
    if shell is not None and in_shell_mask(x, shell)[0]:
        return Membership.IN_SHELL
    return Membership.OUTSIDE


def initial_point(spec: ManifoldSpec) -> np.ndarray:
    """Deterministic point of K with one large coordinate and n-1 equal ones."""
    n, b = spec.n, spec.b
    t = 1.0 - math.sqrt((b - 1.0) / (n - 1.0))
    x = np.full(n, t)
    x[0] = 1.0 + math.sqrt((b - 1.0) * (n - 1.0))
    return x


def random_sum_preserving_rotation(n: int, rng) -> np.ndarray:
    """Random orthogonal A with A @ 1 = 1 (rotation of the sum-zero subspace)."""
    ones = np.ones((n, 1)) / math.sqrt(n)
    g = rng.standard_normal((n, n - 1))
    g -= ones @ (ones.T @ g)
    basis, _ = np.linalg.qr(g)
    h = rng.standard_normal((n - 1, n - 1))
    rot, r = np.linalg.qr(h)
    rot = rot * np.sign(np.diag(r))
    return ones @ ones.T + basis @ rot @ basis.T
