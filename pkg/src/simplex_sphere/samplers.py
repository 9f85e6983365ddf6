"""Samplers for the uniform distribution on K and the product law on K^eps.

* ``sample_exact``: psi of a standard Gaussian vector is uniform on the affine
  image of the sphere; rejecting non-positive points leaves the uniform law on K.
* ``sample_shell``: i.i.d. G(r, s) coordinates conditioned on the shell K^eps.
* ``sample_gibbs``: resample three coordinates at a time, uniformly on the
  positive part of their fiber circle (both sums held fixed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    EmptyFiberError,
    InfeasibleRejectionError,
    InternalStateError,
    SpecInvalidError,
)
from .geometry import (
    ManifoldSpec,
    ShellSpec,
    in_shell_mask,
    initial_point,
    on_k_mask,
    psi,
)
from .rng import as_generator
from .tilted import TiltedParams, sample_tilted

SAMPLER_IDS = ("exact", "shell", "gibbs")
# give up when the first PROBE_PROPOSALS proposals produce no acceptance
# (acceptance rate plausibly below 1e-6)
PROBE_PROPOSALS = 10**6
_CHUNK_VALUES = 1 << 21


@dataclass
class SampleBatch:
    points: np.ndarray
    spec: ManifoldSpec
    sampler_id: str
    seed: Optional[int] = None
    proposals: Optional[int] = None
    accepts: Optional[int] = None
    shell: Optional[ShellSpec] = None
    gibbs_sweeps: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sampler_id not in SAMPLER_IDS:
            raise ValueError(f"unknown sampler id {self.sampler_id!r}")
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    def __len__(self):
        return self.points.shape[0]

    @property
    def acceptance(self) -> Optional[float]:
        if not self.proposals:
            return None
        return self.accepts / self.proposals

    def validate(self, tol: Optional[float] = None) -> np.ndarray:
        """Boolean mask of points satisfying the batch's membership contract."""
        if self.sampler_id == "shell":
            return in_shell_mask(self.points, self.shell)
        return on_k_mask(self.points, self.spec, tol)


def merge_batches(batches: Sequence[SampleBatch]) -> SampleBatch:
    """Concatenate worker batches in the order given."""
    if not batches:
        raise ValueError("nothing to merge")
    first = batches[0]
    for b in batches[1:]:
        if (b.spec, b.sampler_id, b.shell) != (first.spec, first.sampler_id, first.shell):
            raise ValueError("cannot merge batches from different samplers or sets")

    def total(attr):
        vals = [getattr(b, attr) for b in batches]
        return None if any(v is None for v in vals) else sum(vals)

    return replace(
        first,
        points=np.concatenate([b.points for b in batches], axis=0),
        proposals=total("proposals"),
        accepts=total("accepts"),
        extra={},
    )


def _chunk_rows(n: int) -> int:
    return max(64, _CHUNK_VALUES // n)


def _rejection_loop(propose, accept, count, n, what):
    rows = []
    got = 0
    proposals = 0
    chunk = _chunk_rows(n)
    while got < count:
        cand = propose(chunk)
        ok = accept(cand)
        idx = np.flatnonzero(ok)
        need = count - got
        if idx.size >= need:
            # proposals are counted up to the last accepted row only
            proposals += int(idx[need - 1]) + 1
            rows.append(cand[idx[:need]])
            got = count
            break
        proposals += chunk
        if idx.size:
            rows.append(cand[idx])
            got += idx.size
        if got == 0 and proposals >= PROBE_PROPOSALS:
            raise InfeasibleRejectionError(
                f"{what}: no acceptance in the first {proposals} proposals "
                "(acceptance below ~1e-6); use the gibbs sampler instead",
                proposals=proposals,
                accepts=0,
            )
    pts = np.concatenate(rows, axis=0) if rows else np.empty((0, n))
    return pts, proposals


def sample_exact(spec: ManifoldSpec, count: int, rng) -> SampleBatch:
    """Exactly uniform points on K by Gaussian projection and rejection."""
    rng, seed = as_generator(rng)
    count = int(count)
    if spec.trivial:
        pts = np.ones((count, spec.n))
        return SampleBatch(pts, spec, "exact", seed=seed, proposals=0, accepts=count)

    def propose(rows):
        return psi(rng.standard_normal((rows, spec.n)), spec)

    def accept(cand):
        return cand.min(axis=1) > 0.0

    pts, proposals = _rejection_loop(propose, accept, count, spec.n, "exact rejection")
    return SampleBatch(pts, spec, "exact", seed=seed, proposals=proposals, accepts=len(pts))


def sample_shell(shell: ShellSpec, p: TiltedParams, count: int, rng) -> SampleBatch:
    """i.i.d. G(r, s) vectors conditioned to lie in K^eps."""
    rng, seed = as_generator(rng)
    n = shell.n

    def propose(rows):
        return sample_tilted(p, rng, rows * n).reshape(rows, n)

    pts, proposals = _rejection_loop(
        propose, lambda c: in_shell_mask(c, shell), int(count), n, "shell rejection"
    )
    return SampleBatch(
        pts, shell.manifold, "shell", seed=seed, proposals=proposals,
        accepts=len(pts), shell=shell, extra={"r": p.r, "s": p.s},
    )


# --- fiber geometry ----------------------------------------------------------

def _fiber_frame(s3: float, q3: float):
    if not s3 > 0:
        raise EmptyFiberError(f"fiber needs a positive sum, got s3={s3}")
    rho2 = q3 - s3 * s3 / 3.0
    if rho2 < -1e-12 * max(1.0, q3):
        raise EmptyFiberError(f"q3={q3} < s3^2/3={s3 * s3 / 3.0}: no real fiber")
    rho = math.sqrt(max(rho2, 0.0))
    return s3 / 3.0, rho


def fiber_point(s3: float, q3: float, theta):
    """Point(s) of the fiber circle at angle theta, shape (..., 3)."""
    c, rho = _fiber_frame(s3, q3)
    theta = np.asarray(theta, dtype=float)[..., None]
    return c + rho * _kernels.AMP * np.cos(theta - _kernels.OFFSETS)


def fiber_angle(y):
    """Inverse of :func:`fiber_point` (angle in [0, 2 pi))."""
    y = np.asarray(y, dtype=float)
    dev = y - y.mean(axis=-1, keepdims=True)
    e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    e2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    return np.mod(np.arctan2(dev @ e2, dev @ e1), 2 * math.pi)


def arc_feasible_set(s3: float, q3: float) -> List[tuple]:
    """Angle intervals of the fiber {sum = s3, sum sq = q3} where all y_m > 0.

    The fiber is y(theta)_m = s3/3 + rho sqrt(2/3) cos(theta - o_m) with
    o = (pi/6, 5pi/6, 3pi/2).  y_m > 0 iff cos(theta - o_m) > -tau with
    tau = s3 / (sqrt(6) rho), so each coordinate removes an arc of half-width
    arccos(tau) around o_m + pi.
    """
    c, rho = _fiber_frame(s3, q3)
    two_pi = 2.0 * math.pi
    if rho == 0.0:
        return [(0.0, two_pi)]
    tau = c / (rho * _kernels.AMP)
    if tau >= 1.0:
        return [(0.0, two_pi)]
    if tau <= 0.5:
        return []
    half = math.pi / 3.0 - math.acos(tau)
    out = []
    for o in _kernels.OFFSETS:
        lo, hi = o - half, o + half
        if lo < 0.0:
            out += [(0.0, hi), (lo + two_pi, two_pi)]
        elif hi > two_pi:
            out += [(0.0, hi - two_pi), (lo, two_pi)]
        else:
            out.append((lo, hi))
    return sorted(out)


# --- Gibbs ---------------------------------------------------------------------

DEFAULT_BURN_IN = 1000
_U_ROWS_PER_BLOCK = 1 << 18


def gibbs_single_steps(x0, steps: int, rng) -> np.ndarray:
    """States after each of ``steps`` moves from x0 (no reprojection)."""
    rng, _ = as_generator(rng)
    x = np.array(x0, dtype=float)
    out = np.empty((steps, x.size))
    for t in range(steps):
        u = rng.random((1, 4))
        status = _kernels.gibbs_steps(x, u, _kernels.OFFSETS)
        if status != _kernels.OK:
            raise InternalStateError(f"Gibbs move failed with status {status}")
        out[t] = x
    return out


class GibbsChain:
    """Constraint-preserving Gibbs chain on K that can be advanced repeatedly.

    One sweep is n three-coordinate moves followed by reprojection through psi.
    """

    def __init__(self, spec: ManifoldSpec, rng=0, x0=None):
        if spec.n < 3:
            raise SpecInvalidError("the Gibbs move needs n >= 3")
        if spec.trivial:
            raise SpecInvalidError("the Gibbs sampler needs b > 1")
        self.spec = spec
        self.rng, self.seed = as_generator(rng)
        self.x = initial_point(spec) if x0 is None else np.array(x0, dtype=float)
        self.sweeps_done = 0

    def _advance(self, rows, thin, dest):
        n = self.spec.n
        per_row = thin * n
        block = max(1, _U_ROWS_PER_BLOCK // per_row)
        done = 0
        while done < rows:
            m = min(block, rows - done)
            u = self.rng.random((m * per_row, 4))
            status = _kernels.run_chain(self.x, u, thin, self.spec.b_prime,
                                        dest[done:done + m], _kernels.OFFSETS)
            if status != _kernels.OK:
                kind = "empty arc" if status == _kernels.EMPTY_ARC else "non-positive coordinate"
                raise InternalStateError(f"Gibbs state left the positive orthant ({kind})")
            done += m
        self.sweeps_done += rows * thin

    def burn(self, sweeps: int) -> None:
        scratch = np.empty((1, self.spec.n))
        left = int(sweeps)
        chunk = max(1, _U_ROWS_PER_BLOCK // self.spec.n)
        while left > 0:
            k = min(chunk, left)
            self._advance(1, k, scratch)
            left -= k

    def sample(self, count: int, sweeps: int) -> np.ndarray:
        out = np.empty((int(count), self.spec.n))
        self._advance(int(count), int(sweeps), out)
        return out


def sample_gibbs(spec: ManifoldSpec, count: int, sweeps: int = 10,
                 burn_in: int = DEFAULT_BURN_IN, rng=0, x0=None) -> SampleBatch:
    """Points of a Gibbs chain on K: ``burn_in`` sweeps, then one point every
    ``sweeps`` sweeps."""
    chain = GibbsChain(spec, rng, x0)
    chain.burn(burn_in)
    pts = chain.sample(count, sweeps)
    return SampleBatch(pts, spec, "gibbs", seed=chain.seed, proposals=int(count),
                       accepts=int(count), gibbs_sweeps=int(sweeps),
                       extra={"burn_in": int(burn_in)})


# --- file format -----------------------------------------------------------

MAGIC = "#simplex-sphere"
VERSION = "v1"


def format_header(batch: SampleBatch) -> str:
    eps = repr(batch.shell.eps) if batch.shell is not None else "-"
    seed = "-" if batch.seed is None else str(batch.seed)
    return (f"{MAGIC} {VERSION} sampler={batch.sampler_id} n={batch.spec.n} "
            f"b={batch.spec.b!r} seed={seed} eps={eps}")


def write_batch(path, batch: SampleBatch) -> None:
    lines = [format_header(batch)]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in batch.points]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_batch(path, check: bool = True) -> SampleBatch:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 2 or header[0] != MAGIC or header[1] != VERSION:
            raise ValueError(f"{path}: not a {MAGIC} {VERSION} batch file")
        meta = dict(tok.split("=", 1) for tok in header[2:])
        pts = np.loadtxt(fh, ndmin=2)
    n = int(meta["n"])
    b = float(meta["b"])
    spec = ManifoldSpec(n, b)
    shell = None if meta.get("eps", "-") == "-" else ShellSpec(n, b, float(meta["eps"]))
    seed = None if meta.get("seed", "-") == "-" else int(meta["seed"])
    if pts.size == 0:
        pts = np.empty((0, n))
    batch = SampleBatch(pts, spec, meta["sampler"], seed=seed, shell=shell)
    if check and len(batch) and not batch.validate().all():
        raise ValueError(f"{path}: some points violate the {batch.sampler_id} membership contract")
    return batch
