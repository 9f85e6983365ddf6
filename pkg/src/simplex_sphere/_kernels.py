"""Compiled inner loops for the three-coordinate Gibbs move."""
import math

import numpy as np
from numba import njit

THIRD_PI = math.pi / 3.0
AMP = math.sqrt(2.0 / 3.0)
# angle at which coordinate m of the fiber circle is largest
OFFSETS = np.array([math.pi / 6.0, 5.0 * math.pi / 6.0, 1.5 * math.pi])

OK = 0
EMPTY_ARC = 1
NONPOSITIVE = 2


@njit(cache=True)
def _pick_triple(n, u0, u1, u2):
    i = int(u0 * n)
    j = int(u1 * (n - 1))
    if j >= i:
        j += 1
    lo = min(i, j)
    hi = max(i, j)
    k = int(u2 * (n - 2))
    if k >= lo:
        k += 1
    if k >= hi:
        k += 1
    return i, j, k


@njit(cache=True)
def _resample_triple(x, i, j, k, v, offsets):
    """Replace (x_i, x_j, x_k) by a uniform point of its positive fiber arc."""
    s3 = x[i] + x[j] + x[k]
    c = s3 / 3.0
    di = x[i] - c
    dj = x[j] - c
    dk = x[k] - c
    rho2 = di * di + dj * dj + dk * dk
    if rho2 <= 0.0:
        return OK
    amp = math.sqrt(rho2) * AMP
    tau = c / amp
    if tau >= 1.0:
        half = THIRD_PI
    elif tau <= 0.5:
        return EMPTY_ARC
    else:
        half = THIRD_PI - math.acos(tau)
    t = 3.0 * v
    arc = min(int(t), 2)
    theta = offsets[arc] + (2.0 * (t - arc) - 1.0) * half
    yi = c + amp * math.cos(theta - offsets[0])
    yj = c + amp * math.cos(theta - offsets[1])
    yk = c + amp * math.cos(theta - offsets[2])
    if yi <= 0.0 or yj <= 0.0 or yk <= 0.0:
        return NONPOSITIVE
    x[i] = yi
    x[j] = yj
    x[k] = yk
    return OK


@njit(cache=True)
def gibbs_steps(x, u, offsets):
    """Apply len(u) single moves in place; u rows hold four uniforms each."""
    n = x.shape[0]
    for t in range(u.shape[0]):
        i, j, k = _pick_triple(n, u[t, 0], u[t, 1], u[t, 2])
        status = _resample_triple(x, i, j, k, u[t, 3], offsets)
        if status != OK:
            return status
    return OK


@njit(cache=True)
def reproject(x, b_prime):
    n = x.shape[0]
    mu = 0.0
    for i in range(n):
        mu += x[i]
    mu /= n
    var = 0.0
    for i in range(n):
        var += (x[i] - mu) ** 2
    sigma = math.sqrt(var / n)
    for i in range(n):
        x[i] = b_prime * (x[i] - mu) / sigma + 1.0
    for i in range(n):
        if x[i] <= 0.0:
            return NONPOSITIVE
    return OK


@njit(cache=True)
def run_chain(x, u, thin, b_prime, out, offsets):
    """Advance ``thin`` sweeps per output row, reprojecting after every sweep.

    ``u`` supplies out.shape[0] * thin * n rows of uniforms.
    """
    n = x.shape[0]
    t = 0
    for r in range(out.shape[0]):
        for _ in range(thin):
            status = gibbs_steps(x, u[t:t + n], offsets)
            t += n
            if status != OK:
                return status
            status = reproject(x, b_prime)
            if status != OK:
                return status
        out[r, :] = x
    return OK
