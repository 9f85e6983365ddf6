"""Sampling and verification tools for the uniform distribution on

    K = {x in R_+^n : sum x_i = n, sum x_i^2 = n b}.
"""
__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    ManifoldSpec,
    Membership,
    ShellSpec,
    VectorStats,
    membership,
    phi,
    psi,
    stats,
)
from .tilted import (  # noqa: E402
    TiltedMoments,
    TiltedParams,
    limit_params,
    sample_tilted,
    solve_params,
    tilted_cdf,
    tilted_moments,
)
from .samplers import (  # noqa: E402
    GibbsChain,
    SampleBatch,
    arc_feasible_set,
    read_batch,
    sample_exact,
    sample_gibbs,
    sample_shell,
    write_batch,
)
from .rng import seed_stream  # noqa: E402

__all__ = [
    "ManifoldSpec", "Membership", "ShellSpec", "VectorStats", "membership", "phi", "psi",
    "stats", "TiltedMoments", "TiltedParams", "limit_params", "sample_tilted",
    "solve_params", "tilted_cdf", "tilted_moments", "GibbsChain", "SampleBatch",
    "arc_feasible_set", "read_batch", "sample_exact", "sample_gibbs", "sample_shell",
    "write_batch", "seed_stream",
]
