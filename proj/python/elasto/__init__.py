"""Python access to the elastography pipeline (simulation, DP, principal modes, refinement, metrics)."""

from ._elasto import (
    ElastoError,
    ModeBasis,
    __version__,
    coarse_estimate,
    dp_line,
    f1_score,
    learn_modes,
    load_modes,
    ncc,
    refine,
    run_cli,
    simulate,
    smooth_staircase,
    snr_cnr,
    strain,
)

__all__ = [
    "ElastoError",
    "ModeBasis",
    "__version__",
    "coarse_estimate",
    "dp_line",
    "f1_score",
    "learn_modes",
    "load_modes",
    "ncc",
    "refine",
    "run_cli",
    "simulate",
    "smooth_staircase",
    "snr_cnr",
    "strain",
]
