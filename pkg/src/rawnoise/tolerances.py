"""Frozen numeric tolerances for the statistical acceptance checks.

Single source of truth: the acceptance suite and the CLI validator both read
from :data:`DEFAULT`. Bump :data:`TOLERANCES_VERSION` whenever a bound
changes so reports stay comparable across runs.
"""
from __future__ import annotations

from dataclasses import dataclass

TOLERANCES_VERSION = "1"


@dataclass(frozen=True)
class Tolerances:
    # photon transfer
    ptc_gain_rel: float = 0.02
    ptc_min_r2: float = 0.999

    # augmentation moment identity
    sna_mean_rel: float = 0.01
    sna_var_rel: float = 0.03

    # distribution equivalence
    chi2_alpha: float = 0.01
    chi2_bins: int = 32
    chi2_runs: int = 3
    equiv_moment_rel: float = 0.03

    # dark-shading calibration round trip. The correlation floors come from
    # the read-noise limit of the averaged stacks: with 400 frames of sigma 5
    # the slope estimator's own noise caps corr(slope) near 0.89 for the
    # default synthetic sensor, and no estimator can beat it on that data.
    dsc_corr_slope_min: float = 0.88
    dsc_corr_offset_min: float = 0.99
    dsc_rmse_max: float = 0.3

    # residual-mean test
    residual_bound_dn: float = 0.1
    residual_pixel_fraction: float = 0.999


DEFAULT = Tolerances()
