"""Photon-transfer calibration of the system gain.

Under the Poisson-Gaussian model the temporal variance of a pixel is linear
in its mean signal: var = K * (mean - black) + read_var, with slope equal to
the system gain K (DN per electron). Each flat-field pair at one exposure
level contributes one (mean, variance) point; using the per-pixel difference
of the two frames cancels the scene and any fixed-pattern structure, and
var(a - b) / 2 estimates the temporal variance alone. A straight line is
then fit through the points by least squares.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CalibrationFailedError, InsufficientDataError, PairingError, RankError
from .frames import RawFrame, black_map


@dataclass(frozen=True)
class PTCEstimate:
    system_gain_k: float
    read_variance: float
    fit_r2: float
    samples: tuple[tuple[float, float], ...]  # (mean DN above black, temporal variance DN^2)

    def to_dict(self) -> dict:
        return {
            "system_gain_k": self.system_gain_k,
            "read_variance": self.read_variance,
            "fit_r2": self.fit_r2,
            "samples": [list(s) for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PTCEstimate":
        return cls(
            system_gain_k=float(d["system_gain_k"]),
            read_variance=float(d["read_variance"]),
            fit_r2=float(d["fit_r2"]),
            samples=tuple((float(m), float(v)) for m, v in d["samples"]),
        )


def pair_statistics(a: RawFrame, b: RawFrame) -> tuple[float, float]:
    """(mean signal above black, temporal variance) for one same-scene pair."""
    if a.meta != b.meta:
        raise PairingError("flat pair metadata differs")
    black = black_map(a.meta)
    mean_dn = float(((a.data - black) + (b.data - black)).mean() / 2.0)
    diff = a.data - b.data
    var = float(diff.var(ddof=1) / 2.0)
    return mean_dn, var


def estimate_gain_ptc(flat_pairs: Sequence[tuple[RawFrame, RawFrame]]) -> PTCEstimate:
    """Fit the photon-transfer line over a set of same-scene flat pairs."""
    if len(flat_pairs) < 3:
        raise InsufficientDataError(f"need at least 3 exposure levels, got {len(flat_pairs)}")
    points = np.array([pair_statistics(a, b) for a, b in flat_pairs], dtype=np.float64)
    means, variances = points[:, 0], points[:, 1]
    if np.ptp(means) <= 0:
        raise RankError("all exposure levels have the same mean signal")
    slope, intercept = np.polyfit(means, variances, 1)
    if slope <= 0:
        raise CalibrationFailedError(f"photon-transfer slope {slope:.4g} is not positive")
    fitted = slope * means + intercept
    ss_res = float(((variances - fitted) ** 2).sum())
    ss_tot = float(((variances - variances.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PTCEstimate(
        system_gain_k=float(slope),
        read_variance=float(intercept),
        fit_r2=r2,
        samples=tuple((float(m), float(v)) for m, v in points),
    )
