"""Shot-noise-aware brightness augmentation for paired raw images.

Plain brightness scaling breaks a real clean/noisy pair: multiplying the
noisy frame by g scales the shot-noise variance by g^2, but a real exposure
at the brighter level would have variance proportional to g. This module
brightens both frames consistently with sensor physics instead.

Per invocation (all draws from one caller-supplied generator, in this
order): an apply/skip Bernoulli, then a shared green gain

    eps_g ~ N(mu + 1, sigma)            Gain_g = clip(eps_g, 1, 4*mu + 1)
    eps_r ~ N(1, sigma)                 Gain_r = clip(Gain_g * eps_r, 1, 4*mu + 1)
    eps_b ~ N(1, sigma)                 Gain_b = clip(Gain_g * eps_b, 1, 4*mu + 1)

so red and blue wander around the green gain (a white-balance jitter) and
all gains stay in [1, 4*mu + 1]. The clean increment is deterministic,
delta_clean = (gain - 1) * clean; the noisy frame gains the same expected
signal plus fresh shot noise for it:

    delta_noisy = K * Poisson(delta_clean / K)

Adding an independent Poisson increment to an existing Poisson signal gives
exactly the statistics of a longer exposure, so the augmented pair is
distributed like a real capture of the brighter scene; read noise is already
in the noisy frame and is brightness-independent, so it carries over.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, PairingError
from .frames import PackedImage
from .synth import sample_poisson

SATURATION_POLICIES = ("clip_to_white", "reject_patch")

# Above this clipped fraction the augmented pair is flagged in the result so
# pipelines can drop it from training batches.
CLIP_FLAG_FRACTION = 0.01


@dataclass(frozen=True)
class GainTriple:
    """Per-channel brightness gains; greens share one gain."""

    gain_r: float
    gain_g: float
    gain_b: float

    def __post_init__(self):
        if min(self.gain_r, self.gain_g, self.gain_b) < 1.0:
            raise DomainError("gains must be >= 1")

    def per_plane(self) -> np.ndarray:
        """Gains broadcast to the packed plane order (R, G1, G2, B)."""
        return np.array([self.gain_r, self.gain_g, self.gain_g, self.gain_b], dtype=np.float64)


@dataclass(frozen=True)
class SnaConfig:
    mu: float = 0.5
    sigma: float = 0.25
    apply_probability: float = 0.75
    saturation_policy: str = "clip_to_white"

    def __post_init__(self):
        if not self.mu > 0 or not self.sigma > 0:
            raise DomainError("mu and sigma must be positive")
        if not 0.0 <= self.apply_probability <= 1.0:
            raise DomainError("apply_probability must be in [0, 1]")
        if self.saturation_policy not in SATURATION_POLICIES:
            raise DomainError(f"saturation_policy must be one of {SATURATION_POLICIES}")

    @property
    def gain_ceiling(self) -> float:
        return 4.0 * self.mu + 1.0


def sample_gains(config: SnaConfig, rng: np.random.Generator) -> GainTriple:
    """Draw one gain triple; see the module docstring for the scheme."""
    hi = config.gain_ceiling
    eps_g = rng.normal(config.mu + 1.0, config.sigma)
    eps_r = rng.normal(1.0, config.sigma)
    eps_b = rng.normal(1.0, config.sigma)
    gain_g = float(np.clip(eps_g, 1.0, hi))
    gain_r = float(np.clip(gain_g * eps_r, 1.0, hi))
    gain_b = float(np.clip(gain_g * eps_b, 1.0, hi))
    return GainTriple(gain_r=gain_r, gain_g=gain_g, gain_b=gain_b)


def shot_increments(
    clean: PackedImage,
    gains: GainTriple,
    system_gain_k: float,
    rng: np.random.Generator,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """(delta_clean, delta_noisy) plane stacks for one gain triple.

    ``clean`` must be black-subtracted and nonnegative; ``system_gain_k`` is
    in DN per electron. delta_clean is exact; delta_noisy is a fresh shot
    noise realization with mean delta_clean (exact Poisson draws).
    """
    if not system_gain_k > 0:
        raise DomainError("system_gain_k must be positive")
    if clean.channels.size and clean.channels.min() < 0:
        raise DomainError("clean image must be nonnegative (black-subtracted)")
    g = gains.per_plane()[:, None, None]
    delta_clean = (g - 1.0) * clean.channels
    drawn = sample_poisson(delta_clean / system_gain_k, rng, approx_threshold=None, threads=threads)
    delta_noisy = system_gain_k * drawn.astype(np.float64)
    return delta_clean, delta_noisy


@dataclass(frozen=True)
class AugmentResult:
    clean: PackedImage
    noisy: PackedImage = field(repr=False)
    applied: bool
    rejected: bool
    gains: Optional[GainTriple]
    clip_fraction: float
    flagged: bool

    def to_telemetry(self) -> dict:
        return {
            "applied": self.applied,
            "rejected": self.rejected,
            "gains": None if self.gains is None else [self.gains.gain_r, self.gains.gain_g, self.gains.gain_b],
            "clip_fraction": self.clip_fraction,
            "flagged": self.flagged,
        }


def augment_pair(
    clean: PackedImage,
    noisy: PackedImage,
    config: SnaConfig,
    system_gain_k: float,
    rng: np.random.Generator,
    threads: int = 1,
) -> AugmentResult:
    """Brighten a registered clean/noisy pair with physically consistent noise.

    Inputs must be packed, black-subtracted (metadata black level all zero)
    and share identical metadata. With probability 1 - apply_probability the
    pair passes through untouched. Values pushed past white_level are either
    clipped in both outputs or, under the ``reject_patch`` policy, cause the
    original pair to be returned with ``rejected=True``. The clipped (or
    would-be clipped) pixel fraction is reported either way.
    """
    if clean.meta != noisy.meta:
        raise PairingError("clean/noisy metadata differs")
    if clean.channels.shape != noisy.channels.shape:
        raise PairingError("clean/noisy shapes differ")
    if any(b != 0.0 for b in clean.meta.black_level):
        raise DomainError("augmentation expects black-subtracted inputs (black_level 0)")
    if clean.channels.size and clean.channels.min() < 0:
        raise DomainError("clean image must be nonnegative")

    if rng.uniform() >= config.apply_probability:
        return AugmentResult(clean, noisy, False, False, None, 0.0, False)

    gains = sample_gains(config, rng)
    delta_clean, delta_noisy = shot_increments(clean, gains, system_gain_k, rng, threads=threads)
    out_clean = clean.channels + delta_clean
    out_noisy = noisy.channels + delta_noisy

    ceiling = clean.meta.white_level
    over = (out_clean > ceiling) | (out_noisy > ceiling)
    clip_fraction = float(over.mean()) if over.size else 0.0

    if clip_fraction > 0.0 and config.saturation_policy == "reject_patch":
        return AugmentResult(clean, noisy, False, True, gains, clip_fraction, clip_fraction > CLIP_FLAG_FRACTION)

    if clip_fraction > 0.0:
        np.minimum(out_clean, ceiling, out=out_clean)
        np.minimum(out_noisy, ceiling, out=out_noisy)

    return AugmentResult(
        clean.with_channels(out_clean, quantized=False),
        noisy.with_channels(out_noisy, quantized=False),
        True,
        False,
        gains,
        clip_fraction,
        clip_fraction > CLIP_FLAG_FRACTION,
    )
