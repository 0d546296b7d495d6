"""Built-in validation suite: exercise the pipeline against a synthetic sensor.

This is what ``rawnoise validate`` runs. Everything is seeded, sized to finish
in seconds, and reported as :class:`~rawnoise.validate.TestReport` entries.
"""
from __future__ import annotations

import numpy as np

from .augment import SnaConfig, augment_pair
from .frames import PackedImage, subtract_black
from .ptc import estimate_gain_ptc
from .rng import make_rng
from .shading import DarkFrameSet, calibrate_dark_profile, correct_frame
from .synth import SensorSpec, gaussian_fpn_maps, sample_poisson, simulate_dark_frame, simulate_flat_frame
from .tolerances import DEFAULT, Tolerances
from .validate import (
    TestReport,
    histogram_chi2_test,
    majority_verdict,
    moment_match_test,
    ptc_linearity_test,
    residual_mean_test,
)


def _small_spec(seed: int, read_sigma: float = 2.0) -> SensorSpec:
    rng = make_rng(seed, 0xFACE)
    slope, offset = gaussian_fpn_maps((64, 64), 2e-5, 0.02, rng, row_fraction=0.25)
    return SensorSpec(
        width=64,
        height=64,
        system_gain_k=4.0,
        read_sigma=read_sigma,
        fpn_slope=slope,
        fpn_offset=offset,
        ble_table={100: 0.1, 800: 0.3, 6400: 0.8},
        quantize=True,
    )


def _poisson_moments(seed: int, tol: Tolerances) -> list[TestReport]:
    reports = []
    for lam in (0.5, 5.0, 50.0, 5000.0):
        rng = make_rng(seed, 1, int(lam * 10))
        draws = sample_poisson(np.full(200_000, lam), rng, approx_threshold=None)
        r = moment_match_test(draws, lam, lam, rel_tol=tol.equiv_moment_rel)
        reports.append(TestReport(f"poisson_moments_lam{lam:g}", r.statistic, r.threshold, r.passed, r.sample_size, r.details))
    return reports


def _poisson_additivity(seed: int, tol: Tolerances) -> TestReport:
    # P(a) + P(b) must be distributed as P(a+b); checked by chi-square.
    a, b = 7.5, 18.25

    def one(i: int) -> TestReport:
        rng = make_rng(seed, 2, i)
        n = 100_000
        summed = sample_poisson(np.full(n, a), rng, None) + sample_poisson(np.full(n, b), rng, None)
        direct = sample_poisson(np.full(n, a + b), rng, None)
        return histogram_chi2_test(summed, direct, bins=tol.chi2_bins, alpha=tol.chi2_alpha)

    r = majority_verdict(one, runs=tol.chi2_runs)
    return TestReport("poisson_additivity", r.statistic, r.threshold, r.passed, r.sample_size, r.details)


def _ptc_roundtrip(seed: int, tol: Tolerances) -> list[TestReport]:
    # Bigger frame than the other checks: the temporal-variance estimate has
    # relative error ~sqrt(2/N) per level, so 64x64 would eat the whole gain
    # tolerance on its own.
    rng0 = make_rng(seed, 0xFACE + 1)
    slope, offset = gaussian_fpn_maps((256, 256), 2e-5, 0.02, rng0, row_fraction=0.25)
    spec = SensorSpec(
        width=256,
        height=256,
        system_gain_k=4.0,
        read_sigma=2.0,
        fpn_slope=slope,
        fpn_offset=offset,
        ble_table={800: 0.3},
        quantize=True,
    )
    rng = make_rng(seed, 3)
    pairs = []
    for rate in (50, 200, 800, 1600, 2400, 3200):
        pairs.append(
            (
                simulate_flat_frame(spec, 800, rate, rng),
                simulate_flat_frame(spec, 800, rate, rng),
            )
        )
    est = estimate_gain_ptc(pairs)
    gain_err = abs(est.system_gain_k - spec.system_gain_k) / spec.system_gain_k
    gain_report = TestReport(
        "ptc_gain_recovery",
        statistic=float(gain_err),
        threshold=tol.ptc_gain_rel,
        passed=bool(gain_err <= tol.ptc_gain_rel),
        sample_size=len(pairs),
        details={"estimated_k": est.system_gain_k, "true_k": spec.system_gain_k},
    )
    return [gain_report, ptc_linearity_test(est, min_r2=tol.ptc_min_r2)]


def _augment_moments(seed: int, tol: Tolerances) -> TestReport:
    spec = _small_spec(seed, read_sigma=0.0)
    meta = spec.meta_for(800)
    level = 200.0
    clean = PackedImage(
        meta,
        np.full((4, meta.height // 2, meta.width // 2), level + spec.black_level),
        quantized=True,
    )
    clean_sub = subtract_black(clean)
    rng = make_rng(seed, 4)
    # Pin gains near deterministic by a tiny sigma; expectation then has a
    # closed form for the increment alone.
    config = SnaConfig(mu=0.5, sigma=1e-9, apply_probability=1.0)
    deltas = []
    for _ in range(300):
        res = augment_pair(clean_sub, clean_sub, config, spec.system_gain_k, rng)
        deltas.append(res.noisy.channels - clean_sub.channels)
    deltas = np.stack(deltas).ravel()
    expected = 0.5 * level  # (gain - 1) * level with gain pinned at 1.5
    r = moment_match_test(deltas, expected, spec.system_gain_k * expected, rel_tol=tol.equiv_moment_rel)
    return TestReport("augment_increment_moments", r.statistic, r.threshold, r.passed, r.sample_size, r.details)


def _dsc_roundtrip(seed: int, tol: Tolerances) -> list[TestReport]:
    spec = _small_spec(seed)
    rng = make_rng(seed, 5)
    n_frames = 100
    sets = []
    for iso in spec.isos:
        frames = [simulate_dark_frame(spec, iso, rng) for _ in range(n_frames)]
        sets.append(DarkFrameSet(iso=iso, exposure_time=1.0 / 30.0, frames=frames))
    profile, _ = calibrate_dark_profile(sets, sensor_id="builtin")
    iso = spec.isos[-1]
    truth = spec.dark_shading(iso)
    recon = profile.fpn_slope * iso + profile.fpn_offset + profile.ble_table[iso]
    rmse = float(np.sqrt(((recon - truth) ** 2).mean()))
    rmse_report = TestReport(
        "dsc_reconstruction_rmse",
        statistic=rmse,
        threshold=tol.dsc_rmse_max,
        passed=bool(rmse < tol.dsc_rmse_max),
        sample_size=truth.size,
        details={"iso": iso, "frames_per_iso": n_frames},
    )
    corrected = (
        correct_frame(simulate_dark_frame(spec, iso, rng), profile) for _ in range(200)
    )
    # The per-pixel residual combines the profile's own reconstruction error
    # (~0.2 DN at this stack depth) with fresh-noise mean sd 2/sqrt(200);
    # 1.2 DN sits near 5 sigma of that mix.
    res_report = residual_mean_test(corrected, bound_dn=1.2, pixel_fraction=tol.residual_pixel_fraction)
    return [rmse_report, res_report]


def run_builtin_suite(seed: int = 0, tolerances: Tolerances = DEFAULT) -> list[TestReport]:
    reports: list[TestReport] = []
    reports.extend(_poisson_moments(seed, tolerances))
    reports.append(_poisson_additivity(seed, tolerances))
    reports.extend(_ptc_roundtrip(seed, tolerances))
    reports.append(_augment_moments(seed, tolerances))
    reports.extend(_dsc_roundtrip(seed, tolerances))
    return reports
