"""Full-scale property suite against the synthetic-sensor oracle.

Each test exercises the public API at working resolution with ground truth
known by construction and prints one [PASS]/[FAIL] summary line, so a plain
pytest run doubles as an acceptance report. All numeric bounds come from the
frozen table in rawnoise.tolerances; tests never loosen them locally, and the
stricter-than-attainable residual-mean bound is allowed to fail rather than
being widened to fit (see that test's comment).
"""

import time
from typing import NamedTuple

import numpy as np
import pytest

from rawnoise import (
    CalibrationProfile,
    GainTriple,
    PackedImage,
    RawFrame,
    SensorSpec,
    SnaConfig,
    augment_pair,
    correct_frame,
    estimate_gain_ptc,
    fit_dark_shading,
    gaussian_fpn_maps,
    histogram_chi2_test,
    majority_verdict,
    make_rng,
    moment_match_test,
    pack_bayer,
    ptc_linearity_test,
    read_container,
    reconstruct_dark_shading,
    residual_mean_test,
    save_sensor_spec,
    simulate_dark_frame,
    simulate_flat_frame,
    shot_increments,
    subtract_black,
    synthesize_pg,
    unpack_bayer,
    write_container,
)
from rawnoise.cli import main
from rawnoise.tolerances import DEFAULT as TOL

from conftest import make_meta, random_quantized_frame

SEED = 20260814


def _criterion(name: str, passed: bool, detail: str) -> None:
    # Lands in captured stdout; run pytest with -rA (or -s) to see the lines
    # for passing tests as well as failing ones.
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(a.ravel(), b.ravel())[0, 1])


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(a))))


# ---------------------------------------------------------------------------
# photon transfer


def test_ptc_recovers_system_gain_on_simulated_flats():
    t0 = time.perf_counter()
    size, k_true = 256, 2.0
    zeros = np.zeros((size, size))
    spec = SensorSpec(
        width=size,
        height=size,
        system_gain_k=k_true,
        read_sigma=2.0,
        fpn_slope=zeros,
        fpn_offset=zeros,
        ble_table={800: 0.0},
    )
    full_well_e = (spec.white_level - spec.black_level) / k_true
    rates = np.linspace(0.01, 0.50, 20) * full_well_e
    pairs = []
    for i, rate in enumerate(rates):
        a = simulate_flat_frame(spec, 800, rate, make_rng(SEED, 10, i, 0))
        b = simulate_flat_frame(spec, 800, rate, make_rng(SEED, 10, i, 1))
        pairs.append((a, b))
    est = estimate_gain_ptc(pairs)
    linearity = ptc_linearity_test(est, min_r2=TOL.ptc_min_r2)
    rel_err = abs(est.system_gain_k - k_true) / k_true
    elapsed = time.perf_counter() - t0
    ok = rel_err <= TOL.ptc_gain_rel and linearity.passed and elapsed < 10.0
    _criterion(
        "ptc_gain_recovery",
        ok,
        f"K={est.system_gain_k:.4f} DN/e- (rel err {rel_err:.3%}), r2={est.fit_r2:.6f}, {elapsed:.1f}s",
    )
    assert rel_err <= TOL.ptc_gain_rel
    assert linearity.passed
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# shot-noise augmentation: increment moments


def test_sna_increment_moments_match_poisson_identity():
    t0 = time.perf_counter()
    k, level, gain = 4.0, 500.0, 1.5
    plane = 160  # 4 planes of 160x160 -> 102400 pixels
    meta = make_meta(width=2 * plane, height=2 * plane, black=(0.0,) * 4, white=15871.0, gain=k)
    clean = PackedImage(meta, np.full((4, plane, plane), level), quantized=True)
    gains = GainTriple(gain, gain, gain)
    delta_clean, delta_noisy = shot_increments(clean, gains, k, make_rng(SEED, 20))

    expected_delta = (gain - 1.0) * level  # 250 DN
    assert np.all(delta_clean == expected_delta)
    # mean(dN) = dD, var(dN) = K^2 * (dD/K) = K * dD
    report = moment_match_test(
        delta_noisy, expected_delta, k * expected_delta, rel_tol=TOL.sna_mean_rel
    )
    elapsed = time.perf_counter() - t0
    ok = report.passed and elapsed < 5.0
    _criterion(
        "sna_moment_identity",
        ok,
        f"mean={report.details['mean']:.3f} (want {expected_delta:.0f}, "
        f"rel err {report.details['mean_rel_err']:.3%}), "
        f"var={report.details['var']:.1f} (want {k * expected_delta:.0f}, "
        f"rel err {report.details['var_rel_err']:.3%}), n={report.sample_size}, {elapsed:.1f}s",
    )
    assert report.passed
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# shot-noise augmentation: distribution equivalence


_EQ_REPS = 10_000
_EQ_MOSAIC = 32  # 32x32 mosaic -> 1024 packed pixels per repetition


def _equivalence_samples(run: int) -> tuple[np.ndarray, np.ndarray]:
    """One full arm pair: (augmented noisy, directly synthesized) int64 samples.

    Base pairs are constant 500 DN patches renoised under K=4, read sigma 2;
    gains are pinned to 1.5 through a near-degenerate gain distribution so the
    augmented clean level is 750 DN on every repetition. Repetitions are laid
    out as rows of one tall frame so the synthesis is a single vectorized call.
    """
    k, sigma, level, gain = 4.0, 2.0, 500.0, 1.5
    m, half = _EQ_MOSAIC, _EQ_MOSAIC // 2
    px = 4 * half * half
    tall = make_meta(width=m, height=_EQ_REPS * m, black=(0.0,) * 4, white=15871.0, gain=k)
    small = make_meta(width=m, height=m, black=(0.0,) * 4, white=15871.0, gain=k)

    base = RawFrame(tall, np.full((_EQ_REPS * m, m), level), quantized=True)
    noisy = pack_bayer(synthesize_pg(base, k, sigma, make_rng(SEED, 30, run, 0)))
    per_rep = noisy.channels.reshape(4, _EQ_REPS, half, half)

    clean_small = PackedImage(small, np.full((4, half, half), level), quantized=True)
    config = SnaConfig(mu=(gain - 1.0), sigma=1e-9, apply_probability=1.0)
    augmented = np.empty((_EQ_REPS, px), dtype=np.int64)
    for i in range(_EQ_REPS):
        channels = np.ascontiguousarray(per_rep[:, i])
        result = augment_pair(
            clean_small,
            PackedImage(small, channels, quantized=True),
            config,
            k,
            make_rng(SEED, 30, run, 1, i),
        )
        assert result.applied and not result.rejected and result.clip_fraction == 0.0
        augmented[i] = result.noisy.channels.reshape(-1)

    direct_clean = RawFrame(tall, np.full((_EQ_REPS * m, m), gain * level), quantized=True)
    direct_fr = pack_bayer(synthesize_pg(direct_clean, k, sigma, make_rng(SEED, 30, run, 2)))
    direct = (
        direct_fr.channels.reshape(4, _EQ_REPS, half, half)
        .transpose(1, 0, 2, 3)
        .reshape(_EQ_REPS, px)
        .astype(np.int64)
    )
    return augmented, direct


def test_sna_augmented_distribution_equals_direct_synthesis():
    t0 = time.perf_counter()
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {0: _equivalence_samples(0)}
    augmented, direct = cache[0]

    # Per-pixel means over 1e4 repetitions; variance is compared pooled over
    # all pixels because per-pixel variance estimates carry ~2% sampling error
    # at this depth, right at the band they would be checked against.
    mean_a = augmented.mean(axis=0, dtype=np.float64)
    mean_d = direct.mean(axis=0, dtype=np.float64)
    mean_rel = float(np.max(np.abs(mean_a - mean_d) / mean_d))
    var_a = float(augmented.var(ddof=1, dtype=np.float64))
    var_d = float(direct.var(ddof=1, dtype=np.float64))
    var_rel = abs(var_a - var_d) / var_d

    def chi2_run(i: int):
        if i not in cache:
            cache[i] = _equivalence_samples(i)
        a, d = cache.pop(i) if i else cache[i]
        return histogram_chi2_test(a, d, bins=TOL.chi2_bins, alpha=TOL.chi2_alpha)

    verdict = majority_verdict(chi2_run, runs=TOL.chi2_runs)
    elapsed = time.perf_counter() - t0
    ok = (
        mean_rel <= TOL.equiv_moment_rel
        and var_rel <= TOL.equiv_moment_rel
        and verdict.passed
        and elapsed < 60.0
    )
    _criterion(
        "sna_distribution_equivalence",
        ok,
        f"max per-pixel mean rel diff {mean_rel:.4%}, pooled var rel diff {var_rel:.4%}, "
        f"chi2 majority {int(verdict.statistic)}/{TOL.chi2_runs} at alpha={TOL.chi2_alpha}, {elapsed:.1f}s",
    )
    assert mean_rel <= TOL.equiv_moment_rel
    assert var_rel <= TOL.equiv_moment_rel
    assert verdict.passed
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# dark shading: calibration round trip on the simulator


_DSC_SIZE = 512
_DSC_FRAMES = 400
_DSC_ISOS = tuple(100 * 2**n for n in range(9))  # 100 .. 25600


class _DscSetup(NamedTuple):
    spec: SensorSpec
    profile: CalibrationProfile
    means: dict[int, RawFrame]
    build_seconds: float


@pytest.fixture(scope="module")
def dsc() -> _DscSetup:
    t0 = time.perf_counter()
    rng = make_rng(SEED, 40)
    slope, offset = gaussian_fpn_maps((_DSC_SIZE, _DSC_SIZE), 2e-5, 1.0, rng, demean=True)
    ble = {iso: round(-0.3 + 0.15 * n, 3) for n, iso in enumerate(_DSC_ISOS)}
    spec = SensorSpec(
        width=_DSC_SIZE,
        height=_DSC_SIZE,
        system_gain_k=4.0,
        read_sigma=5.0,
        fpn_slope=slope,
        fpn_offset=offset,
        ble_table=ble,
    )
    means: dict[int, RawFrame] = {}
    for iso in _DSC_ISOS:
        acc = np.zeros((_DSC_SIZE, _DSC_SIZE))
        for j in range(_DSC_FRAMES):
            acc += simulate_dark_frame(spec, iso, make_rng(SEED, 40, iso, j)).data
        means[iso] = RawFrame(spec.meta_for(iso), acc / _DSC_FRAMES, quantized=False)
    profile = fit_dark_shading(means, sensor_id="acceptance-sim")
    return _DscSetup(spec, profile, means, time.perf_counter() - t0)


def test_dsc_fitted_maps_track_truth_and_reconstruction_rmse(dsc: _DscSetup):
    t0 = time.perf_counter()
    corr_k = _corr(dsc.profile.fpn_slope, dsc.spec.fpn_slope)
    corr_b = _corr(dsc.profile.fpn_offset, dsc.spec.fpn_offset)
    top = _DSC_ISOS[-1]
    recon = reconstruct_dark_shading(dsc.profile, top)
    rmse = _rms(recon.data - dsc.spec.dark_shading(top))
    elapsed = dsc.build_seconds + (time.perf_counter() - t0)
    ok = (
        corr_k > TOL.dsc_corr_slope_min
        and corr_b > TOL.dsc_corr_offset_min
        and rmse < TOL.dsc_rmse_max
        and elapsed < 120.0
    )
    _criterion(
        "dsc_calibration_round_trip",
        ok,
        f"corr(slope)={corr_k:.4f} (min {TOL.dsc_corr_slope_min}), "
        f"corr(offset)={corr_b:.4f} (min {TOL.dsc_corr_offset_min}), "
        f"RMSE@ISO{top}={rmse:.4f} DN (max {TOL.dsc_rmse_max}), {elapsed:.1f}s",
    )
    assert corr_k > TOL.dsc_corr_slope_min
    assert corr_b > TOL.dsc_corr_offset_min
    assert rmse < TOL.dsc_rmse_max
    assert elapsed < 120.0


def test_dsc_corrected_stack_residual_means(dsc: _DscSetup):
    # The 0.1 DN bound is stricter than 1000 frames can satisfy: read sigma 5
    # leaves a per-pixel temporal-mean sd of 5/sqrt(1000) = 0.158 DN, so only
    # ~47% of pixels can land inside 0.1 DN no matter how good the profile is
    # (99.9% coverage needs ~27000 frames). The bound is deliberately kept
    # rather than widened to fit, so the corrected half of this check fails
    # and documents the shortfall; the uncorrected half must still fail the
    # same test for the comparison to mean anything.
    t0 = time.perf_counter()
    iso, frames = 6400, 1000

    def corrected():
        for j in range(frames):
            frame = simulate_dark_frame(dsc.spec, iso, make_rng(SEED, 50, j))
            yield correct_frame(frame, dsc.profile)

    def uncorrected():
        for j in range(frames):
            frame = simulate_dark_frame(dsc.spec, iso, make_rng(SEED, 50, j))
            yield subtract_black(frame)

    corr_report = residual_mean_test(
        corrected(), bound_dn=TOL.residual_bound_dn, pixel_fraction=TOL.residual_pixel_fraction
    )
    uncorr_report = residual_mean_test(
        uncorrected(), bound_dn=TOL.residual_bound_dn, pixel_fraction=TOL.residual_pixel_fraction
    )
    elapsed = time.perf_counter() - t0
    ok = corr_report.passed and not uncorr_report.passed and elapsed < 60.0
    _criterion(
        "dsc_residual_mean",
        ok,
        f"corrected: {corr_report.statistic:.4f} of pixels within "
        f"{TOL.residual_bound_dn} DN (need {TOL.residual_pixel_fraction}), "
        f"uncorrected: {uncorr_report.statistic:.4f} (must fail), {elapsed:.1f}s",
    )
    assert not uncorr_report.passed
    assert elapsed < 60.0
    assert corr_report.passed


def test_dsc_regression_beats_plain_averaging_at_every_iso(dsc: _DscSetup):
    rows = []
    all_better = True
    for iso in _DSC_ISOS:
        truth = dsc.spec.dark_shading(iso)
        averaged = subtract_black(dsc.means[iso]).data
        recon = reconstruct_dark_shading(dsc.profile, iso).data
        rmse_avg = _rms(averaged - truth)
        rmse_fit = _rms(recon - truth)
        all_better &= rmse_fit < rmse_avg
        rows.append((iso, rmse_avg, rmse_fit))
    worst = max(r[2] / r[1] for r in rows)
    _criterion(
        "dsc_regularization_gain",
        all_better,
        f"fit RMSE below {_DSC_FRAMES}-frame-average RMSE at all {len(rows)} ISOs "
        f"(worst ratio {worst:.3f})",
    )
    for iso, rmse_avg, rmse_fit in rows:
        assert rmse_fit < rmse_avg, f"iso {iso}: fit {rmse_fit:.4f} >= average {rmse_avg:.4f}"


# ---------------------------------------------------------------------------
# bit-exact plumbing


def test_bit_exact_round_trips_and_cli_determinism(tmp_path):
    rng = make_rng(SEED, 60)
    patterns = ("RGGB", "BGGR", "GRBG", "GBRG")
    mismatches = 0
    for i in range(100):
        meta = make_meta(
            width=2 * int(rng.integers(1, 33)),
            height=2 * int(rng.integers(1, 33)),
            cfa=patterns[i % 4],
            iso=int(rng.integers(100, 25601)),
        )
        frame = random_quantized_frame(rng, meta)
        packed = pack_bayer(frame)
        back = unpack_bayer(packed)
        path = tmp_path / f"fuzz_{i:03d}.rawc"
        write_container(frame, path)
        reread = read_container(path)
        if not (
            np.array_equal(back.data, frame.data)
            and back.meta == frame.meta
            and np.array_equal(reread.data, frame.data)
            and reread.meta == frame.meta
        ):
            mismatches += 1
    assert mismatches == 0

    # Same seed, two output directories: artifact bytes must be identical.
    slope, offset = gaussian_fpn_maps((48, 64), 2e-5, 0.02, make_rng(SEED, 61))
    spec = SensorSpec(
        width=64,
        height=48,
        system_gain_k=4.0,
        read_sigma=2.0,
        fpn_slope=slope,
        fpn_offset=offset,
        ble_table={100: 0.1, 800: 0.3, 6400: 0.9},
    )
    spec_path = tmp_path / "sensor.rawc"
    save_sensor_spec(spec, spec_path)
    out_a, out_b = tmp_path / "run_a", tmp_path / "run_b"
    args = ["synthesize", "--mode", "dark", "--spec", str(spec_path), "--iso", "800",
            "--count", "3", "--seed", "5"]
    assert main(args + ["-o", str(out_a)]) == 0
    assert main(args + ["-o", str(out_b)]) == 0
    files_a = sorted(p.name for p in out_a.glob("*.rawc"))
    files_b = sorted(p.name for p in out_b.glob("*.rawc"))
    assert files_a == files_b and len(files_a) == 3
    identical = all((out_a / n).read_bytes() == (out_b / n).read_bytes() for n in files_a)
    assert identical

    _criterion(
        "bit_exact_plumbing",
        mismatches == 0 and identical,
        f"100/100 fuzzed pack+container round trips exact, "
        f"{len(files_a)} CLI artifacts byte-identical under fixed seed",
    )
