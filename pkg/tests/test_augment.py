import numpy as np
import pytest
from scipy import integrate, stats

from rawnoise import (
    GainTriple,
    PackedImage,
    SnaConfig,
    augment_pair,
    histogram_chi2_test,
    majority_verdict,
    make_rng,
    sample_gains,
    shot_increments,
)
from rawnoise.errors import DomainError, PairingError

from conftest import make_meta


def packed_constant(value, meta=None, shape=(4, 16, 16), quantized=False):
    if meta is None:
        meta = make_meta(width=2 * shape[2], height=2 * shape[1], black=(0, 0, 0, 0), white=16383.0, gain=4.0)
    else:
        shape = (4, meta.height // 2, meta.width // 2)
    return PackedImage(meta, np.full(shape, float(value)), quantized=quantized)


def clipped_mean_oracle(mu, sigma, hi):
    """E[clip(X, 1, hi)] for X ~ N(mu+1, sigma), by quadrature."""
    m = mu + 1.0
    dist = stats.norm(m, sigma)
    mass_lo = dist.cdf(1.0)
    mass_hi = dist.sf(hi)
    middle, _ = integrate.quad(lambda x: x * dist.pdf(x), 1.0, hi)
    return 1.0 * mass_lo + hi * mass_hi + middle


def chained_mean_oracle(mu, sigma, hi):
    """E[clip(clip(X,1,hi) * Y, 1, hi)], X ~ N(mu+1, sigma), Y ~ N(1, sigma)."""
    gx = stats.norm(mu + 1.0, sigma)
    gy = stats.norm(1.0, sigma)

    def inner(x):
        g = min(max(x, 1.0), hi)
        val, _ = integrate.quad(
            lambda y: min(max(g * y, 1.0), hi) * gy.pdf(y),
            1.0 - 10.0 * sigma,
            1.0 + 10.0 * sigma,
        )
        return val

    total, _ = integrate.quad(
        lambda x: inner(x) * gx.pdf(x),
        mu + 1.0 - 10.0 * sigma,
        mu + 1.0 + 10.0 * sigma,
        limit=200,
    )
    return total


class TestSampleGains:
    def test_bounds_hold_under_extreme_sigma(self):
        config = SnaConfig(mu=0.5, sigma=5.0)
        g = make_rng(60)
        for _ in range(10_000):
            t = sample_gains(config, g)
            for gain in (t.gain_r, t.gain_g, t.gain_b):
                assert 1.0 <= gain <= config.gain_ceiling

    def test_green_mean_matches_quadrature_oracle(self):
        config = SnaConfig(mu=0.5, sigma=0.25)
        g = make_rng(61)
        n = 200_000
        greens = np.array([sample_gains(config, g).gain_g for _ in range(n)])
        oracle = clipped_mean_oracle(0.5, 0.25, 3.0)
        se = greens.std() / np.sqrt(n)
        assert abs(greens.mean() - oracle) < 5 * se

    def test_red_blue_chain_matches_quadrature_oracle(self):
        config = SnaConfig(mu=0.5, sigma=0.25)
        g = make_rng(62)
        n = 100_000
        triples = [sample_gains(config, g) for _ in range(n)]
        reds = np.array([t.gain_r for t in triples])
        blues = np.array([t.gain_b for t in triples])
        oracle = chained_mean_oracle(0.5, 0.25, 3.0)
        for vals in (reds, blues):
            se = vals.std() / np.sqrt(n)
            assert abs(vals.mean() - oracle) < 5 * se

    def test_tiny_sigma_pins_all_gains(self):
        config = SnaConfig(mu=0.5, sigma=1e-9)
        t = sample_gains(config, make_rng(63))
        assert t.gain_g == pytest.approx(1.5, abs=1e-7)
        assert t.gain_r == pytest.approx(1.5, abs=1e-7)
        assert t.gain_b == pytest.approx(1.5, abs=1e-7)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            SnaConfig(mu=0.0)
        with pytest.raises(DomainError):
            SnaConfig(sigma=0.0)
        with pytest.raises(DomainError):
            SnaConfig(apply_probability=1.5)
        with pytest.raises(DomainError):
            SnaConfig(saturation_policy="wrap")

    def test_gain_triple_rejects_below_one(self):
        with pytest.raises(DomainError):
            GainTriple(0.9, 1.5, 1.5)


class TestShotIncrements:
    def test_clean_increment_is_exact(self):
        clean = packed_constant(200.0)
        gains = GainTriple(2.0, 1.5, 3.0)
        delta_clean, _ = shot_increments(clean, gains, 4.0, make_rng(64))
        assert np.all(delta_clean[0] == 200.0)  # R: (2-1)*200
        assert np.all(delta_clean[1] == 100.0)  # G1
        assert np.all(delta_clean[2] == 100.0)  # G2
        assert np.all(delta_clean[3] == 400.0)  # B

    def test_noisy_increment_moments(self):
        # delta_noisy = K * Poisson(delta_clean / K): mean delta_clean,
        # variance K * delta_clean.
        k = 4.0
        clean = packed_constant(200.0, shape=(4, 64, 64))
        gains = GainTriple(2.0, 1.5, 3.0)
        g = make_rng(65)
        draws = [shot_increments(clean, gains, k, g)[1] for _ in range(30)]
        stacked = np.stack(draws)
        for plane, dc in enumerate((200.0, 100.0, 100.0, 400.0)):
            vals = stacked[:, plane].ravel()
            n = vals.size
            assert abs(vals.mean() - dc) < 5 * np.sqrt(k * dc / n)
            assert abs(vals.var(ddof=1) / (k * dc) - 1.0) < 5 * np.sqrt(2.0 / n)

    def test_unit_gains_produce_exact_zero(self):
        clean = packed_constant(500.0)
        delta_clean, delta_noisy = shot_increments(clean, GainTriple(1.0, 1.0, 1.0), 4.0, make_rng(66))
        assert np.all(delta_clean == 0.0)
        assert np.all(delta_noisy == 0.0)

    def test_rejects_negative_clean_and_bad_gain(self):
        clean = packed_constant(-1.0)
        with pytest.raises(DomainError):
            shot_increments(clean, GainTriple(1.5, 1.5, 1.5), 4.0, make_rng(67))
        with pytest.raises(DomainError):
            shot_increments(packed_constant(1.0), GainTriple(1.5, 1.5, 1.5), 0.0, make_rng(67))


class TestAugmentPair:
    def test_probability_zero_is_identity(self):
        clean = packed_constant(100.0)
        noisy = packed_constant(103.0)
        config = SnaConfig(apply_probability=0.0)
        res = augment_pair(clean, noisy, config, 4.0, make_rng(68))
        assert not res.applied and not res.rejected
        assert res.gains is None
        assert np.array_equal(res.clean.channels, clean.channels)
        assert np.array_equal(res.noisy.channels, noisy.channels)

    def test_probability_one_always_applies(self):
        clean = packed_constant(100.0)
        config = SnaConfig(apply_probability=1.0)
        g = make_rng(69)
        assert all(augment_pair(clean, clean, config, 4.0, g).applied for _ in range(50))

    def test_apply_rate_near_three_quarters(self):
        clean = packed_constant(10.0, shape=(4, 2, 2))
        config = SnaConfig()  # default 0.75
        g = make_rng(70)
        applied = sum(augment_pair(clean, clean, config, 4.0, g).applied for _ in range(2000))
        # Binomial(2000, 0.75): 5 sigma is ~97.
        assert abs(applied - 1500) < 100

    def test_clip_policy_caps_at_white(self):
        meta = make_meta(black=(0, 0, 0, 0), white=1000.0, gain=4.0)
        clean = packed_constant(900.0, meta=meta)
        config = SnaConfig(apply_probability=1.0)
        res = augment_pair(clean, clean, config, 4.0, make_rng(71))
        assert res.applied
        assert res.clip_fraction > 0.5
        assert res.flagged
        assert res.clean.channels.max() <= 1000.0
        assert res.noisy.channels.max() <= 1000.0

    def test_reject_policy_returns_originals(self):
        meta = make_meta(black=(0, 0, 0, 0), white=1000.0, gain=4.0)
        clean = packed_constant(900.0, meta=meta)
        noisy = packed_constant(905.0, meta=meta)
        config = SnaConfig(apply_probability=1.0, saturation_policy="reject_patch")
        res = augment_pair(clean, noisy, config, 4.0, make_rng(72))
        assert res.rejected and not res.applied
        assert res.clip_fraction > 0.0
        assert np.array_equal(res.clean.channels, clean.channels)
        assert np.array_equal(res.noisy.channels, noisy.channels)

    def test_no_clipping_reports_zero_fraction(self):
        clean = packed_constant(50.0)
        config = SnaConfig(apply_probability=1.0)
        res = augment_pair(clean, clean, config, 4.0, make_rng(73))
        assert res.applied
        assert res.clip_fraction == 0.0
        assert not res.flagged

    def test_meta_mismatch_rejected(self):
        a = packed_constant(10.0)
        b = PackedImage(make_meta(width=32, height=32, black=(0, 0, 0, 0), white=16383.0), np.full((4, 16, 16), 10.0))
        with pytest.raises(PairingError):
            augment_pair(a, b, SnaConfig(), 4.0, make_rng(74))

    def test_requires_black_subtracted_inputs(self):
        img = packed_constant(600.0, meta=make_meta(gain=4.0))
        with pytest.raises(DomainError):
            augment_pair(img, img, SnaConfig(), 4.0, make_rng(75))

    def test_requires_nonnegative_clean(self):
        img = packed_constant(-5.0)
        with pytest.raises(DomainError):
            augment_pair(img, img, SnaConfig(), 4.0, make_rng(76))


class TestDistributionEquivalence:
    def test_augmented_matches_direct_synthesis_chi2(self):
        # Integer sensor grid, K = 4, constant scene: the augmented noisy
        # sample and a fresh synthesis of the brighter scene follow the same
        # law exactly, because an independent Poisson increment added to a
        # Poisson signal is a Poisson of the summed rate, and rounding
        # commutes with even integer shifts.
        k, sigma, level = 4.0, 2.0, 500.0
        meta = make_meta(width=32, height=32, black=(0, 0, 0, 0), white=100000.0, gain=k)
        clean = PackedImage(meta, np.full((4, 16, 16), level), quantized=True)
        config = SnaConfig(mu=0.5, sigma=1e-9, apply_probability=1.0)

        def run(i):
            g = make_rng(77, i)
            reps = 200
            aug_samples = []
            for _ in range(reps):
                shot = k * g.poisson(level / k, clean.channels.shape)
                read = g.normal(0.0, sigma, clean.channels.shape)
                noisy = clean.with_channels(np.rint(shot + read), quantized=False)
                res = augment_pair(clean, noisy, config, k, g)
                aug_samples.append(res.noisy.channels.ravel())
            direct = np.rint(
                k * g.poisson(1.5 * level / k, (reps, clean.channels.size))
                + g.normal(0.0, sigma, (reps, clean.channels.size))
            )
            return histogram_chi2_test(np.concatenate(aug_samples), direct.ravel(), bins=32, alpha=0.01)

        verdict = majority_verdict(run, runs=3)
        assert verdict.passed, verdict.details
