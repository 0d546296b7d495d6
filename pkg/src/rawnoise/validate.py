"""Statistical tests for synthesized noise, with JSON-serializable reports.

Randomized checks can fail at their nominal false-positive rate, so callers
that need a hard verdict use :func:`majority_verdict`: run an alpha-level
test on fresh substreams an odd number of times and take the majority, which
drops the flake rate from alpha to O(alpha^2) without changing what a
genuine distribution mismatch does (still fails every run).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from .errors import BinningError, DomainError, InputError
from .frames import RawFrame
from .ptc import PTCEstimate


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class, despite the name

    test_name: str
    statistic: float
    threshold: float
    passed: bool
    sample_size: int
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "test_name": self.test_name,
                "statistic": self.statistic,
                "threshold": self.threshold,
                "passed": self.passed,
                "sample_size": self.sample_size,
                "details": self.details,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        d = json.loads(text)
        return cls(
            test_name=d["test_name"],
            statistic=float(d["statistic"]),
            threshold=float(d["threshold"]),
            passed=bool(d["passed"]),
            sample_size=int(d["sample_size"]),
            details=dict(d["details"]),
        )


def moment_match_test(
    samples: np.ndarray,
    expected_mean: float,
    expected_var: float,
    rel_tol: float,
) -> TestReport:
    """Sample mean within rel_tol of expectation, variance within 3*rel_tol.

    The variance gets the wider band because its estimator is noisier at the
    same sample size. Meaningful from ~1e4 samples up at the default bands.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        raise InputError("moment test needs at least 2 samples")
    if expected_mean == 0.0 or expected_var <= 0.0:
        raise DomainError("expected moments must be nonzero (mean) and positive (variance)")
    mean_err = abs(samples.mean() - expected_mean) / abs(expected_mean)
    var_err = abs(samples.var(ddof=1) - expected_var) / expected_var
    statistic = max(mean_err / rel_tol, var_err / (3.0 * rel_tol))
    return TestReport(
        test_name="moment_match",
        statistic=float(statistic),
        threshold=1.0,
        passed=bool(statistic <= 1.0),
        sample_size=samples.size,
        details={
            "mean": float(samples.mean()),
            "expected_mean": expected_mean,
            "mean_rel_err": float(mean_err),
            "var": float(samples.var(ddof=1)),
            "expected_var": expected_var,
            "var_rel_err": float(var_err),
            "rel_tol": rel_tol,
        },
    )


def histogram_chi2_test(
    a: np.ndarray,
    b: np.ndarray,
    bins: int = 32,
    alpha: float = 0.01,
) -> TestReport:
    """Two-sample chi-square on shared quantile bins; passes when p >= alpha.

    Bin edges are the pooled sample's quantiles, so expected counts stay
    balanced for any continuous or discrete sample shape. Identical samples
    give statistic 0 and p = 1 by construction.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise InputError("chi-square test needs at least 2 samples per side")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must be in (0, 1)")
    pooled = np.concatenate([a, b])
    edges = np.unique(np.quantile(pooled, np.linspace(0.0, 1.0, bins + 1)))
    if edges.size < 3:
        # Both samples are concentrated on one value: distributions are
        # indistinguishable at this resolution, count it as a pass.
        if edges.size == 2 or np.array_equal(np.unique(a), np.unique(b)):
            return TestReport("histogram_chi2", 1.0, alpha, True, a.size + b.size, {"degenerate": True})
        raise BinningError("samples collapse to fewer than 2 bins")
    obs_a, _ = np.histogram(a, edges)
    obs_b, _ = np.histogram(b, edges)
    keep = (obs_a + obs_b) > 0
    obs_a, obs_b = obs_a[keep], obs_b[keep]
    na, nb = a.size, b.size
    expected_a = (obs_a + obs_b) * (na / (na + nb))
    if expected_a.min() < 5.0:
        raise BinningError(
            f"minimum expected bin count {expected_a.min():.2f} < 5; use fewer bins or more samples"
        )
    ka, kb = np.sqrt(nb / na), np.sqrt(na / nb)
    chi2 = float((((ka * obs_a - kb * obs_b) ** 2) / (obs_a + obs_b)).sum())
    dof = obs_a.size - 1
    p = float(stats.chi2.sf(chi2, dof))
    return TestReport(
        test_name="histogram_chi2",
        statistic=p,
        threshold=alpha,
        passed=bool(p >= alpha),
        sample_size=na + nb,
        details={"chi2": chi2, "dof": dof, "bins": int(obs_a.size), "alpha": alpha},
    )


def residual_mean_test(
    stack: Iterable[RawFrame],
    bound_dn: float,
    pixel_fraction: float = 0.999,
) -> TestReport:
    """Check that per-pixel temporal means of a corrected dark stack are ~0.

    Streams over the stack (constant memory). Passes when at least
    ``pixel_fraction`` of pixels have |temporal mean| < bound_dn and the
    global mean magnitude is below bound_dn / 10. ``bound_dn=inf`` always
    passes; use it to collect the statistics without a verdict.
    """
    if bound_dn <= 0:
        raise DomainError("bound_dn must be positive")
    acc = None
    count = 0
    for frame in stack:
        if acc is None:
            acc = np.zeros_like(frame.data)
        acc += frame.data
        count += 1
    if acc is None or count < 2:
        raise InputError("residual test needs at least 2 frames")
    mean = acc / count
    frac = float((np.abs(mean) < bound_dn).mean())
    global_mean = float(mean.mean())
    passed = frac >= pixel_fraction and abs(global_mean) < bound_dn / 10.0
    return TestReport(
        test_name="residual_mean",
        statistic=frac,
        threshold=pixel_fraction,
        passed=bool(passed),
        sample_size=count,
        details={
            "bound_dn": bound_dn,
            "global_mean": global_mean,
            "global_bound": bound_dn / 10.0,
            "pixels": int(mean.size),
            "worst_abs_mean": float(np.abs(mean).max()),
        },
    )


def ptc_linearity_test(estimate: PTCEstimate, min_r2: float = 0.999) -> TestReport:
    """The photon-transfer fit must be an excellent straight line."""
    if len(estimate.samples) < 3:
        raise InputError("linearity verdict needs at least 3 exposure levels")
    return TestReport(
        test_name="ptc_linearity",
        statistic=estimate.fit_r2,
        threshold=min_r2,
        passed=bool(estimate.fit_r2 >= min_r2),
        sample_size=len(estimate.samples),
        details={"system_gain_k": estimate.system_gain_k, "read_variance": estimate.read_variance},
    )


def majority_verdict(run: Callable[[int], TestReport], runs: int = 3) -> TestReport:
    """Aggregate an odd number of independent test runs by majority vote."""
    if runs < 1 or runs % 2 == 0:
        raise DomainError("runs must be odd and positive")
    reports = [run(i) for i in range(runs)]
    passes = sum(r.passed for r in reports)
    return TestReport(
        test_name=f"{reports[0].test_name}_majority",
        statistic=float(passes),
        threshold=runs / 2.0,
        passed=bool(passes * 2 > runs),
        sample_size=sum(r.sample_size for r in reports),
        details={"runs": [json.loads(r.to_json()) for r in reports]},
    )
