"""Agreement and correlation analysis between evaluation metrics.

Every randomised routine here is a pure function of its inputs and a seed.
Random numbers come from numpy's PCG64 bit generator; independent
per-resample streams are derived with ``SeedSequence(seed).spawn(n)``, so
results do not depend on execution order and can be replicated exactly by
any implementation of the same documented scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import StatsError
from .pipeline import CaseMetrics

HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"


@dataclass(frozen=True)
class MetricSeries:
    """Per-case values of one metric, with the direction that means better.

    ``values`` may contain None for cases where the metric is undefined;
    those entries are excluded pairwise by the consumers.
    """

    name: str
    orientation: str
    values: tuple

    def __post_init__(self):
        if self.orientation not in (HIGHER_BETTER, LOWER_BETTER):
            raise ValueError(f"unknown orientation {self.orientation!r}")


@dataclass(frozen=True)
class AgreementReport:
    """Cohen's kappa between two metrics voting on sampled case pairs.

    ``contingency`` is ((n11, n10), (n01, n00)): rows are the first metric's
    vote ("first case is better": True row first), columns the second's.
    """

    kappa: float
    n_pairs_used: int
    n_pairs_discarded_ties: int
    contingency: tuple[tuple[int, int], tuple[int, int]]
    seed: int


@dataclass(frozen=True)
class CorrelationReport:
    r_full: float
    p_value: float
    bootstrap_mean_r: float
    bootstrap_std_r: float
    n_bootstrap: int
    sample_size: int
    seed: int


@dataclass(frozen=True)
class ErrorEstimate:
    """Lesion error counts as predicted from DSC via linear fits vs actual."""

    fp_est: int
    fn_est: int
    fp_actual: int
    fn_actual: int
    fit_precision: tuple[float, float]
    fit_recall: tuple[float, float]


def paired_defined(a: MetricSeries, b: MetricSeries) -> tuple[np.ndarray, np.ndarray]:
    """Values of both series at cases where both are defined, original order."""
    if len(a.values) != len(b.values):
        raise StatsError("metric series have different lengths")
    pairs = [(x, y) for x, y in zip(a.values, b.values) if x is not None and y is not None]
    if not pairs:
        return np.zeros(0), np.zeros(0)
    xs, ys = zip(*pairs)
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)


def _check_pearson_input(x: np.ndarray, y: np.ndarray):
    if x.size != y.size:
        raise StatsError("series lengths differ")
    if x.size < 3:
        raise StatsError(f"need at least 3 paired values, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise StatsError("zero variance in at least one series")


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson correlation with a two-tailed p-value.

    The p-value comes from ``t = r * sqrt((n - 2) / (1 - r^2))`` against
    Student's t with n-2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pearson_input(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    r = max(-1.0, min(1.0, r))
    n = x.size
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = 2.0 * float(special.stdtr(n - 2, -abs(t)))
    return r, p


def bootstrap_pearson(x, y, n_boot: int = 100, sample_size: int = 20, seed: int = 0) -> CorrelationReport:
    """Pearson r summarised over bootstrap resamples of paired cases.

    Each of the ``n_boot`` resamples draws ``sample_size`` paired indices
    with replacement from its own PCG64 stream (stream ``b`` is spawned as
    the ``b``-th child of ``SeedSequence(seed)``; one call to
    ``integers(0, n, size=sample_size)`` per attempt).  Resamples with zero
    variance in either coordinate are redrawn from the same stream; more
    than ``n_boot // 2`` redraws in total abort with StatsError.  The
    reported p-value belongs to the full-sample r, not the bootstrap
    distribution.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pearson_input(x, y)
    if sample_size < 3:
        raise StatsError("sample_size must be at least 3")
    r_full, p_value = pearson(x, y)

    n = x.size
    max_redraws = n_boot // 2
    redraws = 0
    rs = np.empty(n_boot, dtype=np.float64)
    for b, child in enumerate(np.random.SeedSequence(seed).spawn(n_boot)):
        rng = np.random.Generator(np.random.PCG64(child))
        while True:
            idx = rng.integers(0, n, size=sample_size)
            xb, yb = x[idx], y[idx]
            if np.ptp(xb) > 0 and np.ptp(yb) > 0:
                rs[b], _ = pearson(xb, yb)
                break
            redraws += 1
            if redraws > max_redraws:
                raise StatsError(
                    f"more than {max_redraws} degenerate bootstrap resamples; "
                    "the data have too little variation"
                )
    return CorrelationReport(
        r_full=r_full,
        p_value=p_value,
        bootstrap_mean_r=float(rs.mean()),
        bootstrap_std_r=float(rs.std()),
        n_bootstrap=n_boot,
        sample_size=sample_size,
        seed=seed,
    )


def _vote(u: float, v: float, orientation: str) -> bool | None:
    """Does the first value look better?  None on a tie."""
    if u == v:
        return None
    if orientation == HIGHER_BETTER:
        return u > v
    return u < v


def kappa_agreement(a: MetricSeries, b: MetricSeries, n_pairs: int = 1000, seed: int = 0) -> AgreementReport:
    """Chance-corrected agreement of two metrics on "which case is better".

    ``n_pairs`` ordered case pairs (i, j), i != j, are sampled uniformly
    from the cases where both metrics are defined (one
    ``integers(0, n, size=2)`` call per attempt on a PCG64 stream seeded
    with ``seed``, redrawing while i == j).  Each metric votes whether the
    first case is better according to its orientation; a tie in either
    metric discards the pair.  Kappa is computed from the 2x2 vote table
    with marginal-product expected agreement.
    """
    xs, ys = paired_defined(a, b)
    n = xs.size
    if n < 2:
        raise StatsError("need at least 2 cases with both metrics defined")
    rng = np.random.Generator(np.random.PCG64(seed))
    table = np.zeros((2, 2), dtype=np.int64)
    discarded = 0
    for _ in range(n_pairs):
        while True:
            i, j = rng.integers(0, n, size=2)
            if i != j:
                break
        va = _vote(xs[i], xs[j], a.orientation)
        vb = _vote(ys[i], ys[j], b.orientation)
        if va is None or vb is None:
            discarded += 1
            continue
        table[int(not va), int(not vb)] += 1

    used = n_pairs - discarded
    if used == 0:
        raise StatsError("every sampled pair was tied in at least one metric")
    n11, n10 = int(table[0, 0]), int(table[0, 1])
    n01, n00 = int(table[1, 0]), int(table[1, 1])
    p_o = (n11 + n00) / used
    pa = (n11 + n10) / used
    pb = (n11 + n01) / used
    p_e = pa * pb + (1.0 - pa) * (1.0 - pb)
    # p_e == 1 forces both raters constant and identical, hence p_o == 1.
    kappa = 1.0 if p_e == 1.0 else (p_o - p_e) / (1.0 - p_e)
    return AgreementReport(
        kappa=float(kappa),
        n_pairs_used=used,
        n_pairs_discarded_ties=discarded,
        contingency=((n11, n10), (n01, n00)),
        seed=seed,
    )


def linear_fit(x, y) -> tuple[float, float]:
    """Ordinary least squares y = slope * x + intercept."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise StatsError("series lengths differ")
    if x.size < 2:
        raise StatsError("need at least 2 points for a linear fit")
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0:
        raise StatsError("zero variance in x")
    slope = float(np.dot(dx, y - y.mean())) / sxx
    return slope, float(y.mean() - slope * x.mean())


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def dice_estimated_errors(cases: Sequence[CaseMetrics]) -> ErrorEstimate:
    """Lesion-level FP/FN counts as a DSC-only evaluator would infer them.

    Linear models ``precision_pred ~ dsc`` and ``recall_gt ~ dsc`` are fit
    across the cases where both quantities are defined (at least 3 each).
    For every case with a defined DSC the fitted rates, clamped to [0, 1],
    predict per-case error counts ``(1 - precision) * n_pred_lesions`` and
    ``(1 - recall) * n_gt_lesions``, rounded half-up and summed.  Actual
    counts are pooled from the per-case detection summaries.
    """
    fit_p_x = [c.voxel.dsc for c in cases if c.voxel.dsc is not None and c.pred_summary.precision is not None]
    fit_p_y = [c.pred_summary.precision for c in cases if c.voxel.dsc is not None and c.pred_summary.precision is not None]
    fit_r_x = [c.voxel.dsc for c in cases if c.voxel.dsc is not None and c.gt_summary.recall is not None]
    fit_r_y = [c.gt_summary.recall for c in cases if c.voxel.dsc is not None and c.gt_summary.recall is not None]
    if len(fit_p_x) < 3 or len(fit_r_x) < 3:
        raise StatsError("need at least 3 cases with defined DSC and detection rates")
    fit_precision = linear_fit(fit_p_x, fit_p_y)
    fit_recall = linear_fit(fit_r_x, fit_r_y)

    fp_est = fn_est = 0
    for c in cases:
        if c.voxel.dsc is None:
            continue
        p_hat = min(1.0, max(0.0, fit_precision[0] * c.voxel.dsc + fit_precision[1]))
        r_hat = min(1.0, max(0.0, fit_recall[0] * c.voxel.dsc + fit_recall[1]))
        fp_est += _round_half_up((1.0 - p_hat) * c.n_pred_lesions)
        fn_est += _round_half_up((1.0 - r_hat) * c.n_gt_lesions)

    return ErrorEstimate(
        fp_est=fp_est,
        fn_est=fn_est,
        fp_actual=sum(c.pred_summary.fp for c in cases),
        fn_actual=sum(c.gt_summary.fn for c in cases),
        fit_precision=fit_precision,
        fit_recall=fit_recall,
    )
