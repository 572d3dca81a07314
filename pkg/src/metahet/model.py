"""Domain types and heterogeneity statistics for meta-analysis summary data.

The module computes, from per-study summary data (effect size, within-study
variance, sample size), the classical heterogeneity statistics (Cochran's Q,
the DerSimonian-Laird between-study variance, I2) together with two
sample-size-adjusted estimators of the between-population variance share:

* ``i_squared_a``     -- a Q-based plug-in estimator that divides the excess of
  Q over its degrees of freedom by ``Q + (k-1)*(n_tilde-1)``, where ``n_tilde``
  is the adjusted mean sample size,
* ``i_squared_anova`` -- a variance-components estimator built from the mean
  squares between and within the study populations.

Unlike I2, both adjusted statistics estimate the fraction of a single
observation's variance that lies between study populations, so they do not
drift towards 1 as study sample sizes grow.

All functions are pure, operate on immutable inputs, and hold no shared
state; they are safe to call concurrently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateWeights,
    InsufficientDegreesOfFreedom,
    InsufficientStudies,
    InvalidAdjustedSize,
    InvalidStudy,
    InvalidVariance,
)


class EffectSizeKind(enum.Enum):
    """Effect-size metric a dataset was built on."""

    MEAN = "mean"
    MEAN_DIFFERENCE = "md"
    STANDARDIZED_MEAN_DIFFERENCE = "smd"


@dataclass(frozen=True)
class OneArmStudy:
    """Summary data reported by a single-arm study.

    ``var_y`` is the estimated sampling variance of the reported effect size
    ``y`` and is treated as known downstream; ``n`` is the study sample size.
    """

    y: float
    var_y: float
    n: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.y):
            raise InvalidStudy(f"effect size must be finite, got {self.y!r}")
        if not math.isfinite(self.var_y) or self.var_y <= 0:
            raise InvalidVariance(f"within-study variance must be > 0, got {self.var_y!r}")
        if self.n < 1:
            raise InvalidStudy(f"sample size must be >= 1, got {self.n!r}")


@dataclass(frozen=True)
class TwoArmStudy:
    """Per-arm summary data for a two-arm (treatment vs control) study.

    ``se_t`` and ``se_c`` are standard errors of the arm means, not standard
    deviations of the observations. Each arm needs at least two observations
    so that a pooled variance has positive degrees of freedom.
    """

    y_t: float
    n_t: int
    se_t: float
    y_c: float
    n_c: int
    se_c: float

    def __post_init__(self) -> None:
        for label, value in (("y_t", self.y_t), ("y_c", self.y_c)):
            if not math.isfinite(value):
                raise InvalidStudy(f"{label} must be finite, got {value!r}")
        for label, value in (("se_t", self.se_t), ("se_c", self.se_c)):
            if not math.isfinite(value) or value <= 0:
                raise InvalidStudy(f"{label} must be a finite positive standard error, got {value!r}")
        for label, value in (("n_t", self.n_t), ("n_c", self.n_c)):
            if value < 2:
                raise InsufficientDegreesOfFreedom(f"{label} must be >= 2, got {value!r}")


@dataclass(frozen=True)
class PopulationScenario:
    """True population parameters of a hypothetical meta-analysis."""

    mu: float
    tau2: float
    sigma2_pop: float

    def __post_init__(self) -> None:
        if self.tau2 < 0:
            raise InvalidVariance(f"between-study variance must be >= 0, got {self.tau2!r}")
        if self.sigma2_pop <= 0:
            raise InvalidVariance(f"population variance must be > 0, got {self.sigma2_pop!r}")


@dataclass(frozen=True, eq=False)
class MetaDataset:
    """A homogeneous collection of k >= 2 studies reduced to canonical triples.

    Each study is held as ``(y_i, var_y_i, n_i)``. For the mean metric the
    ``n_i`` are the raw integer sample sizes; for mean differences and
    standardized mean differences they are real-valued effective sizes
    ``n_t*n_c/(n_t+n_c)`` and the originating two-arm records are retained in
    ``arms`` because the within-population mean square needs per-arm detail.
    """

    kind: EffectSizeKind
    y: np.ndarray
    var_y: np.ndarray
    n: np.ndarray
    arms: tuple[TwoArmStudy, ...] | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=float)
        var_y = np.array(self.var_y, dtype=float)
        n = np.array(self.n, dtype=float)
        if not (y.shape == var_y.shape == n.shape) or y.ndim != 1:
            raise InvalidStudy("y, var_y and n must be 1-d arrays of equal length")
        if y.size < 2:
            raise InsufficientStudies(f"need at least 2 studies, got {y.size}")
        if not np.all(np.isfinite(y)):
            raise InvalidStudy("effect sizes must be finite")
        if not np.all(np.isfinite(var_y) & (var_y > 0)):
            raise InvalidVariance("all within-study variances must be finite and > 0")
        if not np.all(np.isfinite(n) & (n > 0)):
            raise InvalidStudy("all sample sizes must be finite and > 0")
        if self.kind is EffectSizeKind.MEAN and not np.all(n == np.round(n)):
            raise InvalidStudy("mean-metric datasets need integer sample sizes")
        if self.arms is not None and len(self.arms) != y.size:
            raise InvalidStudy("arm detail length does not match study count")
        if self.labels is not None and len(self.labels) != y.size:
            raise InvalidStudy("label count does not match study count")
        for name, arr in (("y", y), ("var_y", var_y), ("n", n)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.y.size

    @property
    def weights(self) -> np.ndarray:
        """Inverse-variance weights 1/var_y_i."""
        return 1.0 / self.var_y

    @classmethod
    def from_one_arm(
        cls, studies: Sequence[OneArmStudy], labels: Sequence[str] | None = None
    ) -> "MetaDataset":
        """Build a mean-metric dataset from single-arm summary records."""
        if len(studies) < 2:
            raise InsufficientStudies(f"need at least 2 studies, got {len(studies)}")
        return cls(
            kind=EffectSizeKind.MEAN,
            y=np.array([s.y for s in studies], dtype=float),
            var_y=np.array([s.var_y for s in studies], dtype=float),
            n=np.array([s.n for s in studies], dtype=float),
            labels=tuple(labels) if labels is not None else None,
        )


@dataclass(frozen=True)
class HeterogeneityPanel:
    """Every statistic computed from one dataset, intermediates included.

    ``adjustment`` is the value entering the denominator of the adjusted
    heterogeneity statistic: the adjusted mean sample size for mean and
    mean-difference data, the adjusted mean weight for standardized mean
    differences (``adjustment_label`` records which). The ``*_raw`` fields
    are the untruncated ratios kept for diagnostics; where a raw ratio is
    undefined (zero denominator) the truncated value is stored instead so
    every field stays finite.
    """

    kind: EffectSizeKind
    k: int
    q: float
    sum_w: float
    sum_w2: float
    sum_wy: float
    ybar_w: float
    ybar_n: float
    tau2_dl: float
    tau2_raw: float
    sigma_tilde2: float
    n_tilde: float
    w_tilde: float | None
    adjustment: float
    adjustment_label: str
    i2: float
    i2_raw: float
    i2_a: float
    i2_a_raw: float
    msb: float
    msw: float
    i2_anova: float
    i2_anova_raw: float


def _as_weight_sums(dataset: MetaDataset) -> tuple[np.ndarray, float, float, float]:
    w = dataset.weights
    return w, float(w.sum()), float((w * w).sum()), float((w * dataset.y).sum())


def cochran_q(dataset: MetaDataset) -> float:
    """Weighted sum of squared deviations from the inverse-variance pooled mean.

    Q = sum_i w_i * (y_i - ybar_w)^2 with w_i = 1/var_y_i.
    """
    w, sum_w, _, sum_wy = _as_weight_sums(dataset)
    ybar = sum_wy / sum_w
    return float((w * (dataset.y - ybar) ** 2).sum())


def _weight_dispersion(dataset: MetaDataset) -> float:
    # sum(w) - sum(w^2)/sum(w); positive for any k >= 2 with positive weights,
    # zero only under catastrophic cancellation.
    _, sum_w, sum_w2, _ = _as_weight_sums(dataset)
    c = sum_w - sum_w2 / sum_w
    if c <= 0:
        raise DegenerateWeights(
            "weight dispersion sum(w) - sum(w^2)/sum(w) is not positive; "
            "weights are numerically degenerate"
        )
    return c


def dl_tau2(dataset: MetaDataset) -> float:
    """DerSimonian-Laird moment estimator of the between-study variance.

    max{ (Q - (k-1)) / (sum(w) - sum(w^2)/sum(w)), 0 }.
    """
    q = cochran_q(dataset)
    return max((q - (dataset.k - 1)) / _weight_dispersion(dataset), 0.0)


def sigma_tilde2(dataset: MetaDataset) -> float:
    """Representative within-study variance (k-1) / (sum(w) - sum(w^2)/sum(w)).

    Equals the common within-study variance when all variances agree and is
    asymptotically the harmonic mean of the variances otherwise.
    """
    return (dataset.k - 1) / _weight_dispersion(dataset)


def i_squared(q: float, k: int) -> float:
    """Relative heterogeneity I2 = max{(Q - (k-1))/Q, 0}, defined as 0 at Q=0."""
    if k < 2:
        raise InsufficientStudies(f"need at least 2 studies, got {k}")
    if not math.isfinite(q) or q < 0:
        raise ValueError(f"q must be finite and >= 0, got {q!r}")
    if q <= k - 1:
        return 0.0
    return (q - (k - 1)) / q


def _adjusted_mean(values: np.ndarray, what: str) -> float:
    k = values.size
    if k < 2:
        raise InsufficientStudies(f"need at least 2 {what}s, got {k}")
    if not np.all(np.isfinite(values) & (values > 0)):
        raise InvalidStudy(f"all {what}s must be finite and > 0")
    first = values[0]
    if np.all(values == first):
        # balanced case: the formula reduces exactly to the common value
        return float(first)
    total = float(values.sum())
    return (total - float((values * values).sum()) / total) / (k - 1)


def adjusted_mean_n(n: Sequence[float] | np.ndarray) -> float:
    """Adjusted mean sample size (sum(n) - sum(n^2)/sum(n)) / (k-1).

    The Thomas-Hultquist correction of the plain mean for unbalanced designs;
    returns the common n exactly when the design is balanced.
    """
    return _adjusted_mean(np.asarray(n, dtype=float), "sample size")


def adjusted_mean_weight(w: Sequence[float] | np.ndarray) -> float:
    """Adjusted mean inverse-variance weight (sum(w) - sum(w^2)/sum(w)) / (k-1)."""
    return _adjusted_mean(np.asarray(w, dtype=float), "weight")


def i_squared_a(q: float, k: int, n_tilde: float) -> float:
    """Sample-size-adjusted heterogeneity max{(Q-(k-1)) / (Q+(k-1)(n_tilde-1)), 0}.

    Estimates the between-population share of one observation's variance;
    collapses to ``i_squared`` when n_tilde is 1.
    """
    if k < 2:
        raise InsufficientStudies(f"need at least 2 studies, got {k}")
    if not math.isfinite(q) or q < 0:
        raise ValueError(f"q must be finite and >= 0, got {q!r}")
    if not math.isfinite(n_tilde) or n_tilde < 1:
        raise InvalidAdjustedSize(f"adjusted mean sample size must be >= 1, got {n_tilde!r}")
    if q <= k - 1:
        return 0.0
    return (q - (k - 1)) / (q + (k - 1) * (n_tilde - 1))


def i_squared_a_smd(q: float, k: int, w_tilde: float) -> float:
    """Adjusted heterogeneity for standardized mean differences.

    Same form as ``i_squared_a`` with the adjusted mean weight in place of the
    adjusted mean sample size; the standardized scale fixes the population
    variance at 1, so ``w_tilde`` may legitimately fall below 1.
    """
    if k < 2:
        raise InsufficientStudies(f"need at least 2 studies, got {k}")
    if not math.isfinite(q) or q < 0:
        raise ValueError(f"q must be finite and >= 0, got {q!r}")
    if not math.isfinite(w_tilde) or w_tilde <= 0:
        raise InvalidAdjustedSize(f"adjusted mean weight must be > 0, got {w_tilde!r}")
    if q <= k - 1:
        return 0.0
    return (q - (k - 1)) / (q + (k - 1) * (w_tilde - 1))


def msb_ma(dataset: MetaDataset) -> float:
    """Mean square between populations: sum n_i*(y_i - ybar)^2 / (k-1).

    ``ybar`` is the sample-size-weighted mean sum(n_i*y_i)/sum(n_i).
    """
    n, y = dataset.n, dataset.y
    ybar = float((n * y).sum()) / float(n.sum())
    return float((n * (y - ybar) ** 2).sum()) / (dataset.k - 1)


def msw_ma(dataset: MetaDataset) -> float:
    """Mean square within populations, by effect-size metric.

    mean: sum n_i*(n_i-1)*var_y_i / sum (n_i - 1)
    md:   pooled over both arms, sum {n(n-1)*se^2} over arms / (sum(n_t+n_c) - 2k)
    smd:  exactly 1, the standardized scale
    """
    if dataset.kind is EffectSizeKind.STANDARDIZED_MEAN_DIFFERENCE:
        return 1.0
    if dataset.kind is EffectSizeKind.MEAN_DIFFERENCE:
        if dataset.arms is None:
            raise InvalidStudy("mean-difference MSW needs per-arm detail; dataset has none")
        num = 0.0
        den = 0
        for arm in dataset.arms:
            num += arm.n_t * (arm.n_t - 1) * arm.se_t**2
            num += arm.n_c * (arm.n_c - 1) * arm.se_c**2
            den += arm.n_t + arm.n_c - 2
        if den <= 0:
            raise InsufficientDegreesOfFreedom("no within-arm degrees of freedom")
        return num / den
    n, var_y = dataset.n, dataset.var_y
    if np.any(n < 2):
        raise InsufficientDegreesOfFreedom(
            "within-population mean square needs every study size >= 2"
        )
    return float((n * (n - 1) * var_y).sum()) / float((n - 1).sum())


def i_squared_anova(msb: float, msw: float, n_tilde: float) -> float:
    """Variance-components estimator max{(MSB-MSW)/(MSB+(n_tilde-1)*MSW), 0}."""
    if not math.isfinite(msw) or msw <= 0:
        raise InvalidVariance(f"within mean square must be > 0, got {msw!r}")
    if not math.isfinite(msb) or msb < 0:
        raise ValueError(f"between mean square must be >= 0, got {msb!r}")
    if not math.isfinite(n_tilde) or n_tilde <= 0:
        raise InvalidAdjustedSize(f"adjusted mean sample size must be > 0, got {n_tilde!r}")
    if msb <= msw:
        return 0.0
    return (msb - msw) / (msb + (n_tilde - 1) * msw)


def icc_ht(tau2: float, sigma_y2: float) -> float:
    """Heterogeneity between observed effect sizes: tau2 / (tau2 + sigma_y2).

    Depends on the within-study variance of the effect sizes and hence on the
    study sample sizes.
    """
    if not math.isfinite(sigma_y2) or sigma_y2 <= 0:
        raise InvalidVariance(f"within-study variance must be > 0, got {sigma_y2!r}")
    if not math.isfinite(tau2) or tau2 < 0:
        raise ValueError(f"between-study variance must be >= 0, got {tau2!r}")
    return tau2 / (tau2 + sigma_y2)


def icc_ma(tau2: float, sigma2_pop: float) -> float:
    """Heterogeneity between study populations: tau2 / (tau2 + sigma2_pop).

    Uses the common population variance of single observations, so the value
    is invariant to the study sample sizes.
    """
    if not math.isfinite(sigma2_pop) or sigma2_pop <= 0:
        raise InvalidVariance(f"population variance must be > 0, got {sigma2_pop!r}")
    if not math.isfinite(tau2) or tau2 < 0:
        raise ValueError(f"between-study variance must be >= 0, got {tau2!r}")
    return tau2 / (tau2 + sigma2_pop)


def _safe_ratio(num: float, den: float, fallback: float) -> float:
    if den <= 0:
        return fallback
    return num / den


def full_panel(dataset: MetaDataset) -> HeterogeneityPanel:
    """Compute every heterogeneity statistic for one dataset.

    The adjusted statistic uses the adjusted mean sample size for mean and
    mean-difference data and the adjusted mean weight for standardized mean
    differences; the variance-components statistic always uses effective
    sample sizes. Raw (untruncated) ratios are kept alongside the reported,
    zero-truncated values.
    """
    k = dataset.k
    w, sum_w, sum_w2, sum_wy = _as_weight_sums(dataset)
    ybar_w = sum_wy / sum_w
    q = float((w * (dataset.y - ybar_w) ** 2).sum())

    c = sum_w - sum_w2 / sum_w
    if c <= 0:
        raise DegenerateWeights(
            "weight dispersion sum(w) - sum(w^2)/sum(w) is not positive"
        )
    tau2_raw = (q - (k - 1)) / c
    tau2 = max(tau2_raw, 0.0)
    sig_t2 = (k - 1) / c

    n_tilde = adjusted_mean_n(dataset.n)
    if dataset.kind is EffectSizeKind.STANDARDIZED_MEAN_DIFFERENCE:
        w_tilde: float | None = adjusted_mean_weight(w)
        adjustment, adjustment_label = w_tilde, "w_tilde"
        i2_a = i_squared_a_smd(q, k, w_tilde)
    else:
        w_tilde = None
        adjustment, adjustment_label = n_tilde, "n_tilde"
        i2_a = i_squared_a(q, k, n_tilde)

    i2 = i_squared(q, k)
    i2_raw = _safe_ratio(q - (k - 1), q, fallback=0.0)
    i2_a_raw = _safe_ratio(q - (k - 1), q + (k - 1) * (adjustment - 1), fallback=0.0)

    n_ybar = float((dataset.n * dataset.y).sum()) / float(dataset.n.sum())
    msb = msb_ma(dataset)
    msw = msw_ma(dataset)
    i2_anova = i_squared_anova(msb, msw, n_tilde)
    i2_anova_raw = _safe_ratio(msb - msw, msb + (n_tilde - 1) * msw, fallback=0.0)

    return HeterogeneityPanel(
        kind=dataset.kind,
        k=k,
        q=q,
        sum_w=sum_w,
        sum_w2=sum_w2,
        sum_wy=sum_wy,
        ybar_w=ybar_w,
        ybar_n=n_ybar,
        tau2_dl=tau2,
        tau2_raw=tau2_raw,
        sigma_tilde2=sig_t2,
        n_tilde=n_tilde,
        w_tilde=w_tilde,
        adjustment=adjustment,
        adjustment_label=adjustment_label,
        i2=i2,
        i2_raw=i2_raw,
        i2_a=i2_a,
        i2_a_raw=i2_a_raw,
        msb=msb,
        msw=msw,
        i2_anova=i2_anova,
        i2_anova_raw=i2_anova_raw,
    )
