"""Effect-size construction from two-arm summary data.

Turns per-arm means, standard errors and sample sizes into the canonical
(effect size, within-study variance, effective sample size) triples consumed
by the statistics in :mod:`metahet.model`, for the mean difference and the
standardized mean difference (Hedges' g by default).

References
----------
Hedges, L. V. (1981). Distribution theory for Glass's estimator of effect
size and related estimators. Journal of Educational Statistics, 6(2).
Lin, L., & Aloe, A. M. (2021). Evaluation of various estimators for
standardized mean difference in meta-analysis. Statistics in Medicine, 40(2).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateVariance, InsufficientStudies, InvalidStudy, InvalidVariance
from .model import EffectSizeKind, MetaDataset, TwoArmStudy


class SmdMethod(enum.Enum):
    """Estimator used for the standardized mean difference."""

    HEDGES_G = "hedges"
    COHENS_D = "cohen"


@dataclass(frozen=True)
class DerivedEffect:
    """Canonical triple derived from one two-arm study.

    ``n_eff = n_t*n_c/(n_t+n_c)`` is the effective sample size that makes the
    inverse-variance weight of a two-arm study comparable to a single-arm
    study of that size.
    """

    y: float
    var_y: float
    n_eff: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.y):
            raise InvalidStudy(f"effect size must be finite, got {self.y!r}")
        if not math.isfinite(self.var_y) or self.var_y <= 0:
            raise InvalidVariance(f"within-study variance must be > 0, got {self.var_y!r}")
        if not math.isfinite(self.n_eff) or self.n_eff <= 0:
            raise InvalidStudy(f"effective sample size must be > 0, got {self.n_eff!r}")


def _effective_size(study: TwoArmStudy) -> float:
    return study.n_t * study.n_c / (study.n_t + study.n_c)


def md_effect(study: TwoArmStudy) -> DerivedEffect:
    """Mean difference y_t - y_c with variance se_t^2 + se_c^2."""
    return DerivedEffect(
        y=study.y_t - study.y_c,
        var_y=study.se_t**2 + study.se_c**2,
        n_eff=_effective_size(study),
    )


def pooled_sd(study: TwoArmStudy) -> float:
    """Pooled standard deviation of the raw observations across both arms.

    Arm standard deviations are reconstructed from the standard errors as
    sd = se*sqrt(n), then pooled with degrees-of-freedom weights:
    sqrt({n_t(n_t-1)se_t^2 + n_c(n_c-1)se_c^2} / (n_t + n_c - 2)).
    """
    df = study.n_t + study.n_c - 2
    pooled_var = (
        study.n_t * (study.n_t - 1) * study.se_t**2
        + study.n_c * (study.n_c - 1) * study.se_c**2
    ) / df
    return math.sqrt(pooled_var)


def smd_effect(study: TwoArmStudy, method: SmdMethod = SmdMethod.HEDGES_G) -> DerivedEffect:
    """Standardized mean difference for one study.

    Cohen's d is (y_t - y_c) / pooled_sd. Hedges' g applies the small-sample
    bias correction J = 1 - 3/(4*(n_t+n_c-2) - 1). The sampling variance is
    (n_t+n_c)/(n_t*n_c) + e^2/(2*(n_t+n_c)) with e the reported effect (g or
    d); for Hedges' g this is the variant that scores the correction term by
    g^2 rather than d^2.
    """
    sp = pooled_sd(study)
    if sp == 0.0:
        raise DegenerateVariance("pooled standard deviation is zero")
    d = (study.y_t - study.y_c) / sp
    if method is SmdMethod.HEDGES_G:
        j = 1.0 - 3.0 / (4.0 * (study.n_t + study.n_c - 2) - 1.0)
        effect = j * d
    else:
        effect = d
    total = study.n_t + study.n_c
    var = total / (study.n_t * study.n_c) + effect**2 / (2.0 * total)
    return DerivedEffect(y=effect, var_y=var, n_eff=_effective_size(study))


def build_dataset(
    studies: Sequence[TwoArmStudy],
    kind: EffectSizeKind,
    smd_method: SmdMethod = SmdMethod.HEDGES_G,
    labels: Sequence[str] | None = None,
) -> MetaDataset:
    """Assemble a MetaDataset from two-arm records for the given metric.

    The two-arm records are retained on the dataset so the within-population
    mean square can use per-arm detail.
    """
    if len(studies) < 2:
        raise InsufficientStudies(f"need at least 2 studies, got {len(studies)}")
    if kind is EffectSizeKind.MEAN_DIFFERENCE:
        derived = [md_effect(s) for s in studies]
    elif kind is EffectSizeKind.STANDARDIZED_MEAN_DIFFERENCE:
        derived = [smd_effect(s, smd_method) for s in studies]
    else:
        raise InvalidStudy("two-arm records cannot build a mean-metric dataset")
    return MetaDataset(
        kind=kind,
        y=np.array([d.y for d in derived], dtype=float),
        var_y=np.array([d.var_y for d in derived], dtype=float),
        n=np.array([d.n_eff for d in derived], dtype=float),
        arms=tuple(studies),
        labels=tuple(labels) if labels is not None else None,
    )
