"""Monte Carlo engine for benchmarking the heterogeneity statistics.

Raw individual observations are generated under three models (one-arm means,
two-arm mean differences, two-arm standardized mean differences with
study-specific scales), collapsed to the summary data a meta-analyst would
see, and pushed through the full statistics panel. Replications use
independent child streams spawned from the root seed, so results are
reproducible bit-for-bit regardless of worker count.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .effects import SmdMethod, build_dataset
from .errors import InsufficientSample, InvalidStudy, InvalidVariance
from .model import (
    EffectSizeKind,
    MetaDataset,
    TwoArmStudy,
    adjusted_mean_n,
    full_panel,
    icc_ma,
)

STAT_NAMES = ("i2", "i2_a", "i2_anova")


class VarianceModel(enum.Enum):
    """How the population variance of each study is chosen."""

    COMMON = "common"
    GAMMA = "gamma"


class SizeSchedule(enum.Enum):
    """Rule mapping the 1-based study index i to its base sample size."""

    LINEAR = "linear"  # n_i = i * n_base
    CONSTANT = "constant"  # n_i = n_base


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo scenario.

    For two-arm metrics both arms of study i share the scheduled size, the
    between-study deviations of each arm are N(0, tau2/2) so the deviation of
    the difference has variance tau2, and ``sigma2`` is the per-observation
    error variance. Standardized-mean-difference scenarios fix the error
    variance at 1 and rescale every observation of study i by a fresh
    Uniform(0.5, 1.5) draw.
    """

    kind: EffectSizeKind
    k: int
    n_base: int
    tau2: float
    sigma2: float = 1.0
    mu: float = 0.0
    mu_t: float = 0.0
    mu_c: float = 0.0
    schedule: SizeSchedule = SizeSchedule.LINEAR
    variance_model: VarianceModel = VarianceModel.COMMON
    gamma_shape: float = 25.0
    gamma_scale: float = 4.0
    reps: int = 10_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.k < 2:
            raise InvalidStudy(f"k must be >= 2, got {self.k}")
        if self.n_base < 2:
            raise InsufficientSample(f"n_base must be >= 2, got {self.n_base}")
        if self.reps < 1:
            raise InvalidStudy(f"reps must be >= 1, got {self.reps}")
        if self.workers < 1:
            raise InvalidStudy(f"workers must be >= 1, got {self.workers}")
        if self.tau2 < 0 or not math.isfinite(self.tau2):
            raise InvalidVariance(f"tau2 must be finite and >= 0, got {self.tau2}")
        if self.sigma2 <= 0 or not math.isfinite(self.sigma2):
            raise InvalidVariance(f"sigma2 must be finite and > 0, got {self.sigma2}")
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise InvalidVariance("gamma_shape and gamma_scale must be > 0")
        if (
            self.variance_model is VarianceModel.GAMMA
            and self.kind is not EffectSizeKind.MEAN
        ):
            raise InvalidStudy("the gamma variance model applies to the mean metric only")
        if (
            self.kind is EffectSizeKind.STANDARDIZED_MEAN_DIFFERENCE
            and self.sigma2 != 1.0
        ):
            raise InvalidVariance("standardized scenarios fix sigma2 at 1.0")

    def study_sizes(self) -> np.ndarray:
        idx = np.arange(1, self.k + 1)
        if self.schedule is SizeSchedule.LINEAR:
            return idx * self.n_base
        return np.full(self.k, self.n_base)


def true_icc_ma(config: SimConfig) -> float:
    """Population heterogeneity the estimators are benchmarked against.

    Under the gamma variance model the per-replication truth varies; the
    reference value uses the mean population variance gamma_shape*gamma_scale.
    """
    if config.kind is EffectSizeKind.STANDARDIZED_MEAN_DIFFERENCE:
        return icc_ma(config.tau2, 1.0) if config.tau2 > 0 else 0.0
    if config.variance_model is VarianceModel.GAMMA:
        return icc_ma(config.tau2, config.gamma_shape * config.gamma_scale)
    return icc_ma(config.tau2, config.sigma2)


def gen_one_arm(config: SimConfig, rng: np.random.Generator) -> MetaDataset:
    """Generate one replication of one-arm summary data.

    Each study i draws a between-study deviation N(0, tau2) and n_i errors
    N(0, sigma_i^2); the emitted triple is the sample mean, the variance of
    the mean s^2/n_i, and n_i.
    """
    sizes = config.study_sizes()
    if np.any(sizes < 2):
        raise InsufficientSample("every study needs at least 2 observations")
    deltas = rng.normal(0.0, math.sqrt(config.tau2), config.k)
    if config.variance_model is VarianceModel.GAMMA:
        pop_vars = rng.gamma(config.gamma_shape, config.gamma_scale, config.k)
    else:
        pop_vars = np.full(config.k, config.sigma2)
    y = np.empty(config.k)
    var_y = np.empty(config.k)
    for i in range(config.k):
        errors = rng.normal(0.0, math.sqrt(pop_vars[i]), sizes[i])
        y[i] = config.mu + deltas[i] + errors.mean()
        var_y[i] = errors.var(ddof=1) / sizes[i]
    return MetaDataset(kind=EffectSizeKind.MEAN, y=y, var_y=var_y, n=sizes)


def _gen_two_arm(
    config: SimConfig,
    rng: np.random.Generator,
    kind: EffectSizeKind,
    scales: np.ndarray | None = None,
) -> MetaDataset:
    sizes = config.study_sizes()
    if np.any(sizes < 2):
        raise InsufficientSample("every arm needs at least 2 observations")
    sd_delta = math.sqrt(config.tau2 / 2.0)
    deltas_t = rng.normal(0.0, sd_delta, config.k)
    deltas_c = rng.normal(0.0, sd_delta, config.k)
    sd_err = math.sqrt(config.sigma2)
    arms = []
    for i in range(config.k):
        n = int(sizes[i])
        errors = rng.normal(0.0, sd_err, 2 * n)
        obs_t = config.mu_t + deltas_t[i] + errors[:n]
        obs_c = config.mu_c + deltas_c[i] + errors[n:]
        if scales is not None:
            obs_t = scales[i] * obs_t
            obs_c = scales[i] * obs_c
        arms.append(
            TwoArmStudy(
                y_t=float(obs_t.mean()),
                n_t=n,
                se_t=float(obs_t.std(ddof=1) / math.sqrt(n)),
                y_c=float(obs_c.mean()),
                n_c=n,
                se_c=float(obs_c.std(ddof=1) / math.sqrt(n)),
            )
        )
    return build_dataset(arms, kind, smd_method=SmdMethod.HEDGES_G)


def gen_two_arm_md(config: SimConfig, rng: np.random.Generator) -> MetaDataset:
    """Generate one replication of two-arm mean-difference summary data."""
    return _gen_two_arm(config, rng, EffectSizeKind.MEAN_DIFFERENCE)


def gen_two_arm_smd(config: SimConfig, rng: np.random.Generator) -> MetaDataset:
    """Generate one replication of standardized-mean-difference summary data.

    Study scales sigma_i ~ Uniform(0.5, 1.5) are drawn first, then every
    observation of study i is multiplied by sigma_i before summarizing.
    """
    scales = rng.uniform(0.5, 1.5, config.k)
    return _gen_two_arm(
        config, rng, EffectSizeKind.STANDARDIZED_MEAN_DIFFERENCE, scales=scales
    )


def generate_dataset(config: SimConfig, rng: np.random.Generator) -> MetaDataset:
    """Dispatch to the generator for the configured effect-size metric."""
    if config.kind is EffectSizeKind.MEAN:
        return gen_one_arm(config, rng)
    if config.kind is EffectSizeKind.MEAN_DIFFERENCE:
        return gen_two_arm_md(config, rng)
    return gen_two_arm_smd(config, rng)


@dataclass(frozen=True)
class StatSummary:
    """Boxplot-ready summary: mean, quartiles, and 1.5*IQR whiskers."""

    mean: float
    q1: float
    median: float
    q3: float
    lo_whisker: float
    hi_whisker: float


def summarize(draws: np.ndarray) -> StatSummary:
    """Tukey summary of a draw vector; whiskers are the most extreme draws
    within 1.5 interquartile ranges of the box."""
    q1, median, q3 = (float(v) for v in np.quantile(draws, (0.25, 0.5, 0.75)))
    iqr = q3 - q1
    inside = draws[(draws >= q1 - 1.5 * iqr) & (draws <= q3 + 1.5 * iqr)]
    return StatSummary(
        mean=float(draws.mean()),
        q1=q1,
        median=median,
        q3=q3,
        lo_whisker=float(inside.min()),
        hi_whisker=float(inside.max()),
    )


@dataclass(frozen=True, eq=False)
class SimResult:
    """Per-replication statistic draws plus their summaries.

    ``draws`` maps each statistic name (i2, i2_a, i2_anova, msb, msw) to its
    vector of per-replication values in replication order.
    """

    config: SimConfig
    draws: Mapping[str, np.ndarray]
    icc_ma_true: float
    summaries: Mapping[str, StatSummary] = field(default_factory=dict)

    @classmethod
    def from_draws(cls, config: SimConfig, table: np.ndarray) -> "SimResult":
        draws = {
            name: table[:, i] for i, name in enumerate(STAT_NAMES + ("msb", "msw"))
        }
        for arr in draws.values():
            arr.flags.writeable = False
        summaries = {name: summarize(draws[name]) for name in STAT_NAMES}
        return cls(
            config=config,
            draws=draws,
            icc_ma_true=true_icc_ma(config),
            summaries=summaries,
        )


def _simulate_chunk(config: SimConfig, seeds: Iterable[np.random.SeedSequence]) -> np.ndarray:
    seeds = list(seeds)
    out = np.empty((len(seeds), 5))
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        panel = full_panel(generate_dataset(config, rng))
        out[i] = (panel.i2, panel.i2_a, panel.i2_anova, panel.msb, panel.msw)
    return out


def _chunked(items: list, pieces: int) -> list[list]:
    size = max(1, math.ceil(len(items) / pieces))
    return [items[i : i + size] for i in range(0, len(items), size)]


def run_monte_carlo(config: SimConfig) -> SimResult:
    """Run all replications of a scenario.

    Replication r always uses the r-th child stream of the root seed and the
    results are reduced in replication order, so the outcome is identical for
    any worker count.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.reps)
    if config.workers > 1 and config.reps > 1:
        chunks = _chunked(children, config.workers * 4)
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_simulate_chunk, [config] * len(chunks), chunks))
        table = np.vstack(parts)
    else:
        table = _simulate_chunk(config, children)
    return SimResult.from_draws(config, table)


@dataclass(frozen=True)
class Lemma1Report:
    """Monte Carlo check of the mean-square moment identities.

    For one-arm data with a common population variance, the between mean
    square has expectation n_tilde*tau2 + sigma2 and the within mean square
    has expectation sigma2.
    """

    reps: int
    n_tilde: float
    mean_msb: float
    mean_msw: float
    expected_msb: float
    expected_msw: float
    rel_dev_msb: float
    rel_dev_msw: float


def lemma1_check(config: SimConfig, reps: int | None = None) -> Lemma1Report:
    """Compare Monte Carlo means of MSB and MSW with their analytic targets."""
    if config.kind is not EffectSizeKind.MEAN:
        raise InvalidStudy("the moment identities are checked on the mean metric")
    if config.variance_model is not VarianceModel.COMMON:
        raise InvalidStudy("the moment identities assume a common population variance")
    if reps is not None:
        config = replace(config, reps=reps)
    result = run_monte_carlo(config)
    n_tilde = adjusted_mean_n(config.study_sizes())
    expected_msb = n_tilde * config.tau2 + config.sigma2
    expected_msw = config.sigma2
    mean_msb = float(result.draws["msb"].mean())
    mean_msw = float(result.draws["msw"].mean())
    return Lemma1Report(
        reps=config.reps,
        n_tilde=n_tilde,
        mean_msb=mean_msb,
        mean_msw=mean_msw,
        expected_msb=expected_msb,
        expected_msw=expected_msw,
        rel_dev_msb=abs(mean_msb - expected_msb) / expected_msb,
        rel_dev_msw=abs(mean_msw - expected_msw) / expected_msw,
    )
