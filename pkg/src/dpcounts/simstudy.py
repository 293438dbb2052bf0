"""Desk-scale utility study of the synthesizers.

Four scenarios cross heterogeneity in population sizes against heterogeneity
in true event rates. For each replicate dataset the three approaches (the
baseline, Poisson-gamma smoothed to the national rate, Poisson-gamma
smoothed to state rates) are calibrated to the same budget, a posterior rate
draw is scored against the truth by rMSE per 100,000, and urban/rural and
two-state contrasts are tracked. Replicates own derived random streams, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import CountDataset, PriorModel, PriorSpec, RngStream, sample_dirichlet, sample_gamma, sample_multinomial
from .dirichlet_mult import calibrate_md
from .errors import DomainError, UsageError
from .poisson_gamma import RATE_FLOOR_SCALE, TargetRule, calibrate_pg, state_target_rates

RMSE_SCALE = 100_000.0  # rates are reported per 100,000 population


class PopMode(str, Enum):
    UNIFORM = "uniform"
    HETEROGENEOUS = "heterogeneous"


class RateMode(str, Enum):
    UNIFORM = "uniform"
    HETEROGENEOUS = "heterogeneous"


class SynthMethod(str, Enum):
    MD = "md"
    PG_NATIONAL = "pg-national"
    PG_STATE = "pg-state"


@dataclass(frozen=True)
class Scenario:
    pop_mode: PopMode
    rate_mode: RateMode
    n_groups: int
    y_total: int
    n_total: float
    seed: int
    n_states: int = 10
    rate_sigma: float = 0.3
    pop_sigma: float = 1.25

    def __post_init__(self):
        if self.n_groups < 2:
            raise DomainError("need at least two groups")
        if self.y_total < 1:
            raise DomainError("y_total must be positive")
        if not self.n_total > 0:
            raise DomainError("n_total must be positive")
        if not 2 <= self.n_states <= self.n_groups:
            raise DomainError("n_states must lie in [2, n_groups]")

    @property
    def label(self) -> str:
        pop = "same-n" if self.pop_mode is PopMode.UNIFORM else "diff-n"
        rate = "same-rate" if self.rate_mode is RateMode.UNIFORM else "diff-rate"
        return f"{pop}_{rate}"


@dataclass(frozen=True)
class GroundTruth:
    populations: np.ndarray
    rates: np.ndarray
    state_ids: tuple[str, ...]
    urban: np.ndarray  # boolean flags, top population quintile
    region_a: np.ndarray  # indices of the smallest-population state
    region_b: np.ndarray  # indices of the largest-population state


@dataclass(frozen=True)
class StudyResult:
    scenario: str
    method: SynthMethod
    epsilon: float
    rmse_mean: float
    rmse_lo: float
    rmse_hi: float
    urban_rate: float
    rural_rate: float
    region_contrast: float

    def __post_init__(self):
        if not self.rmse_lo <= self.rmse_mean <= self.rmse_hi:
            raise DomainError("rMSE band must bracket its mean")


def gen_truth(scenario: Scenario) -> GroundTruth:
    """Ground-truth populations and rates for one scenario.

    Heterogeneous populations are log-normal, rescaled to the fixed total;
    heterogeneous rates multiply the overall rate by a log-normal factor with
    a shared state-level component, mean-corrected so the average rate stays
    at y_total / n_total. Urban means top population quintile (by index for
    degenerate uniform populations, where the split is arbitrary).
    """
    rng = RngStream(scenario.seed).child(0)
    gen = rng.generator
    size = scenario.n_groups
    # contiguous blocks of groups per state
    bounds = np.linspace(0, size, scenario.n_states + 1).astype(int)
    state_index = np.zeros(size, dtype=np.int64)
    for s in range(scenario.n_states):
        state_index[bounds[s]:bounds[s + 1]] = s
    state_ids = tuple(f"s{state_index[i]:03d}" for i in range(size))

    if scenario.pop_mode is PopMode.HETEROGENEOUS:
        raw = np.exp(scenario.pop_sigma * gen.standard_normal(size))
        populations = raw * (scenario.n_total / raw.sum())
        urban = populations > np.quantile(populations, 0.8)
    else:
        populations = np.full(size, scenario.n_total / size)
        urban = np.arange(size) < max(size // 5, 1)

    base_rate = scenario.y_total / scenario.n_total
    if scenario.rate_mode is RateMode.HETEROGENEOUS:
        state_effect = gen.standard_normal(scenario.n_states)[state_index]
        county_effect = gen.standard_normal(size)
        u = (state_effect + county_effect) / math.sqrt(2.0)
        sigma = scenario.rate_sigma
        rates = base_rate * np.exp(sigma * u - 0.5 * sigma * sigma)
    else:
        rates = np.full(size, base_rate)

    state_pops = np.bincount(state_index, weights=populations, minlength=scenario.n_states)
    a_state = int(np.argmin(state_pops))
    b_state = int(np.argmax(state_pops))
    if a_state == b_state:  # degenerate uniform populations
        b_state = (a_state + 1) % scenario.n_states
    region_a = np.flatnonzero(state_index == a_state)
    region_b = np.flatnonzero(state_index == b_state)
    return GroundTruth(populations=populations, rates=rates, state_ids=state_ids,
                       urban=urban, region_a=region_a, region_b=region_b)


def gen_replicate(populations, rates, y_total: int, rng: RngStream,
                  state_ids=None) -> CountDataset:
    """One replicate dataset: the multinomial allocation of the fixed total
    with cell weights n_i * rate_i, which is exactly the law of independent
    Poisson counts conditioned on their sum."""
    populations = np.asarray(populations, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    weights = populations * rates
    counts = sample_multinomial(int(y_total), weights / weights.sum(), rng)
    return CountDataset.from_counts(counts, populations, state_ids=state_ids)


def rmse(estimate, truth) -> float:
    """Root mean squared rate error, scaled to events per 100,000."""
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise UsageError("estimate and truth must have equal length")
    return RMSE_SCALE * float(np.sqrt(np.mean((estimate - truth) ** 2)))


def rate_estimates(method: SynthMethod, data: CountDataset, prior: PriorSpec,
                   rng: RngStream) -> np.ndarray:
    """One posterior rate draw per group, the quantity a release would be
    built from: a Dirichlet weight draw scaled by total/population for the
    baseline, a gamma posterior draw for the Poisson-gamma methods."""
    method = SynthMethod(method)
    if method is SynthMethod.MD:
        if prior.mode is not PriorModel.MULTINOMIAL_DIRICHLET:
            raise UsageError("MD estimates need a multinomial-Dirichlet prior")
        theta = sample_dirichlet(data.counts + prior.alpha, rng)
        return theta * data.total / data.populations
    if prior.mode is not PriorModel.POISSON_GAMMA:
        raise UsageError("PG estimates need a Poisson-gamma prior")
    return np.asarray(sample_gamma(data.counts + prior.a,
                                   data.populations + prior.b, rng))


def region_contrast(estimates, group_a, group_b, populations) -> float:
    """Ratio of population-weighted mean estimated rates, group A over B."""
    estimates = np.asarray(estimates, dtype=np.float64)
    populations = np.asarray(populations, dtype=np.float64)
    group_a = np.asarray(group_a, dtype=np.int64)
    group_b = np.asarray(group_b, dtype=np.int64)
    if group_a.size == 0 or group_b.size == 0:
        raise UsageError("contrast groups must be nonempty")
    if np.intersect1d(group_a, group_b).size:
        raise UsageError("contrast groups must be disjoint")

    def weighted(idx):
        return float(np.sum(populations[idx] * estimates[idx]) / np.sum(populations[idx]))

    return weighted(group_a) / weighted(group_b)


@dataclass(frozen=True)
class StudyConfig:
    n_groups: int = 200
    y_total: int = 1000
    n_total: float = 10_000_000.0
    n_replicates: int = 50
    epsilons: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0)
    scenarios: tuple[tuple[PopMode, RateMode], ...] = (
        (PopMode.UNIFORM, RateMode.UNIFORM),
        (PopMode.HETEROGENEOUS, RateMode.UNIFORM),
        (PopMode.UNIFORM, RateMode.HETEROGENEOUS),
        (PopMode.HETEROGENEOUS, RateMode.HETEROGENEOUS),
    )
    seed: int = 20260808
    n_states: int = 10
    n_workers: int = 1
    state_targets_from_truth: bool = False
    # when set, the generated scenarios are replaced by replicates of this
    # dataset's populations and (floored) crude rates
    ingested: CountDataset | None = None

    def __post_init__(self):
        if self.n_replicates < 2:
            raise DomainError("need at least two replicates for bands")


def truth_from_dataset(data: CountDataset) -> GroundTruth:
    """Ground truth built from an ingested dataset: its populations, its
    floored crude rates, its state labels. Needs at least two states so the
    two-region contrast is defined."""
    if data.state_ids is None or len(set(data.state_ids)) < 2:
        raise UsageError("ingested study needs at least two distinct states")
    rates = np.maximum(data.crude_rates(), RATE_FLOOR_SCALE / data.populations)
    urban = data.populations > np.quantile(data.populations, 0.8)
    if urban.all() or not urban.any():
        urban = np.arange(data.n_groups) < max(data.n_groups // 5, 1)
    ids = np.array(data.state_ids)
    states, state_index = np.unique(ids, return_inverse=True)
    state_pops = np.bincount(state_index, weights=data.populations,
                             minlength=states.size)
    a_state = int(np.argmin(state_pops))
    b_state = int(np.argmax(state_pops))
    if a_state == b_state:
        b_state = (a_state + 1) % states.size
    return GroundTruth(
        populations=data.populations.copy(),
        rates=rates,
        state_ids=data.state_ids,
        urban=urban,
        region_a=np.flatnonzero(state_index == a_state),
        region_b=np.flatnonzero(state_index == b_state),
    )


_METHODS = (SynthMethod.MD, SynthMethod.PG_NATIONAL, SynthMethod.PG_STATE)


def _scenario_objects(config: StudyConfig) -> list[Scenario]:
    return [
        Scenario(pop_mode=pop, rate_mode=rate, n_groups=config.n_groups,
                 y_total=config.y_total, n_total=config.n_total,
                 seed=RngStream(config.seed).child(900 + k).stream_id,
                 n_states=config.n_states)
        for k, (pop, rate) in enumerate(config.scenarios)
    ]


def _true_state_rates(truth: GroundTruth) -> np.ndarray:
    ids = np.array(truth.state_ids)
    rates = np.empty(len(ids))
    for state in np.unique(ids):
        mask = ids == state
        rates[mask] = float(np.sum(truth.populations[mask] * truth.rates[mask])
                            / np.sum(truth.populations[mask]))
    return rates


def _replicate_metrics(scenario_idx: int, rep: int, truth: GroundTruth,
                       y_total: int, config: StudyConfig,
                       pg_national_cals: dict) -> dict:
    master = RngStream(config.seed)
    n_groups = truth.populations.size
    data = gen_replicate(truth.populations, truth.rates, y_total,
                         master.child(scenario_idx, rep, 0),
                         state_ids=truth.state_ids)
    out = {}
    for e_idx, epsilon in enumerate(config.epsilons):
        for m_idx, method in enumerate(_METHODS):
            if method is SynthMethod.MD:
                alpha_min = calibrate_md(epsilon, y_total).alpha_min
                prior = PriorSpec.multinomial_dirichlet(np.full(n_groups, alpha_min))
            elif method is SynthMethod.PG_NATIONAL:
                cal = pg_national_cals[e_idx]
                prior = cal.prior()
            else:
                targets = (_true_state_rates(truth) if config.state_targets_from_truth
                           else state_target_rates(data))
                cal = calibrate_pg(epsilon, data, target_rates=targets,
                                   rule=TargetRule.CUSTOM)
                prior = cal.prior()
            rng = master.child(scenario_idx, rep, 1 + m_idx, e_idx)
            estimates = rate_estimates(method, data, prior, rng)
            out[(method, e_idx)] = {
                "rmse": rmse(estimates, truth.rates),
                "urban": float(np.sum(truth.populations[truth.urban] * estimates[truth.urban])
                               / np.sum(truth.populations[truth.urban])),
                "rural": float(np.sum(truth.populations[~truth.urban] * estimates[~truth.urban])
                               / np.sum(truth.populations[~truth.urban])),
                "contrast": region_contrast(estimates, truth.region_a,
                                            truth.region_b, truth.populations),
            }
    return out


def run_study(config: StudyConfig) -> list[StudyResult]:
    """Run every scenario and return one result row per
    (scenario, method, epsilon). Deterministic for a fixed config seed,
    independent of n_workers."""
    if config.ingested is not None:
        cases = [("ingested", truth_from_dataset(config.ingested),
                  config.ingested.total)]
    else:
        cases = [(scenario.label, gen_truth(scenario), config.y_total)
                 for scenario in _scenario_objects(config)]

    results = []
    for scenario_idx, (label, truth, y_total) in enumerate(cases):
        # national-target calibrations do not depend on the replicate data
        ref_data = gen_replicate(truth.populations, truth.rates, y_total,
                                 RngStream(config.seed).child(scenario_idx, 0, 0),
                                 state_ids=truth.state_ids)
        pg_national_cals = {
            e_idx: calibrate_pg(eps, ref_data, rule=TargetRule.DEFAULT_NATIONAL)
            for e_idx, eps in enumerate(config.epsilons)
        }

        def work(rep: int) -> dict:
            return _replicate_metrics(scenario_idx, rep, truth, y_total,
                                      config, pg_national_cals)

        if config.n_workers > 1:
            with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
                per_rep = list(pool.map(work, range(config.n_replicates)))
        else:
            per_rep = [work(rep) for rep in range(config.n_replicates)]

        for e_idx, epsilon in enumerate(config.epsilons):
            for method in _METHODS:
                series = [rep_out[(method, e_idx)] for rep_out in per_rep]
                rmses = np.array([s["rmse"] for s in series])
                lo, hi = np.percentile(rmses, [2.5, 97.5])
                results.append(StudyResult(
                    scenario=label,
                    method=method,
                    epsilon=float(epsilon),
                    rmse_mean=float(rmses.mean()),
                    rmse_lo=float(lo),
                    rmse_hi=float(hi),
                    urban_rate=float(np.mean([s["urban"] for s in series])),
                    rural_rate=float(np.mean([s["rural"] for s in series])),
                    region_contrast=float(np.mean([s["contrast"] for s in series])),
                ))
    return results
