"""Poisson-gamma synthesizer.

Counts are modeled as Poisson events with gamma-prior rates, then a synthetic
allocation is drawn conditional on the fixed public total. Heterogeneous
populations or smoothing targets make the mechanism leak more than the
multinomial-Dirichlet baseline, which shows up as a penalty factor nu in
(1, 2] multiplying the budget requirement:

    a_i >= z_total / (e^eps / nu_i - 1)

with nu_i driven by the structure ratio r comparing each group's prior mass
per capita against its complement. Everything needed to calibrate, sample,
and audit that statement lives here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import (
    CountDataset,
    PriorModel,
    PriorSpec,
    Provenance,
    RngStream,
    SyntheticDataset,
    sample_gamma,
    sample_multinomial,
)
from .errors import DomainError, InfeasibleBudgetError, UsageError

# Default floor for crude-rate smoothing targets, as a multiple of 1/population:
# keeps b = a / rate finite when a state observes zero events.
RATE_FLOOR_SCALE = 0.1


@dataclass(frozen=True)
class PgPosterior:
    """Gamma posterior for one group's event rate."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("posterior shape and rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate


def posterior_params(y_i: int, a_i: float, b_i: float, n_i: float) -> PgPosterior:
    """Conjugate update: rate | y ~ Gamma(y + a, n + b)."""
    if not (a_i > 0 and b_i > 0 and n_i > 0):
        raise DomainError("a, b, n must be positive")
    if y_i < 0:
        raise DomainError("count must be non-negative")
    return PgPosterior(shape=y_i + a_i, rate=n_i + b_i)


def predictive_params(y_i: int, a_i: float, b_i: float, n_i: float) -> tuple[float, float]:
    """Parameters (r, p) of the unconstrained posterior predictive
    z | y ~ NegBin(y + a, n / (b + 2n)). Note p < 1/2 always since b > 0."""
    post = posterior_params(y_i, a_i, b_i, n_i)
    return post.shape, n_i / (b_i + 2.0 * n_i)


def structure_ratio(i: int, populations, b) -> float:
    """Ratio (b_c/n_c + 2) / (b_i/n_i + 2) of group i's complement against
    group i, where the complement aggregates every other group's population
    and prior mass. Equals 1 exactly when b/n is constant across groups."""
    n = np.asarray(populations, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if n.shape != b.shape or n.ndim != 1 or n.size < 2:
        raise UsageError("populations and b must be equal-length vectors, I >= 2")
    if np.any(n <= 0) or np.any(b <= 0):
        raise DomainError("populations and b must be positive")
    if not 0 <= i < n.size:
        raise UsageError("group index out of range")
    n_c = n.sum() - n[i]
    b_c = b.sum() - b[i]
    return float((b_c / n_c + 2.0) / (b[i] / n[i] + 2.0))


def _pair_terms(y, a, log_r1: float, z_total: int) -> np.ndarray:
    z = np.arange(z_total + 1, dtype=np.float64)
    c1 = y[0] + a[0]
    c2 = y[1] + a[1]
    return (
        gammaln(z + c1)
        - gammaln(z + 1.0)
        + gammaln(z_total - z + c2)
        - gammaln(z_total - z + 1.0)
        + z * log_r1
    )


def _checked_pair(y, a, b, n):
    y = np.asarray(y, dtype=np.int64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    for name, arr in (("y", y), ("a", a), ("b", b), ("n", n)):
        if arr.shape != (2,):
            raise UsageError(f"{name} must be a length-2 vector")
    if np.any(y < 0):
        raise DomainError("counts must be non-negative")
    if np.any(a <= 0) or np.any(b <= 0) or np.any(n <= 0):
        raise DomainError("a, b, n must be positive")
    return y, a, b, n


def log_normalizer_from_ratio(y, a, r1: float, z_total: int) -> float:
    """Log of the constrained-total normalizer written in terms of the
    group-1 structure ratio; stable log-sum-exp over z_total + 1 terms."""
    if r1 <= 0:
        raise DomainError("structure ratio must be positive")
    if z_total < 0:
        raise DomainError("z_total must be non-negative")
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return float(logsumexp(_pair_terms(y, a, math.log(r1), int(z_total))))


def log_normalizer(y, n, a, b, z_total: int) -> float:
    """Log normalizer of the two-group conditional allocation pmf."""
    y, a, b, n = _checked_pair(y, a, b, n)
    return log_normalizer_from_ratio(y, a, structure_ratio(0, n, b), z_total)


def conditional_log_pmf_all(y, a, b, n, z_total: int) -> np.ndarray:
    """Log pmf of the group-1 allocation over 0..z_total, conditioned on the
    pair summing to z_total."""
    y, a, b, n = _checked_pair(y, a, b, n)
    if z_total < 0:
        raise DomainError("z_total must be non-negative")
    terms = _pair_terms(y, a, math.log(structure_ratio(0, n, b)), int(z_total))
    return terms - logsumexp(terms)


def conditional_log_pmf(z1: int, y, a, b, n, z_total: int) -> float:
    """Log probability that group 1 receives ``z1`` of the ``z_total`` events."""
    z1 = int(z1)
    if not 0 <= z1 <= int(z_total):
        raise DomainError("z1 must lie in 0..z_total")
    return float(conditional_log_pmf_all(y, a, b, n, z_total)[z1])


def positive_part(x: float) -> float:
    return max(float(x), 0.0)


def normalizer_ratio_bound(y, a, r_i: float, z_total: int) -> float:
    """Upper bound on |ln C(x)/C(y)| between neighboring pairs, valid when
    the first group has strictly smaller a + y; callers order the pair.

        | ln[ (z_total * max(1 - r_i, 0) + a_2 + y_2) / (a_1 + y_1 - 1) ] |
    """
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if y.shape != (2,) or a.shape != (2,):
        raise UsageError("y and a must be length-2 vectors")
    small = a[0] + y[0]
    large = a[1] + y[1]
    if not small < large:
        raise UsageError("bound requires a1 + y1 < a2 + y2; order the pair")
    if not small > 1:
        raise DomainError("bound requires a1 + y1 > 1")
    return abs(math.log((z_total * positive_part(1.0 - r_i) + large) / (small - 1.0)))


def heterogeneity_penalty(a_pair, y_total: int, z_total: int, r_i: float) -> float:
    """Penalty nu_i on the budget requirement of group i, given the pair
    (a_i, a_complement). Equals 1 when r_i >= 1 and grows as the complement's
    prior mass shrinks; it stays within (1, 2] whenever the complement mass
    is at least 1 and the totals match."""
    a_pair = np.asarray(a_pair, dtype=np.float64)
    if a_pair.shape != (2,):
        raise UsageError("a_pair must be (a_i, a_complement)")
    denom = a_pair[1] + y_total - 1.0
    if not denom > 0:
        raise DomainError("a_complement + y_total - 1 must be positive")
    return float((z_total * positive_part(1.0 - r_i) + denom) / denom)


class TargetRule(str, Enum):
    DEFAULT_NATIONAL = "national"
    STATE_AVERAGE = "state"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PgCalibration:
    """Per-group minimal prior strengths meeting a budget, together with the
    penalty and structure-ratio state of the solved fixed point."""

    epsilon: float
    z_total: int
    y_total: int
    a_min: np.ndarray
    nu: np.ndarray
    r: np.ndarray
    iterations: int
    converged: bool
    target_rates: np.ndarray

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        e_eps = math.exp(self.epsilon)
        nu = np.asarray(self.nu, dtype=np.float64)
        if np.any(nu < 1.0 - 1e-12) or np.any(nu >= e_eps):
            raise DomainError("penalty must lie in [1, e^eps)")
        if self.converged:
            required = self.z_total / (e_eps / nu - 1.0)
            if np.any(np.asarray(self.a_min) < required * (1.0 - 1e-9)):
                raise DomainError("a_min fails the budget requirement")

    @property
    def b_min(self) -> np.ndarray:
        return self.a_min / self.target_rates

    def prior(self) -> PriorSpec:
        return PriorSpec.poisson_gamma(a=self.a_min, target_rates=self.target_rates)


def _floored_state_rates(counts_by_state, pops_by_state, floor_scale: float):
    rates = {}
    for state, y_s in counts_by_state.items():
        n_s = pops_by_state[state]
        rates[state] = max(y_s / n_s, floor_scale / n_s)
    return rates


def _group_states(data: CountDataset):
    if data.state_ids is None:
        raise UsageError("dataset has no state labels")
    order = []
    counts_by, pops_by = {}, {}
    for state, y_i, n_i in zip(data.state_ids, data.counts, data.populations):
        if state not in counts_by:
            order.append(state)
            counts_by[state] = 0.0
            pops_by[state] = 0.0
        counts_by[state] += float(y_i)
        pops_by[state] += float(n_i)
    return order, counts_by, pops_by


def state_target_rates(data: CountDataset, floor_scale: float = RATE_FLOOR_SCALE) -> np.ndarray:
    """Crude event rate of each group's state, floored away from zero."""
    _, counts_by, pops_by = _group_states(data)
    rates = _floored_state_rates(counts_by, pops_by, floor_scale)
    return np.array([rates[s] for s in data.state_ids], dtype=np.float64)


def sanitize_state_rates(data: CountDataset, noise_epsilon: float, rng: RngStream,
                         floor_scale: float = RATE_FLOOR_SCALE) -> np.ndarray:
    """State crude rates with additive noise on each state's event total.

    Noise is Laplace with scale 1/noise_epsilon, drawn independently per
    state in first-appearance order; the result is floored so downstream
    b = a / rate stays finite. The composed budget of releasing these targets
    is left to the caller.
    """
    if not noise_epsilon > 0:
        raise DomainError("noise_epsilon must be positive")
    order, counts_by, pops_by = _group_states(data)
    noisy = {}
    for state in order:
        e_s = float(rng.generator.laplace(0.0, 1.0 / noise_epsilon))
        noisy[state] = counts_by[state] + e_s
    rates = _floored_state_rates(noisy, pops_by, floor_scale)
    return np.array([rates[s] for s in data.state_ids], dtype=np.float64)


def _resolve_targets(data: CountDataset, target_rates, rule: TargetRule) -> np.ndarray:
    if rule is TargetRule.CUSTOM:
        if target_rates is None:
            raise UsageError("custom rule requires target_rates")
        rates = np.asarray(target_rates, dtype=np.float64)
        if rates.shape != (data.n_groups,):
            raise UsageError("target_rates length must match the dataset")
        if np.any(rates <= 0):
            raise DomainError("target_rates must be positive")
        return rates
    if rule is TargetRule.STATE_AVERAGE:
        return state_target_rates(data) if target_rates is None else _resolve_targets(
            data, target_rates, TargetRule.CUSTOM)
    if data.total < 1:
        raise DomainError("national target rate needs a positive event total")
    national = data.total / float(data.populations.sum())
    return np.full(data.n_groups, national)


def _all_structure_ratios(n: np.ndarray, b: np.ndarray) -> np.ndarray:
    n_c = n.sum() - n
    b_c = b.sum() - b
    return (b_c / n_c + 2.0) / (b / n + 2.0)


def _penalties(a: np.ndarray, y_total: int, z_total: int, r_min: float) -> np.ndarray:
    a_comp = a.sum() - a
    denom = a_comp + y_total - 1.0
    if np.any(denom <= 0):
        raise DomainError("complement prior mass too small for the penalty")
    return (z_total * positive_part(1.0 - r_min) + denom) / denom


def calibrate_pg(epsilon: float, data: CountDataset, target_rates=None,
                 rule: TargetRule = TargetRule.DEFAULT_NATIONAL,
                 tol: float = 1e-10, max_sweeps: int = 200) -> PgCalibration:
    """Solve the coupled budget system for the minimal prior strengths.

    a, b = a/target, the structure ratios r, and the penalties nu all depend
    on one another, so the requirement a_i = z_total / (e^eps / nu_i - 1) is
    iterated to a fixed point (damped sweeps; the conservative min_i r_i is
    used inside every penalty so the certificate covers every transposition).
    Raises InfeasibleBudgetError if the budget cannot dominate the penalty.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if data.total < 1:
        raise DomainError("calibration needs a positive event total")
    lam0 = _resolve_targets(data, target_rates, rule)
    n = data.populations
    y_total = z_total = data.total

    e_eps = math.exp(epsilon)
    # Start from a penalty halfway to the cap (capped at the worst case 2);
    # a flat nu = 2 start would be infeasible for budgets at or below ln 2.
    nu0 = min(2.0, 0.5 * (1.0 + e_eps))
    a = np.full(data.n_groups, z_total / (e_eps / nu0 - 1.0))

    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        r = _all_structure_ratios(n, a / lam0)
        nu = _penalties(a, y_total, z_total, float(r.min()))
        if np.any(nu >= e_eps):
            raise InfeasibleBudgetError(
                f"budget epsilon={epsilon} cannot absorb penalty nu={nu.max():.6g}")
        required = z_total / (e_eps / nu - 1.0)
        a_next = 0.5 * (a + required)
        delta = float(np.max(np.abs(a_next - a) / a))
        a = a_next
        if delta < tol:
            converged = True
            break

    r = _all_structure_ratios(n, a / lam0)
    nu = _penalties(a, y_total, z_total, float(r.min()))
    if np.any(nu >= e_eps):
        raise InfeasibleBudgetError(
            f"budget epsilon={epsilon} cannot absorb penalty nu={nu.max():.6g}")
    return PgCalibration(
        epsilon=float(epsilon),
        z_total=z_total,
        y_total=y_total,
        a_min=a,
        nu=nu,
        r=r,
        iterations=sweeps,
        converged=converged,
        target_rates=lam0,
    )


def integer_prior_strength(calibration: PgCalibration, populations,
                           max_rounds: int = 32) -> np.ndarray:
    """Round the calibrated strengths up to integers and re-verify the budget
    requirement at the rounded point (rounding changes the structure ratios,
    so the requirement is re-checked and bumped until self-consistent)."""
    n = np.asarray(populations, dtype=np.float64)
    e_eps = math.exp(calibration.epsilon)
    lam0 = calibration.target_rates
    a = np.maximum(np.ceil(calibration.a_min), 1.0)
    for _ in range(max_rounds):
        r = _all_structure_ratios(n, a / lam0)
        nu = _penalties(a, calibration.y_total, calibration.z_total, float(r.min()))
        if np.any(nu >= e_eps):
            raise InfeasibleBudgetError("integer rounding pushed the penalty past the budget")
        required = calibration.z_total / (e_eps / nu - 1.0)
        if np.all(a >= required - 1e-12):
            return a.astype(np.int64)
        a = np.maximum(a, np.ceil(required))
    raise InfeasibleBudgetError("integer rounding failed to stabilize")


def pg_implied_epsilon(populations, a, b, y_total: int, z_total: int) -> float:
    """The budget certified by a given Poisson-gamma prior: the largest
    per-group value of ln[nu_i (z_total + a_i) / a_i], with the conservative
    min-over-groups structure ratio inside each penalty."""
    n = np.asarray(populations, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    r = _all_structure_ratios(n, b)
    nu = _penalties(a, int(y_total), int(z_total), float(r.min()))
    return float(np.max(np.log(nu * (int(z_total) + a) / a)))


class SynthesisStrategy(str, Enum):
    EXACT_PAIR = "exact-enumeration-2"
    LAMBDA_MULTINOMIAL = "lambda-then-multinomial"


def sample_pair_allocation(log_pmf: np.ndarray, rng: RngStream, size=None):
    """Inverse-CDF draw of the group-1 allocation from a log pmf over
    0..z_total. This is the sampling kernel of the exact-enumeration
    synthesis path; ``size`` draws share one stream."""
    pmf = np.exp(np.asarray(log_pmf, dtype=np.float64))
    cdf = np.cumsum(pmf / pmf.sum())
    u = rng.generator.random(size)
    z1 = np.searchsorted(cdf, u, side="right")
    z1 = np.minimum(z1, pmf.size - 1)
    if size is None:
        return int(z1)
    return z1.astype(np.int64)


def pg_synthesize(data: CountDataset, prior: PriorSpec,
                  strategy: SynthesisStrategy, rng: RngStream) -> SyntheticDataset:
    """Draw one synthetic dataset with the fixed public total.

    EXACT_PAIR samples the two-group allocation from its exact conditional
    pmf by inverse CDF (audit path, I = 2 only). LAMBDA_MULTINOMIAL draws
    posterior rates then allocates the total by a multinomial with
    rate-weighted populations (production path, any I).
    """
    if prior.mode is not PriorModel.POISSON_GAMMA:
        raise UsageError("pg_synthesize requires a Poisson-gamma prior")
    if prior.a.size != data.n_groups:
        raise UsageError("prior length does not match the dataset")
    strategy = SynthesisStrategy(strategy)
    if strategy is SynthesisStrategy.EXACT_PAIR:
        if data.n_groups != 2:
            raise UsageError("exact enumeration synthesis requires exactly 2 groups")
        log_pmf = conditional_log_pmf_all(data.counts, prior.a, prior.b,
                                          data.populations, data.total)
        z1 = sample_pair_allocation(log_pmf, rng)
        counts = np.array([z1, data.total - z1], dtype=np.int64)
    else:
        lam = sample_gamma(data.counts + prior.a, data.populations + prior.b, rng)
        weights = data.populations * np.asarray(lam)
        counts = sample_multinomial(data.total, weights / weights.sum(), rng)
    provenance = Provenance(
        method=PriorModel.POISSON_GAMMA.value,
        epsilon=pg_implied_epsilon(data.populations, prior.a, prior.b,
                                   data.total, data.total),
        seed=rng.seed,
        strategy=strategy.value,
    )
    return SyntheticDataset(counts=counts, total=data.total, provenance=provenance)


def pg_expected_counts(y, a, b, n, z_total: int | None = None) -> np.ndarray:
    """Approximate mean allocation n_i (y_i + a_i) / (n_i + b_i), valid when
    the release total matches the data total and the prior rates roughly
    reproduce it; ``z_total`` is accepted for symmetry with the exact mean
    of the baseline model but does not enter the approximation."""
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if not (y.shape == a.shape == b.shape == n.shape):
        raise UsageError("y, a, b, n must have equal length")
    return n * (y + a) / (n + b)
