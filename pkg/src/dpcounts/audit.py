"""Exhaustive privacy audits and bound-accuracy sweeps.

Small two-group instances are small enough to check the privacy definition
itself: enumerate every dataset with the public total, every neighbor, and
every synthetic allocation, and compare the worst absolute log ratio against
the target budget. Each ratio is computed two independent ways (pmf
difference and the cancelled closed form) and, for integer prior strengths,
a third time in exact rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import exact_math
from .core import RngStream
from .dirichlet_mult import md_log_pmf, md_log_ratio
from .errors import DomainError, UsageError
from .poisson_gamma import (
    conditional_log_pmf_all,
    log_normalizer_from_ratio,
    normalizer_ratio_bound,
    structure_ratio,
)

AUDIT_SLACK = 1e-9        # numerical slack allowed on the budget comparison
CROSS_CHECK_TOL = 1e-10   # agreement required between ratio evaluation routes
ENUMERATION_CAP = 12      # largest total audited exhaustively


@dataclass(frozen=True)
class Witness:
    y: tuple[int, ...]
    x: tuple[int, ...]
    z: tuple[int, ...]


@dataclass(frozen=True)
class AuditReport:
    epsilon_target: float
    max_abs_log_ratio: float
    witness: Witness
    satisfied: bool
    instances_checked: int

    def __post_init__(self):
        expected = self.max_abs_log_ratio <= self.epsilon_target + AUDIT_SLACK
        if self.satisfied != expected:
            raise DomainError("satisfied flag inconsistent with the recorded maximum")


def enumerate_neighbors(y_total: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """All ordered (y, x) neighbor pairs of two-group datasets with the given
    total: both transposition directions, never leaving a negative entry."""
    if y_total < 1:
        raise DomainError("y_total must be at least 1")
    pairs = []
    for y1 in range(y_total + 1):
        y = (y1, y_total - y1)
        if y[0] > 0:
            pairs.append((y, (y[0] - 1, y[1] + 1)))
        if y[1] > 0:
            pairs.append((y, (y[0] + 1, y[1] - 1)))
    return pairs


def _track_max(best, value: float, y, x, z):
    if best is None or value > best[0]:
        return (value, Witness(y=tuple(map(int, y)), x=tuple(map(int, x)), z=tuple(map(int, z))))
    return best


def _make_report(epsilon: float, best, checked: int) -> AuditReport:
    max_ratio, witness = best
    return AuditReport(
        epsilon_target=float(epsilon),
        max_abs_log_ratio=float(max_ratio),
        witness=witness,
        satisfied=max_ratio <= epsilon + AUDIT_SLACK,
        instances_checked=checked,
    )


def _audit_md(alpha, epsilon: float, y_total: int) -> AuditReport:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (2,):
        raise UsageError("exhaustive audit runs on two groups")
    z_total = y_total
    best = None
    checked = 0
    for y, x in enumerate_neighbors(y_total):
        ya = np.array(y)
        xa = np.array(x)
        for z1 in range(z_total + 1):
            z = np.array([z1, z_total - z1])
            direct = md_log_ratio(z, ya, xa, alpha)
            via_pmf = md_log_pmf(z, ya, alpha) - md_log_pmf(z, xa, alpha)
            if abs(direct - via_pmf) > CROSS_CHECK_TOL:
                raise ArithmeticError("ratio evaluation routes disagree")
            checked += 1
            best = _track_max(best, abs(direct), y, x, z)
    return _make_report(epsilon, best, checked)


def _audit_pg2(a, b, n, epsilon: float, y_total: int) -> AuditReport:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if a.shape != (2,) or b.shape != (2,) or n.shape != (2,):
        raise UsageError("exhaustive audit runs on two groups")
    z_total = y_total
    r1 = structure_ratio(0, n, b)
    pmf_cache: dict[tuple[int, int], np.ndarray] = {}
    log_c_cache: dict[tuple[int, int], float] = {}

    def tables_for(y):
        if y not in pmf_cache:
            pmf_cache[y] = conditional_log_pmf_all(np.array(y), a, b, n, z_total)
            log_c_cache[y] = log_normalizer_from_ratio(np.array(y), a, r1, z_total)
        return pmf_cache[y], log_c_cache[y]

    best = None
    checked = 0
    for y, x in enumerate_neighbors(y_total):
        pmf_y, log_c_y = tables_for(y)
        pmf_x, log_c_x = tables_for(x)
        dec = 0 if x[0] == y[0] - 1 else 1
        inc = 1 - dec
        for z1 in range(z_total + 1):
            z = (z1, z_total - z1)
            via_pmf = float(pmf_y[z1] - pmf_x[z1])
            cancelled = (
                log_c_x - log_c_y
                + math.log(z[dec] + y[dec] + a[dec] - 1)
                - math.log(z[inc] + y[inc] + a[inc])
            )
            if abs(via_pmf - cancelled) > CROSS_CHECK_TOL:
                raise ArithmeticError("ratio evaluation routes disagree")
            checked += 1
            best = _track_max(best, abs(via_pmf), y, x, z)
    return _make_report(epsilon, best, checked)


def _audit_pg2_exact(a_int, b, n, epsilon: float, y_total: int) -> AuditReport:
    a_int = [int(v) for v in np.asarray(a_int)]
    b_frac = [Fraction(float(v)) for v in np.asarray(b, dtype=np.float64)]
    n_frac = [Fraction(float(v)) for v in np.asarray(n, dtype=np.float64)]
    if len(a_int) != 2 or len(b_frac) != 2 or len(n_frac) != 2:
        raise UsageError("exhaustive audit runs on two groups")
    if min(a_int) < 1:
        raise DomainError("exact audit requires integer a >= 1")
    r1 = (b_frac[1] / n_frac[1] + 2) / (b_frac[0] / n_frac[0] + 2)
    z_total = y_total
    c_cache: dict[tuple[int, int], Fraction] = {}

    def normalizer(y):
        if y not in c_cache:
            c_cache[y] = exact_math.exact_normalizer(y, a_int, r1, z_total)
        return c_cache[y]

    best = None
    checked = 0
    for y, x in enumerate_neighbors(y_total):
        c_ratio = normalizer(x) / normalizer(y)
        dec = 0 if x[0] == y[0] - 1 else 1
        inc = 1 - dec
        for z1 in range(z_total + 1):
            z = (z1, z_total - z1)
            ratio = c_ratio * Fraction(z[dec] + y[dec] + a_int[dec] - 1,
                                       z[inc] + y[inc] + a_int[inc])
            value = abs(math.log(ratio.numerator) - math.log(ratio.denominator))
            checked += 1
            best = _track_max(best, value, y, x, z)
    return _make_report(epsilon, best, checked)


def audit_synthesizer(mechanism: str, epsilon: float, y_total: int, *,
                      alpha=None, a=None, b=None, populations=None,
                      exact: bool = False) -> AuditReport:
    """Exhaustively audit a calibrated mechanism on two groups.

    ``mechanism`` is 'md' (needs alpha) or 'pg2' (needs a, b, populations).
    ``exact=True`` switches the pg2 route to arbitrary-precision rationals,
    which requires integer a. Totals above the enumeration cap are refused;
    use spot_check_md for larger instances.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    y_total = int(y_total)
    if y_total < 1:
        raise DomainError("y_total must be at least 1")
    if y_total > ENUMERATION_CAP:
        raise UsageError(f"exhaustive audit capped at y_total <= {ENUMERATION_CAP}")
    if mechanism == "md":
        if alpha is None:
            raise UsageError("md audit requires alpha")
        return _audit_md(alpha, epsilon, y_total)
    if mechanism == "pg2":
        if a is None or b is None or populations is None:
            raise UsageError("pg2 audit requires a, b, populations")
        if exact:
            return _audit_pg2_exact(a, b, populations, epsilon, y_total)
        return _audit_pg2(a, b, populations, epsilon, y_total)
    raise UsageError(f"unknown mechanism {mechanism!r}")


def spot_check_md(alpha, epsilon: float, y_total: int, n_samples: int,
                  rng: RngStream) -> AuditReport:
    """Randomized audit for totals past the enumeration cap: random neighbor
    pairs and allocations, always including the four boundary allocations
    where the extremes occur."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (2,):
        raise UsageError("spot check runs on two groups")
    z_total = y_total
    gen = rng.generator
    best = None
    checked = 0
    for _ in range(int(n_samples)):
        y1 = int(gen.integers(0, y_total + 1))
        y = np.array([y1, y_total - y1])
        directions = [d for d in (0, 1) if y[d] > 0]
        if not directions:
            continue
        dec = directions[int(gen.integers(0, len(directions)))]
        x = y.copy()
        x[dec] -= 1
        x[1 - dec] += 1
        z_candidates = {0, z_total, int(gen.integers(0, z_total + 1))}
        for z1 in z_candidates:
            z = np.array([z1, z_total - z1])
            value = abs(md_log_ratio(z, y, x, alpha))
            checked += 1
            best = _track_max(best, value, y, x, z)
    if best is None:
        raise UsageError("no valid neighbor pairs sampled")
    return _make_report(epsilon, best, checked)


@dataclass(frozen=True)
class BoundInstance:
    y: tuple[int, int]
    a: tuple[int, int]
    r: Fraction
    z_total: int


@dataclass(frozen=True)
class BoundAccuracyRow:
    instance: BoundInstance
    exact_abs_log_ratio: float
    bound: float
    slack: float


@dataclass(frozen=True)
class BoundSweepResult:
    rows: tuple[BoundAccuracyRow, ...]
    skipped: tuple[tuple[BoundInstance, str], ...]

    def slack_summary(self) -> dict:
        slacks = np.array([row.slack for row in self.rows])
        return {
            "count": int(slacks.size),
            "min": float(slacks.min()),
            "median": float(np.median(slacks)),
            "max": float(slacks.max()),
        }


def default_bound_grid(max_a: int = 4, max_y_total: int = 8,
                       r_values: Sequence = (Fraction(1, 3), Fraction(1, 2),
                                             Fraction(1), Fraction(3, 2))) -> list[BoundInstance]:
    grid = []
    for z_total in range(1, max_y_total + 1):
        for y1 in range(z_total + 1):
            for a1 in range(1, max_a + 1):
                for a2 in range(1, max_a + 1):
                    for r in r_values:
                        grid.append(BoundInstance(y=(y1, z_total - y1),
                                                  a=(a1, a2), r=Fraction(r),
                                                  z_total=z_total))
    return grid


def bound_accuracy_sweep(instances: Iterable[BoundInstance]) -> BoundSweepResult:
    """Compare the exact normalizer log ratio against its closed-form upper
    bound on each instance that satisfies the bound's ordering condition.

    The decremented group is the one with the smaller a + y; instances with a
    tie, with a + y <= 1 on the small side, or whose decrement would go
    negative are skipped with a reason rather than silently dropped.
    """
    rows = []
    skipped = []
    for inst in instances:
        y = inst.y
        a = inst.a
        totals = (a[0] + y[0], a[1] + y[1])
        if totals[0] == totals[1]:
            skipped.append((inst, "ordering condition is a tie"))
            continue
        i = 0 if totals[0] < totals[1] else 1
        other = 1 - i
        if totals[i] <= 1:
            skipped.append((inst, "small side has a + y <= 1"))
            continue
        if y[i] == 0:
            skipped.append((inst, "decrement would leave a negative count"))
            continue
        x = list(y)
        x[i] -= 1
        x[other] += 1
        r1 = Fraction(inst.r)
        c_y = exact_math.exact_normalizer(y, a, r1, inst.z_total)
        c_x = exact_math.exact_normalizer(tuple(x), a, r1, inst.z_total)
        ratio = c_x / c_y
        exact_value = abs(math.log(ratio.numerator) - math.log(ratio.denominator))
        r_i = r1 if i == 0 else 1 / r1
        ordered_y = (y[i], y[other])
        ordered_a = (a[i], a[other])
        bound = normalizer_ratio_bound(ordered_y, ordered_a, float(r_i), inst.z_total)
        rows.append(BoundAccuracyRow(
            instance=inst,
            exact_abs_log_ratio=exact_value,
            bound=bound,
            slack=bound - exact_value,
        ))
    return BoundSweepResult(rows=tuple(rows), skipped=tuple(skipped))
