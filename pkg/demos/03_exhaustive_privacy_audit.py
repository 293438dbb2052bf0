"""Check the privacy guarantee by enumerating every case.

On two groups with a small total, nothing needs to be trusted: every
dataset with the public total, every neighboring dataset, and every
possible release can be enumerated, and the worst log probability ratio
compared against the budget. Integer prior strengths even allow the whole
audit to run in exact rational arithmetic.
"""

import math

import numpy as np

import dpcounts as dp

eps = 1.0
y_total = 6

# An uncalibrated prior fails: alpha = 1 certifies only ln(total + 1).
report = dp.audit_synthesizer("md", eps, y_total, alpha=[1.0, 1.0])
print(f"alpha = 1      : worst |log ratio| = {report.max_abs_log_ratio:.4f} "
      f"(= ln {y_total + 1}), satisfied = {report.satisfied}")
print("  witness      :", report.witness)

# The calibrated prior meets the budget with equality at the worst case.
alpha_min = dp.calibrate_md(eps, y_total).alpha_min
report = dp.audit_synthesizer("md", eps, y_total, alpha=[alpha_min] * 2)
print(f"calibrated     : worst |log ratio| = {report.max_abs_log_ratio:.9f} "
      f"vs eps = {eps}, satisfied = {report.satisfied}")

# Poisson-gamma with heterogeneous structure, float and exact routes.
n = np.array([1.0, 4.0])
lam0 = np.array([0.8, 0.25])
data = dp.CountDataset.from_counts([y_total, 0], n)
cal = dp.calibrate_pg(eps, data, target_rates=lam0, rule=dp.TargetRule.CUSTOM)
report = dp.audit_synthesizer("pg2", eps, y_total, a=cal.a_min, b=cal.b_min,
                              populations=n)
print(f"\npg float route : worst = {report.max_abs_log_ratio:.9f}, "
      f"satisfied = {report.satisfied} "
      f"({report.instances_checked} ratios enumerated)")

a_int = dp.integer_prior_strength(cal, n)
report = dp.audit_synthesizer("pg2", eps, y_total, a=a_int,
                              b=a_int / lam0, populations=n, exact=True)
print(f"pg exact route : worst = {report.max_abs_log_ratio:.9f} with "
      f"integer a = {a_int}, satisfied = {report.satisfied}")

# The closed-form bound on the normalizer ratio, swept against the exact
# value on a grid of small instances: the slack is never negative.
sweep = dp.bound_accuracy_sweep(dp.default_bound_grid(max_a=3, max_y_total=6))
summary = sweep.slack_summary()
print(f"\nbound sweep    : {summary['count']} instances, slack "
      f"min = {summary['min']:.2e}, median = {summary['median']:.3f}, "
      f"max = {summary['max']:.3f}")
print(f"zero-slack instances are where the bound is attained, e.g. "
      f"y=(1,3), a=(1,1), r=1, total 4 -> bound = ln 4 = {math.log(4):.6f}")
