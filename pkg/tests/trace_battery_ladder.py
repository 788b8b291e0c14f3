"""Diagnostic: how the finite battery closes the gap to the closed forms.

Run from the repo root:
    python tests/trace_battery_ladder.py

For each battery size this prints the exact POTB and EETB blocking next
to the infinite-battery predictions, plus where the stationary mass of
the battery sits.
"""

import sys
sys.path.insert(0, '.')

import numpy as np
from edgepush.analysis.markov import analyze_policy, policy_stationary_distribution
from edgepush.core.kernel import TransitionKernel
from edgepush.policies.threshold import build_policy, make_spec

from scenarios import Scenarios

LADDER = [10, 20, 50, 100, 200]
scenarios = Scenarios()

print("=" * 70)
print("BATTERY LADDER  (p_c=0.6, p_u=0.9, A=1.0)")
print("=" * 70)
print(f"{'E_max':>6s}  {'kind':<5s} {'c_thr':>5s} {'fsmc':>10s} {'closed':>10s} {'gap':>10s}  "
      f"{'P(E<E_p)':>9s} {'E[E]':>7s}")

for e_max in LADDER:
    params = scenarios.paper(update_prob=0.6, arrival_mean=1.0, battery_units=e_max)
    kernel = TransitionKernel(params)
    e = kernel.space.arrays[0]
    for kind in ("potb", "eetb"):
        spec = make_spec(kind, params)
        policy = build_policy(spec, params)
        report = analyze_policy(policy, kernel)
        pi = policy_stationary_distribution(policy, kernel).probabilities
        starved = float(pi[e < params.push_units].sum())
        closed = spec.predicted if spec.predicted is not None else float("nan")
        print(f"{e_max:6d}  {kind:<5s} {spec.c_thr:5d} {report.value:10.6f} {closed:10.6f} "
              f"{report.value - closed:10.6f}  {starved:9.4f} {report.metadata['mean_battery']:7.2f}")

# ── Battery histogram at one rung ────────────────────────────
params = scenarios.paper(update_prob=0.6, arrival_mean=1.0, battery_units=50)
kernel = TransitionKernel(params)
policy = build_policy(make_spec("potb", params), params)
pi = policy_stationary_distribution(policy, kernel).probabilities
hist = np.bincount(kernel.space.arrays[0], weights=pi, minlength=params.battery_units + 1)

print(f"\n{'─' * 70}")
print("POTB battery occupancy at E_max=50")
print(f"{'─' * 70}")
for level in range(0, params.battery_units + 1, 5):
    mass = hist[level:level + 5].sum()
    print(f"  E {level:3d}-{min(level + 4, params.battery_units):3d}  {mass:8.5f}  {'#' * int(round(mass * 200))}")
print("=" * 70)
