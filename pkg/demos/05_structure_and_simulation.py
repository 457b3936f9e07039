# Structural checks and a Monte-Carlo cross-check.
#
# Solve a small three-queue system, ask whether values fall as queues fill
# and whether "build a server" decisions persist under heavier load, then
# simulate the optimal policy and compare with the solver.

from vnfqueue import ModelParams, value_iteration
from vnfqueue.analysis import check_build_threshold, check_domination
from vnfqueue.simulator import estimate_value

p = ModelParams(lam=2.5, n=3, B=3, r=0.0, f=10.0, beta=1.0, psi=0.5, kappa=0.5, h=1.0,
                eta=(1.0, 1.5, 2.0), gamma=0.5)
res = value_iteration(p)

dom = check_domination(res.values, p.space)
thr = check_build_threshold(res.values, p)
print(f"domination: {dom.violation_count} violations in {dom.checked_pairs} pairs")
print(f"build threshold: {thr.violation_count} violations in {thr.checked_pairs} pairs")

for state in [(-1, -1, -1), (0, 1, -1), (3, 3, 3)]:
    est = estimate_value(res.policy, p, state, replications=2000, seed=sum(state) + 100)
    v = res.values[p.space.encode(state)]
    print(f"{state}: solver {v:.4f}, simulation {est.mean:.4f} +/- {est.standard_error:.4f}")
    print("   ", {k: round(x, 3) for k, x in est.breakdown.items()})
