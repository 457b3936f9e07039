# A single server queue, solved three ways.
#
# The smallest interesting model: one queue with room for two tasks.  We
# solve it by value iteration, check it against exhaustive policy search, and
# then read off what the optimal controller does in each state.

import numpy as np

from vnfqueue import ModelParams, brute_force_solve, value_iteration

p = ModelParams(lam=1.0, n=1, B=2, mu=1.0, r=1.0, f=3.0, beta=0.5, psi=0.2,
                kappa=0.3, h=0.4, eta=(1.0, 2.0), gamma=1.0)

res = value_iteration(p, tol=1e-10)
print(res.summary())

# every stationary deterministic policy, evaluated exactly
oracle = brute_force_solve(p)
print("max gap to oracle:", np.abs(res.values - oracle).max())

for s, q in enumerate(p.space.states()):
    d = "destroy" if res.policy.destroy[s].any() else "keep"
    print(f"state {q}: V = {res.values[s]:8.4f}  arrival -> {res.policy.arrival(s).code}"
          + (f"  last departure -> {d}" if q[0] == 1 else ""))

# Push the keep-alive cost up.  Rejecting is cheap now, but the empty state
# still admits: an active queue can only be retired after it serves a task.
q = p.replace(kappa=1000.0, f=0.1, r=0.0)
print(value_iteration(q).policy.arrival_codes())
