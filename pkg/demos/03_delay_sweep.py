# Raising the delay price with expensive build/destroy.
#
# Five queues, buffer 6, convex delay weights.  Because building and tearing
# down a server costs 5 each, the controller keeps all five servers up and
# reacts to the delay price by rejecting more work instead.

import numpy as np

from vnfqueue.experiments import SweepSpec, delay_params, run_sweep

rows = run_sweep(SweepSpec("h", [0.0, 1.0, 2.5, 5.0], delay_params(), warm_start=True))
for r in rows:
    print(f"h={r.value:3.1f}  active={r.avg_active_queues:.3f}  tasks={r.avg_total_tasks:.3f}  "
          f"rejecting={r.rejecting_states}  iters={r.iterations}")
print("tasks never rise:", bool(np.all(np.diff([r.avg_total_tasks for r in rows]) <= 0)))
