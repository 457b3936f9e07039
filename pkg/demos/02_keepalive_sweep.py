# How many servers stay up as the keep-alive price rises?
#
# Five queues with buffer 4 and arrivals at rate 4.  Delay costs are almost
# zero, so the only tension is between paying to keep servers alive and
# paying a fine for every rejected task.  A coarse grid keeps this quick; the
# acceptance suite runs the full 81-point sweep.

import sys

from vnfqueue.experiments import SweepSpec, keepalive_params, grid, run_sweep, write_sweep_csv

spec = SweepSpec("kappa", grid(0.0, 20.0, 10), keepalive_params())
rows = run_sweep(spec, progress=lambda r: print(
    f"kappa={r.value:5.1f}  active={r.avg_active_queues:.3f}  tasks={r.avg_total_tasks:.3f}  "
    f"rejecting={r.rejecting_states}", file=sys.stderr))

# plot-ready CSV on stdout
write_sweep_csv(sys.stdout, rows, "kappa")

# States with an active empty queue never reject (admitting is the only way
# to retire that queue), so the rejecting count tops out below 6**5.
