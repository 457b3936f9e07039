# The value surface for buffer 6, and its block structure.
#
# States are laid out with queue 0 as the most significant digit, so the
# exported table splits into 8 large blocks (q0 = -1..6), each with 8 sub-blocks
# for q1.  Heavier blocks are worth less.

import io

import numpy as np

from vnfqueue import value_iteration
from vnfqueue.experiments import block_means, export_value_surface, surface_params

p = surface_params()
V = value_iteration(p).values

buf = io.StringIO()
export_value_surface(V, p.space, buf)
print(buf.getvalue().splitlines()[:4])

np.set_printoptions(precision=1, suppress=True, linewidth=120)
print("block means by q0:", block_means(V, p.space, 1))
print("sub-block means (rows q0, cols q1):")
print(block_means(V, p.space, 2))
