"""Hot simulation kernels with a numba and a pure-numpy implementation.

``BACKEND`` names the implementation exported here; both modules stay
importable directly (``kernels.loops`` / ``kernels.vector``) for parity tests
and benchmarks.
"""

from .. import _accel
from . import _loops as loops
from . import _vector as vector
from .codes import *  # noqa: F401,F403

if _accel.USE_NUMBA:
    BACKEND = "numba"
    run_sync = loops.run_sync
    run_delayed = loops.run_delayed
    rhs_sync = loops.rhs_sync
else:
    BACKEND = "numpy"
    run_sync = vector.run_sync
    run_delayed = vector.run_delayed
    rhs_sync = vector.rhs_sync

# scalar/array helpers used by the public modules always come from numpy
map_array = vector.map_array
grad_array = vector.grad_array
value_array = vector.value_array
curvature_array = vector.curvature_array
delta_array = vector.delta_array
excess_array = vector.excess_array
penalty_array = vector.penalty_array
