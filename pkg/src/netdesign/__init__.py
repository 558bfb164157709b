"""Exact solver for budget-constrained dynamic facility location and
network design: monolithic MIP and disaggregated Benders decomposition
with analytic Pareto-optimal optimality cuts, min-cut feasibility cuts,
budget cover inequalities and a root-LP warm start."""

import os as _os

# the dense LP kernels work on small matrices where BLAS threading is pure
# overhead (and badly oversubscribes small containers)
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits
    _BLAS_LIMIT = _threadpool_limits(limits=1, user_api="blas")
except Exception:  # pragma: no cover
    _BLAS_LIMIT = None

__version__ = "0.1.0"
