"""Human-aware manipulator motion planning.

Predicts human arm motion with a recurrent bone-vector model, quantifies
the prediction uncertainty by Monte Carlo dropout, folds both into a
workspace graph, and plans 6-DOF manipulator motions with a graph-network
planner trained to imitate a sampling-based expert. See README.md for the
CLI workflow.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
