"""Numerical toolkit for multi-bubble blow-up in the critical semilinear heat equation.

Set ``BUBBLING_THREADS`` before import to cap the BLAS thread pools.
"""

import os as _os

_threads = _os.environ.get("BUBBLING_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .bubble import Dim, RadialField, RadialGrid, compute_constants  # noqa: E402
from .green import BallDomain, GreenMatrix, interaction_matrix  # noqa: E402
from .bsystem import BSolution, solve_heights  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Dim",
    "RadialField",
    "RadialGrid",
    "compute_constants",
    "BallDomain",
    "GreenMatrix",
    "interaction_matrix",
    "BSolution",
    "solve_heights",
    "__version__",
]
