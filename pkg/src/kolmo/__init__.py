"""Numerics for degenerate stable Ornstein-Uhlenbeck chains.

``KOLMO_THREADS`` (when set before import) caps the worker pools of the
numerical backends.
"""
import os as _os

_threads = _os.environ.get("KOLMO_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .errors import (AssumptionError, ConfigError, ContractionError, DegeneracyError,  # noqa: E402
                     DomainError, InputError, KolmoError, NegativeDensityError, ResolutionError)
from .stable import GridSpec, LevyModel, SphericalMeasure, sample_stable, stable_density_grid  # noqa: E402
from .ou import ChainMatrix, OUDensity, resolvent  # noqa: E402
from .flow import DriftSpec, FrozenProxy, integrate_flow  # noqa: E402
from .metric import MetricParams, aniso_distance, holder_norm_estimate  # noqa: E402
from .spacegrid import SpaceGrid  # noqa: E402
from .solver import ProblemData, SolutionField, picard_solve, time_chain_solve  # noqa: E402
from .montecarlo import feynman_kac  # noqa: E402

__all__ = [
    "AssumptionError", "ConfigError", "ContractionError", "DegeneracyError", "DomainError", "InputError",
    "KolmoError", "NegativeDensityError", "ResolutionError",
    "GridSpec", "LevyModel", "SphericalMeasure", "sample_stable", "stable_density_grid",
    "ChainMatrix", "OUDensity", "resolvent",
    "DriftSpec", "FrozenProxy", "integrate_flow",
    "MetricParams", "aniso_distance", "holder_norm_estimate",
    "SpaceGrid", "ProblemData", "SolutionField", "picard_solve", "time_chain_solve",
    "feynman_kac", "__version__",
]
