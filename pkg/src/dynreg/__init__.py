"""Dynamic regret through kernelized static-regret learners.

Subpackages: :mod:`~dynreg.kernels`, :mod:`~dynreg.hilbert`, :mod:`~dynreg.learners`,
:mod:`~dynreg.reduction`, :mod:`~dynreg.environments`, :mod:`~dynreg.analysis`,
:mod:`~dynreg.verify` and :mod:`~dynreg.cli`.
"""

from .analysis import (
    RegretReport,
    bound_optimal_pl,
    comparator_rkhs_norm,
    dynamic_regret,
    effective_dimension,
    path_length,
)
from .environments import EnvConfig, make_env
from .hilbert import GramState, SpanOperator
from .kernels import (
    DiracKernel,
    GaussianKernel,
    SpectralDensity,
    SplineKernel,
    TranslationInvariantKernel,
    build_ti_table,
    density_mass,
    gram,
    horizon_free_kernel,
    kernel_eval,
)
from .learners import FTRL, KONS, FullMatrix, ParameterFree, VAWForecaster
from .reduction import run_reduction

__version__ = "0.1.0"

__all__ = [
    "RegretReport", "bound_optimal_pl", "comparator_rkhs_norm", "dynamic_regret",
    "effective_dimension", "path_length", "EnvConfig", "make_env", "GramState", "SpanOperator",
    "DiracKernel", "GaussianKernel", "SpectralDensity", "SplineKernel", "TranslationInvariantKernel",
    "build_ti_table", "density_mass", "gram", "horizon_free_kernel", "kernel_eval", "FTRL", "KONS",
    "FullMatrix", "ParameterFree", "VAWForecaster", "run_reduction",
]
