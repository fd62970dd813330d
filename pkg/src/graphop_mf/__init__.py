"""Graphop mean-field limits for Kuramoto-type models on the circle group."""

from .torus import TorusGrid, TorusPoint, circle_dist, nested_partition, wrap
from .graphop import (
    ArcBand,
    AtomicShift,
    FiberMeasure,
    GraphonKernel,
    Graphop,
    Mixture,
    check_c_regular,
    degree,
    from_spec,
    norm_1_to_1,
)
from .summability import SummabilityKernel, convolve, fejer, o_convergence_gap, regularize, wrapped_gaussian

from .densities import InitialDensity, cell_average, density_from_spec, quantile_family
from .errors import ConfigError, ContractionError, ConvergenceError, FieldBoundError, NumericalFailure
from .metrics import MeasureFamily, PhaseMeasure, d_alpha, d_bA, d_bl, d_bl_lp, d_bm
from .kuramoto import CouplingFunction, CouplingSpec, OscillatorState, integrate, sample_initial, sample_weights
from .vfpe import FieldEvaluator, fv_transport_solve, picard_solve
from .experiments import ConvergenceReport, ExperimentConfig, run_triangle

__version__ = "0.1.0"
