"""Littlewood-Paley analysis and density-dependent Navier-Stokes on the periodic box."""
from .spectral import (
    ParameterError,
    ShapeError,
    TorusGrid,
    divergence,
    gradient,
    gradient_project,
    inverse_laplacian,
    laplacian,
    leray_project,
    lp_norm,
    multiply,
    strain_tensor,
)
from .littlewood_paley import (
    DEFAULT_PARTITION,
    BesovParams,
    CheminLernerAccumulator,
    DyadicDecomposition,
    PartitionOfUnity,
    StateError,
    b_gamma_norm,
    besov_norm,
    chemin_lerner_norm,
    decompose,
    log_interpolation_check,
    v_prime,
)
from .reports import DegenerateSampleError, InequalityReport
from .bony import (
    ProductLawCase,
    bony_decomposition,
    commutator,
    commutator_estimate,
    commutator_split,
    paraproduct,
    product_law_check,
    remainder,
)
from .elliptic import CoefficientField, NonConvergenceError, SolverTimeoutError, solve_pressure
from .transport import CFLError, LossSchedule, advect
from .navier_stokes import (
    BootstrapKnobs,
    BootstrapMonitor,
    DensityBoundError,
    MonitorBreachError,
    SolverConfig,
    SolverState,
    run,
    scaling_check,
    stability_experiment,
    stokes_step,
)
from .harness import SampleSpec, generate_sample, run_suite

__version__ = "0.1.0"
