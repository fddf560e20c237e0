"""ddstab — learn locally stabilizing state feedback from one short experiment.

Pipeline: record (or generate) an experiment on an unknown discrete-time
plant, certify that the data are informative, solve a small semidefinite
program for the gain, and — when the experiment is too aggressive for the
certificates — rerun it scaled down until they hold.
"""

from .certify import (
    CertReport,
    XiPsi,
    build_xi_psi,
    check_assumption1,
    check_gamma_condition,
    gamma_min,
    gamma_threshold,
    xi_margin_check,
)
from .datamat import (
    DataMatrices,
    RankReport,
    Trajectory,
    build_data_matrices,
    hankel_matrix,
    is_persistently_exciting,
    min_singular_value,
    numerical_rank,
    trajectory_from_csv,
    trajectory_to_csv,
)
from .errors import (
    DDStabError,
    DataRankWarning,
    DivergenceError,
    ExcitationError,
    ExtractionError,
    GammaUndefinedError,
    InputError,
    InvalidOrderError,
    OracleRequiredError,
)
from .experiment import (
    ExperimentSpec,
    adversarial_theta_input,
    generate_pe_input,
    run_experiment,
    scale_experiment,
)
from .plant import (
    LinearizationPair,
    PlantModel,
    linear,
    linearize,
    load_plant,
    pendulum,
    plant_from_config,
    remainder_sequence,
    scalar_quadratic,
    simulate,
)
from .sdp import (
    CvxpyAdapter,
    DesignProblem,
    DesignResult,
    SolverAdapter,
    build_design,
    closed_loop_matrix,
    extract_controller,
    schur_contraction_check,
    solve_design,
)
from .verify import (
    SweepRow,
    alpha_convergence_diagnostic,
    epsilon_sweep,
    simulate_closed_loop_stability,
    spectral_radius_closed_loop,
    write_sweep_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CertReport", "XiPsi", "build_xi_psi", "check_assumption1",
    "check_gamma_condition", "gamma_min", "gamma_threshold", "xi_margin_check",
    "DataMatrices", "RankReport", "Trajectory", "build_data_matrices",
    "hankel_matrix", "is_persistently_exciting", "min_singular_value",
    "numerical_rank", "trajectory_from_csv", "trajectory_to_csv",
    "DDStabError", "DataRankWarning", "DivergenceError", "ExcitationError",
    "ExtractionError", "GammaUndefinedError", "InputError",
    "InvalidOrderError", "OracleRequiredError",
    "ExperimentSpec", "adversarial_theta_input", "generate_pe_input",
    "run_experiment", "scale_experiment",
    "LinearizationPair", "PlantModel", "linear", "linearize", "load_plant",
    "pendulum", "plant_from_config", "remainder_sequence", "scalar_quadratic",
    "simulate",
    "CvxpyAdapter", "DesignProblem", "DesignResult", "SolverAdapter",
    "build_design", "closed_loop_matrix", "extract_controller",
    "schur_contraction_check", "solve_design",
    "SweepRow", "alpha_convergence_diagnostic", "epsilon_sweep",
    "simulate_closed_loop_stability", "spectral_radius_closed_loop",
    "write_sweep_csv",
]
