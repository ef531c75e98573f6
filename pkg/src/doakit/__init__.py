"""Inner estimates of domains of attraction for nonlinear ODE systems.

The toolkit samples a region of interest, labels initial conditions by
simulation, fits a lifted quadratic Lyapunov function with an l1 linear
program, certifies it with a counterexample-generating verifier, and
scales the fit with consensus ADMM.
"""

from .admm import AdmmConfig, ConsensusState, admm_solve, residuals, split
from .doa import (
    RunConfig,
    RunReport,
    export_contour,
    run,
    soundness_audit,
    true_doa_volume,
    volume,
)
from .expr import ExpressionError
from .jets import Jet, JetDivisionError
from .learner import (
    LearnerConfig,
    LearnerError,
    LyapunovCandidate,
    assemble,
    eval_V,
    eval_Vdot,
    learn,
    load_candidate,
    save_candidate,
)
from .lpcore import (
    LinearProgram,
    SolveResult,
    SolverTolerances,
    dump_lp,
    load_lp,
    solve_lp,
    solve_qp_diag,
)
from .sampling import Roi, SampleSet, SimConfig, build_dataset, classify, grid, load_dataset, save_dataset
from .systems import (
    BUILTIN_NAMES,
    DynamicalSystem,
    LiftedSample,
    LiftedSet,
    LiftError,
    builtin,
    lift,
    lift_set,
    parse_system,
)
from .verifier import VerifierConfig, VerifierResult, counterexample, verify

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "ConsensusState", "admm_solve", "residuals", "split",
    "RunConfig", "RunReport", "run", "volume", "true_doa_volume", "soundness_audit",
    "export_contour",
    "ExpressionError", "Jet", "JetDivisionError",
    "LearnerConfig", "LearnerError", "LyapunovCandidate", "assemble",
    "eval_V", "eval_Vdot", "learn", "save_candidate", "load_candidate",
    "LinearProgram", "SolveResult", "SolverTolerances", "solve_lp", "solve_qp_diag",
    "dump_lp", "load_lp",
    "Roi", "SampleSet", "SimConfig", "build_dataset", "classify", "grid",
    "save_dataset", "load_dataset",
    "BUILTIN_NAMES", "DynamicalSystem", "LiftedSample", "LiftedSet", "LiftError",
    "builtin", "lift", "lift_set", "parse_system",
    "VerifierConfig", "VerifierResult", "verify", "counterexample",
    "__version__",
]
