"""Simultaneous topology and fastener layout optimization of assemblies.

Multiple parts are topology-optimized while the positions of their fastening
joints move continuously: joints carry mesh-independent spring patterns,
movable non-design spaces (holes, discs, rings), and optional fail-safe
objectives under joint failure.
"""
from .analysis import (
    ComplianceResult,
    ConstraintValue,
    FailureCase,
    FailureEvaluation,
    compliance,
    enumerate_failures,
    evaluate_failure_objective,
    grad_compliance_density,
    grad_compliance_position,
    ks_aggregate,
    min_distance_constraint,
    nominal_objective,
    pairwise_distances,
    volume_constraint,
)
from .config import ConfigError, ProblemConfig, build_problem, config_from_dict, load_config
from .density import DensityState, SimpLaw, build_filter, chain_to_design, project, project_derivative, simp_modulus
from .driver import IterationRecord, OptimizationError, RunResult, export_results, run_optimization
from .joints import (
    CouplingError,
    CouplingMatrix,
    Joint,
    SpringPattern,
    assemble_joint_block,
    build_coupling,
    coupling_position_derivative,
    generate_pattern,
)
from .masks import CombinedMask, MaskField, MaskSpec, apply_nds, combine, single_mask
from .mesh import (
    AugmentedSystem,
    PartMesh,
    SolveError,
    Solution,
    assemble_material_block,
    build_part_mesh,
    element_stiffness_q4,
    solve_augmented,
)
from .mma import MmaState, SubproblemError, mma_step
from .model import Assembly, CaseResponse, ModelState
from .verify import GradientReport, verify_gradients

__version__ = "0.1.0"
