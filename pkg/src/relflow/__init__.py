"""Closed relations and multiflows on cubical grids: limit sets, invariance, attractor blocks."""

from .attractor import (
    BlockCertificate,
    certify_block_multiflow,
    find_block_in_neighborhood,
    is_attractor_block,
    maximality_check,
)
from .continuation import continuation_check, fatten, one_sided_hausdorff, robustness_radius
from .errors import (
    BudgetExhausted,
    ConfigError,
    EmptyOperand,
    EvaluatorDomain,
    NotABlock,
    PointOutOfBounds,
    PreconditionViolation,
    RelflowError,
    SamplingInconsistency,
)
from .grid import CellSet, GridSpace, cell_of, closure_of_complement, interior, set_distance
from .multiflow import (
    MultiflowModel,
    TimeGrid,
    check_semigroup,
    classify_multiflow,
    confining_hull_multiflow,
    fixed_time_omega,
    get_model,
    omega_multiflow,
    parse_affine_table,
    sample_image,
    sample_relation,
)
from .omega import confining_hull, kset_membership, maximal_invariant, omega, strict_omega
from .relation import FiniteRelation, classify, compose, image, inverse_image, iterate, transpose

__version__ = "0.1.0"
