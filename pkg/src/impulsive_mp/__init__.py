"""Space-time impulsive extension of control-affine problems.

Embeds ordinary and impulsive controls into a common reparameterized system,
integrates it, and verifies first order, higher order (iterated Lie bracket)
and fully-impulsive necessary conditions for optimality.
"""

from .brackets import FormalBracket, bracket_shapes, differentiation_count, parse_bracket, required_smoothness
from .checker import (
    MultiplierSearchResult,
    abnormality_profile,
    check_complementarity,
    check_differentiated,
    check_first_order,
    check_higher_order,
    classify_fully_impulsive,
    cone_distance,
    find_multiplier,
    kalman_check,
    linear_chain_conditions,
    rank_I1,
    rank_I2,
)
from .config import RunConfig
from .adjoint import (
    Multiplier,
    costate_basis,
    fundamental_matrix,
    hamiltonian,
    integrate_adjoint,
    maximize_hamiltonian,
)
from .controls import (
    PiecewiseControl,
    StrictControl,
    canonicalize_control,
    concatenated,
    embed_strict,
    strict_from_spacetime,
)
from .errors import ImpulsiveMPError, ParseError
from .expressions import Expr, parse_expression
from .fields import (
    FieldAssignment,
    VectorField,
    enumerate_bracket_pool,
    eval_iterated_bracket,
    iterated_bracket_field,
    lie_bracket_field,
)
from .integrate import Process, Trajectory, canonicalize, simulate, total_cost
from .problem import ConeSpec, ProblemSpec, TargetSpec, load_problem, parse_problem_text, validate_problem
from .report import ConditionReport, LadderReport, RankReport
from .variations import (
    BracketGenerator,
    Needle,
    apply_bracket_variation,
    apply_needle,
    compose_variations,
    predict_deviation,
    run_ladder,
    synth_bracket_control,
    variation_vector,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
