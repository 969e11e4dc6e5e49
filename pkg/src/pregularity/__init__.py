"""Numerical toolkit for p-regular nonlinear mappings.

Builds the p-factor operator of a polynomial system at a singular point,
tests p-regularity, runs the p-factor Newton scheme, checks higher-order
optimality conditions and handles degenerate KKT systems through a
modified Lagrangian.
"""

from .errors import (
    DecompositionIncomplete,
    DimensionError,
    ExponentError,
    NondegenerateKKT,
    OrderError,
    ParseError,
    PRegularityError,
    ProblemDefinitionError,
    SingularFactorMatrix,
    TooFewIterates,
    UnknownVariableError,
    ZeroDirectionError,
)
from .expr import PolySystem, Polynomial, parse_expression, parse_system
from .mapping import MappingModel
from .pfactor import (
    build_decomposition,
    build_newton_chain,
    factor_operator,
    hp_membership,
    hp_sample,
    is_p_regular_along,
    kernel_criterion,
    strong_regularity_estimate,
)

__version__ = "0.1.0"
