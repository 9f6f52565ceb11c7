"""Decision support for merger intervention: discrete Bayesian networks,
influence diagrams, object-oriented composition, learning, and scenarios."""

from .factors import (
    Cpt,
    Evidence,
    Factor,
    Variable,
    cpt_from_rows,
    factor_marginalize,
    factor_multiply,
    factor_normalize,
    factor_reduce,
)
from .network import (
    NetworkDoc,
    NodeSpec,
    TableSpec,
    ValidationReport,
    expand_expression,
    parse,
    serialize,
    validate,
)
from .oobn import (
    ClassDoc,
    FlatNetwork,
    InputDecl,
    InstanceDecl,
    flatten,
    parse_class,
    serialize_class,
    set_stage_override,
    retract_stage_override,
    unroll_repeated,
)
from .inference import InferenceSession, JunctionTree, build_junction_tree
from .decisions import (
    DecisionProblem,
    DecisionResult,
    enumerate_policies,
    evaluate,
    fix_decision,
)

__version__ = "0.1.0"
