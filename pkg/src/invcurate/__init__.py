"""Loop-invariant curation, grading and evaluation for C verification tasks."""

from .normalize import is_degenerate, normalize
from .predicate import (
    PredExpr,
    PredicateSyntaxError,
    SideEffectError,
    eval_expr,
    expr_metrics,
    parse_predicate,
    print_minimal,
)
from .verify import (
    BuiltinBackend,
    ExternalBackend,
    ExternalBackendConfig,
    Outcome,
    Program,
    Property,
    VerificationQuery,
    decide,
    run_split,
)
from .grade import grade_candidate, quality_grade

__version__ = "0.1.0"
