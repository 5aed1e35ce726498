"""Parameterized subtask-graph inference lab.

Symbolic compositional-task environments, zero-shot entity-attribute
induction, first-order precondition/effect/reward inference from
trajectories, graph-conditioned planning policies, and a meta-train /
meta-eval harness.
"""

from . import errors
from .domain import DomainConfig, bundled_domain_path, load_domain
from .env import (
    EnvState,
    TaskInstance,
    Trajectory,
    compute_eligibility,
    critical_path_length,
    reset,
    sample_task,
    step,
)
from .exprs import (
    FALSE,
    TRUE,
    And,
    AttributePattern,
    GroundPattern,
    Lit,
    Or,
    ParamExpr,
    SubtaskPattern,
    eval_expr,
    to_dnf,
)
from .graphs import (
    GroundGraph,
    GroundOption,
    GroundSubtask,
    ParamGraph,
    VerbSignature,
    apply_effect,
    ground_eligibility,
    semantic_graph_error,
)

__version__ = "0.1.0"
