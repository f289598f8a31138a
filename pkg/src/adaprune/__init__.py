"""Unsupervised domain adaptation by MMD-optimal pruning of source data."""

from .baselines import CoralTransform, WeightVector, coral_transform, kmm_weights, landmark_select
from .estimators import AdaPrune, CoralAligner, KernelMeanMatching, LandmarkSelector, mmd_score
from .evaluation import (
    EvalReport,
    SynthSpec,
    evaluate_pipeline,
    pearson,
    split_train_val,
    sweep_mmd_accuracy,
    synth_domain_pair,
    train_eval_knn,
)
from .exceptions import (
    AdaPruneError,
    InstanceTooLargeError,
    InvalidInputError,
    ParseError,
    UndefinedCorrelationError,
)
from .kernel import (
    DEFAULT_BANDWIDTHS,
    EmbeddingSet,
    KernelModel,
    cross_affinity,
    gram_source,
    rbf_mixture,
    target_self_term,
)
from .lpformat import export_qp_text, parse_qp_text
from .mmd import (
    PruneMask,
    PruneProblem,
    iqp_objective,
    masked_mmd_squared,
    mmd,
    mmd_squared,
    weighted_mmd_squared,
)
from .solver import (
    FractionalSolution,
    SolveResult,
    build_problem,
    solve_branch_bound,
    solve_brute_force,
    solve_greedy_swap,
    solve_relax_round,
    solve_relaxation,
)

__version__ = "0.1.0"
