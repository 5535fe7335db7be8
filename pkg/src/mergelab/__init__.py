"""mergelab: checkpoint merging, merge-ratio sweeps, and Pareto recipe selection."""

__version__ = "0.1.0"

from .merge_core import (
    DEFAULT_DEGENERACY_EPS,
    MergeError,
    MergeMethod,
    MergeRecipe,
    MergeReport,
    OutputDtype,
    lerp_tensor,
    merge_checkpoints,
    merge_checkpoints_to_file,
    recipe_name,
    slerp_tensor,
)
from .metrics import (
    CompositeScore,
    IfevalStrict,
    ScoreRecord,
    bleu,
    composite_score,
    ifeval_score,
    ingest_external_scores,
    medical_avg,
    rouge_l,
    rouge_n,
    tokenize,
)
from .pareto import (
    DEFAULT_NEAR_EPSILON,
    ParetoResult,
    dominates,
    near_frontier,
    pareto_frontier,
    pareto_result,
)
from .sweep import (
    EvalPoint,
    Evaluator,
    FileScoreEvaluator,
    SweepGrid,
    generate_grid,
    read_manifest,
    run_sweep,
    write_manifest,
)
from .synth import (
    SyntheticEvaluator,
    SyntheticTaskSpec,
    SyntheticWorld,
    make_synthetic_world,
    synthetic_eval,
)
from .tensor_store import (
    Checkpoint,
    Dtype,
    TensorMeta,
    TensorStoreError,
    f32_to_dtype,
    read_checkpoint,
    tensor_as_f32,
    write_checkpoint,
)
