"""Interpolation-weight grids and the merge-then-evaluate sweep runner.

A sweep merges the two input checkpoints once per recipe, hands each
merged checkpoint to an evaluator, and collects one EvalPoint per recipe
in recipe order. Evaluator failures mark the point as failed instead of
aborting the sweep; merge failures abort with the offending recipe named.
Results are independent of the worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

from .merge_core import (
    MergeError,
    MergeMethod,
    MergeRecipe,
    merge_checkpoints,
    recipe_name,
)
from .metrics import ScoreRecord, ifeval_score, ingest_external_scores, medical_avg
from .tensor_store import Checkpoint, write_checkpoint

__all__ = [
    "SweepGrid",
    "EvalPoint",
    "Evaluator",
    "FileScoreEvaluator",
    "generate_grid",
    "run_sweep",
    "write_manifest",
    "read_manifest",
    "checkpoint_key",
]

STATUS_OK = "ok"
STATUS_FAILED = "failed"

_NAN = float("nan")


@dataclass(frozen=True)
class SweepGrid:
    """Inclusive weight grid start, start+step, ... up to stop."""

    method: MergeMethod
    start: float = 0.0
    stop: float = 1.0
    step: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.start <= self.stop <= 1.0:
            raise ValueError(f"grid range [{self.start}, {self.stop}] must satisfy 0 <= start <= stop <= 1")
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step}")


def generate_grid(grid: SweepGrid) -> list[MergeRecipe]:
    """Expand a grid into recipes carrying default numeric policies.

    Weights are start + i*step rounded to 9 decimal places; stop is
    included when it lands within 1e-9 of a grid point.
    """
    count = int(math.floor((grid.stop - grid.start) / grid.step + 1e-9)) + 1
    weights = [round(grid.start + i * grid.step, 9) for i in range(count)]
    return [MergeRecipe(method=grid.method, weight=w) for w in weights]


@dataclass(frozen=True)
class EvalPoint:
    """One merged checkpoint's position in the (instruction, medical) plane."""

    recipe: MergeRecipe
    instruction_score: float
    medical_avg: float
    per_benchmark: dict[str, float] = field(default_factory=dict)
    checkpoint_path: str | None = None
    status: str = STATUS_OK

    def __post_init__(self) -> None:
        if self.status == STATUS_OK and self.per_benchmark:
            expected = medical_avg(self.per_benchmark)
            if abs(self.medical_avg - expected) > 1e-9:
                raise ValueError(
                    f"medical_avg {self.medical_avg} does not match benchmark mean {expected}"
                )

    @classmethod
    def from_scores(
        cls,
        recipe: MergeRecipe,
        instruction_score: float,
        per_benchmark: dict[str, float],
        checkpoint_path: str | None = None,
    ) -> "EvalPoint":
        return cls(
            recipe=recipe,
            instruction_score=instruction_score,
            medical_avg=medical_avg(per_benchmark),
            per_benchmark=dict(per_benchmark),
            checkpoint_path=checkpoint_path,
        )

    @classmethod
    def failed(cls, recipe: MergeRecipe, checkpoint_path: str | None = None) -> "EvalPoint":
        return cls(
            recipe=recipe,
            instruction_score=_NAN,
            medical_avg=_NAN,
            per_benchmark={},
            checkpoint_path=checkpoint_path,
            status=STATUS_FAILED,
        )

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


@runtime_checkable
class Evaluator(Protocol):
    """Maps a checkpoint to (instruction_score, per_benchmark accuracies).

    ``parallel_safe`` declares whether concurrent invocation is allowed;
    the sweep runs serially otherwise.
    """

    parallel_safe: bool

    def evaluate(self, ckpt: Checkpoint) -> tuple[float, dict[str, float]]: ...


def checkpoint_key(ckpt: Checkpoint) -> str:
    """Deterministic score-file key of a merged checkpoint, from its metadata."""
    try:
        method = ckpt.metadata["merge_method"]
        weight = float(ckpt.metadata["merge_weight"])
    except (KeyError, ValueError) as exc:
        raise KeyError(f"checkpoint metadata does not identify a merge recipe: {exc}") from None
    return f"{method}-{weight:.6f}"


class FileScoreEvaluator:
    """Evaluator backed by pre-computed scores keyed by checkpoint name.

    Keys follow :func:`merge_core.recipe_name`, e.g. ``slerp-0.400000``.
    """

    parallel_safe = True

    def __init__(self, records: dict[str, ScoreRecord]) -> None:
        self._records = dict(records)

    @classmethod
    def from_file(cls, path: str | Path) -> "FileScoreEvaluator":
        return cls(ingest_external_scores(path))

    def evaluate(self, ckpt: Checkpoint) -> tuple[float, dict[str, float]]:
        key = checkpoint_key(ckpt)
        if key not in self._records:
            raise KeyError(f"no external scores for checkpoint {key!r}")
        record = self._records[key]
        return ifeval_score(record.ifeval), dict(record.benchmarks)


def _run_one(
    ckpt_c: Checkpoint,
    ckpt_i: Checkpoint,
    recipe: MergeRecipe,
    evaluator: Evaluator,
    out_dir: Path | None,
    persist: bool,
) -> EvalPoint:
    try:
        report = merge_checkpoints(ckpt_c, ckpt_i, recipe)
    except MergeError as exc:
        raise MergeError(f"recipe {recipe_name(recipe)}: {exc}") from exc
    path: str | None = None
    if persist:
        assert out_dir is not None
        file_path = out_dir / f"{recipe_name(recipe)}.safetensors"
        write_checkpoint(report.checkpoint, file_path)
        path = str(file_path)
    try:
        instruction, per_benchmark = evaluator.evaluate(report.checkpoint)
    except Exception:
        return EvalPoint.failed(recipe, checkpoint_path=path)
    return EvalPoint.from_scores(recipe, instruction, per_benchmark, checkpoint_path=path)


def run_sweep(
    ckpt_c: Checkpoint,
    ckpt_i: Checkpoint,
    recipes: list[MergeRecipe],
    evaluator: Evaluator,
    out_dir: str | Path | None = None,
    *,
    persist_checkpoints: bool = False,
    workers: int = 1,
) -> list[EvalPoint]:
    """Merge and evaluate every recipe, returning EvalPoints in recipe order.

    With ``persist_checkpoints`` each merged checkpoint is written to
    ``out_dir`` under its deterministic recipe name. ``workers`` > 1 runs
    recipes concurrently when the evaluator declares itself parallel-safe;
    results are identical either way.
    """
    if persist_checkpoints and out_dir is None:
        raise ValueError("persisting checkpoints requires an output directory")
    directory = None
    if out_dir is not None:
        directory = Path(out_dir)
        directory.mkdir(parents=True, exist_ok=True)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if not recipes:
        return []

    if workers == 1 or not getattr(evaluator, "parallel_safe", False):
        return [_run_one(ckpt_c, ckpt_i, r, evaluator, directory, persist_checkpoints) for r in recipes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_one, ckpt_c, ckpt_i, r, evaluator, directory, persist_checkpoints)
            for r in recipes
        ]
        return [f.result() for f in futures]


def _point_to_json(point: EvalPoint) -> dict[str, object]:
    return {
        "method": point.recipe.method.value,
        "weight": point.recipe.weight,
        "instruction_score": point.instruction_score if point.ok else None,
        "medical_avg": point.medical_avg if point.ok else None,
        "per_benchmark": dict(sorted(point.per_benchmark.items())),
        "checkpoint_path": point.checkpoint_path,
        "status": point.status,
    }


def write_manifest(points: list[EvalPoint], path: str | Path) -> None:
    """Write the sweep manifest: one JSON record per recipe, in order."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump([_point_to_json(p) for p in points], f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path: str | Path) -> list[EvalPoint]:
    """Read a sweep manifest back into EvalPoints (recipes carry default policies)."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON: {exc}") from None
    if not isinstance(data, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    points = []
    for i, entry in enumerate(data):
        try:
            recipe = MergeRecipe(method=MergeMethod(entry["method"]), weight=entry["weight"])
            if entry["status"] == STATUS_OK:
                points.append(
                    EvalPoint(
                        recipe=recipe,
                        instruction_score=float(entry["instruction_score"]),
                        medical_avg=float(entry["medical_avg"]),
                        per_benchmark={k: float(v) for k, v in entry["per_benchmark"].items()},
                        checkpoint_path=entry.get("checkpoint_path"),
                    )
                )
            else:
                points.append(EvalPoint.failed(recipe, checkpoint_path=entry.get("checkpoint_path")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: record {i}: {exc}") from None
    return points
