"""Benchmark aggregation, native text-overlap metrics, and external score ingestion.

Native metrics are ROUGE-1/2/L and sentence BLEU; METEOR and BERTScore
require stemming resources and neural embeddings and are only ingested
from externally computed score files. Tokenization is fixed: lowercase,
then maximal runs of alphanumeric characters (everything else separates).

BLEU configuration, so that an independent oracle can be set up
identically: 4-gram, uniform 1/4 weights, clipped modified precision,
add-one smoothing of numerator and denominator for n >= 2, brevity
penalty exp(1 - r/c) when the candidate is shorter than the reference.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "IfevalStrict",
    "CompositeScore",
    "ScoreRecord",
    "GENERATION_METRICS",
    "medical_avg",
    "ifeval_score",
    "tokenize",
    "rouge_n",
    "rouge_l",
    "bleu",
    "composite_score",
    "ingest_external_scores",
]

GENERATION_METRICS = ("bleu", "meteor", "rouge1", "rouge2", "rougeL", "bertscore")

_TOKEN_RE = re.compile(r"[^\W_]+")


def _check_unit_range(value: float, label: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{label} must be a number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{label} out of range [0, 1]: {value}")
    return float(value)


@dataclass(frozen=True)
class IfevalStrict:
    """Prompt-level and instance-level strict accuracies."""

    prompt_level_strict: float
    instance_level_strict: float

    def __post_init__(self) -> None:
        _check_unit_range(self.prompt_level_strict, "prompt_level_strict")
        _check_unit_range(self.instance_level_strict, "instance_level_strict")


def ifeval_score(s: IfevalStrict) -> float:
    """Average of prompt-level and instance-level strict accuracy."""
    return (s.prompt_level_strict + s.instance_level_strict) / 2.0


def medical_avg(per_benchmark: Mapping[str, float]) -> float:
    """Unweighted mean accuracy across a benchmark suite."""
    if not per_benchmark:
        raise ValueError("medical_avg requires at least one benchmark score")
    values = [_check_unit_range(v, f"benchmark {k!r}") for k, v in per_benchmark.items()]
    first = values[0]
    if all(v == first for v in values):
        # the mean of identical values must be exact, not rounded
        return first
    return math.fsum(values) / len(values)


def tokenize(text: str) -> list[str]:
    """Lowercase, then split into maximal runs of alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int = 1) -> float:
    """F1 over clipped n-gram overlap; 0 when either side has no n-grams."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngram_counts(tokenize(candidate), n)
    ref = _ngram_counts(tokenize(reference), n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 or ref_total == 0:
        return 0.0
    matched = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _f1(matched / cand_total, matched / ref_total)


def _lcs_len(x: list[str], y: list[str]) -> int:
    if len(x) < len(y):
        x, y = y, x
    if not y:
        return 0
    prev = [0] * (len(y) + 1)
    for xi in x:
        curr = [0]
        for j, yj in enumerate(y, start=1):
            if xi == yj:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """F1 over the longest common subsequence of the token sequences."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_len(cand, ref)
    if lcs == 0:
        return 0.0
    return _f1(lcs / len(cand), lcs / len(ref))


def bleu(candidate: str, reference: str) -> float:
    """Sentence-level BLEU-4 (configuration in the module docstring)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_precision_sum = 0.0
    for n in range(1, 5):
        cand_grams = _ngram_counts(cand, n)
        ref_grams = _ngram_counts(ref, n)
        total = sum(cand_grams.values())
        matched = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
        if n >= 2:
            matched += 1
            total += 1
        if matched == 0 or total == 0:
            return 0.0
        log_precision_sum += 0.25 * math.log(matched / total)
    brevity = math.exp(1.0 - len(ref) / len(cand)) if len(cand) < len(ref) else 1.0
    return brevity * math.exp(log_precision_sum)


@dataclass(frozen=True)
class CompositeScore:
    """Six generation metrics and their unweighted mean.

    Missing metrics are None only when the composite was computed with
    ``allow_partial``; ``partial`` marks such results.
    """

    bleu: float | None
    meteor: float | None
    rouge1: float | None
    rouge2: float | None
    rougeL: float | None
    bertscore: float | None
    overall: float
    partial: bool = False

    def __post_init__(self) -> None:
        values = [getattr(self, m) for m in GENERATION_METRICS]
        present = [v for v in values if v is not None]
        if not self.partial and len(present) != len(GENERATION_METRICS):
            raise ValueError("non-partial composite requires all six metrics")
        if not present:
            raise ValueError("composite requires at least one metric")
        expected = math.fsum(present) / len(present)
        if abs(self.overall - expected) > 1e-9:
            raise ValueError(f"overall {self.overall} does not match metric mean {expected}")


def composite_score(
    *,
    bleu: float | None = None,
    meteor: float | None = None,
    rouge1: float | None = None,
    rouge2: float | None = None,
    rougeL: float | None = None,
    bertscore: float | None = None,
    allow_partial: bool = False,
) -> CompositeScore:
    """Unweighted arithmetic mean of the six generation metrics.

    Missing metrics raise unless ``allow_partial`` is set, in which case
    the mean covers the present metrics and the result is marked partial.
    """
    given = {
        "bleu": bleu,
        "meteor": meteor,
        "rouge1": rouge1,
        "rouge2": rouge2,
        "rougeL": rougeL,
        "bertscore": bertscore,
    }
    missing = [k for k in GENERATION_METRICS if given[k] is None]
    if missing and not allow_partial:
        raise ValueError(f"missing metrics: {', '.join(missing)} (pass allow_partial to average the rest)")
    present = [_check_unit_range(v, k) for k, v in given.items() if v is not None]
    if not present:
        raise ValueError("composite requires at least one metric")
    overall = math.fsum(present) / len(present)
    return CompositeScore(**given, overall=overall, partial=bool(missing))


@dataclass(frozen=True)
class ScoreRecord:
    """Externally computed scores for one checkpoint."""

    ifeval: IfevalStrict
    benchmarks: dict[str, float]
    generation: dict[str, float]


def _reject_duplicate_keys(pairs: list[tuple[str, object]]) -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in pairs:
        if key in out:
            raise ValueError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _parse_record(name: str, entry: object) -> ScoreRecord:
    if not isinstance(entry, dict):
        raise ValueError(f"{name}: record must be an object")
    unknown = set(entry) - {"ifeval", "benchmarks", "generation"}
    if unknown:
        raise ValueError(f"{name}: unknown fields {sorted(unknown)}")

    ifeval_obj = entry.get("ifeval")
    if not isinstance(ifeval_obj, dict) or set(ifeval_obj) != {"prompt_strict", "instance_strict"}:
        raise ValueError(f"{name}.ifeval must be an object with prompt_strict and instance_strict")
    ifeval = IfevalStrict(
        _check_unit_range(ifeval_obj["prompt_strict"], f"{name}.ifeval.prompt_strict"),
        _check_unit_range(ifeval_obj["instance_strict"], f"{name}.ifeval.instance_strict"),
    )

    bench_obj = entry.get("benchmarks")
    if not isinstance(bench_obj, dict) or not bench_obj:
        raise ValueError(f"{name}.benchmarks must be a non-empty object")
    benchmarks = {
        bench: _check_unit_range(score, f"{name}.benchmarks.{bench}")
        for bench, score in bench_obj.items()
    }

    gen_obj = entry.get("generation", {})
    if not isinstance(gen_obj, dict):
        raise ValueError(f"{name}.generation must be an object")
    bad = set(gen_obj) - set(GENERATION_METRICS)
    if bad:
        raise ValueError(f"{name}.generation has unknown metrics {sorted(bad)}")
    generation = {
        metric: _check_unit_range(score, f"{name}.generation.{metric}")
        for metric, score in gen_obj.items()
    }
    return ScoreRecord(ifeval=ifeval, benchmarks=benchmarks, generation=generation)


def ingest_external_scores(path: str | Path) -> dict[str, ScoreRecord]:
    """Load and validate an external score file keyed by checkpoint name.

    Schema: ``{checkpoint-name: {"ifeval": {"prompt_strict": x,
    "instance_strict": y}, "benchmarks": {name: accuracy, ...},
    "generation": {metric: score, ...}}}`` with any generation subset
    permitted. All scores must lie in [0, 1].
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f, object_pairs_hook=_reject_duplicate_keys)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON: {exc}") from None
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be an object keyed by checkpoint name")
    return {name: _parse_record(name, entry) for name, entry in data.items()}
