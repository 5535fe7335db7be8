"""Command-line entry point: merge, sweep, pareto, score-text, synth, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .merge_core import (
    DEFAULT_DEGENERACY_EPS,
    MergeMethod,
    MergeRecipe,
    OutputDtype,
    merge_checkpoints_to_file,
    recipe_name,
)
from .metrics import GENERATION_METRICS, bleu, composite_score, rouge_l, rouge_n
from .pareto import DEFAULT_NEAR_EPSILON, ParetoResult, pareto_result
from .report import (
    emit_tradeoff_svg,
    load_points,
    write_pareto_report,
    write_sweep_csv,
)
from .sweep import (
    FileScoreEvaluator,
    SweepGrid,
    generate_grid,
    run_sweep,
    write_manifest,
)
from .synth import SyntheticEvaluator, load_world, make_synthetic_world, write_world
from .tensor_store import read_checkpoint

MANIFEST_FILENAME = "manifest.json"
CSV_FILENAME = "sweep.csv"
PARETO_FILENAME = "pareto.json"
TRADEOFF_FILENAME = "tradeoff.svg"


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--workers", type=int, default=1, help="parallel worker count for sweeps")
    common.add_argument(
        "--persist-checkpoints",
        action="store_true",
        help="write every merged checkpoint produced by a sweep",
    )
    common.add_argument(
        "--epsilon",
        type=float,
        default=DEFAULT_NEAR_EPSILON,
        help="near-frontier margin on [0,1] scores (default: %(default)s)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mergelab",
        description="Checkpoint merging, merge-ratio sweeps, and Pareto recipe selection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    p_merge = sub.add_parser("merge", parents=[common], help="merge two checkpoints into one")
    p_merge.add_argument("ckpt_c", type=Path, help="first input checkpoint (weight 0 endpoint)")
    p_merge.add_argument("ckpt_i", type=Path, help="second input checkpoint (weight 1 endpoint)")
    p_merge.add_argument("--method", choices=[m.value for m in MergeMethod], required=True)
    p_merge.add_argument("--weight", type=float, required=True, help="interpolation weight in [0,1]")
    p_merge.add_argument("--degeneracy-eps", type=float, default=DEFAULT_DEGENERACY_EPS)
    p_merge.add_argument("--output-dtype", choices=[d.value for d in OutputDtype], default="same")
    p_merge.set_defaults(func=cmd_merge)

    p_sweep = sub.add_parser("sweep", parents=[common], help="run a merge-ratio grid sweep")
    p_sweep.add_argument("ckpt_c", type=Path)
    p_sweep.add_argument("ckpt_i", type=Path)
    p_sweep.add_argument("--method", choices=[m.value for m in MergeMethod], required=True)
    p_sweep.add_argument("--start", type=float, default=0.0)
    p_sweep.add_argument("--stop", type=float, default=1.0)
    p_sweep.add_argument("--step", type=float, default=0.1)
    p_sweep.add_argument("--degeneracy-eps", type=float, default=DEFAULT_DEGENERACY_EPS)
    source = p_sweep.add_mutually_exclusive_group(required=True)
    source.add_argument("--world", type=Path, help="synthetic world descriptor JSON")
    source.add_argument("--scores", type=Path, help="external score file keyed by checkpoint name")
    p_sweep.set_defaults(func=cmd_sweep)

    p_pareto = sub.add_parser("pareto", parents=[common], help="select Pareto-optimal recipes")
    p_pareto.add_argument("input", type=Path, help="sweep manifest (.json) or CSV (.csv)")
    p_pareto.set_defaults(func=cmd_pareto)

    p_score = sub.add_parser("score-text", parents=[common], help="score line-aligned text pairs")
    p_score.add_argument("--candidate", type=Path, required=True)
    p_score.add_argument("--reference", type=Path, required=True)
    p_score.add_argument(
        "--external",
        type=Path,
        help="JSON with externally computed generation metrics (meteor, bertscore)",
    )
    p_score.set_defaults(func=cmd_score_text)

    p_synth = sub.add_parser("synth", parents=[common], help="generate a synthetic world")
    p_synth.add_argument("--dim", type=int, default=64)
    p_synth.add_argument("--n-tensors", type=int, default=4)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--beta-med", type=float, default=0.4)
    p_synth.add_argument("--beta-ins", type=float, default=0.9)
    p_synth.add_argument("--sigma", type=float, default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_report = sub.add_parser("report", parents=[common], help="emit trade-off and trajectory SVGs")
    p_report.add_argument("input", type=Path, help="sweep manifest (.json) or CSV (.csv)")
    p_report.set_defaults(func=cmd_report)

    return parser


def cmd_merge(args: argparse.Namespace) -> int:
    recipe = MergeRecipe(
        method=MergeMethod(args.method),
        weight=args.weight,
        degeneracy_eps=args.degeneracy_eps,
        output_dtype=OutputDtype(args.output_dtype),
    )
    ckpt_c = read_checkpoint(args.ckpt_c)
    ckpt_i = read_checkpoint(args.ckpt_i)
    args.out.mkdir(parents=True, exist_ok=True)
    out_path = args.out / f"{recipe_name(recipe)}.safetensors"
    report = merge_checkpoints_to_file(ckpt_c, ckpt_i, recipe, out_path)
    print(
        f"merged method={recipe.method.value} weight={recipe.weight:g} "
        f"tensors={report.tensor_count} fallbacks={report.fallback_count} -> {out_path}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    ckpt_c = read_checkpoint(args.ckpt_c)
    ckpt_i = read_checkpoint(args.ckpt_i)
    grid = SweepGrid(method=MergeMethod(args.method), start=args.start, stop=args.stop, step=args.step)
    recipes = [
        MergeRecipe(method=r.method, weight=r.weight, degeneracy_eps=args.degeneracy_eps)
        for r in generate_grid(grid)
    ]
    if args.world is not None:
        evaluator = SyntheticEvaluator(load_world(args.world))
    else:
        evaluator = FileScoreEvaluator.from_file(args.scores)
    points = run_sweep(
        ckpt_c,
        ckpt_i,
        recipes,
        evaluator,
        out_dir=args.out,
        persist_checkpoints=args.persist_checkpoints,
        workers=args.workers,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    manifest_path = args.out / MANIFEST_FILENAME
    csv_path = args.out / CSV_FILENAME
    write_manifest(points, manifest_path)
    write_sweep_csv(points, csv_path)
    failed = [p for p in points if not p.ok]
    for p in failed:
        print(f"warning: recipe {recipe_name(p.recipe)} failed evaluation", file=sys.stderr)
    print(f"swept {len(points)} recipes ({len(failed)} failed) -> {manifest_path}, {csv_path}")
    return 0


def _result_with_original_indices(points, epsilon: float) -> ParetoResult:
    ok_indices = [i for i, p in enumerate(points) if p.ok]
    subset = [points[i] for i in ok_indices]
    if not subset:
        raise ValueError("no successfully evaluated points in input")
    result = pareto_result(subset, epsilon)
    return ParetoResult(
        frontier=[ok_indices[j] for j in result.frontier],
        near_frontier=[ok_indices[j] for j in result.near_frontier],
        epsilon=epsilon,
    )


def cmd_pareto(args: argparse.Namespace) -> int:
    points = load_points(args.input)
    result = _result_with_original_indices(points, args.epsilon)
    args.out.mkdir(parents=True, exist_ok=True)
    report_path = args.out / PARETO_FILENAME
    write_pareto_report(points, result, report_path)
    for i in result.frontier:
        p = points[i]
        print(
            f"frontier: {p.recipe.method.value} weight={p.recipe.weight:.6f} "
            f"instruction={p.instruction_score:.6f} medical={p.medical_avg:.6f}"
        )
    print(f"{len(result.frontier)} frontier / {len(result.near_frontier)} near-frontier -> {report_path}")
    return 0


def _read_lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def _load_external_generation(path: Path) -> dict[str, float]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object of generation metrics")
    unknown = set(data) - set(GENERATION_METRICS)
    if unknown:
        raise ValueError(f"{path}: unknown metrics {sorted(unknown)}")
    for key, value in data.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
            raise ValueError(f"{path}: {key} out of range [0, 1]: {value!r}")
    return {k: float(v) for k, v in data.items()}


def cmd_score_text(args: argparse.Namespace) -> int:
    candidates = _read_lines(args.candidate)
    references = _read_lines(args.reference)
    if len(candidates) != len(references):
        raise ValueError(
            f"line count mismatch: {args.candidate} has {len(candidates)} lines, "
            f"{args.reference} has {len(references)}"
        )
    if not candidates:
        raise ValueError("input files are empty")
    names = ("rouge1", "rouge2", "rougeL", "bleu")
    totals = dict.fromkeys(names, 0.0)
    for lineno, (cand, ref) in enumerate(zip(candidates, references), start=1):
        scores = {
            "rouge1": rouge_n(cand, ref, 1),
            "rouge2": rouge_n(cand, ref, 2),
            "rougeL": rouge_l(cand, ref),
            "bleu": bleu(cand, ref),
        }
        for k in names:
            totals[k] += scores[k]
        print("pair {}: {}".format(lineno, " ".join(f"{k}={scores[k]:.6f}" for k in names)))
    means = {k: totals[k] / len(candidates) for k in names}
    print("corpus: " + " ".join(f"{k}={means[k]:.6f}" for k in names))
    if args.external is not None:
        external = _load_external_generation(args.external)
        missing = {"meteor", "bertscore"} - set(external)
        if missing:
            raise ValueError(f"{args.external}: missing external metrics {sorted(missing)}")
        comp = composite_score(
            bleu=means["bleu"],
            meteor=external["meteor"],
            rouge1=means["rouge1"],
            rouge2=means["rouge2"],
            rougeL=means["rougeL"],
            bertscore=external["bertscore"],
        )
        print(
            "composite: "
            + " ".join(f"{m}={getattr(comp, m):.6f}" for m in GENERATION_METRICS)
            + f" overall={comp.overall:.6f}"
        )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    world = make_synthetic_world(
        dim=args.dim,
        n_tensors=args.n_tensors,
        seed=args.seed,
        beta_med=args.beta_med,
        beta_ins=args.beta_ins,
        sigma=args.sigma,
    )
    descriptor = write_world(world, args.out)
    print(f"wrote synthetic world ({args.n_tensors} tensors x {args.dim}) -> {descriptor.parent}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    points = load_points(args.input)
    result = _result_with_original_indices(points, args.epsilon)
    args.out.mkdir(parents=True, exist_ok=True)
    scatter_path = args.out / TRADEOFF_FILENAME
    companion = emit_tradeoff_svg(points, result, scatter_path)
    print(f"wrote {scatter_path} and {companion}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
