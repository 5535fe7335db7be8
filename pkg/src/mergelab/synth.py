"""Deterministic synthetic checkpoint pairs with analytic score landscapes.

Each task scores a checkpoint as exp(-D^2 / (2 sigma^2)) where D is the
Euclidean distance between the checkpoint's concatenated weights and the
task optimum mu = (1-beta)*theta_c + beta*theta_i. Along the linear merge
path this collapses to the closed form exp(-((alpha-beta)*L)^2 / (2 sigma^2))
with L = |theta_i - theta_c|, so sweep trajectories peak exactly at
alpha = beta and trade off between the two tasks.

Worlds are reproducible: tensors are drawn from numpy's PCG64 bit
generator seeded with the given integer, via Generator.standard_normal
in float32 (clinical tensors first, then instruct tensors).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor_store import Checkpoint, write_checkpoint

__all__ = [
    "SyntheticTaskSpec",
    "SyntheticWorld",
    "SyntheticEvaluator",
    "make_synthetic_world",
    "synthetic_eval",
    "write_world",
    "load_world",
]

MEDICAL_BENCHMARK = "synthetic_medical"

CKPT_C_FILENAME = "ckpt_c.safetensors"
CKPT_I_FILENAME = "ckpt_i.safetensors"
WORLD_FILENAME = "world.json"


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Gaussian score bump centered at fraction ``beta`` of the c-to-i segment."""

    beta: float
    sigma: float
    label: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class SyntheticWorld:
    ckpt_c: Checkpoint
    ckpt_i: Checkpoint
    tasks: tuple[SyntheticTaskSpec, SyntheticTaskSpec]  # (medical, instruction)
    dim: int
    n_tensors: int
    seed: int

    @property
    def medical_task(self) -> SyntheticTaskSpec:
        return self.tasks[0]

    @property
    def instruction_task(self) -> SyntheticTaskSpec:
        return self.tasks[1]


def _flat_weights(ckpt: Checkpoint) -> np.ndarray:
    """Concatenated float64 weight vector, tensors in lexicographic name order."""
    parts = [ckpt.array_f32(name).astype(np.float64) for name in sorted(ckpt.names)]
    return np.concatenate(parts) if parts else np.zeros(0)


def make_synthetic_world(
    dim: int,
    n_tensors: int,
    seed: int,
    beta_med: float = 0.4,
    beta_ins: float = 0.9,
    sigma: float | None = None,
) -> SyntheticWorld:
    """Generate a deterministic world; ``sigma`` defaults to half the c-to-i distance."""
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    if n_tensors <= 0:
        raise ValueError(f"n_tensors must be positive, got {n_tensors}")
    if sigma is not None and not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = np.random.Generator(np.random.PCG64(seed))
    names = [f"layer_{i:03d}.weight" for i in range(n_tensors)]
    arrays_c = {name: rng.standard_normal(dim, dtype=np.float32) for name in names}
    arrays_i = {name: rng.standard_normal(dim, dtype=np.float32) for name in names}
    ckpt_c = Checkpoint.from_arrays(arrays_c)
    ckpt_i = Checkpoint.from_arrays(arrays_i)
    separation = float(np.linalg.norm(_flat_weights(ckpt_i) - _flat_weights(ckpt_c)))
    if separation == 0.0:
        raise ValueError("degenerate world: checkpoints coincide")
    if sigma is None:
        sigma = 0.5 * separation
    tasks = (
        SyntheticTaskSpec(beta=beta_med, sigma=sigma, label="medical"),
        SyntheticTaskSpec(beta=beta_ins, sigma=sigma, label="instruction"),
    )
    return SyntheticWorld(ckpt_c=ckpt_c, ckpt_i=ckpt_i, tasks=tasks, dim=dim, n_tensors=n_tensors, seed=seed)


def _task_score(weights: np.ndarray, wc: np.ndarray, wi: np.ndarray, task: SyntheticTaskSpec) -> float:
    mu = (1.0 - task.beta) * wc + task.beta * wi
    dist_sq = float(np.dot(weights - mu, weights - mu))
    return math.exp(-dist_sq / (2.0 * task.sigma**2))


def synthetic_eval(ckpt: Checkpoint, world: SyntheticWorld) -> tuple[float, dict[str, float]]:
    """Score a checkpoint against the world's two tasks.

    Returns ``(instruction_score, per_benchmark)`` where the medical task
    populates a single-entry benchmark map.
    """
    if set(ckpt.names) != set(world.ckpt_c.names):
        raise ValueError("checkpoint tensor names do not match the world's")
    for name in ckpt.names:
        if ckpt.meta(name).shape != world.ckpt_c.meta(name).shape:
            raise ValueError(f"tensor {name!r}: shape mismatch against the world")
    weights = _flat_weights(ckpt)
    wc = _flat_weights(world.ckpt_c)
    wi = _flat_weights(world.ckpt_i)
    instruction = _task_score(weights, wc, wi, world.instruction_task)
    medical = _task_score(weights, wc, wi, world.medical_task)
    return instruction, {MEDICAL_BENCHMARK: medical}


class SyntheticEvaluator:
    """Sweep evaluator backed by a synthetic world; pure and thread-safe."""

    parallel_safe = True

    def __init__(self, world: SyntheticWorld) -> None:
        self.world = world

    def evaluate(self, ckpt: Checkpoint) -> tuple[float, dict[str, float]]:
        return synthetic_eval(ckpt, self.world)


def write_world(world: SyntheticWorld, out_dir: str | Path) -> Path:
    """Write the world's two checkpoints and its descriptor JSON; returns the descriptor path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_checkpoint(world.ckpt_c, out_dir / CKPT_C_FILENAME)
    write_checkpoint(world.ckpt_i, out_dir / CKPT_I_FILENAME)
    descriptor = {
        "dim": world.dim,
        "n_tensors": world.n_tensors,
        "seed": world.seed,
        "beta_med": world.medical_task.beta,
        "beta_ins": world.instruction_task.beta,
        "sigma": world.medical_task.sigma,
    }
    path = out_dir / WORLD_FILENAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(descriptor, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_world(descriptor_path: str | Path) -> SyntheticWorld:
    """Regenerate a world from its descriptor (generation is deterministic)."""
    with open(descriptor_path, "r", encoding="utf-8") as f:
        d = json.load(f)
    try:
        return make_synthetic_world(
            dim=d["dim"],
            n_tensors=d["n_tensors"],
            seed=d["seed"],
            beta_med=d["beta_med"],
            beta_ins=d["beta_ins"],
            sigma=d["sigma"],
        )
    except KeyError as exc:
        raise ValueError(f"{descriptor_path}: world descriptor missing {exc.args[0]!r}") from None
