"""
Simulation benchmark: repeated tasks over cost-sampled skills under the three
scenarios, plus the trajectory, heatmap and ratio sweeps built on top of it.
"""
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from .costs import (
    DEFAULT_DELTAS,
    DEFAULT_SIGMAS,
    CostLedger,
    average_cost_curve,
    build_parameter_grid,
    make_rng,
    sample_cost_profile,
    skill_rng,
    task_cost,
)
from .errors import InvalidArgumentError
from .models import CostParams, CostProfile, Perspective, Scenario
from .stats import column_mean_ci95, mean_ci95
from .utils import derive_seed, get_logger

logger = get_logger(__name__)

# Substream id of the task sequence; skill substreams use 0..num_skills-1.
TASK_STREAM = (1 << 64) - 1
DEFAULT_CHECKPOINTS = (20, 100, 400)
DEFAULT_RATIO_TOTAL = 8.0


class TaskDistribution(str, Enum):
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SimConfig:
    cost_params: CostParams
    scenario: Scenario = Scenario.SKILLFLOW_PAID
    num_skills: int = 20
    num_tasks: int = 400
    seed: int = 0
    task_distribution: TaskDistribution = TaskDistribution.UNIFORM

    def __post_init__(self) -> None:
        if self.num_skills < 1:
            raise InvalidArgumentError("num_skills must be >= 1")
        if self.num_tasks < 1:
            raise InvalidArgumentError("num_tasks must be >= 1")
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "task_distribution", TaskDistribution(self.task_distribution))


@dataclass
class SweepResult:
    rows: pd.DataFrame
    metadata: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def write_csv(self, path: Path | str) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.rows.to_csv(target, index=False, float_format="%.6f", lineterminator="\n")
        if self.metadata:
            meta_path = target.with_name(target.name + ".meta.json")
            meta_path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("Wrote %d rows to %s", len(self.rows), target)
        return target


def skill_profiles(params: CostParams, seed: int, num_skills: int) -> List[CostProfile]:
    return [sample_cost_profile(params, skill_rng(seed, i)) for i in range(num_skills)]


def task_stream(seed: int, num_skills: int, num_tasks: int) -> np.ndarray:
    """Skill index of every task; depends only on the seed and the skill count."""
    rng = make_rng(derive_seed(seed, TASK_STREAM))
    return rng.integers(0, num_skills, size=num_tasks)


def run_simulation(config: SimConfig) -> CostLedger:
    profiles = skill_profiles(config.cost_params, config.seed, config.num_skills)
    ledger = CostLedger()
    for skill in task_stream(config.seed, config.num_skills, config.num_tasks):
        skill = int(skill)
        requestor, provider, acquires = task_cost(config.scenario, profiles[skill], ledger.owns(skill))
        ledger.append(skill, requestor, provider, acquires)
    return ledger


def _curves(
    params: CostParams, seeds: Sequence[int], scenario: Scenario, num_skills: int, num_tasks: int
) -> Dict[Perspective, np.ndarray]:
    """(seeds x tasks) average-cost curves for both perspectives."""
    ledgers = [
        run_simulation(SimConfig(params, scenario, num_skills, num_tasks, seed)) for seed in seeds
    ]
    return {
        perspective: np.vstack([average_cost_curve(ledger, perspective) for ledger in ledgers])
        for perspective in Perspective
    }


def run_trajectory_comparison(
    cost_params: CostParams,
    seeds: Sequence[int],
    num_skills: int = 20,
    num_tasks: int = 400,
    with_ci: bool = True,
) -> SweepResult:
    seeds = list(seeds)
    if not seeds:
        raise InvalidArgumentError("at least one seed is required")
    if with_ci and len(seeds) < 2:
        raise InvalidArgumentError("a confidence interval needs at least 2 seeds")

    iterations = np.arange(1, num_tasks + 1)
    frames = []
    for scenario in Scenario:
        curves = _curves(cost_params, seeds, scenario, num_skills, num_tasks)
        for perspective in Perspective:
            matrix = curves[perspective]
            if with_ci:
                means, ci = column_mean_ci95(matrix)
            else:
                means, ci = matrix.mean(axis=0), np.full(num_tasks, np.nan)
            frames.append(
                pd.DataFrame(
                    {
                        "iteration": iterations,
                        "scenario": scenario.value,
                        "perspective": perspective.value,
                        "mean": means,
                        "ci95": ci,
                    }
                )
            )
    rows = pd.concat(frames, ignore_index=True)
    metadata = {
        "mu": list(cost_params.mus),
        "sigma": [cost_params.sigma_b, cost_params.sigma_e, cost_params.sigma_c],
        "delta": [cost_params.delta_b, cost_params.delta_e, cost_params.delta_c],
        "seeds": seeds,
        "num_skills": num_skills,
        "num_tasks": num_tasks,
        "shared_task_streams": True,
    }
    return SweepResult(rows=rows, metadata=metadata)


def _diff_at_checkpoints(
    params: CostParams,
    seeds: Sequence[int],
    checkpoints: Sequence[int],
    num_skills: int,
) -> Dict[Perspective, np.ndarray]:
    """(seeds x checkpoints) Baseline-minus-SkillFlowPaid average cost per task."""
    num_tasks = max(checkpoints)
    baseline = _curves(params, seeds, Scenario.BASELINE, num_skills, num_tasks)
    paid = _curves(params, seeds, Scenario.SKILLFLOW_PAID, num_skills, num_tasks)
    index = np.asarray(checkpoints) - 1
    return {p: (baseline[p] - paid[p])[:, index] for p in Perspective}


def _ci_or_nan(samples: np.ndarray) -> float:
    return mean_ci95(samples)[1] if len(samples) >= 2 else float("nan")


def _heatmap_cell(
    params: CostParams, seeds: Sequence[int], checkpoints: Sequence[int], num_skills: int
) -> List[dict]:
    diffs = _diff_at_checkpoints(params, seeds, checkpoints, num_skills)
    rows = []
    for j, checkpoint in enumerate(checkpoints):
        requestor = diffs[Perspective.REQUESTOR][:, j]
        rows.append(
            {
                "mu_b": float(params.mu_b),
                "mu_e": float(params.mu_e),
                "mu_c": float(params.mu_c),
                "checkpoint": int(checkpoint),
                "mean_diff_requestor": float(requestor.mean()),
                "mean_diff_system": float(diffs[Perspective.SYSTEM][:, j].mean()),
                "ci95": _ci_or_nan(requestor),
                "n_seeds": len(seeds),
            }
        )
    return rows


def _check_checkpoints(checkpoints: Iterable[int]) -> List[int]:
    points = sorted(set(int(c) for c in checkpoints))
    if not points or points[0] < 1:
        raise InvalidArgumentError("checkpoints must be positive iteration numbers")
    return points


def run_heatmap_sweep(
    simplex_sum: float = 20,
    checkpoints: Iterable[int] = DEFAULT_CHECKPOINTS,
    seeds: Iterable[int] = range(10),
    num_skills: int = 20,
    sigmas=DEFAULT_SIGMAS,
    deltas=DEFAULT_DELTAS,
    workers: int = 1,
) -> SweepResult:
    if simplex_sum < 3 or float(simplex_sum) != int(simplex_sum):
        raise InvalidArgumentError("simplex_sum must be an integer >= 3")
    total = int(simplex_sum)
    seeds = list(seeds)
    if not seeds:
        raise InvalidArgumentError("at least one seed is required")
    points = _check_checkpoints(checkpoints)
    grid = build_parameter_grid(range(1, total - 1), sigmas, deltas, simplex_sum=total)

    cell = partial(_heatmap_cell, seeds=seeds, checkpoints=points, num_skills=num_skills)
    rows: List[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(cell, grid)
            for i, cell_rows in enumerate(results, start=1):
                rows.extend(cell_rows)
                logger.info("Heatmap cell %d/%d done", i, len(grid))
    else:
        for i, params in enumerate(grid, start=1):
            rows.extend(cell(params))
            logger.info("Heatmap cell %d/%d done (mu=%s)", i, len(grid), params.mus)

    metadata = {
        "simplex_sum": total,
        "checkpoints": points,
        "seeds": seeds,
        "sigma": list(sigmas),
        "delta": list(deltas),
        "num_skills": num_skills,
        "shared_task_streams": True,
    }
    return SweepResult(rows=pd.DataFrame(rows), metadata=metadata)


def ratio_params(
    mu_b: float, ratio: float, total: float = DEFAULT_RATIO_TOTAL, sigmas=DEFAULT_SIGMAS, deltas=DEFAULT_DELTAS
) -> CostParams:
    """Split ``total`` into (mu_e, mu_c) with mu_c / mu_e == ratio."""
    if ratio <= 0:
        raise InvalidArgumentError(f"ratio must be > 0, got {ratio}")
    mu_e = total / (1.0 + ratio)
    return CostParams.from_triples((mu_b, mu_e, total - mu_e), sigmas, deltas)


def run_ratio_sweep(
    mu_b: float = 4,
    ratios: Iterable[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
    checkpoints: Iterable[int] = DEFAULT_CHECKPOINTS,
    seeds: Iterable[int] = range(10),
    total: float = DEFAULT_RATIO_TOTAL,
    num_skills: int = 20,
    sigmas=DEFAULT_SIGMAS,
    deltas=DEFAULT_DELTAS,
    perspective: Perspective = Perspective.REQUESTOR,
) -> SweepResult:
    ratios = list(ratios)
    if not ratios or any(r <= 0 for r in ratios):
        raise InvalidArgumentError("ratios must all be > 0")
    seeds = list(seeds)
    if not seeds:
        raise InvalidArgumentError("at least one seed is required")
    points = _check_checkpoints(checkpoints)
    perspective = Perspective(perspective)

    rows = []
    for ratio in ratios:
        params = ratio_params(mu_b, ratio, total, sigmas, deltas)
        diffs = _diff_at_checkpoints(params, seeds, points, num_skills)[perspective]
        for j, checkpoint in enumerate(points):
            samples = diffs[:, j]
            rows.append(
                {
                    "ratio": float(ratio),
                    "checkpoint": checkpoint,
                    "mean_diff": float(samples.mean()),
                    "ci95": _ci_or_nan(samples),
                }
            )
        logger.info("Ratio %.3f done (mu_e=%.3f, mu_c=%.3f)", ratio, params.mu_e, params.mu_c)

    metadata = {
        "mu_b": mu_b,
        "mu_e_plus_mu_c": total,
        "checkpoints": points,
        "seeds": seeds,
        "sigma": list(sigmas),
        "delta": list(deltas),
        "perspective": perspective.value,
        "shared_task_streams": True,
    }
    return SweepResult(rows=pd.DataFrame(rows), metadata=metadata)
