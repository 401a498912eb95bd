"""
Skill cost sampling and the per-scenario cost functions.

Sampling uses numpy's ``Generator(PCG64)`` bit generator and its ziggurat
Gaussian transform. One generator per profile, three draws in the fixed
order buy, exec, comm.
"""
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Set, Tuple, Union

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError
from .models import CostParams, CostProfile, Perspective, Scenario
from .utils import derive_seed

DEFAULT_SIGMAS = (10.0, 10.0, 10.0)
DEFAULT_DELTAS = (0.0, 1.0, 1.0)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def skill_rng(seed: int, skill_index: int) -> np.random.Generator:
    """Generator for the cost substream of skill ``skill_index``."""
    return make_rng(derive_seed(seed, skill_index))


def sample_cost_profile(params: CostParams, rng: np.random.Generator) -> CostProfile:
    buy = max(float(rng.normal(params.mu_b, params.sigma_b)), params.delta_b)
    exec_ = max(float(rng.normal(params.mu_e, params.sigma_e)), params.delta_e)
    comm = max(float(rng.normal(params.mu_c, params.sigma_c)), params.delta_c)
    return CostProfile(buy=buy, exec=exec_, comm=comm)


def build_parameter_grid(
    mu_values: Iterable[float],
    sigmas: Tuple[float, float, float] = DEFAULT_SIGMAS,
    deltas: Tuple[float, float, float] = DEFAULT_DELTAS,
    simplex_sum: Optional[float] = None,
) -> List[CostParams]:
    values = sorted(set(mu_values))
    if not values:
        raise InvalidArgumentError("mu_values must not be empty")
    if simplex_sum is not None and simplex_sum <= 0:
        raise InvalidArgumentError("simplex_sum must be positive")

    grid: List[CostParams] = []
    for mus in itertools.product(values, repeat=3):
        if simplex_sum is not None and not math.isclose(sum(mus), simplex_sum):
            continue
        grid.append(CostParams.from_triples(mus, sigmas, deltas))
    return grid


def task_cost(scenario: Scenario, profile: CostProfile, requestor_owns: bool) -> Tuple[float, float, bool]:
    """(requestor_cost, provider_cost, acquires) for one task under ``scenario``."""
    scenario = Scenario(scenario)
    if scenario is Scenario.BASELINE:
        return profile.comm, profile.comm + profile.exec, False
    if requestor_owns:
        return profile.exec, 0.0, False
    if scenario is Scenario.SKILLFLOW:
        return profile.comm + profile.exec, profile.comm, True
    return profile.comm + profile.exec + profile.buy, profile.comm, True


def _acquiring_pays_off(profile: CostProfile, k: int) -> bool:
    return k * profile.comm >= profile.comm + profile.buy + k * profile.exec


def breakeven_task_count(profile: CostProfile) -> float:
    """
    Smallest number of uses k at which buying is no more expensive than
    querying remotely every time: k*comm >= comm + buy + k*exec.

    Returns ``math.inf`` when comm <= exec (acquisition never pays off),
    except in the degenerate all-zero case where k = 1 already ties.
    """
    if _acquiring_pays_off(profile, 1):
        return 1
    if profile.comm <= profile.exec:
        return math.inf
    k = max(1, math.ceil((profile.comm + profile.buy) / (profile.comm - profile.exec)))
    # Settle rounding with the same float comparison a cumulative run makes.
    while k > 1 and _acquiring_pays_off(profile, k - 1):
        k -= 1
    while not _acquiring_pays_off(profile, k):
        k += 1
    return k


@dataclass(frozen=True)
class LedgerEntry:
    task: int
    skill: Union[int, str]
    requestor_cost: float
    provider_cost: float
    owned_after: int


@dataclass
class CostLedger:
    per_task: List[LedgerEntry] = field(default_factory=list)
    acquired: Set[Union[int, str]] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.per_task)

    def owns(self, skill: Union[int, str]) -> bool:
        return skill in self.acquired

    def append(self, skill: Union[int, str], requestor_cost: float, provider_cost: float, acquires: bool) -> LedgerEntry:
        if requestor_cost < 0 or provider_cost < 0:
            raise InvalidArgumentError("ledger costs must be non-negative")
        if acquires:
            self.acquired.add(skill)
        entry = LedgerEntry(
            task=len(self.per_task) + 1,
            skill=skill,
            requestor_cost=requestor_cost,
            provider_cost=provider_cost,
            owned_after=len(self.acquired),
        )
        self.per_task.append(entry)
        return entry

    def costs(self, perspective: Perspective) -> np.ndarray:
        requestor = np.fromiter((e.requestor_cost for e in self.per_task), dtype=float, count=len(self))
        if Perspective(perspective) is Perspective.REQUESTOR:
            return requestor
        provider = np.fromiter((e.provider_cost for e in self.per_task), dtype=float, count=len(self))
        return requestor + provider

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "task": [e.task for e in self.per_task],
                "requestor_cost": [e.requestor_cost for e in self.per_task],
                "provider_cost": [e.provider_cost for e in self.per_task],
                "owned_after": [e.owned_after for e in self.per_task],
            }
        )

    def write_csv(self, path: Path | str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def average_cost_curve(ledger: CostLedger, perspective: Perspective = Perspective.REQUESTOR) -> np.ndarray:
    """Average cost per task for every prefix 1..len(ledger)."""
    costs = ledger.costs(perspective)
    return np.cumsum(costs) / np.arange(1, len(costs) + 1)


def average_cost_per_task(
    ledger: CostLedger, up_to: int, perspective: Perspective = Perspective.REQUESTOR
) -> float:
    if not 1 <= up_to <= len(ledger):
        raise InvalidArgumentError(f"up_to must be in [1, {len(ledger)}], got {up_to}")
    costs = ledger.costs(perspective)[:up_to]
    return float(costs.sum() / up_to)
