"""Unit tests for simulation module."""
import json

import pytest

from src.errors import InvalidArgumentError
from src.models import CostParams, Perspective, Scenario
from src.simulation import (
    SimConfig,
    ratio_params,
    run_heatmap_sweep,
    run_ratio_sweep,
    run_simulation,
    run_trajectory_comparison,
    skill_profiles,
    task_stream,
)

FIG_PARAMS = CostParams(14, 2, 4)
DETERMINISTIC = CostParams.from_triples((14, 2, 4), (0, 0, 0), (0, 1, 1))


def _final(rows, scenario, perspective, iteration):
    match = rows[
        (rows["scenario"] == scenario.value)
        & (rows["perspective"] == perspective.value)
        & (rows["iteration"] == iteration)
    ]
    return float(match["mean"].iloc[0])


class TestSimConfig:
    def test_rejects_empty_runs(self):
        with pytest.raises(InvalidArgumentError):
            SimConfig(FIG_PARAMS, num_skills=0)
        with pytest.raises(InvalidArgumentError):
            SimConfig(FIG_PARAMS, num_tasks=0)

    def test_coerces_scenario(self):
        assert SimConfig(FIG_PARAMS, scenario="baseline").scenario is Scenario.BASELINE


class TestStreams:
    def test_task_stream_in_range(self):
        tasks = task_stream(0, 20, 400)
        assert len(tasks) == 400
        assert tasks.min() >= 0 and tasks.max() < 20

    def test_adding_skills_keeps_earlier_profiles(self):
        assert skill_profiles(FIG_PARAMS, 5, 30)[:20] == skill_profiles(FIG_PARAMS, 5, 20)

    def test_scenarios_share_task_stream(self):
        baseline = run_simulation(SimConfig(FIG_PARAMS, Scenario.BASELINE, num_tasks=50, seed=9))
        paid = run_simulation(SimConfig(FIG_PARAMS, Scenario.SKILLFLOW_PAID, num_tasks=50, seed=9))
        assert [e.skill for e in baseline.per_task] == [e.skill for e in paid.per_task]


class TestRunSimulation:
    def test_deterministic_csv(self, tmp_path):
        config = SimConfig(FIG_PARAMS, seed=3, num_tasks=100)
        run_simulation(config).write_csv(tmp_path / "a.csv")
        run_simulation(config).write_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_owned_count_grows(self):
        ledger = run_simulation(SimConfig(FIG_PARAMS, seed=1))
        owned = [e.owned_after for e in ledger.per_task]
        assert owned == sorted(owned)
        assert owned[-1] <= 20

    def test_baseline_never_acquires(self):
        ledger = run_simulation(SimConfig(FIG_PARAMS, Scenario.BASELINE, seed=1))
        assert ledger.per_task[-1].owned_after == 0

    def test_acquired_skills_cost_exec_only(self):
        config = SimConfig(DETERMINISTIC, Scenario.SKILLFLOW_PAID, num_skills=1, num_tasks=5)
        costs = [e.requestor_cost for e in run_simulation(config).per_task]
        assert costs == [20, 2, 2, 2, 2]


class TestTrajectoryComparison:
    def test_shape(self):
        result = run_trajectory_comparison(FIG_PARAMS, seeds=[0, 1], num_tasks=50)
        assert len(result) == 3 * 2 * 50
        assert list(result.rows.columns) == ["iteration", "scenario", "perspective", "mean", "ci95"]

    def test_closed_form_without_noise(self):
        result = run_trajectory_comparison(DETERMINISTIC, seeds=range(100))
        rows = result.rows
        assert _final(rows, Scenario.BASELINE, Perspective.REQUESTOR, 400) == pytest.approx(4.0, abs=1e-9)
        assert _final(rows, Scenario.SKILLFLOW_PAID, Perspective.REQUESTOR, 400) == pytest.approx(2.9, abs=0.01)

    def test_paid_scenario_starts_dearer(self):
        rows = run_trajectory_comparison(FIG_PARAMS, seeds=range(10)).rows
        baseline = _final(rows, Scenario.BASELINE, Perspective.REQUESTOR, 20)
        paid = _final(rows, Scenario.SKILLFLOW_PAID, Perspective.REQUESTOR, 20)
        assert paid > baseline

    def test_system_wide_saving(self):
        rows = run_trajectory_comparison(FIG_PARAMS, seeds=range(10)).rows
        baseline = _final(rows, Scenario.BASELINE, Perspective.SYSTEM, 400)
        paid = _final(rows, Scenario.SKILLFLOW_PAID, Perspective.SYSTEM, 400)
        assert 0.5 <= (baseline - paid) / baseline <= 0.8

    def test_single_seed_needs_no_ci(self):
        result = run_trajectory_comparison(FIG_PARAMS, seeds=[0], num_tasks=10, with_ci=False)
        assert result.rows["ci95"].isna().all()

    def test_ci_needs_two_seeds(self):
        with pytest.raises(InvalidArgumentError):
            run_trajectory_comparison(FIG_PARAMS, seeds=[0], num_tasks=10)

    def test_writes_metadata_sidecar(self, tmp_path):
        result = run_trajectory_comparison(FIG_PARAMS, seeds=[0, 1], num_tasks=10)
        path = result.write_csv(tmp_path / "trajectory.csv")
        meta = json.loads((tmp_path / "trajectory.csv.meta.json").read_text())
        assert meta["seeds"] == [0, 1]
        assert path.read_bytes().endswith(b"\n")


class TestRatioSweep:
    def test_split_keeps_ratio(self):
        params = ratio_params(4, 2.0)
        assert params.mu_c / params.mu_e == pytest.approx(2.0)
        assert params.mu_e + params.mu_c == pytest.approx(8.0)

    def test_rejects_non_positive_ratio(self):
        with pytest.raises(InvalidArgumentError):
            ratio_params(4, 0)

    def test_sign_change_near_equal_costs(self):
        result = run_ratio_sweep(
            mu_b=4, ratios=[0.8, 1.0, 1.25], checkpoints=[400], seeds=range(3), sigmas=(0, 0, 0)
        )
        diff = dict(zip(result.rows["ratio"], result.rows["mean_diff"]))
        assert diff[0.8] < 0 < diff[1.25]
        assert diff[1.0] == pytest.approx(-0.4, abs=1e-6)

    def test_breakeven_near_equal_costs_with_noise(self):
        result = run_ratio_sweep(mu_b=4, ratios=[0.5, 1.0, 2.0], checkpoints=[400], seeds=range(10))
        rows = result.rows.set_index("ratio")
        assert rows.loc[0.5, "mean_diff"] < 0 < rows.loc[2.0, "mean_diff"]
        assert abs(rows.loc[1.0, "mean_diff"]) <= rows.loc[1.0, "ci95"]

    def test_rows_per_ratio_and_checkpoint(self):
        result = run_ratio_sweep(ratios=[0.25, 0.5, 1, 2, 4], checkpoints=[20, 100], seeds=range(2))
        assert len(result) == 10
        assert list(result.rows.columns) == ["ratio", "checkpoint", "mean_diff", "ci95"]


class TestHeatmapSweep:
    def test_rejects_small_sum(self):
        with pytest.raises(InvalidArgumentError):
            run_heatmap_sweep(simplex_sum=2)

    def test_small_simplex(self):
        result = run_heatmap_sweep(simplex_sum=5, checkpoints=[10], seeds=range(2), num_skills=5)
        # positive triples summing to 5: C(4, 2)
        assert len(result) == 6
        assert set(result.rows["n_seeds"]) == {2}

    @pytest.fixture(scope="class")
    def sweep(self):
        return run_heatmap_sweep(simplex_sum=20, seeds=range(10)).rows

    def test_profitable_area_grows(self, sweep):
        rows = sweep
        assert len(rows) == 171 * 3
        positive = {
            c: int((rows[rows["checkpoint"] == c]["mean_diff_requestor"] > 0).sum()) for c in (20, 100, 400)
        }
        assert positive[400] >= positive[100] >= positive[20]

    def test_expensive_execution_never_pays(self, sweep):
        cell = sweep[(sweep["mu_b"] == 1) & (sweep["mu_e"] == 18) & (sweep["mu_c"] == 1) & (sweep["checkpoint"] == 400)]
        assert len(cell) == 1
        assert cell["mean_diff_requestor"].iloc[0] < 0


class TestScenarioOrdering:
    @pytest.mark.parametrize("seed", range(5))
    def test_free_acquisition_is_never_dearer(self, seed):
        free = run_simulation(SimConfig(FIG_PARAMS, Scenario.SKILLFLOW, seed=seed))
        paid = run_simulation(SimConfig(FIG_PARAMS, Scenario.SKILLFLOW_PAID, seed=seed))
        free_total = free.costs(Perspective.REQUESTOR).cumsum()
        paid_total = paid.costs(Perspective.REQUESTOR).cumsum()
        assert (free_total <= paid_total + 1e-9).all()

    def test_cheap_messages_favour_baseline(self):
        params = CostParams.from_triples((2, 5, 3), (0, 0, 0), (0, 1, 1))
        baseline = run_simulation(SimConfig(params, Scenario.BASELINE, seed=2))
        free = run_simulation(SimConfig(params, Scenario.SKILLFLOW, seed=2))
        assert (baseline.costs(Perspective.REQUESTOR).cumsum() <= free.costs(Perspective.REQUESTOR).cumsum()).all()
