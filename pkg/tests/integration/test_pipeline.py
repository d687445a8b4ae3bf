#!/usr/bin/env python
"""
End-to-end runs over synthesized scenarios.

Each scenario is written to disk and read back, so the runs exercise the
same files the command line consumes.
"""

import pytest

from plugins.module_utils.adaptation import AdaptationConfig, adapt_corpus
from plugins.module_utils.dsl_core import validate_dsl
from plugins.module_utils.eval_metrics import MetricReport
from plugins.module_utils.jsp_solver import SolverConfig
from plugins.module_utils.pipeline import (
    ABSTRACTION,
    CONSTRAINTS,
    GROUNDING,
    SKIPPED,
    compile_corpus,
    run_pipeline,
    write_pipeline_outputs,
)
from plugins.module_utils.scenario_synth import bundled_instances, load_bundled, read_scenario, synthesize_scenario, write_scenario
from plugins.module_utils.shop_common import ShopError

pytestmark = pytest.mark.integration


def test_corpus_compiles_to_gold_programs(scenario_dir):
    files = read_scenario(scenario_dir)

    programs, failed = compile_corpus(files.corpus, files.dsl)

    assert failed == []
    assert programs == files.programs


def test_pipeline_matches_gold(scenario_dir, tmp_path):
    result = run_pipeline(read_scenario(scenario_dir), solver_cfg=SolverConfig(time_limit_s=30.0))

    m = result.metrics
    assert m.route_kvp.f1 == 1.0
    assert m.constraint_acc == 1.0
    assert (m.compiler_er, m.runtime_er) == (0.0, 0.0)
    assert result.plan.makespan == result.gold_plan.makespan
    assert result.issues == []

    written = write_pipeline_outputs(result, tmp_path)
    assert {p.name for p in written} >= {"plan.json", "schedule.json", "gantt.svg", "metrics.csv"}


def test_unreadable_document_is_reported(scenario_dir):
    (scenario_dir / "corpus" / "J01.txt").write_text("Weld the frame on the robot.\n")

    result = run_pipeline(read_scenario(scenario_dir), solver_cfg=SolverConfig(time_limit_s=30.0))

    assert any(i.get("doc_id") == "J01" for i in result.issues)
    assert result.metrics.route_kvp.f1 < 1.0
    assert len(result.run_log) == 3


def test_adapted_dsl_is_valid(small_scenario):
    d, _ = adapt_corpus(small_scenario.corpus, small_scenario.prior, AdaptationConfig(max_sweeps=100, burn_in=10, window=10))

    assert validate_dsl(d).ok


class TestStages:
    @pytest.mark.parametrize("stage", [ABSTRACTION, CONSTRAINTS])
    def test_stops_before_solving(self, scenario_dir, stage):
        result = run_pipeline(read_scenario(scenario_dir), stage=stage)

        assert result.stage == stage
        assert (result.schedule, result.plan, result.gold_plan) == (None, None, None)
        assert result.metrics.constraint_acc == 1.0
        assert result.metrics.runtime_er == 0.0
        assert {r.solve_status for r in result.run_log} == {SKIPPED}

    def test_gold_programs_isolate_constraint_generation(self, scenario_dir):
        (scenario_dir / "corpus" / "J01.txt").write_text("Weld the frame on the robot.\n")
        files = read_scenario(scenario_dir)

        from_docs = run_pipeline(files, stage=ABSTRACTION)
        from_gold = run_pipeline(files, stage=CONSTRAINTS)

        assert from_docs.metrics.route_kvp.f1 < 1.0
        assert from_docs.metrics.constraint_acc < 1.0
        assert from_gold.programs == files.programs
        assert from_gold.metrics.route_kvp.f1 == 1.0
        assert from_gold.metrics.constraint_acc == 1.0

    def test_grounding_solves_gold_solver_input(self, scenario_dir, tmp_path):
        files = read_scenario(scenario_dir)

        result = run_pipeline(files, solver_cfg=SolverConfig(time_limit_s=30.0), stage=GROUNDING)

        assert result.solver_input == files.solver_input
        assert result.trace is None
        assert result.metrics.plan_kvp.f1 == 1.0
        assert result.issues == []
        written = {p.name for p in write_pipeline_outputs(result, tmp_path)}
        assert "trace.json" not in written
        assert {"plan.json", "schedule.json"} <= written

    def test_unknown_stage(self, scenario_dir):
        with pytest.raises(ShopError, match="unknown pipeline stage"):
            run_pipeline(read_scenario(scenario_dir), stage="solve")


@pytest.fixture(scope="module")
def bundled_runs(tmp_path_factory):
    runs = {}
    for name in bundled_instances():
        out = tmp_path_factory.mktemp(name)
        write_scenario(synthesize_scenario(load_bundled(name), seed=0), out)
        runs[name] = run_pipeline(read_scenario(out), solver_cfg=SolverConfig(time_limit_s=20.0, node_limit=200_000))
    return runs


@pytest.mark.slow
@pytest.mark.parametrize("name", bundled_instances())
def test_bundled_scenario(bundled_runs, name):
    result = bundled_runs[name]

    m = result.metrics
    assert m.constraint_acc == 1.0
    assert m.compiler_er == 0.0
    assert m.runtime_er == 0.0
    assert m.route_kvp.f1 >= 0.95
    assert m.plan_kvp.f1 >= 0.95
    assert result.schedule is not None


@pytest.mark.slow
def test_bundled_scores_are_stable(bundled_runs):
    agg = MetricReport([r.metrics for r in bundled_runs.values()]).aggregate()

    assert len(bundled_runs) == 10
    assert agg["route_emkvp_f1_vmr"] <= 0.05
    assert agg["plan_emkvp_f1_vmr"] <= 0.05
