#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_eval
short_description: Score pipeline outputs against a gold scenario
description:
    - Computes BLEU and EM-KVP for route sheets and the plan, constraint IoU and error rates.
    - The gold plan is derived by solving and grounding the gold solver input.
version_added: "1.0.0"
options:
    pred:
        description: Directory written by C(pipeline) for one scenario
        required: true
        type: path
    gold:
        description: Scenario directory written by C(synth)
        required: true
        type: path
    time_limit:
        description: Solver time limit for deriving the gold plan
        type: float
        default: 60
    stage:
        description:
            - Stage the run was narrowed to with C(pipeline --stage).
            - For C(abstraction) and C(constraints) no plan is expected and none is scored.
        type: str
        choices: [end-to-end, abstraction, constraints, grounding]
        default: end-to-end
"""

EXAMPLES = r"""
- name: Score a pipeline run
  shopdsl eval runs/all/ft06 scenarios/ft06 --out scores/ft06
"""

RETURN = r"""
metrics:
    description: Metric row for the scenario
    type: dict
    returned: always
"""

import typing as t
from pathlib import Path

from plugins.module_utils.constraint_gen import ConstraintSet, SolverInput
from plugins.module_utils.eval_metrics import MetricReport, RunRecord, score_scenario, write_metrics
from plugins.module_utils.jsp_solver import Schedule, SolverConfig
from plugins.module_utils.pipeline import ABSTRACTION, CONSTRAINTS, END_TO_END, STAGES, derive_gold_plan
from plugins.module_utils.scenario_synth import read_scenario
from plugins.module_utils.shop_common import ShopModuleBase, read_json, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "pred": {"type": "path", "required": True, "positional": True, "help": "pipeline output directory"},
    "gold": {"type": "path", "required": True, "positional": True, "help": "scenario directory"},
    "time_limit": {"type": "float", "default": 60.0, "help": "solver time limit in seconds"},
    "stage": {"type": "str", "default": END_TO_END, "choices": list(STAGES), "help": "stage the run was narrowed to"},
}


def _optional(path: Path) -> t.Any:
    return read_json(path) if path.is_file() else None


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    pred = module.require_path("pred")
    files = read_scenario(module.require_path("gold"))
    sheets = [read_json(p) for p in sorted((pred / "route_sheets").glob("*.sheet.json"))]
    plan_doc = _optional(pred / "plan.json")
    constraints_doc = _optional(pred / "constraints.json")
    si_doc = _optional(pred / "solver_input.json")
    schedule_doc = _optional(pred / "schedule.json")
    run_log = [RunRecord(**r) for r in _optional(pred / "run_log.json") or []]

    # same solver input: reuse the predicted schedule so tie-broken optima line up
    reuse = None
    if si_doc is not None and schedule_doc is not None and SolverInput.from_doc(si_doc) == files.solver_input:
        reuse = Schedule.from_doc(schedule_doc)
    gold_plan = None
    if params["stage"] not in (ABSTRACTION, CONSTRAINTS):
        cfg = SolverConfig(time_limit_s=params["time_limit"], seed=params["seed"])
        gold_plan = derive_gold_plan(files, cfg, reuse).to_doc()

    metrics = score_scenario(
        files.scenario_id,
        sheets,
        files.route_sheets,
        plan_doc,
        gold_plan,
        ConstraintSet.from_doc(constraints_doc) if constraints_doc else ConstraintSet(),
        files.constraints,
        run_log,
    )
    module.written += [str(p) for p in write_metrics(MetricReport([metrics]), module.out_dir())]
    module.changed = True
    return module.exit_json(metrics=metrics.flat())


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl eval", argument_spec, run, argv, "Score pipeline outputs against gold")


if __name__ == "__main__":
    raise SystemExit(main())
