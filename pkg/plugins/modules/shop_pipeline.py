#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_pipeline
short_description: Run abstraction, constraint generation, solving and grounding end to end
description:
    - Compiles every procedure of a scenario corpus, generates constraints, solves and grounds the plan.
    - Writes every intermediate plus metrics against the scenario's gold artifacts.
    - With several scenarios, each gets its own directory and C(metrics.json) at the top aggregates them.
    - C(stage) scores one stage in isolation by feeding it the gold intermediates of the scenario.
version_added: "1.0.0"
options:
    scenarios:
        description: Scenario directories written by C(synth)
        required: true
        type: list
        elements: path
    dsl:
        description: DSL to compile with instead of each scenario's own, for example an adapted one
        type: path
    time_limit:
        description: Solver time limit per scenario in seconds
        type: float
        default: 60
    node_limit:
        description: Solver node cap
        type: int
    gantt:
        description: Write C(gantt.svg) for every plan
        type: bool
        default: true
    stage:
        description:
            - Part of the chain to run.
            - C(abstraction) compiles the corpus and generates constraints without solving.
            - C(constraints) generates constraints from the gold programs.
            - C(grounding) solves the gold solver input and grounds it with the gold programs.
        type: str
        choices: [end-to-end, abstraction, constraints, grounding]
        default: end-to-end
"""

EXAMPLES = r"""
- name: Run the pipeline on every bundled scenario
  shopdsl pipeline scenarios/* --out runs/all

- name: Score constraint generation alone on gold programs
  shopdsl pipeline scenarios/ft06 --stage constraints --out runs/constraints
"""

RETURN = r"""
scenarios:
    description: Per-scenario metric rows
    type: list
    returned: always
stage:
    description: Part of the chain that was run
    type: str
    returned: always
aggregate:
    description: Mean metrics and cross-scenario VMR
    type: dict
    returned: always
"""

import typing as t

from plugins.module_utils.dsl_codec import read_dsl
from plugins.module_utils.eval_metrics import MetricReport, write_metrics
from plugins.module_utils.jsp_solver import SolverConfig
from plugins.module_utils.pipeline import END_TO_END, STAGES, run_pipeline, write_pipeline_outputs
from plugins.module_utils.scenario_synth import read_scenario
from plugins.module_utils.shop_common import ShopModuleBase, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "scenarios": {"type": "list", "elements": "path", "required": True, "positional": True, "help": "scenario directories"},
    "dsl": {"type": "path", "default": None, "help": "DSL override"},
    "time_limit": {"type": "float", "default": 60.0, "help": "solver time limit in seconds"},
    "node_limit": {"type": "int", "default": None, "help": "solver node cap"},
    "gantt": {"type": "bool", "default": True, "help": "write gantt.svg"},
    "stage": {"type": "str", "default": END_TO_END, "choices": list(STAGES), "help": "part of the chain to run"},
}


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    roots = module.require_paths("scenarios")
    dsl = read_dsl(module.require_path("dsl")) if params.get("dsl") else None
    cfg = SolverConfig(time_limit_s=params["time_limit"], seed=params["seed"], node_limit=params.get("node_limit"))
    out = module.out_dir()
    report = MetricReport()
    failed = []
    for root in roots:
        files = read_scenario(root)
        result = run_pipeline(files, dsl=dsl, solver_cfg=cfg, stage=params["stage"])
        written = write_pipeline_outputs(result, out / files.scenario_id, gantt=params["gantt"])
        module.written += [str(p) for p in written]
        module.changed = True
        assert result.metrics is not None
        report.scenarios.append(result.metrics)
        if any(not r.input_valid or r.runtime_failed for r in result.run_log):
            failed.append(files.scenario_id)
    module.written += [str(p) for p in write_metrics(report, out)]
    if failed:
        module.fail_json("compile or runtime errors in scenarios", scenarios=failed)
    return module.exit_json(
        stage=params["stage"], scenarios=[s.flat() for s in report.scenarios], aggregate=report.aggregate()
    )


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl pipeline", argument_spec, run, argv, "Run the scheduling pipeline end to end")


if __name__ == "__main__":
    raise SystemExit(main())
