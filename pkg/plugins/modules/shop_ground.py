#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_ground
short_description: Ground a schedule into a production plan
description:
    - Joins schedule entries with the operation instances they refer to.
    - Checks entry durations and process locks and optionally renders a Gantt chart.
version_added: "1.0.0"
options:
    schedule:
        description: Schedule file
        required: true
        type: path
    programs:
        description: Program files
        required: true
        type: list
        elements: path
    dsl:
        description: DSL definition file
        required: true
        type: path
    mapping:
        description:
            - Solver index to machine mapping, as a solver input file or a list of C(solver_index)/C(machine_id) records.
            - Defaults to the DSL machine catalog.
        type: path
    plan_id:
        description: Identifier stamped on the plan
        type: str
        default: plan
    gantt:
        description: Also write C(gantt.svg)
        type: bool
        default: false
"""

EXAMPLES = r"""
- name: Ground and draw a schedule
  shopdsl ground out/ft06/schedule.json --programs out/ft06/programs/*.json --dsl scenarios/ft06/scenario.dsl.json --gantt
"""

RETURN = r"""
entries:
    description: Number of plan entries
    type: int
    returned: always
makespan:
    description: Plan makespan
    type: int
    returned: always
"""

import typing as t
from pathlib import Path

from plugins.module_utils.dsl_codec import read_dsl, read_program
from plugins.module_utils.grounding import check_plan_consistency, check_process_locks, emit_gantt, ground
from plugins.module_utils.jsp_solver import Schedule
from plugins.module_utils.shop_common import ShopModuleBase, read_json, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "schedule": {"type": "path", "required": True, "positional": True, "help": "schedule JSON"},
    "programs": {"type": "list", "elements": "path", "required": True, "help": "program files"},
    "dsl": {"type": "path", "required": True, "help": "DSL definition"},
    "mapping": {"type": "path", "default": None, "help": "solver index to machine mapping"},
    "plan_id": {"type": "str", "default": "plan", "help": "plan identifier"},
    "gantt": {"type": "bool", "default": False, "help": "write gantt.svg"},
}


def read_mapping(path: Path) -> dict[int, str]:
    doc = read_json(path)
    records = doc.get("machine_map", []) if isinstance(doc, dict) else doc
    return {int(r["solver_index"]): r["machine_id"] for r in records}


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    schedule = Schedule.from_doc(read_json(module.require_path("schedule")))
    programs = [read_program(p) for p in module.require_paths("programs")]
    d = read_dsl(module.require_path("dsl"))
    mapping = read_mapping(module.require_path("mapping")) if params.get("mapping") else None
    plan = ground(schedule, programs, d, mapping=mapping, plan_id=params["plan_id"])
    out = module.out_dir()
    module.write_json(out / "plan.json", plan.to_doc())
    if params["gantt"]:
        module.written.append(str(emit_gantt(plan, out / "gantt.svg")))
    violations = check_plan_consistency(plan, programs, d).violations + check_process_locks(plan, programs).violations
    if violations:
        module.fail_json("plan violates its programs", violations=[v.to_dict() for v in violations])
    return module.exit_json(entries=len(plan.entries), makespan=plan.makespan)


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl ground", argument_spec, run, argv, "Ground a schedule into a production plan")


if __name__ == "__main__":
    raise SystemExit(main())
