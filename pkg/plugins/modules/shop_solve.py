#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_solve
short_description: Solve a job-shop instance for minimum makespan
description:
    - Branch and bound over active schedules, seeded with a dispatching incumbent.
    - Returns the best schedule found; status is C(optimal), C(feasible) or C(timeout).
version_added: "1.0.0"
options:
    solver_input:
        description: Solver input file
        required: true
        type: path
    time_limit:
        description: Wall-clock limit in seconds
        type: float
        default: 60
    node_limit:
        description: Search node cap
        type: int
"""

EXAMPLES = r"""
- name: Solve with a ten second limit
  shopdsl solve out/ft06/solver_input.json --time-limit 10 --out out/ft06
"""

RETURN = r"""
makespan:
    description: Makespan of the returned schedule
    type: int
    returned: always
status:
    description: Solver status
    type: str
    returned: always
"""

import typing as t

from plugins.module_utils.constraint_gen import SolverInput, validate_solver_input
from plugins.module_utils.jsp_solver import SolverConfig, check_schedule, solve
from plugins.module_utils.shop_common import ShopModuleBase, read_json, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "solver_input": {"type": "path", "required": True, "positional": True, "help": "solver input JSON"},
    "time_limit": {"type": "float", "default": 60.0, "help": "time limit in seconds"},
    "node_limit": {"type": "int", "default": None, "help": "search node cap"},
}


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    si = SolverInput.from_doc(read_json(module.require_path("solver_input")))
    report = validate_solver_input(si)
    if not report.ok:
        module.fail_json("invalid solver input", **report.to_dict())
    cfg = SolverConfig(time_limit_s=params["time_limit"], seed=params["seed"], node_limit=params.get("node_limit"))
    schedule = solve(si, cfg)
    module.write_json(module.out_dir() / "schedule.json", schedule.to_doc())
    check = check_schedule(schedule, si)
    if not check.ok:
        module.fail_json("solver returned an invalid schedule", **check.to_dict())
    return module.exit_json(makespan=schedule.makespan, status=schedule.status)


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl solve", argument_spec, run, argv, "Solve a job-shop instance")


if __name__ == "__main__":
    raise SystemExit(main())
