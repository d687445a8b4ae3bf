#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_constraints
short_description: Verify programs and generate scheduling constraints
description:
    - Walks the programs in execution order tracking defined and killed flow units.
    - Emits resource and precedence constraints, the verifier trace and the solver input.
    - Fails when a flow breaks or flow units are left over at the end of the walk.
version_added: "1.0.0"
options:
    programs:
        description: Program files, in corpus order
        required: true
        type: list
        elements: path
    dsl:
        description: DSL definition file
        required: true
        type: path
"""

EXAMPLES = r"""
- name: Generate constraints for a compiled scenario
  shopdsl constraints out/ft06/programs/*.prog.json --dsl scenarios/ft06/scenario.dsl.json --out out/ft06
"""

RETURN = r"""
resource:
    description: Number of resource constraints
    type: int
    returned: always
precedence:
    description: Number of precedence constraints
    type: int
    returned: always
"""

import typing as t

from plugins.module_utils.constraint_gen import to_solver_input, validate_solver_input, verify_and_generate
from plugins.module_utils.dsl_codec import read_dsl, read_program
from plugins.module_utils.shop_common import ShopModuleBase, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "programs": {"type": "list", "elements": "path", "required": True, "positional": True, "help": "program files"},
    "dsl": {"type": "path", "required": True, "help": "DSL definition"},
}


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    programs = [read_program(p) for p in module.require_paths("programs")]
    d = read_dsl(module.require_path("dsl"))
    constraints, trace = verify_and_generate(programs, d)
    si = to_solver_input(constraints, programs, d)
    report = validate_solver_input(si)
    out = module.out_dir()
    module.write_json(out / "constraints.json", constraints.to_doc())
    module.write_json(out / "trace.json", trace.to_doc())
    module.write_json(out / "solver_input.json", si.to_doc())
    if not report.ok:
        module.fail_json("solver input failed validation", **report.to_dict())
    return module.exit_json(resource=len(constraints.resource), precedence=len(constraints.precedence))


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl constraints", argument_spec, run, argv, "Generate scheduling constraints")


if __name__ == "__main__":
    raise SystemExit(main())
