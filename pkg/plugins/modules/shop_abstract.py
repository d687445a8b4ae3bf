#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_abstract
short_description: Compile procedures into dual programs
description:
    - Extracts actions from natural-language or semi-structured procedures and compiles them under a DSL.
    - Writes one program and one route sheet per procedure.
version_added: "1.0.0"
options:
    docs:
        description: Procedure files (C(*.txt) or C(*.proc.json))
        required: true
        type: list
        elements: path
    dsl:
        description: DSL definition file
        required: true
        type: path
    beam_width:
        description: Interpretations kept per step
        type: int
        default: 4
    tau_match:
        description: Minimum combined score for a candidate operation
        type: float
        default: 0.6
"""

EXAMPLES = r"""
- name: Compile one procedure
  shopdsl abstract scenarios/ft06/corpus/J01.txt --dsl scenarios/ft06/scenario.dsl.json --out out/ft06
"""

RETURN = r"""
programs:
    description: Job ids compiled
    type: list
    returned: always
steps:
    description: Total number of steps across the compiled programs
    type: int
    returned: always
"""

import typing as t

from plugins.module_utils.abstraction import (
    AbstractionConfig,
    load_procedure,
    program_to_route_sheet,
    synthesize_program,
)
from plugins.module_utils.dsl_codec import read_dsl, serialize
from plugins.module_utils.shop_common import ShopModuleBase, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "docs": {"type": "list", "elements": "path", "required": True, "positional": True, "help": "procedure files"},
    "dsl": {"type": "path", "required": True, "help": "DSL definition"},
    "beam_width": {"type": "int", "default": 4, "help": "beam width"},
    "tau_match": {"type": "float", "default": 0.6, "help": "match threshold"},
}


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    doc_paths = module.require_paths("docs")
    d = read_dsl(module.require_path("dsl"))
    cfg = AbstractionConfig(beam_width=params["beam_width"], tau_match=params["tau_match"])
    out = module.out_dir()
    jobs, steps = [], 0
    for path in doc_paths:
        program = synthesize_program(load_procedure(path), d, cfg=cfg)
        module.write_text(out / "programs" / f"{program.job_id}.prog.json", serialize(program))
        module.write_json(out / "route_sheets" / f"{program.job_id}.sheet.json", program_to_route_sheet(program, d))
        jobs.append(program.job_id)
        steps += len(program.steps)
    return module.exit_json(programs=jobs, steps=steps)


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl abstract", argument_spec, run, argv, "Compile procedures into dual programs")


if __name__ == "__main__":
    raise SystemExit(main())
