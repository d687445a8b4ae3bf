#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_synth
short_description: Synthesize a scheduling scenario from a JSP benchmark
description:
    - Builds a scenario DSL, a procedure corpus and gold artifacts for a benchmark instance.
    - Accepts a benchmark file, the name of a bundled instance, or C(all).
version_added: "1.0.0"
options:
    instance:
        description: Path to a C(.jsp) file, a bundled instance name, or C(all)
        required: true
        type: str
    extra_edges:
        description: Number of random cross-job dependency edges (default one per job)
        required: false
        type: int
"""

EXAMPLES = r"""
- name: Synthesize the FT06 scenario
  shopdsl synth ft06 --out scenarios/ft06

- name: Synthesize every bundled scenario
  shopdsl synth all --out scenarios --seed 0
"""

RETURN = r"""
scenarios:
    description: Scenario ids written, each under its own directory when instance is all
    type: list
    returned: always
written:
    description: Files written
    type: list
    returned: always
"""

import typing as t
from pathlib import Path

from plugins.module_utils.scenario_synth import (
    bundled_instances,
    load_benchmark,
    load_bundled,
    synthesize_scenario,
    write_scenario,
)
from plugins.module_utils.shop_common import ShopModuleBase, ShopUsageError, run_module, shop_argument_spec

ARGUMENT_SPEC = {
    "instance": {"type": "str", "required": True, "positional": True, "help": "benchmark file, bundled name or 'all'"},
    "extra_edges": {"type": "int", "default": None, "help": "cross-job dependency edges to sample"},
}


def resolve_instances(spec: str) -> list[t.Any]:
    if spec == "all":
        return [load_bundled(name) for name in bundled_instances()]
    if Path(spec).is_file():
        return [load_benchmark(spec)]
    if spec in bundled_instances():
        return [load_bundled(spec)]
    raise ShopUsageError(f"unknown instance {spec!r}", instance=spec, bundled=bundled_instances())


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    instances = resolve_instances(params["instance"])
    out = module.out_dir()
    ids = []
    for inst in instances:
        scn = synthesize_scenario(inst, seed=params["seed"], extra_edges=params.get("extra_edges"))
        root = out / scn.scenario_id if len(instances) > 1 else out
        module.written += [str(p) for p in write_scenario(scn, root)]
        module.changed = True
        ids.append(scn.scenario_id)
    return module.exit_json(scenarios=ids)


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl synth", argument_spec, run, argv, "Synthesize scheduling scenarios")


if __name__ == "__main__":
    raise SystemExit(main())
