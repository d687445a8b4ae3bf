#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_adapt
short_description: Induce a DSL from a procedure corpus
description:
    - Runs the operation, flow-unit and flow-syntax inducers over every document in a corpus directory.
    - Writes the induced DSL and an adaptation report with likelihood traces and convergence flags.
version_added: "1.0.0"
options:
    corpus:
        description: Directory of C(*.txt) and C(*.proc.json) procedures
        required: true
        type: path
    prior:
        description:
            - Prior knowledge document.
            - Defaults to C(prior.json) next to the corpus directory, then to the bundled vocabulary bank.
        required: false
        type: path
    alpha:
        description: DP concentration
        type: float
        default: 1.0
    beta:
        description: Dirichlet smoothing of categorical features
        type: float
        default: 0.5
    max_sweeps:
        description: Gibbs sweep cap
        type: int
        default: 500
    max_em_iters:
        description: EM iteration cap
        type: int
        default: 100
    tau_alias:
        description: Name-similarity threshold for alias merging
        type: float
        default: 0.8
    strict:
        description: Fail when any inducer stops without converging
        type: bool
        default: false
"""

EXAMPLES = r"""
- name: Adapt a DSL to a synthesized corpus
  shopdsl adapt scenarios/ft06/corpus --out adapted/ft06 --seed 3
"""

RETURN = r"""
operations:
    description: Number of operation definitions induced
    type: int
    returned: always
flow_units:
    description: Number of flow-unit definitions induced
    type: int
    returned: always
converged:
    description: Whether every inducer converged
    type: bool
    returned: always
"""

import typing as t
from pathlib import Path

from plugins.module_utils.adaptation import AdaptationConfig, PriorKnowledge, adapt_corpus
from plugins.module_utils.dsl_codec import serialize
from plugins.module_utils.scenario_synth import load_corpus
from plugins.module_utils.shop_common import (
    ShopModuleBase,
    ShopUsageError,
    read_json,
    run_module,
    shop_argument_spec,
)
from plugins.module_utils.vocabulary import load_vocabulary_bank

ARGUMENT_SPEC = {
    "corpus": {"type": "path", "required": True, "positional": True, "help": "corpus directory"},
    "prior": {"type": "path", "default": None, "help": "prior knowledge JSON"},
    "alpha": {"type": "float", "default": 1.0, "help": "DP concentration"},
    "beta": {"type": "float", "default": 0.5, "help": "categorical smoothing"},
    "max_sweeps": {"type": "int", "default": 500, "help": "Gibbs sweep cap"},
    "max_em_iters": {"type": "int", "default": 100, "help": "EM iteration cap"},
    "tau_alias": {"type": "float", "default": 0.8, "help": "alias similarity threshold"},
    "strict": {"type": "bool", "default": False, "help": "fail on non-convergence"},
}


def load_prior(params: dict[str, t.Any], corpus: Path) -> PriorKnowledge:
    if params.get("prior"):
        path = Path(params["prior"])
        if not path.is_file():
            raise ShopUsageError(f"prior: no such file: {path}", path=str(path))
        return PriorKnowledge.from_doc(read_json(path))
    sibling = corpus.parent / "prior.json"
    if sibling.is_file():
        return PriorKnowledge.from_doc(read_json(sibling))
    return PriorKnowledge.from_vocabulary_bank(load_vocabulary_bank())


def run(module: ShopModuleBase) -> dict[str, t.Any]:
    params = module.params
    corpus_dir = module.require_path("corpus")
    cfg = AdaptationConfig(
        alpha=params["alpha"],
        beta=params["beta"],
        max_sweeps=params["max_sweeps"],
        max_em_iters=params["max_em_iters"],
        tau_alias=params["tau_alias"],
        seed=params["seed"],
    )
    d, report = adapt_corpus(load_corpus(corpus_dir), load_prior(params, corpus_dir), cfg, strict=params["strict"])
    out = module.out_dir()
    module.write_text(out / "scenario.dsl.json", serialize(d))
    module.write_json(out / "adaptation_report.json", report.to_doc())
    return module.exit_json(
        operations=len(d.operation_defs),
        flow_units=len(d.flow_unit_defs),
        converged=report.converged,
    )


def main(argv: t.Sequence[str] | None = None) -> int:
    argument_spec = shop_argument_spec()
    argument_spec.update(ARGUMENT_SPEC)
    return run_module("shopdsl adapt", argument_spec, run, argv, "Induce a DSL from a procedure corpus")


if __name__ == "__main__":
    raise SystemExit(main())
