"""
Shared pytest fixtures for shopdsl tests.

The toy shop has two machines and one two-step job: a steel bar is turned
into a shaft blank on the lathe, then milled into a finished shaft.
"""

import os
import sys
from pathlib import Path

import pytest

root_path = Path(__file__).parent.parent
sys.path.insert(0, str(root_path))

from plugins.module_utils.abstraction import NATURAL_LANGUAGE, ProcedureDoc
from plugins.module_utils.dsl_core import (
    CONTINUOUS,
    DISCRETE,
    DslDefinition,
    DualProgram,
    ExecContext,
    FlowGrammar,
    FlowRequirement,
    FlowUnitDef,
    FlowUnitInstance,
    Interface,
    MachineDef,
    OperationDef,
    OperationInstance,
    ParamSpec,
)
from plugins.module_utils.scenario_synth import load_bundled, synthesize_scenario, taillard_instance, write_scenario

GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden"

TURN_SENTENCE = (
    "Turn the Steel Bar (diameter 40) on the CNC Lathe for 20 minutes with spindle speed 1200, "
    "producing the Shaft Blank."
)
MILL_SENTENCE = (
    "Mill the Shaft Blank on the Vertical Mill for 30 minutes with feed rate 200, producing the Finished Shaft."
)


def make_toy_dsl(grammar: FlowGrammar | None = None) -> DslDefinition:
    turning = OperationDef(
        identifier="turning",
        name="Turning",
        interfaces=(
            Interface(
                (FlowRequirement.of("Steel Bar"),),
                (FlowRequirement.of("Shaft Blank"),),
                (ExecContext("cnc-lathe", 20, {"spindle_speed": ParamSpec(DISCRETE, values=(800, 1200))}),),
            ),
        ),
    )
    milling = OperationDef(
        identifier="milling",
        name="Milling",
        interfaces=(
            Interface(
                (FlowRequirement.of("Shaft Blank"),),
                (FlowRequirement.of("Finished Shaft"),),
                (ExecContext("vertical-mill", 30, {"feed_rate": ParamSpec(CONTINUOUS, interval=(100, 300))}),),
            ),
        ),
    )
    flows = {
        "Steel Bar": FlowUnitDef("Steel Bar", properties={"diameter": ParamSpec(CONTINUOUS, interval=(10, 50))}),
        "Shaft Blank": FlowUnitDef("Shaft Blank"),
        "Finished Shaft": FlowUnitDef("Finished Shaft"),
    }
    return DslDefinition(
        operation_defs={"milling": milling, "turning": turning},
        flow_unit_defs=flows,
        flow_grammar=grammar or FlowGrammar.base(),
        machine_catalog=(MachineDef("cnc-lathe", "CNC Lathe", 1), MachineDef("vertical-mill", "Vertical Mill", 0)),
    )


def make_toy_program(job_id: str = "J01") -> DualProgram:
    return DualProgram(
        job_id=job_id,
        steps=(
            OperationInstance(0, "turning", 0, 0, {"spindle_speed": 1200}),
            OperationInstance(1, "milling", 0, 0, {"feed_rate": 200}),
        ),
        flow_units=(
            FlowUnitInstance("u0", "Steel Bar", frozenset(), frozenset({0}), {"diameter": 40}, raw_material=True),
            FlowUnitInstance("u1", "Shaft Blank", frozenset({0}), frozenset({1})),
            FlowUnitInstance("u2", "Finished Shaft", frozenset({1}), frozenset(), final_product=True),
        ),
    )


@pytest.fixture
def toy_dsl() -> DslDefinition:
    return make_toy_dsl()


@pytest.fixture
def toy_program() -> DualProgram:
    return make_toy_program()


@pytest.fixture
def toy_doc() -> ProcedureDoc:
    return ProcedureDoc("J01", NATURAL_LANGUAGE, sentences=(TURN_SENTENCE, MILL_SENTENCE))


@pytest.fixture(scope="session")
def ft06():
    return load_bundled("ft06")


@pytest.fixture(scope="session")
def small_instance():
    return taillard_instance("ta-3x3", 3, 3, time_seed=840612802, machine_seed=398197754)


@pytest.fixture(scope="session")
def small_scenario(small_instance):
    return synthesize_scenario(small_instance, seed=0)


@pytest.fixture
def scenario_dir(tmp_path, small_scenario):
    root = tmp_path / "scenario"
    write_scenario(small_scenario, root)
    return root


@pytest.fixture
def golden():
    """Compare text with a frozen file under tests/fixtures/golden.

    A missing file is recorded from the current output and the test is
    skipped; SHOPDSL_REGEN_GOLDEN=1 re-records existing files.
    """

    def check(name: str, text: str) -> None:
        path = GOLDEN_DIR / name
        if not path.exists() or os.environ.get("SHOPDSL_REGEN_GOLDEN") == "1":
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            pytest.skip(f"recorded golden file {name}")
        assert text == path.read_text(encoding="utf-8")

    return check
