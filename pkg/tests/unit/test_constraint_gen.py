#!/usr/bin/env python

import dataclasses
import random

import pytest
from conftest import make_toy_program

from plugins.module_utils.abstraction import ExtractedAction, RuleBasedExtractor, program_to_route_sheet
from plugins.module_utils.constraint_gen import (
    SINK,
    SOURCE,
    ConstraintSet,
    FlowBreak,
    NonEmptyMemory,
    SolverInput,
    StepRef,
    UnmappedMachine,
    execution_order,
    llm_shadow_check,
    to_solver_input,
    validate_solver_input,
    verify_and_generate,
)
from plugins.module_utils.dsl_core import DualProgram, FlowUnitInstance, OperationInstance


def supplied_job(job_id="J02"):
    """One milling step consuming the finished shaft of J01."""
    return DualProgram(
        job_id=job_id,
        steps=(OperationInstance(0, "milling", 0, 0, {"feed_rate": 150}),),
        flow_units=(
            FlowUnitInstance("u0", "Finished Shaft", frozenset(), frozenset({0}), raw_material=True, supplied_by="J01"),
            FlowUnitInstance("u1", "Finished Shaft", frozenset({0}), frozenset(), final_product=True),
        ),
    )


def random_program(rng: random.Random, job_id: str = "R") -> DualProgram:
    """Random linear-order program whose every unit is consumed after its producers."""
    n = rng.randint(1, 8)
    steps = tuple(OperationInstance(i, rng.choice(["turning", "milling"])) for i in range(n))
    units = []
    for k in range(rng.randint(1, 2 * n)):
        kind = rng.choice(["raw", "mid", "final"])
        if kind == "raw" or n == 1 and kind == "mid":
            consumers = frozenset(rng.sample(range(n), rng.randint(1, min(2, n))))
            units.append(FlowUnitInstance(f"u{k}", "Steel Bar", frozenset(), consumers, raw_material=True))
        elif kind == "mid":
            cut = rng.randint(1, n - 1)
            producers = frozenset(rng.sample(range(cut), rng.randint(1, min(2, cut))))
            consumers = frozenset(rng.sample(range(cut, n), rng.randint(1, min(2, n - cut))))
            units.append(FlowUnitInstance(f"u{k}", "Shaft Blank", producers, consumers))
        else:
            producers = frozenset(rng.sample(range(n), rng.randint(1, min(2, n))))
            units.append(FlowUnitInstance(f"u{k}", "Finished Shaft", producers, frozenset(), final_product=True))
    return DualProgram(job_id, steps, tuple(units))


class TestVerifyAndGenerate:
    def test_toy_constraints(self, toy_program, toy_dsl):
        cs, trace = verify_and_generate([toy_program], toy_dsl)

        assert cs.precedence == frozenset({(StepRef("J01", 0), StepRef("J01", 1))})
        assert cs.resource == frozenset({(StepRef("J01", 0), "cnc-lathe"), (StepRef("J01", 1), "vertical-mill")})
        assert trace.accepting

    def test_trace_shape(self, toy_program, toy_dsl):
        _, trace = verify_and_generate([toy_program], toy_dsl)

        assert [e.step for e in trace.entries] == [SOURCE, StepRef("J01", 0), StepRef("J01", 1), SINK]
        assert trace.entries[0].defined == ("J01/u0",)
        assert trace.entries[1].killed == ("J01/u0",)
        assert trace.entries[1].defined == ("J01/u1",)
        assert trace.entries[-1].killed == ("J01/u2",)

    def test_source_never_in_precedence(self, toy_program, toy_dsl):
        cs, _ = verify_and_generate([toy_program], toy_dsl)

        assert all(SOURCE not in pair and SINK not in pair for pair in cs.precedence)

    def test_empty_corpus(self, toy_dsl):
        cs, trace = verify_and_generate([], toy_dsl)

        assert cs == ConstraintSet()
        assert trace.accepting

    def test_consumed_before_produced(self, toy_dsl):
        p = DualProgram(
            "J01",
            steps=(OperationInstance(0, "turning"), OperationInstance(1, "milling")),
            flow_units=(FlowUnitInstance("u0", "Shaft Blank", frozenset({1}), frozenset({0})),),
        )

        with pytest.raises(FlowBreak) as exc:
            verify_and_generate([p], toy_dsl)

        assert exc.value.details["step"] == ["J01", 0]
        assert exc.value.details["unit"] == "J01/u0"

    def test_unconsumed_unit(self, toy_program, toy_dsl):
        units = toy_program.flow_units[:2] + (dataclasses.replace(toy_program.flow_units[2], final_product=False),)

        with pytest.raises(NonEmptyMemory) as exc:
            verify_and_generate([dataclasses.replace(toy_program, flow_units=units)], toy_dsl)

        assert exc.value.details["units"] == ["J01/u2"]

    def test_cross_job_flow(self, toy_program, toy_dsl):
        cs, trace = verify_and_generate([toy_program, supplied_job()], toy_dsl)

        assert (StepRef("J01", 1), StepRef("J02", 0)) in cs.precedence
        assert trace.accepting

    def test_missing_supplier(self, toy_dsl):
        with pytest.raises(FlowBreak, match="does not export"):
            verify_and_generate([supplied_job()], toy_dsl)

    @pytest.mark.parametrize("seed", range(1000))
    def test_precedence_matches_definer_killer_pairs(self, seed, toy_dsl):
        p = random_program(random.Random(seed))

        cs, _ = verify_and_generate([p], toy_dsl)

        expected = {
            (StepRef("R", a), StepRef("R", b)) for u in p.flow_units for a in u.producers for b in u.consumers
        }
        assert cs.precedence == expected
        assert {ref for ref, _ in cs.resource} == {StepRef("R", s.step_index) for s in p.steps}

    @pytest.mark.parametrize("seed", range(1000))
    def test_flow_balance(self, seed, toy_dsl):
        p = random_program(random.Random(seed))

        _, trace = verify_and_generate([p], toy_dsl)

        defined = {k for e in trace.entries for k in e.defined}
        killed = {k for e in trace.entries for k in e.killed}
        assert defined == killed == {f"R/{u.unit_id}" for u in p.flow_units}


def test_execution_order_interleaves_by_job_position(toy_program):
    order = execution_order([toy_program, make_toy_program("J02")])

    assert order == [StepRef("J01", 0), StepRef("J01", 1), StepRef("J02", 0), StepRef("J02", 1)]


def test_execution_order_follows_cross_job_flow(toy_program):
    order = execution_order([supplied_job(), toy_program])

    assert order.index(StepRef("J01", 1)) < order.index(StepRef("J02", 0))


class TestSolverInput:
    def test_toy(self, toy_program, toy_dsl):
        cs, _ = verify_and_generate([toy_program], toy_dsl)

        si = to_solver_input(cs, [toy_program], toy_dsl)

        assert si.jobs == (((1, 20), (0, 30)),)
        assert si.extra_precedence == ()
        assert si.job_ids == ("J01",)
        assert si.machine_map == {0: "vertical-mill", 1: "cnc-lathe"}
        assert si.n_machines == 2
        assert validate_solver_input(si).ok

    def test_cross_job_edge_is_extra(self, toy_program, toy_dsl):
        programs = [toy_program, supplied_job()]
        cs, _ = verify_and_generate(programs, toy_dsl)

        si = to_solver_input(cs, programs, toy_dsl)

        assert si.extra_precedence == (((0, 1), (1, 0)),)

    def test_doc_round_trip(self, toy_program, toy_dsl):
        cs, _ = verify_and_generate([toy_program], toy_dsl)
        si = to_solver_input(cs, [toy_program], toy_dsl)

        assert SolverInput.from_doc(si.to_doc()) == si
        assert ConstraintSet.from_doc(cs.to_doc()) == cs

    def test_unmapped_machine(self, toy_program, toy_dsl):
        d = dataclasses.replace(toy_dsl, machine_catalog=toy_dsl.machine_catalog[:1])
        cs, _ = verify_and_generate([toy_program], d)

        with pytest.raises(UnmappedMachine):
            to_solver_input(cs, [toy_program], d)

    def test_validate_rejects_bad_rows(self):
        si = SolverInput(jobs=(((0, 0), (-1, 5)),), extra_precedence=(((0, 0), (3, 0)),), job_ids=("J01",))

        messages = validate_solver_input(si).messages()

        assert "duration 0 is not a positive integer" in messages
        assert "bad machine index -1" in messages
        assert "edge references missing step [3, 0]" in messages


class TestShadowCheck:
    def test_agrees_with_verifier(self, toy_program, toy_dsl):
        _, trace = verify_and_generate([toy_program], toy_dsl)
        sheets = [program_to_route_sheet(toy_program, toy_dsl)]

        assert llm_shadow_check(trace, RuleBasedExtractor.for_dsl(toy_dsl), sheets) == []

    def test_reports_disagreement(self, toy_program, toy_dsl, mocker):
        _, trace = verify_and_generate([toy_program], toy_dsl)
        adapter = mocker.Mock()
        adapter.extract.return_value = [ExtractedAction(sentence_index=0, verb_text="turn")]

        found = llm_shadow_check(trace, adapter, [program_to_route_sheet(toy_program, toy_dsl)])

        assert [d.step for d in found] == [StepRef("J01", 0), StepRef("J01", 1)]
        assert found[0].expected_killed == ("Steel Bar",)
        assert found[0].predicted_killed == ()

    def test_disabled_without_adapter(self, toy_program, toy_dsl):
        _, trace = verify_and_generate([toy_program], toy_dsl)

        assert llm_shadow_check(trace, None, []) == []
