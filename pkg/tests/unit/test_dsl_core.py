#!/usr/bin/env python

import dataclasses

from conftest import make_toy_dsl, make_toy_program

from plugins.module_utils.dsl_core import (
    CONTINUOUS,
    DISCRETE,
    MIXED,
    DualProgram,
    ExecContext,
    FlowGrammar,
    FlowRequirement,
    FlowUnitDef,
    FlowUnitInstance,
    Interface,
    OperationInstance,
    ParamSpec,
    program_has_cycle,
    surface_name,
    validate_dsl,
    validate_program,
)


class TestParamSpec:
    def test_contains_discrete(self):
        spec = ParamSpec(DISCRETE, values=(200, 100))

        assert spec.values == (100, 200)
        assert spec.contains(100)
        assert spec.contains(100.0)
        assert not spec.contains(150)

    def test_contains_interval(self):
        spec = ParamSpec(CONTINUOUS, interval=(1.5, 3))

        assert spec.contains(1.5)
        assert spec.contains(3)
        assert not spec.contains(3.01)
        assert not spec.contains("3")

    def test_union_kinds(self):
        a = ParamSpec(DISCRETE, values=(1, 2))
        b = ParamSpec(CONTINUOUS, interval=(5, 9))

        merged = a.union(b)

        assert merged.kind == MIXED
        assert merged.values == (1, 2)
        assert merged.interval == (5, 9)
        assert a.union(a) == a

    def test_problems(self):
        assert ParamSpec(CONTINUOUS, interval=(3, 1)).problems() == ["interval min 3 exceeds max 1"]
        assert ParamSpec(DISCRETE).problems() == ["discrete-set param has no values"]
        assert ParamSpec(MIXED, values=(1,), interval=(0, 2)).problems() == []

    def test_default(self):
        assert ParamSpec(DISCRETE, values=("b", "a")).default() == "a"
        assert ParamSpec(CONTINUOUS, interval=(4, 8)).default() == 4


def test_interface_equality_ignores_slot_order():
    a, b = FlowRequirement.of("A"), FlowRequirement.of("B")
    ctx = ExecContext("m", 5)

    assert Interface((a, b), (), (ctx,)) == Interface((b, a), (), (ctx,))


def test_surface_name():
    assert surface_name("Aluminum Alloy [volume]") == "Aluminum Alloy"
    assert surface_name("Shaft Blank") == "Shaft Blank"


class TestFlowGrammar:
    def test_base_is_linear(self):
        g = FlowGrammar.base()

        assert g.admits(1, 1)
        assert not g.admits(2, 1)
        assert g.problems() == []

    def test_bounded(self):
        g = FlowGrammar.bounded(2, 3)

        assert g.admits(2, 3)
        assert not g.admits(3, 1)
        assert "PredS2 ::= <pred> <pred> <prop>" in g.productions
        assert g.problems() == []

    def test_underivable_production(self):
        g = dataclasses.replace(FlowGrammar.base(), productions=FlowGrammar.base().productions + ("X ::= <pred>",))

        assert g.problems() == ["production not derivable from the base grammar: X ::= <pred>"]


class TestValidateDsl:
    def test_toy_dsl_is_valid(self, toy_dsl):
        assert validate_dsl(toy_dsl).ok

    def test_unknown_machine_and_bad_duration(self, toy_dsl):
        op = toy_dsl.operation_defs["milling"]
        iface = dataclasses.replace(op.interfaces[0], exec_contexts=(ExecContext("laser", 0),))
        d = dataclasses.replace(
            toy_dsl,
            operation_defs={**toy_dsl.operation_defs, "milling": dataclasses.replace(op, interfaces=(iface,))},
        )

        messages = validate_dsl(d).messages()

        assert "unknown machine laser" in messages
        assert "duration 0 is not a positive integer" in messages

    def test_unknown_flow_in_slot(self, toy_dsl):
        op = toy_dsl.operation_defs["turning"]
        iface = dataclasses.replace(op.interfaces[0], preconditions=(FlowRequirement.of("Copper Rod"),))
        d = dataclasses.replace(
            toy_dsl,
            operation_defs={**toy_dsl.operation_defs, "turning": dataclasses.replace(op, interfaces=(iface,))},
        )

        assert "unknown flow unit Copper Rod" in validate_dsl(d).messages()

    def test_shared_alias(self, toy_dsl):
        flows = dict(toy_dsl.flow_unit_defs)
        flows["Shaft Blank"] = FlowUnitDef("Shaft Blank", aliases=frozenset({"Blank"}))
        flows["Finished Shaft"] = FlowUnitDef("Finished Shaft", aliases=frozenset({"Blank"}))

        report = validate_dsl(dataclasses.replace(toy_dsl, flow_unit_defs=flows))

        assert any("alias Blank shared" in m for m in report.messages())

    def test_interface_without_context(self, toy_dsl):
        op = toy_dsl.operation_defs["turning"]
        iface = dataclasses.replace(op.interfaces[0], exec_contexts=())
        d = dataclasses.replace(
            toy_dsl,
            operation_defs={**toy_dsl.operation_defs, "turning": dataclasses.replace(op, interfaces=(iface,))},
        )

        assert "interface has no execution context" in validate_dsl(d).messages()


class TestValidateProgram:
    def test_toy_program_is_valid(self, toy_program, toy_dsl):
        assert validate_program(toy_program, toy_dsl).ok

    def test_empty_program_is_valid(self, toy_dsl):
        assert validate_program(DualProgram("J00"), toy_dsl).ok

    def test_param_out_of_domain(self, toy_program, toy_dsl):
        steps = (dataclasses.replace(toy_program.steps[0], bound_params={"spindle_speed": 999}), toy_program.steps[1])
        p = dataclasses.replace(toy_program, steps=steps)

        assert "value 999 outside domain of spindle_speed" in validate_program(p, toy_dsl).messages()

    def test_dangling_producer(self, toy_program, toy_dsl):
        units = toy_program.flow_units[:2] + (
            dataclasses.replace(toy_program.flow_units[2], final_product=False),
        )
        p = dataclasses.replace(toy_program, flow_units=units)

        assert "dangling producer: unit u2 has no consumer" in validate_program(p, toy_dsl).messages()

    def test_dangling_consumer(self, toy_program, toy_dsl):
        units = (dataclasses.replace(toy_program.flow_units[0], raw_material=False),) + toy_program.flow_units[1:]
        p = dataclasses.replace(toy_program, flow_units=units)

        assert "dangling consumer: unit u0 has no producer" in validate_program(p, toy_dsl).messages()

    def test_fan_out_exceeds_grammar(self, toy_program, toy_dsl):
        units = (
            dataclasses.replace(toy_program.flow_units[0], consumers=frozenset({0, 1})),
        ) + toy_program.flow_units[1:]
        p = dataclasses.replace(toy_program, flow_units=units)

        messages = validate_program(p, toy_dsl).messages()

        assert any(m.startswith("fan 1->2 of u0 exceeds grammar") for m in messages)

    def test_bounded_grammar_admits_fan_out(self, toy_program):
        d = make_toy_dsl(FlowGrammar.bounded(1, 2))
        units = (
            dataclasses.replace(toy_program.flow_units[0], consumers=frozenset({0, 1})),
        ) + toy_program.flow_units[1:]
        p = dataclasses.replace(toy_program, flow_units=units)

        assert not any(m.startswith("fan") for m in validate_program(p, d).messages())

    def test_cycle_detected(self):
        p = DualProgram(
            "J01",
            steps=(OperationInstance(0, "turning"), OperationInstance(1, "milling")),
            flow_units=(FlowUnitInstance("u0", "Shaft Blank", frozenset({1}), frozenset({0})),),
        )

        assert program_has_cycle(p)
        assert not program_has_cycle(make_toy_program())

    def test_unknown_operation(self, toy_dsl):
        p = DualProgram("J01", steps=(OperationInstance(0, "welding"),))

        assert "unknown operation welding" in validate_program(p, toy_dsl).messages()
