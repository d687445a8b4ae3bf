"""
Canonical JSON text for DslDefinition and DualProgram values.

Documents carry ``"schema_version": 1`` and a ``kind`` of ``dsl`` or
``program``. Serialization is byte-deterministic and floats keep their
exact repr, so serialize then parse returns an equal value.
"""

import json
import typing as t
from pathlib import Path

from .dsl_core import (
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
from .shop_common import SCHEMA_VERSION, ShopError, dump_canonical, write_text_atomic


class ParseError(ShopError):
    """Malformed document; line/column point at the offending text when known."""

    code = "parse_error"

    def __init__(self, msg: str, line: int | None = None, column: int | None = None, path: str = "") -> None:
        super().__init__(msg, line=line, column=column, path=path)
        self.line = line
        self.column = column
        self.path = path

    def __str__(self) -> str:
        where = f"line {self.line}, column {self.column}" if self.line is not None else self.path
        return f"{self.msg} ({where})" if where else self.msg


def param_to_doc(spec: ParamSpec) -> dict[str, t.Any]:
    return {
        "kind": spec.kind,
        "values": list(spec.values),
        "interval": list(spec.interval) if spec.interval is not None else None,
        "unit": spec.unit,
    }


def param_from_doc(doc: dict[str, t.Any]) -> ParamSpec:
    interval = doc.get("interval")
    return ParamSpec(
        kind=doc["kind"],
        values=tuple(doc.get("values", ())),
        interval=(interval[0], interval[1]) if interval is not None else None,
        unit=doc.get("unit", ""),
    )


def _params_to_doc(params: t.Mapping[str, ParamSpec]) -> dict[str, t.Any]:
    return {name: param_to_doc(spec) for name, spec in params.items()}


def _params_from_doc(doc: dict[str, t.Any]) -> dict[str, ParamSpec]:
    return {name: param_from_doc(spec) for name, spec in doc.items()}


def dsl_to_doc(d: DslDefinition) -> dict[str, t.Any]:
    """Plain-JSON form of a DslDefinition."""
    operations = []
    for ident in sorted(d.operation_defs):
        op = d.operation_defs[ident]
        operations.append(
            {
                "identifier": op.identifier,
                "name": op.name,
                "aliases": sorted(op.aliases),
                "interfaces": [
                    {
                        "preconditions": [sorted(s.accepts) for s in iface.preconditions],
                        "postconditions": [sorted(s.accepts) for s in iface.postconditions],
                        "exec_contexts": [
                            {
                                "machine": ctx.machine,
                                "duration": ctx.duration,
                                "params": _params_to_doc(ctx.params),
                            }
                            for ctx in iface.exec_contexts
                        ],
                    }
                    for iface in op.interfaces
                ],
            }
        )
    flow_units = [
        {
            "identifier": fdef.identifier,
            "aliases": sorted(fdef.aliases),
            "properties": _params_to_doc(fdef.properties),
        }
        for _, fdef in sorted(d.flow_unit_defs.items())
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "dsl",
        "operations": operations,
        "flow_units": flow_units,
        "flow_grammar": {
            "productions": list(d.flow_grammar.productions),
            "max_pred": d.flow_grammar.max_pred,
            "max_succ": d.flow_grammar.max_succ,
        },
        "machines": [
            {"machine_id": m.machine_id, "name": m.name, "solver_index": m.solver_index}
            for m in sorted(d.machine_catalog, key=lambda m: (m.solver_index, m.machine_id))
        ],
    }


def dsl_from_doc(doc: dict[str, t.Any]) -> DslDefinition:
    _check_header(doc, "dsl")
    try:
        ops = {}
        for op_doc in doc.get("operations", []):
            interfaces = tuple(
                Interface(
                    preconditions=tuple(FlowRequirement(frozenset(s)) for s in i_doc.get("preconditions", [])),
                    postconditions=tuple(FlowRequirement(frozenset(s)) for s in i_doc.get("postconditions", [])),
                    exec_contexts=tuple(
                        ExecContext(
                            machine=c["machine"],
                            duration=c["duration"],
                            params=_params_from_doc(c.get("params", {})),
                        )
                        for c in i_doc.get("exec_contexts", [])
                    ),
                )
                for i_doc in op_doc.get("interfaces", [])
            )
            ops[op_doc["identifier"]] = OperationDef(
                identifier=op_doc["identifier"],
                interfaces=interfaces,
                name=op_doc.get("name", ""),
                aliases=frozenset(op_doc.get("aliases", [])),
            )
        flows = {
            f_doc["identifier"]: FlowUnitDef(
                identifier=f_doc["identifier"],
                properties=_params_from_doc(f_doc.get("properties", {})),
                aliases=frozenset(f_doc.get("aliases", [])),
            )
            for f_doc in doc.get("flow_units", [])
        }
        g_doc = doc.get("flow_grammar")
        grammar = (
            FlowGrammar(
                productions=tuple(g_doc["productions"]),
                max_pred=g_doc["max_pred"],
                max_succ=g_doc["max_succ"],
            )
            if g_doc is not None
            else FlowGrammar.base()
        )
        machines = tuple(
            MachineDef(machine_id=m["machine_id"], name=m["name"], solver_index=m["solver_index"])
            for m in doc.get("machines", [])
        )
    except (KeyError, TypeError, IndexError) as e:
        raise ParseError(f"malformed dsl document: {e!r}", path="dsl") from e
    return DslDefinition(operation_defs=ops, flow_unit_defs=flows, flow_grammar=grammar, machine_catalog=machines)


def program_to_doc(p: DualProgram) -> dict[str, t.Any]:
    """Plain-JSON form of a DualProgram."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "program",
        "job_id": p.job_id,
        "steps": [
            {
                "step_index": s.step_index,
                "op_id": s.op_id,
                "interface_index": s.interface_index,
                "context_index": s.context_index,
                "bound_params": dict(s.bound_params),
            }
            for s in p.steps
        ],
        "flow_units": [
            {
                "unit_id": u.unit_id,
                "flow_def": u.flow_def,
                "producers": sorted(u.producers),
                "consumers": sorted(u.consumers),
                "prop_values": dict(u.prop_values),
                "raw_material": u.raw_material,
                "final_product": u.final_product,
                "supplied_by": u.supplied_by,
            }
            for u in p.flow_units
        ],
    }


def program_from_doc(doc: dict[str, t.Any]) -> DualProgram:
    _check_header(doc, "program")
    try:
        steps = tuple(
            OperationInstance(
                step_index=s["step_index"],
                op_id=s["op_id"],
                interface_index=s.get("interface_index", 0),
                context_index=s.get("context_index", 0),
                bound_params=dict(s.get("bound_params", {})),
            )
            for s in doc.get("steps", [])
        )
        units = tuple(
            FlowUnitInstance(
                unit_id=u["unit_id"],
                flow_def=u["flow_def"],
                producers=frozenset(u.get("producers", [])),
                consumers=frozenset(u.get("consumers", [])),
                prop_values=dict(u.get("prop_values", {})),
                raw_material=bool(u.get("raw_material", False)),
                final_product=bool(u.get("final_product", False)),
                supplied_by=u.get("supplied_by"),
            )
            for u in doc.get("flow_units", [])
        )
        return DualProgram(job_id=doc["job_id"], steps=steps, flow_units=units)
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed program document: {e!r}", path="program") from e


def _check_header(doc: t.Any, kind: str) -> None:
    if not isinstance(doc, dict):
        raise ParseError(f"expected a JSON object for a {kind} document", path="/")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {doc.get('schema_version')!r}", path="schema_version")
    if doc.get("kind", kind) != kind:
        raise ParseError(f"expected kind {kind}, got {doc.get('kind')!r}", path="kind")


def serialize(value: DslDefinition | DualProgram) -> str:
    """Canonical text of a DSL or program."""
    if isinstance(value, DslDefinition):
        return dump_canonical(dsl_to_doc(value), places=None)
    return dump_canonical(program_to_doc(value), places=None)


def parse_document(text: str) -> t.Any:
    """JSON text to a plain document, with line/column on syntax errors."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, column=e.colno) from e


def deserialize(text: str) -> DslDefinition | DualProgram:
    """Parse canonical text back into the value it was serialized from."""
    doc = parse_document(text)
    if not isinstance(doc, dict):
        raise ParseError("expected a JSON object", line=1, column=1)
    if doc.get("kind") == "program":
        return program_from_doc(doc)
    return dsl_from_doc(doc)


def read_dsl(path: Path | str) -> DslDefinition:
    value = deserialize(Path(path).read_text(encoding="utf-8"))
    if not isinstance(value, DslDefinition):
        raise ParseError(f"{path} is not a dsl document", path=str(path))
    return value


def read_program(path: Path | str) -> DualProgram:
    value = deserialize(Path(path).read_text(encoding="utf-8"))
    if not isinstance(value, DualProgram):
        raise ParseError(f"{path} is not a program document", path=str(path))
    return value


def write_value(path: Path | str, value: DslDefinition | DualProgram) -> None:
    write_text_atomic(path, serialize(value))
