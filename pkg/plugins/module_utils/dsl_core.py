"""
Dual-view DSL data model.

A DslDefinition holds the operation-centric view (operations, their
interfaces and execution contexts) and the product-flow-centric view (flow
unit definitions and the flow-structure grammar). A DualProgram is one
compiled procedure expressed in both views.
"""

import dataclasses
import graphlib
import logging
import re
import typing as t

from .shop_common import canonical_number

logger = logging.getLogger(__name__)

DISCRETE = "discrete-set"
CONTINUOUS = "continuous-interval"
MIXED = "mixed"
PARAM_KINDS = (DISCRETE, CONTINUOUS, MIXED)

BASE_PRODUCTIONS = (
    "PredS ::= <pred> <prop>",
    "PredS ::= <pred> PredS <prop>",
    "PredS ::= < >",
    "SuccS ::= <succ> <prop>",
    "SuccS ::= <succ> SuccS <prop>",
    "SuccS ::= < >",
)
_UNROLLED_RE = re.compile(r"^(PredS|SuccS)(\d+) ::= ((?:<pred> |<succ> )+)<prop>$")
_PHASE_RE = re.compile(r"^(.*?) \[[^\]]*\]$")


def _value_key(value: t.Any) -> tuple[int, float, str]:
    if isinstance(value, str):
        return (1, 0.0, value)
    return (0, float(value), "")


def _norm_value(value: t.Any) -> t.Any:
    if isinstance(value, str) or isinstance(value, bool):
        return value
    return canonical_number(value, places=None)


@dataclasses.dataclass(frozen=True)
class ParamSpec:
    """Value domain of an execution parameter or flow-unit property."""

    kind: str
    values: tuple[t.Any, ...] = ()
    interval: tuple[float | int, float | int] | None = None
    unit: str = ""

    def __post_init__(self) -> None:
        values = tuple(sorted({_norm_value(v) for v in self.values}, key=_value_key))
        object.__setattr__(self, "values", values)
        if self.interval is not None:
            lo, hi = self.interval
            object.__setattr__(self, "interval", (canonical_number(lo, places=None), canonical_number(hi, places=None)))

    def contains(self, value: t.Any) -> bool:
        """True when value lies in the discrete set or the interval."""
        if self.values and _norm_value(value) in self.values:
            return True
        if self.interval is not None and not isinstance(value, (str, bool)):
            lo, hi = self.interval
            return lo <= value <= hi
        return False

    def default(self) -> t.Any:
        if self.values:
            return self.values[0]
        if self.interval is not None:
            return self.interval[0]
        return None

    def union(self, other: "ParamSpec") -> "ParamSpec":
        """Smallest spec covering both value domains."""
        values = tuple(self.values) + tuple(other.values)
        intervals = [iv for iv in (self.interval, other.interval) if iv is not None]
        interval = None
        if intervals:
            interval = (min(iv[0] for iv in intervals), max(iv[1] for iv in intervals))
        if values and interval is not None:
            kind = MIXED
        elif interval is not None:
            kind = CONTINUOUS
        else:
            kind = DISCRETE
        return ParamSpec(kind=kind, values=values, interval=interval, unit=self.unit or other.unit)

    def problems(self) -> list[str]:
        """Invariant violations of this spec, as messages."""
        out = []
        if self.kind not in PARAM_KINDS:
            out.append(f"unknown param kind {self.kind}")
        if self.kind in (DISCRETE, MIXED) and not self.values:
            out.append(f"{self.kind} param has no values")
        if self.kind in (CONTINUOUS, MIXED):
            if self.interval is None:
                out.append(f"{self.kind} param has no interval")
            elif self.interval[0] > self.interval[1]:
                out.append(f"interval min {self.interval[0]} exceeds max {self.interval[1]}")
        return out


@dataclasses.dataclass(frozen=True)
class ExecContext:
    machine: str
    duration: int
    params: dict[str, ParamSpec] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class FlowRequirement:
    """One pre/postcondition slot, satisfied by any of the accepted flow units."""

    accepts: frozenset[str]

    @classmethod
    def of(cls, *flow_ids: str) -> "FlowRequirement":
        return cls(frozenset(flow_ids))

    def sort_key(self) -> tuple[str, ...]:
        return tuple(sorted(self.accepts))


@dataclasses.dataclass(frozen=True)
class Interface:
    preconditions: tuple[FlowRequirement, ...] = ()
    postconditions: tuple[FlowRequirement, ...] = ()
    exec_contexts: tuple[ExecContext, ...] = ()

    def __post_init__(self) -> None:
        # slots are a multiset; fix their order so equality ignores construction order
        object.__setattr__(
            self, "preconditions", tuple(sorted(self.preconditions, key=FlowRequirement.sort_key))
        )
        object.__setattr__(
            self, "postconditions", tuple(sorted(self.postconditions, key=FlowRequirement.sort_key))
        )
        object.__setattr__(self, "exec_contexts", tuple(self.exec_contexts))

    def param_fields(self) -> frozenset[str]:
        """Union of parameter names over all execution contexts."""
        return frozenset(name for ctx in self.exec_contexts for name in ctx.params)

    def shape(self) -> tuple[int, int, frozenset[str]]:
        return (len(self.preconditions), len(self.postconditions), self.param_fields())


@dataclasses.dataclass(frozen=True)
class OperationDef:
    identifier: str
    interfaces: tuple[Interface, ...] = ()
    name: str = ""
    aliases: frozenset[str] = frozenset()

    @property
    def display_name(self) -> str:
        return self.name or self.identifier


@dataclasses.dataclass(frozen=True)
class FlowUnitDef:
    identifier: str
    properties: dict[str, ParamSpec] = dataclasses.field(default_factory=dict)
    aliases: frozenset[str] = frozenset()

    @property
    def surface_name(self) -> str:
        return surface_name(self.identifier)


def surface_name(identifier: str) -> str:
    """Strip a phase qualifier: 'Aluminum Alloy [volume]' -> 'Aluminum Alloy'."""
    m = _PHASE_RE.match(identifier)
    return m.group(1) if m else identifier


def unrolled_production(nonterminal: str, k: int) -> str:
    terminal = "<pred>" if nonterminal == "PredS" else "<succ>"
    return f"{nonterminal}{k} ::= " + " ".join([terminal] * k) + " <prop>"


@dataclasses.dataclass(frozen=True)
class FlowGrammar:
    """Flow-structure grammar: the recursive base plus bounded unrollings."""

    productions: tuple[str, ...] = BASE_PRODUCTIONS
    max_pred: int = 1
    max_succ: int = 1

    @classmethod
    def base(cls) -> "FlowGrammar":
        return cls.bounded(1, 1)

    @classmethod
    def bounded(cls, max_pred: int, max_succ: int) -> "FlowGrammar":
        """Grammar admitting up to max_pred producers and max_succ consumers per unit."""
        prods = list(BASE_PRODUCTIONS)
        prods += [unrolled_production("PredS", k) for k in range(1, max_pred + 1)]
        prods += [unrolled_production("SuccS", k) for k in range(1, max_succ + 1)]
        return cls(productions=tuple(prods), max_pred=max_pred, max_succ=max_succ)

    def admits(self, n_pred: int, n_succ: int) -> bool:
        return n_pred <= self.max_pred and n_succ <= self.max_succ

    def problems(self) -> list[str]:
        out = []
        if self.max_pred < 1:
            out.append(f"max_pred {self.max_pred} < 1")
        if self.max_succ < 1:
            out.append(f"max_succ {self.max_succ} < 1")
        for prod in self.productions:
            if prod in BASE_PRODUCTIONS:
                continue
            m = _UNROLLED_RE.match(prod)
            if m is None:
                out.append(f"production not derivable from the base grammar: {prod}")
                continue
            nonterminal, k, body = m.group(1), int(m.group(2)), m.group(3).split()
            terminal = "<pred>" if nonterminal == "PredS" else "<succ>"
            bound = self.max_pred if nonterminal == "PredS" else self.max_succ
            if len(body) != k or any(tok != terminal for tok in body):
                out.append(f"production not derivable from the base grammar: {prod}")
            elif k > bound:
                out.append(f"production {prod} exceeds bound {bound}")
        return out


@dataclasses.dataclass(frozen=True)
class MachineDef:
    machine_id: str
    name: str
    solver_index: int


@dataclasses.dataclass(frozen=True)
class DslDefinition:
    operation_defs: dict[str, OperationDef] = dataclasses.field(default_factory=dict)
    flow_unit_defs: dict[str, FlowUnitDef] = dataclasses.field(default_factory=dict)
    flow_grammar: FlowGrammar = dataclasses.field(default_factory=FlowGrammar.base)
    machine_catalog: tuple[MachineDef, ...] = ()

    def __post_init__(self) -> None:
        catalog = sorted(self.machine_catalog, key=lambda m: (m.solver_index, m.machine_id))
        object.__setattr__(self, "machine_catalog", tuple(catalog))

    def machine(self, machine_id: str) -> MachineDef | None:
        for m in self.machine_catalog:
            if m.machine_id == machine_id:
                return m
        return None

    def machine_named(self, name: str) -> MachineDef | None:
        lowered = name.lower()
        for m in self.machine_catalog:
            if m.name.lower() == lowered or m.machine_id == name:
                return m
        return None

    def resolve_flow(self, text: str, prop_names: t.Iterable[str] | None = None) -> str | None:
        """Flow-unit identifier for a name or alias (exact string match).

        Phase-split definitions share a surface name; the property names
        observed with the unit pick among them.
        """
        if text in self.flow_unit_defs:
            return text
        hits = sorted(
            ident
            for ident, fdef in self.flow_unit_defs.items()
            if text in fdef.aliases or fdef.surface_name == text
        )
        if not hits:
            return None
        if len(hits) > 1 and prop_names is not None:
            wanted = set(prop_names)
            for ident in hits:
                if set(self.flow_unit_defs[ident].properties) == wanted:
                    return ident
        return hits[0]

    def resolve_operation(self, text: str) -> list[str]:
        """Operation identifiers whose identifier, name or alias equals text."""
        return sorted(
            ident
            for ident, op in self.operation_defs.items()
            if text == ident or text == op.name or text in op.aliases
        )

    def context(self, op_id: str, interface_index: int, context_index: int) -> ExecContext:
        return self.operation_defs[op_id].interfaces[interface_index].exec_contexts[context_index]


@dataclasses.dataclass(frozen=True)
class OperationInstance:
    step_index: int
    op_id: str
    interface_index: int = 0
    context_index: int = 0
    bound_params: dict[str, t.Any] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class FlowUnitInstance:
    unit_id: str
    flow_def: str
    producers: frozenset[int] = frozenset()
    consumers: frozenset[int] = frozenset()
    prop_values: dict[str, t.Any] = dataclasses.field(default_factory=dict)
    raw_material: bool = False
    final_product: bool = False
    # job id exporting this unit as its final product
    supplied_by: str | None = None


@dataclasses.dataclass(frozen=True)
class DualProgram:
    job_id: str
    steps: tuple[OperationInstance, ...] = ()
    flow_units: tuple[FlowUnitInstance, ...] = ()

    def step(self, step_index: int) -> OperationInstance | None:
        for s in self.steps:
            if s.step_index == step_index:
                return s
        return None

    def consumed_at(self, step_index: int) -> list[FlowUnitInstance]:
        return [u for u in self.flow_units if step_index in u.consumers]

    def produced_at(self, step_index: int) -> list[FlowUnitInstance]:
        return [u for u in self.flow_units if step_index in u.producers]


@dataclasses.dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"path": self.path, "message": self.message}


@dataclasses.dataclass
class ValidationReport:
    """Invariant violations; an empty report means the value is valid."""

    violations: list[Violation] = dataclasses.field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def extend(self, other: "ValidationReport", prefix: str = "") -> None:
        for v in other.violations:
            self.add(f"{prefix}{v.path}", v.message)

    def messages(self) -> list[str]:
        return [v.message for v in self.violations]

    def __len__(self) -> int:
        return len(self.violations)

    def to_dict(self) -> dict[str, t.Any]:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def validate_dsl(d: DslDefinition) -> ValidationReport:
    """Check every DslDefinition invariant."""
    report = ValidationReport()
    machine_ids = [m.machine_id for m in d.machine_catalog]
    known_machines = set(machine_ids)

    for i, m in enumerate(d.machine_catalog):
        path = f"machine_catalog/{i}"
        if machine_ids.count(m.machine_id) > 1:
            report.add(path, f"duplicate machine {m.machine_id}")
        if m.solver_index < 0:
            report.add(path, f"negative solver_index {m.solver_index}")
        if sum(1 for o in d.machine_catalog if o.solver_index == m.solver_index) > 1:
            report.add(path, f"duplicate solver_index {m.solver_index}")

    for key, op in sorted(d.operation_defs.items()):
        opath = f"operation_defs/{key}"
        if op.identifier != key:
            report.add(opath, f"operation keyed {key} is named {op.identifier}")
        if not op.interfaces:
            report.add(opath, f"operation {key} has no interface")
        for ii, iface in enumerate(op.interfaces):
            ipath = f"{opath}/interfaces/{ii}"
            if iface in op.interfaces[:ii]:
                report.add(ipath, f"duplicate interface of operation {key}")
            for side in ("preconditions", "postconditions"):
                for si, slot in enumerate(getattr(iface, side)):
                    if not slot.accepts:
                        report.add(f"{ipath}/{side}/{si}", "empty flow requirement")
                    for flow_id in sorted(slot.accepts):
                        if flow_id not in d.flow_unit_defs:
                            report.add(f"{ipath}/{side}/{si}", f"unknown flow unit {flow_id}")
            if not iface.exec_contexts:
                report.add(ipath, "interface has no execution context")
            for ci, ctx in enumerate(iface.exec_contexts):
                cpath = f"{ipath}/exec_contexts/{ci}"
                if ctx.machine not in known_machines:
                    report.add(cpath, f"unknown machine {ctx.machine}")
                if not isinstance(ctx.duration, int) or ctx.duration <= 0:
                    report.add(cpath, f"duration {ctx.duration} is not a positive integer")
                for pname, spec in sorted(ctx.params.items()):
                    for msg in spec.problems():
                        report.add(f"{cpath}/params/{pname}", msg)

    alias_owner: dict[str, str] = {}
    for key, fdef in sorted(d.flow_unit_defs.items()):
        fpath = f"flow_unit_defs/{key}"
        if fdef.identifier != key:
            report.add(fpath, f"flow unit keyed {key} is named {fdef.identifier}")
        if fdef.identifier in fdef.aliases:
            report.add(fpath, f"flow unit {key} lists itself as alias")
        for alias in sorted(fdef.aliases):
            if alias in alias_owner and alias_owner[alias] != key:
                report.add(fpath, f"alias {alias} shared with {alias_owner[alias]}")
            elif alias in d.flow_unit_defs and alias != key:
                report.add(fpath, f"alias {alias} collides with a flow unit identifier")
            alias_owner.setdefault(alias, key)
        for pname, spec in sorted(fdef.properties.items()):
            for msg in spec.problems():
                report.add(f"{fpath}/properties/{pname}", msg)

    for msg in d.flow_grammar.problems():
        report.add("flow_grammar", msg)
    return report


def _match_slots(units: list[FlowUnitInstance], slots: tuple[FlowRequirement, ...]) -> bool:
    """One-to-one assignment of units to slots accepting their flow def."""
    if len(units) != len(slots):
        return False
    owner: dict[int, int] = {}

    def augment(u: int, seen: set[int]) -> bool:
        for s, slot in enumerate(slots):
            if s in seen or units[u].flow_def not in slot.accepts:
                continue
            seen.add(s)
            if s not in owner or augment(owner[s], seen):
                owner[s] = u
                return True
        return False

    return all(augment(u, set()) for u in range(len(units)))


def program_has_cycle(p: DualProgram) -> bool:
    """Cycle over flow edges plus the implicit within-job step order."""
    sorter: graphlib.TopologicalSorter[int] = graphlib.TopologicalSorter()
    indexes = [s.step_index for s in p.steps]
    for idx in indexes:
        sorter.add(idx)
    for a, b in zip(indexes, indexes[1:]):
        sorter.add(b, a)
    for unit in p.flow_units:
        for prod in unit.producers:
            for cons in unit.consumers:
                if prod == cons:
                    return True
                sorter.add(cons, prod)
    try:
        sorter.prepare()
    except graphlib.CycleError:
        return True
    return False


def validate_program(p: DualProgram, d: DslDefinition) -> ValidationReport:
    """Check DualProgram invariants and the agreement of both program views."""
    report = ValidationReport()
    step_ids = {s.step_index for s in p.steps}

    for pos, step in enumerate(p.steps):
        spath = f"steps/{pos}"
        if step.step_index != pos:
            report.add(spath, f"step_index {step.step_index} out of order")
        op = d.operation_defs.get(step.op_id)
        if op is None:
            report.add(spath, f"unknown operation {step.op_id}")
            continue
        if not 0 <= step.interface_index < len(op.interfaces):
            report.add(spath, f"interface {step.interface_index} not defined for {step.op_id}")
            continue
        iface = op.interfaces[step.interface_index]
        if not 0 <= step.context_index < len(iface.exec_contexts):
            report.add(spath, f"exec context {step.context_index} not defined for {step.op_id}")
            continue
        ctx = iface.exec_contexts[step.context_index]
        for name in sorted(set(ctx.params) - set(step.bound_params)):
            report.add(f"{spath}/bound_params", f"missing param {name}")
        for name, value in sorted(step.bound_params.items()):
            spec = ctx.params.get(name)
            if spec is None:
                report.add(f"{spath}/bound_params/{name}", f"unknown param {name}")
            elif not spec.contains(value):
                report.add(f"{spath}/bound_params/{name}", f"value {value!r} outside domain of {name}")
        if not _match_slots(p.consumed_at(step.step_index), iface.preconditions):
            report.add(spath, f"consumed units do not match the preconditions of {step.op_id}")
        if not _match_slots(p.produced_at(step.step_index), iface.postconditions):
            report.add(spath, f"produced units do not match the postconditions of {step.op_id}")

    seen_units: set[str] = set()
    grammar = d.flow_grammar
    for pos, unit in enumerate(p.flow_units):
        upath = f"flow_units/{pos}"
        if unit.unit_id in seen_units:
            report.add(upath, f"duplicate unit {unit.unit_id}")
        seen_units.add(unit.unit_id)
        fdef = d.flow_unit_defs.get(unit.flow_def)
        if fdef is None:
            report.add(upath, f"unknown flow unit {unit.flow_def}")
        for idx in sorted((unit.producers | unit.consumers) - step_ids):
            report.add(upath, f"unit {unit.unit_id} references missing step {idx}")
        if not unit.producers and not unit.consumers:
            report.add(upath, f"unit {unit.unit_id} has neither producer nor consumer")
        if not unit.producers and not unit.raw_material:
            report.add(upath, f"dangling consumer: unit {unit.unit_id} has no producer")
        if not unit.consumers and not unit.final_product:
            report.add(upath, f"dangling producer: unit {unit.unit_id} has no consumer")
        if unit.raw_material and unit.producers:
            report.add(upath, f"raw material {unit.unit_id} has producers")
        if unit.final_product and unit.consumers:
            report.add(upath, f"final product {unit.unit_id} has consumers")
        if unit.supplied_by is not None and not unit.raw_material:
            report.add(upath, f"supplied unit {unit.unit_id} is not raw material")
        n_pred = len(unit.producers) or (1 if unit.raw_material else 0)
        n_succ = len(unit.consumers) or (1 if unit.final_product else 0)
        if not grammar.admits(n_pred, n_succ):
            report.add(
                upath,
                f"fan {n_pred}->{n_succ} of {unit.unit_id} exceeds grammar "
                f"{grammar.max_pred}->{grammar.max_succ}",
            )
        if fdef is not None:
            for name, value in sorted(unit.prop_values.items()):
                spec = fdef.properties.get(name)
                if spec is None:
                    report.add(f"{upath}/prop_values/{name}", f"unknown property {name}")
                elif not spec.contains(value):
                    report.add(f"{upath}/prop_values/{name}", f"value {value!r} outside domain of {name}")

    if program_has_cycle(p):
        report.add("flow_units", "flow graph has a cycle")
    if report.violations:
        logger.debug(f"program {p.job_id}: {len(report)} violation(s)")
    return report
