"""
Constraint generation: a def/kill walk over DualPrograms that emits resource
and precedence constraints, plus conversion to solver input.
"""

import collections
import dataclasses
import heapq
import logging
import typing as t

from .abstraction import OUTPUT, ExtractorAdapter, route_sheet_to_doc
from .dsl_core import DslDefinition, DualProgram, FlowUnitInstance, ValidationReport
from .shop_common import SCHEMA_VERSION, ShopError

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, order=True)
class StepRef:
    job_id: str
    step_index: int

    def __str__(self) -> str:
        return f"{self.job_id}#{self.step_index}"


SOURCE = StepRef("SOURCE", -1)
SINK = StepRef("SINK", -1)


def unit_key(job_id: str, unit_id: str) -> str:
    return f"{job_id}/{unit_id}"


@dataclasses.dataclass(frozen=True)
class TraceEntry:
    step: StepRef
    defined: tuple[str, ...]
    killed: tuple[str, ...]


@dataclasses.dataclass
class VerifierTrace:
    entries: list[TraceEntry] = dataclasses.field(default_factory=list)
    # unit key -> flow-unit identifier
    flow_defs: dict[str, str] = dataclasses.field(default_factory=dict)
    accepting: bool = False

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "accepting": self.accepting,
            "entries": [
                {"step": [e.step.job_id, e.step.step_index], "defined": list(e.defined), "killed": list(e.killed)}
                for e in self.entries
            ],
            "flow_defs": dict(self.flow_defs),
        }


class FlowBreak(ShopError):
    code = "flow_break"

    def __init__(self, msg: str, trace: VerifierTrace | None = None, **details: t.Any) -> None:
        super().__init__(msg, **details)
        self.trace = trace


class NonEmptyMemory(ShopError):
    code = "non_empty_memory"

    def __init__(self, msg: str, trace: VerifierTrace | None = None, **details: t.Any) -> None:
        super().__init__(msg, **details)
        self.trace = trace


class UnmappedMachine(ShopError):
    code = "unmapped_machine"


@dataclasses.dataclass(frozen=True)
class ConstraintSet:
    resource: frozenset[tuple[StepRef, str]] = frozenset()
    precedence: frozenset[tuple[StepRef, StepRef]] = frozenset()

    def machine_of(self) -> dict[StepRef, str]:
        return {ref: machine for ref, machine in self.resource}

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "constraints",
            "resource": [
                {"job_id": ref.job_id, "step_index": ref.step_index, "machine": machine}
                for ref, machine in sorted(self.resource)
            ],
            "precedence": [
                {"from_job": a.job_id, "from_step": a.step_index, "to_job": b.job_id, "to_step": b.step_index}
                for a, b in sorted(self.precedence)
            ],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, t.Any]) -> "ConstraintSet":
        return cls(
            resource=frozenset((StepRef(r["job_id"], r["step_index"]), r["machine"]) for r in doc.get("resource", [])),
            precedence=frozenset(
                (StepRef(p["from_job"], p["from_step"]), StepRef(p["to_job"], p["to_step"]))
                for p in doc.get("precedence", [])
            ),
        )


def export_links(programs: list[DualProgram]) -> dict[str, str]:
    """Key of each supplied raw unit -> key of the final unit exporting it."""
    by_job = {p.job_id: p for p in programs}
    out: dict[str, str] = {}
    for p in programs:
        for unit in p.flow_units:
            if unit.supplied_by is None:
                continue
            source = by_job.get(unit.supplied_by)
            matches = sorted(
                (u.unit_id for u in source.flow_units if u.final_product and u.flow_def == unit.flow_def)
                if source is not None
                else []
            )
            if matches:
                out[unit_key(p.job_id, unit.unit_id)] = unit_key(unit.supplied_by, matches[0])
    return out


def execution_order(programs: list[DualProgram], exports: dict[str, str] | None = None) -> list[StepRef]:
    """Topological order of steps: within-job chains plus cross-job flow edges.

    Ties go to the earlier job in corpus order, then the lower step index.
    """
    exports = export_links(programs) if exports is None else exports
    job_pos = {p.job_id: i for i, p in enumerate(programs)}
    producers: dict[str, list[StepRef]] = {}
    for p in programs:
        for u in p.flow_units:
            producers[unit_key(p.job_id, u.unit_id)] = [StepRef(p.job_id, s) for s in sorted(u.producers)]

    succ: dict[StepRef, set[StepRef]] = collections.defaultdict(set)
    indegree: dict[StepRef, int] = {}
    for p in programs:
        refs = [StepRef(p.job_id, s.step_index) for s in p.steps]
        for ref in refs:
            indegree.setdefault(ref, 0)
        for a, b in zip(refs, refs[1:]):
            succ[a].add(b)
    for p in programs:
        for u in p.flow_units:
            source = exports.get(unit_key(p.job_id, u.unit_id))
            if source is None:
                continue
            for a in producers.get(source, []):
                for c in sorted(u.consumers):
                    succ[a].add(StepRef(p.job_id, c))
    for targets in succ.values():
        for b in targets:
            indegree[b] = indegree.get(b, 0) + 1

    heap = [(job_pos[r.job_id], r.step_index, r) for r, deg in indegree.items() if deg == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, _, ref = heapq.heappop(heap)
        order.append(ref)
        for nxt in succ.get(ref, ()):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(heap, (job_pos[nxt.job_id], nxt.step_index, nxt))
    if len(order) != len(indegree):
        stuck = sorted(r for r, deg in indegree.items() if deg > 0)
        raise FlowBreak(
            f"cross-job flows form a cycle through {stuck[0]}",
            step=[stuck[0].job_id, stuck[0].step_index],
        )
    return order


def verify_and_generate(programs: list[DualProgram], d: DslDefinition) -> tuple[ConstraintSet, VerifierTrace]:
    """Walk every step in execution order, tracking live flow units.

    Each step kills the units it consumes and defines the units it produces;
    every (definer, killer) pair becomes a precedence constraint. SOURCE
    defines raw materials up front and SINK kills final products at the end.
    The walk accepts iff memory is empty at the end.
    """
    exports = export_links(programs)
    trace = VerifierTrace()
    memory: collections.Counter[str] = collections.Counter()
    definers: dict[str, set[StepRef]] = collections.defaultdict(set)
    # produced-at lookup per step and consumed-at lookup per step, by unit key
    defines_at: dict[StepRef, list[str]] = collections.defaultdict(list)
    kills_at: dict[StepRef, list[str]] = collections.defaultdict(list)
    pending_producers: dict[str, int] = {}
    expected_kills: collections.Counter[str] = collections.Counter()
    exported = set(exports.values())
    units_by_key: dict[str, FlowUnitInstance] = {}

    for p in programs:
        for u in p.flow_units:
            own = unit_key(p.job_id, u.unit_id)
            if u.supplied_by is not None and own not in exports:
                first = min(u.consumers) if u.consumers else -1
                raise FlowBreak(
                    f"{own} expects {u.flow_def} from job {u.supplied_by}, which does not export it",
                    trace=trace,
                    unit=own,
                    step=[p.job_id, first],
                )
            key = exports.get(own, own)
            units_by_key[own] = u
            trace.flow_defs.setdefault(key, u.flow_def)
            for s in sorted(u.consumers):
                kills_at[StepRef(p.job_id, s)].append(key)
            expected_kills[key] += len(u.consumers)
            if own in exports:
                continue
            for s in sorted(u.producers):
                defines_at[StepRef(p.job_id, s)].append(own)
            pending_producers[own] = len(u.producers)
            if u.final_product and own not in exported:
                expected_kills[own] += 1

    source_defined = []
    for own, u in sorted(units_by_key.items()):
        if u.raw_material and own not in exports:
            source_defined.append(own)
            definers[own].add(SOURCE)
            memory[own] += max(1, expected_kills[own])
    trace.entries.append(TraceEntry(SOURCE, tuple(source_defined), ()))

    resource: set[tuple[StepRef, str]] = set()
    precedence: set[tuple[StepRef, StepRef]] = set()
    by_job = {p.job_id: p for p in programs}
    for ref in execution_order(programs, exports):
        step = by_job[ref.job_id].step(ref.step_index)
        assert step is not None
        ctx = d.context(step.op_id, step.interface_index, step.context_index)
        resource.add((ref, ctx.machine))
        killed = []
        for key in kills_at.get(ref, []):
            if memory[key] <= 0:
                trace.entries.append(TraceEntry(ref, (), tuple(killed)))
                raise FlowBreak(
                    f"step {ref} consumes {key} which is not live",
                    trace=trace,
                    unit=key,
                    step=[ref.job_id, ref.step_index],
                )
            memory[key] -= 1
            killed.append(key)
            for definer in sorted(definers[key]):
                if definer != SOURCE:
                    precedence.add((definer, ref))
        defined = []
        for key in defines_at.get(ref, []):
            definers[key].add(ref)
            pending_producers[key] -= 1
            if pending_producers[key] == 0:
                memory[key] += max(1, expected_kills[key])
            defined.append(key)
        trace.entries.append(TraceEntry(ref, tuple(defined), tuple(killed)))
        logger.debug(f"{ref}: defined {defined} killed {killed}")

    sink_killed = []
    for own, u in sorted(units_by_key.items()):
        if u.final_product and own not in exports and own not in exported and memory[own] > 0:
            memory[own] -= 1
            sink_killed.append(own)
    trace.entries.append(TraceEntry(SINK, (), tuple(sink_killed)))

    live = sorted(k for k, n in memory.items() if n > 0)
    trace.accepting = not live
    if live:
        raise NonEmptyMemory(f"memory not empty at end of walk: {live}", trace=trace, units=live)
    cs = ConstraintSet(resource=frozenset(resource), precedence=frozenset(precedence))
    logger.info(f"verified {len(programs)} program(s): {len(resource)} resource, {len(precedence)} precedence pairs")
    return cs, trace


@dataclasses.dataclass(frozen=True)
class Discrepancy:
    step: StepRef
    expected_defined: tuple[str, ...]
    expected_killed: tuple[str, ...]
    predicted_defined: tuple[str, ...]
    predicted_killed: tuple[str, ...]

    def to_dict(self) -> dict[str, t.Any]:
        return {
            "job_id": self.step.job_id,
            "step_index": self.step.step_index,
            "expected_defined": list(self.expected_defined),
            "expected_killed": list(self.expected_killed),
            "predicted_defined": list(self.predicted_defined),
            "predicted_killed": list(self.predicted_killed),
        }


def llm_shadow_check(
    trace: VerifierTrace,
    adapter: ExtractorAdapter | None,
    sheets: list[dict[str, t.Any]],
) -> list[Discrepancy]:
    """Re-derive each step's defined/killed flow types from route sheet text.

    Advisory only; the verifier's result is never changed.
    """
    if adapter is None:
        return []
    lines: dict[StepRef, str] = {}
    for sheet in sheets:
        doc = route_sheet_to_doc(sheet)
        for row, line in zip(sheet.get("rows", []), doc.lines()):
            lines[StepRef(sheet["job_id"], row["step"])] = line
    out = []
    for entry in trace.entries:
        if entry.step in (SOURCE, SINK):
            continue
        expected_def = tuple(sorted({trace.flow_defs[k] for k in entry.defined}))
        expected_kill = tuple(sorted({trace.flow_defs[k] for k in entry.killed}))
        pred_def: set[str] = set()
        pred_kill: set[str] = set()
        for action in adapter.extract(lines.get(entry.step, "")):
            for mention in action.flow_mentions():
                (pred_def if mention.role == OUTPUT else pred_kill).add(mention.name)
        if (tuple(sorted(pred_def)), tuple(sorted(pred_kill))) != (expected_def, expected_kill):
            out.append(
                Discrepancy(entry.step, expected_def, expected_kill, tuple(sorted(pred_def)), tuple(sorted(pred_kill)))
            )
    if out:
        logger.warning(f"shadow check found {len(out)} discrepancies")
    return out


@dataclasses.dataclass(frozen=True)
class SolverInput:
    """Job rows of (solver machine index, duration) plus cross-step edges."""

    jobs: tuple[tuple[tuple[int, int], ...], ...] = ()
    # ((job position, step), (job position, step))
    extra_precedence: tuple[tuple[tuple[int, int], tuple[int, int]], ...] = ()
    job_ids: tuple[str, ...] = ()
    # solver index -> machine identifier
    machine_map: dict[int, str] = dataclasses.field(default_factory=dict)

    @property
    def n_machines(self) -> int:
        indexes = [m for row in self.jobs for m, _ in row]
        return max(indexes) + 1 if indexes else 0

    def step_ref(self, job: int, step: int) -> StepRef:
        return StepRef(self.job_ids[job], step)

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "solver_input",
            "jobs": [[[m, dur] for m, dur in row] for row in self.jobs],
            "extra_precedence": [[list(a), list(b)] for a, b in self.extra_precedence],
            "job_ids": list(self.job_ids),
            "machine_map": [{"solver_index": i, "machine_id": m} for i, m in sorted(self.machine_map.items())],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, t.Any]) -> "SolverInput":
        jobs = tuple(tuple((int(m), int(dur)) for m, dur in row) for row in doc.get("jobs", []))
        return cls(
            jobs=jobs,
            extra_precedence=tuple(
                ((int(a[0]), int(a[1])), (int(b[0]), int(b[1]))) for a, b in doc.get("extra_precedence", [])
            ),
            job_ids=tuple(doc.get("job_ids") or [f"J{i}" for i in range(len(jobs))]),
            machine_map={int(m["solver_index"]): m["machine_id"] for m in doc.get("machine_map", [])},
        )


def to_solver_input(cs: ConstraintSet, programs: list[DualProgram], d: DslDefinition) -> SolverInput:
    """Solver matrices; within-job order stays implicit in each row."""
    machine_of = cs.machine_of()
    job_pos = {p.job_id: i for i, p in enumerate(programs)}
    machine_map: dict[int, str] = {}
    jobs = []
    for p in programs:
        row = []
        for step in p.steps:
            ref = StepRef(p.job_id, step.step_index)
            machine_id = machine_of.get(ref)
            if machine_id is None:
                ctx = d.context(step.op_id, step.interface_index, step.context_index)
                machine_id = ctx.machine
            machine = d.machine(machine_id)
            if machine is None:
                raise UnmappedMachine(f"machine {machine_id} has no solver index", machine=machine_id)
            duration = d.context(step.op_id, step.interface_index, step.context_index).duration
            machine_map[machine.solver_index] = machine_id
            row.append((machine.solver_index, duration))
        jobs.append(tuple(row))

    extra = []
    for a, b in sorted(cs.precedence):
        if a.job_id == b.job_id and a.step_index < b.step_index:
            continue
        extra.append(((job_pos[a.job_id], a.step_index), (job_pos[b.job_id], b.step_index)))
    return SolverInput(
        jobs=tuple(jobs),
        extra_precedence=tuple(extra),
        job_ids=tuple(p.job_id for p in programs),
        machine_map=machine_map,
    )


def validate_solver_input(si: SolverInput) -> ValidationReport:
    """Syntactic check of solver input (the compiler-level gate)."""
    report = ValidationReport()
    if len(si.job_ids) != len(si.jobs):
        report.add("job_ids", f"{len(si.job_ids)} job ids for {len(si.jobs)} jobs")
    for j, row in enumerate(si.jobs):
        for s, (machine, duration) in enumerate(row):
            path = f"jobs/{j}/{s}"
            if not isinstance(machine, int) or machine < 0:
                report.add(path, f"bad machine index {machine!r}")
            elif si.machine_map and machine not in si.machine_map:
                report.add(path, f"machine index {machine} not in machine map")
            if not isinstance(duration, int) or duration <= 0:
                report.add(path, f"duration {duration!r} is not a positive integer")
    for k, (a, b) in enumerate(si.extra_precedence):
        for end in (a, b):
            job, step = end
            if not (0 <= job < len(si.jobs) and 0 <= step < len(si.jobs[job])):
                report.add(f"extra_precedence/{k}", f"edge references missing step {list(end)}")
    return report
