"""
Schedule grounding: join solver output back onto DSL programs to get a
configuration-complete production plan, then check it against the flow
graph.
"""

import dataclasses
import io
import logging
import typing as t
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib import cm  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .constraint_gen import StepRef, export_links, unit_key  # noqa: E402
from .dsl_core import DslDefinition, DualProgram, ValidationReport  # noqa: E402
from .jsp_solver import Schedule  # noqa: E402
from .shop_common import SCHEMA_VERSION, ShopError, write_text_atomic  # noqa: E402

logger = logging.getLogger(__name__)

PLAN_FIELDS = ("job_id", "step_index", "operation", "op_id", "machine", "start", "end", "duration", "config")


class UnknownStepRef(ShopError):
    code = "unknown_step_ref"


class MachineMismatch(ShopError):
    code = "machine_mismatch"


@dataclasses.dataclass(frozen=True)
class PlanEntry:
    job_id: str
    step_index: int
    operation: str
    op_id: str
    machine: str
    start: int
    end: int
    duration: int
    config: dict[str, t.Any]

    @property
    def ref(self) -> StepRef:
        return StepRef(self.job_id, self.step_index)


@dataclasses.dataclass(frozen=True)
class ProductionPlan:
    plan_id: str
    scenario_id: str
    entries: tuple[PlanEntry, ...] = ()

    @property
    def makespan(self) -> int:
        return max((e.end for e in self.entries), default=0)

    def entry_map(self) -> dict[StepRef, PlanEntry]:
        return {e.ref: e for e in self.entries}

    def to_doc(self) -> dict[str, t.Any]:
        """Plan JSON; entry fields are listed in PLAN_FIELDS."""
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "plan",
            "plan_id": self.plan_id,
            "scenario_id": self.scenario_id,
            "makespan": self.makespan,
            "entries": [{f: getattr(e, f) for f in PLAN_FIELDS} for e in self.entries],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, t.Any]) -> "ProductionPlan":
        return cls(
            plan_id=doc.get("plan_id", ""),
            scenario_id=doc.get("scenario_id", ""),
            entries=tuple(PlanEntry(**{f: e[f] for f in PLAN_FIELDS}) for e in doc.get("entries", [])),
        )


def ground(
    s: Schedule,
    programs: list[DualProgram],
    d: DslDefinition,
    mapping: dict[int, str] | None = None,
    plan_id: str = "plan",
    scenario_id: str = "",
) -> ProductionPlan:
    """Join schedule entries with their OperationInstances by step reference."""
    if mapping is None:
        mapping = {m.solver_index: m.machine_id for m in d.machine_catalog}
    by_job = {p.job_id: p for p in programs}
    entries = []
    for e in s.entries:
        program = by_job.get(e.job_id)
        step = program.step(e.step_index) if program is not None else None
        if step is None:
            raise UnknownStepRef(f"schedule references unknown step {e.job_id}#{e.step_index}", job_id=e.job_id, step_index=e.step_index)
        ctx = d.context(step.op_id, step.interface_index, step.context_index)
        scheduled = mapping.get(e.machine)
        if scheduled != ctx.machine:
            raise MachineMismatch(
                f"{e.job_id}#{e.step_index} scheduled on {scheduled or e.machine} but runs on {ctx.machine}",
                job_id=e.job_id,
                step_index=e.step_index,
                scheduled=scheduled,
                expected=ctx.machine,
            )
        machine = d.machine(ctx.machine)
        entries.append(
            PlanEntry(
                job_id=e.job_id,
                step_index=e.step_index,
                operation=d.operation_defs[step.op_id].display_name,
                op_id=step.op_id,
                machine=machine.name if machine is not None else ctx.machine,
                start=e.start,
                end=e.end,
                duration=ctx.duration,
                config=dict(step.bound_params),
            )
        )
    entries.sort(key=lambda x: (x.start, x.job_id, x.step_index))
    logger.info(f"grounded {len(entries)} entries into plan {plan_id}")
    return ProductionPlan(plan_id=plan_id, scenario_id=scenario_id, entries=tuple(entries))


def check_plan_consistency(plan: ProductionPlan, programs: list[DualProgram], d: DslDefinition) -> ValidationReport:
    """Start/end/duration agreement, completeness and lossless configuration."""
    report = ValidationReport()
    total = sum(len(p.steps) for p in programs)
    if len(plan.entries) != total:
        report.add("entries", f"{len(plan.entries)} entries for {total} steps")
    by_job = {p.job_id: p for p in programs}
    for k, e in enumerate(plan.entries):
        path = f"entries/{k}"
        if e.end - e.start != e.duration:
            report.add(path, f"end - start = {e.end - e.start} but duration is {e.duration}")
        program = by_job.get(e.job_id)
        step = program.step(e.step_index) if program is not None else None
        if step is None:
            report.add(path, f"unknown step {e.job_id}#{e.step_index}")
            continue
        ctx = d.context(step.op_id, step.interface_index, step.context_index)
        machine = d.machine(ctx.machine)
        if e.duration != ctx.duration:
            report.add(path, f"duration {e.duration} differs from {ctx.duration}")
        if machine is not None and e.machine != machine.name:
            report.add(path, f"machine {e.machine} differs from {machine.name}")
        if e.config != step.bound_params:
            report.add(path, f"config differs from bound params of {e.job_id}#{e.step_index}")
    return report


def check_process_locks(plan: ProductionPlan, programs: list[DualProgram]) -> ValidationReport:
    """Lock check per flow unit plus a breakpoint traversal of the dependency graph."""
    report = ValidationReport()
    placed = plan.entry_map()
    exports = export_links(programs)

    producers: dict[str, list[StepRef]] = {}
    for p in programs:
        for u in p.flow_units:
            producers[unit_key(p.job_id, u.unit_id)] = [StepRef(p.job_id, s) for s in sorted(u.producers)]

    edges: list[tuple[StepRef, StepRef, str]] = []
    for p in programs:
        for u in p.flow_units:
            own = unit_key(p.job_id, u.unit_id)
            sources = producers.get(exports.get(own, own), [])
            consumers = [StepRef(p.job_id, c) for c in sorted(u.consumers)]
            for c in consumers:
                edges.append((c, c, own))
                for a in sources:
                    edges.append((a, c, own))
            if not sources or not consumers:
                continue
            ready = [placed[a].end for a in sources if a in placed]
            for c in consumers:
                if c in placed and ready and placed[c].start < max(ready):
                    report.add(
                        f"locks/{own}",
                        f"lock violated: {c} starts at {placed[c].start} before {own} is ready at {max(ready)}",
                    )

    # breakpoint check: every flow edge must be backed by plan entries in time order
    for a, b, own in edges:
        if a not in placed or b not in placed:
            missing = a if a not in placed else b
            report.add(f"breakpoints/{own}", f"breakpoint: no plan entry for {missing}")
        elif a != b and placed[a].end > placed[b].start:
            report.add(f"breakpoints/{own}", f"breakpoint: {a} ends after {b} starts")
    for p in programs:
        refs = [StepRef(p.job_id, s.step_index) for s in p.steps]
        for a, b in zip(refs, refs[1:]):
            if a in placed and b in placed and placed[a].end > placed[b].start:
                report.add(f"breakpoints/{p.job_id}", f"breakpoint: {a} ends after {b} starts")
    return _dedupe(report)


def _dedupe(report: ValidationReport) -> ValidationReport:
    seen = set()
    out = ValidationReport()
    for v in report.violations:
        if (v.path, v.message) not in seen:
            seen.add((v.path, v.message))
            out.violations.append(v)
    return out


@dataclasses.dataclass(frozen=True)
class GanttBar:
    row: str
    start: int
    end: int
    label: str
    job_id: str


def gantt_bars(
    value: Schedule | ProductionPlan,
    machine_names: t.Sequence[str] | None = None,
) -> tuple[list[str], list[GanttBar]]:
    """Row labels (one per machine) and bars for a schedule or plan."""
    bars = []
    if isinstance(value, ProductionPlan):
        for e in value.entries:
            bars.append(GanttBar(e.machine, e.start, e.end, f"{e.job_id}/{e.step_index}", e.job_id))
        rows = sorted(set(machine_names or ()) | {b.row for b in bars})
    else:
        names = list(machine_names or ())
        n_rows = max([len(names)] + [e.machine + 1 for e in value.entries])
        rows = [names[i] if i < len(names) else f"M{i}" for i in range(n_rows)]
        for e in value.entries:
            bars.append(GanttBar(rows[e.machine], e.start, e.end, f"{e.job_id}/{e.step_index}", e.job_id))
    bars.sort(key=lambda b: (rows.index(b.row), b.start, b.label))
    return rows, bars


def render_gantt_svg(value: Schedule | ProductionPlan, machine_names: t.Sequence[str] | None = None) -> str:
    """Deterministic SVG text: one row per machine, time on the x axis."""
    rows, bars = gantt_bars(value, machine_names)
    jobs = sorted({b.job_id for b in bars})
    colors = cm.Dark2.colors
    horizon = max((b.end for b in bars), default=0)

    with matplotlib.rc_context({"svg.hashsalt": "shopdsl", "svg.fonttype": "none"}):
        fig = Figure(figsize=(10, 1.5 + 0.5 * max(len(rows), 1)))
        ax = fig.add_subplot()
        for y, _ in enumerate(rows):
            # idle time shows as the grey row background
            ax.broken_barh([(0, max(horizon, 1))], (y - 0.4, 0.8), facecolors="#eeeeee")
        for b in bars:
            y = rows.index(b.row)
            color = colors[jobs.index(b.job_id) % len(colors)]
            ax.broken_barh([(b.start, b.end - b.start)], (y - 0.4, 0.8), facecolors=color, edgecolor="black")
            ax.text((b.start + b.end) / 2, y, b.label, ha="center", va="center", color="white", fontsize=7)
        if horizon:
            ax.axvline(horizon, color="red", linestyle="--")
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(rows)
        ax.set_ylim(-0.6, max(len(rows), 1) - 0.4)
        ax.set_xlim(0, max(horizon, 1))
        ax.set_xlabel("Time (min)")
        ax.set_ylabel("Machine")
        ax.invert_yaxis()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def emit_gantt(
    value: Schedule | ProductionPlan,
    out: Path | str,
    machine_names: t.Sequence[str] | None = None,
) -> Path:
    """Write the Gantt chart SVG; OSError propagates on write failure."""
    path = Path(out)
    write_text_atomic(path, render_gantt_svg(value, machine_names))
    return path
