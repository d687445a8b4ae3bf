"""
End-to-end run over one scenario: abstract every procedure, generate
constraints, solve, ground, and score the result against the gold artifacts.
Every intermediate is kept so it can be written out stage by stage.

A run can also be narrowed to one stage, feeding it the gold intermediates
of the scenario instead of the outputs of the stages before it.
"""

import dataclasses
import logging
import typing as t
from pathlib import Path

from .abstraction import AbstractionConfig, ProcedureDoc, program_to_route_sheet, synthesize_program
from .constraint_gen import (
    ConstraintSet,
    SolverInput,
    VerifierTrace,
    to_solver_input,
    validate_solver_input,
    verify_and_generate,
)
from .dsl_codec import serialize
from .dsl_core import DslDefinition, DualProgram
from .eval_metrics import MetricReport, RunRecord, ScenarioMetrics, score_scenario, write_metrics
from .grounding import ProductionPlan, check_plan_consistency, check_process_locks, emit_gantt, ground
from .jsp_solver import INFEASIBLE, Infeasible, Schedule, SolverConfig, solve
from .scenario_synth import ScenarioFiles
from .shop_common import ShopError, dump_canonical, write_text_atomic

logger = logging.getLogger(__name__)

PLAN_ID = "plan"

END_TO_END = "end-to-end"
ABSTRACTION = "abstraction"
CONSTRAINTS = "constraints"
GROUNDING = "grounding"
STAGES = (END_TO_END, ABSTRACTION, CONSTRAINTS, GROUNDING)

# run status when the stage under test stops before solving
SKIPPED = "skipped"


@dataclasses.dataclass
class PipelineResult:
    scenario_id: str
    dsl: DslDefinition
    programs: list[DualProgram]
    route_sheets: list[dict[str, t.Any]]
    constraints: ConstraintSet
    trace: VerifierTrace | None
    solver_input: SolverInput | None
    schedule: Schedule | None
    plan: ProductionPlan | None
    gold_plan: ProductionPlan | None
    run_log: list[RunRecord]
    issues: list[dict[str, t.Any]]
    metrics: ScenarioMetrics | None = None
    stage: str = END_TO_END


def compile_corpus(
    corpus: t.Sequence[ProcedureDoc],
    d: DslDefinition,
    cfg: AbstractionConfig | None = None,
    issues: list[dict[str, t.Any]] | None = None,
) -> tuple[list[DualProgram], list[str]]:
    """Programs for every document that compiles, plus the ids of those that did not."""
    programs, failed = [], []
    for doc in corpus:
        found: list[ShopError] = []
        try:
            programs.append(synthesize_program(doc, d, cfg=cfg, issues=found))
        except ShopError as e:
            logger.warning(f"{doc.doc_id}: {e.msg}")
            failed.append(doc.doc_id)
            found.append(e)
        if issues is not None:
            issues += [{"doc_id": doc.doc_id, **e.to_dict()} for e in found]
    return programs, failed


def plan_from_solver_input(
    si: SolverInput,
    programs: list[DualProgram],
    d: DslDefinition,
    scenario_id: str,
    cfg: SolverConfig | None = None,
    schedule: Schedule | None = None,
) -> tuple[Schedule, ProductionPlan]:
    """Solve (unless a schedule is given) and ground into a plan."""
    schedule = schedule if schedule is not None else solve(si, cfg)
    mapping = dict(si.machine_map) or None
    plan = ground(schedule, programs, d, mapping=mapping, plan_id=PLAN_ID, scenario_id=scenario_id)
    return schedule, plan


def derive_gold_plan(
    files: ScenarioFiles,
    cfg: SolverConfig | None = None,
    schedule: Schedule | None = None,
) -> ProductionPlan:
    """Gold plan: solve and ground the gold solver input under the scenario DSL."""
    _, plan = plan_from_solver_input(files.solver_input, files.programs, files.dsl, files.scenario_id, cfg, schedule)
    return plan


def _records(scenario_id: str, job_ids: t.Iterable[str], valid: set[str], status: str) -> list[RunRecord]:
    return [RunRecord(scenario_id, job, job in valid, status) for job in job_ids]


def run_pipeline(
    files: ScenarioFiles,
    dsl: DslDefinition | None = None,
    solver_cfg: SolverConfig | None = None,
    abstraction_cfg: AbstractionConfig | None = None,
    stage: str = END_TO_END,
) -> PipelineResult:
    """abstract -> constraints -> solve -> ground, then score against gold.

    ``stage`` narrows the run to one part of the chain: ``abstraction`` and
    ``constraints`` stop after constraint generation (the latter starting from
    the gold programs), ``grounding`` solves and grounds the gold solver input
    with the gold programs. Stage failures are recorded in the run log and
    issues list instead of raised, so a broken scenario still yields metrics.
    """
    if stage not in STAGES:
        raise ShopError(f"unknown pipeline stage {stage}", stage=stage, stages=list(STAGES))
    sid = files.scenario_id
    job_ids = [doc.doc_id for doc in files.corpus]
    issues: list[dict[str, t.Any]] = []
    if stage in (END_TO_END, ABSTRACTION):
        d = dsl or files.dsl
        programs, failed = compile_corpus(files.corpus, d, abstraction_cfg, issues)
    else:
        if dsl is not None:
            logger.warning(f"{sid}: stage {stage} starts from gold programs, ignoring the DSL override")
        d = files.dsl
        programs, failed = list(files.programs), []
    compiled = {p.job_id for p in programs}
    sheets = [program_to_route_sheet(p, d) for p in programs]
    result = PipelineResult(sid, d, programs, sheets, ConstraintSet(), None, None, None, None, None, [], issues, stage=stage)

    try:
        if stage == GROUNDING:
            result.constraints, result.solver_input = files.constraints, files.solver_input
        else:
            result.constraints, result.trace = verify_and_generate(programs, d)
            result.solver_input = to_solver_input(result.constraints, programs, d)
    except ShopError as e:
        logger.warning(f"{sid}: constraint generation failed: {e.msg}")
        issues.append({"stage": "constraints", **e.to_dict()})
        result.run_log = _records(sid, job_ids, set(), "error")
    else:
        report = validate_solver_input(result.solver_input)
        issues += [{"stage": "solver_input", "path": v.path, "msg": v.message} for v in report.violations]
        valid = compiled if report.ok else set()
        if stage in (ABSTRACTION, CONSTRAINTS):
            result.run_log = _records(sid, job_ids, valid, SKIPPED)
        else:
            result.run_log = _records(sid, job_ids, valid, _solve_and_ground(result, files, solver_cfg))
        for job in failed:
            result.run_log[job_ids.index(job)] = RunRecord(sid, job, False, "error")

    result.metrics = score_scenario(
        sid,
        sheets,
        files.route_sheets,
        result.plan.to_doc() if result.plan else None,
        result.gold_plan.to_doc() if result.gold_plan else None,
        result.constraints,
        files.constraints,
        result.run_log,
    )
    logger.info(f"{sid}: {stage} run finished with {len(issues)} issues")
    return result


def _solve_and_ground(result: PipelineResult, files: ScenarioFiles, solver_cfg: SolverConfig | None) -> str:
    """Fill schedule, plan and gold plan of ``result``; returns the run status."""
    assert result.solver_input is not None
    sid, programs, d, issues = result.scenario_id, result.programs, result.dsl, result.issues
    gold_schedule = None
    try:
        result.schedule, result.plan = plan_from_solver_input(result.solver_input, programs, d, sid, solver_cfg)
        status = result.schedule.status
        if result.solver_input == files.solver_input:
            gold_schedule = result.schedule
    except Infeasible as e:
        issues.append({"stage": "solve", **e.to_dict()})
        status = INFEASIBLE
    except ShopError as e:
        issues.append({"stage": "ground", **e.to_dict()})
        status = "error"
    if result.plan is not None:
        for check in (check_plan_consistency(result.plan, programs, d), check_process_locks(result.plan, programs)):
            issues += [{"stage": "plan", "path": v.path, "msg": v.message} for v in check.violations]
    try:
        result.gold_plan = derive_gold_plan(files, solver_cfg, gold_schedule)
    except ShopError as e:
        logger.error(f"{sid}: gold plan could not be derived: {e.msg}")
    return status


def write_pipeline_outputs(result: PipelineResult, out_dir: Path | str, gantt: bool = True) -> list[Path]:
    """Every intermediate of a run, plus its metrics, under ``out_dir``."""
    out_dir = Path(out_dir)
    written: list[Path] = []

    def put(rel: str, text: str) -> None:
        path = out_dir / rel
        write_text_atomic(path, text)
        written.append(path)

    for p, sheet in zip(result.programs, result.route_sheets):
        put(f"programs/{p.job_id}.prog.json", serialize(p))
        put(f"route_sheets/{p.job_id}.sheet.json", dump_canonical(sheet))
    put("constraints.json", dump_canonical(result.constraints.to_doc()))
    if result.trace is not None:
        put("trace.json", dump_canonical(result.trace.to_doc()))
    if result.solver_input is not None:
        put("solver_input.json", dump_canonical(result.solver_input.to_doc()))
    if result.schedule is not None:
        put("schedule.json", dump_canonical(result.schedule.to_doc()))
    if result.plan is not None:
        put("plan.json", dump_canonical(result.plan.to_doc()))
        if gantt:
            written.append(emit_gantt(result.plan, out_dir / "gantt.svg"))
    if result.gold_plan is not None:
        put("gold_plan.json", dump_canonical(result.gold_plan.to_doc()))
    put("run_log.json", dump_canonical([dataclasses.asdict(r) for r in result.run_log]))
    put("issues.json", dump_canonical(result.issues))
    if result.metrics is not None:
        written += write_metrics(MetricReport([result.metrics]), out_dir)
    return written
