"""
Scenario synthesis from classical JSP benchmark instances.

An instance only carries machine ids and durations. Synthesis maps
machines onto devices from the vocabulary bank, names materials, products
and intermediate stages, builds the scenario DSL and the gold programs,
and renders every job as a procedure document (natural language for even
job positions, route-sheet rows for odd ones).
"""

import dataclasses
import graphlib
import json
import logging
import re
import typing as t
from importlib import resources
from pathlib import Path

from .abstraction import (
    NATURAL_LANGUAGE,
    ProcedureDoc,
    load_procedure,
    procedure_to_doc,
    program_to_route_sheet,
    route_sheet_to_doc,
)
from .adaptation import PriorKnowledge
from .constraint_gen import ConstraintSet, SolverInput, to_solver_input, verify_and_generate
from .dsl_codec import read_dsl, read_program, serialize
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
from .shop_common import SCHEMA_VERSION, ShopError, dump_canonical, read_json, write_text_atomic
from .shop_numeric_compat import make_rng, rng_integers, rng_permutation
from .text_utils import field_words, slug
from .vocabulary import device_params, final_name, load_vocabulary_bank, material_properties, wip_name

logger = logging.getLogger(__name__)

_PACKAGE = __name__.rsplit(".", 1)[0]
_INT_RE = re.compile(r"-?\d+")

# Taillard's Lehmer generator
_TA_A, _TA_B, _TA_C, _TA_M = 16807, 127773, 2836, 2**31 - 1

Role = tuple[int, int]


class FormatError(ShopError):
    code = "format_error"


@dataclasses.dataclass(frozen=True)
class BenchmarkInstance:
    name: str
    n_jobs: int
    n_machines: int
    # per job: ordered (machine id, duration)
    matrix: tuple[tuple[tuple[int, int], ...], ...]

    def problems(self) -> list[str]:
        out = []
        for j, row in enumerate(self.matrix):
            if not row:
                out.append(f"job {j} has no operations")
            for m, d in row:
                if not 0 <= m < self.n_machines:
                    out.append(f"job {j} visits machine {m} outside 0..{self.n_machines - 1}")
                if d <= 0:
                    out.append(f"job {j} has non-positive duration {d}")
        return out

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "name": self.name,
            "n_jobs": self.n_jobs,
            "n_machines": self.n_machines,
            "matrix": [[[m, d] for m, d in row] for row in self.matrix],
        }


def parse_benchmark(text: str, name: str = "instance") -> BenchmarkInstance:
    """Standard JSP text: "n_jobs n_machines", then one line of machine/duration pairs per job.

    Lines starting with '#' are comments; blank lines and extra whitespace are ignored.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        for tok in tokens:
            if not _INT_RE.fullmatch(tok):
                raise FormatError(f"line {lineno}: not an integer: {tok!r}", line=lineno)
        lines.append((lineno, [int(tok) for tok in tokens]))
    if not lines:
        raise FormatError("empty benchmark file", line=0)
    header_line, header = lines[0]
    if len(header) != 2 or header[0] <= 0 or header[1] <= 0:
        raise FormatError(f"line {header_line}: header must be 'n_jobs n_machines'", line=header_line)
    n_jobs, n_machines = header
    rows = lines[1:]
    if len(rows) != n_jobs:
        last = rows[-1][0] if rows else header_line
        raise FormatError(f"line {last}: expected {n_jobs} job lines, found {len(rows)}", line=last)
    matrix = []
    for lineno, values in rows:
        if not values or len(values) % 2:
            raise FormatError(f"line {lineno}: job line needs machine/duration pairs", line=lineno)
        matrix.append(tuple((values[i], values[i + 1]) for i in range(0, len(values), 2)))
    inst = BenchmarkInstance(name, n_jobs, n_machines, tuple(matrix))
    bad = inst.problems()
    if bad:
        raise FormatError(f"{name}: {bad[0]}", line=rows[0][0], problems=bad)
    return inst


def load_benchmark(path: Path | str) -> BenchmarkInstance:
    path = Path(path)
    name = path.name[: -len(".jsp")] if path.name.endswith(".jsp") else path.stem
    return parse_benchmark(path.read_text(encoding="utf-8"), name)


def _taillard_unif(seed: list[int], low: int, high: int) -> int:
    k = seed[0] // _TA_B
    seed[0] = _TA_A * (seed[0] % _TA_B) - k * _TA_C
    if seed[0] < 0:
        seed[0] += _TA_M
    return low + int(seed[0] / _TA_M * (high - low + 1))


def taillard_instance(name: str, n_jobs: int, n_machines: int, time_seed: int, machine_seed: int) -> BenchmarkInstance:
    """Instance from Taillard's generator: durations in 1..99, each job visits every machine once."""
    ts, ms = [time_seed], [machine_seed]
    durations = [[_taillard_unif(ts, 1, 99) for _ in range(n_machines)] for _ in range(n_jobs)]
    order = []
    for _ in range(n_jobs):
        row = list(range(n_machines))
        for j in range(n_machines):
            k = _taillard_unif(ms, j, n_machines - 1)
            row[j], row[k] = row[k], row[j]
        order.append(row)
    matrix = tuple(tuple((order[i][j], durations[i][j]) for j in range(n_machines)) for i in range(n_jobs))
    return BenchmarkInstance(name, n_jobs, n_machines, matrix)


def _manifest() -> list[dict[str, t.Any]]:
    text = resources.files(_PACKAGE).joinpath("data", "benchmarks", "manifest.json").read_text(encoding="utf-8")
    return json.loads(text)["instances"]


def bundled_instances() -> list[str]:
    return [entry["name"] for entry in _manifest()]


def load_bundled(name: str) -> BenchmarkInstance:
    for entry in _manifest():
        if entry["name"] != name:
            continue
        if "file" in entry:
            text = resources.files(_PACKAGE).joinpath("data", "benchmarks", entry["file"]).read_text(encoding="utf-8")
            return parse_benchmark(text, name)
        return taillard_instance(name, entry["n_jobs"], entry["n_machines"], entry["time_seed"], entry["machine_seed"])
    raise ShopError(f"no bundled instance named {name}", name=name, available=bundled_instances())


@dataclasses.dataclass(frozen=True)
class DependencySet:
    edges: tuple[tuple[Role, Role], ...] = ()
    dropped: tuple[tuple[Role, Role], ...] = ()

    def cross_job(self) -> list[tuple[Role, Role]]:
        return [(a, b) for a, b in self.edges if a[0] != b[0]]

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "edges": [[list(a), list(b)] for a, b in self.edges],
            "dropped": [[list(a), list(b)] for a, b in self.dropped],
        }


def eliminate_cycles(edges: t.Iterable[tuple[Role, Role]]) -> DependencySet:
    """Keep edges in order; drop any edge that repeats or closes a cycle."""
    kept: list[tuple[Role, Role]] = []
    dropped: list[tuple[Role, Role]] = []
    graph: dict[Role, set[Role]] = {}
    for a, b in edges:
        if a == b or (a, b) in kept:
            dropped.append((a, b))
            continue
        graph.setdefault(b, set()).add(a)
        try:
            graphlib.TopologicalSorter(graph).prepare()
        except graphlib.CycleError:
            graph[b].discard(a)
            dropped.append((a, b))
            logger.debug(f"dropped dependency {a} -> {b}: closes a cycle")
            continue
        kept.append((a, b))
    return DependencySet(tuple(kept), tuple(dropped))


def build_dependency_superset(
    inst: BenchmarkInstance,
    device_names: t.Sequence[str],
    seed: int = 0,
    extra_edges: int | None = None,
) -> tuple[dict[int, str], DependencySet]:
    """Seeded machine -> device bijection and an acyclic dependency superset of the job chains."""
    if len(device_names) < inst.n_machines:
        raise ShopError(
            f"{len(device_names)} devices for {inst.n_machines} machines",
            devices=len(device_names),
            machines=inst.n_machines,
        )
    rng = make_rng(seed)
    perm = rng_permutation(rng, len(device_names))
    mapping = {m: device_names[perm[m]] for m in range(inst.n_machines)}

    edges: list[tuple[Role, Role]] = []
    for j, row in enumerate(inst.matrix):
        edges += [((j, k), (j, k + 1)) for k in range(len(row) - 1)]
    n_extra = inst.n_jobs if extra_edges is None else extra_edges
    if inst.n_jobs > 1:
        for _ in range(n_extra):
            j1 = rng_integers(rng, 0, inst.n_jobs - 1)
            j2 = rng_integers(rng, 0, inst.n_jobs - 2)
            j2 = j2 + 1 if j2 >= j1 else j2
            k1 = rng_integers(rng, 0, len(inst.matrix[j1]) - 1)
            k2 = rng_integers(rng, 0, len(inst.matrix[j2]) - 1)
            edges.append(((j1, k1), (j2, k2)))
    deps = eliminate_cycles(edges)
    logger.info(f"{inst.name}: {len(deps.edges)} dependency edges, {len(deps.dropped)} dropped")
    return mapping, deps


NL_TEMPLATES = (
    "{Verb} the {inputs} on the {machine} for {duration} minutes{with_params}{producing}.",
    "On the {machine}, {verb} the {inputs} into the {outputs} for {duration} minutes{with_params}.",
    "Using the {machine}, {verb} the {inputs} for {duration} minutes{with_params}, yielding the {outputs}.",
    "The {inputs} is {past} on the {machine} for {duration} minutes to produce the {outputs}{setting_params}.",
    "Take the {inputs} to the {machine} and {verb} it for {duration} minutes{with_params}, making the {outputs}.",
    "Step: {verb} the {inputs} with the {machine} over {duration} minutes{comma_params}, output: {outputs}.",
)


def _join(items: t.Sequence[str]) -> str:
    return " and the ".join(items)


def render_step_sentence(
    template: int,
    verb: str,
    past: str,
    machine: str,
    duration: int,
    params: t.Mapping[str, t.Any],
    inputs: t.Sequence[str] = (),
    outputs: t.Sequence[str] = (),
) -> str:
    """One procedure sentence from a template; inputs default to "workpiece"."""
    plist = [f"{field_words(k)} {v}" for k, v in sorted(params.items())]
    outs = _join(outputs) if outputs else "workpiece"
    return NL_TEMPLATES[template].format(
        Verb=verb[:1].upper() + verb[1:],
        verb=verb,
        past=past,
        machine=machine,
        duration=duration,
        inputs=_join(inputs) if inputs else "workpiece",
        outputs=outs,
        with_params=" with " + " and ".join(plist) if plist else "",
        comma_params=", " + ", ".join(plist) if plist else "",
        setting_params=", setting " + " and ".join(f"{field_words(k)} to {v}" for k, v in sorted(params.items()))
        if plist
        else "",
        producing=f", producing the {outs}" if outputs else "",
    )


@dataclasses.dataclass
class Scenario:
    scenario_id: str
    instance: BenchmarkInstance
    dsl: DslDefinition
    corpus: list[ProcedureDoc]
    programs: list[DualProgram]
    route_sheets: list[dict[str, t.Any]]
    constraints: ConstraintSet
    solver_input: SolverInput
    mapping: dict[int, str]
    dependencies: DependencySet
    prior: PriorKnowledge


def _sample_value(spec: ParamSpec, rng: t.Any) -> t.Any:
    if spec.values:
        return spec.values[rng_integers(rng, 0, len(spec.values) - 1)]
    assert spec.interval is not None
    lo, hi = spec.interval
    return rng_integers(rng, int(lo), int(hi))


def _numbered(names: t.Sequence[str], i: int) -> str:
    base = names[i % len(names)]
    return base if i < len(names) else f"{base} {i // len(names) + 1}"


def synthesize_scenario(
    inst: BenchmarkInstance,
    seed: int = 0,
    extra_edges: int | None = None,
    bank: dict[str, t.Any] | None = None,
) -> Scenario:
    """Scenario DSL, corpus and gold artifacts for one benchmark instance."""
    bank = bank or load_vocabulary_bank()
    devices = {dev["device"]: dev for dev in bank["devices"]}
    mapping, deps = build_dependency_superset(inst, sorted(devices), seed, extra_edges)
    rng = make_rng(seed + 1)
    products = [bank["products"][i] for i in rng_permutation(rng, len(bank["products"]))]
    materials = bank["materials"]
    job_ids = [f"J{j + 1:02d}" for j in range(inst.n_jobs)]

    flow_defs: dict[str, FlowUnitDef] = {}
    op_defs: dict[str, OperationDef] = {}
    programs: list[DualProgram] = []
    outputs_of: dict[Role, str] = {}
    # names first: cross-job interfaces refer to other jobs' outputs
    job_flows = []
    for j, row in enumerate(inst.matrix):
        product = _numbered(products, j)
        material = materials[rng_integers(rng, 0, len(materials) - 1)]
        props = material_properties(material)
        flow_defs.setdefault(material["name"], FlowUnitDef(material["name"], properties=props))
        names = [material["name"]]
        for k in range(len(row)):
            name = final_name(product) if k == len(row) - 1 else wip_name(product, _numbered(bank["stages"], k))
            flow_defs[name] = FlowUnitDef(name)
            outputs_of[(j, k)] = name
            names.append(name)
        job_flows.append(({p: _sample_value(spec, rng) for p, spec in props.items()}, names))

    extra_inputs: dict[Role, list[str]] = {}
    for a, b in deps.cross_job():
        extra_inputs.setdefault(b, []).append(outputs_of[a])

    job_sentences = []
    for j, row in enumerate(inst.matrix):
        raw_props, names = job_flows[j]
        steps, sentences = [], []
        for k, (m, duration) in enumerate(row):
            dev = devices[mapping[m]]
            params = device_params(dev)
            op_id = f"{dev['operation']}_{job_ids[j]}_s{k}"
            ctx = ExecContext(slug(dev["device"]), duration, params)
            pre, post = (FlowRequirement.of(names[k]),), (FlowRequirement.of(names[k + 1]),)
            interfaces = [Interface(pre, post, (ctx,))]
            for extra in sorted(extra_inputs.get((j, k), [])):
                interfaces.append(Interface(pre + (FlowRequirement.of(extra),), post, (ctx,)))
            op_defs[op_id] = OperationDef(
                identifier=op_id,
                name=dev["operation"],
                aliases=frozenset(dev.get("aliases", ())),
                interfaces=tuple(interfaces),
            )
            bound = {p: _sample_value(spec, rng) for p, spec in params.items()}
            steps.append(OperationInstance(k, op_id, 0, 0, bound))
            shown = names[k]
            if k == 0 and raw_props:
                shown += " (" + ", ".join(f"{field_words(p)} {v}" for p, v in sorted(raw_props.items())) + ")"
            sentences.append(
                render_step_sentence(
                    rng_integers(rng, 0, len(NL_TEMPLATES) - 1),
                    dev["verb"],
                    dev["past"],
                    dev["device"],
                    duration,
                    bound,
                    inputs=[shown],
                    outputs=[names[k + 1]],
                )
            )
        units = [FlowUnitInstance("u0", names[0], frozenset(), frozenset({0}), dict(raw_props), raw_material=True)]
        for k in range(len(row)):
            last = k == len(row) - 1
            units.append(
                FlowUnitInstance(
                    f"u{k + 1}",
                    names[k + 1],
                    frozenset({k}),
                    frozenset() if last else frozenset({k + 1}),
                    final_product=last,
                )
            )
        programs.append(DualProgram(job_ids[j], tuple(steps), tuple(units)))
        job_sentences.append(tuple(sentences))

    dsl = _partial_dsl(op_defs, flow_defs, mapping)
    route_sheets = [program_to_route_sheet(p, dsl) for p in programs]
    # even job positions get prose, odd ones route-sheet rows
    corpus = [
        ProcedureDoc(p.job_id, NATURAL_LANGUAGE, sentences=job_sentences[j]) if j % 2 == 0 else route_sheet_to_doc(route_sheets[j])
        for j, p in enumerate(programs)
    ]
    constraints, _ = verify_and_generate(programs, dsl)
    solver_input = to_solver_input(constraints, programs, dsl)
    logger.info(f"synthesized scenario {inst.name}: {len(programs)} jobs, {len(op_defs)} operations")
    return Scenario(
        scenario_id=inst.name,
        instance=inst,
        dsl=dsl,
        corpus=corpus,
        programs=programs,
        route_sheets=route_sheets,
        constraints=constraints,
        solver_input=solver_input,
        mapping=mapping,
        dependencies=deps,
        prior=PriorKnowledge.from_vocabulary_bank(bank),
    )


def _partial_dsl(
    op_defs: dict[str, OperationDef], flow_defs: dict[str, FlowUnitDef], mapping: dict[int, str]
) -> DslDefinition:
    catalog = tuple(MachineDef(slug(name), name, m) for m, name in sorted(mapping.items()))
    return DslDefinition(dict(sorted(op_defs.items())), dict(sorted(flow_defs.items())), FlowGrammar.base(), catalog)


def write_scenario(scn: Scenario, root: Path | str) -> list[Path]:
    """Scenario directory: scenario.dsl.json, prior.json, corpus/ and gold/."""
    root = Path(root)
    written = []

    def put(rel: str, text: str) -> None:
        path = root / rel
        write_text_atomic(path, text)
        written.append(path)

    put("scenario.dsl.json", serialize(scn.dsl))
    put("prior.json", dump_canonical(scn.prior.to_doc()))
    for doc in scn.corpus:
        if doc.kind == NATURAL_LANGUAGE:
            put(f"corpus/{doc.doc_id}.txt", "\n".join(doc.sentences) + "\n")
        else:
            put(f"corpus/{doc.doc_id}.proc.json", dump_canonical(procedure_to_doc(doc)))
    for p, sheet in zip(scn.programs, scn.route_sheets):
        put(f"gold/programs/{p.job_id}.prog.json", serialize(p))
        put(f"gold/route_sheets/{p.job_id}.sheet.json", dump_canonical(sheet))
    put("gold/constraints.json", dump_canonical(scn.constraints.to_doc()))
    put("gold/solver_input.json", dump_canonical(scn.solver_input.to_doc()))
    put(
        "gold/scenario.json",
        dump_canonical(
            {
                "schema_version": SCHEMA_VERSION,
                "scenario_id": scn.scenario_id,
                "instance": scn.instance.to_doc(),
                "mapping": [{"machine": m, "device": name} for m, name in sorted(scn.mapping.items())],
                "dependencies": scn.dependencies.to_doc(),
            }
        ),
    )
    return written


def load_corpus(corpus_dir: Path | str) -> list[ProcedureDoc]:
    """Every ``*.txt`` and ``*.proc.json`` document, ordered by doc id."""
    corpus_dir = Path(corpus_dir)
    paths = [p for p in corpus_dir.iterdir() if p.name.endswith((".txt", ".proc.json"))]
    return sorted((load_procedure(p) for p in paths), key=lambda d: d.doc_id)


@dataclasses.dataclass
class ScenarioFiles:
    """A scenario read back from disk."""

    root: Path
    scenario_id: str
    dsl: DslDefinition
    corpus: list[ProcedureDoc]
    programs: list[DualProgram]
    route_sheets: list[dict[str, t.Any]]
    constraints: ConstraintSet
    solver_input: SolverInput
    prior: PriorKnowledge


def read_scenario(root: Path | str) -> ScenarioFiles:
    root = Path(root)
    gold = root / "gold"
    programs = [read_program(p) for p in sorted((gold / "programs").glob("*.prog.json"))]
    meta = read_json(gold / "scenario.json")
    sheets = [read_json(gold / "route_sheets" / f"{p.job_id}.sheet.json") for p in programs]
    logger.debug(f"read scenario {meta['scenario_id']} with {len(programs)} jobs")
    return ScenarioFiles(
        root=root,
        scenario_id=meta["scenario_id"],
        dsl=read_dsl(root / "scenario.dsl.json"),
        corpus=load_corpus(root / "corpus"),
        programs=programs,
        route_sheets=sheets,
        constraints=ConstraintSet.from_doc(read_json(gold / "constraints.json")),
        solver_input=SolverInput.from_doc(read_json(gold / "solver_input.json")),
        prior=PriorKnowledge.from_doc(read_json(root / "prior.json")),
    )
