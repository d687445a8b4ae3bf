"""
DSL adaptation: induce a scenario-specific DslDefinition from a corpus of
procedure documents.

Operation interfaces and flow-unit phases are clustered with collapsed
Gibbs DPMMs, parameter and property domains come from a 1-D DP over
values plus a GP for continuous spread, and the flow grammar comes from
MAP-EM over fan-pattern hypotheses.
"""

import dataclasses
import logging
import math
import typing as t

import numpy as np
from scipy import linalg

from .abstraction import INPUT, OUTPUT, ExtractionVocabulary, ExtractorAdapter, ProcedureDoc, RuleBasedExtractor, extract_actions
from .dpmm import CategoricalDPMM, GaussianDP1D, SamplerResult
from .dsl_core import (
    CONTINUOUS,
    DISCRETE,
    MIXED,
    DslDefinition,
    ExecContext,
    FlowGrammar,
    FlowRequirement,
    FlowUnitDef,
    Interface,
    MachineDef,
    OperationDef,
    ParamSpec,
)
from .flow_syntax import EmState, ProcedureShape, UnitShape, induce_flow_grammar
from .shop_common import ShopError, canonical_number, jsonable
from .text_utils import name_similarity, slug, stem
from .vocabulary import device_params, final_name, material_properties, wip_name

logger = logging.getLogger(__name__)

ResolveFlow = t.Callable[[str, t.Mapping[str, t.Any]], str]


class NotConverged(ShopError):
    code = "not_converged"


@dataclasses.dataclass(frozen=True)
class AdaptationConfig:
    alpha: float = 1.0
    beta: float = 0.5
    # None: 10% of the normalized observation range
    length_scale: float | None = None
    # None: empirical variance of the observed values
    signal_variance: float | None = None
    max_sweeps: int = 500
    max_em_iters: int = 100
    burn_in: int = 20
    window: int = 10
    conv_tol: float = 1e-6
    tau_alias: float = 0.8
    support_threshold: float = 0.05
    max_fan: int = 4
    filter_width: int = 3
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.alpha <= 0:
            out.append("alpha must be > 0")
        if self.beta <= 0:
            out.append("beta must be > 0")
        if self.length_scale is not None and self.length_scale <= 0:
            out.append("length_scale must be > 0")
        if self.signal_variance is not None and self.signal_variance <= 0:
            out.append("signal_variance must be > 0")
        if self.conv_tol <= 0:
            out.append("conv_tol must be > 0")
        return out


@dataclasses.dataclass(frozen=True)
class PriorKnowledge:
    """Weighted operation and flow vocabularies plus lexicons for the extractor."""

    op_taxonomy: dict[str, float] = dataclasses.field(default_factory=dict)
    flow_taxonomy: dict[str, float] = dataclasses.field(default_factory=dict)
    op_aliases: dict[str, frozenset[str]] = dataclasses.field(default_factory=dict)
    flow_synonyms: tuple[frozenset[str], ...] = ()
    machines: tuple[str, ...] = ()
    params: tuple[str, ...] = ()
    properties: tuple[str, ...] = ()

    def problems(self) -> list[str]:
        bad = [n for n, w in {**self.op_taxonomy, **self.flow_taxonomy}.items() if w < 0]
        return [f"negative prior weight for {n}" for n in sorted(bad)]

    def vocabulary(self) -> ExtractionVocabulary:
        flows = set(self.flow_taxonomy)
        for group in self.flow_synonyms:
            flows |= group
        return ExtractionVocabulary(
            operations={name: self.op_aliases.get(name, frozenset()) for name in self.op_taxonomy},
            machines=tuple(sorted(self.machines)),
            flows=tuple(sorted(flows)),
            params=tuple(sorted(self.params)),
            properties=tuple(sorted(self.properties)),
        )

    def flow_weight(self, name: str) -> float:
        return self.flow_taxonomy.get(name, 0.0)

    def synonyms(self, a: str, b: str) -> bool:
        return any(a in g and b in g for g in self.flow_synonyms)

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "kind": "prior",
            "op_taxonomy": dict(sorted(self.op_taxonomy.items())),
            "flow_taxonomy": dict(sorted(self.flow_taxonomy.items())),
            "op_aliases": {k: sorted(v) for k, v in sorted(self.op_aliases.items())},
            "flow_synonyms": sorted(sorted(g) for g in self.flow_synonyms),
            "machines": sorted(self.machines),
            "params": sorted(self.params),
            "properties": sorted(self.properties),
        }

    @classmethod
    def from_doc(cls, doc: dict[str, t.Any]) -> "PriorKnowledge":
        return cls(
            op_taxonomy={k: float(v) for k, v in doc.get("op_taxonomy", {}).items()},
            flow_taxonomy={k: float(v) for k, v in doc.get("flow_taxonomy", {}).items()},
            op_aliases={k: frozenset(v) for k, v in doc.get("op_aliases", {}).items()},
            flow_synonyms=tuple(frozenset(g) for g in doc.get("flow_synonyms", [])),
            machines=tuple(doc.get("machines", [])),
            params=tuple(doc.get("params", [])),
            properties=tuple(doc.get("properties", [])),
        )

    @classmethod
    def from_vocabulary_bank(cls, bank: dict[str, t.Any]) -> "PriorKnowledge":
        """Prior over everything the bank can name, not only what a scenario uses."""
        op_taxonomy: dict[str, float] = {}
        op_aliases: dict[str, set[str]] = {}
        params: set[str] = set()
        for dev in bank.get("devices", []):
            op_taxonomy[dev["operation"]] = 1.0
            op_aliases.setdefault(dev["operation"], set()).update(dev.get("aliases", []))
            params.update(device_params(dev))
        flows: dict[str, float] = {}
        properties: set[str] = set()
        for mat in bank.get("materials", []):
            flows[mat["name"]] = 3.0
            properties.update(material_properties(mat))
        for product in bank.get("products", []):
            flows[final_name(product)] = 2.0
            for stage in bank.get("stages", []):
                flows.setdefault(wip_name(product, stage), 1.0)
        return cls(
            op_taxonomy=op_taxonomy,
            flow_taxonomy=flows,
            op_aliases={k: frozenset(v) for k, v in op_aliases.items()},
            machines=tuple(sorted(dev["device"] for dev in bank.get("devices", []))),
            params=tuple(sorted(params)),
            properties=tuple(sorted(properties)),
        )


@dataclasses.dataclass(frozen=True)
class FlowObservation:
    name: str
    props: dict[str, t.Any] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class StepObservation:
    doc_id: str
    step_index: int
    op_name: str
    machine: str | None
    duration: int | None
    params: dict[str, t.Any]
    inputs: tuple[FlowObservation, ...] = ()
    outputs: tuple[FlowObservation, ...] = ()


@dataclasses.dataclass(frozen=True)
class ProcedureObservation:
    doc_id: str
    steps: tuple[StepObservation, ...] = ()


@dataclasses.dataclass
class ObservedUnit:
    """A flow unit reconstructed from names: outputs link to later inputs."""

    doc_id: str
    name: str
    props: dict[str, t.Any]
    producers: list[int]
    consumers: list[int]

    def schema(self) -> tuple[str, ...]:
        return tuple(sorted(self.props))

    def shape(self) -> UnitShape:
        anchor = min(self.consumers) if self.consumers else max(self.producers, default=0)
        return UnitShape(max(1, len(self.producers)), max(1, len(self.consumers)), anchor)


def scan_corpus(
    corpus: t.Sequence[ProcedureDoc],
    prior: PriorKnowledge,
    adapter: ExtractorAdapter | None = None,
    issues: list[ShopError] | None = None,
) -> list[ProcedureObservation]:
    """Step observations per document through an extractor built from the prior."""
    vocab = prior.vocabulary()
    adapter = adapter or RuleBasedExtractor(vocab)
    verbs = vocab.verb_stems()
    issues = issues if issues is not None else []
    out = []
    for doc in corpus:
        steps = []
        for action in extract_actions(doc, adapter, issues):
            op_name = verbs.get(stem(action.verb_text), action.verb_text)
            mentions = action.flow_mentions()
            steps.append(
                StepObservation(
                    doc_id=doc.doc_id,
                    step_index=len(steps),
                    op_name=op_name,
                    machine=action.machine_text,
                    duration=action.duration,
                    params=action.params,
                    inputs=tuple(FlowObservation(m.name, dict(m.props)) for m in mentions if m.role == INPUT),
                    outputs=tuple(FlowObservation(m.name, dict(m.props)) for m in mentions if m.role == OUTPUT),
                )
            )
        out.append(ProcedureObservation(doc.doc_id, tuple(steps)))
    return out


def _observations(
    corpus: t.Sequence[ProcedureDoc | ProcedureObservation], prior: PriorKnowledge
) -> list[ProcedureObservation]:
    docs = [c for c in corpus if isinstance(c, ProcedureDoc)]
    scanned = iter(scan_corpus(docs, prior)) if docs else iter(())
    return [next(scanned) if isinstance(c, ProcedureDoc) else c for c in corpus]


def procedure_units(proc: ProcedureObservation) -> list[ObservedUnit]:
    """Link outputs to later inputs by name.

    Outputs of a name still unconsumed join one unit (fan-in); an input
    naming an already consumed unit adds a consumer (fan-out); anything
    else is a raw material.
    """
    units: list[ObservedUnit] = []
    live: dict[str, ObservedUnit] = {}
    spent: dict[str, ObservedUnit] = {}
    for step in proc.steps:
        for f in step.inputs:
            u = live.pop(f.name, None) or spent.get(f.name)
            if u is None:
                u = ObservedUnit(proc.doc_id, f.name, dict(f.props), [], [])
                units.append(u)
            u.props.update(f.props)
            u.consumers.append(step.step_index)
            spent[f.name] = u
        for f in step.outputs:
            u = live.get(f.name)
            if u is None:
                u = ObservedUnit(proc.doc_id, f.name, dict(f.props), [], [])
                units.append(u)
                live[f.name] = u
            u.props.update(f.props)
            u.producers.append(step.step_index)
    return units


def _decimals(noise: float) -> int:
    return max(0, -int(math.floor(math.log10(noise))))


def _round(value: float, decimals: int) -> float | int:
    return canonical_number(round(value, decimals)) if decimals else int(round(value))


def gp_interval(values: t.Sequence[float], cfg: AdaptationConfig, noise: float) -> tuple[float, float]:
    """Posterior mean +- 2 sd of a GP over the normalized observation order,
    widened to cover every observation."""
    y = np.asarray(values, dtype=float)
    n = len(y)
    pos = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    ell = cfg.length_scale or 0.1
    var = cfg.signal_variance or max(float(np.var(y)), 1e-12)
    mean = float(np.mean(y))
    diff = pos[:, None] - pos[None, :]
    k = var * np.exp(-0.5 * (diff / ell) ** 2)
    factor = linalg.cho_factor(k + (noise**2 + 1e-9) * np.eye(n), lower=True)
    mu = mean + k @ linalg.cho_solve(factor, y - mean)
    cov = k - k @ linalg.cho_solve(factor, k)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    lo = min(float(np.min(mu - 2 * sd)), float(np.min(y)))
    hi = max(float(np.max(mu + 2 * sd)), float(np.max(y)))
    return lo, hi


def induce_param_spec(
    values: t.Sequence[t.Any], cfg: AdaptationConfig, seed: int = 0
) -> tuple[ParamSpec, SamplerResult | None]:
    """Value domain from observations: DP atoms give the discrete part, the GP the spread."""
    numeric = [v for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
    if len(numeric) != len(values) or not values:
        return ParamSpec(DISCRETE, values=tuple(values)), None
    x = [float(v) for v in numeric]
    spread = max(x) - min(x)
    if len(x) == 1 or spread == 0:
        return ParamSpec(DISCRETE, values=tuple(numeric)), None
    noise = max(0.02 * spread, 1e-3)
    dp = GaussianDP1D(x, noise, alpha=cfg.alpha, seed=seed)
    result = dp.run(cfg.max_sweeps, cfg.burn_in, cfg.window)
    atoms = dp.atoms(result.assignments)
    d = _decimals(noise)
    if len(atoms) > 8 or len(atoms) > len(x) / 2:
        lo, hi = gp_interval(x, cfg, noise)
        return ParamSpec(CONTINUOUS, interval=(_floor(lo, d), _ceil(hi, d))), result
    if all(sd == 0 for _, sd, _ in atoms):
        return ParamSpec(DISCRETE, values=tuple(numeric)), result
    lo, hi = gp_interval(x, cfg, noise)
    return ParamSpec(MIXED, values=tuple(_round(m, d) for m, _, _ in atoms), interval=(_floor(lo, d), _ceil(hi, d))), result


def _floor(v: float, d: int) -> float | int:
    return _round(math.floor(v * 10**d) / 10**d, d)


def _ceil(v: float, d: int) -> float | int:
    return _round(math.ceil(v * 10**d) / 10**d, d)


@dataclasses.dataclass
class OperationSemantics:
    defs: dict[str, OperationDef]
    stats: dict[str, dict[str, t.Any]]
    converged: bool
    uncovered: list[str]


def _identity_flow(name: str, props: t.Mapping[str, t.Any]) -> str:
    return name


def _positional_slots(rows: list[list[str]]) -> tuple[FlowRequirement, ...]:
    width = max((len(r) for r in rows), default=0)
    return tuple(FlowRequirement(frozenset(r[i] for r in rows if i < len(r))) for i in range(width))


def _param_specs(
    obs: list[StepObservation], cfg: AdaptationConfig, seed: int
) -> tuple[dict[str, ParamSpec], dict[str, SamplerResult]]:
    fields = sorted({name for o in obs for name in o.params})
    specs, traces = {}, {}
    for j, name in enumerate(fields):
        spec, result = induce_param_spec([o.params[name] for o in obs if name in o.params], cfg, seed + j)
        specs[name] = spec
        if result is not None:
            traces[name] = result
    return specs, traces


def induce_operation_semantics(
    corpus: t.Sequence[ProcedureDoc | ProcedureObservation],
    prior: PriorKnowledge,
    cfg: AdaptationConfig | None = None,
    resolve_flow: ResolveFlow | None = None,
) -> OperationSemantics:
    """Interfaces per operation name by DPMM clustering of step observations."""
    cfg = cfg or AdaptationConfig()
    resolve_flow = resolve_flow or _identity_flow
    by_op: dict[str, list[StepObservation]] = {}
    for proc in _observations(corpus, prior):
        for step in proc.steps:
            by_op.setdefault(step.op_name, []).append(step)

    defs: dict[str, OperationDef] = {}
    stats: dict[str, dict[str, t.Any]] = {}
    uncovered: list[str] = []
    converged = True
    for k, (op_name, obs) in enumerate(sorted(by_op.items())):
        features = [(len(o.inputs), len(o.outputs), o.machine or "", tuple(sorted(o.params))) for o in obs]
        result = CategoricalDPMM(features, alpha=cfg.alpha, beta=cfg.beta, seed=cfg.seed + k).run(
            cfg.max_sweeps, cfg.burn_in, cfg.window
        )
        converged = converged and result.converged
        interfaces = []
        param_traces: dict[str, list[float]] = {}
        for c, members in enumerate(result.clusters()):
            group = [obs[i] for i in members]
            specs, traces = _param_specs(group, cfg, cfg.seed + 1000 * (k + 1) + 10 * c)
            for name, tr in traces.items():
                converged = converged and tr.converged
                param_traces[f"{c}/{name}"] = tr.log_likelihood
            contexts = sorted({(o.machine, o.duration) for o in group if o.machine and o.duration and o.duration > 0})
            if not contexts:
                uncovered.append(f"{op_name}: interface without machine or duration")
                continue
            interfaces.append(
                Interface(
                    preconditions=_positional_slots([sorted(resolve_flow(f.name, f.props) for f in o.inputs) for o in group]),
                    postconditions=_positional_slots(
                        [sorted(resolve_flow(f.name, f.props) for f in o.outputs) for o in group]
                    ),
                    exec_contexts=tuple(ExecContext(slug(m), int(d), dict(specs)) for m, d in contexts),
                )
            )
        stats[op_name] = {
            "observations": len(obs),
            "clusters": result.n_clusters,
            "assignments": result.assignments,
            "sweeps": result.sweeps,
            "converged": result.converged,
            "log_likelihood": result.log_likelihood,
            "param_log_likelihood": param_traces,
        }
        if interfaces:
            defs[op_name] = OperationDef(
                identifier=op_name,
                name=op_name,
                aliases=prior.op_aliases.get(op_name, frozenset()),
                interfaces=tuple(interfaces),
            )
        else:
            uncovered.append(op_name)
        logger.info(f"operation {op_name}: {len(obs)} observations, {result.n_clusters} interface clusters")
    return OperationSemantics(defs, stats, converged, uncovered)


def _merge_contexts(contexts: t.Iterable[ExecContext]) -> tuple[ExecContext, ...]:
    merged: dict[tuple[str, int], dict[str, ParamSpec]] = {}
    for ctx in contexts:
        params = merged.setdefault((ctx.machine, ctx.duration), {})
        for name, spec in ctx.params.items():
            params[name] = params[name].union(spec) if name in params else spec
    return tuple(ExecContext(m, d, dict(sorted(p.items()))) for (m, d), p in sorted(merged.items()))


def _widen_params(contexts: tuple[ExecContext, ...]) -> tuple[ExecContext, ...]:
    specs: dict[str, ParamSpec] = {}
    for ctx in contexts:
        for name, spec in ctx.params.items():
            specs[name] = specs[name].union(spec) if name in specs else spec
    return tuple(ExecContext(c.machine, c.duration, {n: specs[n] for n in sorted(c.params)}) for c in contexts)


def _shape_key(iface: Interface) -> tuple[int, int, tuple[str, ...]]:
    pre, post, fields = iface.shape()
    return (pre, post, tuple(sorted(fields)))


def unify_interfaces(defs: t.Mapping[str, OperationDef]) -> dict[str, OperationDef]:
    """Merge interfaces with equal slot counts and parameter field names.

    All interfaces of one shape merge at once, so the result does not
    depend on input order and a second pass changes nothing.
    """
    out = {}
    for op_id in sorted(defs):
        op = defs[op_id]
        groups: dict[tuple[int, int, tuple[str, ...]], list[Interface]] = {}
        for iface in op.interfaces:
            groups.setdefault(_shape_key(iface), []).append(iface)
        merged = []
        for key in sorted(groups):
            members = groups[key]
            if len(members) == 1:
                merged.append(members[0])
                continue
            pre = tuple(
                FlowRequirement(frozenset().union(*(m.preconditions[i].accepts for m in members))) for i in range(key[0])
            )
            post = tuple(
                FlowRequirement(frozenset().union(*(m.postconditions[i].accepts for m in members)))
                for i in range(key[1])
            )
            contexts = _widen_params(_merge_contexts(c for m in members for c in m.exec_contexts))
            merged.append(Interface(pre, post, contexts))
        out[op_id] = dataclasses.replace(op, interfaces=tuple(merged))
    return out


@dataclasses.dataclass
class FlowSemantics:
    defs: dict[str, FlowUnitDef]
    # (surface name, property schema) -> identifier
    index: dict[tuple[str, tuple[str, ...]], str]
    stats: dict[str, dict[str, t.Any]]
    converged: bool

    def resolve(self, name: str, props: t.Mapping[str, t.Any]) -> str:
        key = (name, tuple(sorted(props)))
        if key in self.index:
            return self.index[key]
        for (n, _), ident in sorted(self.index.items()):
            if n == name:
                return ident
        return name


def _unit_contexts(
    procs: list[ProcedureObservation],
) -> list[tuple[ObservedUnit, tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]]]:
    out = []
    for proc in procs:
        ops = {s.step_index: s.op_name for s in proc.steps}
        for u in procedure_units(proc):
            producers = tuple(sorted({ops[i] for i in u.producers}))
            consumers = tuple(sorted({ops[i] for i in u.consumers}))
            out.append((u, (producers, consumers, u.schema())))
    return out


def induce_flow_semantics(
    corpus: t.Sequence[ProcedureDoc | ProcedureObservation],
    prior: PriorKnowledge,
    cfg: AdaptationConfig | None = None,
) -> FlowSemantics:
    """Flow-unit defs: phase splits by property schema, then alias merging."""
    cfg = cfg or AdaptationConfig()
    observed = _unit_contexts(_observations(corpus, prior))
    by_name: dict[str, list[tuple[ObservedUnit, tuple[t.Any, ...]]]] = {}
    for u, ctx in observed:
        by_name.setdefault(u.name, []).append((u, ctx))

    drafts: dict[str, FlowUnitDef] = {}
    contexts: dict[str, set[tuple[t.Any, ...]]] = {}
    index: dict[tuple[str, tuple[str, ...]], str] = {}
    stats: dict[str, dict[str, t.Any]] = {}
    converged = True
    for k, (name, rows) in enumerate(sorted(by_name.items())):
        result = CategoricalDPMM([ctx for _, ctx in rows], alpha=cfg.alpha, beta=cfg.beta, seed=cfg.seed + k).run(
            cfg.max_sweeps, cfg.burn_in, cfg.window
        )
        converged = converged and result.converged
        # clusters sharing a property schema are one phase
        phases: dict[tuple[str, ...], list[int]] = {}
        for members in result.clusters():
            schemas = sorted((rows[i][1][2] for i in members), key=lambda s: (-sum(rows[j][1][2] == s for j in members), s))
            phases.setdefault(schemas[0], []).extend(members)
        for schema, members in sorted(phases.items()):
            ident = name if len(phases) == 1 else f"{name} [{', '.join(schema) or 'none'}]"
            props: dict[str, ParamSpec] = {}
            for j, field in enumerate(schema):
                values = [rows[i][0].props[field] for i in members if field in rows[i][0].props]
                props[field], _ = induce_param_spec(values, cfg, cfg.seed + 1000 * (k + 1) + j)
            drafts[ident] = FlowUnitDef(identifier=ident, properties=props)
            contexts[ident] = {rows[i][1] for i in members}
            for i in members:
                index[(name, rows[i][1][2])] = ident
        stats[name] = {
            "observations": len(rows),
            "clusters": result.n_clusters,
            "phases": len(phases),
            "sweeps": result.sweeps,
            "converged": result.converged,
            "log_likelihood": result.log_likelihood,
        }

    defs, renamed = merge_aliases(drafts, contexts, prior, cfg.tau_alias)
    index = {key: renamed.get(ident, ident) for key, ident in index.items()}
    logger.info(f"flow semantics: {len(by_name)} names, {len(defs)} flow unit defs")
    return FlowSemantics(defs, index, stats, converged)


def merge_aliases(
    drafts: dict[str, FlowUnitDef],
    contexts: dict[str, set[tuple[t.Any, ...]]],
    prior: PriorKnowledge,
    tau: float,
) -> tuple[dict[str, FlowUnitDef], dict[str, str]]:
    """Merge defs seen in identical contexts whose names are similar or prior synonyms.

    Returns the merged defs and a map from every absorbed identifier to its
    canonical one.
    """
    idents = sorted(drafts)
    parent = {i: i for i in idents}

    def find(i: str) -> str:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a_pos, a in enumerate(idents):
        for b in idents[a_pos + 1 :]:
            if contexts.get(a) != contexts.get(b):
                continue
            sa, sb = drafts[a].surface_name, drafts[b].surface_name
            if name_similarity(sa, sb) >= tau or prior.synonyms(sa, sb):
                parent[find(b)] = find(a)

    groups: dict[str, list[str]] = {}
    for i in idents:
        groups.setdefault(find(i), []).append(i)
    defs: dict[str, FlowUnitDef] = {}
    renamed: dict[str, str] = {}
    for members in groups.values():
        canonical = sorted(members, key=lambda i: (-prior.flow_weight(drafts[i].surface_name), i))[0]
        props: dict[str, ParamSpec] = {}
        aliases: set[str] = set()
        for i in members:
            for field, spec in drafts[i].properties.items():
                props[field] = props[field].union(spec) if field in props else spec
            if i != canonical:
                aliases.add(drafts[i].surface_name)
                renamed[i] = canonical
        defs[canonical] = FlowUnitDef(identifier=canonical, properties=dict(sorted(props.items())), aliases=frozenset(aliases))
    return dict(sorted(defs.items())), renamed


def procedure_shapes(procs: t.Sequence[ProcedureObservation]) -> list[ProcedureShape]:
    return [ProcedureShape(p.doc_id, len(p.steps), tuple(u.shape() for u in procedure_units(p))) for p in procs]


def induce_flow_syntax(
    corpus: t.Sequence[ProcedureDoc | ProcedureObservation],
    prior: PriorKnowledge,
    cfg: AdaptationConfig | None = None,
) -> EmState:
    cfg = cfg or AdaptationConfig()
    shapes = procedure_shapes(_observations(corpus, prior))
    return induce_flow_grammar(
        shapes,
        max_fan=cfg.max_fan,
        width=cfg.filter_width,
        max_iters=cfg.max_em_iters,
        tol=cfg.conv_tol,
        threshold=cfg.support_threshold,
    )


def assemble_dsl(
    op_defs: t.Mapping[str, OperationDef],
    flow_defs: t.Mapping[str, FlowUnitDef],
    grammar: FlowGrammar,
    machines: t.Iterable[str],
) -> DslDefinition:
    """Package induced defs; slots naming unknown flows drop their interface."""
    catalog = tuple(MachineDef(slug(name), name, i) for i, name in enumerate(sorted(set(machines))))
    known_machines = {m.machine_id for m in catalog}
    ops = {}
    for op_id, op in sorted(op_defs.items()):
        kept = []
        for iface in op.interfaces:
            slots = (*iface.preconditions, *iface.postconditions)
            if any(not (slot.accepts and slot.accepts <= set(flow_defs)) for slot in slots):
                logger.warning(f"{op_id}: dropping interface with unknown flow units")
                continue
            contexts = tuple(c for c in iface.exec_contexts if c.machine in known_machines)
            if contexts:
                kept.append(Interface(iface.preconditions, iface.postconditions, contexts))
        if kept:
            ops[op_id] = dataclasses.replace(op, interfaces=tuple(kept))
    return DslDefinition(
        operation_defs=ops,
        flow_unit_defs=dict(sorted(flow_defs.items())),
        flow_grammar=grammar,
        machine_catalog=catalog,
    )


def uncovered_names(procs: t.Sequence[ProcedureObservation], d: DslDefinition) -> list[str]:
    """Observed operation, flow and machine names the DSL cannot resolve."""
    out = set()
    for proc in procs:
        for step in proc.steps:
            if not d.resolve_operation(step.op_name):
                out.add(f"operation: {step.op_name}")
            if step.machine and d.machine_named(step.machine) is None:
                out.add(f"machine: {step.machine}")
            for f in (*step.inputs, *step.outputs):
                if d.resolve_flow(f.name, f.props) is None:
                    out.add(f"flow: {f.name}")
    return sorted(out)


@dataclasses.dataclass
class AdaptationReport:
    operations: dict[str, dict[str, t.Any]]
    flows: dict[str, dict[str, t.Any]]
    em: EmState
    uncovered: list[str]
    issues: list[dict[str, t.Any]]
    converged: bool

    def to_doc(self) -> dict[str, t.Any]:
        return jsonable(
            {
                "kind": "adaptation_report",
                "converged": self.converged,
                "operations": self.operations,
                "flows": self.flows,
                "flow_syntax": self.em.to_doc(),
                "uncovered": self.uncovered,
                "issues": self.issues,
            }
        )


def adapt_corpus(
    corpus: t.Sequence[ProcedureDoc],
    prior: PriorKnowledge,
    cfg: AdaptationConfig | None = None,
    strict: bool = False,
) -> tuple[DslDefinition, AdaptationReport]:
    """Induce a DslDefinition for a corpus. ``strict`` raises NotConverged
    instead of only flagging it in the report."""
    cfg = cfg or AdaptationConfig()
    bad = cfg.problems() + prior.problems()
    if bad:
        raise ShopError("invalid adaptation inputs: " + "; ".join(bad), problems=bad)
    issues: list[ShopError] = []
    procs = scan_corpus(corpus, prior, issues=issues)
    flows = induce_flow_semantics(procs, prior, cfg)
    ops = induce_operation_semantics(procs, prior, cfg, resolve_flow=flows.resolve)
    em = induce_flow_syntax(procs, prior, cfg)
    machines = {s.machine for p in procs for s in p.steps if s.machine}
    d = assemble_dsl(unify_interfaces(ops.defs), flows.defs, em.grammar, machines)
    converged = ops.converged and flows.converged and em.converged
    report = AdaptationReport(
        operations=ops.stats,
        flows=flows.stats,
        em=em,
        uncovered=sorted(set(ops.uncovered) | set(uncovered_names(procs, d))),
        issues=[e.to_dict() for e in issues],
        converged=converged,
    )
    if not converged:
        logger.warning("adaptation finished without convergence")
        if strict:
            raise NotConverged("adaptation did not converge", report=report.to_doc())
    logger.info(f"adapted DSL: {len(d.operation_defs)} operations, {len(d.flow_unit_defs)} flow units")
    return d, report
