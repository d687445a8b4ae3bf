"""
Procedure abstraction: compile natural-language procedures or semi-structured
route sheets into DualPrograms under a DslDefinition.

The default extractor is rule based and deterministic. Anything implementing
``extract(sentence) -> list[ExtractedAction]`` can stand in for it.
"""

import copy
import dataclasses
import difflib
import logging
import re
import typing as t
from pathlib import Path

from .dsl_core import (
    DslDefinition,
    DualProgram,
    FlowRequirement,
    FlowUnitInstance,
    Interface,
    OperationInstance,
    validate_program,
)
from .shop_common import SCHEMA_VERSION, ShopError, canonical_number, read_json
from .text_utils import field_words, jaccard, stem, stem_tokens

logger = logging.getLogger(__name__)

NATURAL_LANGUAGE = "natural-language"
SEMI_STRUCTURED = "semi-structured"

MACHINE = "MACHINE"
DURATION = "DURATION"
PARAM = "PARAM"
PROPERTY = "PROPERTY"
INPUT = "INPUT"
OUTPUT = "OUTPUT"

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_WORD_RE = re.compile(r"[A-Za-z0-9]+")
_NUMBER = r"(-?\d+(?:\.\d+)?)"
_DURATION_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?)\s*(minutes?|mins?|hours?|hrs?)\b", re.IGNORECASE)
_PAREN_RE = re.compile(r"\s*\(([^)]*)\)")
_OUTPUT_MARKERS = (
    "into",
    "producing",
    "yielding",
    "to produce",
    "to obtain",
    "making",
    "giving",
    "output:",
    "outputs:",
)
_INPUT_MARKERS = ("input:", "inputs:", "from")
_CONNECTORS = {"and", "the", "a", "an", ",", "&", "plus"}
_PHRASE_STOP = {
    "on", "for", "with", "into", "using", "at", "to", "from", "in", "by",
    "over", "and", "producing", "yielding", "making",
}
_DETERMINERS = {"the", "a", "an"}


class ExtractionEmpty(ShopError):
    code = "extraction_empty"


class NoCandidate(ShopError):
    code = "no_candidate"


class AmbiguousFlow(ShopError):
    code = "ambiguous_flow"


@dataclasses.dataclass(frozen=True)
class AbstractionConfig:
    """Weights of the divergence indicators, beam width and match threshold."""

    w1: float = 1 / 3
    w2: float = 1 / 3
    w3: float = 1 / 3
    beam_width: int = 4
    tau_match: float = 0.6


@dataclasses.dataclass(frozen=True)
class ProcedureDoc:
    doc_id: str
    kind: str
    sentences: tuple[str, ...] = ()
    rows: tuple[tuple[str, str], ...] = ()

    def lines(self) -> list[str]:
        """Text handed to the extractor, one entry per step-bearing sentence or row."""
        if self.kind == SEMI_STRUCTURED:
            return [f"{name}: {desc}" for name, desc in self.rows]
        return list(self.sentences)


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]


def procedure_to_doc(doc: ProcedureDoc) -> dict[str, t.Any]:
    out: dict[str, t.Any] = {"schema_version": SCHEMA_VERSION, "doc_id": doc.doc_id, "kind": doc.kind}
    if doc.kind == SEMI_STRUCTURED:
        out["rows"] = [list(r) for r in doc.rows]
    else:
        out["sentences"] = list(doc.sentences)
    return out


def procedure_from_doc(doc: dict[str, t.Any]) -> ProcedureDoc:
    kind = doc.get("kind", NATURAL_LANGUAGE)
    if kind not in (NATURAL_LANGUAGE, SEMI_STRUCTURED):
        raise ShopError(f"unknown procedure kind {kind!r}", doc_id=doc.get("doc_id"))
    return ProcedureDoc(
        doc_id=doc["doc_id"],
        kind=kind,
        sentences=tuple(doc.get("sentences", ())),
        rows=tuple((r[0], r[1]) for r in doc.get("rows", ())),
    )


def load_procedure(path: Path | str) -> ProcedureDoc:
    """Read a ``.proc.json`` document or a plain ``.txt`` file (one sentence per line)."""
    path = Path(path)
    if path.suffix == ".txt":
        sentences: list[str] = []
        for line in path.read_text(encoding="utf-8").splitlines():
            sentences.extend(split_sentences(line))
        doc_id = path.name[: -len(".txt")]
        return ProcedureDoc(doc_id=doc_id, kind=NATURAL_LANGUAGE, sentences=tuple(sentences))
    return procedure_from_doc(read_json(path))


@dataclasses.dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    text: str
    label: str
    # canonical vocabulary name (machine, flow, param or property)
    name: str = ""
    value: t.Any = None
    # start offset of the flow span a PROPERTY belongs to
    owner: int | None = None


@dataclasses.dataclass(frozen=True)
class FlowMention:
    name: str
    role: str
    props: dict[str, t.Any]


@dataclasses.dataclass(frozen=True)
class ExtractedAction:
    sentence_index: int
    verb_text: str
    object_texts: tuple[str, ...] = ()
    entity_spans: tuple[EntitySpan, ...] = ()
    source_text: str = ""

    def spans(self, label: str) -> list[EntitySpan]:
        return [s for s in self.entity_spans if s.label == label]

    @property
    def machine_text(self) -> str | None:
        found = self.spans(MACHINE)
        return (found[0].name or found[0].text) if found else None

    @property
    def duration(self) -> int | None:
        found = self.spans(DURATION)
        return found[0].value if found else None

    @property
    def params(self) -> dict[str, t.Any]:
        out: dict[str, t.Any] = {}
        for s in self.spans(PARAM):
            out.setdefault(s.name, s.value)
        return out

    def flow_mentions(self) -> list[FlowMention]:
        props: dict[int, dict[str, t.Any]] = {}
        for s in self.spans(PROPERTY):
            if s.owner is not None:
                props.setdefault(s.owner, {})[s.name] = s.value
        return [
            FlowMention(name=s.name or s.text, role=s.label, props=props.get(s.start, {}))
            for s in self.entity_spans
            if s.label in (INPUT, OUTPUT)
        ]


class ExtractorAdapter(t.Protocol):
    def extract(self, sentence: str) -> list[ExtractedAction]: ...


@dataclasses.dataclass(frozen=True)
class ExtractionVocabulary:
    """Names the rule-based extractor recognizes."""

    operations: dict[str, frozenset[str]] = dataclasses.field(default_factory=dict)
    machines: tuple[str, ...] = ()
    flows: tuple[str, ...] = ()
    params: tuple[str, ...] = ()
    properties: tuple[str, ...] = ()

    @classmethod
    def from_dsl(cls, d: DslDefinition) -> "ExtractionVocabulary":
        operations: dict[str, set[str]] = {}
        for op in d.operation_defs.values():
            operations.setdefault(op.display_name, set()).update(op.aliases)
        flows: set[str] = set()
        properties: set[str] = set()
        for fdef in d.flow_unit_defs.values():
            flows.update({fdef.identifier, fdef.surface_name, *fdef.aliases})
            properties.update(fdef.properties)
        params = {
            name
            for op in d.operation_defs.values()
            for iface in op.interfaces
            for ctx in iface.exec_contexts
            for name in ctx.params
        }
        return cls(
            operations={k: frozenset(v) for k, v in operations.items()},
            machines=tuple(sorted(m.name for m in d.machine_catalog)),
            flows=tuple(sorted(flows)),
            params=tuple(sorted(params)),
            properties=tuple(sorted(properties)),
        )

    def verb_stems(self) -> dict[str, str]:
        """Stem of every operation name/alias token -> operation name."""
        out: dict[str, str] = {}
        for name in sorted(self.operations):
            for form in (name, *sorted(self.operations[name])):
                for token in stem_tokens(form):
                    out.setdefault(token, name)
        return out


def _phrase_re(phrase: str) -> re.Pattern[str]:
    words = [w for w in re.split(r"[\s_]+", phrase.strip()) if w]
    return re.compile(r"(?<!\w)" + r"[\s_]+".join(re.escape(w) for w in words) + r"(?!\w)", re.IGNORECASE)


def _parse_number(text: str) -> int | float:
    return canonical_number(float(text), places=None) if "." in text else int(text)


class RuleBasedExtractor:
    """Deterministic regex/lexicon extractor."""

    def __init__(self, vocab: ExtractionVocabulary) -> None:
        self.vocab = vocab
        self._verbs = vocab.verb_stems()
        self._machines = [(name, _phrase_re(name)) for name in sorted(vocab.machines, key=lambda s: (-len(s), s))]
        self._flows = [(name, _phrase_re(name)) for name in sorted(vocab.flows, key=lambda s: (-len(s), s))]
        self._params = [
            (name, re.compile(_phrase_re(field_words(name)).pattern + r"\s*(?::|=|of|at|to)?\s*" + _NUMBER, re.IGNORECASE))
            for name in sorted(vocab.params, key=lambda s: (-len(s), s))
        ]
        self._props = [
            (name, re.compile(r"^\s*" + _phrase_re(field_words(name)).pattern + r"\s*(?::|=|of)?\s*" + _NUMBER, re.IGNORECASE))
            for name in sorted(vocab.properties, key=lambda s: (-len(s), s))
        ]

    @classmethod
    def for_dsl(cls, d: DslDefinition) -> "RuleBasedExtractor":
        return cls(ExtractionVocabulary.from_dsl(d))

    def extract(self, sentence: str) -> list[ExtractedAction]:
        spans = self.entities(sentence)
        taken = [(s.start, s.end) for s in spans]
        verb = None
        for m in _WORD_RE.finditer(sentence):
            if any(a <= m.start() < b for a, b in taken):
                continue
            if stem(m.group(0)) in self._verbs:
                verb = m
                break
        if verb is None:
            return []
        objects = tuple(s.text for s in spans if s.label in (INPUT, OUTPUT))
        if not objects:
            objects = self._noun_phrase(sentence, verb.end(), taken)
        return [
            ExtractedAction(
                sentence_index=0,
                verb_text=verb.group(0).lower(),
                object_texts=objects,
                entity_spans=tuple(spans),
                source_text=sentence,
            )
        ]

    def entities(self, sentence: str) -> list[EntitySpan]:
        """Labeled spans, non-overlapping, ordered by position."""
        spans: list[EntitySpan] = []
        taken: list[tuple[int, int]] = []

        def free(a: int, b: int) -> bool:
            return all(b <= x or a >= y for x, y in taken)

        for name, pattern in self._machines:
            for m in pattern.finditer(sentence):
                if free(m.start(), m.end()):
                    spans.append(EntitySpan(m.start(), m.end(), m.group(0), MACHINE, name=name))
                    taken.append((m.start(), m.end()))

        flows = []
        for name, pattern in self._flows:
            for m in pattern.finditer(sentence):
                if free(m.start(), m.end()):
                    flows.append((m.start(), m.end(), name))
                    taken.append((m.start(), m.end()))
        flows.sort()
        prev_end, prev_role = None, INPUT
        for start, end, name in flows:
            role = self._role(sentence, start, prev_end, prev_role)
            spans.append(EntitySpan(start, end, sentence[start:end], role, name=name))
            prev_end, prev_role = end, role
            paren = _PAREN_RE.match(sentence, end)
            if paren is None:
                continue
            taken.append((paren.start(), paren.end()))
            prev_end = paren.end()
            inner_start = paren.start(1)
            for item in re.finditer(r"[^;,]+", paren.group(1)):
                for pname, pattern in self._props:
                    pm = pattern.match(item.group(0))
                    if pm is None:
                        continue
                    a = inner_start + item.start() + len(item.group(0)) - len(item.group(0).lstrip())
                    b = inner_start + item.start() + pm.end()
                    spans.append(
                        EntitySpan(a, b, sentence[a:b], PROPERTY, name=pname, value=_parse_number(pm.group(1)), owner=start)
                    )
                    break

        for name, pattern in self._params:
            for m in pattern.finditer(sentence):
                if free(m.start(), m.end()):
                    spans.append(EntitySpan(m.start(), m.end(), m.group(0), PARAM, name=name, value=_parse_number(m.group(1))))
                    taken.append((m.start(), m.end()))

        for m in _DURATION_RE.finditer(sentence):
            if not free(m.start(), m.end()):
                continue
            amount = float(m.group(1))
            minutes = amount * 60 if m.group(2).lower().startswith("h") else amount
            spans.append(EntitySpan(m.start(), m.end(), m.group(0), DURATION, value=int(round(minutes))))
            taken.append((m.start(), m.end()))

        return sorted(spans, key=lambda s: (s.start, s.end))

    @staticmethod
    def _role(sentence: str, start: int, prev_end: int | None, prev_role: str) -> str:
        if prev_end is not None:
            between = re.findall(r"[\w:]+|[,&]", sentence[prev_end:start].lower())
            if all(tok in _CONNECTORS for tok in between):
                return prev_role
        before = sentence[:start].lower().rstrip()
        words = before.split()
        while words and words[-1] in _DETERMINERS:
            words.pop()
        tail = " ".join(words)
        if any(tail.endswith(marker) for marker in _OUTPUT_MARKERS):
            return OUTPUT
        return INPUT

    @staticmethod
    def _noun_phrase(sentence: str, start: int, taken: list[tuple[int, int]]) -> tuple[str, ...]:
        words = []
        for m in _WORD_RE.finditer(sentence, start):
            if any(a <= m.start() < b for a, b in taken):
                break
            word = m.group(0).lower()
            if word in _PHRASE_STOP:
                break
            if word in _DETERMINERS and not words:
                continue
            words.append(word)
        return (" ".join(words),) if words else ()


def extract_actions(
    doc: ProcedureDoc,
    adapter: ExtractorAdapter,
    issues: list[ShopError] | None = None,
) -> list[ExtractedAction]:
    """Actions in document order.

    A line that yields no verb raises ExtractionEmpty, unless ``issues`` is
    given, in which case the error is appended there and the line skipped.
    """
    actions = []
    for index, line in enumerate(doc.lines()):
        found = adapter.extract(line) if line.strip() else []
        if not found:
            err = ExtractionEmpty(f"no operation verb in line {index} of {doc.doc_id}", sentence_index=index, text=line)
            if issues is None:
                raise err
            logger.warning(err.msg)
            issues.append(err)
            continue
        actions.extend(dataclasses.replace(a, sentence_index=index) for a in found)
    return actions


@dataclasses.dataclass(frozen=True)
class MatchCandidate:
    op_id: str
    interface_index: int
    context_index: int
    exact_score: float
    semantic_score: float
    span_distance: float
    structure_score: float
    label_coverage: float

    @property
    def combined_score(self) -> float:
        return max(self.exact_score, self.semantic_score)

    def divergence(self, cfg: AbstractionConfig) -> float:
        return (
            cfg.w1 * self.span_distance
            + cfg.w2 * (1.0 - self.structure_score)
            + cfg.w3 * (1.0 - self.label_coverage)
        )


def _span_distance(verb: str, forms: t.Iterable[str]) -> float:
    """Character-level distance of the verb to the closest operation surface form."""
    best = 0.0
    for form in forms:
        best = max(best, difflib.SequenceMatcher(None, verb.lower(), form.lower()).ratio())
    return round(1.0 - best, 9)


def _structure_score(action: ExtractedAction, iface: Interface) -> float:
    mentions = action.flow_mentions()
    n_in = sum(1 for m in mentions if m.role == INPUT)
    n_out = len(mentions) - n_in
    n_pre, n_post = len(iface.preconditions), len(iface.postconditions)
    total = n_in + n_out + n_pre + n_post
    if total == 0:
        return 1.0
    return 1.0 - (abs(n_in - n_pre) + abs(n_out - n_post)) / total


def _label_coverage(action: ExtractedAction, d: DslDefinition, iface: Interface, context_index: int) -> float:
    ctx = iface.exec_contexts[context_index]
    hits = total = 0
    machine_text = action.machine_text
    if machine_text is not None:
        total += 1
        machine = d.machine(ctx.machine)
        hits += machine is not None and machine.name.lower() == machine_text.lower()
    if action.duration is not None:
        total += 1
        hits += action.duration == ctx.duration
    for name, value in action.params.items():
        total += 1
        spec = ctx.params.get(name)
        hits += spec is not None and spec.contains(value)
    for mention in action.flow_mentions():
        total += 1
        flow_id = d.resolve_flow(mention.name, mention.props)
        slots = iface.preconditions if mention.role == INPUT else iface.postconditions
        hits += flow_id is not None and any(flow_id in s.accepts for s in slots)
    return hits / total if total else 1.0


def match_operation(
    action: ExtractedAction, d: DslDefinition, cfg: AbstractionConfig | None = None
) -> list[MatchCandidate]:
    """Candidates at or above the match threshold, best first."""
    cfg = cfg or AbstractionConfig()
    verb_stem = " ".join(stem_tokens(action.verb_text))
    text_tokens = set(stem_tokens(" ".join((action.verb_text, *action.object_texts))))
    candidates = []
    best_seen = 0.0
    for op_id in sorted(d.operation_defs):
        op = d.operation_defs[op_id]
        forms = (op.display_name, *sorted(op.aliases))
        exact = 1.0 if verb_stem in {" ".join(stem_tokens(f)) for f in forms} else 0.0
        semantic = jaccard(text_tokens, {tok for f in forms for tok in stem_tokens(f)})
        combined = max(exact, semantic)
        best_seen = max(best_seen, combined)
        if combined < cfg.tau_match:
            continue
        distance = _span_distance(action.verb_text, forms)
        for ii, iface in enumerate(op.interfaces):
            structure = _structure_score(action, iface)
            for ci in range(len(iface.exec_contexts)):
                candidates.append(
                    MatchCandidate(
                        op_id=op_id,
                        interface_index=ii,
                        context_index=ci,
                        exact_score=exact,
                        semantic_score=semantic,
                        span_distance=distance,
                        structure_score=structure,
                        label_coverage=_label_coverage(action, d, iface, ci),
                    )
                )
    if not candidates:
        raise NoCandidate(
            f"no operation matches verb {action.verb_text!r}",
            verb=action.verb_text,
            sentence_index=action.sentence_index,
            best_score=round(best_seen, 6),
        )
    candidates.sort(key=lambda c: (-c.combined_score, c.op_id, c.interface_index, c.context_index))
    return candidates


@dataclasses.dataclass
class _UnitDraft:
    unit_id: str
    flow_def: str
    producers: set[int]
    consumers: set[int]
    props: dict[str, t.Any]
    raw: bool = False


@dataclasses.dataclass
class _BeamState:
    cost: float = 0.0
    ranks: tuple[int, ...] = ()
    steps: list[OperationInstance] = dataclasses.field(default_factory=list)
    units: list[_UnitDraft] = dataclasses.field(default_factory=list)

    def new_unit(self, flow_def: str, producers: set[int], props: dict[str, t.Any], raw: bool) -> _UnitDraft:
        unit = _UnitDraft(f"u{len(self.units)}", flow_def, producers, set(), dict(props), raw)
        self.units.append(unit)
        return unit


def _take_mention(mentions: list[FlowMention], slot: FlowRequirement, d: DslDefinition) -> tuple[str, FlowMention] | None:
    for i, mention in enumerate(mentions):
        flow_id = d.resolve_flow(mention.name, mention.props)
        if flow_id is not None and flow_id in slot.accepts:
            mentions.pop(i)
            return flow_id, mention
    return None


def _link_input(
    state: _BeamState, slot: FlowRequirement, wanted: set[str], step: int, sentence_index: int, max_succ: int = 1
) -> _UnitDraft | None:
    """Nearest earlier producer of a unit fitting the slot.

    Unconsumed units come first. When the flow grammar admits several
    consumers per unit, an input named in the sentence may also link to a
    unit an earlier step already consumes, up to ``max_succ`` consumers.
    """
    fits = [u for u in state.units if u.producers and u.flow_def in slot.accepts and step not in u.consumers]
    live = [u for u in fits if not u.consumers]
    preferred = [u for u in live if u.flow_def in wanted]
    if not preferred and max_succ > 1:
        preferred = [u for u in fits if u.consumers and len(u.consumers) < max_succ and u.flow_def in wanted]
    preferred = preferred or live
    if not preferred:
        return None
    nearest = max(max(u.producers) for u in preferred)
    tied = [u for u in preferred if max(u.producers) == nearest]
    flows = {u.flow_def for u in tied}
    if len(tied) > 1 and len(flows) < len(tied):
        raise AmbiguousFlow(
            f"step {nearest} produced several {sorted(flows)[0]} units",
            sentence_index=sentence_index,
            flow=sorted(flows)[0],
            step=step,
        )
    return sorted(tied, key=lambda u: u.flow_def)[0]


def _expand(
    state: _BeamState,
    rank: int,
    cand: MatchCandidate,
    action: ExtractedAction,
    d: DslDefinition,
    cfg: AbstractionConfig,
) -> _BeamState:
    op = d.operation_defs[cand.op_id]
    iface = op.interfaces[cand.interface_index]
    ctx = iface.exec_contexts[cand.context_index]
    step = len(state.steps)
    new = copy.deepcopy(state)

    mentions = action.flow_mentions()
    inputs = [m for m in mentions if m.role == INPUT]
    outputs = [m for m in mentions if m.role == OUTPUT]
    wanted = {fid for m in inputs if (fid := d.resolve_flow(m.name, m.props)) is not None}

    satisfied = 0
    for slot in iface.preconditions:
        unit = _link_input(new, slot, wanted, step, action.sentence_index, d.flow_grammar.max_succ)
        if unit is not None:
            unit.consumers.add(step)
            wanted.discard(unit.flow_def)
            for i, m in enumerate(inputs):
                if d.resolve_flow(m.name, m.props) == unit.flow_def:
                    inputs.pop(i)
                    break
            satisfied += 1
            continue
        taken = _take_mention(inputs, slot, d)
        if taken is not None:
            flow_id, mention = taken
            satisfied += 1
            raw = new.new_unit(flow_id, set(), mention.props, raw=True)
        else:
            raw = new.new_unit(sorted(slot.accepts)[0], set(), {}, raw=True)
        raw.consumers.add(step)

    for slot in iface.postconditions:
        taken = _take_mention(outputs, slot, d)
        if taken is not None:
            flow_id, mention = taken
            new.new_unit(flow_id, {step}, mention.props, raw=False)
        else:
            new.new_unit(sorted(slot.accepts)[0], {step}, {}, raw=False)

    availability = satisfied / len(iface.preconditions) if iface.preconditions else 1.0
    scored = dataclasses.replace(cand, structure_score=cand.structure_score * availability)

    extracted = action.params
    bound = {}
    for name, spec in sorted(ctx.params.items()):
        value = extracted.get(name)
        bound[name] = value if value is not None and spec.contains(value) else spec.default()
    new.steps.append(
        OperationInstance(
            step_index=step,
            op_id=cand.op_id,
            interface_index=cand.interface_index,
            context_index=cand.context_index,
            bound_params=bound,
        )
    )
    new.cost = state.cost + scored.divergence(cfg)
    new.ranks = state.ranks + (rank,)
    return new


def synthesize_program(
    doc: ProcedureDoc,
    d: DslDefinition,
    adapter: ExtractorAdapter | None = None,
    cfg: AbstractionConfig | None = None,
    issues: list[ShopError] | None = None,
) -> DualProgram:
    """Compile one procedure into a DualProgram by beam search over interpretations."""
    cfg = cfg or AbstractionConfig()
    adapter = adapter or RuleBasedExtractor.for_dsl(d)
    actions = extract_actions(doc, adapter, issues)
    beam = [_BeamState()]
    for action in actions:
        try:
            candidates = match_operation(action, d, cfg)
        except NoCandidate as e:
            raise NoCandidate(e.msg, **{**e.details, "sentence_index": action.sentence_index}) from e
        expanded: list[_BeamState] = []
        ambiguous: AmbiguousFlow | None = None
        for state in beam:
            for rank, cand in enumerate(candidates):
                try:
                    expanded.append(_expand(state, rank, cand, action, d, cfg))
                except AmbiguousFlow as e:
                    ambiguous = ambiguous or e
        if not expanded:
            assert ambiguous is not None
            raise ambiguous
        expanded.sort(key=lambda s: (round(s.cost, 9), s.ranks))
        beam = expanded[: cfg.beam_width]
        logger.debug(
            f"{doc.doc_id} line {action.sentence_index}: best {beam[0].steps[-1].op_id} cost {beam[0].cost:.4f}"
        )

    best = beam[0]
    units = tuple(
        FlowUnitInstance(
            unit_id=u.unit_id,
            flow_def=u.flow_def,
            producers=frozenset(u.producers),
            consumers=frozenset(u.consumers),
            prop_values=dict(u.props),
            raw_material=u.raw,
            final_product=not u.consumers,
        )
        for u in best.units
    )
    program = DualProgram(job_id=doc.doc_id, steps=tuple(best.steps), flow_units=units)
    report = validate_program(program, d)
    if not report.ok:
        logger.warning(f"{doc.doc_id}: synthesized program has violations: {report.messages()}")
    return program


def program_to_route_sheet(p: DualProgram, d: DslDefinition) -> dict[str, t.Any]:
    """Fully structured route sheet: one row per step plus raw-material properties."""
    rows = []
    for step in p.steps:
        op = d.operation_defs[step.op_id]
        ctx = d.context(step.op_id, step.interface_index, step.context_index)
        machine = d.machine(ctx.machine)
        rows.append(
            {
                "step": step.step_index,
                "operation": op.display_name,
                "op_id": step.op_id,
                "machine": machine.name if machine is not None else ctx.machine,
                "duration": ctx.duration,
                "config": dict(step.bound_params),
                "inputs": sorted(u.flow_def for u in p.consumed_at(step.step_index)),
                "outputs": sorted(u.flow_def for u in p.produced_at(step.step_index)),
            }
        )
    materials = sorted(
        ({"name": u.flow_def, "properties": dict(u.prop_values)} for u in p.flow_units if u.raw_material),
        key=lambda m: (m["name"], sorted(m["properties"].items())),
    )
    return {"schema_version": SCHEMA_VERSION, "kind": "route_sheet", "job_id": p.job_id, "rows": rows, "materials": materials}


def _format_props(props: dict[str, t.Any]) -> str:
    return ", ".join(f"{field_words(k)} {v}" for k, v in sorted(props.items()))


def route_sheet_to_doc(sheet: dict[str, t.Any]) -> ProcedureDoc:
    """Render a route sheet back into a semi-structured procedure."""
    materials: dict[str, list[dict[str, t.Any]]] = {}
    for mat in sheet.get("materials", []):
        materials.setdefault(mat["name"], []).append(mat["properties"])
    rows = []
    for row in sheet.get("rows", []):
        parts = [row["machine"], f"{row['duration']} min"]
        parts += [f"{field_words(k)}: {v}" for k, v in sorted(row.get("config", {}).items())]
        inputs = []
        for name in row.get("inputs", []):
            pending = materials.get(name)
            props = pending.pop(0) if pending else {}
            inputs.append(f"{name} ({_format_props(props)})" if props else name)
        if inputs:
            parts.append("input: " + ", ".join(inputs))
        if row.get("outputs"):
            parts.append("output: " + ", ".join(row["outputs"]))
        rows.append((row["operation"], "; ".join(parts)))
    return ProcedureDoc(doc_id=sheet["job_id"], kind=SEMI_STRUCTURED, rows=tuple(rows))
