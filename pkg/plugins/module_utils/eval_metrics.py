"""
Evaluation metrics: exact match over flattened key-value pairs, BLEU,
constraint IoU, compiler/runtime error rates and the cross-scenario
variance-to-mean ratio.
"""

import collections
import csv
import dataclasses
import io
import logging
import math
import re
import typing as t
from pathlib import Path

import numpy as np

from .constraint_gen import ConstraintSet
from .shop_common import SCHEMA_VERSION, ShopError, canonical_number, dump_canonical, write_text_atomic

logger = logging.getLogger(__name__)

_BLEU_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
MAX_ORDER = 4

KvpSet = frozenset[tuple[str, t.Any]]


class DegenerateInput(ShopError):
    code = "degenerate_input"


def _entry_key(entry: t.Any) -> tuple[t.Any, ...]:
    if isinstance(entry, dict):
        step = entry.get("step_index", entry.get("step", -1))
        return (0, str(entry.get("job_id", "")), step if isinstance(step, int) else -1)
    return (1, "", -1)


def flatten_kvp(doc: t.Any, prefix: str = "") -> KvpSet:
    """Leaf (path, value) pairs. Lists of entries are sorted by (job_id, step) first."""
    pairs: set[tuple[str, t.Any]] = set()

    def walk(node: t.Any, path: str) -> None:
        if isinstance(node, dict):
            for key in sorted(node):
                walk(node[key], f"{path}/{key}" if path else str(key))
        elif isinstance(node, (list, tuple)):
            items = list(node)
            if items and all(isinstance(x, dict) for x in items):
                items.sort(key=_entry_key)
            for i, item in enumerate(items):
                walk(item, f"{path}/{i}" if path else str(i))
        else:
            value = canonical_number(node) if isinstance(node, (int, float)) and not isinstance(node, bool) else node
            pairs.add((path, value))

    walk(doc, prefix)
    return frozenset(pairs)


@dataclasses.dataclass(frozen=True)
class KvpScore:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


def harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def emkvp(pred: KvpSet, gold: KvpSet) -> KvpScore:
    """Exact-match precision/recall/F1. Both empty scores 1; an empty prediction against
    a non-empty gold scores 0."""
    if not pred and not gold:
        return KvpScore(1.0, 1.0, 1.0)
    hits = len(pred & gold)
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(gold) if gold else 1.0
    if not pred:
        recall = 0.0
    return KvpScore(precision, recall, harmonic(precision, recall))


def bleu_tokens(text: str) -> list[str]:
    return _BLEU_TOKEN_RE.findall(text)


def _ngrams(tokens: list[str], n: int) -> collections.Counter[tuple[str, ...]]:
    return collections.Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(pred: list[str], gold: list[str]) -> np.ndarray:
    """[matches_1, total_1, ..., matches_4, total_4, pred_len, gold_len]"""
    row = []
    for n in range(1, MAX_ORDER + 1):
        p, g = _ngrams(pred, n), _ngrams(gold, n)
        row += [sum(min(c, g[k]) for k, c in p.items()), max(len(pred) - n + 1, 0)]
    return np.array(row + [len(pred), len(gold)], dtype=float)


def _bleu_from_stats(stats: np.ndarray) -> float:
    pred_len, gold_len = stats[-2], stats[-1]
    if pred_len == 0 and gold_len == 0:
        return 1.0
    if pred_len == 0:
        return 0.0
    logs = []
    for n in range(MAX_ORDER):
        matches, total = stats[2 * n], stats[2 * n + 1]
        if n > 0:
            # add-one on higher orders
            matches, total = matches + 1, total + 1
        if matches == 0:
            return 0.0
        logs.append(math.log(matches / total))
    bp = 1.0 if pred_len > gold_len else math.exp(1 - gold_len / pred_len)
    return float(min(1.0, bp * math.exp(sum(logs) / MAX_ORDER)))


def bleu(pred_text: str, gold_text: str) -> float:
    """BLEU-4, uniform weights, brevity penalty, add-one smoothing above unigrams."""
    return _bleu_from_stats(_bleu_stats(bleu_tokens(pred_text), bleu_tokens(gold_text)))


def corpus_bleu(pairs: t.Iterable[tuple[str, str]]) -> float:
    """BLEU with n-gram statistics summed over aligned (prediction, gold) pairs."""
    total = np.zeros(2 * MAX_ORDER + 2)
    for pred_text, gold_text in pairs:
        total += _bleu_stats(bleu_tokens(pred_text), bleu_tokens(gold_text))
    return _bleu_from_stats(total)


def _tagged(cs: ConstraintSet) -> set[tuple[t.Any, ...]]:
    out: set[tuple[t.Any, ...]] = {("resource", ref, machine) for ref, machine in cs.resource}
    out |= {("precedence", a, b) for a, b in cs.precedence}
    return out


def constraint_acc(pred: ConstraintSet, gold: ConstraintSet) -> float:
    """IoU over resource and precedence pairs tagged by kind; 1.0 when both are empty."""
    p, g = _tagged(pred), _tagged(gold)
    union = p | g
    return len(p & g) / len(union) if union else 1.0


@dataclasses.dataclass(frozen=True)
class RunRecord:
    """Outcome of one procedure's trip through compilation and solving."""

    scenario_id: str
    job_id: str
    input_valid: bool
    # solver status, or "error" when the stage raised
    solve_status: str

    @property
    def runtime_failed(self) -> bool:
        return self.solve_status in ("infeasible", "error")


def error_rates(run_log: t.Sequence[RunRecord]) -> tuple[float, float]:
    """(compiler_er, runtime_er) as fractions of all records."""
    if not run_log:
        return 0.0, 0.0
    n = len(run_log)
    compiler = sum(not r.input_valid for r in run_log) / n
    runtime = sum(r.runtime_failed for r in run_log) / n
    return compiler, runtime


def vmr(values: t.Sequence[float]) -> float:
    """Population variance over mean."""
    if not values:
        raise DegenerateInput("vmr of an empty list")
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if mean == 0:
        raise DegenerateInput("vmr undefined for zero mean", values=list(values))
    return float(arr.var()) / mean


@dataclasses.dataclass
class ScenarioMetrics:
    scenario_id: str
    route_bleu: float
    route_kvp: KvpScore
    plan_bleu: float
    plan_kvp: KvpScore
    constraint_acc: float
    compiler_er: float
    runtime_er: float

    def flat(self) -> dict[str, t.Any]:
        return {
            "scenario_id": self.scenario_id,
            "route_bleu": self.route_bleu,
            "route_emkvp_precision": self.route_kvp.precision,
            "route_emkvp_recall": self.route_kvp.recall,
            "route_emkvp_f1": self.route_kvp.f1,
            "plan_bleu": self.plan_bleu,
            "plan_emkvp_precision": self.plan_kvp.precision,
            "plan_emkvp_recall": self.plan_kvp.recall,
            "plan_emkvp_f1": self.plan_kvp.f1,
            "constraint_acc": self.constraint_acc,
            "compiler_er": self.compiler_er,
            "runtime_er": self.runtime_er,
        }


CSV_FIELDS = tuple(ScenarioMetrics("", 0, KvpScore(0, 0, 0), 0, KvpScore(0, 0, 0), 0, 0, 0).flat())


@dataclasses.dataclass
class MetricReport:
    scenarios: list[ScenarioMetrics] = dataclasses.field(default_factory=list)

    def aggregate(self) -> dict[str, t.Any]:
        """Mean of every metric, plus the VMR of route/plan EM-KVP F1 where defined."""
        if not self.scenarios:
            return {}
        rows = [s.flat() for s in self.scenarios]
        out: dict[str, t.Any] = {
            key: float(np.mean([r[key] for r in rows])) for key in CSV_FIELDS if key != "scenario_id"
        }
        for key in ("route_emkvp_f1", "plan_emkvp_f1"):
            try:
                out[f"{key}_vmr"] = vmr([r[key] for r in rows])
            except DegenerateInput as e:
                logger.warning(f"{key}: {e.msg}")
                out[f"{key}_vmr"] = None
        return out

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "metrics",
            "scenarios": [s.flat() for s in self.scenarios],
            "aggregate": self.aggregate(),
        }

    def to_csv_rows(self) -> list[dict[str, t.Any]]:
        rows = [s.flat() for s in self.scenarios]
        agg = self.aggregate()
        if agg:
            rows.append({"scenario_id": "ALL", **{k: agg[k] for k in CSV_FIELDS if k in agg}})
        return [{k: canonical_number(v) if isinstance(v, float) else v for k, v in r.items()} for r in rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(CSV_FIELDS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.to_csv_rows())
        return buf.getvalue()


def write_metrics(report: MetricReport, out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    json_path, csv_path = out_dir / "metrics.json", out_dir / "metrics.csv"
    write_text_atomic(json_path, dump_canonical(report.to_doc()))
    write_text_atomic(csv_path, report.to_csv())
    return [json_path, csv_path]


def score_scenario(
    scenario_id: str,
    pred_sheets: t.Sequence[dict[str, t.Any]],
    gold_sheets: t.Sequence[dict[str, t.Any]],
    pred_plan: dict[str, t.Any] | None,
    gold_plan: dict[str, t.Any] | None,
    pred_constraints: ConstraintSet,
    gold_constraints: ConstraintSet,
    run_log: t.Sequence[RunRecord] = (),
) -> ScenarioMetrics:
    """All metrics for one scenario from canonical documents."""
    gold_by_job = {s["job_id"]: s for s in gold_sheets}
    pairs = [(dump_canonical(s), dump_canonical(gold_by_job.get(s["job_id"], {}))) for s in pred_sheets]
    pairs += [("", dump_canonical(s)) for job, s in sorted(gold_by_job.items()) if job not in {p["job_id"] for p in pred_sheets}]
    compiler_er, runtime_er = error_rates(run_log)
    return ScenarioMetrics(
        scenario_id=scenario_id,
        route_bleu=corpus_bleu(pairs),
        route_kvp=emkvp(flatten_kvp({"sheets": list(pred_sheets)}), flatten_kvp({"sheets": list(gold_sheets)})),
        plan_bleu=bleu(dump_canonical(pred_plan) if pred_plan else "", dump_canonical(gold_plan) if gold_plan else ""),
        plan_kvp=emkvp(flatten_kvp(pred_plan or {}), flatten_kvp(gold_plan or {})),
        constraint_acc=constraint_acc(pred_constraints, gold_constraints),
        compiler_er=compiler_er,
        runtime_er=runtime_er,
    )
