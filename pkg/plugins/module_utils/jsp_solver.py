"""
Exact job-shop solver minimizing makespan.

Depth-first branch and bound over active schedules (Giffler-Thompson
conflict-set branching). Nodes are bounded by head + duration + tail paths
and by the preemptive one-machine (Jackson) bound on every machine. A most
work remaining dispatch run supplies the first incumbent.
"""

import dataclasses
import heapq
import logging
import math
import time
import typing as t

from .constraint_gen import SolverInput
from .dsl_core import ValidationReport
from .shop_common import SCHEMA_VERSION, ShopError
from .shop_numeric_compat import make_rng, rng_permutation

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout"


class Infeasible(ShopError):
    code = "infeasible"


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    time_limit_s: float = 60.0
    seed: int = 0
    # deterministic cut-off; hitting it yields status "feasible"
    node_limit: int | None = None


@dataclasses.dataclass(frozen=True)
class ScheduleEntry:
    job_id: str
    step_index: int
    machine: int
    start: int
    end: int


@dataclasses.dataclass(frozen=True)
class Schedule:
    entries: tuple[ScheduleEntry, ...] = ()
    makespan: int = 0
    status: str = OPTIMAL
    nodes: int = 0

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "schedule",
            "status": self.status,
            "makespan": self.makespan,
            "entries": [dataclasses.asdict(e) for e in self.entries],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, t.Any]) -> "Schedule":
        return cls(
            entries=tuple(ScheduleEntry(**e) for e in doc.get("entries", [])),
            makespan=doc.get("makespan", 0),
            status=doc.get("status", FEASIBLE),
        )


class _Timeout(Exception):
    pass


class _Instance:
    """Flattened operations with precedence arcs and static tails."""

    def __init__(self, si: SolverInput) -> None:
        self.ops: list[tuple[int, int]] = [(j, s) for j, row in enumerate(si.jobs) for s in range(len(row))]
        index = {op: i for i, op in enumerate(self.ops)}
        self.n = len(self.ops)
        self.machine = [si.jobs[j][s][0] for j, s in self.ops]
        self.dur = [si.jobs[j][s][1] for j, s in self.ops]
        self.n_machines = max(self.machine) + 1 if self.ops else 0
        preds: list[set[int]] = [set() for _ in range(self.n)]
        for i, (j, s) in enumerate(self.ops):
            if s > 0:
                preds[i].add(index[(j, s - 1)])
        for a, b in si.extra_precedence:
            if a not in index or b not in index:
                raise Infeasible(f"precedence edge {a}->{b} references a missing operation")
            if a == b:
                raise Infeasible(f"operation {a} precedes itself")
            preds[index[b]].add(index[a])
        self.preds = [sorted(p) for p in preds]
        self.succs: list[list[int]] = [[] for _ in range(self.n)]
        for i, ps in enumerate(self.preds):
            for p in ps:
                self.succs[p].append(i)
        self.topo = self._topological_order()
        self.tail = [0] * self.n
        for i in reversed(self.topo):
            self.tail[i] = max((self.dur[k] + self.tail[k] for k in self.succs[i]), default=0)
        self.work_left = [0] * self.n
        for i in reversed(range(self.n)):
            j, s = self.ops[i]
            nxt = i + 1 if i + 1 < self.n and self.ops[i + 1][0] == j else None
            self.work_left[i] = self.dur[i] + (self.work_left[nxt] if nxt is not None else 0)
        self.by_machine: list[list[int]] = [[] for _ in range(self.n_machines)]
        for i, m in enumerate(self.machine):
            self.by_machine[m].append(i)

    def _topological_order(self) -> list[int]:
        indegree = [len(p) for p in self.preds]
        heap = [i for i in range(self.n) if indegree[i] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            i = heapq.heappop(heap)
            order.append(i)
            for k in self.succs[i]:
                indegree[k] -= 1
                if indegree[k] == 0:
                    heapq.heappush(heap, k)
        if len(order) != self.n:
            stuck = next(i for i in range(self.n) if indegree[i] > 0)
            raise Infeasible(f"precedence cycle through operation {list(self.ops[stuck])}", operation=list(self.ops[stuck]))
        return order


@dataclasses.dataclass
class _Node:
    end: list[int | None]
    machine_ready: list[int]
    waiting: list[int]
    done: int = 0

    def child(self) -> "_Node":
        return _Node(list(self.end), list(self.machine_ready), list(self.waiting), self.done)


def _jackson_bound(items: list[tuple[int, int, int]]) -> int:
    """Preemptive one-machine bound: max completion plus tail, largest tail first."""
    items = sorted(items)
    remaining = [p for _, p, _ in items]
    heap: list[tuple[int, int]] = []
    clock, i, best, n = 0, 0, 0, len(items)
    while i < n or heap:
        if not heap:
            clock = max(clock, items[i][0])
        while i < n and items[i][0] <= clock:
            heapq.heappush(heap, (-items[i][2], i))
            i += 1
        neg_tail, k = heapq.heappop(heap)
        horizon = items[i][0] if i < n else math.inf
        run = int(min(remaining[k], horizon - clock))
        clock += run
        remaining[k] -= run
        if remaining[k] == 0:
            best = max(best, clock - neg_tail)
        else:
            heapq.heappush(heap, (neg_tail, k))
    return best


class _Search:
    def __init__(self, inst: _Instance, cfg: SolverConfig) -> None:
        self.inst = inst
        self.cfg = cfg
        self.deadline = time.monotonic() + cfg.time_limit_s
        self.nodes = 0
        self.best_end: list[int] | None = None
        self.best = math.inf
        self.rng = make_rng(cfg.seed) if cfg.seed else None
        self.node_limit_hit = False

    def root(self) -> _Node:
        inst = self.inst
        return _Node([None] * inst.n, [0] * inst.n_machines, [len(p) for p in inst.preds])

    def est(self, node: _Node, i: int) -> int:
        inst = self.inst
        start = node.machine_ready[inst.machine[i]]
        for p in inst.preds[i]:
            end_p = node.end[p]
            assert end_p is not None
            start = max(start, end_p)
        return start

    def conflict_set(self, node: _Node) -> list[tuple[int, int]]:
        """Giffler-Thompson conflict set as (operation, start) pairs."""
        inst = self.inst
        eligible = [i for i in range(inst.n) if node.end[i] is None and node.waiting[i] == 0]
        starts = {i: self.est(node, i) for i in eligible}
        pivot = min(eligible, key=lambda i: (starts[i] + inst.dur[i], i))
        horizon = starts[pivot] + inst.dur[pivot]
        machine = inst.machine[pivot]
        return [(i, starts[i]) for i in eligible if inst.machine[i] == machine and starts[i] < horizon]

    def apply(self, node: _Node, i: int, start: int) -> _Node:
        inst = self.inst
        child = node.child()
        child.end[i] = start + inst.dur[i]
        child.machine_ready[inst.machine[i]] = start + inst.dur[i]
        for k in inst.succs[i]:
            child.waiting[k] -= 1
        child.done += 1
        return child

    def lower_bound(self, node: _Node) -> int:
        inst = self.inst
        heads = [0] * inst.n
        bound = max((e for e in node.end if e is not None), default=0)
        for i in inst.topo:
            if node.end[i] is not None:
                continue
            head = node.machine_ready[inst.machine[i]]
            for p in inst.preds[i]:
                end_p = node.end[p]
                head = max(head, end_p if end_p is not None else heads[p] + inst.dur[p])
            heads[i] = head
            bound = max(bound, head + inst.dur[i] + inst.tail[i])
        for ops in inst.by_machine:
            items = [(heads[i], inst.dur[i], inst.tail[i]) for i in ops if node.end[i] is None]
            if len(items) > 1:
                bound = max(bound, _jackson_bound(items))
        return bound

    def dispatch(self) -> None:
        """Most-work-remaining incumbent."""
        node = self.root()
        while node.done < self.inst.n:
            conflict = self.conflict_set(node)
            i, start = min(conflict, key=lambda pair: (-self.inst.work_left[pair[0]], pair[0]))
            node = self.apply(node, i, start)
        self._record(node)

    def _record(self, node: _Node) -> None:
        ends = [e for e in node.end if e is not None]
        makespan = max(ends, default=0)
        if makespan < self.best:
            self.best = makespan
            self.best_end = list(ends)
            logger.debug(f"incumbent {makespan} after {self.nodes} nodes")

    def expand(self, node: _Node) -> list[tuple[int, int, int]]:
        """Children as (bound, operation, start), best first, pruned against the incumbent."""
        children = []
        for i, start in self.conflict_set(node):
            bound = self.lower_bound(self.apply(node, i, start))
            if bound < self.best:
                children.append((bound, i, start))
        keys = [i for _, i, _ in children]
        if self.rng is not None and len(children) > 1:
            shuffle = rng_permutation(self.rng, len(children))
            keys = [int(shuffle[k]) for k in range(len(children))]
        order = sorted(range(len(children)), key=lambda k: (children[k][0], keys[k]))
        return [children[k] for k in order]

    def dfs(self, root: _Node) -> None:
        # path of (node, children not yet tried, worst first)
        stack: list[tuple[_Node, list[tuple[int, int, int]]]] = []
        node: _Node | None = root
        while node is not None or stack:
            if node is not None:
                self.nodes += 1
                if time.monotonic() > self.deadline:
                    raise _Timeout
                if self.cfg.node_limit is not None and self.nodes > self.cfg.node_limit:
                    self.node_limit_hit = True
                    raise _Timeout
                if node.done == self.inst.n:
                    self._record(node)
                else:
                    stack.append((node, self.expand(node)[::-1]))
                node = None
                continue
            parent, pending = stack[-1]
            if not pending:
                stack.pop()
                continue
            bound, i, start = pending.pop()
            if bound < self.best:
                node = self.apply(parent, i, start)


def solve(si: SolverInput, cfg: SolverConfig | None = None) -> Schedule:
    """Minimize makespan. Raises Infeasible when the precedence arcs contain a cycle."""
    cfg = cfg or SolverConfig()
    inst = _Instance(si)
    if inst.n == 0:
        return Schedule(status=OPTIMAL)
    search = _Search(inst, cfg)
    search.dispatch()
    status = OPTIMAL
    root_bound = search.lower_bound(search.root())
    if root_bound < search.best:
        try:
            search.dfs(search.root())
        except _Timeout:
            status = FEASIBLE if search.node_limit_hit else TIMEOUT
    assert search.best_end is not None
    entries = tuple(
        ScheduleEntry(
            job_id=si.job_ids[j] if j < len(si.job_ids) else f"J{j}",
            step_index=s,
            machine=inst.machine[i],
            start=search.best_end[i] - inst.dur[i],
            end=search.best_end[i],
        )
        for i, (j, s) in enumerate(inst.ops)
    )
    makespan = int(search.best)
    logger.info(f"solve: makespan {makespan} status {status} after {search.nodes} nodes")
    return Schedule(entries=entries, makespan=makespan, status=status, nodes=search.nodes)


def check_schedule(s: Schedule, si: SolverInput) -> ValidationReport:
    """Re-verify a schedule against its solver input, independently of the search."""
    report = ValidationReport()
    job_pos = {job_id: j for j, job_id in enumerate(si.job_ids)}
    placed: dict[tuple[int, int], ScheduleEntry] = {}
    for k, e in enumerate(s.entries):
        path = f"entries/{k}"
        j = job_pos.get(e.job_id)
        if j is None or not 0 <= e.step_index < len(si.jobs[j]):
            report.add(path, f"unknown step {e.job_id}#{e.step_index}")
            continue
        if (j, e.step_index) in placed:
            report.add(path, f"step {e.job_id}#{e.step_index} scheduled twice")
        placed[(j, e.step_index)] = e
        machine, duration = si.jobs[j][e.step_index]
        if e.machine != machine:
            report.add(path, f"machine {e.machine} but step needs {machine}")
        if e.end - e.start != duration:
            report.add(path, f"end - start = {e.end - e.start} but duration is {duration}")
        if e.start < 0:
            report.add(path, f"negative start {e.start}")

    if s.status != INFEASIBLE:
        total = sum(len(row) for row in si.jobs)
        if len(placed) != total:
            report.add("entries", f"{len(placed)} of {total} steps scheduled")

    by_machine: dict[int, list[ScheduleEntry]] = {}
    for e in placed.values():
        by_machine.setdefault(e.machine, []).append(e)
    for machine, entries in sorted(by_machine.items()):
        entries.sort(key=lambda e: (e.start, e.end))
        for a, b in zip(entries, entries[1:]):
            if b.start < a.end:
                report.add(
                    f"machine/{machine}",
                    f"{a.job_id}#{a.step_index} and {b.job_id}#{b.step_index} overlap",
                )

    arcs = [((j, st - 1), (j, st)) for j, row in enumerate(si.jobs) for st in range(1, len(row))]
    arcs += [(a, b) for a, b in si.extra_precedence]
    for a, b in arcs:
        ea, eb = placed.get(a), placed.get(b)
        if ea is not None and eb is not None and eb.start < ea.end:
            report.add(
                "precedence",
                f"{eb.job_id}#{eb.step_index} starts at {eb.start} before {ea.job_id}#{ea.step_index} ends at {ea.end}",
            )

    expected = max((e.end for e in s.entries), default=0)
    if s.makespan != expected:
        report.add("makespan", f"makespan {s.makespan} but last end is {expected}")
    return report
