"""
Flow-grammar induction by MAP-EM over fan-pattern hypotheses.

Each procedure is reduced to the (fan-in, fan-out) shape of its flow
units. A hypothesis (P, S) admits every unit with fan-in <= P and
fan-out <= S; shapes outside the support get a fixed epsilon mass.
"""

import dataclasses
import logging
import math
import typing as t

import numpy as np

from .dsl_core import FlowGrammar
from .shop_numeric_compat import gammaln, logsumexp

logger = logging.getLogger(__name__)

OUT_OF_SUPPORT = 1e-3
PRIOR_CONCENTRATION = 2.0

Hypothesis = tuple[int, int]


@dataclasses.dataclass(frozen=True)
class UnitShape:
    fan_in: int
    fan_out: int
    anchor: int

    @property
    def pattern(self) -> Hypothesis:
        return (self.fan_in, self.fan_out)


@dataclasses.dataclass(frozen=True)
class ProcedureShape:
    doc_id: str
    n_steps: int
    units: tuple[UnitShape, ...] = ()


@dataclasses.dataclass
class EmState:
    """Final EM state: per-procedure MAP hypothesis, mixing weights,
    per-hypothesis pattern distributions and the objective history."""

    assignments: dict[str, Hypothesis]
    weights: dict[Hypothesis, float]
    theta: dict[Hypothesis, dict[Hypothesis, float]]
    grammar: FlowGrammar
    history: list[float]
    converged: bool
    admitted: list[Hypothesis]

    def to_doc(self) -> dict[str, t.Any]:
        return {
            "assignments": {k: list(v) for k, v in sorted(self.assignments.items())},
            "weights": [{"hypothesis": list(h), "weight": w} for h, w in sorted(self.weights.items())],
            "theta": [
                {"hypothesis": list(h), "patterns": [{"pattern": list(c), "p": p} for c, p in sorted(dist.items())]}
                for h, dist in sorted(self.theta.items())
            ],
            "max_pred": self.grammar.max_pred,
            "max_succ": self.grammar.max_succ,
            "history": list(self.history),
            "converged": self.converged,
            "admitted": [list(h) for h in self.admitted],
        }


def in_support(pattern: Hypothesis, h: Hypothesis) -> bool:
    return pattern[0] <= h[0] and pattern[1] <= h[1]


def window_fractions(shape: ProcedureShape, width: int) -> list[dict[Hypothesis, float]]:
    """Pattern histogram per sliding window over the step sequence, normalized per window."""
    out = []
    for i in range(max(1, shape.n_steps - width + 1)):
        counts: dict[Hypothesis, float] = {}
        for u in shape.units:
            if i <= u.anchor < i + width:
                counts[u.pattern] = counts.get(u.pattern, 0.0) + 1.0
        total = sum(counts.values())
        if total:
            out.append({c: v / total for c, v in counts.items()})
    return out


def filter_response(shapes: t.Sequence[ProcedureShape], h: Hypothesis, width: int) -> float:
    """Mean in-support window fraction of hypothesis ``h`` over the corpus."""
    scores = []
    for shape in shapes:
        windows = window_fractions(shape, width)
        if windows:
            scores.append(float(np.mean([sum(f for c, f in w.items() if in_support(c, h)) for w in windows])))
    return float(np.mean(scores)) if scores else 0.0


def admitted_hypotheses(shapes: t.Sequence[ProcedureShape], max_fan: int, width: int) -> list[Hypothesis]:
    """Linear always; any larger hypothesis whose filter response beats linear."""
    linear = (1, 1)
    observed = {u.pattern for s in shapes for u in s.units}
    top_p = min(max_fan, max((c[0] for c in observed), default=1))
    top_s = min(max_fan, max((c[1] for c in observed), default=1))
    base = filter_response(shapes, linear, width)
    out = [linear]
    for p in range(1, top_p + 1):
        for s in range(1, top_s + 1):
            h = (p, s)
            if h != linear and filter_response(shapes, h, width) > base + 1e-12:
                out.append(h)
    return out


class FlowSyntaxEM:
    def __init__(
        self,
        shapes: t.Sequence[ProcedureShape],
        max_fan: int = 4,
        width: int = 3,
        max_iters: int = 100,
        tol: float = 1e-6,
        threshold: float = 0.05,
    ) -> None:
        self.shapes = [s for s in shapes if s.units]
        self.max_fan = max_fan
        self.width = width
        self.max_iters = max_iters
        self.tol = tol
        self.threshold = threshold
        self.classes = sorted({u.pattern for s in self.shapes for u in s.units})
        self.hypotheses = admitted_hypotheses(self.shapes, max_fan, width)
        # per procedure pattern counts, classes x procedures
        self.counts = np.array(
            [[sum(1 for u in s.units if u.pattern == c) for s in self.shapes] for c in self.classes],
            dtype=float,
        ).reshape(len(self.classes), len(self.shapes))

    def _support(self, h: Hypothesis) -> np.ndarray:
        return np.array([in_support(c, h) for c in self.classes], dtype=bool)

    def _log_emission(self, h: Hypothesis, theta: np.ndarray) -> np.ndarray:
        mask = self._support(h)
        n_out = int((~mask).sum())
        eps = OUT_OF_SUPPORT if n_out else 0.0
        logp = np.full(len(self.classes), -np.inf)
        logp[mask] = np.log((1.0 - eps) * theta[mask])
        if n_out:
            logp[~mask] = math.log(eps / n_out)
        return logp

    def _log_dirichlet(self, p: np.ndarray) -> float:
        a = PRIOR_CONCENTRATION
        k = len(p)
        if k == 0:
            return 0.0
        return float(gammaln(a * k) - k * gammaln(a) + (a - 1.0) * np.log(p).sum())

    def _objective(self, log_joint: np.ndarray, pi: np.ndarray, thetas: list[np.ndarray]) -> float:
        total = float(logsumexp(log_joint, axis=0).sum())
        total += self._log_dirichlet(pi)
        for h, theta in zip(self.hypotheses, thetas):
            total += self._log_dirichlet(theta[self._support(h)])
        return total

    def _log_joint(self, pi: np.ndarray, thetas: list[np.ndarray]) -> np.ndarray:
        rows = []
        for h, theta, w in zip(self.hypotheses, thetas, pi):
            emit = self._log_emission(h, theta)
            safe = np.where(self.counts > 0, self.counts * emit[:, None], 0.0)
            rows.append(math.log(w) + safe.sum(axis=0))
        return np.array(rows)

    def run(self) -> EmState:
        if not self.shapes:
            return EmState({}, {(1, 1): 1.0}, {(1, 1): {(1, 1): 1.0}}, FlowGrammar.base(), [], True, [(1, 1)])
        H = len(self.hypotheses)
        pi = np.full(H, 1.0 / H)
        thetas = []
        for h in self.hypotheses:
            mask = self._support(h)
            theta = np.zeros(len(self.classes))
            theta[mask] = 1.0 / max(int(mask.sum()), 1)
            thetas.append(theta)

        history: list[float] = []
        converged = False
        resp = np.zeros((H, len(self.shapes)))
        for it in range(self.max_iters):
            log_joint = self._log_joint(pi, thetas)
            history.append(self._objective(log_joint, pi, thetas))
            if len(history) >= 2 and history[-1] - history[-2] < self.tol:
                converged = True
                break
            # E-step
            resp = np.exp(log_joint - logsumexp(log_joint, axis=0))
            # M-step with Dirichlet smoothing
            a = PRIOR_CONCENTRATION
            pi = (resp.sum(axis=1) + a - 1.0) / (len(self.shapes) + H * (a - 1.0))
            for k, h in enumerate(self.hypotheses):
                mask = self._support(h)
                expected = (self.counts * resp[k][None, :]).sum(axis=1) + a - 1.0
                theta = np.zeros(len(self.classes))
                theta[mask] = expected[mask] / expected[mask].sum()
                thetas[k] = theta
            logger.debug(f"flow syntax EM iteration {it}: objective {history[-1]:.6f}")
        if not converged:
            logger.warning(f"flow syntax EM hit {self.max_iters} iterations without converging")

        log_joint = self._log_joint(pi, thetas)
        best = np.argmax(log_joint, axis=0)
        assignments = {s.doc_id: self.hypotheses[int(b)] for s, b in zip(self.shapes, best)}
        weights = {h: float(w) for h, w in zip(self.hypotheses, pi)}
        supported = [h for h, w in weights.items() if w > self.threshold] or [(1, 1)]
        grammar = FlowGrammar.bounded(max(h[0] for h in supported), max(h[1] for h in supported))
        theta_doc = {
            h: {c: float(p) for c, p, m in zip(self.classes, theta, self._support(h)) if m}
            for h, theta in zip(self.hypotheses, thetas)
        }
        logger.info(f"flow syntax grammar ({grammar.max_pred}, {grammar.max_succ}) from {len(self.shapes)} procedures")
        return EmState(assignments, weights, theta_doc, grammar, history, converged, list(self.hypotheses))


def induce_flow_grammar(shapes: t.Sequence[ProcedureShape], **kwargs: t.Any) -> EmState:
    return FlowSyntaxEM(shapes, **kwargs).run()
