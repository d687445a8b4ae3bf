"""
Collapsed Gibbs samplers for Dirichlet-process mixtures.

Two likelihoods are supported: categorical feature vectors with a
Dirichlet-multinomial per feature, and 1-D values with a Normal base
measure and known observation noise. Both share the CRP bookkeeping in
``_CrpSampler``.
"""

import dataclasses
import logging
import math
import typing as t
from collections import Counter

import numpy as np
from scipy import stats

from .shop_numeric_compat import gammaln, logsumexp, make_rng, rng_choice_index, rng_permutation

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class SamplerResult:
    """Best assignment seen plus the per-sweep joint log-likelihood trace."""

    assignments: list[int]
    log_likelihood: list[float]
    best_log_likelihood: float
    sweeps: int
    converged: bool

    @property
    def n_clusters(self) -> int:
        return len(set(self.assignments))

    def clusters(self) -> list[list[int]]:
        """Member indices per cluster, ordered by first member."""
        groups: dict[int, list[int]] = {}
        for i, k in enumerate(self.assignments):
            groups.setdefault(k, []).append(i)
        return sorted(groups.values(), key=lambda g: g[0])


def window_means(trace: t.Sequence[float], burn_in: int, window: int) -> list[float]:
    """Means of consecutive non-overlapping windows after burn-in."""
    tail = list(trace[burn_in:])
    return [float(np.mean(tail[i : i + window])) for i in range(0, len(tail) - window + 1, window)]


def plateau_tolerance(trace: t.Sequence[float], burn_in: int, window: int) -> float:
    """Three standard errors of a window mean, from the post burn-in spread."""
    tail = np.asarray(trace[burn_in:], dtype=float)
    if len(tail) < 2:
        return 0.0
    return 3.0 * float(np.std(tail)) / math.sqrt(window)


def smoothed_trend_ok(trace: t.Sequence[float], burn_in: int, window: int) -> bool:
    """True when no window mean drops below its predecessor by more than the plateau tolerance."""
    means = window_means(trace, burn_in, window)
    tol = plateau_tolerance(trace, burn_in, window)
    return all(b >= a - tol - 1e-9 for a, b in zip(means, means[1:]))


class _CrpSampler:
    """CRP bookkeeping shared by both likelihoods. Subclasses supply the
    predictive and marginal terms."""

    def __init__(self, n: int, alpha: float, seed: int) -> None:
        self.n = n
        self.alpha = alpha
        self.rng = make_rng(seed)
        # singleton initialization
        self.z = list(range(n))
        self.sizes: Counter[int] = Counter(self.z)
        self._next = n

    def _add(self, i: int, k: int) -> None:
        raise NotImplementedError

    def _remove(self, i: int, k: int) -> None:
        raise NotImplementedError

    def _log_pred(self, i: int, k: int | None) -> float:
        raise NotImplementedError

    def _log_marginal(self) -> float:
        raise NotImplementedError

    def log_joint(self) -> float:
        """log p(z) under the CRP plus the collapsed data marginal."""
        sizes = [c for c in self.sizes.values() if c > 0]
        crp = len(sizes) * math.log(self.alpha) + sum(float(gammaln(c)) for c in sizes)
        crp += float(gammaln(self.alpha) - gammaln(self.alpha + self.n))
        return crp + self._log_marginal()

    def sweep(self) -> None:
        for i in rng_permutation(self.rng, self.n):
            old = self.z[i]
            self._remove(i, old)
            self.sizes[old] -= 1
            if self.sizes[old] == 0:
                del self.sizes[old]
            labels = sorted(self.sizes)
            logp = [math.log(self.sizes[k]) + self._log_pred(i, k) for k in labels]
            logp.append(math.log(self.alpha) + self._log_pred(i, None))
            arr = np.asarray(logp)
            probs = np.exp(arr - logsumexp(arr))
            pick = rng_choice_index(self.rng, probs)
            if pick == len(labels):
                k = self._next
                self._next += 1
            else:
                k = labels[pick]
            self.z[i] = k
            self.sizes[k] += 1
            self._add(i, k)

    def run(self, max_sweeps: int, burn_in: int, window: int) -> SamplerResult:
        if self.n == 0:
            return SamplerResult([], [], 0.0, 0, True)
        best_z = list(self.z)
        best_ll = self.log_joint()
        trace: list[float] = []
        converged = False
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            self.sweep()
            ll = self.log_joint()
            trace.append(ll)
            if ll > best_ll + 1e-12:
                best_ll, best_z = ll, list(self.z)
            means = window_means(trace, burn_in, window)
            if len(means) >= 2 and abs(means[-1] - means[-2]) <= plateau_tolerance(trace, burn_in, window) + 1e-9:
                converged = True
                break
        if not converged:
            logger.warning(f"Gibbs sampler stopped at {sweeps} sweeps without reaching a plateau")
        return SamplerResult(_relabel(best_z), trace, best_ll, sweeps, converged)


def _relabel(z: list[int]) -> list[int]:
    seen: dict[int, int] = {}
    return [seen.setdefault(k, len(seen)) for k in z]


class CategoricalDPMM(_CrpSampler):
    """DP mixture over tuples of categorical features, symmetric Dirichlet(beta) per feature."""

    def __init__(self, data: t.Sequence[tuple[t.Hashable, ...]], alpha: float = 1.0, beta: float = 0.5, seed: int = 0) -> None:
        super().__init__(len(data), alpha, seed)
        self.beta = beta
        self.n_features = len(data[0]) if data else 0
        vocab = [sorted({row[f] for row in data}, key=repr) for f in range(self.n_features)]
        index = [{v: j for j, v in enumerate(vs)} for vs in vocab]
        self.sizes_v = [len(vs) for vs in vocab]
        self.x = [tuple(index[f][row[f]] for f in range(self.n_features)) for row in data]
        self.counts: dict[int, list[Counter[int]]] = {}
        for i, k in enumerate(self.z):
            self._add(i, k)

    def _add(self, i: int, k: int) -> None:
        rows = self.counts.setdefault(k, [Counter() for _ in range(self.n_features)])
        for f, v in enumerate(self.x[i]):
            rows[f][v] += 1

    def _remove(self, i: int, k: int) -> None:
        rows = self.counts[k]
        for f, v in enumerate(self.x[i]):
            rows[f][v] -= 1
        if self.sizes[k] <= 1:
            del self.counts[k]

    def _log_pred(self, i: int, k: int | None) -> float:
        total = 0.0
        n_k = self.sizes[k] if k is not None else 0
        for f, v in enumerate(self.x[i]):
            c = self.counts[k][f][v] if k is not None else 0
            total += math.log((c + self.beta) / (n_k + self.sizes_v[f] * self.beta))
        return total

    def _log_marginal(self) -> float:
        total = 0.0
        for k, rows in self.counts.items():
            n_k = self.sizes[k]
            for f, row in enumerate(rows):
                vb = self.sizes_v[f] * self.beta
                total += float(gammaln(vb) - gammaln(n_k + vb))
                total += sum(float(gammaln(c + self.beta) - gammaln(self.beta)) for c in row.values() if c > 0)
        return total


class GaussianDP1D(_CrpSampler):
    """DP mixture of 1-D Normals with known noise ``s`` and a Normal base measure."""

    def __init__(self, values: t.Sequence[float], noise: float, alpha: float = 1.0, seed: int = 0) -> None:
        super().__init__(len(values), alpha, seed)
        self.x = np.asarray(values, dtype=float)
        self.s2 = noise**2
        self.mu0 = float(np.mean(self.x)) if self.n else 0.0
        spread = float(np.std(self.x)) if self.n else 0.0
        self.t2 = max(spread, noise) ** 2
        self.sums: dict[int, float] = {}
        for i, k in enumerate(self.z):
            self._add(i, k)

    def _add(self, i: int, k: int) -> None:
        self.sums[k] = self.sums.get(k, 0.0) + float(self.x[i])

    def _remove(self, i: int, k: int) -> None:
        self.sums[k] -= float(self.x[i])
        if self.sizes[k] <= 1:
            del self.sums[k]

    def _posterior(self, n: int, total: float) -> tuple[float, float]:
        var = 1.0 / (1.0 / self.t2 + n / self.s2)
        return var * (self.mu0 / self.t2 + total / self.s2), var

    def _log_pred(self, i: int, k: int | None) -> float:
        n = self.sizes[k] if k is not None else 0
        mean, var = self._posterior(n, self.sums[k] if k is not None else 0.0)
        return float(stats.norm.logpdf(self.x[i], loc=mean, scale=math.sqrt(var + self.s2)))

    def _log_marginal(self) -> float:
        # sequential predictive within each cluster
        members: dict[int, list[float]] = {}
        for i, k in enumerate(self.z):
            members.setdefault(k, []).append(float(self.x[i]))
        total = 0.0
        for vals in members.values():
            acc = 0.0
            for j, v in enumerate(vals):
                mean, var = self._posterior(j, acc)
                total += float(stats.norm.logpdf(v, loc=mean, scale=math.sqrt(var + self.s2)))
                acc += v
        return total

    def atoms(self, z: t.Sequence[int]) -> list[tuple[float, float, int]]:
        """(mean, std, size) per cluster of assignment ``z``, by mean."""
        groups: dict[int, list[float]] = {}
        for i, k in enumerate(z):
            groups.setdefault(k, []).append(float(self.x[i]))
        return sorted((float(np.mean(v)), float(np.std(v)), len(v)) for v in groups.values())
