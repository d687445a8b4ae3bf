"""
Compatibility layer for the numpy / scipy versions shopdsl supports.

Samplers and the EM code go through this module instead of importing
version-dependent names directly.
"""

import typing as t

import numpy as np
import scipy
from packaging import version

NUMPY_VERSION = version.parse(np.__version__)
SCIPY_VERSION = version.parse(scipy.__version__)
HAS_GENERATOR = NUMPY_VERSION >= version.parse("1.17")
IS_NUMPY_2 = NUMPY_VERSION.major >= 2

if SCIPY_VERSION >= version.parse("1.0"):
    from scipy.special import gammaln, logsumexp
else:  # pragma: no cover
    from scipy.misc import logsumexp  # type: ignore[no-redef]
    from scipy.special import gammaln


def make_rng(seed: int) -> t.Any:
    """Seeded random generator (Generator API when available)."""
    if HAS_GENERATOR:
        return np.random.default_rng(seed)
    return np.random.RandomState(seed)  # pragma: no cover


def rng_choice_index(rng: t.Any, probs: np.ndarray) -> int:
    """Draw one index from a normalized probability vector."""
    u = float(rng.random()) if HAS_GENERATOR else float(rng.random_sample())
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def rng_integers(rng: t.Any, low: int, high: int) -> int:
    """Uniform integer in [low, high] inclusive."""
    if HAS_GENERATOR:
        return int(rng.integers(low, high + 1))
    return int(rng.randint(low, high + 1))  # pragma: no cover


def rng_permutation(rng: t.Any, n: int) -> list[int]:
    """Seeded permutation of range(n)."""
    return [int(i) for i in rng.permutation(n)]


__all__ = [
    "NUMPY_VERSION",
    "SCIPY_VERSION",
    "HAS_GENERATOR",
    "IS_NUMPY_2",
    "gammaln",
    "logsumexp",
    "make_rng",
    "rng_choice_index",
    "rng_integers",
    "rng_permutation",
]
