"""Intrinsic fitness objectives and domination-count ranking.

Three objectives, all maximized:
  homeostasis      -- negated mean deviation of the latent trace from its mean
  distinctiveness  -- distance of the trace mean from the archive's mean trace
  sparsity         -- negated RBF density of the descriptor against the archive

Fitness in multi-objective mode is the negated number of archive members
that Pareto-dominate the candidate. All norms are Euclidean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vae import LatentTrace


@dataclass(frozen=True)
class ObjectiveVector:
    f1: float  # homeostasis, <= 0
    f2: float  # distinctiveness, >= 0
    f3: float  # sparsity, <= 0

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3])


def homeostasis(trace: LatentTrace) -> float:
    """Mean Euclidean deviation of the trace from its mean, negated."""
    z = np.asarray(trace.encodings)
    deviations = np.linalg.norm(z - z.mean(axis=0), axis=1)
    return -float(deviations.mean())


def distinctiveness(trace: LatentTrace, archive_mean: np.ndarray) -> float:
    """Distance of the individual's mean encoding from the archive mean."""
    return float(np.linalg.norm(trace.mean - np.asarray(archive_mean)))


def sparsity(descriptor: np.ndarray, archive_descriptors: np.ndarray, sigma: float) -> float:
    """Negated RBF kernel density of the descriptor over the archive."""
    if sigma <= 0:
        raise ValueError(f"sparsity kernel width must be > 0, got {sigma}")
    archive_descriptors = np.asarray(archive_descriptors)
    if archive_descriptors.size == 0:
        return 0.0
    sq = ((archive_descriptors - np.asarray(descriptor)) ** 2).sum(axis=1)
    return -float(np.exp(-sq / (2.0 * sigma**2)).sum())


def _vec(o) -> np.ndarray:
    return o.as_array() if isinstance(o, ObjectiveVector) else np.asarray(o, dtype=np.float64)


def dominates(a, b) -> bool:
    """True when a is at least as good as b everywhere and strictly better somewhere."""
    av, bv = _vec(a), _vec(b)
    return bool(np.all(av >= bv) and np.any(av > bv))


def domination_count(x, archive_objectives) -> int:
    """Number of archive members that dominate x (vectorized)."""
    m = np.asarray(archive_objectives, dtype=np.float64)
    if m.size == 0:
        return 0
    xv = _vec(x)
    return int((np.all(m >= xv, axis=1) & np.any(m > xv, axis=1)).sum())


def domination_fitness(x, archive_objectives) -> float:
    """Negated domination count: 0 is best, -|archive| is worst."""
    return -float(domination_count(x, archive_objectives))
