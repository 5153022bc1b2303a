"""Fixed-capacity unstructured archive over the learned descriptor space.

Insertion while below capacity is unconditional; at capacity the candidate
replaces its nearest member (Euclidean descriptor distance, ties to the
lower index) iff it is strictly fitter. Parent selection is uniform with
replacement; all selection pressure enters through insertion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import Genome, GridConfig
from .objectives import ObjectiveVector
from .vae import LatentTrace


@dataclass
class Individual:
    genome: Genome
    descriptor: np.ndarray
    trace: LatentTrace
    objectives: ObjectiveVector
    fitness: float
    birth_generation: int
    # encoder-input caches for refresh re-encoding; never serialized
    pooled_final: Optional[np.ndarray] = None
    pooled_trace: Optional[np.ndarray] = None

    @property
    def genome_id(self) -> str:
        return self.genome.genome_id


class Repertoire:
    def __init__(self, capacity: int, latent_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.latent_dim = latent_dim
        self.members: List[Individual] = []
        self.archive_mean = np.zeros(latent_dim)  # E over members of their trace mean
        self.novelty_threshold = 0.0  # descriptor distance of the latest replacement

    def __len__(self) -> int:
        return len(self.members)

    def descriptor_matrix(self) -> np.ndarray:
        if not self.members:
            return np.empty((0, self.latent_dim))
        return np.stack([m.descriptor for m in self.members])

    def objective_matrix(self) -> np.ndarray:
        if not self.members:
            return np.empty((0, 3))
        return np.stack([m.objectives.as_array() for m in self.members])

    def recompute_stats(self) -> None:
        if not self.members:
            self.archive_mean = np.zeros(self.latent_dim)
        else:
            self.archive_mean = np.stack([m.trace.mean for m in self.members]).mean(axis=0)

    def try_insert(self, candidate: Individual) -> Tuple[bool, Optional[Individual]]:
        """Insert or nearest-replace; returns (inserted, evicted_or_None)."""
        if len(self.members) < self.capacity:
            self.members.append(candidate)
            self.recompute_stats()
            return True, None
        dists = np.linalg.norm(self.descriptor_matrix() - candidate.descriptor, axis=1)
        idx = int(np.argmin(dists))  # argmin keeps the lowest index on ties
        if candidate.fitness > self.members[idx].fitness:
            evicted = self.members[idx]
            self.members[idx] = candidate
            self.novelty_threshold = float(dists[idx])
            self.recompute_stats()
            return True, evicted
        return False, None

    def nearest(self, descriptor: np.ndarray, k: int) -> List[Tuple[Individual, float]]:
        """k nearest members, ascending distance, ties broken by member index."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.members:
            raise ValueError("nearest() on an empty repertoire")
        dists = np.linalg.norm(self.descriptor_matrix() - np.asarray(descriptor), axis=1)
        order = np.argsort(dists, kind="stable")[:k]
        return [(self.members[i], float(dists[i])) for i in order]

    def sample_parents(self, batch: int, rng: np.random.Generator) -> List[Genome]:
        """batch genomes drawn uniformly with replacement."""
        if not self.members:
            raise ValueError("sample_parents() on an empty repertoire")
        idx = rng.integers(0, len(self.members), size=batch)
        return [self.members[i].genome for i in idx]


def _individual_to_dict(m: Individual) -> dict:
    return {
        "genome": m.genome.to_dict(),
        "descriptor": np.asarray(m.descriptor, dtype=np.float64).tolist(),
        "trace": {
            "encodings": np.asarray(m.trace.encodings, dtype=np.float64).tolist(),
            "frame_indices": np.asarray(m.trace.frame_indices, dtype=np.int64).tolist(),
        },
        "objectives": {"f1": m.objectives.f1, "f2": m.objectives.f2, "f3": m.objectives.f3},
        "fitness": float(m.fitness),
        "birth_generation": int(m.birth_generation),
    }


def _individual_from_dict(d: dict) -> Individual:
    return Individual(
        genome=Genome.from_dict(d["genome"]),
        descriptor=np.asarray(d["descriptor"], dtype=np.float64),
        trace=LatentTrace(
            encodings=np.asarray(d["trace"]["encodings"], dtype=np.float64),
            frame_indices=np.asarray(d["trace"]["frame_indices"], dtype=np.int64),
        ),
        objectives=ObjectiveVector(**d["objectives"]),
        fitness=float(d["fitness"]),
        birth_generation=int(d["birth_generation"]),
    )


def save_repertoire(path, rep: Repertoire, grid: GridConfig) -> None:
    """JSON-lines checkpoint: one header record, then one Individual per line."""
    header = {
        "kind": "lenia-moqd-repertoire",
        "version": 1,
        "capacity": rep.capacity,
        "latent_dim": rep.latent_dim,
        "archive_mean": np.asarray(rep.archive_mean, dtype=np.float64).tolist(),
        "novelty_threshold": float(rep.novelty_threshold),
        "grid": {"height": grid.height, "width": grid.width, "channels": grid.channels},
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for m in rep.members:
            f.write(json.dumps(_individual_to_dict(m)) + "\n")


def load_repertoire(path) -> Tuple[Repertoire, GridConfig]:
    with open(path, "r", encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("kind") != "lenia-moqd-repertoire":
            raise ValueError(f"{path}: not a repertoire checkpoint")
        rep = Repertoire(capacity=header["capacity"], latent_dim=header["latent_dim"])
        rep.archive_mean = np.asarray(header["archive_mean"], dtype=np.float64)
        rep.novelty_threshold = float(header["novelty_threshold"])
        for line in f:
            line = line.strip()
            if line:
                rep.members.append(_individual_from_dict(json.loads(line)))
    grid = GridConfig(**header["grid"])
    return rep, grid
