"""Experiment configuration: desk-scale defaults, strict JSON loading, hashing.

Config files are JSON mirroring EvolutionConfig field names; unknown keys
are rejected so a run's provenance is unambiguous. Full-scale values
(2500 generations, batch 256, capacity 1024) are reached by overriding the
desk defaults in the file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Tuple

FITNESS_MODES = ("homeostasis", "multi_objective")


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""


@dataclass
class MutationScales:
    """Gaussian perturbation std per continuous genome parameter."""

    ring_height: float = 0.05
    ring_center: float = 0.03
    ring_width: float = 0.02
    radius_fraction: float = 0.03
    growth_mu: float = 0.01
    growth_sigma: float = 0.002
    weight: float = 0.05
    dt: float = 0.005
    base_radius: float = 0.3
    seed_cells: float = 0.05


@dataclass
class GenomePrior:
    """Uniform sampling ranges for bootstrap genomes."""

    kernel_count: Tuple[int, int] = (1, 1)
    base_radius: Tuple[int, int] = (10, 16)
    radius_fraction: Tuple[float, float] = (0.7, 1.0)
    ring_height: Tuple[float, float] = (0.5, 1.0)
    ring_center: Tuple[float, float] = (0.2, 0.8)
    ring_width: Tuple[float, float] = (0.08, 0.25)
    growth_mu: Tuple[float, float] = (0.08, 0.32)
    growth_sigma: Tuple[float, float] = (0.008, 0.06)
    weight: Tuple[float, float] = (0.5, 1.0)
    dt: Tuple[float, float] = (0.1, 0.1)
    seed_size: int = 16


@dataclass
class EvolutionConfig:
    generations: int = 300
    batch_size: int = 16
    repertoire_capacity: int = 128
    fitness_mode: str = "multi_objective"
    seed: int = 0

    grid_height: int = 64
    grid_width: int = 64
    channels: int = 1
    rollout_steps: int = 200

    latent_samples: int = 8       # trace length n for the homeostasis objective
    sparsity_sigma: float = 1.0   # RBF kernel width in latent units

    latent_dim: int = 8
    hidden_dim: int = 256
    downsample: int = 32
    vae_beta: float = 0.1
    vae_lr: float = 1e-3
    vae_momentum: float = 0.9
    train_batch_size: int = 32
    pretrain_steps: int = 500
    refresh_period: int = 50
    refresh_epochs: int = 3

    checkpoint_period: int = 100

    mutation: MutationScales = field(default_factory=MutationScales)
    genome_prior: GenomePrior = field(default_factory=GenomePrior)

    def validate(self) -> None:
        counts = {
            "generations": self.generations,
            "batch_size": self.batch_size,
            "repertoire_capacity": self.repertoire_capacity,
            "rollout_steps": self.rollout_steps,
            "latent_samples": self.latent_samples,
            "latent_dim": self.latent_dim,
            "hidden_dim": self.hidden_dim,
            "downsample": self.downsample,
            "train_batch_size": self.train_batch_size,
            "refresh_period": self.refresh_period,
            "checkpoint_period": self.checkpoint_period,
        }
        for key, value in counts.items():
            if value < 1:
                raise ConfigError(f"{key} must be >= 1, got {value}")
        if self.fitness_mode not in FITNESS_MODES:
            raise ConfigError(
                f"fitness_mode must be one of {FITNESS_MODES}, got {self.fitness_mode!r}")
        if self.sparsity_sigma <= 0:
            raise ConfigError(f"sparsity_sigma must be > 0, got {self.sparsity_sigma}")
        if self.vae_lr <= 0:
            raise ConfigError(f"vae_lr must be > 0, got {self.vae_lr}")
        if not 0.0 <= self.vae_momentum < 1.0:
            raise ConfigError(f"vae_momentum must be in [0, 1), got {self.vae_momentum}")
        if self.pretrain_steps < 0 or self.refresh_epochs < 0:
            raise ConfigError("pretrain_steps and refresh_epochs must be >= 0")
        for name in ("grid_height", "grid_width"):
            n = getattr(self, name)
            if n < 4 or (n & (n - 1)) != 0:
                raise ConfigError(f"{name} must be a power of two >= 4, got {n}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.grid_height % self.downsample or self.grid_width % self.downsample:
            raise ConfigError(
                f"downsample {self.downsample} must divide grid "
                f"{self.grid_height}x{self.grid_width}")
        for f in fields(MutationScales):
            v = getattr(self.mutation, f.name)
            if v <= 0:
                raise ConfigError(f"mutation.{f.name} must be > 0, got {v}")
        p = self.genome_prior
        for f in fields(GenomePrior):
            v = getattr(p, f.name)
            if f.name == "seed_size":
                continue
            lo, hi = v
            if lo > hi:
                raise ConfigError(f"genome_prior.{f.name}: bounds reversed {v}")
        if not 1 <= p.kernel_count[0]:
            raise ConfigError("genome_prior.kernel_count lower bound must be >= 1")
        if p.kernel_count[1] > 16:
            raise ConfigError("genome_prior.kernel_count upper bound must be <= 16")
        r_max = min(self.grid_height, self.grid_width) // 4
        if p.base_radius[0] < 2 or p.base_radius[1] > r_max:
            raise ConfigError(f"genome_prior.base_radius must stay within [2, {r_max}]")
        if not 1 <= p.seed_size <= min(self.grid_height, self.grid_width) // 2:
            raise ConfigError("genome_prior.seed_size exceeds half the grid")

    def to_dict(self) -> dict:
        return asdict(self)


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in fields(cls)}
    extra = set(data) - set(known)
    if extra:
        where = f" in {path}" if path else ""
        raise ConfigError(f"unknown config key{'s' if len(extra) > 1 else ''}"
                          f"{where}: {', '.join(sorted(extra))}")
    kwargs = {}
    for name, value in data.items():
        if name == "mutation":
            kwargs[name] = _from_dict(MutationScales, value, "mutation")
        elif name == "genome_prior":
            kwargs[name] = _from_dict(GenomePrior, value, "genome_prior")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> EvolutionConfig:
    cfg = _from_dict(EvolutionConfig, data, "")
    cfg.validate()
    return cfg


def load_config(path) -> EvolutionConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read()
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {path}: {e}")
    return config_from_dict(data)


def canonical_config_hash(path) -> str:
    """sha256 of the canonicalized config file bytes (parsed, sorted, compact)."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_config(path, cfg: EvolutionConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
