"""Generation loop: mutation, simulation, encoding, ranking, archive updates.

Two fitness modes share one pipeline. In "homeostasis" mode the scalar
fitness is exactly the homeostasis objective; in "multi_objective" mode it
is the negated domination count against a snapshot of the archive frozen
at the start of the generation. All per-individual randomness is derived
from (seed, generation, index), so results do not depend on evaluation
order or worker scheduling.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .config import EvolutionConfig, GenomePrior, MutationScales
from .core import Genome, GridConfig, KernelSpec, RingSpec, simulate
from .objectives import ObjectiveVector, distinctiveness, domination_fitness, homeostasis, sparsity
from .repertoire import Individual, Repertoire
from .vae import LatentTrace, NumericsError, VaeConfig, VaeTrainer, encode_batch, pool_frame, refresh

RING_HEIGHT_FLOOR = 1e-3  # keeps "at least one ring height > 0" under clamping


def _rng_for(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


def trace_frame_indices(steps: int, n: int) -> np.ndarray:
    """n evenly spaced frame indices over the second half of a rollout."""
    start = (steps + 1) // 2
    return np.rint(np.linspace(start, steps, n)).astype(np.int64)


def random_genome(rng: np.random.Generator, prior: GenomePrior, grid: GridConfig) -> Genome:
    """Sample a bootstrap genome uniformly from the prior ranges."""
    n_kernels = int(rng.integers(prior.kernel_count[0], prior.kernel_count[1] + 1))
    base_radius = int(rng.integers(prior.base_radius[0], prior.base_radius[1] + 1))
    dt = float(rng.uniform(*prior.dt))
    kernels = []
    for _ in range(n_kernels):
        kernels.append(KernelSpec(
            radius_fraction=float(rng.uniform(*prior.radius_fraction)),
            rings=[RingSpec(
                height=float(rng.uniform(*prior.ring_height)),
                center=float(rng.uniform(*prior.ring_center)),
                width=float(rng.uniform(*prior.ring_width)),
            )],
            growth_mu=float(rng.uniform(*prior.growth_mu)),
            growth_sigma=float(rng.uniform(*prior.growth_sigma)),
            weight=float(rng.uniform(*prior.weight)),
            source_channel=int(rng.integers(grid.channels)),
            target_channel=int(rng.integers(grid.channels)),
        ))
    seed = rng.uniform(0.0, 1.0, size=(prior.seed_size, prior.seed_size, grid.channels))
    genome = Genome(kernels=kernels, dt=dt, base_radius=base_radius, seed_pattern=seed)
    genome.validate(grid)
    return genome


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def mutate(parent: Genome, scales: MutationScales, rng: np.random.Generator,
           grid: GridConfig) -> Genome:
    """Gaussian-perturb every continuous parameter, clamped to its range."""
    r_max = min(grid.height, grid.width) // 4
    base_radius = int(_clamp(round(parent.base_radius + rng.normal(0.0, scales.base_radius)),
                             2, r_max))
    dt = _clamp(parent.dt + rng.normal(0.0, scales.dt), 1e-3, 1.0)
    kernels = []
    for k in parent.kernels:
        rf_min = 1.0 / base_radius  # keep the kernel support at least one cell
        kernels.append(KernelSpec(
            radius_fraction=_clamp(k.radius_fraction + rng.normal(0.0, scales.radius_fraction),
                                   rf_min, 1.0),
            rings=[RingSpec(
                height=_clamp(r.height + rng.normal(0.0, scales.ring_height),
                              RING_HEIGHT_FLOOR, 1.0),
                center=_clamp(r.center + rng.normal(0.0, scales.ring_center), 0.0, 1.0),
                width=_clamp(r.width + rng.normal(0.0, scales.ring_width), 1e-3, 0.5),
            ) for r in k.rings],
            growth_mu=_clamp(k.growth_mu + rng.normal(0.0, scales.growth_mu), 0.0, 1.0),
            growth_sigma=_clamp(k.growth_sigma + rng.normal(0.0, scales.growth_sigma),
                                1e-4, 0.5),
            weight=_clamp(k.weight + rng.normal(0.0, scales.weight), 0.0, 1.0),
            source_channel=k.source_channel,
            target_channel=k.target_channel,
        ))
    seed = np.asarray(parent.seed_pattern, dtype=np.float64)
    seed = np.clip(seed + rng.normal(0.0, scales.seed_cells, size=seed.shape), 0.0, 1.0)
    child = Genome(kernels=kernels, dt=dt, base_radius=base_radius, seed_pattern=seed)
    child.validate(grid)
    return child


@dataclass(frozen=True)
class ArchiveSnapshot:
    """Archive statistics frozen for one generation of evaluations."""

    archive_mean: np.ndarray
    descriptors: np.ndarray  # (N, L)
    objectives: np.ndarray   # (N, 3)

    @classmethod
    def from_repertoire(cls, rep: Repertoire) -> "ArchiveSnapshot":
        return cls(
            archive_mean=rep.archive_mean.copy(),
            descriptors=rep.descriptor_matrix(),
            objectives=rep.objective_matrix(),
        )


def score_phenotype(genome: Genome, rollout_frames: np.ndarray,
                    config: EvolutionConfig, encoder_params,
                    snapshot: ArchiveSnapshot,
                    generation: int) -> Optional[Individual]:
    """Encode an already-simulated phenotype and score it against the snapshot."""
    if not np.isfinite(rollout_frames).all():
        return None
    idx = trace_frame_indices(config.rollout_steps, config.latent_samples)
    pooled_trace = np.stack([pool_frame(rollout_frames[i], config.downsample)
                             for i in idx])
    pooled_final = pool_frame(rollout_frames[-1], config.downsample)
    try:
        encodings = encode_batch(pooled_trace, encoder_params)
        descriptor = encode_batch(pooled_final[None, :], encoder_params)[0]
    except NumericsError:
        return None
    trace = LatentTrace(encodings=encodings, frame_indices=idx)
    f1 = homeostasis(trace)
    f2 = distinctiveness(trace, snapshot.archive_mean)
    f3 = sparsity(descriptor, snapshot.descriptors, config.sparsity_sigma)
    objectives = ObjectiveVector(f1, f2, f3)
    if config.fitness_mode == "homeostasis":
        fitness = f1
    else:
        fitness = domination_fitness(objectives, snapshot.objectives)
    return Individual(
        genome=genome,
        descriptor=descriptor,
        trace=trace,
        objectives=objectives,
        fitness=fitness,
        birth_generation=generation,
        pooled_final=pooled_final,
        pooled_trace=pooled_trace,
    )


def evaluate(genome: Genome, config: EvolutionConfig, grid: GridConfig,
             encoder_params, snapshot: ArchiveSnapshot,
             generation: int) -> Optional[Individual]:
    """Simulate, encode, score. Returns None for numerically invalid individuals."""
    rollout = simulate(genome, grid, config.rollout_steps)
    return score_phenotype(genome, rollout.frames, config, encoder_params,
                           snapshot, generation)


@dataclass
class GenerationRecord:
    generation: int
    archive_size: int
    inserted: int
    mean_f1: float
    mean_f2: float
    mean_f3: float
    mean_fitness: float
    encoder_loss: float


@dataclass
class EvalRecord:
    generation: int
    index: int
    genome_id: str
    valid: int
    f1: float
    f2: float
    f3: float
    fitness: float
    inserted: int


def _worker_count() -> int:
    raw = os.environ.get("LENIA_MOQD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class Engine:
    """Owns the evolving state of one trial: encoder, repertoire, counters."""

    def __init__(self, config: EvolutionConfig):
        config.validate()
        self.config = config
        self.grid = GridConfig(config.grid_height, config.grid_width, config.channels)
        vae_cfg = VaeConfig(
            input_dim=config.downsample * config.downsample * config.channels,
            hidden_dim=config.hidden_dim,
            latent_dim=config.latent_dim,
            beta=config.vae_beta,
        )
        self.trainer = VaeTrainer(vae_cfg, seed=config.seed, lr=config.vae_lr,
                                  momentum=config.vae_momentum)
        self.repertoire = Repertoire(config.repertoire_capacity, config.latent_dim)
        self.generation = 0

    def _bootstrap_batch(self) -> List[Individual]:
        """Generation 0: random genomes, pretrain the encoder on their frames."""
        cfg = self.config
        genomes = [random_genome(_rng_for(cfg.seed, 0, i), cfg.genome_prior, self.grid)
                   for i in range(cfg.batch_size)]
        rollouts = [simulate(g, self.grid, cfg.rollout_steps) for g in genomes]
        stride = max(1, cfg.rollout_steps // 25)
        pool = np.stack([pool_frame(frame, cfg.downsample)
                         for roll in rollouts
                         for frame in roll.frames[::stride]])
        if cfg.pretrain_steps > 0:
            self.trainer.train_steps(pool, cfg.pretrain_steps, cfg.train_batch_size)
        snapshot = ArchiveSnapshot.from_repertoire(self.repertoire)
        return [score_phenotype(genome, roll.frames, cfg, self.trainer.params,
                                snapshot, generation=0)
                for genome, roll in zip(genomes, rollouts)]

    def _offspring_batch(self) -> List[Optional[Individual]]:
        cfg = self.config
        gen = self.generation
        parents = self.repertoire.sample_parents(cfg.batch_size, _rng_for(cfg.seed, gen))
        children = [mutate(parents[i], cfg.mutation, _rng_for(cfg.seed, gen, i), self.grid)
                    for i in range(cfg.batch_size)]
        snapshot = ArchiveSnapshot.from_repertoire(self.repertoire)
        params = self.trainer.params
        workers = _worker_count()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(
                    lambda g: evaluate(g, cfg, self.grid, params, snapshot, gen), children))
        return [evaluate(g, cfg, self.grid, params, snapshot, gen) for g in children]

    def run_generation(self):
        """Evaluate one batch, insert sequentially, maybe refresh the encoder.

        Returns (GenerationRecord, [EvalRecord]).
        """
        cfg = self.config
        gen = self.generation
        if gen == 0:
            individuals = self._bootstrap_batch()
        else:
            individuals = self._offspring_batch()
        eval_records = []
        inserted_count = 0
        valid = [ind for ind in individuals if ind is not None]
        for i, ind in enumerate(individuals):
            if ind is None:
                eval_records.append(EvalRecord(gen, i, "", 0, float("nan"), float("nan"),
                                               float("nan"), float("nan"), 0))
                continue
            ok, _ = self.repertoire.try_insert(ind)
            inserted_count += int(ok)
            eval_records.append(EvalRecord(gen, i, ind.genome_id, 1, ind.objectives.f1,
                                           ind.objectives.f2, ind.objectives.f3,
                                           ind.fitness, int(ok)))
        if gen > 0 and gen % cfg.refresh_period == 0 and len(self.repertoire) > 0:
            refresh(self.repertoire, self.trainer, cfg.refresh_epochs)

        def _mean(values):
            return float(np.mean(values)) if values else float("nan")

        record = GenerationRecord(
            generation=gen,
            archive_size=len(self.repertoire),
            inserted=inserted_count,
            mean_f1=_mean([v.objectives.f1 for v in valid]),
            mean_f2=_mean([v.objectives.f2 for v in valid]),
            mean_f3=_mean([v.objectives.f3 for v in valid]),
            mean_fitness=_mean([v.fitness for v in valid]),
            encoder_loss=self.trainer.last_loss,
        )
        self.generation += 1
        return record, eval_records

    def run(self, on_generation: Optional[Callable] = None):
        """Run all configured generations; the callback sees each record pair."""
        records = []
        for _ in range(self.config.generations):
            record, evals = self.run_generation()
            records.append(record)
            if on_generation is not None:
                on_generation(self, record, evals)
        return records


GENERATION_FIELDS = ("generation", "archive_size", "inserted", "mean_f1", "mean_f2",
                     "mean_f3", "mean_fitness", "encoder_loss")
EVAL_FIELDS = ("generation", "index", "genome_id", "valid", "f1", "f2", "f3",
               "fitness", "inserted")


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def run_trial(config: EvolutionConfig, out_dir) -> dict:
    """Run one seeded trial, streaming logs and checkpoints into out_dir.

    Layout: config.json, generations.csv, evaluations.csv, repertoire.jsonl,
    encoder.bin + encoder.json, checkpoints/gen_NNNNNN.jsonl.
    """
    from .config import save_config
    from .repertoire import save_repertoire
    from .vae import save_encoder

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "checkpoints").mkdir(exist_ok=True)
    save_config(out_dir / "config.json", config)
    engine = Engine(config)
    gen_path = out_dir / "generations.csv"
    eval_path = out_dir / "evaluations.csv"
    with open(gen_path, "w", newline="") as gen_f, open(eval_path, "w", newline="") as eval_f:
        gen_csv = csv.writer(gen_f)
        eval_csv = csv.writer(eval_f)
        gen_csv.writerow(GENERATION_FIELDS)
        eval_csv.writerow(EVAL_FIELDS)

        def flush(engine, record, evals):
            gen_csv.writerow([_fmt(getattr(record, k)) for k in GENERATION_FIELDS])
            for ev in evals:
                eval_csv.writerow([_fmt(getattr(ev, k)) for k in EVAL_FIELDS])
            if record.generation > 0 and record.generation % config.checkpoint_period == 0:
                save_repertoire(out_dir / "checkpoints" / f"gen_{record.generation:06d}.jsonl",
                                engine.repertoire, engine.grid)

        engine.run(on_generation=flush)
    save_repertoire(out_dir / "repertoire.jsonl", engine.repertoire, engine.grid)
    save_encoder(out_dir / "encoder.bin", out_dir / "encoder.json",
                 engine.trainer.params, engine.trainer.config, config.seed)
    return {
        "dir": out_dir,
        "generations_csv": gen_path,
        "evaluations_csv": eval_path,
        "repertoire": out_dir / "repertoire.jsonl",
        "encoder_bin": out_dir / "encoder.bin",
        "encoder_meta": out_dir / "encoder.json",
    }
