import csv
import dataclasses

import numpy as np
import pytest

from lenia_moqd import GridConfig
from lenia_moqd.config import EvolutionConfig, GenomePrior, MutationScales
from lenia_moqd.engine import (
    ArchiveSnapshot,
    Engine,
    _rng_for,
    evaluate,
    mutate,
    random_genome,
    run_trial,
    trace_frame_indices,
)
from lenia_moqd.objectives import distinctiveness, domination_fitness, sparsity
from lenia_moqd.vae import VaeConfig, VaeTrainer

from conftest import tiny_config

GRID = GridConfig(64, 64, 1)
PRIOR = GenomePrior()


class TestTraceIndices:
    def test_desk_scale_spacing(self):
        idx = trace_frame_indices(200, 8)
        assert idx.tolist() == [100, 114, 129, 143, 157, 171, 186, 200]

    def test_degenerate_single_step(self):
        idx = trace_frame_indices(1, 8)
        assert idx.tolist() == [1] * 8

    def test_bounds(self):
        for steps in (2, 9, 100, 333):
            idx = trace_frame_indices(steps, 8)
            assert idx.min() >= (steps + 1) // 2
            assert idx.max() == steps


class TestRandomGenome:
    def test_valid_and_within_prior(self):
        for i in range(20):
            g = random_genome(_rng_for(0, 0, i), PRIOR, GRID)
            g.validate(GRID)
            assert PRIOR.base_radius[0] <= g.base_radius <= PRIOR.base_radius[1]
            for k in g.kernels:
                assert PRIOR.growth_mu[0] <= k.growth_mu <= PRIOR.growth_mu[1]
            assert g.seed_pattern.shape == (PRIOR.seed_size, PRIOR.seed_size, 1)

    def test_reproducible(self):
        a = random_genome(_rng_for(5, 0, 3), PRIOR, GRID)
        b = random_genome(_rng_for(5, 0, 3), PRIOR, GRID)
        assert a.to_dict() == b.to_dict()


class TestMutate:
    def test_zero_scales_identity(self):
        parent = random_genome(_rng_for(1, 0, 0), PRIOR, GRID)
        zero = MutationScales(**{f.name: 0.0 for f in dataclasses.fields(MutationScales)})
        child = mutate(parent, zero, np.random.default_rng(0), GRID)
        assert child.to_dict() == parent.to_dict()

    def test_child_differs_and_is_valid(self):
        parent = random_genome(_rng_for(2, 0, 0), PRIOR, GRID)
        child = mutate(parent, MutationScales(), np.random.default_rng(1), GRID)
        child.validate(GRID)
        assert child.to_dict() != parent.to_dict()

    def test_clamped_at_bounds(self):
        parent = random_genome(_rng_for(3, 0, 0), PRIOR, GRID)
        parent.kernels[0].weight = 1.0
        big = MutationScales(**{f.name: 50.0 for f in dataclasses.fields(MutationScales)})
        big = dataclasses.replace(big, seed_cells=0.5)
        hit_top = 0
        for i in range(30):
            child = mutate(parent, big, np.random.default_rng(i), GRID)
            child.validate(GRID)
            w = child.kernels[0].weight
            assert 0.0 <= w <= 1.0
            hit_top += int(w == 1.0)
        assert hit_top > 0  # positive perturbations stay pinned at the bound

    def test_growth_mu_scale_statistics(self):
        parent = random_genome(_rng_for(4, 0, 0), PRIOR, GRID)
        parent.kernels[0].growth_mu = 0.2  # mid-range, clamping negligible
        scales = MutationScales(growth_mu=0.01)
        rng = np.random.default_rng(42)
        mus = [mutate(parent, scales, rng, GRID).kernels[0].growth_mu
               for _ in range(10_000)]
        std = float(np.std(mus))
        assert 0.008 <= std <= 0.012


def make_snapshot(latent_dim=8, descriptors=None, objectives=None, mean=None):
    descriptors = descriptors if descriptors is not None else np.empty((0, latent_dim))
    objectives = objectives if objectives is not None else np.empty((0, 3))
    mean = mean if mean is not None else np.zeros(latent_dim)
    return ArchiveSnapshot(archive_mean=mean, descriptors=descriptors,
                           objectives=objectives)


class TestEvaluate:
    def _encoder(self, cfg):
        vae_cfg = VaeConfig(input_dim=cfg.downsample**2 * cfg.channels,
                            hidden_dim=32, latent_dim=cfg.latent_dim, beta=cfg.vae_beta)
        return VaeTrainer(vae_cfg, seed=9).params

    def test_constant_latent_rollout_homeostasis_fitness_zero(self):
        cfg = tiny_config(fitness_mode="homeostasis")
        params = self._encoder(cfg)
        genome = random_genome(_rng_for(7, 0, 0), cfg.genome_prior, GRID)
        genome.seed_pattern = np.zeros_like(genome.seed_pattern)  # dies instantly
        ind = evaluate(genome, cfg, GRID, params, make_snapshot(), generation=0)
        assert ind is not None
        assert ind.objectives.f1 == 0.0
        assert ind.fitness == 0.0

    def test_empty_archive_multi_objective_fitness_zero(self):
        cfg = tiny_config(fitness_mode="multi_objective")
        params = self._encoder(cfg)
        genome = random_genome(_rng_for(8, 0, 0), cfg.genome_prior, GRID)
        ind = evaluate(genome, cfg, GRID, params, make_snapshot(), generation=0)
        assert ind.fitness == 0.0
        assert ind.objectives.f3 == 0.0

    def test_pure_function_of_inputs(self):
        cfg = tiny_config()
        params = self._encoder(cfg)
        genome = random_genome(_rng_for(9, 0, 0), cfg.genome_prior, GRID)
        snap = make_snapshot()
        a = evaluate(genome, cfg, GRID, params, snap, generation=3)
        b = evaluate(genome, cfg, GRID, params, snap, generation=3)
        assert np.array_equal(a.descriptor, b.descriptor)
        assert np.array_equal(a.trace.encodings, b.trace.encodings)
        assert a.objectives == b.objectives and a.fitness == b.fitness
        assert a.birth_generation == 3


class TestEngine:
    def test_bootstrap_fills_up_to_batch(self):
        cfg = tiny_config(batch_size=6, repertoire_capacity=32)
        engine = Engine(cfg)
        record, evals = engine.run_generation()
        assert record.generation == 0
        assert record.archive_size <= 6
        assert record.inserted == record.archive_size
        assert len(evals) == 6

    def test_frozen_snapshot_recomputation(self):
        cfg = tiny_config(generations=4, repertoire_capacity=6)
        engine = Engine(cfg)
        for _ in range(2):
            engine.run_generation()
        gen = engine.generation
        snap = ArchiveSnapshot.from_repertoire(engine.repertoire)
        engine.run_generation()
        for m in engine.repertoire.members:
            if m.birth_generation != gen:
                continue
            f2 = distinctiveness(m.trace, snap.archive_mean)
            f3 = sparsity(m.descriptor, snap.descriptors, cfg.sparsity_sigma)
            fit = domination_fitness(m.objectives, snap.objectives)
            assert m.objectives.f2 == f2
            assert m.objectives.f3 == f3
            assert m.fitness == fit

    def test_zero_valid_generation_logged_and_skipped(self, monkeypatch):
        cfg = tiny_config(generations=3)
        engine = Engine(cfg)
        engine.run_generation()
        size_before = len(engine.repertoire)
        monkeypatch.setattr("lenia_moqd.engine.evaluate",
                            lambda *args, **kwargs: None)
        record, evals = engine.run_generation()
        assert record.inserted == 0
        assert np.isnan(record.mean_f1) and np.isnan(record.mean_fitness)
        assert all(ev.valid == 0 for ev in evals)
        assert len(engine.repertoire) == size_before

    def test_homeostasis_mode_fitness_equals_f1(self):
        cfg = tiny_config(fitness_mode="homeostasis", generations=5)
        engine = Engine(cfg)
        engine.run()
        for m in engine.repertoire.members:
            assert m.fitness == m.objectives.f1

    def test_refresh_updates_archive_descriptors(self):
        cfg = tiny_config(generations=5, refresh_period=4, refresh_epochs=2)
        engine = Engine(cfg)
        records = engine.run()
        # refresh at generation 4 retrained the encoder: loss changed
        assert records[4].encoder_loss != records[3].encoder_loss
        expected = np.stack([m.trace.mean for m in engine.repertoire.members]).mean(axis=0)
        assert np.abs(engine.repertoire.archive_mean - expected).max() < 1e-9


class TestRunTrialDeterminism:
    def test_identical_runs_identical_logs(self, tmp_path):
        cfg = tiny_config(generations=6, seed=11)
        p1 = run_trial(cfg, tmp_path / "run1")
        p2 = run_trial(cfg, tmp_path / "run2")
        assert p1["generations_csv"].read_bytes() == p2["generations_csv"].read_bytes()
        assert p1["evaluations_csv"].read_bytes() == p2["evaluations_csv"].read_bytes()
        assert p1["repertoire"].read_bytes() == p2["repertoire"].read_bytes()
        assert p1["encoder_bin"].read_bytes() == p2["encoder_bin"].read_bytes()

    def test_thread_env_does_not_change_results(self, tmp_path, monkeypatch):
        cfg = tiny_config(generations=5, seed=13)
        p1 = run_trial(cfg, tmp_path / "serial")
        monkeypatch.setenv("LENIA_MOQD_THREADS", "4")
        p2 = run_trial(cfg, tmp_path / "threaded")
        assert p1["evaluations_csv"].read_bytes() == p2["evaluations_csv"].read_bytes()
        assert p1["repertoire"].read_bytes() == p2["repertoire"].read_bytes()

    def test_checkpoints_written_on_period(self, tmp_path):
        cfg = tiny_config(generations=9, checkpoint_period=4)
        paths = run_trial(cfg, tmp_path / "t")
        ckpts = sorted((tmp_path / "t" / "checkpoints").glob("gen_*.jsonl"))
        assert [c.name for c in ckpts] == ["gen_000004.jsonl", "gen_000008.jsonl"]

    def test_eval_log_columns(self, tmp_path):
        cfg = tiny_config(generations=3)
        paths = run_trial(cfg, tmp_path / "t")
        with open(paths["evaluations_csv"], newline="") as f:
            header = next(csv.reader(f))
        assert header == ["generation", "index", "genome_id", "valid",
                          "f1", "f2", "f3", "fitness", "inserted"]
        with open(paths["generations_csv"], newline="") as f:
            header = next(csv.reader(f))
        assert header == ["generation", "archive_size", "inserted", "mean_f1",
                          "mean_f2", "mean_f3", "mean_fitness", "encoder_loss"]
