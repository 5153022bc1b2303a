import pytest

from lenia_moqd.config import EvolutionConfig
from lenia_moqd.engine import run_trial


def tiny_config(**overrides) -> EvolutionConfig:
    """Small-but-real experiment used by CLI/metrics tests."""
    base = dict(generations=8, batch_size=4, repertoire_capacity=12,
                rollout_steps=40, pretrain_steps=100, refresh_period=4,
                checkpoint_period=4, seed=0)
    base.update(overrides)
    return EvolutionConfig(**base)


@pytest.fixture(scope="session")
def trial_dirs(tmp_path_factory):
    """Two homeostasis and two multi-objective trials sharing a config."""
    root = tmp_path_factory.mktemp("trials")
    dirs = {"homeostasis": [], "multi_objective": []}
    for mode in dirs:
        for seed in (1, 2):
            cfg = tiny_config(fitness_mode=mode, seed=seed)
            out = root / f"{mode}_seed{seed:04d}"
            run_trial(cfg, out)
            dirs[mode].append(out)
    return dirs
