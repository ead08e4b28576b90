import hashlib
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from pydantic import ValidationError

from hhmmpt.config import ExperimentConfig, ModelBlock, config_hash, load_config
from hhmmpt.energy import Beta
from hhmmpt.model import default_model

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_yaml(tmp_path, data):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return p


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.seed == 1 and cfg.sampler.mode == "single"
    assert cfg.total_sweeps == 10000 and cfg.simulation_seed == 1
    assert cfg.tempering.build_ladder().betas == (1.0, 0.75, 0.5, 0.25)
    assert cfg.tempering.build_swaps().total_sweeps == 16000
    pri = cfg.priors.build()
    assert pri.mean_prior.location == pytest.approx(math.log(100))
    assert pri.tpm_entry_prior == Beta(0.5, 0.5)


def test_default_model_matches_library_default():
    built = ExperimentConfig().model.build()
    ref = default_model()
    assert built.emissions == ref.emissions
    for a, b in zip(built.production_tpms, ref.production_tpms):
        np.testing.assert_array_equal(a.entries, b.entries)
    np.testing.assert_array_equal(built.internal_tpm.entries, ref.internal_tpm.entries)


@pytest.mark.parametrize("name", ["default.yaml", "recovery.yaml"])
def test_shipped_configs_load(name):
    cfg, digest = load_config(CONFIGS / name)
    assert digest == hashlib.sha256((CONFIGS / name).read_bytes()).hexdigest()
    cfg.model.build()


def test_recovery_config_is_four_rung_pt():
    cfg, _ = load_config(CONFIGS / "recovery.yaml")
    assert cfg.sampler.mode == "pt" and cfg.sampler.tpm_estimation
    assert cfg.total_sweeps == 16000
    assert cfg.model.preset == "table2_mle"
    assert (cfg.simulation.M, cfg.simulation.T) == (200, 60)


def test_ladder_range_form(tmp_path):
    cfg, _ = load_config(write_yaml(tmp_path, {"tempering": {"ladder": {"J": 7, "beta_min": 1 / 7}}}))
    assert len(cfg.tempering.build_ladder()) == 7


@pytest.mark.parametrize("data", [
    {"unknown": 1},
    {"sampler": {"mode": "gibbs"}},
    {"sampler": {"iterations": 100, "burn_in": 100}},
    {"sampler": {"mode": "pt", "burn_in": 20000}},
    {"tempering": {"ladder": [0.9, 0.5]}},
    {"tempering": {"ladder": {"J": 1, "beta_min": 0.5}}},
    {"simulation": {"M": 0}},
    {"simulation": {"M": 2, "T": [3]}},
    {"simulation": {"T": 0}},
    {"model": {"N": 2}},
    {"model": {"init_mode": "free"}},
    {"priors": {"zero_mass": {"a": 0}}},
    {"model": {"emissions": [{"duration": {"mean": -1, "sd": 1}}]}},
])
def test_invalid_configs_rejected(tmp_path, data):
    with pytest.raises(ValidationError):
        load_config(write_yaml(tmp_path, data))


def test_non_mapping_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("")
    cfg, _ = load_config(p)
    assert cfg == ExperimentConfig()


def test_explicit_two_state_model():
    g = {"mean": 2.0, "sd": 1.0}
    state = {"duration": g, "max_depth": g, "wiggliness": g, "zero_mass": 0.1}
    mb = ModelBlock(N=2, K=1, emissions=[state, state], production_tpms=[[[0.8, 0.2], [0.3, 0.7]]])
    m = mb.build()
    assert (m.K, m.N) == (1, 2)
    np.testing.assert_allclose(m.production_inits[0], [0.6, 0.4])


def test_config_hash_tracks_content():
    a, b = ExperimentConfig(), ExperimentConfig(seed=2)
    assert config_hash(a) == config_hash(ExperimentConfig())
    assert config_hash(a) != config_hash(b)


def test_simulation_seed_override():
    cfg = ExperimentConfig(seed=3, simulation={"seed": 11})
    assert cfg.simulation_seed == 11
