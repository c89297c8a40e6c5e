import math
from pathlib import Path

import pytest
import yaml

from app.exceptions import InvalidConfigurationError, MissingRequiredDataError
from app.parsers import ConfigParser
from app.radar_model import DEFAULT_RADAR
from app.solvers.admm import SolverParams


EXAMPLES = Path(__file__).resolve().parent.parent / "configs" / "examples"


def test_defaults_without_sections():
    parser = ConfigParser({})
    assert parser.radar_config() == DEFAULT_RADAR
    assert parser.grid_sizes() == (5, 5, 3, 2)
    assert parser.solver_params() == SolverParams()
    assert parser.solver_params("single_penalty").rho == 0.5
    assert parser.stopping_rule().mode == "oracle"
    assert parser.n_stages() == 5
    assert parser.workers() == 1
    assert parser.acceptance() == {}


def test_example_radar_config():
    parser = ConfigParser.from_file(EXAMPLES / "radar.yaml")
    dictionary = parser.dictionary()
    assert (dictionary.dim, dictionary.n_atoms) == (64, 150)
    spec = parser.scene_spec()
    assert math.isinf(spec.snr_db)
    assert parser.n_stages() == 9


def test_exponents_without_decimal_point():
    parser = ConfigParser(yaml.safe_load("stopping:\n  tol: 1e-6\nradar:\n  f0: 2e9\n"))
    assert parser.stopping_rule().tol == 1e-6
    assert parser.radar_config().f0 == 2e9


def test_invalid_fields_are_collected():
    parser = ConfigParser({"solver": {"rho": "fast", "alpha": 2.5, "lambda3": 1.0}})
    with pytest.raises(InvalidConfigurationError) as raised:
        parser.solver_params()
    errors = raised.value.details["errors"]
    assert len(errors) == 3
    assert any("lambda3" in e for e in errors)


def test_domain_errors_become_configuration_errors():
    with pytest.raises(InvalidConfigurationError):
        ConfigParser({"solver": {"rho": 0.0}}).solver_params()
    with pytest.raises(InvalidConfigurationError):
        ConfigParser({"train": {"epochs": 10, "lr_period": 15}}).train_config()


def test_missing_mandatory_experiment_fields():
    with pytest.raises(MissingRequiredDataError) as raised:
        ConfigParser({"experiment": {"kind": "snr"}}).experiment_config()
    assert raised.value.details["missing"] == ["sweep"]


def test_integer_fields_reject_fractions_and_booleans():
    with pytest.raises(InvalidConfigurationError):
        ConfigParser({"grid": {"m_tau": 2.5}}).grid_sizes()
    with pytest.raises(InvalidConfigurationError):
        ConfigParser({"network": {"n_stages": True}}).n_stages()
    assert ConfigParser({"grid": {"m_tau": 3.0}}).grid_sizes()[0] == 3


def test_scene_randomize_ranges():
    spec = ConfigParser({"scene": {"randomize": {"snr_db": [0, 20], "b_nnz": [4, 32]}}}).scene_spec()
    assert spec.randomize == {"snr_db": (0.0, 20.0), "b_nnz": (4.0, 32.0)}
    with pytest.raises(InvalidConfigurationError):
        ConfigParser({"scene": {"randomize": {"snr_db": [20, 0]}}}).scene_spec()


def test_train_config_and_size():
    parser = ConfigParser.from_file(EXAMPLES / "train.yaml")
    assert parser.train_config().val_fraction == 0.05
    assert parser.n_train() == 200000


def test_section_hash_ignores_formatting():
    a = ConfigParser({"solver": {"rho": 0.01, "alpha": 1.5}})
    b = ConfigParser({"solver": {"alpha": 1.50, "rho": 1e-2}})
    assert a.section_hash("solver") == b.section_hash("solver")
    assert a.section_hash("solver") != ConfigParser({"solver": {"rho": 0.02}}).section_hash("solver")


def test_unknown_section():
    with pytest.raises(InvalidConfigurationError):
        ConfigParser({}).parse_section("network_weights")


@pytest.mark.parametrize("name", ["bench_stages", "bench_snr", "bench_sir", "bench_sparsity_w", "bench_sparsity_b",
                                  "bench_image", "bench_time"])
def test_example_bench_configs(name):
    config = ConfigParser.from_file(EXAMPLES / f"{name}.yaml").experiment_config()
    assert config.sweep
    assert config.methods


def test_experiment_kind_override():
    parser = ConfigParser.from_file(EXAMPLES / "bench_sparsity_b.yaml")
    config = parser.experiment_config(kind="w_sparsity")
    assert config.kind == "w_sparsity"
    with pytest.raises(InvalidConfigurationError):
        parser.experiment_config(kind="doppler")


def test_from_file_errors(tmp_path):
    with pytest.raises(InvalidConfigurationError):
        ConfigParser.from_file(tmp_path / "absent.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("solver: [rho: 1\n")
    with pytest.raises(InvalidConfigurationError):
        ConfigParser.from_file(broken)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(InvalidConfigurationError):
        ConfigParser.from_file(listing)
