import numpy as np
import pytest

from app.exceptions import DimensionMismatchError, DomainError
from app.radar_model import build_dictionary, build_grid
from app.scene_gen import (Dataset, DatasetGenerator, SceneSpec, calibrate_interference, calibrate_noise,
                           carrier_steps, epsilon_support, generate_dataset, interference_support, place_scene,
                           resolve_spec, sample_scene, sample_seed)


def pulse_pairs(support, cfg):
    """(channel, sweep, pulse) triples of flat measurement indices."""
    channel, pulse = np.divmod(support, cfg.n_pulses)
    sweep, step = np.divmod(pulse, cfg.n_freq)
    return channel, sweep, step


def assert_all_channels(support, cfg):
    channel, sweep, step = pulse_pairs(support, cfg)
    pairs = set(zip(sweep.tolist(), step.tolist()))
    assert len(support) == len(pairs) * cfg.n_channels
    for m, n in pairs:
        for ch in range(cfg.n_channels):
            assert ch * cfg.n_pulses + m * cfg.n_freq + n in set(support.tolist())


def test_calibrate_noise():
    assert calibrate_noise(float("inf"), 2, 64) == 0.0
    assert calibrate_noise(0.0, 2, 64) == pytest.approx(0.03125)
    assert calibrate_noise(15.0, 2, 64) == pytest.approx(9.882e-4, rel=1e-3)


def test_calibrate_interference():
    assert calibrate_interference(0.0, 2, 16) == pytest.approx(0.125)
    assert calibrate_interference(-5.0, 2, 16) == pytest.approx(0.3953, rel=1e-3)
    assert calibrate_interference(3.0, 0, 16) == 0.0
    assert calibrate_interference(float("inf"), 2, 0) == 0.0
    with pytest.raises(DomainError):
        calibrate_interference(0.0, 2, 0)


def test_interference_support_one_pulse_per_sweep(radar, rng):
    support = interference_support(16, radar, rng)
    assert support.size == 16
    _, sweep, _ = pulse_pairs(support, radar)
    assert np.bincount(sweep, minlength=4).tolist() == [4, 4, 4, 4]
    assert_all_channels(support, radar)


def test_interference_support_remainder(radar, rng):
    for _ in range(1000):
        support = interference_support(8, radar, rng)
        assert support.size == 8
        _, sweep, _ = pulse_pairs(support, radar)
        per_sweep = np.bincount(sweep, minlength=4) // radar.n_channels
        assert sorted(per_sweep.tolist()) == [0, 0, 1, 1]


def test_interference_support_edge_cases(radar, rng):
    assert interference_support(0, radar, rng).size == 0
    assert interference_support(64, radar, rng).tolist() == list(range(64))
    with pytest.raises(DomainError, match="divisible"):
        interference_support(6, radar, rng)


def test_epsilon_support(radar, rng):
    assert carrier_steps(radar, 8).tolist() == [0, 0, 1, 1, 2, 2, 3, 3]
    assert epsilon_support(0.0, radar, rng).size == 0
    assert epsilon_support(1.0, radar, rng).size == 64
    support = epsilon_support(0.3, radar, rng)
    assert support.size % radar.n_channels == 0
    assert_all_channels(support, radar)


def test_sample_scene_structure(dictionary):
    spec = SceneSpec(w_nnz=2, b_nnz=16, snr_db=float("inf"), sir_db=0.0)
    sample = sample_scene(dictionary, spec, 5)
    assert np.count_nonzero(sample.w) == 2
    assert np.count_nonzero(sample.b) == 16
    assert sample.e_sigma2 == 0.0
    assert np.allclose(sample.y, dictionary.phi @ sample.w + sample.b)
    assert np.allclose(sample.y, dictionary.a_aug @ sample.x)
    assert_all_channels(np.flatnonzero(sample.b), dictionary.config)
    assert sample.seed == 5


def test_sample_scene_is_deterministic(dictionary):
    spec = SceneSpec(snr_db=15.0)
    a, b = sample_scene(dictionary, spec, 99), sample_scene(dictionary, spec, 99)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.w, b.w) and np.array_equal(a.b, b.b)
    assert not np.array_equal(a.y, sample_scene(dictionary, spec, 100).y)


def test_calibration_over_many_samples(dictionary):
    spec = SceneSpec(w_nnz=2, b_nnz=16, snr_db=15.0, sir_db=0.0)
    dataset = generate_dataset(dictionary, spec, 10000, master_seed=3)
    signal = np.sum(np.abs(dataset.w @ dictionary.phi.T) ** 2, axis=1)
    interference = np.sum(np.abs(dataset.b) ** 2, axis=1)
    noise = np.sum(np.abs(dataset.y - dataset.w @ dictionary.phi.T - dataset.b) ** 2, axis=1)
    assert np.mean(interference) / np.mean(signal) == pytest.approx(1.0, rel=0.05)
    assert np.mean(signal) / np.mean(noise) == pytest.approx(10 ** 1.5, rel=0.05)
    for index in range(0, 10000, 500):
        assert_all_channels(np.flatnonzero(dataset.b[index]), dictionary.config)


def test_randomized_spec(dictionary, rng):
    spec = SceneSpec(randomize={"snr_db": (5.0, 20.0), "b_nnz": (4, 30), "w_nnz": (1, 3)})
    for _ in range(200):
        drawn = resolve_spec(spec, dictionary.config, rng)
        assert drawn.randomize is None
        assert 5.0 <= drawn.snr_db <= 20.0
        assert drawn.b_nnz in (4, 8, 12, 16, 20, 24, 28)
        assert 1 <= drawn.w_nnz <= 3


def test_randomized_snr_is_flat(dictionary):
    spec = SceneSpec(randomize={"snr_db": (5.0, 20.0)})
    dataset = generate_dataset(dictionary, spec, 3000, master_seed=8)
    counts, _ = np.histogram(dataset.meta["snr_db"], bins=5, range=(5.0, 20.0))
    expected = 3000 / 5
    sigma = np.sqrt(3000 * 0.2 * 0.8)
    assert np.all(np.abs(counts - expected) < 4 * sigma)


def test_spec_validation(dictionary):
    with pytest.raises(DomainError):
        SceneSpec(interference_mode="bursty")
    with pytest.raises(DomainError):
        SceneSpec(randomize={"sigma_x2": (1, 2)})
    with pytest.raises(DomainError):
        SceneSpec(w_nnz=151).check(dictionary)


def test_place_scene(dictionary, rng):
    w = np.zeros(dictionary.n_atoms, dtype=complex)
    w[[10, 11]] = [2.4, 0.3]
    sample = place_scene(dictionary, w, 16, float("inf"), 0.0, rng)
    assert sample.beta == pytest.approx((2.4 ** 2 + 0.3 ** 2) / 16)
    assert np.allclose(sample.y, dictionary.phi @ w + sample.b)
    with pytest.raises(DimensionMismatchError):
        place_scene(dictionary, w[:-1], 16, 15.0, 0.0, rng)


def test_dataset_matches_sample_scene(dictionary):
    spec = SceneSpec(snr_db=15.0)
    dataset = generate_dataset(dictionary, spec, 1, master_seed=42)
    sample = sample_scene(dictionary, spec, sample_seed(42, 0))
    assert np.array_equal(dataset.y[0], sample.y)
    assert dataset.meta["seed"][0] == sample_seed(42, 0)


def test_generation_is_independent_of_workers(tiny_dictionary):
    spec = SceneSpec(w_nnz=1, b_nnz=2, snr_db=10.0)
    serial = DatasetGenerator(1).generate(tiny_dictionary, spec, 40, 6)
    parallel = DatasetGenerator(2).generate(tiny_dictionary, spec, 40, 6)
    assert np.array_equal(serial.y, parallel.y)


def test_dataset_round_trip(dictionary, tmp_path):
    dataset = generate_dataset(dictionary, SceneSpec(snr_db=10.0, randomize={"sir_db": (-5.0, 5.0)}), 20, 1)
    dataset.save(tmp_path / "data")
    loaded = Dataset.load(tmp_path / "data", dictionary)
    assert np.array_equal(loaded.y, dataset.y)
    assert np.array_equal(loaded.x, dataset.x)
    assert loaded.spec == dataset.spec
    assert loaded.meta["sir_db"] == dataset.meta["sir_db"]
    assert len(loaded.subset([0, 3])) == 2


def test_dataset_rejects_other_dictionary(dictionary, tmp_path, radar):
    dataset = generate_dataset(dictionary, SceneSpec(), 2, 1)
    dataset.save(tmp_path / "data")
    other = build_dictionary(radar, build_grid(radar, (5, 5, 3, 1)))
    with pytest.raises(DimensionMismatchError):
        Dataset.load(tmp_path / "data", other)
