import numpy as np
import pytest

from app.exceptions import DimensionMismatchError, DomainError, SolverError, TrainingDivergenceError
from app.scene_gen import SceneSpec, generate_dataset
from app.solvers.admm import SolverParams
from app.solvers.unfolded_net import init_network
from app.trainer import (AdamState, TrainConfig, TrainHistory, Trainer, adam_step, backward, evaluate, grad_check,
                         grad_check_sweep, learning_rate, loss, train)


@pytest.fixture
def tiny_dataset(tiny_dictionary):
    return generate_dataset(tiny_dictionary, SceneSpec(w_nnz=1, b_nnz=2, snr_db=20.0, sir_db=0.0), 200, 11)


def test_loss():
    truths = np.array([[1.0 + 1j, 0.0], [0.0, 2.0]])
    assert loss(truths, truths) == 0.0
    assert loss(np.zeros((2, 2)), truths) == pytest.approx((2.0 + 4.0) / 2)
    with pytest.raises(DomainError):
        loss(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DimensionMismatchError):
        loss(np.zeros((2, 3)), truths)


def test_learning_rate_schedule():
    config = TrainConfig()
    assert learning_rate(config, 1) == pytest.approx(1e-3)
    assert learning_rate(config, 15) == pytest.approx(1e-3)
    assert learning_rate(config, 16) == pytest.approx(1e-4)
    assert learning_rate(config, 31) == pytest.approx(1e-5)


def test_train_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(epochs=10, lr_period=15)
    with pytest.raises(DomainError):
        TrainConfig(lr0=0.0)
    with pytest.raises(DomainError):
        TrainConfig(val_fraction=1.0)
    assert TrainConfig.from_mapping({"epochs": 3, "lr_period": 3, "unused": 1}).epochs == 3


def test_first_adam_step_moves_by_the_learning_rate():
    config = TrainConfig()
    params = {"0.alpha": np.asarray(1.5), "0.m1": np.ones((2, 2))}
    grads = {"0.alpha": np.asarray(4.0), "0.m1": np.array([[1.0, -2.0], [0.0, 0.5]])}
    state = AdamState()
    updated = adam_step(params, grads, state, config, 1e-3)
    assert state.t == 1
    assert float(updated["0.alpha"]) == pytest.approx(1.5 - 1e-3, rel=1e-9)
    assert np.allclose(updated["0.m1"], [[1 - 1e-3, 1 + 1e-3], [1.0, 1 - 1e-3]], atol=1e-9)


def test_zero_gradients_leave_parameters_unchanged():
    params = {"0.eta": np.asarray(1.0), "0.m2": np.arange(4.0).reshape(2, 2)}
    grads = {key: np.zeros_like(value) for key, value in params.items()}
    updated = adam_step(params, grads, AdamState(), TrainConfig(), 1e-3)
    for key in params:
        assert np.array_equal(updated[key], params[key])


def test_backward_keys_and_shapes(tiny_dictionary, tiny_dataset):
    net = init_network(2, tiny_dictionary)
    _, trace = net.forward(tiny_dataset.y[:5])
    grads = backward(net, trace, tiny_dataset.x[:5])
    params = net.get_parameters()
    assert sorted(grads) == sorted(params)
    for key in params:
        assert np.shape(grads[key]) == np.shape(params[key])


@pytest.mark.parametrize("n_stages", [1, 3])
def test_gradients_match_finite_differences(tiny_dictionary, tiny_dataset, n_stages):
    params = SolverParams(rho=0.2, alpha=1.5, eta=1.0, lambda1=0.05, lambda2=0.02)
    net = init_network(n_stages, tiny_dictionary, params)
    report = grad_check(net, tiny_dataset.y[:5], tiny_dataset.x[:5], n_matrix_entries=24)
    assert report.max_error < 1e-4
    for group in ("m1", "m2", "alpha", "lambda1", "lambda2"):
        assert report.measured.get(group, 0) > 0, group
    assert sum(report.measured.values()) + report.excluded == n_stages * (4 + 2 * 24)


def test_grad_check_refuses_to_pass_without_measurements(tiny_dictionary, tiny_dataset, monkeypatch):
    calls = iter(range(10 ** 6))
    monkeypatch.setattr("app.trainer._active_sets", lambda net, y: [np.array([next(calls)])])
    net = init_network(1, tiny_dictionary, SolverParams(rho=0.2))
    with pytest.raises(SolverError):
        grad_check(net, tiny_dataset.y[:2], tiny_dataset.x[:2], n_matrix_entries=2)


def test_grad_check_sweep(tiny_dictionary, tiny_dataset):
    net = init_network(1, tiny_dictionary, SolverParams(rho=0.2))
    reports = grad_check_sweep(net, tiny_dataset.y[:3], tiny_dataset.x[:3], steps=(1e-5, 1e-6), n_matrix_entries=4)
    assert sorted(reports) == [1e-6, 1e-5]
    assert all(np.isfinite(report.max_error) and report.measured for report in reports.values())


def test_threshold_gradient_sign(tiny_dictionary, rng):
    net = init_network(2, tiny_dictionary)
    y = 10.0 * (rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8)))
    _, trace = net.forward(y)
    grads = backward(net, trace, np.zeros((4, 20)))
    # raising the last thresholds shrinks the output towards the zero target
    assert float(grads["1.lambda1"]) < 0
    assert float(grads["1.lambda2"]) <= 0


def test_short_training_reduces_the_loss(tiny_dictionary, tiny_dataset):
    net = init_network(2, tiny_dictionary)
    before = loss(net.forward(tiny_dataset.y, record_trace=False)[0], tiny_dataset.x)
    config = TrainConfig(epochs=3, batch_size=20, lr0=1e-4, lr_period=3, seed=5)
    trained, history = Trainer(config).train(net, tiny_dataset)
    after = loss(trained.forward(tiny_dataset.y, record_trace=False)[0], tiny_dataset.x)
    assert after < before
    assert history.epoch == [1, 2, 3]
    assert history.best_epoch == 3
    assert len(history.rows()) == 3
    assert trained.provenance["training"]["n_train"] == 200
    assert trained.provenance["training"]["dataset_master_seed"] == 11


def test_validation_split_restores_the_best_epoch(tiny_dictionary, tiny_dataset):
    config = TrainConfig(epochs=2, batch_size=50, lr0=1e-4, lr_period=2, val_fraction=0.1)
    net, history = train(init_network(1, tiny_dictionary), tiny_dataset, config)
    assert net.provenance["training"]["n_train"] == 180
    assert history.best_epoch in (1, 2)
    best = history.val_nmse_db[history.best_epoch - 1]
    assert best == min(history.val_nmse_db)


def test_divergence_is_raised_with_history(tiny_dictionary, tiny_dataset):
    net = init_network(2, tiny_dictionary)
    net.stages[0].m1[0, 0] = np.nan
    with pytest.raises(TrainingDivergenceError) as raised:
        Trainer(TrainConfig(epochs=2, lr_period=2, batch_size=50)).train(net, tiny_dataset)
    assert isinstance(raised.value.details["history"], TrainHistory)
    assert raised.value.details["history"].epoch == []


def test_training_rejects_other_dictionary(dictionary, tiny_dataset):
    with pytest.raises(DimensionMismatchError):
        Trainer(TrainConfig(epochs=1, lr_period=1)).train(init_network(1, dictionary), tiny_dataset)


def test_evaluate(tiny_dictionary, tiny_dataset):
    net = init_network(3, tiny_dictionary)
    value = evaluate(net, tiny_dataset, batch_size=64)
    assert np.isfinite(value)
    assert value == pytest.approx(evaluate(net, tiny_dataset, batch_size=200))
