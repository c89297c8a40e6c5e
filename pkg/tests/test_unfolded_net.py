import numpy as np
import pytest

from app.exceptions import DimensionMismatchError, DomainError, MissingCheckpointError
from app.solvers.admm import SolverParams, StoppingRule, admm_solve, precompute
from app.solvers.unfolded_net import Network, NetworkSolver, init_network, stack, stack_matrix, unstack


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_stacking_is_an_isomorphism(rng):
    for _ in range(1000):
        c = random_complex(rng, 3, 4)
        v = random_complex(rng, 4)
        r = rng.standard_normal(8)
        np.testing.assert_allclose(unstack(stack(v)), v, rtol=0, atol=1e-12)
        np.testing.assert_allclose(stack(unstack(r)), r, rtol=0, atol=1e-12)
        np.testing.assert_allclose(stack_matrix(c) @ stack(v), stack(c @ v), rtol=0, atol=1e-12)


def test_stack_preserves_norms_and_inner_products(rng):
    for _ in range(1000):
        v, w = random_complex(rng, 6), random_complex(rng, 6)
        assert np.linalg.norm(stack(v)) == pytest.approx(np.linalg.norm(v), rel=1e-12)
        assert stack(v) @ stack(w) == pytest.approx(np.vdot(w, v).real, rel=1e-12, abs=1e-12)


def test_stack_matrix_is_a_homomorphism(rng):
    for _ in range(1000):
        c1, c2 = random_complex(rng, 4, 4), random_complex(rng, 4, 4)
        np.testing.assert_allclose(stack_matrix(c1 @ c2), stack_matrix(c1) @ stack_matrix(c2), rtol=0, atol=1e-12)
        np.testing.assert_allclose(stack_matrix(c1.conj().T), stack_matrix(c1).T, rtol=0, atol=1e-12)


def test_unstack_odd_length():
    with pytest.raises(DomainError):
        unstack(np.zeros(5))


def test_stack_batches():
    v = np.array([[1 + 2j, 3j], [4.0, -1j]])
    assert stack(v).tolist() == [[1.0, 0.0, 2.0, 3.0], [4.0, 0.0, 0.0, -1.0]]


@pytest.mark.parametrize("n_stages", [1, 3, 5, 9])
def test_init_matches_fixed_iteration_admm(dictionary, rng, n_stages):
    params = SolverParams()
    net = init_network(n_stages, dictionary, params)
    cache = precompute(dictionary.a_aug, params.rho)
    y = random_complex(rng, 6, 64)
    reference = admm_solve(y, cache, params, StoppingRule("fixed_iters", max_iters=n_stages),
                           record_trace=False).x_hat
    output, _ = net.forward(y)
    assert np.linalg.norm(output - reference) <= 1e-9 * np.linalg.norm(reference)


def test_init_on_the_default_dictionary(dictionary):
    net = init_network(3, dictionary)
    assert net.n_stages == 3
    for stage in net.stages:
        assert stage.m1.shape == (428, 128)
        assert stage.m2.shape == (428, 428)
        assert stage.lambda1 == pytest.approx(1.0)
        assert stage.lambda2 == pytest.approx(0.5)
    assert np.array_equal(net.stages[0].m1, net.stages[2].m1)
    assert net.stages[0].m1 is not net.stages[1].m1
    assert net.provenance["dictionary_hash"] == dictionary.hash
    with pytest.raises(DomainError):
        init_network(0, dictionary)


def test_forward_trace_and_zero_input(tiny_dictionary):
    net = init_network(4, tiny_dictionary)
    output, trace = net.forward(np.zeros((2, 8)))
    assert output.shape == (2, 20) and not np.any(output)
    assert len(trace.z) == len(trace.u) == 5
    assert len(trace.x) == len(trace.xi) == len(trace.a) == 4
    _, none = net.forward(np.zeros(8), record_trace=False)
    assert none is None
    with pytest.raises(DimensionMismatchError):
        net.forward(np.zeros(7))


def test_zero_thresholds_make_the_network_linear(tiny_dictionary, rng):
    net = init_network(3, tiny_dictionary)
    for stage in net.stages:
        stage.lambda1 = stage.lambda2 = 0.0
    y1, y2 = random_complex(rng, 8), random_complex(rng, 8)
    f1, _ = net.forward(y1)
    f2, _ = net.forward(y2)
    combined, _ = net.forward(2.0 * y1 - 0.5 * y2)
    assert np.allclose(combined, 2.0 * f1 - 0.5 * f2, atol=1e-10)


def test_negative_thresholds_are_clamped(tiny_dictionary, rng):
    net = init_network(2, tiny_dictionary)
    zero = net.copy()
    for stage in net.stages:
        stage.lambda1 = stage.lambda2 = -3.0
    for stage in zero.stages:
        stage.lambda1 = stage.lambda2 = 0.0
    y = random_complex(rng, 8)
    assert np.array_equal(net.forward(y)[0], zero.forward(y)[0])


def test_parameters_round_trip(tiny_dictionary):
    net = init_network(2, tiny_dictionary)
    params = net.get_parameters()
    assert sorted(params) == sorted(f"{k}.{name}" for k in range(2)
                                    for name in ("m1", "m2", "alpha", "eta", "lambda1", "lambda2"))
    params["1.alpha"] = np.asarray(1.2)
    params["0.m1"] = np.zeros_like(params["0.m1"])
    net.set_parameters(params)
    assert net.stages[1].alpha == 1.2
    assert not np.any(net.stages[0].m1)
    with pytest.raises(DimensionMismatchError):
        net.set_parameters({"0.m2": np.zeros((3, 3))})


def test_save_and_load(tiny_dictionary, tmp_path, rng):
    net = init_network(3, tiny_dictionary)
    net.stages[1].lambda2 = 0.7
    net.save(tmp_path / "net")
    loaded = Network.load(tmp_path / "net", tiny_dictionary)
    assert loaded.n_stages == 3
    assert loaded.stages[1].lambda2 == 0.7
    y = random_complex(rng, 8)
    assert np.array_equal(loaded.forward(y)[0], net.forward(y)[0])
    assert loaded.provenance == net.provenance


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(MissingCheckpointError):
        Network.load(tmp_path / "nowhere")


def test_load_rejects_other_dictionary(tiny_dictionary, dictionary, tmp_path):
    init_network(1, tiny_dictionary).save(tmp_path / "net")
    with pytest.raises(DimensionMismatchError):
        Network.load(tmp_path / "net", dictionary)


def test_network_solver(tiny_dictionary, rng):
    solver = NetworkSolver(init_network(5, tiny_dictionary), name="admm_net_matched")
    result = solver.solve(random_complex(rng, 4, 8))
    assert result.x_hat.shape == (4, 20)
    assert result.iters.tolist() == [5] * 4
    assert solver.describe()["K"] == 5
