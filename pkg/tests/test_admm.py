import numpy as np
import pytest

from app.exceptions import DimensionMismatchError, DomainError, UnhandledExperimentKindError
from app.scene_gen import SceneSpec, generate_dataset
from app.solvers.admm import (NMSE_FLOOR_DB, AdmmSolver, AdmmState, SinglePenaltySolver, SolverParams, StoppingRule,
                              admm_solve, admm_step, nmse, objective, oracle_done, precompute,
                              soft_threshold)
from app.solvers.base import TRACE_COLUMNS, select_solver


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def fista(y, a, weights, iters=20000):
    """Accelerated proximal gradient on 1/2 ||y - a x||^2 + sum_i weights_i |x_i|."""
    step = 1.0 / np.linalg.norm(a, 2) ** 2
    x = np.zeros(a.shape[1], dtype=complex)
    v, t = x.copy(), 1.0
    for _ in range(iters):
        x_next = soft_threshold(v - step * (a.conj().T @ (a @ v - y)), step * weights)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        v = x_next + (t - 1.0) / t_next * (x_next - x)
        x, t = x_next, t_next
    return x


def test_soft_threshold_examples():
    assert soft_threshold(np.array([0.2 + 0j]), 0.5)[0] == 0
    assert soft_threshold(np.array([1 + 0j]), 0.4)[0] == pytest.approx(0.6)
    assert soft_threshold(np.array([3 + 4j]), 2.5)[0] == pytest.approx(1.5 + 2j)
    assert soft_threshold(np.array([0j]), 0.0)[0] == 0
    with pytest.raises(DomainError):
        soft_threshold(np.array([1 + 0j]), -0.1)


def test_soft_threshold_is_the_prox(rng):
    for _ in range(100):
        a, kappa = random_complex(rng, 1)[0], rng.random() * 2
        z = soft_threshold(np.array([a]), kappa)[0]
        best = kappa * abs(z) + 0.5 * abs(z - a) ** 2
        for delta in random_complex(rng, 50) * 1e-3:
            assert best <= kappa * abs(z + delta) + 0.5 * abs(z + delta - a) ** 2 + 1e-15


def test_precompute_identity():
    cache = precompute(np.eye(4), 1.0, n_image=4)
    assert np.allclose(cache.p_mat, 0.5 * np.eye(4))


def test_precompute_default_dictionary(dictionary):
    cache = precompute(dictionary.a_aug, 0.01)
    a = dictionary.a_aug
    residual = (a.conj().T @ a + 0.01 * np.eye(214)) @ cache.p_mat - np.eye(214)
    assert np.linalg.norm(residual) < 1e-8
    assert np.linalg.norm(cache.p_mat - cache.p_mat.conj().T) < 1e-10
    assert cache.n_image == 150
    with pytest.raises(DomainError):
        precompute(dictionary.a_aug, 0.0)


def test_zero_state_is_a_fixed_point(tiny_dictionary):
    params = SolverParams()
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    state = admm_step(AdmmState.zeros(cache.n_unknowns), np.zeros(8), params, cache)
    for array in (state.x, state.z, state.u, state.xi):
        assert not np.any(array)


def reference_step(z, u, y, a, params, n_image):
    rho = params.rho
    x = np.linalg.inv(a.conj().T @ a + rho * np.eye(a.shape[1])) @ (a.conj().T @ y + rho * (z - u))
    xi = params.alpha * x + (1 - params.alpha) * z
    v = xi + u
    z_next = np.concatenate([soft_threshold(v[:n_image], params.lambda1 / rho),
                             soft_threshold(v[n_image:], params.lambda2 / rho)])
    return x, xi, z_next, u + params.eta * (xi - z_next)


@pytest.mark.parametrize("alpha, eta", [(1.5, 1.0), (1.0, 1.0), (0.8, 0.5)])
def test_step_matches_reference(tiny_dictionary, rng, alpha, eta):
    params = SolverParams(rho=0.3, alpha=alpha, eta=eta, lambda1=0.05, lambda2=0.02)
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    y = random_complex(rng, 8)
    state = AdmmState(x=random_complex(rng, 20), z=random_complex(rng, 20), u=random_complex(rng, 20),
                      xi=np.zeros(20, dtype=complex))
    step = admm_step(state, y, params, cache)
    expected = reference_step(state.z, state.u, y, tiny_dictionary.a_aug, params, 12)
    for got, want in zip((step.x, step.xi, step.z, step.u), expected):
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)
    assert step.iter == 1


def test_converges_to_the_lasso_solution(tiny_dictionary, rng):
    params = SolverParams(rho=1.0, alpha=1.5, eta=1.0, lambda1=0.05, lambda2=0.02)
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    weights = np.r_[np.full(12, params.lambda1), np.full(8, params.lambda2)]
    for _ in range(5):
        y = random_complex(rng, 8)
        result = admm_solve(y, cache, params, StoppingRule("residual", tol=1e-10, max_iters=50000),
                            record_trace=False)
        reference = fista(y, tiny_dictionary.a_aug, weights)
        f_admm = objective(result.x_hat, y, params, cache)
        f_ref = objective(reference, y, params, cache)
        assert f_admm <= f_ref + 1e-7 * max(1.0, f_ref)
        assert np.allclose(result.x_hat, reference, atol=1e-3)


def test_full_shrinkage(tiny_dictionary, rng):
    params = SolverParams(lambda1=1e6, lambda2=1e6)
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    truth = random_complex(rng, 20)
    result = admm_solve(tiny_dictionary.a_aug @ truth, cache, params, StoppingRule(max_iters=50), truth=truth)
    assert not np.any(result.x_hat)
    assert nmse(result.x_hat, truth) == pytest.approx(0.0)
    # a zero estimate never satisfies the oracle test
    assert result.iters == 50
    assert not result.converged


def test_stopping_modes(tiny_dictionary, rng):
    params = SolverParams(rho=0.5)
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    truth = np.zeros(20, dtype=complex)
    truth[[1, 14]] = [1.0, 0.5j]
    y = tiny_dictionary.a_aug @ truth

    fixed = admm_solve(y, cache, params, StoppingRule.parse("fixed:7"), truth=truth)
    assert fixed.iters == 7 and len(fixed.trace) == 7
    assert list(fixed.trace[0]) == list(TRACE_COLUMNS)

    oracle = admm_solve(y, cache, params, StoppingRule("oracle", tol=1e-6), truth=truth)
    db = [row["nmse_db"] for row in oracle.trace]
    assert oracle.converged
    assert oracle.iters >= 2
    assert db[-2] < 0
    assert (db[-1] - db[-2]) / db[-2] < 1e-6
    assert all((b - a) / a >= 1e-6 for a, b in zip(db[:-2], db[1:-1]) if a < 0)
    assert all(np.isfinite(d) for d in db)

    linear = admm_solve(y, cache, params, StoppingRule.parse("oracle_linear"), truth=truth)
    ratios = [10 ** (row["nmse_db"] / 10) for row in linear.trace]
    assert linear.converged
    assert abs(ratios[-1] - ratios[-2]) < 1e-6 * ratios[-2]

    with pytest.raises(DomainError):
        admm_solve(y, cache, params, StoppingRule("oracle"))
    with pytest.raises(DomainError):
        admm_solve(y, cache, params, StoppingRule("oracle_linear"))
    with pytest.raises(UnhandledExperimentKindError):
        StoppingRule.parse("forever")
    with pytest.raises(DimensionMismatchError):
        admm_solve(np.zeros(7), cache, params, StoppingRule("fixed_iters", max_iters=1))


def test_oracle_done():
    previous = np.array([1.0, 0.5, 0.5, 0.5, 0.0])
    ratio = np.array([0.5, 0.5 * (1 - 1e-9), 0.6, 0.25, 0.0])
    ready = np.array([True, True, True, True, True])
    # dB: 0 -> -3 is untestable, a 1e-9 change stops, a rise stops, a halving continues, exact recovery stops
    assert oracle_done("oracle", ratio, previous, ready, 1e-6).tolist() == [False, True, True, False, True]
    assert oracle_done("oracle_linear", ratio, previous, ready, 1e-6).tolist() == [False, True, False, False, True]
    assert not oracle_done("oracle", ratio, previous, np.zeros(5, dtype=bool), 1e-6).any()


@pytest.fixture(scope="module")
def stages_dataset(dictionary):
    return generate_dataset(dictionary, SceneSpec(w_nnz=2, b_nnz=16, snr_db=float("inf"), sir_db=0.0), 40,
                            master_seed=7)


def test_oracle_keeps_iterating_past_a_zero_first_estimate(dictionary, stages_dataset):
    params = SolverParams()
    cache = precompute(dictionary.a_aug, params.rho)
    first = admm_step(AdmmState.zeros(cache.n_unknowns, len(stages_dataset)), stages_dataset.y, params, cache)
    zero_start = np.flatnonzero(~np.any(first.z != 0, axis=-1))
    assert zero_start.size > 0
    for stopping in (StoppingRule("oracle", max_iters=2000), StoppingRule("oracle_linear", max_iters=2000)):
        result = admm_solve(stages_dataset.y[zero_start], cache, params, stopping,
                            truth=stages_dataset.x[zero_start], record_trace=False)
        assert np.all(result.iters > 2)
        assert np.all(np.any(result.x_hat != 0, axis=-1)[result.converged])
        assert nmse(result.x_hat, stages_dataset.x[zero_start]) < 0.0


def test_db_oracle_stops_no_later_than_linear(dictionary, stages_dataset):
    solver = AdmmSolver(dictionary, SolverParams(), StoppingRule("oracle", max_iters=5000))
    linear = AdmmSolver(dictionary, SolverParams(), StoppingRule("oracle_linear", max_iters=5000))
    fast = solver.solve(stages_dataset.y, truth=stages_dataset.x, record_trace=False)
    slow = linear.solve(stages_dataset.y, truth=stages_dataset.x, record_trace=False)
    assert np.all(fast.converged)
    assert np.all(fast.iters > 2)
    assert fast.mean_iters <= slow.mean_iters


def test_max_iters_is_flagged_not_raised(tiny_dictionary, rng):
    params = SolverParams(rho=0.5)
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    truth = random_complex(rng, 20)
    result = admm_solve(tiny_dictionary.a_aug @ truth, cache, params,
                        StoppingRule("oracle_linear", tol=1e-14, max_iters=3), truth=truth)
    assert result.iters == 3
    assert not result.converged


def test_batch_freezes_each_sample(tiny_dictionary, rng):
    params = SolverParams(rho=0.5)
    cache = precompute(tiny_dictionary.a_aug, params.rho)
    truths = np.zeros((4, 20), dtype=complex)
    for row, support in zip(truths, ([0, 13], [5, 15], [2, 19], [7, 12])):
        row[support] = random_complex(rng, 2)
    ys = truths @ tiny_dictionary.a_aug.T
    batch = admm_solve(ys, cache, params, StoppingRule("oracle", tol=1e-6), truth=truths, record_trace=False)
    for i in range(4):
        single = admm_solve(ys[i], cache, params, StoppingRule("oracle", tol=1e-6), truth=truths[i],
                            record_trace=False)
        assert batch.iters[i] == single.iters
        assert np.allclose(batch.x_hat[i], single.x_hat, atol=1e-10)


def test_nmse():
    x = np.array([1.0 + 1j, -2.0, 0.5j])
    assert nmse(x, x) == NMSE_FLOOR_DB
    assert nmse(np.zeros(3), x) == pytest.approx(0.0)
    assert nmse(x / 2, x) == pytest.approx(10 * np.log10(0.25))
    with pytest.raises(DomainError):
        nmse(x, np.zeros(3))
    batch = np.stack([x, 2 * x])
    assert nmse(np.stack([x / 2, np.zeros(3)]), batch) == pytest.approx(10 * np.log10((0.25 + 1.0) / 2))


def test_single_penalty_solver(tiny_dictionary, rng):
    solver = SinglePenaltySolver(tiny_dictionary, stopping=StoppingRule("fixed_iters", max_iters=50))
    zero = solver.solve(np.zeros(8))
    assert zero.x_hat.shape == (20,) and not np.any(zero.x_hat)
    result = solver.solve(random_complex(rng, 3, 8))
    assert result.x_hat.shape == (3, 20)
    assert not np.any(result.x_hat[:, 12:])


def test_select_solver(tiny_dictionary):
    solver = select_solver("admm", dictionary=tiny_dictionary)
    assert isinstance(solver, AdmmSolver)
    assert solver.describe()["params"]["rho"] == 0.01
    with pytest.raises(UnhandledExperimentKindError):
        select_solver("cvx")


@pytest.mark.slow
def test_converged_admm_on_the_stages_scenario(dictionary):
    spec = SceneSpec(w_nnz=2, b_nnz=16, snr_db=float("inf"), sir_db=0.0)
    dataset = generate_dataset(dictionary, spec, 1000, master_seed=2024)
    solver = AdmmSolver(dictionary, SolverParams(), StoppingRule("oracle", tol=1e-6, max_iters=2000))
    result = solver.solve(dataset.y, truth=dataset.x, record_trace=False)
    assert -26.0 <= nmse(result.x_hat, dataset.x) <= -21.0
    assert 100 <= result.mean_iters <= 300
