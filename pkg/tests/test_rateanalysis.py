import concurrent.futures

import numpy as np
import pytest
from scipy import linalg

from spi import generator
from spi import lqrcore
from spi import problemio
from spi import rateanalysis
from spi import splititeration
from spi.exceptions import DomainMismatch, GenerationFailed, InsufficientData, NotBlockDiagonal, NotOptimal, NotSPD
from spi.systems import InputPartition, Partition, TimeDomain


def random_discrete_instance(seed):
    rng = np.random.default_rng(200 + seed)
    n = 2 + seed % 2
    states = tuple(int(rng.integers(1, 3)) for _ in range(n))
    inputs = tuple(1 for _ in range(n))
    spec = generator.GeneratorSpec(states, inputs, 0.3, TimeDomain.DISCRETE, seed)
    return generator.generate_coupled_system(spec)


def row_coordinates(partition, m, i):
    """Positions of block row ``i`` entries in a column-major vectorization."""
    rows = np.zeros(partition.size, dtype=bool)
    rows[partition.slice(i)] = True
    return np.tile(rows, m)


@pytest.mark.parametrize("seed", range(10))
def test_analytic_jacobian_matches_finite_differences(seed):
    problem, partition, _ = random_discrete_instance(seed)
    P_opt, F_opt = lqrcore.full_solution(problem)
    for i in range(partition.n):
        analytic = rateanalysis.rate_matrix_subsystem(problem, partition, P_opt, i)
        numeric = rateanalysis.finite_difference_jacobian(rateanalysis.update_map(problem, partition, i), F_opt)
        assert linalg.norm(analytic - numeric) <= 1e-5 * (1 + linalg.norm(analytic))


def test_jacobian_is_supported_on_its_block_row(make_system):
    problem, partition, _ = make_system(9, TimeDomain.DISCRETE, coupling=0.3, state_blocks=(2, 2, 1),
                                        input_blocks=(1, 2, 1))
    P_opt = lqrcore.solve_are(problem)
    for i in range(partition.n):
        jacobian = rateanalysis.rate_matrix_subsystem(problem, partition, P_opt, i)
        outside = ~row_coordinates(partition, problem.m, i)
        assert np.all(jacobian[outside, :] == 0)
        assert linalg.norm(jacobian) > 0


@pytest.mark.parametrize("seed", range(10))
def test_continuous_jacobian_vanishes(seed, make_system):
    problem, partition, _ = make_system(seed, TimeDomain.CONTINUOUS, coupling=0.3)
    _, F_opt = lqrcore.full_solution(problem)
    for i in range(partition.n):
        numeric = rateanalysis.finite_difference_jacobian(rateanalysis.update_map(problem, partition, i), F_opt)
        assert linalg.norm(numeric) <= 1e-4


def test_rate_matrix_rejects_continuous_problem_and_non_optimal_value(make_system):
    problem, partition, _ = make_system(0, TimeDomain.CONTINUOUS)
    with pytest.raises(DomainMismatch):
        rateanalysis.rate_matrix_subsystem(problem, partition, lqrcore.solve_are(problem), 0)

    problem, partition, _ = make_system(0, TimeDomain.DISCRETE)
    with pytest.raises(NotOptimal):
        rateanalysis.rate_matrix_cycle(problem, partition, np.array(problem.Q))


def test_finite_difference_of_identity_map():
    F = np.arange(6.0).reshape(2, 3)
    jacobian = rateanalysis.finite_difference_jacobian(lambda G: G, F)
    assert np.allclose(jacobian, np.eye(6), rtol=0, atol=1e-9)

    with concurrent.futures.ThreadPoolExecutor(max_workers=2) as executor:
        parallel = rateanalysis.finite_difference_jacobian(lambda G: G, F, executor=executor)
    assert np.array_equal(parallel, jacobian)


@pytest.mark.parametrize("seed", range(10))
def test_decoupled_rate_is_zero(seed, make_system):
    problem, partition, _ = make_system(seed, TimeDomain.DISCRETE, coupling=0.0, state_blocks=(2, 3),
                                        input_blocks=(1, 2))
    report = rateanalysis.rate_matrix_cycle(problem, partition, lqrcore.solve_are(problem))
    assert report.spectral_radius <= 1e-10


def test_single_subsystem_rate_is_zero(make_system):
    problem, _, _ = make_system(5, TimeDomain.DISCRETE, state_blocks=(3,), input_blocks=(2,))
    partition = InputPartition([problem.r])
    report = rateanalysis.rate_matrix_cycle(problem, partition, lqrcore.solve_are(problem))
    assert report.spectral_radius == 0


def test_rate_report(make_system):
    problem, partition, _ = make_system(42, TimeDomain.DISCRETE, coupling=0.1)
    report = rateanalysis.rate_matrix_cycle(problem, partition, lqrcore.solve_are(problem))

    assert 0 < report.spectral_radius < 1
    assert report.norm >= report.spectral_radius - 1e-12
    assert report.cycle.shape == (problem.r * problem.m, problem.r * problem.m)
    assert len(report.jacobians) == partition.n
    # with two subsystems the sweep Jacobian and the product of the row maps share their spectrum
    summary = report.to_dict()
    assert summary["row_product_spectral_radius"] == pytest.approx(report.spectral_radius, rel=1e-9, abs=1e-14)
    assert summary["order"] == [1, 2]


def test_distributed_blocks_assemble_row_map(make_system):
    problem, partition, state_partition = make_system(13, TimeDomain.DISCRETE, coupling=0.2,
                                                      state_blocks=(2, 1, 2), input_blocks=(1, 1, 2))
    P_opt = lqrcore.solve_are(problem)
    for i in range(partition.n):
        sensitivity = rateanalysis.row_sensitivity(problem, partition, P_opt, i)
        for j in range(partition.n):
            block = rateanalysis.distributed_block(problem, partition, state_partition, P_opt, i, j)
            assert block.shape == (partition.block_sizes[i], partition.block_sizes[j])
            expected = sensitivity[partition.slice(i), partition.slice(j)]
            assert np.allclose(block, expected, rtol=1e-10, atol=1e-12)
            if i == j:
                assert np.all(block == 0)


def test_distributed_blocks_vanish_without_coupling(make_system):
    problem, partition, state_partition = make_system(2, TimeDomain.DISCRETE, coupling=0.0)
    P_opt = lqrcore.solve_are(problem)
    block = rateanalysis.distributed_block(problem, partition, state_partition, P_opt, 0, 1)
    assert linalg.norm(block) <= 1e-12


def test_distributed_block_needs_block_diagonal_input_matrix(two_subsystem_path):
    problem, partition, state_partition = problemio.load_problem(two_subsystem_path)
    P_opt = lqrcore.solve_are(problem)
    with pytest.raises(NotBlockDiagonal):
        rateanalysis.distributed_block(problem, partition, state_partition, P_opt, 0, 1)


def test_coupling_sweep_grows_with_coupling():
    spec = generator.GeneratorSpec((2, 2), (1, 1), 0.4, TimeDomain.DISCRETE, 42)
    couplings = [0.0, 0.025, 0.05, 0.1, 0.2]
    rates = [radius for _, radius in rateanalysis.coupling_sweep(spec, couplings)]
    assert rates[0] <= 1e-10
    assert all(before <= after for before, after in zip(rates, rates[1:]))
    assert rates[-1] > rates[1]


def test_tech_identities_trivial_case():
    partition = Partition([2, 1])
    for i in range(partition.n):
        residuals = rateanalysis.verify_tech_identities(np.eye(3), np.eye(3), partition, i)
        assert max(residuals) <= 1e-13


def test_tech_identities_scalar_blocks():
    rng = np.random.default_rng(3)
    partition = Partition([1, 1, 1, 1])
    R = np.diag(rng.uniform(0.5, 2.0, 4))
    S = np.diag(rng.uniform(0.5, 2.0, 4))
    for i in range(partition.n):
        assert max(rateanalysis.verify_tech_identities(R, S, partition, i)) <= 1e-13


@pytest.mark.parametrize("seed", range(100))
def test_tech_identities_random_draws(seed):
    partition = Partition([2, 3])
    R, S, i = rateanalysis.random_identity_instance(np.random.default_rng(seed), [2, 3])
    residuals = rateanalysis.verify_tech_identities(R, S, partition, i)
    assert max(residuals) <= 1e-12 * (1 + linalg.norm(R + S))


def test_tech_identities_validate_inputs():
    partition = Partition([1, 1])
    with pytest.raises(NotBlockDiagonal):
        rateanalysis.verify_tech_identities(np.array([[2.0, 0.5], [0.5, 2.0]]), np.eye(2), partition, 0)
    with pytest.raises(NotSPD):
        rateanalysis.verify_tech_identities(np.eye(2), -np.eye(2), partition, 0)


def test_fit_order_quadratic_sequence():
    errors = [0.5 ** (2 ** k) for k in range(7)]
    p, c = rateanalysis.fit_order(errors, window=(1e-30, 1.0))
    assert p == pytest.approx(2.0, abs=0.05)
    assert c == pytest.approx(1.0, rel=1e-6)


def test_fit_order_linear_sequence():
    errors = [0.3 ** k for k in range(30)]
    p, c = rateanalysis.fit_order(errors)
    assert p == pytest.approx(1.0, abs=0.05)
    assert c == pytest.approx(0.3, rel=1e-6)
    _, c = rateanalysis.fit_order(errors, order=1)
    assert c == pytest.approx(0.3, rel=1e-9)


def test_fit_order_needs_enough_pairs():
    with pytest.raises(InsufficientData):
        rateanalysis.fit_order([1e-3, 1e-6, 1e-12])
    with pytest.raises(InsufficientData):
        rateanalysis.fit_order([1.0, 0.5, 0.25, 0.125])


def test_update_errors_start_after_first_sweep(make_system):
    problem, partition, _ = make_system(2, TimeDomain.DISCRETE, coupling=0.3, state_blocks=(2, 2, 2),
                                        input_blocks=(1, 1, 1))
    _, F_opt = lqrcore.full_solution(problem)
    report = splititeration.run(problem, partition, np.zeros((problem.r, problem.m)))
    updates = report.trace.updates

    errors = rateanalysis.update_errors(report.trace, F_opt)
    expected = [linalg.norm(record.F - F_opt) for record in updates[2::2]]
    assert np.allclose(errors, expected, rtol=0, atol=0)
    every = rateanalysis.update_errors(report.trace, F_opt, stride=1)
    assert len(every) == len(updates) - 2
    assert every[0] == pytest.approx(rateanalysis.sweep_errors(report.trace, F_opt)[1])

    window = (1e-300, 1e3)
    assert rateanalysis.empirical_order(report.trace, F_opt, window, min_pairs=1, per_update=True) == \
        rateanalysis.fit_order(errors, window, min_pairs=1)


@pytest.mark.parametrize("seed", range(10))
def test_continuous_runs_converge_quadratically(seed, make_system):
    problem, partition, _ = make_system(seed, TimeDomain.CONTINUOUS, coupling=0.3)
    _, F_opt = lqrcore.full_solution(problem)
    pairs = rateanalysis.restart_pairs(problem, partition, F_opt, seed=seed)
    assert len(pairs) >= 3
    p, _ = rateanalysis.fit_pairs(pairs)
    assert 1.7 <= p <= 2.3


def test_discrete_runs_contract_at_predicted_rate():
    matched = 0
    for seed in range(100):
        coupling = (0.3, 0.6, 1.0)[seed % 3]
        spec = generator.GeneratorSpec((2, 2), (1, 1), coupling, TimeDomain.DISCRETE, seed)
        try:
            problem, partition, _ = generator.generate_coupled_system(spec)
        except GenerationFailed:
            continue
        P_opt, F_opt = lqrcore.full_solution(problem)
        spectral_radius = rateanalysis.rate_matrix_cycle(problem, partition, P_opt).spectral_radius
        if not 0.05 <= spectral_radius <= 0.9:
            continue

        for i in range(partition.n):
            analytic = rateanalysis.rate_matrix_subsystem(problem, partition, P_opt, i)
            numeric = rateanalysis.finite_difference_jacobian(rateanalysis.update_map(problem, partition, i), F_opt)
            assert linalg.norm(analytic - numeric) <= 1e-5 * (1 + linalg.norm(analytic))

        options = splititeration.IterationOptions(tol_outer=1e-11)
        report = splititeration.run(problem, partition, np.zeros((problem.r, problem.m)), options)
        _, c = rateanalysis.empirical_order(report.trace, F_opt, order=1)
        assert abs(c - spectral_radius) / spectral_radius <= 0.25
        matched += 1
        if matched == 10:
            break
    assert matched == 10
