import numpy as np
import pytest

from fedunlearn import (BoundInputs, QuadraticProblem, convergence_bound,
                        default_quadratic_problem, estimate_constants,
                        verify_bound_montecarlo)
from fedunlearn.errors import ParameterError

# mpmath oracle values (40 digits):
#   mu = L = S = 1, lr = 0.5, T = 2, init_gap = 1, delta = 1e-5, eps = 3, div = 0
BOUND_EXAMPLE = 1.285007189196295643318359621222047452227
BOUND_ASYMPTOTE = 1.304007668476048686206250262636850615709


def example_inputs(**overrides):
    base = dict(smoothness=1.0, pl_constant=1.0, lr=0.5, rounds=2, clip_norm=1.0,
                delta=1e-5, epsilon_max=3.0, gradient_divergence=0.0, num_clients=4,
                init_gap=1.0)
    base.update(overrides)
    return BoundInputs(**base)


class TestConvergenceBound:
    def test_zero_rounds_is_initial_gap(self):
        assert convergence_bound(example_inputs(rounds=0, init_gap=2.75)) == 2.75

    def test_matches_high_precision_oracle(self):
        assert convergence_bound(example_inputs()) == pytest.approx(BOUND_EXAMPLE, rel=1e-12)

    def test_large_horizon_reaches_asymptote(self):
        value = convergence_bound(example_inputs(rounds=10 ** 6))
        assert value == pytest.approx(BOUND_ASYMPTOTE, rel=1e-9)

    def test_contraction_factor(self):
        assert example_inputs().contraction == pytest.approx(0.25, abs=1e-15)

    def test_non_contractive_warns(self):
        bad = example_inputs(lr=2.5)  # A = 1 - 5 + 6.25 > 1
        assert not bad.is_contractive
        with pytest.warns(RuntimeWarning):
            convergence_bound(bad)

    def test_monotonicity(self):
        base = convergence_bound(example_inputs(rounds=20))
        # larger budget -> smaller bound; larger clip/divergence/gap -> larger
        assert convergence_bound(example_inputs(rounds=20, epsilon_max=4.0)) < base
        assert convergence_bound(example_inputs(rounds=20, clip_norm=2.0)) > base
        assert convergence_bound(example_inputs(rounds=20, gradient_divergence=1.0)) > base
        assert convergence_bound(example_inputs(rounds=20, init_gap=2.0)) > base

    def test_horizon_monotone_when_gap_above_floor(self):
        values = [convergence_bound(example_inputs(rounds=t, init_gap=5.0))
                  for t in range(0, 30)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("field,value", [("smoothness", 0.0), ("pl_constant", -1.0),
                                             ("delta", 1.0), ("num_clients", 0),
                                             ("rounds", -1)])
    def test_invalid_inputs(self, field, value):
        with pytest.raises(ParameterError):
            example_inputs(**{field: value})


def shared_hessian_problem(eigenvalues, centers, start):
    h = np.diag(np.asarray(eigenvalues, float))
    centers = np.asarray(centers, float)
    return QuadraticProblem(hessians=np.repeat(h[None], centers.shape[0], axis=0),
                            centers=centers, start=np.asarray(start, float))


class TestEstimateConstants:
    def test_identical_clients_identity_hessian(self):
        problem = shared_hessian_problem([1.0, 1.0], [[1.0, 2.0]] * 3, [0.0, 0.0])
        constants = estimate_constants(problem)
        assert constants.smoothness == 1.0
        assert constants.pl_constant == 1.0
        # zero up to the ulp dust of averaging identical gradients
        assert constants.gradient_divergence <= 1e-12

    def test_eigenvalue_extremes(self):
        problem = shared_hessian_problem([1.0, 4.0], [[0.0, 0.0]] * 2, [1.0, 1.0])
        constants = estimate_constants(problem)
        assert constants.smoothness == pytest.approx(4.0)
        assert constants.pl_constant == pytest.approx(1.0)

    def test_opposed_centers_divergence(self):
        # two clients at +/- e1 under the identity Hessian: client gradients
        # differ from the global one by exactly the unit vector.
        problem = shared_hessian_problem([1.0, 1.0], [[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])
        constants = estimate_constants(problem)
        assert constants.gradient_divergence == pytest.approx(1.0, rel=1e-12)

    def test_init_gap_and_optimum(self):
        problem = shared_hessian_problem([2.0, 2.0], [[0.0, 0.0]] * 2, [1.0, 0.0])
        constants = estimate_constants(problem)
        assert constants.optimum_loss == pytest.approx(0.0, abs=1e-15)
        assert constants.init_gap == pytest.approx(1.0, rel=1e-12)

    def test_non_pd_hessian_rejected(self):
        h = np.array([[[1.0, 0.0], [0.0, -1.0]]])
        with pytest.raises(ParameterError):
            QuadraticProblem(hessians=h, centers=np.zeros((1, 2)), start=np.zeros(2))


class TestVerifyBound:
    def test_default_instance_holds(self):
        problem = default_quadratic_problem(5, 4, seed=5)
        check = verify_bound_montecarlo(problem, lr=0.2, rounds=50, clip_norm=0.25,
                                        delta=1e-5, epsilon_max=3.0, trials=50, seed=5)
        assert check.holds
        assert 0.0 < check.inputs.contraction < 1.0

    def test_zero_rounds_gap_equals_bound(self):
        problem = default_quadratic_problem(4, 3, seed=2)
        check = verify_bound_montecarlo(problem, lr=0.2, rounds=0, clip_norm=0.25,
                                        delta=1e-5, epsilon_max=3.0, trials=3, seed=2)
        assert check.empirical_gap == check.bound == check.inputs.init_gap
        assert check.holds

    def test_noiseless_identical_clients_decay(self):
        centers = np.zeros((4, 5))
        problem = shared_hessian_problem(np.linspace(1.0, 3.0, 5), centers,
                                         np.full(5, 0.6))
        constants = estimate_constants(problem)
        check = verify_bound_montecarlo(problem, lr=0.2, rounds=40, clip_norm=0.25,
                                        delta=1e-5, epsilon_max=3.0, trials=1, seed=0,
                                        sigma_override=0.0, constants=constants)
        a = check.inputs.contraction
        assert check.empirical_gap <= a ** 40 * constants.init_gap * (1 + 1e-9)
        assert check.holds

    def test_deterministic(self):
        problem = default_quadratic_problem(4, 3, seed=7)
        a = verify_bound_montecarlo(problem, lr=0.15, rounds=20, clip_norm=0.3,
                                    delta=1e-5, epsilon_max=3.0, trials=10, seed=7)
        b = verify_bound_montecarlo(problem, lr=0.15, rounds=20, clip_norm=0.3,
                                    delta=1e-5, epsilon_max=3.0, trials=10, seed=7)
        assert a.empirical_gap == b.empirical_gap
