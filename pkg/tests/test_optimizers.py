"""Optimizer update rules on deterministic quadratics."""

import numpy as np
import pytest

from mcsa.distributions import VariationalParams
from mcsa.optimizers import OptimizerState, StepsizeSchedule, optimizer_update


def quadratic_descend(kind, gamma, steps, start=(1.0, 1.0)):
    """Minimize f(lam) = 0.5 ||lam||^2 (gradient = lam) from a fixed start."""
    d = len(start) // 2
    params = VariationalParams(np.array(start[:d]), np.array(start[d:]))
    state = OptimizerState.create(kind, len(start))
    sched = StepsizeSchedule("constant", gamma)
    for _ in range(steps):
        state, params = optimizer_update(state, params, params.as_vector(), sched)
    return params.as_vector()


class TestSgd:
    def test_constant_step_definition(self):
        params = VariationalParams(np.zeros(2), np.zeros(2))
        state = OptimizerState.sgd()
        state, params = optimizer_update(state, params, np.ones(4),
                                         StepsizeSchedule("constant", 0.1))
        np.testing.assert_allclose(params.as_vector(), -0.1)
        assert state.step_count == 1


class TestAdam:
    def test_first_step_magnitude(self):
        # with zero moments and bias correction, |update| ~ gamma for any g
        rng = np.random.default_rng(0)
        gamma = 0.01
        for _ in range(50):
            g = rng.uniform(1e-3, 10.0, 4) * rng.choice([-1.0, 1.0], 4)
            params = VariationalParams(np.zeros(2), np.zeros(2))
            state = OptimizerState.adam(4)
            _, new = optimizer_update(state, params, g, StepsizeSchedule("constant", gamma))
            delta = np.abs(new.as_vector())
            assert np.all(delta >= 0.99 * gamma) and np.all(delta <= gamma)

    def test_quadratic_convergence(self):
        lam = quadratic_descend("adam", 0.1, 1000)
        assert np.linalg.norm(lam) < 1e-3


@pytest.mark.parametrize("kind,gamma", [("sgd", 0.1), ("momentum", 0.1),
                                        ("nesterov", 0.1), ("adam", 0.1)])
def test_quadratic_objective_reaches_optimum(kind, gamma):
    lam = quadratic_descend(kind, gamma, 10_000)
    assert 0.5 * float(lam @ lam) < 1e-6


def test_bitwise_determinism():
    rng = np.random.default_rng(1)
    g = rng.standard_normal(6)
    for kind in ("sgd", "momentum", "nesterov", "adam"):
        outs = []
        for _ in range(2):
            params = VariationalParams(np.arange(3.0), np.zeros(3))
            state = OptimizerState.create(kind, 6)
            for _ in range(5):
                state, params = optimizer_update(state, params, g,
                                                 StepsizeSchedule("inv_sqrt", 0.05))
            outs.append(params.as_vector())
        np.testing.assert_array_equal(outs[0], outs[1])


def test_schedules_exact_values():
    assert StepsizeSchedule("inv_sqrt", 0.4).at(4) == pytest.approx(0.2)
    assert StepsizeSchedule("inv", 0.4).at(4) == pytest.approx(0.1)
    assert StepsizeSchedule("constant", 0.4).at(1000) == 0.4
    with pytest.raises(ValueError):
        StepsizeSchedule("linear", 0.1)
    with pytest.raises(ValueError):
        StepsizeSchedule("inv", -0.1)


def test_nonfinite_gradient_rejected():
    params = VariationalParams(np.zeros(2), np.zeros(2))
    state = OptimizerState.sgd()
    bad = np.array([1.0, np.nan, 0.0, 0.0])
    with pytest.raises(ValueError):
        optimizer_update(state, params, bad, StepsizeSchedule("constant", 0.1))
    with pytest.raises(ValueError):
        optimizer_update(state, params, np.full(4, np.inf), StepsizeSchedule("constant", 0.1))


def test_gradient_dimension_guard():
    params = VariationalParams(np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        optimizer_update(OptimizerState.sgd(), params, np.ones(3),
                         StepsizeSchedule("constant", 0.1))
