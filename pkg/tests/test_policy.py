import numpy as np
import pytest

from risklq import (EstimatorState, MeanState, completed_square_penalties,
                    control_action, mean_path, mean_propagate, solve_finite,
                    SystemModel, validate)
from conftest import random_model


def _state(xl, xr, k=0):
    xl = np.asarray(xl, dtype=float)
    xr = np.asarray(xr, dtype=float)
    return EstimatorState(xhat_local=xl, xhat_local_pred=xl.copy(),
                          xhat_remote=xr, xhat_remote_pred=xr.copy(), k=k)


def test_scalar_action_values():
    model = validate(SystemModel(
        A=[[1.0]], B_local=[[1.0]], B_remote=[[1.0]], C=[[1.0]],
        Q_w=[[1.0]], Q_v=[[1.0]], Q=[[1.0]], R_local=[[1.0]],
        R_remote=[[1.0]], G=[[1.0]], p=0.5, x0_mean=[0.0], Sigma_init=[[1.0]]))
    sol = solve_finite(model, 0.0, 0)
    mean = MeanState(Ex=np.zeros(1), EU=np.zeros(2), k=0)
    action = control_action(sol.gains[0], _state([1.0], [1.0]), mean)
    np.testing.assert_allclose(action.U, [-1.0 / 3.0, -1.0 / 3.0])
    np.testing.assert_allclose(action.u_tilde, [0.0], atol=1e-15)
    np.testing.assert_allclose(action.u_local, [-1.0 / 3.0])
    np.testing.assert_allclose(action.u_remote, [-1.0 / 3.0])
    # estimates disagree: only the local correction reacts
    action2 = control_action(sol.gains[0], _state([2.0], [1.0]), mean)
    np.testing.assert_allclose(action2.u_remote, action.u_remote)
    np.testing.assert_allclose(action2.u_tilde, [-0.5])


def test_remote_component_never_reads_local_estimate(example2):
    sol = solve_finite(example2, 1.5, 3)
    mean = MeanState(Ex=np.array([0.3, -0.2]), EU=np.zeros(4), k=1)
    rng = np.random.default_rng(0)
    xr = rng.normal(size=2)
    a = control_action(sol.gains[1], _state(rng.normal(size=2), xr), mean)
    b = control_action(sol.gains[1], _state(rng.normal(size=2), xr), mean)
    np.testing.assert_array_equal(a.u_remote, b.u_remote)
    np.testing.assert_array_equal(a.U, b.U)


def test_action_is_linear(example2):
    sol = solve_finite(example2, 0.5, 2)
    g = sol.gains[0]
    rng = np.random.default_rng(1)
    mean0 = MeanState(Ex=np.zeros(2), EU=np.zeros(4), k=0)
    xl1, xr1 = rng.normal(size=2), rng.normal(size=2)
    xl2, xr2 = rng.normal(size=2), rng.normal(size=2)
    a1 = control_action(g, _state(xl1, xr1), mean0)
    a2 = control_action(g, _state(xl2, xr2), mean0)
    summed = control_action(g, _state(xl1 + xl2, xr1 + xr2), mean0)
    np.testing.assert_allclose(summed.U, a1.U + a2.U, atol=1e-12)
    np.testing.assert_allclose(summed.u_local, a1.u_local + a2.u_local,
                               atol=1e-12)


def test_mean_recursion_consistency(example1):
    sol = solve_finite(example1, 10.0, 20)
    states = mean_propagate(example1, sol.gains)
    assert len(states) == 22
    for k in range(21):
        g = sol.gains[k]
        np.testing.assert_allclose(states[k].EU,
                                   -(g.K + g.Kbar) @ states[k].Ex, atol=1e-12)
        np.testing.assert_allclose(states[k + 1].Ex,
                                   example1.A @ states[k].Ex
                                   + example1.B @ states[k].EU, atol=1e-10)
    path = mean_path(example1, sol)
    np.testing.assert_allclose(path[0], example1.x0_mean)
    assert path.shape == (22, 2)


def test_mean_path_is_mu_invariant(example1):
    """The risk penalty shapes deviations only; the mean feedback K + Kbar
    and hence the whole mean trajectory are the same for every mu."""
    free = mean_path(example1, solve_finite(example1, 0.0, 30))
    tight = mean_path(example1, solve_finite(example1, 10.0, 30))
    assert np.isfinite(free).all()
    np.testing.assert_allclose(tight, free, rtol=1e-8, atol=1e-10)


def test_penalties_vanish_at_the_policy():
    rng = np.random.default_rng(2)
    for _ in range(10):
        model = random_model(rng)
        sol = solve_finite(model, float(rng.uniform(0, 2)), 3)
        states = mean_propagate(model, sol.gains)
        for k in range(4):
            est = _state(rng.normal(size=model.n), rng.normal(size=model.n), k)
            action = control_action(sol.gains[k], est, states[k])
            pens = completed_square_penalties(sol.gains[k], est, states[k], action)
            for name, value in pens.items():
                assert np.abs(value).max() < 1e-8, f"{name} penalty nonzero"
