import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risklq import (DimensionMismatch, NotPD, NotPSD, ProbabilityOutOfRange,
                    SystemModel, model_from_dict, model_to_dict, stack_inputs,
                    validate)
from conftest import random_model


def test_examples_validate(example1, example2):
    for model in (example1, example2):
        assert model.n == 2 and model.m1 == 2 and model.m2 == 2 and model.q == 2
        assert model.detectable
        assert model.B.shape == (2, 4)
        assert model.R.shape == (4, 4)
    assert example2.epsilon == 40.0
    np.testing.assert_array_equal(example1.x0_mean, [1.0, 1.0])


def _base_dict(example2):
    return model_to_dict(example2)


def test_input_weight_must_be_pd(example2):
    data = _base_dict(example2)
    data["R_local"] = [[1.0, 0.0], [0.0, 0.0]]  # zero eigenvalue
    with pytest.raises(NotPD):
        validate(model_from_dict(data))


def test_cost_weight_must_be_psd(example2):
    data = _base_dict(example2)
    data["Q"] = [[1.0, 0.0], [0.0, -0.5]]
    with pytest.raises(NotPSD):
        validate(model_from_dict(data))


def test_asymmetry_beyond_tolerance_rejected(example2):
    data = _base_dict(example2)
    data["Q"] = [[1.0, 0.3], [0.0, 1.0]]
    with pytest.raises(NotPSD):
        validate(model_from_dict(data))


def test_probability_bounds(example2):
    data = _base_dict(example2)
    data["p"] = 1.2
    with pytest.raises(ProbabilityOutOfRange):
        validate(model_from_dict(data))
    data["p"] = -0.1
    with pytest.raises(ProbabilityOutOfRange):
        validate(model_from_dict(data))


def test_dimension_mismatch(example2):
    data = _base_dict(example2)
    data["C"] = [[1.0, 0.0, 0.0]]
    with pytest.raises(DimensionMismatch):
        validate(model_from_dict(data))


def test_negative_epsilon_rejected(example2):
    data = _base_dict(example2)
    data["epsilon"] = -1.0
    with pytest.raises(ValueError):
        validate(model_from_dict(data))


def test_empty_input_widths_rejected(example2):
    model = SystemModel(
        A=[[1.0]], B_local=np.zeros((1, 0)), B_remote=[[1.0]], C=[[1.0]],
        Q_w=[[1.0]], Q_v=[[1.0]], Q=[[1.0]], R_local=np.zeros((0, 0)),
        R_remote=[[1.0]], G=[[1.0]], p=0.5, x0_mean=[0.0], Sigma_init=[[1.0]])
    with pytest.raises(DimensionMismatch):
        validate(model)


def test_stacked_inputs_block_structure(example2):
    stacked = stack_inputs(example2)
    np.testing.assert_array_equal(stacked.B[:, :2], example2.B_local)
    np.testing.assert_array_equal(stacked.B[:, 2:], example2.B_remote)
    np.testing.assert_array_equal(stacked.R, np.eye(4))


def test_validate_idempotent(example2):
    again = validate(example2)
    np.testing.assert_array_equal(again.A, example2.A)
    np.testing.assert_array_equal(again.B, example2.B)
    assert again.p == example2.p


def test_q_risk_defaults_to_q():
    model = validate(SystemModel(
        A=[[0.5]], B_local=[[1.0]], B_remote=[[1.0]], C=[[1.0]],
        Q_w=[[1.0]], Q_v=[[1.0]], Q=[[2.5]], R_local=[[1.0]],
        R_remote=[[1.0]], G=[[1.0]], p=0.5, x0_mean=[0.0],
        Sigma_init=[[1.0]]))
    np.testing.assert_array_equal(model.Q_risk, model.Q)


def test_from_dict_rejects_unknown_and_missing_keys(example2):
    data = _base_dict(example2)
    data["Qw_typo"] = [[1.0]]
    with pytest.raises(KeyError):
        model_from_dict(data)
    del data["Qw_typo"]
    del data["A"]
    with pytest.raises(KeyError):
        model_from_dict(data)


def test_dict_roundtrip(example1):
    rebuilt = validate(model_from_dict(model_to_dict(example1)))
    for name in ("A", "B_local", "B_remote", "C", "Q_w", "Q_v", "Q", "Q_risk",
                 "R_local", "R_remote", "G", "Sigma_init"):
        np.testing.assert_array_equal(getattr(rebuilt, name), getattr(example1, name))
    assert rebuilt.p == example1.p


def test_random_models_validate():
    rng = np.random.default_rng(0)
    for _ in range(20):
        model = random_model(rng)
        assert model.B.shape == (model.n, model.m1 + model.m2)
        # symmetrization happened
        for name in ("Q", "Q_risk", "G", "Q_w", "Q_v", "Sigma_init"):
            M = getattr(model, name)
            np.testing.assert_array_equal(M, M.T)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 4), m1=st.integers(1, 3), m2=st.integers(1, 3),
       seed=st.integers(0, 10_000))
def test_stacking_block_structure_random(n, m1, m2, seed):
    rng = np.random.default_rng(seed)
    model = validate(SystemModel(
        A=np.eye(n) * 0.5, B_local=rng.normal(size=(n, m1)),
        B_remote=rng.normal(size=(n, m2)), C=np.eye(n),
        Q_w=np.eye(n), Q_v=np.eye(n), Q=np.eye(n),
        R_local=np.eye(m1), R_remote=np.eye(m2), G=np.eye(n), p=0.3,
        x0_mean=np.zeros(n), Sigma_init=np.eye(n)))
    np.testing.assert_array_equal(model.B[:, :m1], model.B_local)
    np.testing.assert_array_equal(model.B[:, m1:], model.B_remote)
    np.testing.assert_array_equal(model.R[:m1, :m1], model.R_local)
    np.testing.assert_array_equal(model.R[m1:, m1:], model.R_remote)
    assert not model.R[:m1, m1:].any()
