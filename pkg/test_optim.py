"""
Tests for Adam, the losses and the two toy training tasks
"""
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DimensionMismatchError, InvalidParameterError
from src.optim import (SYNTHETIC_FEATURES, SYNTHETIC_LABELS, AdamState, LinearIterationModel, SingleStepModel,
                       TrainingTrace, adam_step, bce_sigmoid, ce_softmax, check_training_gradients,
                       exact_match_accuracy, mse, numeric_gradient, train_fit_target, train_synthetic)


def test_adam_first_step_moves_by_learning_rate():
    params = [np.array([1.0, -2.0]), np.array([[0.0]])]
    grads = [np.array([0.5, -3.0]), np.array([[0.0]])]
    state = AdamState.for_params(params, lr=0.1)
    updated = adam_step(params, grads, state)
    assert_allclose(updated[0], [0.9, -1.9], atol=1e-7)
    assert_allclose(updated[1], [[0.0]])
    assert state.step == 1
    assert params[0].tolist() == [1.0, -2.0]


def test_adam_constant_gradient_keeps_step_size():
    params = [np.array([0.0])]
    state = AdamState.for_params(params, lr=0.01)
    for _ in range(10):
        params = adam_step(params, [np.array([2.0])], state)
    assert params[0][0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_rejects_bad_input():
    params = [np.zeros(2)]
    state = AdamState.for_params(params)
    with pytest.raises(DimensionMismatchError):
        adam_step(params, [np.zeros(3)], state)
    with pytest.raises(DimensionMismatchError):
        adam_step(params, [], state)
    with pytest.raises(InvalidParameterError):
        adam_step(params, [np.array([np.nan, 0.0])], state)
    with pytest.raises(InvalidParameterError):
        AdamState.for_params(params, lr=0.0)
    assert state.step == 0


def test_mse():
    value, grad = mse(np.array([1.0, 2.0]), np.array([1.0, 0.0]))
    assert value == pytest.approx(2.0)
    assert_allclose(grad, [0.0, 2.0])
    with pytest.raises(DimensionMismatchError):
        mse(np.ones(2), np.ones(3))


def test_bce_sigmoid():
    value, grad = bce_sigmoid(np.zeros((1, 2)), np.array([[1.0, 0.0]]))
    assert value == pytest.approx(math.log(2.0))
    assert_allclose(grad, [[-0.25, 0.25]])
    value, _ = bce_sigmoid(np.array([[800.0]]), np.array([[0.0]]))
    assert value == pytest.approx(800.0)
    with pytest.raises(InvalidParameterError):
        bce_sigmoid(np.zeros(2), np.array([0.0, 2.0]))


def test_ce_softmax():
    value, grad = ce_softmax(np.zeros((2, 3)), np.array([0, 2]))
    assert value == pytest.approx(math.log(3.0))
    assert_allclose(grad.sum(axis=1), [0.0, 0.0], atol=1e-15)
    assert grad[0, 0] == pytest.approx((1 / 3 - 1) / 2)
    with pytest.raises(InvalidParameterError):
        ce_softmax(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(DimensionMismatchError):
        ce_softmax(np.zeros((2, 3)), np.array([0]))


@pytest.mark.parametrize("loss", [mse, bce_sigmoid])
def test_loss_gradients_match_differences(loss):
    rng = np.random.default_rng(0)
    pred = rng.standard_normal((4, 3))
    target = (rng.random((4, 3)) > 0.5).astype(float)
    _, grad = loss(pred, target)
    numeric = numeric_gradient(lambda ps: loss(ps[0], target)[0], [pred])[0]
    assert_allclose(grad, numeric, atol=1e-8)


def test_exact_match_accuracy():
    assert exact_match_accuracy(2 * SYNTHETIC_LABELS - 1, SYNTHETIC_LABELS) == 1.0
    flipped = 2 * SYNTHETIC_LABELS - 1
    flipped[0, 0] = -1.0
    assert exact_match_accuracy(flipped, SYNTHETIC_LABELS) == 0.75


@pytest.mark.parametrize("variant", ["kp", "skp", "softmax_skp"])
def test_linear_iteration_model_shapes(variant):
    rng = np.random.default_rng(1)
    model = LinearIterationModel.init(variant, 4, SYNTHETIC_FEATURES, 3, 5, rng)
    logits, states = model.forward(rng.standard_normal((4, SYNTHETIC_FEATURES)))
    assert logits.shape == (4, 3)
    assert len(states) == 6
    for a in model.aggregations():
        assert_allclose(a.sum(axis=1), np.ones(4))
    expected_terms = 1 if variant == "kp" else 2
    assert len(model.parameters()) == 2 * expected_terms + 2
    with pytest.raises(InvalidParameterError):
        LinearIterationModel.init(variant, 4, SYNTHETIC_FEATURES, 3, 0, rng)


def test_fixed_aggregation_drops_from_parameters():
    model = LinearIterationModel.init("skp", 4, SYNTHETIC_FEATURES, 3, 2, np.random.default_rng(2),
                                      learn_aggregation=False)
    logits, states = model.forward(np.ones((4, SYNTHETIC_FEATURES)))
    grads = model.backward(states, bce_sigmoid(logits, SYNTHETIC_LABELS)[1])
    assert len(grads) == len(model.parameters()) == 4


def test_training_gradients_are_exact():
    errors = check_training_gradients(seed=0, instances=2, iterations=3)
    assert set(errors) == {"kp", "skp", "softmax_skp", "lmgc"}
    for name, errs in errors.items():
        assert len(errs) == 2
        assert max(errs) < 1e-5, name


def test_single_step_model_respects_mask():
    rng = np.random.default_rng(3)
    mask = np.eye(3, dtype=bool)
    model = SingleStepModel.init(mask, 2, 2, 2, rng)
    x = rng.standard_normal((3, 2))
    grads = model.backward(x, np.ones((3, 2)))
    for d_scores in grads[:2]:
        assert np.all(d_scores[~mask] == 0.0)
    assert model.forward(x).shape == (3, 2)


def test_synthetic_run_is_seeded():
    first = train_synthetic("skp", 2, [0, 1], steps=30, lr=0.01, log_every=10)
    second = train_synthetic("skp", 2, [0, 1], steps=30, lr=0.01, log_every=10)
    assert first.trace.records == second.trace.records
    assert first.trace.series(0, "loss").size == 4
    assert set(first.accuracy) == {0, 1}
    assert 0.0 <= first.mean_accuracy <= 1.0
    assert not first.diverged


def test_synthetic_argument_checks():
    with pytest.raises(InvalidParameterError):
        train_synthetic("kp", 0, [0], steps=5)
    with pytest.raises(InvalidParameterError):
        train_synthetic("kp", 2, [0], steps=0)
    with pytest.raises(ValueError):
        train_synthetic("gat", 2, [0], steps=5)


@pytest.mark.slow
@pytest.mark.parametrize("variant", ["kp", "skp", "softmax_skp"])
def test_synthetic_training_reduces_loss(variant):
    result = train_synthetic(variant, 8, [0, 1, 2], steps=2000, lr=0.01)
    for seed in (0, 1, 2):
        if seed in result.diverged:
            continue
        losses = result.trace.series(seed, "loss")
        assert losses[-1] < losses[0]


@pytest.mark.slow
def test_skp_separates_synthetic_labels_better_than_kp():
    kp = train_synthetic("kp", 8, range(10), steps=5000, lr=0.001)
    skp = train_synthetic("skp", 8, range(10), steps=5000, lr=0.001)
    assert skp.mean_accuracy >= 0.95 - 1e-9
    assert skp.mean_accuracy - kp.mean_accuracy >= 0.1 - 1e-9


def test_learnable_aggregation_is_trained():
    fixed = train_synthetic("kp", 2, [0], steps=20, lr=0.01, log_every=10)
    learned = train_synthetic("kp", 2, [0], steps=20, lr=0.01, log_every=10, learn_aggregation=True)
    assert fixed.trace.series(0, "loss")[0] == pytest.approx(learned.trace.series(0, "loss")[0])
    assert fixed.trace.records != learned.trace.records


def test_mimo_fits_target_exactly():
    result = train_fit_target(16, 0.1, 4, [0, 1, 2], variant="mimo")
    assert max(result.best_mse.values()) <= 1e-8
    assert all(lr is None for lr in result.best_lr.values())


def test_single_node_single_feature_fit():
    assert train_fit_target(1, 0.5, 1, [0], variant="mimo").best_mse[0] <= 1e-8
    result = train_fit_target(1, 0.5, 1, [0], steps=300, variant="kp", lrs=[0.05])
    assert result.best_mse[0] < result.trace.series(0, "mse@lr=0.05")[0]


def test_trained_fit_improves_on_start():
    result = train_fit_target(10, 0.3, 3, [4], steps=200, variant="lmgc", lrs=[0.01], terms=2)
    series = result.trace.series(4, "mse@lr=0.01")
    assert series[-1] < series[0]
    assert result.best_lr[4] == 0.01


def test_fit_argument_checks():
    with pytest.raises(InvalidParameterError):
        train_fit_target(0, 0.1, 2, [0])
    with pytest.raises(InvalidParameterError):
        train_fit_target(4, 1.5, 2, [0])


@pytest.mark.slow
def test_lmgc_fit_beats_single_term():
    lmgc = train_fit_target(16, 0.1, 4, [0, 1], variant="lmgc")
    kp = train_fit_target(16, 0.1, 4, [0, 1], variant="kp")
    for seed in (0, 1):
        assert lmgc.best_mse[seed] <= 1e-6
        assert lmgc.best_mse[seed] < kp.best_mse[seed]


def test_training_trace_csv():
    trace = TrainingTrace()
    trace.append(1, 0, "loss", 0.5)
    trace.append(2, 0, "loss", math.nan)
    sink = io.StringIO()
    trace.to_csv(sink)
    assert sink.getvalue().splitlines() == ["step,seed,metric,value", "1,0,loss,0.5", "2,0,loss,nan_flag"]
