import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lmakit.distill import DistillConfig, fit, quantized_distill_train, train_teacher
from lmakit.engine import Tensor, softmax_cross_entropy
from lmakit.errors import ConfigurationError
from lmakit.model import MLP, ArchSpec
from lmakit.quant import QuantConfig, quantize_array, quantize_ste, quantize_uniform, ste_backward
from toys import FAST, separable

finite = st.floats(-1e3, 1e3, allow_nan=False)
tensors = arrays(np.float64, st.integers(2, 60), elements=finite)


def test_nearest_level():
    q = quantize_array(np.array([0.0, 0.4, 1.0]), 2)
    np.testing.assert_allclose(q, [0.0, 1 / 3, 1.0], rtol=0, atol=1e-15)


def test_ties_round_up():
    # 0.5 sits halfway between levels 1/3 and 2/3 in level units (1.5)
    assert quantize_array(np.array([0.0, 0.5, 1.0]), 2)[1] == pytest.approx(2 / 3)


def test_endpoints_exact():
    w = np.random.default_rng(0).normal(size=50)
    q = quantize_array(w, 3)
    assert q.min() == w.min() and q.max() == w.max()


def test_constant_tensor_unchanged():
    w = np.full(7, 1.25)
    np.testing.assert_array_equal(quantize_array(w, 4), w)


def test_config_bounds():
    QuantConfig(2)
    QuantConfig(8)
    for bits in (1, 9):
        with pytest.raises(ConfigurationError):
            QuantConfig(bits)


@settings(max_examples=200, deadline=None)
@given(w=tensors, bits=st.integers(2, 8))
def test_round_trip_bound(w, bits):
    step = (w.max() - w.min()) / (2**bits - 1)
    err = np.abs(quantize_array(w, bits) - w)
    assert np.all(err <= step / 2 * (1 + 1e-9) + 1e-12)


@settings(max_examples=200, deadline=None)
@given(w=tensors, bits=st.integers(2, 8))
def test_idempotent_and_level_count(w, bits):
    q = quantize_array(w, bits)
    np.testing.assert_array_equal(quantize_array(q, bits), q)
    assert len(np.unique(q)) <= 2**bits


@settings(max_examples=200, deadline=None)
@given(w=tensors, bits=st.integers(2, 8))
def test_monotone(w, bits):
    order = np.argsort(w, kind="stable")
    assert np.all(np.diff(quantize_array(w, bits)[order]) >= 0)


def test_ste_identity():
    g = np.random.default_rng(1).normal(size=(3, 4, 2))
    assert ste_backward(g) is g
    w = Tensor(np.random.default_rng(2).normal(size=(3, 2)), requires_grad=True)
    q = quantize_ste(w, 4)
    np.testing.assert_array_equal(q.data, quantize_uniform(w, QuantConfig(4)).data)
    (q * Tensor(g[:, :2, 0])).sum().backward()
    np.testing.assert_array_equal(w.grad, g[:, :2, 0])


def test_updates_land_on_shadow_weights():
    model = MLP(ArchSpec(hidden=(4,)), seed=0)
    model.set_quant_bits(2)
    first = model.layers[0]
    before = first.weight.data.copy()
    x = np.random.default_rng(3).normal(size=(8, 2))
    softmax_cross_entropy(model(Tensor(x)), np.zeros(8, dtype=int)).backward()
    first.weight.data -= 0.01 * first.weight.grad
    assert len(np.unique(first.weight.data)) == first.weight.size
    assert not np.array_equal(first.weight.data, before)


@pytest.mark.parametrize("bits", [8, 4])
def test_one_layer_quantized_model_separates_toy(bits):
    data = separable()
    model = MLP(ArchSpec(hidden=()), seed=1)
    model.set_quant_bits(bits)
    y = data.y_train
    trained = fit(model, data, FAST, 1, lambda logits, idx: softmax_cross_entropy(logits, y[idx]))
    assert trained.test_accuracy == 1.0


def test_eight_bits_moves_trained_weights_by_half_step():
    data = separable()
    teacher = train_teacher(ArchSpec(hidden=(8,)), data, FAST, seed=2)
    for _, p in teacher.model.named_parameters():
        step = (p.data.max() - p.data.min()) / 255
        assert np.all(np.abs(quantize_array(p.data, 8) - p.data) <= step / 2 * (1 + 1e-9))


def test_quantized_student_reports_quantized_accuracy():
    data = separable()
    teacher = train_teacher(ArchSpec(hidden=(8,)), data, FAST, seed=2)
    arch = ArchSpec(hidden=(4,), activation="lma", segments=4)
    student = quantized_distill_train(arch, teacher, data, DistillConfig(train=FAST, seed=3), QuantConfig(4))
    assert all(layer.quant_bits == 4 for layer in student.model.layers if hasattr(layer, "quant_bits"))
    student.model.eval()
    acc = float(np.mean(student.model.predict(data.x_test) == data.y_test))
    assert acc == student.test_accuracy
