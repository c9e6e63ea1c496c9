import numpy as np
import pytest

from stptensor import autograd as ad
from stptensor import forms, layers, stp
from stptensor.plan import LayerPlan
from stptensor.tensor_core import contract
from stptensor.train import (
    Dense,
    DivergenceError,
    Sequential,
    TrainState,
    base_net,
    demo_sine,
    fit,
    grad_check,
    mse_loss,
    sgd_step,
    sine_dataset,
    sine_target,
    stp_net,
    write_history,
)


def test_sine_target_values():
    np.testing.assert_allclose(sine_target([0.0, 0.5, 1.0]), [0.0, 1.70710678118654752, 1.0], atol=1e-15)


def test_sine_dataset():
    (xa, ya), (xt, yt) = sine_dataset(seed=3)
    assert xa.shape == (512, 1) and xt.shape == (256, 1)
    assert xa.min() >= -2 and xa.max() <= 2
    np.testing.assert_array_equal(ya, sine_target(xa))
    (xb, _), _ = sine_dataset(seed=3)
    np.testing.assert_array_equal(xa, xb)
    with pytest.raises(ValueError):
        sine_dataset(x_range=(1, 1))


def test_mse_loss():
    assert mse_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    assert mse_loss([1.0, 1.0], [0.0, 0.0])[0] == 1.0
    rng = np.random.default_rng(0)
    p, y = rng.normal(size=5), rng.normal(size=5)
    _, g = mse_loss(p, y)
    h = 1e-6
    num = [(mse_loss(p + h * e, y)[0] - mse_loss(p - h * e, y)[0]) / (2 * h) for e in np.eye(5)]
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-9)
    with pytest.raises(ValueError):
        mse_loss([1.0], [1.0, 2.0])


def test_sgd_step_examples():
    s = TrainState([np.array([1.0, -2.0])], grads=[np.zeros(2)], weight_decay=0.0)
    np.testing.assert_array_equal(sgd_step(s).params[0], [1.0, -2.0])
    s = TrainState([np.array(1.0)], grads=[np.array(1.0)], lr_schedule=[(0, 0.1)], momentum=0.0, weight_decay=0.0)
    assert sgd_step(s).params[0] == pytest.approx(0.9)
    with pytest.raises(ValueError):
        sgd_step(TrainState([np.array(1.0)]))


def test_sgd_momentum_recurrence():
    lr, mu = 0.1, 0.9
    s = TrainState([np.array(1.0)], grads=[np.array(1.0)], lr_schedule=[(0, lr)], momentum=mu, weight_decay=0.0)
    s = sgd_step(s)
    s = sgd_step(TrainState(s.params, grads=[np.array(0.5)], lr_schedule=[(0, lr)], momentum=mu,
                            weight_decay=0.0, velocity=s.velocity))
    v1 = 1.0
    v2 = mu * v1 + 0.5
    assert float(s.params[0]) == pytest.approx(1.0 - lr * v1 - lr * v2)


def test_lr_schedule():
    s = TrainState([np.zeros(1)], lr_schedule=[(0, 0.1), (10, 0.01)])
    assert s.lr == 0.1
    s.epoch = 10
    assert s.lr == 0.01
    with pytest.raises(ValueError):
        TrainState([np.zeros(1)], lr_schedule=[(0, 0.0)])


def test_fit_zero_epochs_and_linear_convergence():
    model = Sequential([Dense(1, 1)])
    x = np.linspace(-1, 1, 64).reshape(-1, 1)
    data = ((x, 3 * x - 1), (x, 3 * x - 1))
    state = TrainState(model.init(0), lr_schedule=[(0, 0.01)], momentum=0.9, weight_decay=0.0)
    hist, _ = fit(model, data, 0, state)
    assert hist == []
    hist, _ = fit(model, data, 500, state, batch_size=64)
    assert hist[-1][1] < 1e-6


def test_fit_reports_divergence():
    model = Sequential([Dense(1, 1)])
    x = np.linspace(-1, 1, 16).reshape(-1, 1)
    state = TrainState(model.init(0), lr_schedule=[(0, 1e3)], weight_decay=0.0)
    with pytest.raises(DivergenceError):
        fit(model, ((x, 5 * x), (x, 5 * x)), 1000, state)


def test_network_parameter_ratio():
    b, s = base_net(), stp_net()
    assert s.layers[2].weight_count() * 4 == b.layers[2].weight_count() == 4096


def test_demo_determinism(tmp_path):
    a = demo_sine(seed=7, epochs=3, out_dir=tmp_path / "a")
    b = demo_sine(seed=7, epochs=3, out_dir=tmp_path / "b")
    assert a.stp_history == b.stp_history
    for name in ("base_loss_seed7.csv", "stp_loss_seed7.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    write_history(tmp_path / "h.csv", a.base_history)
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "epoch,train_mse,test_mse"


# -- gradient checks ---------------------------------------------------------


def test_grad_check_dense_and_stp():
    rng = np.random.default_rng(0)
    rep = grad_check(lambda x, W, b: layers.dense_forward(x, W, b),
                     [rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=3)])
    assert rep.passed, rep
    rep = grad_check(lambda x, W: layers.stp_dense_forward(x, W), [rng.normal(size=(3, 8)), rng.normal(size=(4, 2))])
    assert rep.passed, rep


PRIMITIVES = {
    "reshape": (lambda x: ad.reshape(x, (6, 2)), [(3, 4)]),
    "transpose": (lambda x: ad.transpose(x, (2, 0, 1)), [(2, 3, 4)]),
    "tensordot": (lambda a, b: ad.tensordot(a, b, ([2, 0], [0, 2])), [(2, 3, 4), (4, 5, 2)]),
    "add": (lambda a, b: ad.add(a, b), [(3, 4), (4,)]),
    "multiply": (lambda a, b: ad.multiply(a, b), [(3, 4), (3, 1)]),
    "tanh": (lambda x: ad.tanh(x), [(3, 4)]),
    "contract": (lambda a, b: contract(a, b, 2), [(2, 3, 4), (3, 4, 2)]),
    "semi_contract": (lambda a, b: stp.semi_contract(a, 2, stp.SemiCore(b, 2, (False, True, False)), 1).tensor,
                      [(2, 6, 2), (3, 2, 3)]),
    "semi_trace": (lambda a: stp.semi_trace(stp.SemiCore(a, 2, (True, True, False)), 3, 1).tensor, [(2, 3, 4)]),
    "semi_mode_n": (lambda g, a: stp.semi_mode_n(g, a, 2), [(3, 4, 2), (2, 3)]),
    "conv2d": (lambda x, k: ad.conv2d(x, k, 2, 1), [(2, 5, 5, 2), (3, 3, 2, 3)]),
    "sum_mean": (lambda x: ad.add(ad.sum_all(x), ad.mean_all(x)), [(3, 4)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    fn, shapes = PRIMITIVES[name]
    rng = np.random.default_rng(1)
    rep = grad_check(fn, [rng.normal(size=s) for s in shapes], tol=1e-5, name=name)
    assert rep.passed, rep


def test_str_fcl_end_to_end_gradient():
    W = forms.init_gaussian(LayerPlan("str", (4, 2), (2, 4), rank=4, t=2), seed=0)
    fn = lambda x, *ts: layers.str_fcl_forward(x, W.with_tensors(ts))  # noqa: E731
    rng = np.random.default_rng(2)
    rep = grad_check(fn, [rng.normal(size=(2, 4, 2))] + list(W.tensors()), tol=1e-4)
    assert rep.passed, rep
    assert len(rep.errors) == 1 + len(W.tensors())
