import math

import numpy as np
import pytest

from hybridplan.tensor_core import (
    Adam,
    AdamState,
    CheckpointError,
    DomainError,
    NotScalar,
    ShapeMismatch,
    Tape,
    Tensor,
    adam_step,
    backward,
    bce,
    cross_entropy,
    finite_diff_check,
    load,
    loss,
    mse,
    no_grad,
    save,
    uniform_init,
)
from hybridplan.tensor_core import tensor as T
from hybridplan.tensor_core.checkpoint import dumps, loads


def _scalar(fn):
    return lambda th: T.sum_all(fn(th))


OPS = {
    "tanh": lambda x: T.tanh(x),
    "sigmoid": lambda x: T.sigmoid(x),
    "relu_shifted": lambda x: T.relu(T.add(x, Tensor(np.full(x.shape, 0.05)))),
    "exp": lambda x: T.exp(T.scale(x, 0.3)),
    "power": lambda x: T.power(T.add(T.mul(x, x), Tensor(np.ones(x.shape))), 1.5),
    "softmax": lambda x: T.mul(T.softmax_rows(x), Tensor(np.arange(x.size).reshape(x.shape) * 1.0)),
    "log_softmax": lambda x: T.mul(T.log_softmax_rows(x), Tensor(np.arange(x.size).reshape(x.shape) * 0.1)),
    "layer_norm": lambda x: T.mul(T.layer_norm(x, Tensor(np.full(4, 1.3)), Tensor(np.full(4, 0.2))),
                                  Tensor(np.arange(x.size).reshape(x.shape) * 0.1)),
    "batch_norm": lambda x: T.mul(T.batch_norm(x, Tensor(np.full(4, 0.7)), Tensor(np.zeros(4)))[0],
                                  Tensor(np.arange(x.size).reshape(x.shape) * 0.1)),
    "matmul_T": lambda x: T.matmul(x, T.transpose(x)),
    "concat_stack": lambda x: T.stack([T.concat([x, x], axis=1), T.concat([x, T.scale(x, 2.0)], axis=1)]),
    "mean_rows": lambda x: T.mul(T.mean_rows(x), T.mean_rows(x)),
    "select_reshape": lambda x: T.mul(T.select(T.reshape(x, (3, 2, 2)), 1, axis=1), T.select(T.reshape(x, (3, 2, 2)), 0, axis=2)),
    "embed": lambda x: T.embed(x, [0, 2, 2, 1]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    rng = np.random.default_rng(3)
    theta = Tensor(rng.normal(size=(3, 4)))
    assert finite_diff_check(_scalar(OPS[name]), theta) < 1e-6


def test_batched_matmul_and_gather_gradients():
    rng = np.random.default_rng(4)
    b = Tensor(rng.normal(size=(4, 3)))
    a3 = Tensor(rng.normal(size=(2, 5, 4)))
    assert finite_diff_check(lambda th: T.sum_all(T.tanh(T.matmul(a3, th))), b) < 1e-6
    assert finite_diff_check(lambda th: T.sum_all(T.tanh(T.matmul(th, b))), a3) < 1e-6
    idx = np.array([[0, 4, 4], [1, 2, 3]])
    assert finite_diff_check(lambda th: T.sum_all(T.tanh(T.gather_rows(th, idx))), a3) < 1e-6


def test_backward_requires_scalar_and_shapes():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = T.scale(x, 2.0)
        with pytest.raises(NotScalar):
            backward(y, tape)
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        with no_grad():
            T.mul(x, x)
        assert len(tape) == 0


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        y = T.sum_all(T.add(T.mul(x, x), x))
        backward(y, tape)
    assert x.grad[0] == pytest.approx(5.0)


def test_adam_two_steps_by_hand():
    # constant gradient g: m_hat = g and v_hat = g^2 at every step, so each update is alpha * g / (|g| + delta)
    p = Tensor(np.array([1.0, -2.0]))
    st = AdamState.for_shape(2, alpha=0.01)
    g = np.array([0.5, -3.0])
    adam_step(st, p, g)
    adam_step(st, p, g)
    expect = np.array([1.0, -2.0]) - 2 * 0.01 * g / (np.abs(g) + 1e-8)
    assert np.max(np.abs(p.data - expect)) < 1e-10
    assert st.t == 2


def test_adam_delta_placement_flag():
    g = np.array([1e-4])
    a, b = Tensor(np.zeros(1)), Tensor(np.zeros(1))
    adam_step(AdamState.for_shape(1, delta=1e-6), a, g)
    adam_step(AdamState.for_shape(1, delta=1e-6, delta_inside_sqrt=True), b, g)
    assert a.data[0] == pytest.approx(-1e-3 * 1e-4 / (1e-4 + 1e-6))
    assert b.data[0] == pytest.approx(-1e-3 * 1e-4 / math.sqrt(1e-8 + 1e-6))
    with pytest.raises(ShapeMismatch):
        adam_step(AdamState.for_shape(2), Tensor(np.zeros(1)), g)


def test_adam_optimizer_and_decay():
    w = Tensor(np.array([3.0]), requires_grad=True)
    opt = Adam([w], lr=0.1, decay=0.5)
    for _ in range(200):
        opt.zero_grad()
        with Tape() as tape:
            backward(T.sum_all(T.mul(w, w)), tape)
        opt.step()
    assert abs(w.data[0]) < 0.05
    opt.decay_lr()
    assert opt.alpha == pytest.approx(0.05)


def test_uniform_init_bounds():
    rng = np.random.default_rng(0)
    w = uniform_init(rng, 30, 10)
    r = math.sqrt(6 / 40)
    assert w.shape == (30, 10) and np.all(np.abs(w) <= r) and np.abs(w).max() > 0.9 * r


def test_losses():
    p = Tensor(np.array([[0.25, 0.75], [0.5, 0.5]]))
    y = Tensor(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert cross_entropy(p, y).item() == pytest.approx(-(math.log(0.75) + math.log(0.5)) / 2)
    assert mse(Tensor(np.array([1.0, 3.0])), Tensor(np.array([0.0, 0.0]))).item() == pytest.approx(5.0)
    assert bce(Tensor(np.array([0.5])), Tensor(np.array([1.0]))).item() == pytest.approx(math.log(2))
    with pytest.raises(DomainError):
        bce(Tensor(np.array([1.0])), Tensor(np.array([1.0])))
    assert loss("mse", Tensor(np.array([2.0])), Tensor(np.array([0.0]))).item() == pytest.approx(4.0)


def test_loss_gradients():
    rng = np.random.default_rng(5)
    y = np.eye(4)[[0, 3, 1]]
    th = Tensor(rng.normal(size=(3, 4)))
    assert finite_diff_check(lambda t: cross_entropy(T.softmax_rows(t), Tensor(y)), th) < 1e-6
    assert finite_diff_check(lambda t: bce(T.sigmoid(t), Tensor(y)), th) < 1e-6
    assert finite_diff_check(lambda t: mse(t, Tensor(y)), th) < 1e-6


def test_checkpoint_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"a": rng.normal(size=(3, 2)), "b": np.array([np.pi, -0.0, 1e-300])}
    save(tmp_path / "x.ckpt", tensors, {"note": "hello"})
    back, meta = load(tmp_path / "x.ckpt")
    assert meta["note"] == "hello"
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
    assert dumps(*loads(dumps(tensors))) == dumps(tensors)
    with pytest.raises(CheckpointError):
        loads("not a checkpoint\n")
