import numpy as np
import pytest

from mmr import tensor as T
from mmr.errors import ContractError, ShapeError


def fd_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at x."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def check_op(build, shape, seed=0, rtol=1e-4):
    """Autodiff gradient vs finite differences through a random projection."""
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(shape)
    w = rng.standard_normal(build(T.Tensor(x0)).shape)

    def scalar(xv):
        return float((build(T.Tensor(xv)).data * w).sum())

    xt = T.Tensor(x0.copy(), requires_grad=True)
    loss = T.tsum(T.mul(build(xt), w))
    loss.backward()
    num = fd_grad(scalar, x0.copy())
    denom = np.maximum(np.abs(num), 1e-3)
    assert np.max(np.abs(xt.grad - num) / denom) < rtol


def test_matmul_identity():
    a = T.Tensor(np.random.default_rng(0).standard_normal((4, 4)))
    out = T.matmul(T.Tensor(np.eye(4)), a)
    assert np.allclose(out.data, a.data, atol=0)


def test_softmax_symmetry():
    out = T.softmax(T.Tensor([0.0, 0.0]))
    assert np.allclose(out.data, [0.5, 0.5], atol=1e-15)


def test_sum_grad_is_ones():
    x = T.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.tsum(x).backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_norm_squared_grad_is_2x():
    rng = np.random.default_rng(1)
    xv = rng.standard_normal(8)
    x = T.Tensor(xv, requires_grad=True)
    T.tsum(x * x).backward()
    assert np.max(np.abs(x.grad - 2 * xv)) < 1e-12


def test_spec_example_mean_of_wx_squared():
    # grad of mean((W @ x)^2) wrt W against central differences
    rng = np.random.default_rng(2)
    w0 = rng.standard_normal((8, 8))
    xv = rng.standard_normal((8, 1))

    def scalar(wv):
        return float(((wv @ xv) ** 2).mean())

    w = T.Tensor(w0.copy(), requires_grad=True)
    y = T.matmul(w, T.Tensor(xv))
    T.mean(y * y).backward()
    num = fd_grad(scalar, w0.copy())
    denom = np.maximum(np.abs(num), 1e-3)
    assert np.max(np.abs(w.grad - num) / denom) < 1e-4


@pytest.mark.parametrize("name,build,shape,rtol", [
    ("add_broadcast", lambda x: T.add(x, np.ones((1, 5))), (3, 5), 1e-4),
    ("mul_broadcast", lambda x: T.mul(x, np.arange(1.0, 6.0)), (3, 5), 1e-4),
    ("matmul", lambda x: T.matmul(x, np.full((5, 2), 0.7)), (3, 5), 1e-4),
    ("matmul_batched", lambda x: T.matmul(
        x, np.random.default_rng(5).standard_normal((2, 3, 4, 4))), (2, 3, 5, 4), 1e-4),
    ("transpose", lambda x: T.transpose(x), (4, 6), 1e-4),
    ("transpose_axes", lambda x: T.transpose(x, (1, 2, 0)), (2, 3, 4), 1e-4),
    ("reshape", lambda x: T.reshape(x, (2, 10)), (4, 5), 1e-4),
    ("mean_axis", lambda x: T.mean(x, axis=1), (4, 5), 1e-4),
    ("sum_axis", lambda x: T.tsum(x, axis=0), (4, 5), 1e-4),
    ("gelu", T.gelu, (4, 5), 1e-4),
    ("sigmoid", T.sigmoid, (4, 5), 1e-4),
    ("softplus", T.softplus, (4, 5), 1e-4),
    ("softmax", lambda x: T.softmax(x, axis=-1), (4, 5), 1e-3),
    ("layernorm", lambda x: T.layernorm(x), (4, 6), 1e-3),
    ("ln_softmax_stack", lambda x: T.softmax(T.layernorm(x), axis=-1), (3, 6), 1e-3),
])
def test_op_gradients_match_finite_differences(name, build, shape, rtol):
    check_op(build, shape, rtol=rtol)


def test_take_scatter_gradients():
    rng = np.random.default_rng(3)
    x0 = rng.standard_normal((2, 6, 3))
    idx = np.array([[0, 2, 5], [1, 3, 4]])

    def build(x):
        return T.take_patches(x, idx)

    check_op(build, (2, 6, 3), seed=4)

    def build2(x):
        return T.scatter_patches(x, idx, 6)

    check_op(build2, (2, 3, 3), seed=5)


def test_take_then_scatter_round_trip():
    rng = np.random.default_rng(6)
    x = T.Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True)
    idx = np.array([[0, 1, 2, 3], [3, 2, 1, 0]])
    back = T.scatter_patches(T.take_patches(x, idx), idx, 4)
    assert np.allclose(back.data, x.data, atol=0)


def test_broadcast_grad_shapes_match_tensors():
    a = T.Tensor(np.ones((1, 4)), requires_grad=True)
    b = T.Tensor(np.ones((3, 4)), requires_grad=True)
    T.tsum(a + b).backward()
    assert a.grad.shape == (1, 4)
    assert np.array_equal(a.grad, np.full((1, 4), 3.0))
    assert b.grad.shape == (3, 4)


def test_double_backward_rejected():
    x = T.Tensor(np.ones(3), requires_grad=True)
    loss = T.tsum(x * x)
    loss.backward()
    with pytest.raises(ContractError):
        loss.backward()


def test_non_scalar_backward_rejected():
    x = T.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        (x * x).backward()


def test_shape_mismatch_errors():
    with pytest.raises(ShapeError):
        T.add(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4,))))
    with pytest.raises(ShapeError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 2))))


def test_grad_accumulates_across_uses():
    x = T.Tensor(np.array([2.0]), requires_grad=True)
    y = x * 3.0 + x * 5.0
    T.tsum(y).backward()
    assert np.allclose(x.grad, [8.0])


def test_forward_backward_deterministic():
    rng = np.random.default_rng(9)
    xv = rng.standard_normal((5, 5))

    def run():
        x = T.Tensor(xv.copy(), requires_grad=True)
        loss = T.mean(T.gelu(T.matmul(x, xv)) * 2.0)
        loss.backward()
        return loss.data.copy(), x.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2)
    assert np.array_equal(g1, g2)
