import numpy as np
import pytest

from partdiff import autodiff as ad
from partdiff.autodiff import Value, backward
from partdiff.errors import ContractError, ShapeError
from partdiff.params import ParamStore, adam_step


def test_relu_forward_and_grad():
    x = Value(np.array([-1.0, 2.0]))
    y = ad.square_norm(ad.relu(x))
    backward(y)
    assert y.data == 4.0
    assert np.array_equal(x.grad, [0.0, 4.0])


def test_linear_identity():
    x = Value(np.array([1.0, 0.0]))
    out = ad.linear(x, Value(np.eye(2)), Value(np.zeros(2)))
    assert np.array_equal(out.data, [1.0, 0.0])


def test_linear_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(3,\).*\(2, 2\)"):
        ad.linear(Value(np.zeros(3)), Value(np.zeros((2, 2))))


def test_max_pool_routes_gradient_to_argmax():
    x = Value(np.array([[1.0], [3.0], [2.0]]))
    pooled = ad.max_pool_points(x, axis=0)
    assert np.array_equal(pooled.data, [3.0])
    backward(ad.square_norm(pooled))
    assert np.array_equal(x.grad, [[0.0], [6.0], [0.0]])
    # finite-difference oracle on the argmax entry
    h = 1e-6
    def f(v):
        return float(np.max(np.array([[1.0], [v], [2.0]]))**2)
    fd = (f(3.0 + h) - f(3.0 - h)) / (2 * h)
    assert x.grad[1, 0] == pytest.approx(fd, rel=1e-6)


def test_square_norm_gradient_is_two_w():
    w = Value(np.array([3.0, 4.0]))
    loss = ad.square_norm(w)
    backward(loss)
    assert loss.data == 25.0
    assert np.array_equal(w.grad, [6.0, 8.0])


def test_constant_loss_leaves_grads_zero():
    w = Value(np.array([1.0, 2.0]))
    w.zero_grad()
    loss = Value(np.asarray(5.0))
    backward(loss)
    assert np.array_equal(w.grad, [0.0, 0.0])


def test_backward_requires_scalar():
    x = Value(np.zeros(3))
    with pytest.raises(ContractError):
        backward(ad.relu(x))


def test_backward_consumes_trace():
    x = Value(np.array([2.0]))
    loss = ad.square_norm(x)
    backward(loss)
    with pytest.raises(ContractError):
        backward(loss)


def test_mean_pool_sorted_is_permutation_invariant():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((7, 5))
    perm = rng.permutation(7)
    a = ad.mean_pool_nodes(Value(x), axis=0).data
    b = ad.mean_pool_nodes(Value(x[perm]), axis=0).data
    assert np.array_equal(a, b)  # bit-exact, not just approximate


def test_mean_pool_empty_axis_gives_zeros():
    out = ad.mean_pool_nodes(Value(np.zeros((2, 0, 4))), axis=1)
    assert out.data.shape == (2, 4)
    assert np.all(out.data == 0.0)


def test_sin_cos_values_and_grads():
    x = Value(np.array([0.0, np.pi / 2.0]))
    s, c = ad.sin(x), ad.cos(x)
    assert np.allclose(s.data, [0.0, 1.0])
    assert np.allclose(c.data, [1.0, 0.0], atol=1e-12)
    loss = ad.square_norm(ad.concat([s, c], axis=0))
    backward(loss)
    # d/dx (sin^2 + cos^2) = 0 identically
    assert np.allclose(x.grad, 0.0, atol=1e-12)


def test_take_scatter_adds_on_repeated_indices():
    x = Value(np.array([[1.0], [2.0]]))
    gathered = ad.take(x, np.array([0, 0, 1]), axis=0)
    backward(ad.square_norm(gathered))
    assert np.array_equal(x.grad, [[4.0], [4.0]])


def _random_net_loss(params: list[Value], x: np.ndarray) -> Value:
    """Small composite network over the primitive set."""
    h = ad.relu(ad.linear(Value(x), params[0], params[1]))
    h = ad.concat([h, ad.sin(h)], axis=-1)
    h = ad.linear(h, params[2], params[3])
    h = ad.mean_pool_nodes(h, axis=0)
    return ad.square_norm(ad.scale(h, 0.5))


def fd_check(make_loss, params, h=1e-4, tol=1e-4):
    """Central finite differences over every parameter entry."""
    loss = make_loss()
    for p in params:
        p.zero_grad()
    backward(loss)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = make_loss().data
            flat[i] = orig - h
            lm = make_loss().data
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(fd), abs(gflat[i]), 1.0)
            worst = max(worst, abs(fd - gflat[i]) / denom)
    assert worst < tol, f"max relative gradient error {worst}"
    return worst


@pytest.mark.parametrize("seed", range(5))
def test_gradcheck_random_small_networks(seed):
    rng = np.random.default_rng(seed)
    din, dh = 4, 6
    params = [
        Value(rng.standard_normal((din, dh)) * 0.5),
        Value(rng.standard_normal(dh) * 0.1),
        Value(rng.standard_normal((2 * dh, 3)) * 0.5),
        Value(rng.standard_normal(3) * 0.1),
    ]
    x = rng.standard_normal((5, din))
    fd_check(lambda: _random_net_loss(params, x), params)


def test_backward_linearity():
    rng = np.random.default_rng(2)
    w = Value(rng.standard_normal(4))

    def grads(a, b):
        w.zero_grad()
        l1 = ad.square_norm(w)
        l2 = ad.square_norm(ad.sin(w))
        backward(ad.add(ad.scale(l1, a), ad.scale(l2, b)))
        return w.grad.copy()

    g1 = grads(1.0, 0.0)
    g2 = grads(0.0, 1.0)
    g = grads(0.7, -1.3)
    assert np.max(np.abs(g - (0.7 * g1 - 1.3 * g2))) < 1e-10


def test_repeated_backward_after_fresh_forward_is_identical():
    rng = np.random.default_rng(8)
    w = Value(rng.standard_normal((3, 3)))
    x = rng.standard_normal((2, 3))

    def run():
        w.zero_grad()
        backward(ad.square_norm(ad.relu(ad.linear(Value(x), w))))
        return w.grad.copy()

    assert np.array_equal(run(), run())


def test_adam_first_step_matches_hand_formula():
    store = ParamStore()
    p = store.add("w", np.array([0.0]))
    p.zero_grad()
    p.grad[:] = 1.0
    adam_step(store, lr=1e-3)
    # bias-corrected: m_hat = 1, v_hat = 1 -> step = -lr / (1 + eps)
    expected = -1e-3 / (1.0 + 1e-8)
    assert p.data[0] == pytest.approx(expected, rel=1e-12)


def test_adam_zero_grad_keeps_parameters():
    store = ParamStore()
    p = store.add("w", np.array([1.5, -2.0]))
    p.zero_grad()
    adam_step(store, lr=1e-2)
    assert np.array_equal(p.data, [1.5, -2.0])


def test_adam_two_steps_deterministic():
    def run():
        store = ParamStore()
        p = store.add("w", np.array([0.5]))
        for _ in range(2):
            p.zero_grad()
            p.grad[:] = 0.3
            adam_step(store, lr=1e-3)
        return p.data.copy(), store.step

    (a, sa), (b, sb) = run(), run()
    assert np.array_equal(a, b)
    assert sa == sb == 2
