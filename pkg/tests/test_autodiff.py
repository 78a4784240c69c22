import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ginnbo import autodiff as ad


def fd_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def scalar_of(build):
    """Wrap ``build(tape, leaf) -> 0-d node`` as a plain function of the leaf value."""
    def f(v):
        tape = ad.Tape()
        return float(build(tape, tape.variable(v)).value)
    return f


def ad_grad(build, v):
    tape = ad.Tape()
    leaf = tape.variable(v)
    return ad.grad(build(tape, leaf), [leaf])[0]


def test_square_at_three():
    tape = ad.Tape()
    x = tape.variable(3.0)
    (g,) = ad.grad_wrt_inputs(ad.square(x), [x])
    assert g.value == 6.0


def test_tanh_at_zero():
    tape = ad.Tape()
    x = tape.variable(0.0)
    (g,) = ad.grad(ad.tanh(x), [x])
    assert g == 1.0


def test_theta_squared():
    tape = ad.Tape()
    th = tape.variable(2.0)
    assert ad.grad_wrt_params(ad.square(th), [th])[0] == 4.0


def test_double_backprop_linear():
    # phi = theta * x, d phi / dx = theta, loss = theta^2
    tape = ad.Tape()
    th = tape.variable(1.0)
    x = tape.variable(3.0)
    (dx,) = ad.grad_wrt_inputs(ad.mul(th, x), [x])
    loss = ad.square(dx)
    assert float(loss.value) == 1.0
    assert ad.grad_wrt_params(loss, [th])[0] == 2.0


UNARY = {
    "tanh": (ad.tanh, lambda rng, s: rng.normal(size=s)),
    "exp": (ad.exp, lambda rng, s: rng.normal(size=s)),
    "log": (ad.log, lambda rng, s: rng.uniform(0.5, 3.0, size=s)),
    "square": (ad.square, lambda rng, s: rng.normal(size=s)),
    "reciprocal": (ad.reciprocal, lambda rng, s: rng.uniform(0.5, 3.0, size=s) * rng.choice([-1, 1], size=s)),
    "neg": (ad.neg, lambda rng, s: rng.normal(size=s)),
    "scale": (lambda a: ad.scale(a, -1.7), lambda rng, s: rng.normal(size=s)),
    "add_const": (lambda a: ad.add_const(a, 0.3), lambda rng, s: rng.normal(size=s)),
    "transpose": (ad.transpose, lambda rng, s: rng.normal(size=s)),
    "sum_rows": (ad.sum_rows, lambda rng, s: rng.normal(size=s)),
    "column": (lambda a: ad.column(a, 1), lambda rng, s: rng.normal(size=s)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_primitives_match_fd(name):
    op, draw = UNARY[name]
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    v = draw(rng, (3, 4))
    w = rng.normal(size=op(ad.Tape().constant(v)).value.shape)

    def build(tape, leaf):
        out = op(leaf)
        return ad.sum_(ad.mul(out, tape.constant(w)))

    assert rel_err(ad_grad(build, v), fd_grad(scalar_of(build), v)) < 1e-6


@pytest.mark.parametrize("name", ["add", "sub", "mul", "matmul", "add_bias", "mul_scalar"])
def test_binary_primitives_match_fd(name):
    rng = np.random.default_rng(7)
    if name == "matmul":
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        op = ad.matmul
    elif name == "add_bias":
        a, b = rng.normal(size=(3, 4)), rng.normal(size=4)
        op = ad.add_bias
    elif name == "mul_scalar":
        a, b = rng.normal(size=(3, 4)), np.array(rng.normal())
        op = ad.mul
    else:
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        op = getattr(ad, name)
    out_shape = op(ad.Node(a), ad.Node(b)).value.shape
    w = rng.normal(size=out_shape)

    for which in (0, 1):
        def build(tape, leaf):
            other = tape.variable(b if which == 0 else a)
            args = (leaf, other) if which == 0 else (other, leaf)
            return ad.sum_(ad.mul(op(*args), tape.constant(w)))

        v = a if which == 0 else b
        assert rel_err(ad_grad(build, v), fd_grad(scalar_of(build), v)) < 1e-6


def test_broadcast_and_fill_match_fd():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(5, 3))

    def build(tape, leaf):
        return ad.sum_(ad.mul(ad.broadcast_rows(leaf, 5), tape.constant(w)))

    v = rng.normal(size=3)
    assert rel_err(ad_grad(build, v), fd_grad(scalar_of(build), v)) < 1e-6

    def build_fill(tape, leaf):
        return ad.sum_(ad.mul(ad.fill(leaf, (2, 3)), tape.constant(w[:2])))

    s = np.array(0.4)
    assert rel_err(ad_grad(build_fill, s), fd_grad(scalar_of(build_fill), s)) < 1e-6


def _mlp(tape, params, x):
    h = x
    for k, (W, b) in enumerate(params):
        h = ad.add_bias(ad.matmul(h, W), b)
        if k < len(params) - 1:
            h = ad.tanh(h)
    return ad.column(h, 0)


def _random_mlp(rng, widths):
    return [(rng.normal(scale=1 / np.sqrt(i), size=(i, o)), rng.normal(scale=0.1, size=o))
            for i, o in zip(widths[:-1], widths[1:])]


def test_input_gradient_of_two_layer_net_matches_fd():
    rng = np.random.default_rng(11)
    layers = _random_mlp(rng, [2, 5, 5, 1])
    x0 = rng.normal(size=(1, 2))

    def f(v):
        tape = ad.Tape()
        ps = [(tape.variable(W), tape.variable(b)) for W, b in layers]
        return float(ad.sum_(_mlp(tape, ps, tape.variable(v))).value)

    tape = ad.Tape()
    ps = [(tape.variable(W), tape.variable(b)) for W, b in layers]
    xl = tape.variable(x0)
    (g,) = ad.grad_wrt_inputs(ad.sum_(_mlp(tape, ps, xl)), [xl])
    assert g.recorded
    assert rel_err(g.value, fd_grad(f, x0)) < 1e-6


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    depth=st.integers(1, 3),
    width=st.integers(1, 8),
    dim=st.integers(1, 4),
)
def test_double_backprop_norm_of_input_gradient(seed, depth, width, dim):
    rng = np.random.default_rng(seed)
    layers = _random_mlp(rng, [dim] + [width] * depth + [1])
    x0 = rng.uniform(-1, 1, size=(3, dim))
    flat = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in layers])

    def unpack(tape, theta):
        out, k = [], 0
        for W, b in layers:
            Wn = theta[k:k + W.size].reshape(W.shape)
            k += W.size
            bn = theta[k:k + b.size]
            k += b.size
            out.append((tape.variable(Wn), tape.variable(bn)))
        return out

    def g_of_theta(theta, want_grad=False):
        tape = ad.Tape()
        ps = unpack(tape, theta)
        xl = tape.variable(x0)
        (dx,) = ad.grad_wrt_inputs(ad.sum_(_mlp(tape, ps, xl)), [xl])
        loss = ad.sum_(ad.square(dx))
        if not want_grad:
            return float(loss.value)
        leaves = [p for pair in ps for p in pair]
        return np.concatenate([np.ravel(a) for a in ad.grad_wrt_params(loss, leaves)])

    analytic = g_of_theta(flat, True)
    numeric = fd_grad(g_of_theta, flat)
    scale = max(np.max(np.abs(numeric)), 1e-3)
    assert np.max(np.abs(analytic - numeric)) / scale < 1e-4


def test_non_scalar_output_is_rejected():
    tape = ad.Tape()
    x = tape.variable(np.ones(3))
    with pytest.raises(ValueError, match="non-scalar"):
        ad.grad(ad.tanh(x), [x])


def test_unconnected_parameter_gets_zero_gradient():
    tape = ad.Tape()
    a = tape.variable(np.ones(2))
    b = tape.variable(np.ones(4))
    (gb,) = ad.grad_wrt_params(ad.sum_(ad.square(a)), [b])
    assert np.array_equal(gb, np.zeros(4))


def test_tape_is_topologically_ordered_and_replays_exactly():
    rng = np.random.default_rng(0)
    layers = _random_mlp(rng, [3, 6, 1])
    tape = ad.Tape()
    ps = [(tape.variable(W), tape.variable(b)) for W, b in layers]
    xl = tape.variable(rng.normal(size=(4, 3)))
    (dx,) = ad.grad_wrt_inputs(ad.sum_(_mlp(tape, ps, xl)), [xl])
    loss = ad.sum_(ad.square(dx))
    for node in tape.nodes:
        assert all(p.index < node.index for p in node.parents if p.tape is tape)
    replayed = tape.replay()
    for node, value in zip(tape.nodes, replayed):
        assert np.array_equal(node.value, value)
    assert np.array_equal(replayed[loss.index], loss.value)


def test_replay_with_new_leaf_values():
    tape = ad.Tape()
    x = tape.variable(np.array([1.0, 2.0]))
    y = ad.sum_(ad.square(x))
    vals = tape.replay({x.index: np.array([3.0, 4.0])})
    assert vals[y.index] == 25.0


def test_identical_passes_give_identical_gradients():
    rng = np.random.default_rng(5)
    layers = _random_mlp(rng, [2, 8, 8, 1])
    x0 = rng.normal(size=(5, 2))

    def run():
        tape = ad.Tape()
        ps = [(tape.variable(W), tape.variable(b)) for W, b in layers]
        xl = tape.variable(x0)
        (dx,) = ad.grad_wrt_inputs(ad.sum_(_mlp(tape, ps, xl)), [xl])
        loss = ad.sum_(ad.square(dx))
        return ad.grad_wrt_params(loss, [p for pair in ps for p in pair])

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_no_grad_records_nothing():
    tape = ad.Tape()
    x = tape.variable(np.ones(3))
    n = len(tape)
    with ad.no_grad():
        y = ad.tanh(x)
    assert len(tape) == n
    assert not y.recorded


def test_shape_checks():
    tape = ad.Tape()
    a = tape.variable(np.ones((2, 3)))
    with pytest.raises(ValueError):
        ad.add(a, tape.variable(np.ones((3, 2))))
    with pytest.raises(ValueError):
        ad.matmul(a, a)
    with pytest.raises(ValueError):
        ad.add_bias(a, tape.variable(np.ones(2)))
