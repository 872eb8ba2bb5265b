"""Tape mechanics: accumulation over shared uses, recording modes, wiring errors."""

import numpy as np
import pytest

import srfbn.autodiff as ad
from srfbn.gradcheck import finite_difference_gradient, rel_error


def test_gradient_accumulates_over_shared_uses():
    tape = ad.Tape()
    x = tape.leaf(np.full((1, 1, 2, 2), 3.0))
    y = ad.add(x, x)  # dy/dx should be 2 at every element
    loss = ad.mse_loss(y, tape.leaf(np.zeros((1, 1, 2, 2))))
    tape.backward(loss)
    # d/dx mean((2x)^2) = 8x / 4
    assert np.allclose(x.grad, 8.0 * 3.0 / 4.0)


def test_weight_reuse_across_two_convs():
    rng = np.random.default_rng(30)
    xv = rng.standard_normal((1, 2, 5, 5))
    wv = rng.standard_normal((2, 2, 3, 3))
    tape = ad.Tape()
    x = tape.leaf(xv)
    w = tape.leaf(wv)
    h1 = ad.conv2d(x, w, None, 1, 1)
    h2 = ad.conv2d(h1, w, None, 1, 1)  # same weight twice, grads must sum
    loss = ad.mse_loss(h2, tape.leaf(np.zeros_like(h2.value)))
    tape.backward(loss)

    def f(v):
        t = ad.Tape()
        out = ad.conv2d(ad.conv2d(t.leaf(xv), t.leaf(v), None, 1, 1), t.leaf(v), None, 1, 1)
        return float(ad.mse_loss(out, t.leaf(np.zeros_like(out.value))).value)

    assert rel_error(w.grad, finite_difference_gradient(f, wv)) < 1e-4


def test_non_recording_tape_is_cheap_and_not_differentiable():
    tape = ad.Tape(record=False)
    x = tape.leaf(np.ones((1, 1, 4, 4)))
    y = ad.bilinear_upsample(x, 2)
    assert y.value.shape == (1, 1, 8, 8)
    assert tape.nodes == []
    with pytest.raises(ValueError):
        tape.backward(y)


def test_cross_tape_operands_rejected():
    a = ad.Tape().leaf(np.ones((1, 1, 2, 2)))
    b = ad.Tape().leaf(np.ones((1, 1, 2, 2)))
    with pytest.raises(ValueError):
        ad.add(a, b)


def test_backward_requires_scalar_root():
    tape = ad.Tape()
    x = tape.leaf(np.ones((1, 1, 2, 2)))
    y = ad.add(x, x)
    with pytest.raises(ValueError):
        tape.backward(y)


def test_backward_root_must_belong_to_tape():
    tape1 = ad.Tape()
    tape2 = ad.Tape()
    x = tape1.leaf(np.ones((1, 1, 2, 2)))
    loss = ad.l1_loss(x, tape1.leaf(np.zeros((1, 1, 2, 2))))
    with pytest.raises(ValueError):
        tape2.backward(loss)


def test_scaled_sum_applies_coefficients():
    tape = ad.Tape()
    terms = [tape.leaf(np.float64(v)) for v in (2.0, 3.0, 5.0)]
    out = ad.scaled_sum(terms, [0.5, 2.0, -1.0])
    assert np.isclose(float(out.value), 1.0 + 6.0 - 5.0)
    tape.backward(out)
    assert [float(t.grad) for t in terms] == [0.5, 2.0, -1.0]
    with pytest.raises(ValueError):
        ad.scaled_sum(terms, [1.0])


def test_concat_backward_routes_segments():
    rng = np.random.default_rng(31)
    av, bv = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 4, 3, 3))
    tape = ad.Tape()
    a, b = tape.leaf(av), tape.leaf(bv)
    cat = ad.concat_channels([a, b])
    target = tape.leaf(np.zeros_like(cat.value))
    tape.backward(ad.mse_loss(cat, target))
    assert a.grad.shape == av.shape and b.grad.shape == bv.shape
    assert np.allclose(a.grad, 2.0 * av / cat.value.size)
    assert np.allclose(b.grad, 2.0 * bv / cat.value.size)


def test_chain_matches_finite_differences():
    rng = np.random.default_rng(32)
    xv = rng.standard_normal((1, 2, 6, 6))
    wv = rng.standard_normal((3, 2, 3, 3))
    av = rng.uniform(0.1, 0.4, 3)
    tv = rng.standard_normal((1, 3, 12, 12))

    def build(x_in, w_in, a_in):
        tape = ad.Tape()
        x, w, a = tape.leaf(x_in), tape.leaf(w_in), tape.leaf(a_in)
        y = ad.bilinear_upsample(ad.prelu(ad.conv2d(x, w, None, 1, 1), a), 2)
        return tape, (x, w, a), ad.mse_loss(y, tape.leaf(tv))

    tape, (x, w, a), loss = build(xv, wv, av)
    tape.backward(loss)
    for node, val, label in ((x, xv, "x"), (w, wv, "w"), (a, av, "alpha")):
        def f(v, label=label):
            parts = {"x": xv, "w": wv, "alpha": av}
            parts[label] = v
            return float(build(parts["x"], parts["w"], parts["alpha"])[2].value)
        assert rel_error(node.grad, finite_difference_gradient(f, val)) < 1e-3, label
