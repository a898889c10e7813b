"""Analytic gradients against central finite differences (64-bit)."""

import numpy as np
import pytest

from oracles import central_difference, rel_err
from zskws import autodiff as ad
from zskws.alignment import ctc_loss
from zskws.encoders import ModelConfig
from zskws.losses import bce, fa_loss, pcl_loss, smooth_counts, ucl_loss
from zskws.model import Batch, init_params, loss_and_grads

H = 1e-5
TOL = 1e-4


def check(analytic, f, x, floor=1e-7):
    num = central_difference(f, x, H)
    assert np.max(rel_err(analytic, num, floor)) < TOL, (analytic, num)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_bce_grad():
    p, y = rng().uniform(0.05, 0.95, 7), rng(1).integers(0, 2, 7)
    check(bce(p, y, grad=True)[1], lambda x: bce(x, y), p)


def test_pcl_grad():
    s, m = rng().uniform(0, 1, 6), rng(1).integers(0, 2, 6)
    check(pcl_loss(s, m, grad=True)[1], lambda x: pcl_loss(x, m), s)


def test_ucl_grad_both_directions():
    s_a, s_t = rng().normal(size=(5, 5)) * 3, rng(1).normal(size=(5, 5)) * 3
    m = (rng(2).uniform(size=(5, 5)) < 0.3).astype(float)
    _, (g_a, g_t) = ucl_loss(s_a, m, s_t, grad=True)
    check(g_a, lambda x: ucl_loss(x, m, s_t), s_a)
    check(g_t, lambda x: ucl_loss(s_a, m, x), s_t)
    # shared matrix: the two directions add through the transpose
    _, (g_a, g_t) = ucl_loss(s_a, m, grad=True)
    check(g_a + g_t.T, lambda x: ucl_loss(x, m), s_a)


def test_smooth_counts_grad():
    x, t = rng().uniform(0, 1, 8), rng(1).integers(0, 2, 8)
    _, _, d_tp, d_fp = smooth_counts(x, t, grad=True)
    check(d_tp, lambda v: smooth_counts(v, t)[0], x)
    check(d_fp, lambda v: smooth_counts(v, t)[1], x)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fa_grad_hinge_active(seed):
    x, t = rng(seed).uniform(0, 1, 10), np.array([1, 0] * 5)
    check(fa_loss(x, t, grad=True)[1], lambda v: fa_loss(v, t), x)


def test_fa_grad_hinge_inactive():
    x = np.array([0.99, 0.98, 0.97, 0.96, 0.95, 0.94, 0.93, 0.92, 0.1])
    t = np.array([1, 1, 1, 1, 1, 1, 1, 1, 0])
    value, g = fa_loss(x, t, grad=True)
    assert value < -np.log(0.9)  # precision above alpha
    check(g, lambda v: fa_loss(v, t), x)


def test_ctc_grad():
    z = rng(3).normal(size=(7, 6))
    y = [1, 3, 3, 0]
    check(ctc_loss(z, y, blank=5)[1], lambda v: ctc_loss(v, y, blank=5)[0], z)


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: ad.tsum(ad.mul(ad.sigmoid(a), ad.tanh(b))),
        lambda a, b: ad.tsum(ad.mul(ad.softmax(ad.matmul(a, ad.transpose(b)), axis=-1), np.arange(9.0).reshape(3, 3))),
        lambda a, b: ad.tsum(ad.mul(ad.relu(ad.concat([a, b], axis=0)), ad.concat([a, b], axis=0))),
        lambda a, b: ad.tsum(ad.mul(ad.stack([a, b])[1, :, ::2], ad.getitem(a, (slice(None), slice(0, None, 2))))),
    ],
)
def test_autodiff_ops(op):
    a0, b0 = rng(4).normal(size=(3, 4)), rng(5).normal(size=(3, 4))
    a, b = ad.Tensor(a0, requires_grad=True), ad.Tensor(b0, requires_grad=True)
    op(a, b).backward()
    check(a.grad, lambda x: op(ad.Tensor(x), ad.Tensor(b0)).data, a0)
    check(b.grad, lambda x: op(ad.Tensor(a0), ad.Tensor(x)).data, b0)


def test_conv1d_and_take_rows():
    x0, w0, b0 = rng(6).normal(size=(2, 11, 3)), rng(7).normal(size=(4, 3, 5)), rng(8).normal(size=5)
    weights = rng(9).normal(size=(2, 3, 5))

    def f(x, w, b):
        return ad.tsum(ad.mul(ad.conv1d(x, w, b, stride=3), weights))

    x, w, b = (ad.Tensor(v, requires_grad=True) for v in (x0, w0, b0))
    f(x, w, b).backward()
    check(x.grad, lambda v: f(ad.Tensor(v), w0, b0).data, x0)
    check(w.grad, lambda v: f(x0, ad.Tensor(v), b0).data, w0)
    check(b.grad, lambda v: f(x0, w0, ad.Tensor(v)).data, b0)

    table0 = rng(10).normal(size=(6, 4))
    ids = np.array([[1, 1, 5], [0, 2, 1]])
    table = ad.Tensor(table0, requires_grad=True)
    g = lambda t: ad.tsum(ad.mul(ad.take_rows(t, ids), rng(11).normal(size=(2, 3, 4))))
    g(table).backward()
    check(table.grad, lambda v: g(ad.Tensor(v)).data, table0)


def micro_batch():
    """Two matched utterances of 102 mel frames (4 embedding frames each)."""
    r = rng(12)
    mel = r.normal(size=(2, 102, 40))
    ids = np.array([[4, 9, 9], [17, 2, 0]])
    return Batch(mel, ids, np.array([3, 2]), np.array([1.0, 1.0]))


def micro_batch_mixed():
    r = rng(13)
    mel = r.normal(size=(2, 102, 40))
    ids = np.array([[4, 9], [17, 2]])
    return Batch(mel, ids, np.array([2, 2]), np.array([1.0, 0.0]))


def sampled_entries(params, n, seed):
    r = np.random.default_rng(seed)
    names = sorted(params)
    sizes = np.array([params[k].size for k in names], dtype=float)
    # half uniform over tensors (covers small ones), half proportional to size
    picks = []
    for i in range(n):
        k = names[r.integers(len(names))] if i % 2 else names[r.choice(len(names), p=sizes / sizes.sum())]
        picks.append((k, tuple(int(r.integers(d)) for d in params[k].shape)))
    return picks


@pytest.mark.parametrize("batch_fn,ucl", [(micro_batch, 2), (micro_batch_mixed, 1)])
def test_full_model_gradient(batch_fn, ucl):
    cfg = ModelConfig()
    params = init_params(cfg, seed=1)
    batch = batch_fn()
    report, grads = loss_and_grads(params, batch, cfg, ucl_size=ucl)
    assert all(v > 0 for k, v in report.terms().items() if k != "l_ucl" or ucl == 2)
    errors = []
    for name, idx in sampled_entries(params, 24, seed=ucl):
        p = {k: v.copy() for k, v in params.items()}
        p[name][idx] += H
        up = loss_and_grads(p, batch, cfg, ucl_size=ucl)[0].l_total
        p[name][idx] -= 2 * H
        down = loss_and_grads(p, batch, cfg, ucl_size=ucl)[0].l_total
        num = (up - down) / (2 * H)
        errors.append((name, idx, grads[name][idx], num, float(rel_err(grads[name][idx], num, 1e-7))))
    worst = max(errors, key=lambda e: e[-1])
    assert worst[-1] < 1e-3, worst
