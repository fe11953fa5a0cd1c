import numpy as np

from ditreg import nn, pft
from ditreg import tensor as T


def setup(rng, n=12, m=9, width=16, **kw):
    x, y = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    fx, fy = T.Tensor(rng.normal(size=(n, width))), T.Tensor(rng.normal(size=(m, width)))
    p = pft.init_pft(rng, width=width, depth=2, heads=4, **kw)
    return x, y, fx, fy, p


def test_shapes(rng):
    x, y, fx, fy, p = setup(rng)
    a, b = pft.pft_forward(fx, fy, x, y, p)
    assert a.shape == (12, 16) and b.shape == (9, 16)


def test_joint_permutation_equivariance(rng):
    x, y, fx, fy, p = setup(rng)
    a, b = pft.pft_forward(fx, fy, x, y, p)
    perm = rng.permutation(len(x))
    a2, b2 = pft.pft_forward(T.Tensor(fx.data[perm]), fy, x[perm], y, p)
    np.testing.assert_allclose(a2.data, a.data[perm], atol=1e-10)
    np.testing.assert_allclose(b2.data, b.data, atol=1e-10)


def test_ablation_variants_change_parameters(rng):
    base = pft.init_pft(rng, 16, 2, 4)
    no_pos = pft.init_pft(rng, 16, 2, 4, positional=False)
    untied = pft.init_pft(rng, 16, 2, 4, tied=False)
    assert "pos" in base and "pos" not in no_pos
    assert "phi_y" in untied and "phi_y" not in base


def test_positional_encoding_changes_output(rng):
    x, y, fx, fy, _ = setup(rng)
    p = pft.init_pft(np.random.default_rng(0), 16, 2, 4)
    q = dict(p)
    del q["pos"]
    a, _ = pft.pft_forward(fx, fy, x, y, p)
    b, _ = pft.pft_forward(fx, fy, x, y, q)
    assert not np.allclose(a.data, b.data)


def test_deep_narrow_vs_shallow_wide_budget(rng):
    deep = nn.count_params(pft.init_interaction(rng, 64, 6, 4))
    wide = nn.count_params(pft.init_interaction(rng, 160, 1, 4))
    assert abs(wide - deep) / deep < 0.10


def test_gradient_check(rng):
    x, y, fx, fy, p = setup(rng, n=5, m=4, width=8)
    w1, w2 = T.Tensor(rng.normal(size=(5, 8))), T.Tensor(rng.normal(size=(4, 8)))

    def f(ps):
        a, b = pft.pft_forward(fx, fy, x, y, p)
        return T.add(T.sum(T.mul(a, w1)), T.sum(T.mul(b, w2)))

    assert T.grad_check(f, list(nn.flatten(p).values()), coords=3, rng=rng) < 1e-5
