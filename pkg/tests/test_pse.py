import numpy as np
import pytest

from ditreg import nn, pse
from ditreg import tensor as T
from ditreg.knn import knn_indices


def test_output_shape_and_layers(rng):
    cloud = rng.normal(size=(30, 3))
    for layers in (1, 3):
        p = pse.init_pse(rng, k=5, layers=layers, heads=4, out_width=32)
        assert pse.pse_forward(cloud, p, 5).shape == (30, 32)
    with pytest.raises(ValueError):
        pse.init_pse(rng, k=5, layers=5)


def test_lfi_inputs_layout(rng):
    feats = T.Tensor(rng.normal(size=(6, 2)))
    nbr = np.array([[1, 2], [0, 2], [0, 1], [4, 5], [3, 5], [3, 4]])
    out = pse.lfi_inputs(feats, nbr).data
    for i in range(6):
        np.testing.assert_array_equal(out[i], np.concatenate([feats.data[i], feats.data[nbr[i, 0]],
                                                              feats.data[nbr[i, 1]]]))


def test_permutation_equivariance(rng):
    cloud = rng.normal(size=(25, 3))
    p = pse.init_pse(rng, k=6, layers=2)
    perm = rng.permutation(25)
    a = pse.pse_forward(cloud, p, 6).data
    b = pse.pse_forward(cloud[perm], p, 6).data
    np.testing.assert_allclose(b, a[perm], atol=1e-10)


def test_precomputed_neighbors_give_same_result(rng):
    cloud = rng.normal(size=(20, 3))
    p = pse.init_pse(rng, k=4, layers=2)
    a = pse.pse_forward(cloud, p, 4).data
    b = pse.pse_forward(cloud, p, 4, neighbors=knn_indices(cloud, 4)).data
    assert np.array_equal(a, b)


def test_gradients_flow_to_all_parameters(rng):
    cloud = rng.normal(size=(12, 3))
    p = pse.init_pse(rng, k=3, layers=2, heads=2, out_width=8)
    T.backward(T.sum(T.square(pse.pse_forward(cloud, p, 3, heads=2))))
    for name, t in nn.flatten(p).items():
        assert t.grad is not None, name


def test_gradient_check(rng):
    cloud = rng.normal(size=(8, 3))
    p = pse.init_pse(rng, k=3, layers=2, heads=2, out_width=8)
    w = T.Tensor(rng.normal(size=(8, 8)))
    err = T.grad_check(lambda ps: T.sum(T.mul(pse.pse_forward(cloud, p, 3, heads=2), w)),
                       list(nn.flatten(p).values()), coords=3, rng=rng)
    assert err < 1e-5


def test_coordinate_embedding_shape(rng):
    p = pse.init_coordinate_embedding(rng, 16)
    assert pse.coordinate_embedding(rng.normal(size=(7, 3)), p).shape == (7, 16)
