import numpy as np
import pytest

from ditreg import geometry as G
from ditreg import metrics as M


def test_rotation_error_zero_for_identical(rng):
    t = G.random_transform(45, 0.5, rng)
    assert np.all(M.rotation_error_deg(t, t) == 0)
    assert np.all(M.translation_error(t, t) == 0)


def test_rotation_error_wraps(rng):
    a = G.RigidTransform(G.euler_to_matrix([179.0, 0, 0]), np.zeros(3))
    b = G.RigidTransform(G.euler_to_matrix([-179.0, 0, 0]), np.zeros(3))
    np.testing.assert_allclose(M.rotation_error_deg(a, b), [2.0, 0, 0], atol=1e-9)


def test_errors_non_negative(rng):
    for _ in range(50):
        a, b = G.random_transform(45, 0.5, rng), G.random_transform(45, 0.5, rng)
        assert np.all(M.rotation_error_deg(a, b) >= 0)


def test_aggregate_by_hand():
    rot = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
    tr = np.array([[0.0, 0.0, 0.02], [0.001, 0.0, 0.0]])
    rep = M.aggregate_metrics(rot, tr)
    assert rep.r_rmse == pytest.approx(np.sqrt(1.25 / 6))
    assert rep.r_mae == pytest.approx(1.5 / 6)
    assert rep.t_mae == pytest.approx(0.021 / 6)
    assert rep.success_ratio == 0.5  # first pair fails: 1.0 is not < 1.0


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        M.aggregate_metrics(np.zeros((0, 3)), np.zeros((0, 3)))


def test_curve_is_monotone_and_complete_for_perfect_results():
    zeros = np.zeros((10, 3))
    r, t, ratio = M.success_curve(zeros, zeros)
    assert len(r) == len(t) == len(ratio) == 64
    assert np.all(ratio == 1.0)
    rng = np.random.default_rng(3)
    _, _, ratio = M.success_curve(rng.exponential(size=(30, 3)), rng.exponential(0.01, size=(30, 3)))
    assert np.all(np.diff(ratio) >= 0)


def test_row_format():
    rep = M.MetricsReport(1.0, 2.0, 3.0, 4.0, 0.5)
    row = rep.row("DIT")
    assert row.startswith("DIT") and "SR=0.5000" in row
