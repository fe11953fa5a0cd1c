import numpy as np
import pytest

from ditreg import geometry as G
from ditreg import nn
from ditreg import pipeline as P
from ditreg.checkpoint import CheckpointError
from ditreg.config import PipelineConfig

SMALL = dict(layers=1, depth=1, k=6, d_model=32, sw_width=32, k_s=6)


@pytest.fixture
def small_cfg():
    return PipelineConfig(**SMALL)


def test_self_registration_is_identity(rng, small_cfg):
    cloud = G.sample_shape("torus", 64, rng)
    params = P.init_params(small_cfg, seed=3)
    res = P.register_pair(cloud, cloud, params, small_cfg)
    assert res.ok and res.weight_source == "gmcce"
    np.testing.assert_allclose(res.transform.matrix(), np.eye(4), atol=1e-6)
    assert np.array_equal(res.correspondence.target_index, np.arange(64))
    assert np.all(res.confidence == 1.0)


def test_ablation_flags_switch_documented_paths(rng, small_cfg):
    pair = G.make_pair(G.sample_shape("cube", 48, rng), "clean", rng)
    params = P.init_params(small_cfg)
    assert P.register_pair(pair.src, pair.tgt, params, small_cfg).weight_source == "gmcce"
    no_g = small_cfg.replace(no_gmcce=True)
    res = P.register_pair(pair.src, pair.tgt, params, no_g)
    assert res.weight_source == "similarity" and res.confidence is None
    assert "embed" in P.init_params(small_cfg.replace(no_pse=True))
    assert "pos" not in P.init_params(small_cfg.replace(no_pos_enc=True))["pft"]
    sw = P.init_params(PipelineConfig(**{**SMALL, "depth": 6, "sw_width": 64, "shallow_wide": True}))
    assert len(sw["pft"]["phi"]["enc"]) == 1 and sw["pft"]["se"]["fc2"]["w"].shape[1] == 64


def test_shallow_wide_budget_matches_default():
    deep = nn.count_params(P.init_params(PipelineConfig())["pft"])
    wide = nn.count_params(P.init_params(PipelineConfig(shallow_wide=True))["pft"])
    assert abs(wide - deep) / deep < 0.10


def test_degenerate_input_gives_structured_failure(small_cfg):
    line = np.outer(np.linspace(0, 1, 20), [1.0, 0.5, 0.2])
    res = P.register_pair(line, line, P.init_params(small_cfg), small_cfg)
    assert not res.ok and res.message
    assert np.array_equal(res.transform.matrix(), np.eye(4))


def test_lr_zero_leaves_parameters_unchanged(rng, small_cfg):
    pairs = [G.make_pair(G.sample_shape("sphere", 32, rng), "clean", rng) for _ in range(2)]
    cfg = small_cfg.replace(lr=0.0, epochs=1)
    params = P.init_params(cfg)
    before = {k: v.data.copy() for k, v in P.flat_params(params).items()}
    P.train(cfg, pairs, params=params, log_fn=lambda m: None)
    for k, v in P.flat_params(params).items():
        assert np.array_equal(v.data, before[k]), k


def test_overfit_one_pair_loss_keeps_falling(rng, small_cfg):
    pair = G.make_pair(G.sample_shape("cube", 32, rng), "clean", rng)
    cfg = small_cfg.replace(lr=1e-3, epochs=200)
    params, history = P.train(cfg, [pair], log_fn=lambda m: None)
    loss = np.array([h["loss"] for h in history])
    assert np.all(loss[50:] < loss[:-50])
    report, _ = P.evaluate_pairs([pair], params, cfg)
    assert report.success_ratio == 1.0


def test_training_is_deterministic(rng, small_cfg):
    pairs = [G.make_pair(G.sample_shape("cube", 32, rng), "clean", rng) for _ in range(3)]
    cfg = small_cfg.replace(epochs=2)
    a, ha = P.train(cfg, pairs, log_fn=lambda m: None)
    b, hb = P.train(cfg, pairs, log_fn=lambda m: None)
    assert ha == hb
    for (k, x), y in zip(P.flat_params(a).items(), P.flat_params(b).values()):
        assert np.array_equal(x.data, y.data), k


def test_pair_loss_parts(rng, small_cfg):
    pair = G.make_pair(G.sample_shape("sphere", 32, rng), "partial_high", rng)
    loss, parts = P.pair_loss(P.init_params(small_cfg), small_cfg, pair)
    assert set(parts) >= {"l_t", "l_c", "l_d"}
    expected = parts["l_t"] + small_cfg.alpha * parts["l_c"] + small_cfg.beta * parts["l_d"]
    assert loss.item() == pytest.approx(expected)


def test_non_finite_loss_aborts_with_checkpoint(tmp_path, rng, small_cfg):
    pair = G.make_pair(G.sample_shape("sphere", 32, rng), "clean", rng)
    params = P.init_params(small_cfg)
    first = next(iter(P.flat_params(params).values()))
    first.data[...] = np.nan
    with pytest.raises(P.TrainingAborted):
        P.train(small_cfg, [pair], checkpoint_dir=tmp_path / "ck", params=params, log_fn=lambda m: None)
    assert (tmp_path / "ck" / "params.bin").exists()


def test_checkpoint_roundtrip_and_mismatch(tmp_path, rng, small_cfg):
    params = P.init_params(small_cfg, seed=11)
    P.save_checkpoint(tmp_path, params, small_cfg)
    loaded, cfg = P.load_checkpoint(tmp_path)
    assert cfg == small_cfg
    for x, y in zip(P.flat_params(params).values(), P.flat_params(loaded).values()):
        assert np.array_equal(x.data, y.data)
    with pytest.raises(CheckpointError):
        P.load_checkpoint(tmp_path, {"d_model": 64})


def test_oracle_evaluation_and_csv(rng):
    pairs = [G.make_pair(G.sample_shape("cube", 16, rng), "clean", rng) for _ in range(5)]
    report, results = P.evaluate_pairs(pairs, None, PipelineConfig(), method="oracle")
    assert report.success_ratio == 1.0
    csv = P.results_csv([f"p{i}" for i in range(5)], results).splitlines()
    assert csv[0] == P.CSV_HEADER and len(csv) == 6
    ratios = [float(line.split()[2]) for line in P.curve_text(results).splitlines()]
    assert ratios == [1.0] * 64


def test_icp_evaluation_is_finite_and_curve_monotone(rng):
    pairs = []
    for _ in range(5):
        cloud = G.sample_shape("cube", 64, rng)
        pairs.append(G.make_pair(cloud, "partial_low", rng, rot_max_deg=10, trans_max=0.1))
    _, results = P.evaluate_pairs(pairs, None, PipelineConfig(), method="icp")
    errs = np.array([r.rotation_error for r in results])
    assert np.all(np.isfinite(errs)) and np.any(errs > 0)
    ratios = [float(line.split()[2]) for line in P.curve_text(results).splitlines()]
    assert all(b >= a for a, b in zip(ratios, ratios[1:]))
