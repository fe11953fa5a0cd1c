"""End-to-end registration: model assembly, inference, training and evaluation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gmcce, nn, pft, pse
from . import tensor as T
from .checkpoint import CONFIG, load_params, save_params
from .config import PipelineConfig, load_config
from .geometry import PairSample, RigidTransform, as_cloud, list_pairs, load_pair
from .knn import knn_indices
from .losses import (LossWeights, NonFiniteLoss, cycle_loss, discrimination_loss, inlier_labels,
                     total_loss, transformation_loss)
from .matching import (CorrespondenceSet, DegenerateConfiguration, correspondences, normalize_rows,
                       similarity, weighted_procrustes, weighted_procrustes_tensor)
from .metrics import aggregate_metrics, rotation_error_deg, success_curve, translation_error
from .optim import Adam, NonFiniteGradient

log = logging.getLogger(__name__)


# ------------------------------------------------------------ model

def init_params(cfg: PipelineConfig, seed: int | None = None) -> dict:
    """Nested parameter dict for the configured network."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    width = cfg.pft_width
    params = {}
    if cfg.no_pse:
        params["embed"] = pse.init_coordinate_embedding(rng, width)
    else:
        params["pse"] = pse.init_pse(rng, cfg.k, cfg.layers, cfg.heads, width)
    params["pft"] = pft.init_pft(rng, width, cfg.pft_depth, cfg.heads, cfg.se_reduction,
                                 positional=not cfg.no_pos_enc, tied=cfg.tied_phi)
    return params


def flat_params(params) -> dict:
    return nn.flatten(params)


def extract_features(params, cfg: PipelineConfig, x, y, nbr_x=None, nbr_y=None):
    """Per-point features ``(Phi_X, Phi_Y)`` for a pair of clouds."""
    if cfg.no_pse:
        fx = pse.coordinate_embedding(x, params["embed"])
        fy = pse.coordinate_embedding(y, params["embed"])
    else:
        for cloud in (x, y):
            if len(cloud) <= cfg.k:
                raise ValueError(f"cloud of {len(cloud)} points is too small for k={cfg.k}")
        fx = pse.pse_forward(x, params["pse"], cfg.k, cfg.heads, nbr_x, cfg.residual_outside_ln)
        fy = pse.pse_forward(y, params["pse"], cfg.k, cfg.heads, nbr_y, cfg.residual_outside_ln)
    phi_x, phi_y = pft.pft_forward(fx, fy, x, y, params["pft"], cfg.heads, cfg.residual_outside_ln)
    if cfg.normalize_features:
        phi_x, phi_y = normalize_rows(phi_x), normalize_rows(phi_y)
    return phi_x, phi_y


# ------------------------------------------------------------ inference

@dataclass
class RegistrationResult:
    transform: RigidTransform
    ok: bool = True
    message: str = ""
    time_ms: float = 0.0
    correspondence: CorrespondenceSet | None = None
    confidence: np.ndarray | None = None
    weight_source: str = ""
    rotation_error: np.ndarray | None = None
    translation_error: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def score(self, gt: RigidTransform) -> RegistrationResult:
        self.rotation_error = rotation_error_deg(self.transform, gt)
        self.translation_error = translation_error(self.transform, gt)
        return self


def register_pair(src, tgt, params, cfg: PipelineConfig) -> RegistrationResult:
    """One forward pass: features -> similarity -> matches -> weights -> Procrustes.

    With GMCCE enabled the Procrustes weights are the filtered confidences;
    if filtering leaves a degenerate set the similarity weights are used
    instead. A degenerate final estimate comes back as ``ok=False`` with the
    identity transform.
    """
    start = time.perf_counter()
    x = as_cloud(src, 3)
    y = as_cloud(tgt, 3)
    with T.no_grad():
        phi_x, phi_y = extract_features(params, cfg, x, y)
        s = similarity(phi_x, phi_y, cfg.temperature)
    corr = correspondences(s)
    attempts = []
    conf = None
    if not cfg.no_gmcce and len(x) > cfg.k_s:
        cv = gmcce.evaluate_confidence(x, y, corr, cfg.k_s, cfg.mink_k, cfg.lam, cfg.tau)
        conf = cv.confidence
        attempts.append(("gmcce", cv.weights()))
    attempts.append(("similarity", corr.weight))
    result = None
    for source, weight in attempts:
        try:
            est = weighted_procrustes(x, y, corr.with_weight(weight))
        except DegenerateConfiguration as exc:
            result = RegistrationResult(RigidTransform.identity(), ok=False, message=str(exc),
                                        correspondence=corr, confidence=conf, weight_source=source)
            continue
        result = RegistrationResult(est, correspondence=corr, confidence=conf, weight_source=source)
        break
    result.time_ms = (time.perf_counter() - start) * 1e3
    return result


# ------------------------------------------------------------ training

def pair_loss(params, cfg: PipelineConfig, pair: PairSample, nbr_x=None, nbr_y=None):
    """Training objective for one pair, both matching directions.

    Returns ``(loss Tensor, parts dict)``.
    """
    x, y, gt = pair.src, pair.tgt, pair.ground_truth
    phi_x, phi_y = extract_features(params, cfg, x, y, nbr_x, nbr_y)
    s_xy = similarity(phi_x, phi_y, cfg.temperature)
    s_yx = similarity(phi_y, phi_x, cfg.temperature)
    if not (np.all(np.isfinite(s_xy.data)) and np.all(np.isfinite(s_yx.data))):
        raise NonFiniteLoss("similarity matrix is not finite")
    m_xy = np.argmax(s_xy.data, axis=1)
    m_yx = np.argmax(s_yx.data, axis=1)
    w_xy = T.take(s_xy, np.arange(len(x)), m_xy)
    w_yx = T.take(s_yx, np.arange(len(y)), m_yx)
    r_xy, t_xy = weighted_procrustes_tensor(x, y[m_xy], w_xy)
    r_yx, t_yx = weighted_procrustes_tensor(y, x[m_yx], w_yx)
    l_t = transformation_loss(r_xy, t_xy, gt, cfg.literal_losses)
    l_c = cycle_loss(r_xy, t_xy, r_yx, t_yx, cfg.literal_losses)
    y_ref = pair.tgt_clean if pair.tgt_clean is not None else y
    labels = inlier_labels(x, y_ref, m_xy, gt, cfg.r_inlier)
    l_d = discrimination_loss(s_xy, m_xy, labels)
    loss = total_loss(l_t, l_c, l_d, LossWeights(cfg.alpha, cfg.beta))
    parts = {"loss": loss.item(), "l_t": l_t.item(), "l_c": l_c.item(), "l_d": l_d.item(),
             "inlier_ratio": float(labels.mean())}
    return loss, parts


class TrainingAborted(RuntimeError):
    pass


def train(cfg: PipelineConfig, pairs, checkpoint_dir=None, val_pairs=None, params=None,
          log_fn=None, max_steps: int | None = None):
    """Adam over the pair list, one pair per step, shuffled each epoch.

    Returns ``(params, history)`` where history holds per-epoch mean losses
    and, when ``val_pairs`` is given, validation metrics. On a non-finite
    loss or gradient the last good parameters are written (if a checkpoint
    directory is given) and :class:`TrainingAborted` is raised.
    """
    log_fn = log_fn or log.info
    pairs = list(pairs)
    params = init_params(cfg) if params is None else params
    flat = flat_params(params)
    opt = Adam(flat, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    neighbors = {}
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for i in order:
            pair = pairs[i]
            if not cfg.no_pse and i not in neighbors:
                neighbors[i] = (knn_indices(pair.src, cfg.k), knn_indices(pair.tgt, cfg.k))
            nbr_x, nbr_y = neighbors.get(i, (None, None))
            opt.zero_grad()
            try:
                loss, parts = pair_loss(params, cfg, pair, nbr_x, nbr_y)
                T.backward(loss)
                opt.step()
            except (NonFiniteLoss, NonFiniteGradient) as exc:
                if checkpoint_dir is not None:
                    save_checkpoint(checkpoint_dir, params, cfg)
                raise TrainingAborted(f"epoch {epoch} step {step}: {exc}") from exc
            losses.append(parts["loss"])
            step += 1
            if max_steps is not None and step >= max_steps:
                break
        record = {"epoch": epoch, "loss": float(np.mean(losses)) if losses else float("nan")}
        if val_pairs:
            rep, _ = evaluate_pairs(val_pairs, params, cfg)
            record.update(val_r_mae=rep.r_mae, val_t_mae=rep.t_mae, val_success=rep.success_ratio)
        history.append(record)
        log_fn(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in record.items()))
        if max_steps is not None and step >= max_steps:
            break
    if checkpoint_dir is not None:
        save_checkpoint(checkpoint_dir, params, cfg)
    return params, history


def save_checkpoint(directory, params, cfg: PipelineConfig):
    save_params(directory, flat_params(params))
    (Path(directory) / CONFIG).write_text(cfg.to_text())


def unflatten_into(params, flat: dict):
    target = flat_params(params)
    for name, t in target.items():
        t.data = flat[name].data.copy()
    return params


def load_checkpoint(directory, overrides: dict | None = None):
    """Rebuild the model described by ``config.txt`` and load its weights.

    ``overrides`` may change inference-only knobs (GMCCE, temperature); a
    change that alters parameter shapes fails the shape check.
    """
    cfg = load_config(Path(directory) / CONFIG, overrides)
    params = init_params(cfg)
    flat = load_params(directory, expected=flat_params(params))
    return unflatten_into(params, flat), cfg


# ------------------------------------------------------------ evaluation

def load_dataset(directory) -> tuple[list[str], list[PairSample]]:
    dirs = list_pairs(directory)
    return [d.name for d in dirs], [load_pair(d) for d in dirs]


def evaluate_pairs(pairs, params, cfg: PipelineConfig, method: str = "dit", icp_iters: int = 50,
                   r_thres: float = 1.0, t_thres: float = 0.01):
    """Register every pair; returns ``(MetricsReport, [RegistrationResult])``."""
    from .matching import icp

    results = []
    for pair in pairs:
        if method == "icp":
            start = time.perf_counter()
            est = icp(pair.src, pair.tgt, max_iters=icp_iters)
            res = RegistrationResult(est, time_ms=(time.perf_counter() - start) * 1e3, weight_source="icp")
        elif method == "oracle":
            res = RegistrationResult(pair.ground_truth, weight_source="oracle")
        else:
            res = register_pair(pair.src, pair.tgt, params, cfg)
        results.append(res.score(pair.ground_truth))
    report = aggregate_metrics([r.rotation_error for r in results], [r.translation_error for r in results],
                               r_thres, t_thres)
    return report, results


CSV_HEADER = "pair_id,r_err_x,r_err_y,r_err_z,t_err,time_ms,success_1_001"


def results_csv(ids, results, record_time: bool = True) -> str:
    rows = [CSV_HEADER]
    for pid, res in sorted(zip(ids, results), key=lambda item: item[0]):
        rx, ry, rz = res.rotation_error
        t_err = float(np.linalg.norm(res.translation_error))
        success = int(max(rx, ry, rz) < 1.0 and t_err < 0.01)
        time_ms = res.time_ms if record_time else 0.0
        rows.append(f"{pid},{rx:.17g},{ry:.17g},{rz:.17g},{t_err:.17g},{time_ms:.3f},{success}")
    return "\n".join(rows) + "\n"


def curve_text(results) -> str:
    r, t, ratio = success_curve([x.rotation_error for x in results], [x.translation_error for x in results])
    return "".join(f"{a:.17g} {b:.17g} {c:.17g}\n" for a, b, c in zip(r, t, ratio))


def write_evaluation(out_dir, ids, results, report, name: str = "DIT", record_time: bool = True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pairs.csv").write_text(results_csv(ids, results, record_time))
    (out / "curve.txt").write_text(curve_text(results))
    (out / "metrics.txt").write_text(report.row(name) + "\n")
