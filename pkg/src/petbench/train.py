"""Pair sampling, the outlier-rejecting Smooth-L1 loss, Adam, training.

The differential model trains on same-subject frame pairs with target
``g_query - g_reference``; the absolute model trains on single frames
with the same loss applied to absolute gaze, so the two differ only in
what they regress. Per component of the 4-vector error e the loss is

    0.5 e^2 / beta        if |e| < beta
    |e| - 0.5 beta        if beta <= |e| < tau
    k (|e| - 0.5 beta)    if |e| >= tau

reduced by mean over the 4 components, then over the batch. With the
published parameter choice beta = tau the middle branch is empty and
the function is discontinuous at |e| = tau; this is intentional and the
pinned values test the printed form. Boundary points belong to the
later branch.

Epochs resample pairs; every stream of randomness is keyed by
(seed, epoch, subject, tag) so runs are reproducible end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import evaluation, personalize
from .dataio import DatasetManifest, SampleLoader, Split, load_manifest
from .errors import ConfigError, DataError
from .net import (
    KINDS,
    NetModel,
    ParamSet,
    backward,
    baseline_forward_batch,
    init_params,
    siamese_forward_batch,
)
from .polarization import Modality

_TAG_POOL = 0
_TAG_SHUFFLE = 1
_TAG_ANCHOR = 2


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))


@dataclass(frozen=True)
class LossParams:
    beta: float = 0.1
    tau: float = 0.1
    k: float = 0.1

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if not self.tau >= self.beta:
            raise ConfigError("tau must be >= beta")
        if not 0 < self.k <= 1:
            raise ConfigError("k must lie in (0, 1]")


def _eq1_terms(e, lp: LossParams):
    a = np.abs(e)
    quad = 0.5 * e * e / lp.beta
    lin = a - 0.5 * lp.beta
    loss = np.where(a < lp.beta, quad, np.where(a < lp.tau, lin, lp.k * lin))
    grad = np.where(
        a < lp.beta, e / lp.beta, np.where(a < lp.tau, np.sign(e), lp.k * np.sign(e))
    )
    return loss, grad


def loss_eq1(pred, target, lp: LossParams):
    """Loss and gradient wrt pred for one 4-vector prediction."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    loss, grad = _eq1_terms(pred - target, lp)
    return float(loss.mean()), grad / loss.size


def loss_eq1_batch(pred, target, lp: LossParams):
    """Mean loss over a (N, 4) batch and its gradient wrt pred."""
    loss, grad = _eq1_terms(pred - target, lp)
    return float(loss.mean()), grad / loss.size


@dataclass(frozen=True)
class PairSample:
    query: object
    reference: object
    target: np.ndarray


def _make_pairs(frames, q_idx, r_idx):
    return [
        PairSample(frames[q], frames[r], frames[q].label - frames[r].label)
        for q, r in zip(q_idx, r_idx)
    ]


def sample_random_pairs(subject_frames, n, rng):
    """n ordered pairs of distinct frames, uniform over the subject."""
    m = len(subject_frames)
    if m < 2:
        raise DataError("need at least 2 frames to form pairs")
    q = rng.integers(0, m, size=n)
    r = rng.integers(0, m - 1, size=n)
    r = r + (r >= q)
    return _make_pairs(subject_frames, q, r)


def sample_calibration_pairs(subject_frames, anchor_ids, n, rng):
    """Pairs whose reference is always one of the fixed anchors."""
    if len(anchor_ids) == 0:
        raise DataError("anchor set is empty")
    m = len(subject_frames)
    anchor_ids = np.asarray(anchor_ids, dtype=np.int64)
    if anchor_ids.min() < 0 or anchor_ids.max() >= m:
        raise DataError("anchor ids out of range")
    q = rng.integers(0, m, size=n)
    r = anchor_ids[rng.integers(0, len(anchor_ids), size=n)]
    return _make_pairs(subject_frames, q, r)


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    t: int


def init_adam_state(params: ParamSet) -> AdamState:
    zeros = tuple(np.zeros_like(a) for a in params.arrays())
    return AdamState(m=zeros, v=tuple(np.zeros_like(a) for a in params.arrays()), t=0)


def adam_step(
    params: ParamSet,
    grads: ParamSet,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple:
    """One bias-corrected adaptive moment update; returns (params, state)."""
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_p.append(p - step)
        new_m.append(m)
        new_v.append(v)
    return params.with_arrays(new_p), AdamState(tuple(new_m), tuple(new_v), t)


@dataclass(frozen=True)
class TrainConfig:
    kind: str
    modality: Modality
    sampling: str = "random"
    steps: int = 3000
    batch_size: int = 32
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossParams = field(default_factory=LossParams)
    pairs_per_epoch: Optional[int] = None
    eval_interval: int = 200
    eval_frames: int = 200
    eval_anchors: int = 3
    anchors_per_subject: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.modality, Modality):
            raise ConfigError(f"modality must be a Modality, got {self.modality!r}")
        if self.sampling not in ("random", "calibration"):
            raise ConfigError(f"sampling must be random or calibration, got {self.sampling!r}")
        for name in ("steps", "batch_size", "eval_interval", "eval_frames", "eval_anchors", "anchors_per_subject"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < self.batch_size:
            raise ConfigError("pairs_per_epoch must be at least batch_size")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")


def _allocate(total, ids):
    base, rem = divmod(total, len(ids))
    return {sid: base + (1 if i < rem else 0) for i, sid in enumerate(ids)}


def _epoch_pool_siamese(cfg, pools, anchor_ids, alloc, epoch):
    pairs = []
    for sid in sorted(pools):
        n = alloc[sid]
        if n == 0:
            continue
        rng = _rng(cfg.seed, epoch, sid, _TAG_POOL)
        if cfg.sampling == "random":
            pairs.extend(sample_random_pairs(pools[sid], n, rng))
        else:
            pairs.extend(sample_calibration_pairs(pools[sid], anchor_ids[sid], n, rng))
    return pairs


def _epoch_pool_baseline(cfg, pools, alloc, epoch):
    samples = []
    for sid in sorted(pools):
        n = alloc[sid]
        if n == 0:
            continue
        rng = _rng(cfg.seed, epoch, sid, _TAG_POOL)
        idx = rng.integers(0, len(pools[sid]), size=n)
        samples.extend(pools[sid][i] for i in idx)
    return samples


def _probe_errors(model, loader, cfg, test_ids):
    per_subject = max(1, math.ceil(cfg.eval_frames / len(test_ids)))
    opts = evaluation.EvalOptions(
        kind=model.kind,
        modality=model.modality,
        anchors=cfg.eval_anchors if model.kind == "siamese" else None,
        linear_calib=False,
        seed=cfg.seed,
    )
    records = evaluation.collect_errors(
        model, loader, test_ids, opts, max_frames_per_subject=per_subject
    )
    errs = [r.error for r in records]
    return (
        evaluation.percentile(errs, 50.0),
        evaluation.percentile(errs, 95.0),
    )


def train(config: TrainConfig, dataset, split: Split):
    """Run the fixed-budget loop; returns (NetModel, log line dicts)."""
    manifest = dataset if isinstance(dataset, DatasetManifest) else load_manifest(dataset)
    known = set(manifest.subject_ids())
    for sid in tuple(split.train_ids) + tuple(split.test_ids):
        if sid not in known:
            raise ConfigError(f"split references unknown subject {sid}")

    image_size = int(manifest.config.get("image_size", 32))
    loader = SampleLoader(manifest, config.modality)
    params = init_params(config.seed, config.modality.channels, image_size)
    state = init_adam_state(params)

    train_ids = sorted(split.train_ids)
    pools = {}
    anchor_ids = {}
    for sid in train_ids:
        frames = loader.samples(sid, "main")
        if config.kind == "siamese" and config.sampling == "calibration":
            key = f"S{sid:04d}"
            if "calib" not in manifest.subjects[key]["sessions"]:
                raise ConfigError(f"calibration sampling needs a calib session (subject {sid})")
            calib = loader.samples(sid, "calib")
            rng = _rng(config.seed, sid, _TAG_ANCHOR)
            chosen = rng.permutation(len(calib))[: config.anchors_per_subject]
            anchor_ids[sid] = np.sort(chosen) + len(frames)
            frames = frames + calib
        pools[sid] = frames

    frames_per_subject = int(manifest.config.get("frames_per_subject", len(pools[train_ids[0]])))
    pairs_per_epoch = config.pairs_per_epoch or 20 * frames_per_subject
    alloc = _allocate(pairs_per_epoch, train_ids)

    log = []
    loss_window = []
    step = 0
    epoch = 0
    while step < config.steps:
        if config.kind == "siamese":
            pool = _epoch_pool_siamese(config, pools, anchor_ids, alloc, epoch)
        else:
            pool = _epoch_pool_baseline(config, pools, alloc, epoch)
        order = _rng(config.seed, epoch, _TAG_SHUFFLE).permutation(len(pool))
        n_batches = len(pool) // config.batch_size
        for b in range(n_batches):
            take = order[b * config.batch_size : (b + 1) * config.batch_size]
            if config.kind == "siamese":
                batch = [pool[i] for i in take]
                ql = np.stack([p.query.left for p in batch])
                qr = np.stack([p.query.right for p in batch])
                rl = np.stack([p.reference.left for p in batch])
                rr = np.stack([p.reference.right for p in batch])
                targets = np.stack([p.target for p in batch])
                pred, cache = siamese_forward_batch(params, ql, qr, rl, rr)
            else:
                batch = [pool[i] for i in take]
                xl = np.stack([s.left for s in batch])
                xr = np.stack([s.right for s in batch])
                targets = np.stack([s.label for s in batch])
                pred, cache = baseline_forward_batch(params, xl, xr)
            loss, dpred = loss_eq1_batch(pred, targets, config.loss)
            grads = backward(params, cache, dpred)
            params, state = adam_step(
                params, grads, state, config.lr, config.beta1, config.beta2, config.eps
            )
            loss_window.append(loss)
            step += 1
            if step % config.eval_interval == 0 or step == config.steps:
                model = NetModel(params, config.kind, config.modality)
                p50, p95 = _probe_errors(model, loader, config, sorted(split.test_ids))
                log.append(
                    {
                        "step": step,
                        "loss": float(np.mean(loss_window)),
                        "eval_p50": p50,
                        "eval_p95": p95,
                    }
                )
                loss_window = []
            if step >= config.steps:
                break
        epoch += 1
    return NetModel(params, config.kind, config.modality), log
