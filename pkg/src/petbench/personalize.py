"""Anchor-set selection, displacement aggregation, L1 linear calibration.

Few-shot personalization happens at inference time: a small set of
labeled anchor frames from the subject's calibration session turns the
differential model's displacement outputs into absolute gaze,

    g_hat = (1/C) * sum_c (delta_g_c + g_c),

and an optional per-axis affine correction g = theta0 + mu * g_hat is
fit on the calibration sequence by exact L1 minimization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .net import ParamSet, forward_siamese

AXIS_NAMES = ("yaw_left", "pitch_left", "yaw_right", "pitch_right")


@dataclass(frozen=True)
class AnchorSet:
    """C labeled reference frames drawn from one subject's calib pool."""

    samples: tuple
    frame_ids: tuple
    subject_id: Optional[int] = None

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValueError("anchor set must hold at least one frame")
        if len(self.samples) != len(self.frame_ids):
            raise ValueError("samples and frame_ids disagree on length")
        if len(set(self.frame_ids)) != len(self.frame_ids):
            raise ValueError("anchor frame ids must be distinct")

    @property
    def count(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.stack([s.label for s in self.samples])


def select_anchors(subject_calib_frames, count: int, seed, subject_id=None) -> AnchorSet:
    """Uniform without-replacement draw of C anchors, deterministic in seed.

    Anchor sets for increasing C under the same seed are nested (a
    permutation prefix), so sweeping C compares supersets.
    """
    pool = len(subject_calib_frames)
    if count < 1:
        raise ValueError(f"anchor count must be at least 1, got {count}")
    if count > pool:
        raise ValueError(f"anchor count {count} exceeds pool size {pool}")
    perm = np.random.default_rng(seed).permutation(pool)
    ids = tuple(int(i) for i in np.sort(perm[:count]))
    return AnchorSet(
        samples=tuple(subject_calib_frames[i] for i in ids),
        frame_ids=ids,
        subject_id=subject_id,
    )


def predict_with_anchors(params: ParamSet, sample, anchors: AnchorSet) -> np.ndarray:
    """Absolute gaze from displacement predictions against each anchor."""
    if anchors.count < 1:
        raise ValueError("anchor set is empty")
    acc = np.zeros(4)
    for a in anchors.samples:
        acc += forward_siamese(params, sample, a) + a.label
    return acc / anchors.count


@dataclass(frozen=True)
class LinearCalib:
    """Per-axis affine correction g = theta0 + mu * g_hat."""

    theta0: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta0, dtype=np.float64)
        m = np.asarray(self.mu, dtype=np.float64)
        if t.shape != (4,) or m.shape != (4,):
            raise ValueError("theta0 and mu must have shape (4,)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(m))):
            raise ValueError("calibration parameters must be finite")
        object.__setattr__(self, "theta0", t)
        object.__setattr__(self, "mu", m)

    def to_dict(self, subject_id=None) -> dict:
        d = {"theta0": self.theta0.tolist(), "mu": self.mu.tolist()}
        if subject_id is not None:
            d["subject_id"] = subject_id
        return d


def _fit_axis(p, g, axis_name):
    # an optimal L1 line interpolates two data points (non-degenerate
    # case), so enumerating all point pairs plus the identity line is an
    # exact solver at calibration-sequence scale
    n = len(p)
    ii, jj = np.triu_indices(n, k=1)
    dp = p[jj] - p[ii]
    keep = dp != 0
    if not np.any(keep):
        raise DataError(f"axis {axis_name}: all predictions identical, cannot fit a line")
    mu = (g[jj] - g[ii])[keep] / dp[keep]
    th = g[ii][keep] - mu * p[ii][keep]
    mu = np.append(mu, 1.0)
    th = np.append(th, 0.0)
    obj = np.abs(g[None, :] - (th[:, None] + mu[:, None] * p[None, :])).sum(axis=1)
    best = np.lexsort((mu, th, obj))[0]
    return float(th[best]), float(mu[best]), float(obj[best])


def fit_linear_calib(preds, gts) -> LinearCalib:
    """Exact per-axis L1 fit of gts ~ theta0 + mu * preds.

    Ties on the objective break toward lexicographically smaller
    (theta0, mu). The identity line is always a candidate, so the fitted
    objective never exceeds the uncalibrated one.
    """
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[1] != 4 or preds.shape != gts.shape:
        raise ValueError(f"expected matching (n, 4) arrays, got {preds.shape} and {gts.shape}")
    if preds.shape[0] < 2:
        raise DataError("need at least 2 calibration frames to fit")
    theta0 = np.empty(4)
    mu = np.empty(4)
    for k in range(4):
        theta0[k], mu[k], _ = _fit_axis(preds[:, k], gts[:, k], AXIS_NAMES[k])
    return LinearCalib(theta0, mu)


def apply_linear_calib(calib: LinearCalib, g_hat) -> np.ndarray:
    """Component-wise theta0 + mu * g_hat; broadcasts over (N, 4)."""
    return calib.theta0 + calib.mu * np.asarray(g_hat, dtype=np.float64)
