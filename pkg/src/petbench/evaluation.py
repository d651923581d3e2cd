"""Angular gaze error, percentile reports, experiment comparisons.

A prediction or label is a degree 4-vector [yaw_left, pitch_left,
yaw_right, pitch_right]. The error metric converts each eye's (yaw,
pitch) to a 3-D direction, takes the angle between predicted and true
directions, and averages the two eyes, giving one scalar per frame in
degrees. Percentiles over pooled per-frame errors use linear
interpolation between closest ranks, h = (n - 1) p / 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import DatasetManifest, SampleLoader, Split, load_manifest
from .errors import ConfigError, DataError
from .net import KINDS, NetModel, load_checkpoint
from .personalize import apply_linear_calib, fit_linear_calib, select_anchors
from .polarization import Modality

_TAG_EVAL_ANCHOR = 11


@dataclass(frozen=True)
class EvalOptions:
    kind: str
    modality: Modality
    anchors: Optional[int] = None
    linear_calib: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.modality, Modality):
            raise ConfigError(f"modality must be a Modality, got {self.modality!r}")
        if self.kind == "siamese":
            if self.anchors is None or self.anchors < 1:
                raise ConfigError("siamese evaluation needs an anchor count >= 1")
        elif self.anchors is not None and self.anchors < 1:
            raise ConfigError("anchor count must be >= 1 when given")


@dataclass(frozen=True)
class FrameError:
    subject_id: int
    frame_index: int
    error: float
    label: np.ndarray


@dataclass(frozen=True)
class PercentileReport:
    p50: float
    p75: float
    p95: float
    n_samples: int
    per_subject: dict

    def __post_init__(self):
        if not (0 <= self.p50 <= self.p75 <= self.p95):
            raise ValueError("percentiles must satisfy 0 <= p50 <= p75 <= p95")

    def to_dict(self) -> dict:
        return {
            "p50": self.p50,
            "p75": self.p75,
            "p95": self.p95,
            "n": self.n_samples,
            "per_subject": self.per_subject,
        }


def gaze_to_unit(yaw: float, pitch: float) -> np.ndarray:
    """Unit view direction for yaw theta, pitch phi (degrees):
    (cos phi sin theta, sin phi, cos phi cos theta)."""
    t = math.radians(yaw)
    p = math.radians(pitch)
    return np.array([math.cos(p) * math.sin(t), math.sin(p), math.cos(p) * math.cos(t)])


def _units(angles):
    # angles: (..., 2) degrees -> unit vectors (..., 3)
    t = np.deg2rad(angles[..., 0])
    p = np.deg2rad(angles[..., 1])
    return np.stack([np.cos(p) * np.sin(t), np.sin(p), np.cos(p) * np.cos(t)], axis=-1)


def angular_error_batch(pred, gt) -> np.ndarray:
    """Per-frame angular error (degrees), mean over the two eyes."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2, 2)
    u = _units(pred)
    v = _units(gt)
    # atan2(|u x v|, u.v) rather than arccos(u.v): the dot of two equal
    # unit vectors can round one ulp below 1, which arccos turns into a
    # spurious ~1e-6 degree floor; the cross product of equal vectors is
    # exactly zero, so tiny angles stay tiny
    dots = (u * v).sum(axis=-1)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    ang = np.degrees(np.arctan2(cross, dots))
    return ang.mean(axis=1)


def angular_error(pred, gt) -> float:
    return float(angular_error_batch(np.asarray(pred)[None], np.asarray(gt)[None])[0])


def percentile(values, p: float) -> float:
    """Linear interpolation between closest ranks of the sorted values."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("percentile of an empty list")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"p must lie in [0, 100], got {p}")
    s = np.sort(values)
    h = (s.size - 1) * p / 100.0
    lo = int(math.floor(h))
    hi = min(lo + 1, s.size - 1)
    return float(s[lo] + (h - lo) * (s[hi] - s[lo]))


def _anchor_predictions(model: NetModel, feats_q, anchor_feats, anchor_labels):
    acc = np.zeros((feats_q.shape[0], 4))
    for c in range(anchor_feats.shape[0]):
        fa = np.broadcast_to(anchor_feats[c], feats_q.shape)
        acc += model.delta_from_features(feats_q, fa) + anchor_labels[c]
    return acc / anchor_feats.shape[0]


def _subject_predictions(model, loader, subject_id, options, session, limit=None):
    xl, xr, labels = loader.arrays(subject_id, session)
    if limit is not None:
        xl, xr, labels = xl[:limit], xr[:limit], labels[:limit]
    feats = model.features(xl, xr)
    if options.kind == "baseline":
        return model.absolute_from_features(feats), labels
    calib = loader.samples(subject_id, "calib")
    anchors = select_anchors(
        calib,
        options.anchors,
        np.random.SeedSequence([options.seed, subject_id, _TAG_EVAL_ANCHOR]),
        subject_id=subject_id,
    )
    a_left = np.stack([a.left for a in anchors.samples])
    a_right = np.stack([a.right for a in anchors.samples])
    anchor_feats = model.features(a_left, a_right)
    return _anchor_predictions(model, feats, anchor_feats, anchors.labels()), labels


def _subject_calibration(model, loader, subject_id, options):
    preds, labels = _subject_predictions(model, loader, subject_id, options, "calib")
    return fit_linear_calib(preds, labels)


def collect_errors(model: NetModel, loader: SampleLoader, test_ids, options: EvalOptions, max_frames_per_subject=None):
    """Per-frame angular errors over the main sessions of the given subjects."""
    records = []
    for sid in sorted(test_ids):
        if options.kind == "siamese" or options.linear_calib:
            key = f"S{sid:04d}"
            if "calib" not in loader.manifest.subjects.get(key, {}).get("sessions", {}):
                raise DataError(f"subject {sid} lacks the calib session required by options")
        preds, labels = _subject_predictions(
            model, loader, sid, options, "main", limit=max_frames_per_subject
        )
        if options.linear_calib:
            calib = _subject_calibration(model, loader, sid, options)
            preds = apply_linear_calib(calib, preds)
        errs = angular_error_batch(preds, labels)
        for i, e in enumerate(errs):
            records.append(FrameError(sid, i, float(e), labels[i]))
    return records


def make_report(records) -> PercentileReport:
    if not records:
        raise ValueError("no frame errors to report")
    pooled = [r.error for r in records]
    per_subject = {}
    for sid in sorted({r.subject_id for r in records}):
        errs = [r.error for r in records if r.subject_id == sid]
        per_subject[sid] = {
            "p50": percentile(errs, 50.0),
            "p75": percentile(errs, 75.0),
            "p95": percentile(errs, 95.0),
            "n": len(errs),
        }
    return PercentileReport(
        p50=percentile(pooled, 50.0),
        p75=percentile(pooled, 75.0),
        p95=percentile(pooled, 95.0),
        n_samples=len(pooled),
        per_subject=per_subject,
    )


def evaluate(checkpoint, dataset, split: Split, options: EvalOptions, loader=None) -> PercentileReport:
    """Pooled percentile report over all test-subject main frames."""
    model = checkpoint if isinstance(checkpoint, NetModel) else load_checkpoint(checkpoint)
    if model.kind != options.kind:
        raise ConfigError(f"checkpoint holds a {model.kind} model but options ask for {options.kind}")
    if model.modality is not options.modality:
        raise ConfigError(
            f"checkpoint modality {model.modality.value} does not match options "
            f"({options.modality.value})"
        )
    if loader is None:
        manifest = dataset if isinstance(dataset, DatasetManifest) else load_manifest(dataset)
        loader = SampleLoader(manifest, options.modality)
    records = collect_errors(model, loader, sorted(split.test_ids), options)
    return make_report(records)


def _improvement(base: float, x: float):
    if base == 0:
        return None
    return (base - x) / base


def compare_runs(named_reports):
    """Percent improvements of every run relative to the first.

    Returns (summary dict, aligned plain-text table). A zero reference
    percentile makes the improvement undefined: None in the structured
    form, a "-" marker in the table.
    """
    named_reports = list(named_reports)
    if len(named_reports) < 2:
        raise ValueError("need at least 2 reports to compare")
    base_name, base = named_reports[0]
    rows = []
    for name, rep in named_reports:
        row = {"run": name, "p50": rep.p50, "p75": rep.p75, "p95": rep.p95, "n": rep.n_samples}
        if rep is not base:
            for q in ("p50", "p75", "p95"):
                row[f"improvement_{q}"] = _improvement(getattr(base, q), getattr(rep, q))
        rows.append(row)
    summary = {"reference": base_name, "rows": rows}

    def fmt_imp(row, q):
        if row["run"] == base_name and row is rows[0]:
            return "ref"
        v = row.get(f"improvement_{q}")
        return "-" if v is None else f"{100.0 * v:+.1f}%"

    header = ["run", "p50", "p75", "p95", "n", "d_p50", "d_p75", "d_p95"]
    cells = [header]
    for row in rows:
        cells.append(
            [
                str(row["run"]),
                f"{row['p50']:.4f}",
                f"{row['p75']:.4f}",
                f"{row['p95']:.4f}",
                str(row["n"]),
                fmt_imp(row, "p50"),
                fmt_imp(row, "p75"),
                fmt_imp(row, "p95"),
            ]
        )
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return summary, "\n".join(lines)
