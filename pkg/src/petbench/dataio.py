"""On-disk dataset format, manifests, loading, subject-disjoint splits.

Layout under a dataset root::

    manifest.json
    S0000/main/F00000_L.petf
    S0000/main/F00000_R.petf
    S0000/calib/F00000_L.petf
    ...

Frame files hold raw orientation planes (the captures), not derived
channels: preprocessing is recomputed at load time so the demosaic /
smoothing / Stokes chain stays on the executed path of every run.
Labels live in the manifest, one JSON document per dataset.

PETF frame byte layout, all little-endian: magic ``PETF``, u8 version=1,
u8 plane count=4, u16 reserved=0, u32 height, u32 width, then the four
planes in orientation order (0, 45, 90, 135) as 32-bit IEEE-754 floats,
row-major.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .polarization import Modality, QuadFrame, quad_to_input

FORMAT_VERSION = 1
_MAGIC = b"PETF"
_HEADER = struct.Struct("<4sBBHII")

SESSIONS = ("main", "calib")


def frame_filename(frame_index: int, eye: str) -> str:
    return f"F{frame_index:05d}_{'L' if eye == 'left' else 'R'}.petf"


def write_frame(quad: QuadFrame, path) -> None:
    """Serialize a QuadFrame; planes are stored as 32-bit floats."""
    h, w = quad.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, 4, 0, h, w))
        for plane in quad.planes():
            fh.write(np.ascontiguousarray(plane, dtype="<f4").tobytes())


def read_frame(path) -> QuadFrame:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise OSError(f"{path}: truncated header")
        magic, version, n_planes, _, h, w = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1 or n_planes != 4:
            raise FormatError(f"{path}: unsupported version {version} / plane count {n_planes}")
        payload = fh.read()
    expected = 4 * h * w * 4
    if len(payload) < expected:
        raise OSError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes")
    planes = np.frombuffer(payload, dtype="<f4").reshape(4, h, w).astype(np.float64)
    return QuadFrame(*planes)


@dataclass(frozen=True)
class FrameRecord:
    subject_id: int
    session: str
    frame_index: int
    left_path: Path
    right_path: Path
    label: np.ndarray


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    config: dict
    subjects: dict

    def subject_ids(self):
        return sorted(s["subject_id"] for s in self.subjects.values())

    def _session(self, subject_id: int, session: str) -> dict:
        key = f"S{subject_id:04d}"
        if key not in self.subjects:
            raise KeyError(f"subject {subject_id} not in manifest")
        if session not in self.subjects[key]["sessions"]:
            raise KeyError(f"subject {subject_id} has no {session!r} session")
        return self.subjects[key]["sessions"][session]

    def n_frames(self, subject_id: int, session: str) -> int:
        return self._session(subject_id, session)["frames"]

    def labels(self, subject_id: int, session: str) -> np.ndarray:
        return np.asarray(self._session(subject_id, session)["labels"], dtype=np.float64)

    def frame_path(self, subject_id: int, session: str, frame_index: int, eye: str) -> Path:
        return self.root / f"S{subject_id:04d}" / session / frame_filename(frame_index, eye)

    def frame_records(self, subject_id: int, session: str):
        labels = self.labels(subject_id, session)
        records = []
        for i in range(self.n_frames(subject_id, session)):
            lp = self.frame_path(subject_id, session, i, "left")
            rp = self.frame_path(subject_id, session, i, "right")
            for p in (lp, rp):
                if not p.exists():
                    raise FileNotFoundError(f"frame file missing: {p}")
            records.append(FrameRecord(subject_id, session, i, lp, rp, labels[i]))
        return records


def write_manifest(root, config: dict, subjects: dict) -> None:
    doc = {"format_version": FORMAT_VERSION, "config": config, "subjects": subjects}
    path = Path(root) / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / "manifest.json"
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported manifest version")
    subjects = doc.get("subjects")
    if not isinstance(subjects, dict) or not subjects:
        raise FormatError(f"{path}: missing subject listings")
    for key, entry in subjects.items():
        for session, sess in entry.get("sessions", {}).items():
            labels = sess.get("labels")
            if len(labels) != sess.get("frames"):
                raise FormatError(f"{path}: {key}/{session}: label count != frame count")
            arr = np.asarray(labels, dtype=np.float64)
            if arr.shape != (sess["frames"], 4) or not np.all(np.isfinite(arr)):
                raise FormatError(f"{path}: {key}/{session}: malformed labels")
    return DatasetManifest(root=root, config=doc.get("config", {}), subjects=subjects)


@dataclass(frozen=True)
class Split:
    train_ids: tuple
    test_ids: tuple

    def __post_init__(self):
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test subjects must be disjoint")


def split_subjects(manifest: DatasetManifest, train_frac: float, seed: int) -> Split:
    """Deterministic subject-disjoint split; both sides non-empty."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie strictly between 0 and 1, got {train_frac}")
    ids = manifest.subject_ids()
    if len(ids) < 2:
        raise ValueError("need at least 2 subjects to split")
    n_train = int(train_frac * len(ids))
    n_train = max(1, min(len(ids) - 1, n_train))
    perm = np.random.default_rng(seed).permutation(ids)
    return Split(
        train_ids=tuple(sorted(int(x) for x in perm[:n_train])),
        test_ids=tuple(sorted(int(x) for x in perm[n_train:])),
    )


@dataclass(frozen=True)
class BinocularSample:
    """One preprocessed frame: per-eye input tensors plus the gaze label."""

    left: np.ndarray
    right: np.ndarray
    label: np.ndarray


class SampleLoader:
    """Loads and preprocesses frames, caching per (subject, session).

    Preprocessing runs the full capture chain (smooth, Stokes, derived
    channels, per-channel standardization) for the configured modality.
    The cache is keyed so one loader serves one modality.
    """

    def __init__(self, manifest: DatasetManifest, modality: Modality, sigma: float = 1.0, eps: float = 1e-6):
        self.manifest = manifest
        self.modality = modality
        self.sigma = sigma
        self.eps = eps
        self._cache = {}

    def arrays(self, subject_id: int, session: str):
        """Stacked (left, right, labels) arrays for one subject session."""
        key = (subject_id, session)
        if key not in self._cache:
            records = self.manifest.frame_records(subject_id, session)
            left = np.stack(
                [quad_to_input(read_frame(r.left_path), self.modality, self.sigma, self.eps) for r in records]
            )
            right = np.stack(
                [quad_to_input(read_frame(r.right_path), self.modality, self.sigma, self.eps) for r in records]
            )
            labels = np.stack([r.label for r in records])
            self._cache[key] = (left, right, labels)
        return self._cache[key]

    def samples(self, subject_id: int, session: str):
        left, right, labels = self.arrays(subject_id, session)
        return [BinocularSample(left[i], right[i], labels[i]) for i in range(len(labels))]

    def clear_cache(self):
        self._cache.clear()
