"""Deterministic synthetic binocular polarization-gaze dataset.

Stands in for captures from a polarization camera aimed at the top part
of the eye. Each rendered frame is an Intensity / DoLP / AoLP triple:

* intensity: dark elliptical pupil blob on a bright sclera, blob center
  driven by the subject-distorted gaze, plus sensor noise. An eyelid
  covers the top ``occlusion_frac`` rows with constant skin radiance,
  swallowing the blob at high pitch.
* dolp: a plaid texture whose phase translates with the distorted gaze.
  It survives under the eyelid at half contrast, so gaze stays decodable
  from polarization when the pupil is hidden.
* aolp: a radial orientation field with a small pitch-dependent shift.

Subject identity enters through an affine distortion of the commanded
gaze (per-eye gain and offset, making a linear per-user correction the
exactly matched calibration model in the noise-free limit), per-eye
texture phases, the eyelid coverage, and the noise level.

Gaze labels are carried as shape (4,) float64 arrays ordered
``[yaw_left, pitch_left, yaw_right, pitch_right]`` in degrees; both eyes
share the commanded target (vergence is ignored), so the label is the
undistorted target duplicated per eye.

All randomness is counter-based: each stream is keyed by an integer
tuple (master_seed, subject, session, frame, eye, tag), so any frame
regenerates in isolation and generation order never matters.
"""

from __future__ import annotations

import math
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .polarization import IdaFrame, synth_quad_from_ida

GAZE_LIMIT_DEG = 25.0
RING_JITTER_DEG = 0.2

# intensity plane radiances
SCLERA = 0.85
SKIN = 0.78
PUPIL_DEPTH = 0.55

_EYES = ("left", "right")
_SESSION_CODES = {"uniform": 0, "ring": 1}
_TAG_SUBJECT = 0
_TAG_GAZE = 1
_TAG_NOISE = 2


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))


@dataclass(frozen=True)
class SubjectLatent:
    """Per-subject generative parameters.

    ``gain`` and ``offset`` hold the affine gaze distortion in label
    order (yaw_left, pitch_left, yaw_right, pitch_right); the rendered
    gaze per eye is d = gain * (yaw, pitch) + offset. ``texture_phase``
    holds two radians per eye in the same eye order.
    """

    subject_id: int
    gain: np.ndarray
    offset: np.ndarray
    texture_phase: np.ndarray
    occlusion_frac: float
    noise_sigma: float

    def __post_init__(self):
        if self.subject_id < 0:
            raise ValueError("subject_id must be non-negative")
        for name, n in (("gain", 4), ("offset", 4), ("texture_phase", 4)):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, a)
        if np.any(self.gain < 0.8) or np.any(self.gain > 1.2):
            raise ValueError("gain components must lie in [0.8, 1.2]")
        if np.any(np.abs(self.offset) > 8.0):
            raise ValueError("offset components must lie in [-8, 8] degrees")
        if not 0.0 <= self.occlusion_frac <= 0.35:
            raise ValueError("occlusion_frac must lie in [0, 0.35]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class GenConfig:
    n_subjects: int
    frames_per_subject: int
    image_size: int = 32
    gaze_range_deg: float = 25.0
    master_seed: int = 0
    ring_radius_deg: float = 14.0
    calib_frames: int = 100
    calib_targets: int = 9

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be at least 1")
        if self.frames_per_subject < 1:
            raise ValueError("frames_per_subject must be at least 1")
        if self.image_size % 2 or not 16 <= self.image_size <= 256:
            raise ValueError("image_size must be even and within [16, 256]")
        if not 0 < self.gaze_range_deg <= GAZE_LIMIT_DEG:
            raise ValueError(f"gaze_range_deg must lie in (0, {GAZE_LIMIT_DEG}]")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if not 0 < self.ring_radius_deg <= self.gaze_range_deg - RING_JITTER_DEG:
            raise ValueError("ring_radius_deg plus jitter must stay inside the gaze range")
        if self.calib_frames < 1:
            raise ValueError("calib_frames must be at least 1")
        if self.calib_targets < 2:
            raise ValueError("calib_targets must be at least 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


def make_gaze(yaw: float, pitch: float) -> np.ndarray:
    """Shared-target binocular label [yaw_l, pitch_l, yaw_r, pitch_r]."""
    return np.array([yaw, pitch, yaw, pitch], dtype=np.float64)


def sample_subject(master_seed: int, subject_id: int) -> SubjectLatent:
    """Draw a subject's latent parameters; a pure function of its key."""
    r = _rng(master_seed, subject_id, _TAG_SUBJECT)
    return SubjectLatent(
        subject_id=subject_id,
        # moderate gain spread, wide offsets: anchor differencing removes
        # the constant per-eye bias, while the per-subject slope left by the
        # gain is exactly what the affine calibration stage is for
        gain=r.uniform(0.85, 1.15, size=4),
        offset=r.uniform(-6.0, 6.0, size=4),
        texture_phase=r.uniform(0.0, 2.0 * math.pi, size=4),
        # a floor keeps the eyelid mechanism present for every subject:
        # at extreme upward gaze some of the pupil is always covered, so
        # the intensity plane always loses signal there while the
        # polarization ratios keep it
        occlusion_frac=r.uniform(0.12, 0.30),
        # shot noise lands on the intensity plane only; the polarization
        # ratios reject it as common mode, which is a large part of why
        # the dolp/aolp channels stay informative on hard frames
        noise_sigma=r.uniform(0.05, 0.12),
    )


def render_eye(
    subject: SubjectLatent,
    eye: str,
    yaw: float,
    pitch: float,
    frame_seed,
    image_size: int = 32,
) -> IdaFrame:
    """Render one eye's Intensity/DoLP/AoLP channels for one gaze sample.

    ``frame_seed`` (int or numpy SeedSequence) drives only the intensity
    noise; the render is otherwise a closed-form function of its inputs.
    """
    if eye not in _EYES:
        raise ValueError(f"eye must be 'left' or 'right', got {eye!r}")
    if not (np.isfinite(yaw) and np.isfinite(pitch)):
        raise ValueError("gaze must be finite")
    if abs(yaw) > GAZE_LIMIT_DEG or abs(pitch) > GAZE_LIMIT_DEG:
        raise ValueError(f"|yaw| and |pitch| must not exceed {GAZE_LIMIT_DEG} degrees")
    if image_size < 8:
        raise ValueError("image_size must be at least 8")

    h = w = int(image_size)
    k = 2 * _EYES.index(eye)
    d_yaw = subject.gain[k] * yaw + subject.offset[k]
    d_pitch = subject.gain[k + 1] * pitch + subject.offset[k + 1]

    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]

    # nasal/temporal mirror for the left eye; tanh saturation keeps the
    # blob inside the frame over the whole distorted-gaze range while
    # staying strictly monotone in gaze
    mirror = -1.0 if eye == "left" else 1.0
    cu = 0.5 * w + 0.3125 * w * math.tanh(mirror * d_yaw / 18.0)
    cv = 0.5 * h - 0.375 * h * math.tanh(d_pitch / 15.0)
    ru = 0.12 * w
    rv = 0.095 * h
    blob = np.exp(-(((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2))
    inten = SCLERA - PUPIL_DEPTH * blob
    if subject.noise_sigma > 0:
        noise_rng = np.random.default_rng(frame_seed)
        inten = inten + noise_rng.normal(0.0, subject.noise_sigma, size=(h, w))
    occ_rows = int(subject.occlusion_frac * h)
    inten[:occ_rows, :] = SKIN
    inten = np.clip(inten, 0.0, None)

    phase_u, phase_v = subject.texture_phase[k : k + 2]
    dolp = 0.25 + 0.2 * np.sin(2.0 * math.pi * (0.15 * u + 0.04 * d_yaw) + phase_u) * np.cos(
        2.0 * math.pi * (0.15 * v + 0.04 * d_pitch) + phase_v
    )
    dolp = np.clip(dolp, 0.0, 0.5)
    dolp[:occ_rows, :] *= 0.5

    orient = np.arctan2(v - 0.5 * (h - 1), u - 0.5 * (w - 1))
    raw = 0.3 * orient + 0.02 * d_pitch
    aolp = np.mod(raw + 0.5 * math.pi, math.pi) - 0.5 * math.pi

    return IdaFrame(inten, dolp, aolp)


def _frame_gaze(cfg: GenConfig, subject_id: int, sampler: str, frame: int):
    code = _SESSION_CODES[sampler]
    r = _rng(cfg.master_seed, subject_id, code, frame, _TAG_GAZE)
    if sampler == "uniform":
        yaw, pitch = r.uniform(-cfg.gaze_range_deg, cfg.gaze_range_deg, size=2)
    else:
        angle = 2.0 * math.pi * (frame % cfg.calib_targets) / cfg.calib_targets
        jitter = r.uniform(-RING_JITTER_DEG, RING_JITTER_DEG, size=2)
        yaw = cfg.ring_radius_deg * math.cos(angle) + jitter[0]
        pitch = cfg.ring_radius_deg * math.sin(angle) + jitter[1]
    return float(yaw), float(pitch)


def gen_session(subject: SubjectLatent, n: int, gaze_sampler: str, cfg: GenConfig):
    """Generate n frames for one subject as (left quad, right quad, label).

    ``uniform`` draws gaze uniformly over the configured range; ``ring``
    walks round-robin over equally spaced targets on a circle of radius
    ``ring_radius_deg`` with per-frame jitter.
    """
    if n < 1:
        raise ValueError("session length must be at least 1")
    if gaze_sampler not in _SESSION_CODES:
        raise ValueError(f"unknown gaze sampler {gaze_sampler!r}")
    code = _SESSION_CODES[gaze_sampler]
    frames = []
    for f in range(n):
        yaw, pitch = _frame_gaze(cfg, subject.subject_id, gaze_sampler, f)
        quads = []
        for e, eye in enumerate(_EYES):
            seed = np.random.SeedSequence(
                [cfg.master_seed, subject.subject_id, code, f, e, _TAG_NOISE]
            )
            ida = render_eye(subject, eye, yaw, pitch, seed, cfg.image_size)
            quads.append(synth_quad_from_ida(ida.intensity, ida.dolp, ida.aolp))
        frames.append((quads[0], quads[1], make_gaze(yaw, pitch)))
    return frames


def gen_dataset(cfg: GenConfig, out_dir, overwrite: bool = False) -> None:
    """Write the full dataset: per subject a uniform "main" session of
    ``frames_per_subject`` frames and a ring "calib" session of
    ``calib_frames`` frames, plus the manifest."""
    from . import dataio

    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise FileExistsError(f"output directory {out} is not empty (use overwrite)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)

    subjects = {}
    for sid in range(cfg.n_subjects):
        subject = sample_subject(cfg.master_seed, sid)
        sessions = {}
        for session, sampler, n in (
            ("main", "uniform", cfg.frames_per_subject),
            ("calib", "ring", cfg.calib_frames),
        ):
            sdir = out / f"S{sid:04d}" / session
            sdir.mkdir(parents=True)
            labels = []
            for f, (quad_l, quad_r, gaze) in enumerate(gen_session(subject, n, sampler, cfg)):
                dataio.write_frame(quad_l, sdir / f"F{f:05d}_L.petf")
                dataio.write_frame(quad_r, sdir / f"F{f:05d}_R.petf")
                labels.append([float(x) for x in gaze])
            sessions[session] = {"frames": n, "labels": labels}
        subjects[f"S{sid:04d}"] = {"subject_id": sid, "sessions": sessions}

    dataio.write_manifest(out, cfg.to_dict(), subjects)
