"""Polarization-filter-array image processing.

A PFA sensor captures linearly polarized radiance behind a 2x2 mosaic of
micro-polarizers at 0/45/90/135 degrees. This module turns such captures
into the derived channels a gaze model consumes:

    mosaic -> demosaic -> gaussian smoothing -> Stokes (S0, S1, S2)
           -> Intensity / DoLP / AoLP -> standardized input tensor

All arrays are float64, shape (H, W) per plane. DoLP here divides by the
four-orientation sum S0, so a fully polarized pixel reads sqrt(2)/2... up
to sqrt(2) in the degenerate limit; the synthetic generator stays within
[0, 0.5], which is the bound under which the inverse mapping
``synth_quad_from_ida`` emits non-negative radiance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Super-pixel layout: orientation in degrees at (row % 2, col % 2).
PFA_PATTERN = ((90, 45), (135, 0))

# Variance floor for per-channel standardization of model inputs.
VAR_FLOOR = 1e-8

_REL_TOL = 1e-9


def _as_plane(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D plane, got shape {a.shape}")
    return a


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class MosaicFrame:
    """Raw single-plane PFA capture; orientation per pixel follows ``pattern``."""

    pixels: np.ndarray
    pattern: tuple = PFA_PATTERN

    def __post_init__(self):
        px = _as_plane(self.pixels, "pixels")
        object.__setattr__(self, "pixels", px)
        h, w = px.shape
        if h % 2 or w % 2:
            raise ValueError(f"mosaic dimensions must be even, got {h}x{w}")
        _check_finite(px, "pixels")
        if np.any(px < 0):
            raise ValueError("mosaic radiance must be non-negative")
        if np.shape(self.pattern) != (2, 2):
            raise ValueError("pattern must be a 2x2 orientation layout")


@dataclass(frozen=True)
class QuadFrame:
    """Four co-registered radiance planes, one per polarizer orientation."""

    i0: np.ndarray
    i45: np.ndarray
    i90: np.ndarray
    i135: np.ndarray

    def __post_init__(self):
        planes = {}
        for name in ("i0", "i45", "i90", "i135"):
            p = _as_plane(getattr(self, name), name)
            _check_finite(p, name)
            if np.any(p < 0):
                raise ValueError(f"{name} contains negative radiance")
            planes[name] = p
        shapes = {p.shape for p in planes.values()}
        if len(shapes) != 1:
            raise ValueError(f"orientation planes disagree on shape: {sorted(shapes)}")
        for name, p in planes.items():
            object.__setattr__(self, name, p)

    @property
    def shape(self):
        return self.i0.shape

    def planes(self):
        """Planes in orientation order (0, 45, 90, 135)."""
        return (self.i0, self.i45, self.i90, self.i135)


@dataclass(frozen=True)
class StokesFrame:
    """Linear Stokes parameters: total, 0-90 contrast, 45-135 contrast."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        s0 = _as_plane(self.s0, "s0")
        s1 = _as_plane(self.s1, "s1")
        s2 = _as_plane(self.s2, "s2")
        if not (s0.shape == s1.shape == s2.shape):
            raise ValueError("Stokes planes disagree on shape")
        for name, p in (("s0", s0), ("s1", s1), ("s2", s2)):
            _check_finite(p, name)
        if np.any(s0 < 0):
            raise ValueError("s0 must be non-negative")
        bound = s0 * (1 + _REL_TOL) + 1e-12
        if np.any(np.abs(s1) > bound) or np.any(np.abs(s2) > bound):
            raise ValueError("|s1| and |s2| must not exceed s0")
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)


@dataclass(frozen=True)
class IdaFrame:
    """Derived Intensity / DoLP / AoLP channels for one eye image."""

    intensity: np.ndarray
    dolp: np.ndarray
    aolp: np.ndarray

    def __post_init__(self):
        inten = _as_plane(self.intensity, "intensity")
        dolp = _as_plane(self.dolp, "dolp")
        aolp = _as_plane(self.aolp, "aolp")
        if not (inten.shape == dolp.shape == aolp.shape):
            raise ValueError("IDA planes disagree on shape")
        for name, p in (("intensity", inten), ("dolp", dolp), ("aolp", aolp)):
            _check_finite(p, name)
        if np.any(inten < 0):
            raise ValueError("intensity must be non-negative")
        if np.any(dolp < 0) or np.any(dolp > math.sqrt(2) + _REL_TOL):
            raise ValueError("dolp out of [0, sqrt(2)]")
        if np.any(np.abs(aolp) > math.pi / 2 + _REL_TOL):
            raise ValueError("aolp out of [-pi/2, pi/2]")
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "dolp", dolp)
        object.__setattr__(self, "aolp", aolp)


class Modality(enum.Enum):
    """Model-input channel stack derived from an :class:`IdaFrame`."""

    POLARIZATION3 = "polarization"
    INTENSITY3 = "intensity3"
    INTENSITY1 = "intensity1"

    @property
    def channels(self) -> int:
        return 1 if self is Modality.INTENSITY1 else 3


def _upsample_axis(sub, offset, full, axis):
    # Doubles resolution along one axis of a 2x-subsampled grid. Sample
    # sites land back on themselves; midpoints are linear; sites outside
    # the first/last sample continue the edge gradient, so affine signals
    # are reproduced exactly over the whole axis.
    sub = np.moveaxis(sub, axis, 0)
    m = sub.shape[0]
    out = np.empty((full,) + sub.shape[1:], dtype=np.float64)
    out[offset::2] = sub
    if m == 1:
        out[1 - offset :: 2] = sub[0]
        return np.moveaxis(out, 0, axis)
    mids = np.empty((m + 1,) + sub.shape[1:], dtype=np.float64)
    mids[1:m] = 0.5 * (sub[:-1] + sub[1:])
    mids[0] = 1.5 * sub[0] - 0.5 * sub[1]
    mids[m] = 1.5 * sub[-1] - 0.5 * sub[-2]
    if offset == 0:
        out[1::2] = mids[1:]
    else:
        out[0::2] = mids[:m]
    return np.moveaxis(out, 0, axis)


def demosaic_pfa(mosaic: MosaicFrame) -> QuadFrame:
    """Interpolate a PFA mosaic into four full-resolution orientation planes.

    Each orientation is bilinearly upsampled from its own 2x2-subsampled
    grid; mosaic values pass through unchanged at that orientation's own
    sampling sites.
    """
    h, w = mosaic.pixels.shape
    planes = {}
    for r0 in (0, 1):
        for c0 in (0, 1):
            orient = mosaic.pattern[r0][c0]
            sub = mosaic.pixels[r0::2, c0::2]
            up = _upsample_axis(sub, r0, h, 0)
            up = _upsample_axis(up, c0, w, 1)
            planes[orient] = np.maximum(up, 0.0)
    return QuadFrame(planes[0], planes[45], planes[90], planes[135])


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _correlate1d(arr, kernel, axis):
    r = (len(kernel) - 1) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (r, r)
    # reflect padding duplicates the edge sample
    padded = np.pad(arr, pad, mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=axis)
    return windows @ kernel


def gaussian_smooth(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect border handling."""
    plane = _as_plane(plane, "plane")
    k = gaussian_kernel(sigma)
    return _correlate1d(_correlate1d(plane, k, 0), k, 1)


def compute_stokes(quad: QuadFrame) -> StokesFrame:
    """Stokes parameters from the four orientation planes.

    s0 = i0 + i45 + i90 + i135, s1 = i0 - i90, s2 = i45 - i135.
    """
    s0 = quad.i0 + quad.i45 + quad.i90 + quad.i135
    s1 = quad.i0 - quad.i90
    s2 = quad.i45 - quad.i135
    return StokesFrame(s0, s1, s2)


def compute_ida(stokes: StokesFrame, eps: float = 1e-6) -> IdaFrame:
    """Intensity, degree and angle of linear polarization from Stokes planes.

    intensity = s0/4, dolp = sqrt(s1^2 + s2^2)/(s0 + eps),
    aolp = arctan2(s2, s1)/2 with the (0, 0) pixel defined as angle 0.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    intensity = stokes.s0 / 4.0
    dolp = np.hypot(stokes.s1, stokes.s2) / (stokes.s0 + eps)
    aolp = 0.5 * np.arctan2(stokes.s2, stokes.s1)
    aolp = np.where((stokes.s1 == 0) & (stokes.s2 == 0), 0.0, aolp)
    return IdaFrame(intensity, np.minimum(dolp, math.sqrt(2)), aolp)


def _standardize(plane):
    var = plane.var()
    return (plane - plane.mean()) / math.sqrt(max(var, VAR_FLOOR))


def assemble_modality(ida: IdaFrame, modality: Modality) -> np.ndarray:
    """Stack an IDA frame into the (channels, H, W) tensor for one modality.

    Every channel is independently standardized to zero mean and unit
    variance over the frame (variance floored at ``VAR_FLOOR``).
    """
    if modality is Modality.POLARIZATION3:
        chans = (ida.intensity, ida.dolp, ida.aolp)
    elif modality is Modality.INTENSITY3:
        chans = (ida.intensity, ida.intensity, ida.intensity)
    elif modality is Modality.INTENSITY1:
        chans = (ida.intensity,)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown modality {modality}")
    return np.stack([_standardize(c) for c in chans])


def synth_quad_from_ida(intensity, dolp, aolp) -> QuadFrame:
    """Inverse mapping: emit the orientation planes realizing given channels.

    Requires dolp <= 0.5 everywhere; beyond that the implied radiance at
    some orientation turns negative and no physical capture exists under
    this normalization.
    """
    intensity = _as_plane(intensity, "intensity")
    dolp = _as_plane(dolp, "dolp")
    aolp = _as_plane(aolp, "aolp")
    if np.any(intensity < 0):
        raise ValueError("intensity must be non-negative")
    if np.any(dolp < 0) or np.any(dolp > 0.5):
        raise ValueError("dolp must lie in [0, 0.5] for a realizable capture")
    s0 = 4.0 * intensity
    s1 = dolp * s0 * np.cos(2.0 * aolp)
    s2 = dolp * s0 * np.sin(2.0 * aolp)
    base = s0 / 4.0
    # rounding can leave values a few ulp below zero at dolp == 0.5
    i0 = np.maximum(base + s1 / 2.0, 0.0)
    i90 = np.maximum(base - s1 / 2.0, 0.0)
    i45 = np.maximum(base + s2 / 2.0, 0.0)
    i135 = np.maximum(base - s2 / 2.0, 0.0)
    return QuadFrame(i0, i45, i90, i135)


def quad_to_input(
    quad: QuadFrame,
    modality: Modality,
    sigma: float = 1.0,
    eps: float = 1e-6,
) -> np.ndarray:
    """Full preprocessing chain from a stored capture to a model input."""
    smoothed = QuadFrame(*(gaussian_smooth(p, sigma) for p in quad.planes()))
    ida = compute_ida(compute_stokes(smoothed), eps)
    return assemble_modality(ida, modality)
