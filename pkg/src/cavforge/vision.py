"""Frame processing: dim-spot enhancement, reference subtraction, centroids,
and beam statistics including the beam-quality proxy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import WorkspaceError
from .physics import CameraFrame

DEFAULT_NOISE_FLOOR = 0.02
DETECTION_FACTOR = 50.0


@dataclass(frozen=True)
class CentroidResult:
    detected: bool
    x_px: float
    y_px: float
    total_intensity: float


@dataclass(frozen=True)
class BeamStats:
    """Spot statistics from intensity moments.

    ``m_squared`` is the square of the larger-axis second moment over the
    supplied fundamental reference width; an order-n mode rendered along one
    axis measures 2n+1. It is clamped below at 1 and only computed when a
    reference is given.
    """

    detected: bool
    saturated: bool
    centroid_px: tuple | None
    total_intensity: float
    sigma_px: tuple | None
    m_squared: float | None


def log_transform(frame: CameraFrame, gain: float = 10.0) -> CameraFrame:
    """Compress dynamic range: ``log(1 + gain*I) / log(1 + gain)``.

    Fixes the endpoints (0 -> 0, 1 -> 1) and is strictly monotone, so dim
    secondary spots gain contrast without reordering intensities.
    """
    if gain <= 0:
        raise WorkspaceError("log transform gain must be positive")
    out = np.log1p(gain * frame.intensities) / math.log1p(gain)
    return CameraFrame(out, frame.pixel_pitch_mm, frame.camera_id)


def subtract_reference(live: CameraFrame, reference: CameraFrame) -> CameraFrame:
    """Pixelwise ``max(live - reference, 0)``: keeps what is new in the live
    frame and discards everything the reference already explains."""
    if live.intensities.shape != reference.intensities.shape:
        raise WorkspaceError("frame shapes differ")
    out = np.maximum(live.intensities - reference.intensities, 0.0)
    return CameraFrame(out, live.pixel_pitch_mm, live.camera_id)


def centroid(frame: CameraFrame, noise_floor: float = DEFAULT_NOISE_FLOOR) -> CentroidResult:
    """Intensity-weighted centroid over above-floor pixels.

    A spot counts as detected only when the integrated above-floor
    intensity clears ``DETECTION_FACTOR * noise_floor``, so a dark frame or
    a faint numerical tail never yields a spurious position.
    """
    total, cx, cy, _, _, _, count = _kernels.frame_moments(frame.intensities, noise_floor)
    detected = count > 0 and total >= DETECTION_FACTOR * noise_floor
    return CentroidResult(detected=detected, x_px=cx, y_px=cy, total_intensity=total)


def beam_stats(frame: CameraFrame, noise_floor: float = DEFAULT_NOISE_FLOOR,
               sigma_ref_px: float | None = None) -> BeamStats:
    """Centroid, size, and beam-quality proxy of the dominant spot."""
    total, cx, cy, var_x, var_y, vmax, count = _kernels.frame_moments(
        frame.intensities, noise_floor)
    saturated = vmax >= 1.0 - 1e-9
    detected = count > 0 and total >= DETECTION_FACTOR * noise_floor
    if not detected:
        return BeamStats(False, saturated, None, total, None, None)
    sigma = (math.sqrt(var_x), math.sqrt(var_y))
    m_squared = None
    if sigma_ref_px is not None:
        if sigma_ref_px <= 0:
            raise WorkspaceError("sigma_ref_px must be positive")
        m_squared = max(1.0, (max(sigma) / sigma_ref_px) ** 2)
    return BeamStats(True, saturated, (cx, cy), total, sigma, m_squared)


def sensor_center_px(frame: CameraFrame) -> tuple:
    return ((frame.width - 1) / 2.0, (frame.height - 1) / 2.0)


def pixels_to_mm(frame: CameraFrame, point_px) -> tuple:
    """Pixel-index coordinates to mm relative to the sensor center."""
    cx, cy = sensor_center_px(frame)
    return ((point_px[0] - cx) * frame.pixel_pitch_mm,
            (point_px[1] - cy) * frame.pixel_pitch_mm)


def mm_to_pixels(frame: CameraFrame, point_mm) -> tuple:
    """Inverse of :func:`pixels_to_mm`; exact round trip."""
    cx, cy = sensor_center_px(frame)
    return (point_mm[0] / frame.pixel_pitch_mm + cx,
            point_mm[1] / frame.pixel_pitch_mm + cy)
