"""HDR environment maps and their LDR conditioning decomposition.

Equirectangular (latlong) convention used throughout: a pixel at fractional
position u in [0, 1) along the width maps to azimuth phi = 2*pi*u - pi, and
v in [0, 1] along the height to polar angle theta = pi*v.  The view direction
is d = (sin(theta) sin(phi), cos(theta), -sin(theta) cos(phi)), so the map
center looks down -z and +y is up.  Pixel centers sit at (j + 0.5) / W and
(i + 0.5) / H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Rec. 709 luminance weights
_LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class HdrEnvMap:
    """Linear-radiance equirectangular panorama, width = 2 * height."""

    radiance: np.ndarray

    def __post_init__(self):
        self.radiance = np.asarray(self.radiance, dtype=np.float32)
        if self.radiance.ndim != 3 or self.radiance.shape[2] != 3:
            raise ValidationError(f"radiance must be (H, W, 3), got shape {self.radiance.shape}")
        h, w = self.radiance.shape[:2]
        if w != 2 * h:
            raise ValidationError(f"equirectangular map needs width = 2*height, got {w}x{h}")
        if not np.isfinite(self.radiance).all():
            raise ValidationError("radiance contains non-finite values")
        if (self.radiance < 0).any():
            raise ValidationError("radiance contains negative values")

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    @property
    def width(self) -> int:
        return self.radiance.shape[1]


@dataclass
class LdrConditionTriple:
    """The three [0, 1] maps a LDR-only encoder can digest.

    ``tonemapped`` is the per-channel Reinhard compression L/(1+L),
    ``log_intensity`` the map-max-normalized log luminance, and ``direction``
    the per-pixel unit view direction encoded as (d + 1) / 2.
    """

    tonemapped: np.ndarray
    log_intensity: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.tonemapped = np.asarray(self.tonemapped, dtype=np.float32)
        self.log_intensity = np.asarray(self.log_intensity, dtype=np.float32)
        self.direction = np.asarray(self.direction, dtype=np.float32)
        hw = self.tonemapped.shape[:2]
        if self.log_intensity.shape != hw or self.direction.shape[:2] != hw:
            raise ValidationError("decomposed maps disagree on spatial dimensions")
        for name, arr in (("tonemapped", self.tonemapped),
                          ("log_intensity", self.log_intensity),
                          ("direction", self.direction)):
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValidationError(f"{name} map leaves [0, 1]")


@dataclass
class LedArray:
    """Positions and scalar intensities of the white light-stage LEDs."""

    positions: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.intensities = np.asarray(self.intensities, dtype=np.float64).reshape(-1)
        if len(self.positions) != len(self.intensities):
            raise ValidationError("positions and intensities disagree in length")
        if len(self.positions) > 1024:
            raise ValidationError(f"at most 1024 LEDs supported, got {len(self.positions)}")
        norms = np.linalg.norm(self.positions, axis=1)
        if (norms == 0).any():
            idx = int(np.nonzero(norms == 0)[0][0])
            raise ValidationError(f"LED {idx} sits at the origin; direction undefined")
        if (self.intensities < 0).any():
            raise ValidationError("LED intensities must be non-negative")

    def __len__(self) -> int:
        return len(self.positions)

    def to_list(self) -> list:
        return [
            {"position": [float(c) for c in p], "intensity": float(i)}
            for p, i in zip(self.positions, self.intensities)
        ]

    @classmethod
    def from_list(cls, entries: list) -> "LedArray":
        try:
            pos = [e["position"] for e in entries]
            inten = [e["intensity"] for e in entries]
        except (KeyError, TypeError):
            raise ValidationError("LED JSON entries need 'position' and 'intensity'") from None
        return cls(positions=np.array(pos, dtype=np.float64),
                   intensities=np.array(inten, dtype=np.float64))


def pixel_directions(width: int, height: int) -> np.ndarray:
    """Unit view direction of every pixel center, shape (H, W, 3)."""
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    phi = 2.0 * np.pi * u - np.pi
    theta = np.pi * v
    st = np.sin(theta)[:, None]
    d = np.empty((height, width, 3), dtype=np.float64)
    d[..., 0] = st * np.sin(phi)[None, :]
    d[..., 1] = np.cos(theta)[:, None] * np.ones_like(phi)[None, :]
    d[..., 2] = -st * np.cos(phi)[None, :]
    return d


def direction_to_pixel(direction: np.ndarray, width: int, height: int) -> tuple[float, float]:
    """Continuous (column, row) position of a unit direction; inverse of
    :func:`pixel_directions` up to the wrap seam."""
    dx, dy, dz = (float(c) for c in direction)
    theta = math.acos(max(-1.0, min(1.0, dy)))
    phi = math.atan2(dx, -dz)
    col = (phi + math.pi) / (2.0 * math.pi) * width - 0.5
    row = theta / math.pi * height - 0.5
    return col, row


def decompose(env: HdrEnvMap) -> LdrConditionTriple:
    """Split an HDR map into tonemapped, log-intensity and direction maps.

    The log map normalizes by the map-wide luminance maximum (a single
    scalar); an all-zero map yields an all-zero log map rather than an error.
    """
    rad = env.radiance.astype(np.float64)
    tonemapped = rad / (1.0 + rad)
    lum = rad @ _LUMA
    lum_max = float(lum.max())
    if lum_max > 0:
        log_intensity = np.log1p(lum) / math.log1p(lum_max)
    else:
        log_intensity = np.zeros_like(lum)
    direction = (pixel_directions(env.width, env.height) + 1.0) / 2.0
    return LdrConditionTriple(
        tonemapped=tonemapped.astype(np.float32),
        log_intensity=log_intensity.astype(np.float32),
        direction=direction.astype(np.float32),
    )


def rotate(env: HdrEnvMap, yaw: float) -> HdrEnvMap:
    """Rotate the panorama about the vertical axis.

    Content shifts by yaw / (2*pi) * width pixels toward +u, with bilinear
    resampling (and wraparound) at fractional shifts.  Integer-pixel shifts
    are exact.
    """
    w = env.width
    shift = yaw / (2.0 * math.pi) * w
    src = np.arange(w, dtype=np.float64) - shift
    j0 = np.floor(src).astype(np.int64)
    frac = src - j0
    j0m = np.mod(j0, w)
    j1m = np.mod(j0 + 1, w)
    rad = env.radiance.astype(np.float64)
    out = rad[:, j0m, :] * (1.0 - frac)[None, :, None] + rad[:, j1m, :] * frac[None, :, None]
    return HdrEnvMap(radiance=np.maximum(out, 0.0).astype(np.float32))


def scale_intensity(env: HdrEnvMap, factor: float) -> HdrEnvMap:
    """Multiply all radiance by a non-negative factor."""
    if factor < 0:
        raise ValidationError(f"intensity factor must be >= 0, got {factor}")
    return HdrEnvMap(radiance=(env.radiance * np.float32(factor)))


def leds_to_equirect(leds: LedArray, width: int, height: int,
                     splat_radius: float = 0.0) -> HdrEnvMap:
    """Paint an LED array into an equirectangular map.

    Each LED direction lands at its latlong pixel and deposits its intensity
    as a Gaussian splat (sigma = splat_radius / 2, square support of
    half-width ceil(splat_radius), unit-sum weights; radius 0 is a single
    texel).  Deposits are divided by sin(theta) of the destination row so one
    unit of intensity integrates to one unit of solid-angle-weighted energy
    regardless of elevation.  LEDs are white; all channels receive the same
    value.  Splats partially above the top or below the bottom row are
    truncated.
    """
    if width != 2 * height:
        raise ValidationError(f"target must be equirectangular (W = 2H), got {width}x{height}")
    if splat_radius < 0:
        raise ValidationError(f"splat radius must be >= 0, got {splat_radius}")
    accum = np.zeros((height, width), dtype=np.float64)
    theta_rows = np.pi * (np.arange(height) + 0.5) / height
    sin_rows = np.sin(theta_rows)
    hw = int(math.ceil(splat_radius))
    sigma = splat_radius / 2.0
    for pos, intensity in zip(leds.positions, leds.intensities):
        d = pos / np.linalg.norm(pos)
        col, row = direction_to_pixel(d, width, height)
        jc = int(math.floor(col + 0.5))
        ic = int(math.floor(row + 0.5))
        if hw == 0:
            weights = np.ones((1, 1))
            rows = np.array([ic])
            cols = np.array([jc])
        else:
            rows = np.arange(ic - hw, ic + hw + 1)
            cols = np.arange(jc - hw, jc + hw + 1)
            dr = rows.astype(np.float64) - row
            dc = cols.astype(np.float64) - col
            weights = np.exp(-(dr[:, None] ** 2 + dc[None, :] ** 2) / (2.0 * sigma ** 2))
            weights /= weights.sum()
        keep = (rows >= 0) & (rows < height)
        rows_in = np.clip(rows[keep], 0, height - 1)
        cols_mod = np.mod(cols, width)
        deposit = weights[keep, :] * intensity / sin_rows[rows_in][:, None]
        np.add.at(accum, (rows_in[:, None], cols_mod[None, :]), deposit)
    rad = np.repeat(accum[:, :, None], 3, axis=2)
    return HdrEnvMap(radiance=rad.astype(np.float32))
