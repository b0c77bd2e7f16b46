"""Distortion-free normalized orthographic depth maps.

The geometry codec at the heart of the package: metric depth is unprojected
through a pinhole camera, the resulting cloud is isotropically normalized so
its longest bounding-box edge spans one unit, and the normalized z values are
written back onto the pixel grid as a single-channel map in [-1, 1].  Because
the normalization is isotropic, the map can later be turned back into a
distortion-free 3D shape by a plain orthographic unprojection that needs no
camera intrinsics.

Conventions frozen here (they are load-bearing for bit-exact tests):

* Background pixels hold exactly 0.0; foreground membership is carried by an
  explicit boolean mask, never inferred from the values.
* Maps are stored as 32-bit floats; all intermediate math runs in float64.
* Orthographic recovery maps pixel ``u`` to ``x = (u + 0.5) / W * 2*s_x - s_x``
  (pixel centers, full-grid span ``[-s_x, s_x]``), and analogously for y.  The
  half-extents derive from the foreground footprint: one normalized unit spans
  ``max(u1 - u0, v1 - v0)`` pixels, where ``(u0, v0)-(u1, v1)`` is the
  footprint bounding box.  This is exact whenever a lateral axis is the
  longest edge of the subject's bounding box; when the depth axis dominates,
  the lateral scale is not recoverable from the map alone and the footprint
  rule is the documented best effort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateGeometryError, ValidationError


@dataclass(frozen=True)
class IntrinsicsMatrix:
    """Pinhole parameters, needed only when a map is created."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def validate_for(self, width: int, height: int) -> None:
        """Check the principal point lies inside a width x height image."""
        if not (0 <= self.cx < width):
            raise ValidationError(f"cx={self.cx} outside [0, {width})")
        if not (0 <= self.cy < height):
            raise ValidationError(f"cy={self.cy} outside [0, {height})")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "IntrinsicsMatrix":
        try:
            return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]))
        except KeyError as e:
            raise ValidationError(f"intrinsics JSON missing field {e.args[0]!r}") from None


@dataclass
class DepthMap:
    """Per-pixel metric depth with an explicit foreground mask.

    Value sanity (finite, strictly positive on the mask) is enforced by
    :func:`unproject`, which can then name the offending pixel.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise ValidationError(f"depth values must be 2D, got shape {self.values.shape}")
        if self.mask.shape != self.values.shape:
            raise ValidationError(
                f"depth mask shape {self.mask.shape} does not match values shape {self.values.shape}"
            )

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class PointCloud:
    """3D points, optionally tagged with the (u, v) pixel each came from."""

    points: np.ndarray
    pixel_index: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise ValidationError("point cloud contains non-finite coordinates")
        if self.pixel_index is not None:
            self.pixel_index = np.asarray(self.pixel_index, dtype=np.int64).reshape(-1, 2)
            if len(self.pixel_index) != len(self.points):
                raise ValidationError(
                    f"pixel_index length {len(self.pixel_index)} != point count {len(self.points)}"
                )

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class NormalizationRecord:
    """Center and scale that took a metric cloud into the unit box."""

    center: tuple
    max_edge: float

    def __post_init__(self):
        if not (self.max_edge > 0):
            raise ValidationError(f"max_edge must be positive, got {self.max_edge}")

    def to_dict(self) -> dict:
        return {"center": [float(c) for c in self.center], "max_edge": float(self.max_edge)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationRecord":
        return cls(center=tuple(float(c) for c in d["center"]), max_edge=float(d["max_edge"]))


@dataclass
class INodMap:
    """Normalized orthographic depth on a pixel grid.

    ``values`` are float32 in [-1, 1] on the foreground (mask or dilated_mask)
    and exactly 0 on background.  ``dilated_mask`` flags pixels added by
    :func:`dilate_foreground`; it never overlaps ``mask``.
    """

    values: np.ndarray
    mask: np.ndarray
    dilated_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise ValidationError(f"map values must be 2D, got shape {self.values.shape}")
        if self.mask.shape != self.values.shape:
            raise ValidationError(
                f"mask shape {self.mask.shape} does not match values shape {self.values.shape}"
            )
        if self.dilated_mask is not None:
            self.dilated_mask = np.asarray(self.dilated_mask, dtype=bool)
            if self.dilated_mask.shape != self.values.shape:
                raise ValidationError("dilated_mask shape does not match values shape")
            if (self.mask & self.dilated_mask).any():
                raise ValidationError("mask and dilated_mask overlap")
        fg = self.foreground
        fg_vals = self.values[fg]
        if not np.isfinite(fg_vals).all():
            raise ValidationError("non-finite value on a foreground pixel")
        if fg_vals.size and (np.abs(fg_vals) > 1.0).any():
            raise ValidationError("foreground value outside [-1, 1]")
        if (self.values[~fg] != 0.0).any():
            raise ValidationError("background pixel holds a nonzero value")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def foreground(self) -> np.ndarray:
        """Union of the original and dilation-added masks."""
        if self.dilated_mask is None:
            return self.mask
        return self.mask | self.dilated_mask


def unproject(depth: DepthMap, k: IntrinsicsMatrix) -> PointCloud:
    """Lift masked depth pixels to camera-frame 3D points.

    Pixel (u, v) with depth d maps to ((u - cx) d / fx, (v - cy) d / fy, d).
    Points come out in row-major pixel order with (u, v) provenance attached.
    """
    k.validate_for(depth.width, depth.height)
    bad = depth.mask & ~(np.isfinite(depth.values) & (depth.values > 0))
    if bad.any():
        v, u = np.argwhere(bad)[0]
        raise ValidationError(
            f"depth at masked pixel (u={u}, v={v}) is {depth.values[v, u]!r}; "
            "expected a finite positive value"
        )
    vv, uu = np.nonzero(depth.mask)
    d = depth.values[vv, uu]
    x = (uu - k.cx) * d / k.fx
    y = (vv - k.cy) * d / k.fy
    points = np.column_stack([x, y, d])
    return PointCloud(points=points, pixel_index=np.column_stack([uu, vv]))


def isotropic_normalize(cloud: PointCloud) -> tuple[PointCloud, NormalizationRecord]:
    """Scale a cloud so its longest bounding-box edge spans one unit.

    A single scalar divides all three axes, so per-axis extent ratios are
    preserved; absolute scale is discarded.
    """
    if len(cloud) == 0:
        raise ValidationError("cannot normalize an empty point cloud")
    mn = cloud.points.min(axis=0)
    mx = cloud.points.max(axis=0)
    max_edge = float((mx - mn).max())
    if max_edge <= 0:
        raise DegenerateGeometryError("all points coincide; bounding box has no extent")
    center = (mn + mx) / 2.0
    normalized = PointCloud(
        points=(cloud.points - center) / max_edge,
        pixel_index=None if cloud.pixel_index is None else cloud.pixel_index.copy(),
    )
    record = NormalizationRecord(center=tuple(float(c) for c in center), max_edge=max_edge)
    return normalized, record


def project_inod(norm_cloud: PointCloud, width: int, height: int) -> INodMap:
    """Write the z value of each normalized point back onto its source pixel."""
    if norm_cloud.pixel_index is None:
        raise ValidationError("projection requires per-point pixel provenance")
    uu = norm_cloud.pixel_index[:, 0]
    vv = norm_cloud.pixel_index[:, 1]
    if len(norm_cloud):
        if uu.min() < 0 or uu.max() >= width or vv.min() < 0 or vv.max() >= height:
            raise ValidationError("pixel provenance outside the target grid")
    z = norm_cloud.points[:, 2]
    if z.size and (np.abs(z) > 1.0).any():
        raise ValidationError("normalized z outside [-1, 1]; cloud is not normalized")
    flat = vv * width + uu
    uniq, counts = np.unique(flat, return_counts=True)
    if (counts > 1).any():
        dup = int(uniq[counts > 1][0])
        raise ValidationError(
            f"duplicate pixel provenance at (u={dup % width}, v={dup // width})"
        )
    values = np.zeros((height, width), dtype=np.float32)
    mask = np.zeros((height, width), dtype=bool)
    values[vv, uu] = z.astype(np.float32)
    mask[vv, uu] = True
    return INodMap(values=values, mask=mask)


def _offset_slices(shape: tuple, dv: int, du: int):
    """Target/source slice pairs for reading the neighbor at offset (dv, du)."""
    h, w = shape
    tr = slice(max(0, -dv), h - max(0, dv))
    tc = slice(max(0, -du), w - max(0, du))
    sr = slice(tr.start + dv, tr.stop + dv)
    sc = slice(tc.start + du, tc.stop + du)
    return (tr, tc), (sr, sc)


def dilate_foreground(inod: INodMap, radius: int) -> INodMap:
    """Grow the foreground outward, copying values from the nearest source pixel.

    Each added background pixel takes the value of its nearest foreground
    pixel under the Chebyshev metric; ties break toward the foreground pixel
    earliest in row-major order.  Added pixels are flagged in
    ``dilated_mask``; the original mask is untouched.
    """
    if radius < 0:
        raise ValidationError(f"dilation radius must be >= 0, got {radius}")
    src_fg = inod.foreground
    values = inod.values.copy()
    filled = src_fg.copy()
    added = np.zeros_like(src_fg)
    for d in range(1, radius + 1):
        for dv in range(-d, d + 1):
            for du in range(-d, d + 1):
                if max(abs(dv), abs(du)) != d:
                    continue
                (tr, tc), (sr, sc) = _offset_slices(values.shape, dv, du)
                sel = ~filled[tr, tc] & src_fg[sr, sc]
                if not sel.any():
                    continue
                values[tr, tc][sel] = inod.values[sr, sc][sel]
                filled[tr, tc][sel] = True
                added[tr, tc][sel] = True
    new_dilated = added if inod.dilated_mask is None else (added | inod.dilated_mask)
    return INodMap(values=values, mask=inod.mask.copy(), dilated_mask=new_dilated)


def cutoff(decoded, original_mask: np.ndarray) -> INodMap:
    """Zero out everything outside the original mask.

    ``decoded`` may be an :class:`INodMap` or a raw 2D array, e.g. the noisy
    output of a lossy codec; values inside the mask pass through unchanged.
    """
    vals = decoded.values if isinstance(decoded, INodMap) else np.asarray(decoded, dtype=np.float32)
    original_mask = np.asarray(original_mask, dtype=bool)
    if vals.ndim != 2 or original_mask.shape != vals.shape:
        raise ValidationError(
            f"mask shape {original_mask.shape} does not match map shape {vals.shape}"
        )
    out = np.where(original_mask, vals, np.float32(0.0)).astype(np.float32)
    return INodMap(values=out, mask=original_mask.copy())


def unproject_orthographic(inod: INodMap) -> PointCloud:
    """Recover the normalized 3D shape from a map alone; no intrinsics.

    Only the original mask contributes points (dilation-added pixels are
    codec armor, not geometry).  Pixel u maps to
    ``x = (u + 0.5) / W * 2*s_x - s_x`` with ``s_x = W * kappa / 2`` and
    ``kappa = 1 / max(footprint spans)`` normalized units per pixel, and
    analogously for y.  z passes through untouched.
    """
    vv, uu = np.nonzero(inod.mask)
    if len(vv) == 0:
        return PointCloud(points=np.zeros((0, 3)), pixel_index=np.zeros((0, 2), dtype=np.int64))
    span = max(int(uu.max() - uu.min()), int(vv.max() - vv.min()))
    kappa = 1.0 / span if span > 0 else 0.0
    x = (uu + 0.5 - inod.width / 2.0) * kappa
    y = (vv + 0.5 - inod.height / 2.0) * kappa
    z = inod.values[vv, uu].astype(np.float64)
    return PointCloud(points=np.column_stack([x, y, z]), pixel_index=np.column_stack([uu, vv]))


def encode(depth: DepthMap, k: IntrinsicsMatrix, dilate_radius: int = 0):
    """Full creation path: unproject, normalize, project, optionally dilate.

    Returns (map, record); the record is only needed to restore metric scale.
    """
    cloud = unproject(depth, k)
    normalized, record = isotropic_normalize(cloud)
    inod = project_inod(normalized, depth.width, depth.height)
    if dilate_radius > 0:
        inod = dilate_foreground(inod, dilate_radius)
    return inod, record


def roundtrip_report(depth: DepthMap, k: IntrinsicsMatrix, dilate_radius: int = 0) -> dict:
    """Create a map from depth, recover it, and report the error against the
    normalized source cloud."""
    normalized, _ = isotropic_normalize(unproject(depth, k))
    inod = project_inod(normalized, depth.width, depth.height)
    if dilate_radius > 0:
        inod = cutoff(dilate_foreground(inod, dilate_radius), inod.mask)
    recovered = unproject_orthographic(inod)
    diff = np.abs(recovered.points - normalized.points)
    return {
        "max_error": float(diff.max()),
        "per_axis_max_error": {axis: float(diff[:, i].max()) for i, axis in enumerate("xyz")},
        "num_points": len(recovered),
        "width": depth.width,
        "height": depth.height,
        "dilate_radius": dilate_radius,
    }
