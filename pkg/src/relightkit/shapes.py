"""Procedural depth maps and silhouettes for tests and benchmarks.

Depth scenes come as (DepthMap, IntrinsicsMatrix) pairs describing a height
field viewed by a pinhole camera.  By default the camera stands far back
with a proportionally long focal length (``standoff`` many multiples of the
subject size), which keeps the pixel grid an essentially uniform sampling of
lateral world coordinates; that regime is what makes the orthographic
recovery of the depth codec exact to floating-point accuracy.  Every scene's
foreground bounding box is centered on the pixel grid, and the subject's
longest bounding-box edge is lateral, matching the codec's footprint-derived
scale rule.

Silhouette maps are ready-made normalized orthographic depth maps whose
values stay well away from the background sentinel 0, so boundary smearing
by a lossy codec is measurable.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .inod import DepthMap, INodMap, IntrinsicsMatrix

DEFAULT_STANDOFF_FACTOR = 1e7


def _sym_grid(size: int):
    """Coordinates relative to the grid center (half-integers for even size)."""
    c = (size - 1) / 2.0
    dv, du = np.meshgrid(np.arange(size) - c, np.arange(size) - c, indexing="ij")
    return du, dv


def _center_footprint(mask: np.ndarray, height_field: np.ndarray):
    """Nudge and roll a silhouette so its bounding box centers on the grid.

    When a span's parity disagrees with the grid's, the far edge row/column
    is duplicated one pixel outward first.  Foreground must keep a margin of
    at least two pixels from the image border.
    """
    h, w = mask.shape
    mask = mask.copy()
    height_field = height_field.copy()
    vv, uu = np.nonzero(mask)
    if len(vv) == 0:
        raise ValidationError("empty silhouette")
    u0, u1 = int(uu.min()), int(uu.max())
    v0, v1 = int(vv.min()), int(vv.max())
    if (u1 - u0) % 2 != (w - 1) % 2:
        grow = mask[:, u1]
        mask[:, u1 + 1] |= grow
        height_field[grow, u1 + 1] = height_field[grow, u1]
        u1 += 1
    if (v1 - v0) % 2 != (h - 1) % 2:
        grow = mask[v1, :]
        mask[v1 + 1, :] |= grow
        height_field[v1 + 1, grow] = height_field[v1, grow]
        v1 += 1
    shift_u = ((w - 1) - (u0 + u1)) // 2
    shift_v = ((h - 1) - (v0 + v1)) // 2
    if u0 + shift_u < 1 or u1 + shift_u > w - 2 or v0 + shift_v < 1 or v1 + shift_v > h - 2:
        raise ValidationError("silhouette too close to the image border to center")
    mask = np.roll(mask, (shift_v, shift_u), axis=(0, 1))
    height_field = np.roll(height_field, (shift_v, shift_u), axis=(0, 1))
    return mask, height_field


def height_field_scene(height_field: np.ndarray, mask: np.ndarray,
                       units_per_px: float, standoff: float,
                       cx: float = None, cy: float = None,
                       quantize: float = 0.0):
    """Wrap a world-units height field as a depth map plus intrinsics.

    depth = standoff + height_field; the focal length standoff/units_per_px
    makes one pixel span ``units_per_px`` world units at the standoff plane.
    ``quantize`` > 0 snaps depths to multiples of it (useful when products
    with small integers must stay exact).
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    mask_c, hf = _center_footprint(mask, np.asarray(height_field, dtype=np.float64))
    depth = np.where(mask_c, standoff + hf, 0.0)
    if quantize > 0:
        depth = np.round(depth / quantize) * quantize
    k = IntrinsicsMatrix(
        fx=standoff / units_per_px,
        fy=standoff / units_per_px,
        cx=(w - 1) / 2.0 if cx is None else cx,
        cy=(h - 1) / 2.0 if cy is None else cy,
    )
    return DepthMap(values=depth, mask=mask_c), k


def sphere_scene(size: int = 128, radius_px: int = 40, depth_to_height: float = 0.5,
                 units_per_px: float = None, standoff: float = None, **kwargs):
    """Spherical-cap bump; depth extent = depth_to_height * vertical extent."""
    if not 0 < depth_to_height <= 1.0:
        raise ValidationError("sphere scenes support depth_to_height in (0, 1]")
    du, dv = _sym_grid(size)
    rho2 = (du ** 2 + dv ** 2) / radius_px ** 2
    mask = rho2 <= 1.0
    eta = units_per_px if units_per_px is not None else 2.0 / size
    amplitude = depth_to_height * 2.0 * radius_px * eta
    hf = np.where(mask, amplitude * (1.0 - np.sqrt(np.clip(1.0 - rho2, 0.0, None))), 0.0)
    if standoff is None:
        standoff = DEFAULT_STANDOFF_FACTOR * 2.0 * radius_px * eta
    return height_field_scene(hf, mask, eta, standoff, **kwargs)


def ramp_scene(size: int = 128, half_width_px: int = 48, half_height_px: int = 14,
               depth_to_height: float = 3.0, units_per_px: float = None,
               standoff: float = None, **kwargs):
    """Rectangular slab with a linear depth ramp along its width.

    The width is kept at least as large as the depth extent so the lateral
    footprint stays the longest bounding-box edge.
    """
    du, dv = _sym_grid(size)
    mask = (np.abs(du) <= half_width_px) & (np.abs(dv) <= half_height_px)
    eta = units_per_px if units_per_px is not None else 2.0 / size
    amplitude = depth_to_height * 2.0 * half_height_px * eta
    width = 2.0 * half_width_px * eta
    if amplitude > width:
        raise ValidationError(
            f"depth extent {amplitude:.3g} exceeds width {width:.3g}; widen the slab"
        )
    hf = np.where(mask, (du / half_width_px + 1.0) / 2.0 * amplitude, 0.0)
    if standoff is None:
        standoff = DEFAULT_STANDOFF_FACTOR * max(width, 2.0 * half_height_px * eta)
    return height_field_scene(hf, mask, eta, standoff, **kwargs)


def capsule_stack_scene(size: int = 128, half_span_px: int = 52, head_radius_px: int = 10,
                        torso_half_width_px: int = 18, depth_to_height: float = 0.1,
                        units_per_px: float = None, standoff: float = None, **kwargs):
    """Head-torso-legs silhouette with a shallow dome profile per pixel."""
    du, dv = _sym_grid(size)
    top = -half_span_px
    head_c = top + head_radius_px
    head = (du ** 2 + (dv - head_c) ** 2) <= head_radius_px ** 2
    torso_top = head_c + head_radius_px * 0.6
    torso_bottom = torso_top + half_span_px * 0.85
    torso = (np.abs(du) <= torso_half_width_px) & (dv >= torso_top) & (dv <= torso_bottom)
    leg_gap = max(2, torso_half_width_px // 4)
    legs = ((np.abs(du) >= leg_gap) & (np.abs(du) <= torso_half_width_px)
            & (dv > torso_bottom) & (dv <= half_span_px))
    mask = head | torso | legs
    eta = units_per_px if units_per_px is not None else 2.0 / size
    vv = np.nonzero(mask.any(axis=1))[0]
    v_extent = float(vv.max() - vv.min()) * eta
    amplitude = depth_to_height * v_extent
    lateral = (du ** 2 / max(torso_half_width_px, head_radius_px) ** 2)
    hf = np.where(mask, amplitude * (1.0 - np.clip(lateral, 0.0, 1.0)), 0.0)
    if standoff is None:
        standoff = DEFAULT_STANDOFF_FACTOR * v_extent
    return height_field_scene(hf, mask, eta, standoff, **kwargs)


def dome_scene(size: int = 128, half_width_px: int = 24, half_height_px: int = 40,
               depth_to_height: float = 1.0, units_per_px: float = None,
               standoff: float = None, **kwargs):
    """Elliptical dome whose depth extent equals ``ratio`` times its height."""
    du, dv = _sym_grid(size)
    rho2 = du ** 2 / half_width_px ** 2 + dv ** 2 / half_height_px ** 2
    mask = rho2 <= 1.0
    eta = units_per_px if units_per_px is not None else 2.0 / size
    longest_lateral = 2.0 * max(half_width_px, half_height_px) * eta
    amplitude = depth_to_height * 2.0 * half_height_px * eta
    if amplitude > longest_lateral:
        raise ValidationError("dome depth extent exceeds its lateral size")
    hf = np.where(mask, amplitude * (1.0 - np.sqrt(np.clip(1.0 - rho2, 0.0, None))), 0.0)
    if standoff is None:
        standoff = DEFAULT_STANDOFF_FACTOR * longest_lateral
    return height_field_scene(hf, mask, eta, standoff, **kwargs)


def depth_to_height_scene(ratio: float, size: int = 128, **kwargs):
    """A scene whose subject has the requested depth-to-height ratio."""
    if ratio <= 0.3:
        return capsule_stack_scene(size=size, depth_to_height=ratio, **kwargs)
    if ratio <= 1.0:
        return dome_scene(size=size, depth_to_height=ratio, **kwargs)
    return ramp_scene(size=size, depth_to_height=ratio,
                      half_width_px=int(14 * ratio) + 8, half_height_px=14, **kwargs)


def roundtrip_corpus(n: int = 50, size: int = 128, seed: int = 0, **kwargs):
    """Mix of spheres, slabs and capsule stacks for round-trip testing."""
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(n):
        kind = i % 3
        if kind == 0:
            name = f"sphere_{i:03d}"
            scene = sphere_scene(size=size, radius_px=int(rng.integers(24, 52)),
                                 depth_to_height=float(rng.uniform(0.2, 1.0)), **kwargs)
        elif kind == 1:
            b = int(rng.integers(10, 22))
            ratio = float(rng.uniform(0.3, 3.0))
            a = max(int(np.ceil(ratio * b)) + 4, int(rng.integers(24, 50)))
            a = min(a, size // 2 - 8)
            ratio = min(ratio, (2.0 * a) / (2.0 * b) * 0.95)
            name = f"slab_{i:03d}"
            scene = ramp_scene(size=size, half_width_px=a, half_height_px=b,
                               depth_to_height=ratio, **kwargs)
        else:
            name = f"figure_{i:03d}"
            scene = capsule_stack_scene(size=size,
                                        half_span_px=int(rng.integers(44, 56)),
                                        head_radius_px=int(rng.integers(7, 12)),
                                        torso_half_width_px=int(rng.integers(14, 22)),
                                        depth_to_height=float(rng.uniform(0.08, 0.15)),
                                        **kwargs)
        corpus.append((name, *scene))
    return corpus


def _profile_values(mask: np.ndarray, profile: np.ndarray, sign: float,
                    low: float = 0.15, high: float = 0.8) -> np.ndarray:
    """Rescale a raw profile into a band bounded away from the 0 sentinel."""
    vals = np.zeros(mask.shape, dtype=np.float32)
    p = profile[mask]
    lo, hi = float(p.min()), float(p.max())
    span = hi - lo
    unit = (p - lo) / span if span > 0 else np.zeros_like(p)
    vals[mask] = np.float32(sign) * (low + (high - low) * unit).astype(np.float32)
    return vals


def silhouette_corpus(n: int = 20, size: int = 128, seed: int = 0):
    """Normalized-orthographic-depth maps of assorted silhouettes.

    Values stay in +/-[0.15, 0.8] so the contrast with background 0 is what a
    lossy codec smears at the boundary.
    """
    rng = np.random.default_rng(seed)
    du, dv = _sym_grid(size)
    corpus = []
    for i in range(n):
        kind = i % 5
        margin = size // 2 - 6
        if kind == 0:
            r = rng.integers(18, margin - 4)
            mask = du ** 2 + dv ** 2 <= r ** 2
            name = f"disk_{i:03d}"
        elif kind == 1:
            a = rng.integers(16, margin - 4)
            b = rng.integers(16, margin - 4)
            mask = du ** 2 / a ** 2 + dv ** 2 / b ** 2 <= 1.0
            name = f"ellipse_{i:03d}"
        elif kind == 2:
            a = rng.integers(14, margin - 10)
            b = rng.integers(20, margin - 4)
            r = min(a, b) * 0.6
            core = (np.maximum(np.abs(du) - (a - r), 0) ** 2
                    + np.maximum(np.abs(dv) - (b - r), 0) ** 2)
            mask = core <= r ** 2
            name = f"roundedrect_{i:03d}"
        elif kind == 3:
            half = rng.integers(18, margin - 8)
            r = rng.integers(10, 16)
            seg = np.abs(dv) <= half
            cap = du ** 2 + (np.abs(dv) - half) ** 2 <= r ** 2
            mask = ((np.abs(du) <= r) & seg) | cap
            name = f"capsule_{i:03d}"
        else:
            r1 = rng.integers(14, 22)
            r2 = rng.integers(14, 22)
            off = rng.integers(10, 20)
            mask = (((du + off) ** 2 + (dv + off // 2) ** 2 <= r1 ** 2)
                    | ((du - off) ** 2 + (dv - off // 2) ** 2 <= r2 ** 2))
            name = f"blob_{i:03d}"
        sign = 1.0 if rng.random() < 0.5 else -1.0
        style = int(rng.integers(3))
        if style == 0:
            profile = np.zeros_like(du)
        elif style == 1:
            gx, gy = rng.uniform(-1, 1, size=2)
            profile = gx * du + gy * dv
        else:
            profile = -np.sqrt(np.clip(1.0 - (du ** 2 + dv ** 2) / margin ** 2, 0.0, None))
        values = _profile_values(mask, profile, sign)
        corpus.append((name, INodMap(values=values, mask=mask)))
    return corpus
