"""Per-modality conditioned input stacks for a multi-modal denoiser.

Five target modalities ride the repurposed temporal axis of a video latent
model.  Every modality slice carries 84 channels at latent resolution:

    [ 0:16]  noisy (or clear) latent of the modality itself
    [16:32]  global image condition, zeros when absent
    [32:80]  illumination condition (three 16-channel latents: tonemapped,
             log-intensity, direction), zeros for everything but the relit
             modality
    [80:83]  modality type embedding row, broadcast spatially
    [83:84]  switch plane: constant 1.0 marks a clear condition, 0.0 a
             generation target

The module also owns the training-mode table that decides which modalities
are clear, which are noisy, and which conditions are dropped to zeros for a
given data source.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .errors import SchedulingError, ValidationError


class ModalityId(IntEnum):
    ALBEDO = 0
    NORMAL = 1
    GEOMETRY = 2
    SEGMENTATION = 3
    RELIT = 4


MODALITY_COUNT = 5
LATENT_CHANNELS = 16
ILLUM_CHANNELS = 48
TYPE_CHANNELS = 3
STACK_CHANNELS = 84

NOISY_SLICE = slice(0, 16)
GLOBAL_SLICE = slice(16, 32)
ILLUM_SLICE = slice(32, 80)
MODAL_SLICE = slice(80, 83)
SWITCH_SLICE = slice(83, 84)

_MODALITY_ALIASES = {
    "a": ModalityId.ALBEDO, "albedo": ModalityId.ALBEDO,
    "n": ModalityId.NORMAL, "normal": ModalityId.NORMAL,
    "g": ModalityId.GEOMETRY, "geometry": ModalityId.GEOMETRY,
    "s": ModalityId.SEGMENTATION, "seg": ModalityId.SEGMENTATION,
    "segmentation": ModalityId.SEGMENTATION,
    "r": ModalityId.RELIT, "relit": ModalityId.RELIT,
}


def parse_modalities(spec: str) -> frozenset:
    """Parse a comma-separated modality list like ``a,n,g,s``."""
    out = set()
    for token in spec.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in _MODALITY_ALIASES:
            raise ValidationError(f"unknown modality {token!r}")
        out.add(_MODALITY_ALIASES[token])
    return frozenset(out)


class Dataset(str, Enum):
    SYNTH = "synth"
    DOME = "dome"
    ITW = "itw"


@dataclass(frozen=True)
class ModalityTypeTable:
    """Fixed per-modality embedding rows (replaceable by a learned table)."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        object.__setattr__(self, "rows", rows)
        if rows.shape != (MODALITY_COUNT, TYPE_CHANNELS):
            raise ValidationError(
                f"type table must be {MODALITY_COUNT}x{TYPE_CHANNELS}, got {rows.shape}"
            )
        for i in range(MODALITY_COUNT):
            for j in range(i + 1, MODALITY_COUNT):
                if np.array_equal(rows[i], rows[j]):
                    raise ValidationError(f"type table rows {i} and {j} coincide")

    @classmethod
    def default(cls) -> "ModalityTypeTable":
        return cls(rows=np.array(
            [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [0, 1, 1]],
            dtype=np.float32,
        ))


def _check_spatial(name: str, arr: np.ndarray, channels: int, hw: tuple) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != channels:
        raise ValidationError(f"{name} must be (H, W, {channels}), got shape {arr.shape}")
    if arr.shape[:2] != hw:
        raise ValidationError(
            f"{name} spatial dims {arr.shape[:2]} disagree with noisy latent dims {hw}"
        )
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def assemble(noisy: np.ndarray, global_cond, illum, modality: ModalityId,
             switch: int, table: ModalityTypeTable) -> np.ndarray:
    """Build one modality's 84-channel slice.

    Absent conditions (``None``) become exact zeros, indistinguishable from a
    deliberately dropped condition.  Illumination may only accompany the
    relit modality; the other four always carry a zero placeholder.
    """
    noisy = np.asarray(noisy, dtype=np.float32)
    if noisy.ndim != 3 or noisy.shape[2] != LATENT_CHANNELS:
        raise ValidationError(f"noisy latent must be (H, W, {LATENT_CHANNELS}), got {noisy.shape}")
    if not np.isfinite(noisy).all():
        raise ValidationError("noisy latent contains non-finite values")
    hw = noisy.shape[:2]
    if switch not in (0, 1):
        raise ValidationError(f"switch must be 0 or 1, got {switch!r}")
    modality = ModalityId(modality)
    if illum is not None and modality != ModalityId.RELIT:
        raise ValidationError(
            f"illumination only attaches to the relit modality, not {modality.name}"
        )
    out = np.zeros((hw[0], hw[1], STACK_CHANNELS), dtype=np.float32)
    out[:, :, NOISY_SLICE] = noisy
    if global_cond is not None:
        out[:, :, GLOBAL_SLICE] = _check_spatial("global condition", global_cond,
                                                 LATENT_CHANNELS, hw)
    if illum is not None:
        out[:, :, ILLUM_SLICE] = _check_spatial("illumination condition", illum,
                                                ILLUM_CHANNELS, hw)
    out[:, :, MODAL_SLICE] = table.rows[int(modality)]
    out[:, :, SWITCH_SLICE] = np.float32(switch)
    return out


def stack_modalities(slices) -> np.ndarray:
    """Stack five (modality, slice) pairs along a leading modality axis.

    Pairs must arrive in ordinal order; missing, duplicate or permuted
    modalities are rejected.  Data is not modified.
    """
    slices = list(slices)
    if len(slices) != MODALITY_COUNT:
        raise ValidationError(f"expected {MODALITY_COUNT} slices, got {len(slices)}")
    arrays = []
    for expected, (modality, arr) in zip(ModalityId, slices):
        if ModalityId(modality) != expected:
            raise ValidationError(
                f"slice {int(expected)} must be {expected.name}, got {ModalityId(modality).name}"
            )
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != STACK_CHANNELS:
            raise ValidationError(f"{expected.name} slice has shape {arr.shape}")
        if arrays and arr.shape != arrays[0].shape:
            raise ValidationError("slices disagree on spatial dimensions")
        arrays.append(arr)
    return np.stack(arrays, axis=0)


def split_stack(stack: np.ndarray) -> list:
    """Inverse of :func:`stack_modalities`; returns (modality, slice) pairs."""
    stack = np.asarray(stack)
    if stack.ndim != 4 or stack.shape[0] != MODALITY_COUNT or stack.shape[3] != STACK_CHANNELS:
        raise ValidationError(f"stack has shape {stack.shape}")
    return [(m, stack[int(m)]) for m in ModalityId]


def apply_rope_2d(features: np.ndarray, positions: np.ndarray,
                  base: float = 10000.0) -> np.ndarray:
    """Rotate feature pairs by position-dependent angles (2D rotary encoding).

    The first half of the feature dimension rotates on x, the second half on
    y; within each half, pair i turns by ``pos * base**(-2i / (D/2))``.  The
    per-pair norm is preserved exactly (rotations are isometries), and the
    output depends on spatial position only; no modality index enters.
    """
    features = np.asarray(features, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError(f"features must be (N, D), got shape {features.shape}")
    n, dim = features.shape
    if dim % 4 != 0:
        raise ValidationError(f"feature dimension must be divisible by 4, got {dim}")
    if positions.shape != (n, 2):
        raise ValidationError(f"positions must be (N, 2), got shape {positions.shape}")
    half = dim // 2
    pairs = half // 2
    freqs = base ** (-2.0 * np.arange(pairs) / half)
    out = np.empty_like(features)
    for axis, start in ((0, 0), (1, half)):
        ang = positions[:, axis:axis + 1] * freqs[None, :]
        cos, sin = np.cos(ang), np.sin(ang)
        even = features[:, start:start + half:2]
        odd = features[:, start + 1:start + half:2]
        out[:, start:start + half:2] = even * cos - odd * sin
        out[:, start + 1:start + half:2] = even * sin + odd * cos
    return out


@dataclass(frozen=True)
class TrainingModeSpec:
    """One row of the mixed-data training table."""

    name: str
    clear_set: frozenset
    noisy_set: frozenset
    use_global_image: bool
    use_illumination: bool
    allowed_datasets: frozenset

    def __post_init__(self):
        all_m = frozenset(ModalityId)
        if self.clear_set & self.noisy_set:
            raise ValidationError(f"mode {self.name}: clear and noisy sets overlap")
        if (self.clear_set | self.noisy_set) != all_m:
            raise ValidationError(f"mode {self.name}: clear and noisy sets do not cover all modalities")

    def switch_bits(self) -> np.ndarray:
        """Per-modality switch values in ordinal order (1 = clear)."""
        return np.array([1.0 if m in self.clear_set else 0.0 for m in ModalityId],
                        dtype=np.float32)

    def to_dict(self) -> dict:
        return {
            "mode": self.name,
            "clear_latent": sorted(m.name.lower() for m in self.clear_set),
            "noisy_latent": sorted(m.name.lower() for m in self.noisy_set),
            "global_condition": ([*(["image"] if self.use_global_image else []),
                                  *(["illumination"] if self.use_illumination else [])]),
            "dataset": sorted(d.value for d in self.allowed_datasets),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingModeSpec":
        try:
            conds = set(d["global_condition"])
            return cls(
                name=str(d["mode"]),
                clear_set=frozenset(ModalityId[m.upper()] for m in d["clear_latent"]),
                noisy_set=frozenset(ModalityId[m.upper()] for m in d["noisy_latent"]),
                use_global_image="image" in conds,
                use_illumination="illumination" in conds,
                allowed_datasets=frozenset(Dataset(ds) for ds in d["dataset"]),
            )
        except (KeyError, ValueError) as e:
            raise ValidationError(f"malformed training mode JSON: {e}") from None


def _mode(name, clear, use_global_image, use_illumination, datasets):
    clear = frozenset(clear)
    return TrainingModeSpec(
        name=name,
        clear_set=clear,
        noisy_set=frozenset(ModalityId) - clear,
        use_global_image=use_global_image,
        use_illumination=use_illumination,
        allowed_datasets=frozenset(datasets),
    )


_INTRINSICS = (ModalityId.ALBEDO, ModalityId.NORMAL, ModalityId.GEOMETRY,
               ModalityId.SEGMENTATION)

MODE_TABLE = {
    spec.name: spec
    for spec in (
        _mode("Default", (), True, True, (Dataset.SYNTH, Dataset.DOME)),
        _mode("Rendering", _INTRINSICS, False, True, (Dataset.SYNTH, Dataset.DOME)),
        _mode("IntrinsicToRelit", _INTRINSICS, False, False, (Dataset.ITW,)),
        _mode("GeometryToRelit",
              (ModalityId.NORMAL, ModalityId.GEOMETRY, ModalityId.SEGMENTATION),
              False, True, (Dataset.SYNTH, Dataset.DOME)),
        _mode("RelitToGeometry",
              (ModalityId.RELIT, ModalityId.ALBEDO, ModalityId.SEGMENTATION),
              False, False, (Dataset.SYNTH,)),
    )
}

_MODE_LOOKUP = {name.lower(): name for name in MODE_TABLE}


def mode_spec(mode: str) -> TrainingModeSpec:
    """Resolve a mode name (case and separator tolerant) to its table row."""
    key = str(mode).lower().replace("-", "").replace("_", "")
    if key not in _MODE_LOOKUP:
        raise ValidationError(
            f"unknown training mode {mode!r}; choose from {sorted(MODE_TABLE)}"
        )
    return MODE_TABLE[_MODE_LOOKUP[key]]


def dispatch_mode(mode: str, dataset) -> TrainingModeSpec:
    """Return the table row for a mode, rejecting disallowed datasets."""
    spec = mode_spec(mode)
    try:
        dataset = Dataset(str(dataset).lower()) if not isinstance(dataset, Dataset) else dataset
    except ValueError:
        raise ValidationError(f"unknown dataset {dataset!r}") from None
    if dataset not in spec.allowed_datasets:
        raise SchedulingError(
            f"mode {spec.name} is not scheduled on dataset {dataset.value!r}; "
            f"allowed: {sorted(d.value for d in spec.allowed_datasets)}"
        )
    return spec


def replicate_channels(image: np.ndarray) -> np.ndarray:
    """Replicate a single-channel map to three channels (RGB-only encoders)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValidationError(f"expected a single-channel (H, W) map, got shape {image.shape}")
    return np.repeat(image[:, :, None], 3, axis=2)
