"""Denoiser-agnostic reverse sampling over the modality stack.

The sampler walks a strictly decreasing noise schedule with the first-order
deterministic update, written in lerp form

    x_next = D + (sigma_next / sigma) * (x - D)

which is algebraically the standard step ``x + (sigma_next - sigma) *
(x - D) / sigma`` but lands on D exactly when sigma_next is 0 and leaves x
bit-untouched for an identity denoiser.  Modalities flagged clear are never
updated; their latents stay bit-identical to the initial values.  Conditions
are re-assembled from the current latents every step, with switch bits taken
from the clear flags.

A deterministic mock codec (8x8 block mean + bilinear upsample) stands in
for a learned autoencoder so boundary-artifact experiments run at desk
scale, and :func:`drop_to_zero` implements the zero-tensor condition
ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericsError, ValidationError
from .latents import (
    GLOBAL_SLICE,
    ILLUM_SLICE,
    LATENT_CHANNELS,
    MODALITY_COUNT,
    NOISY_SLICE,
    STACK_CHANNELS,
    ModalityId,
    ModalityTypeTable,
    assemble,
    stack_modalities,
)

# A denoiser maps (full stack (M, H, W, 84), sigma) -> estimates (M, H, W, 16).
DenoiserPlugin = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing noise levels ending in exactly 0."""

    sigmas: np.ndarray

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "sigmas", sig)
        if len(sig) < 2:
            raise ValidationError(f"schedule needs at least 2 levels, got {len(sig)}")
        if sig[-1] != 0.0:
            raise ValidationError(f"schedule must end at 0, got {sig[-1]}")
        if (np.diff(sig) >= 0).any():
            raise ValidationError("schedule must be strictly decreasing")
        if (sig[:-1] <= 0).any():
            raise ValidationError("all levels before the final 0 must be positive")

    def __len__(self) -> int:
        return len(self.sigmas)

    @property
    def initial_sigma(self) -> float:
        return float(self.sigmas[0])

    @classmethod
    def karras(cls, steps: int = 35, sigma_min: float = 0.002,
               sigma_max: float = 80.0, rho: float = 7.0) -> "NoiseSchedule":
        """Power-law spacing between sigma_max and sigma_min, then 0."""
        if steps < 1:
            raise ValidationError(f"steps must be >= 1, got {steps}")
        if steps == 1:
            levels = np.array([sigma_max])
        else:
            t = np.arange(steps) / (steps - 1)
            levels = (sigma_max ** (1 / rho) + t * (sigma_min ** (1 / rho) - sigma_max ** (1 / rho))) ** rho
        return cls(sigmas=np.append(levels, 0.0))

    def to_list(self) -> list:
        return [float(s) for s in self.sigmas]

    @classmethod
    def from_list(cls, values) -> "NoiseSchedule":
        return cls(sigmas=np.asarray(values, dtype=np.float64))


def seeded_noise(seed: int, modality: ModalityId, shape: tuple) -> np.ndarray:
    """Standard-normal noise from a counter-based generator keyed by
    (seed, modality), reproducible regardless of evaluation order."""
    key = np.array([np.uint64(seed), np.uint64(int(modality))], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal(shape, dtype=np.float32)


@dataclass
class ConditionSet:
    """Static conditioning shared by every sampling step."""

    global_cond: Optional[np.ndarray] = None
    illumination: Optional[np.ndarray] = None
    table: ModalityTypeTable = None

    def __post_init__(self):
        if self.table is None:
            self.table = ModalityTypeTable.default()


@dataclass
class SamplerState:
    """Snapshot handed to the per-step callback."""

    latents: np.ndarray
    clear_flags: np.ndarray
    step: int


def build_stack(latents: np.ndarray, clear_flags: np.ndarray,
                conditions: ConditionSet) -> np.ndarray:
    """Assemble the full (M, H, W, 84) stack for the current latents."""
    slices = []
    for m in ModalityId:
        slices.append((m, assemble(
            noisy=latents[int(m)],
            global_cond=conditions.global_cond,
            illum=conditions.illumination if m == ModalityId.RELIT else None,
            modality=m,
            switch=int(clear_flags[int(m)]),
            table=conditions.table,
        )))
    return stack_modalities(slices)


def initial_latents(shape_hw: tuple, schedule: NoiseSchedule, seed: int,
                    clear_latents: Optional[dict] = None) -> np.ndarray:
    """Starting latents: clear modalities from ``clear_latents``, the rest
    sigma_0-scaled seeded noise."""
    h, w = shape_hw
    clear_latents = clear_latents or {}
    out = np.empty((MODALITY_COUNT, h, w, LATENT_CHANNELS), dtype=np.float32)
    sigma0 = np.float32(schedule.initial_sigma)
    for m in ModalityId:
        if m in clear_latents:
            lat = np.asarray(clear_latents[m], dtype=np.float32)
            if lat.shape != (h, w, LATENT_CHANNELS):
                raise ValidationError(
                    f"clear latent for {m.name} has shape {lat.shape}, expected {(h, w, LATENT_CHANNELS)}"
                )
            out[int(m)] = lat
        else:
            out[int(m)] = seeded_noise(seed, m, (h, w, LATENT_CHANNELS)) * sigma0
    return out


def sample(initial: np.ndarray, clear_flags, conditions: ConditionSet,
           schedule: NoiseSchedule, denoiser: DenoiserPlugin,
           on_step=None) -> np.ndarray:
    """Run the reverse schedule, updating only the non-clear modalities.

    ``initial`` is (M, H, W, 16): clean latents for clear modalities,
    sigma_0-scaled noise for the rest.  Raises on non-finite denoiser output,
    naming the step.
    """
    initial = np.asarray(initial, dtype=np.float32)
    if initial.ndim != 4 or initial.shape[0] != MODALITY_COUNT or initial.shape[3] != LATENT_CHANNELS:
        raise ValidationError(f"initial latents must be (M, H, W, 16), got {initial.shape}")
    if not np.isfinite(initial).all():
        raise ValidationError("initial latents contain non-finite values")
    clear_flags = np.asarray(clear_flags, dtype=bool).reshape(-1)
    if clear_flags.shape != (MODALITY_COUNT,):
        raise ValidationError(f"clear flags must have {MODALITY_COUNT} entries")
    x = initial.copy()
    noisy_rows = np.nonzero(~clear_flags)[0]
    sigmas = schedule.sigmas
    for i in range(len(sigmas) - 1):
        stack = build_stack(x, clear_flags, conditions)
        estimate = np.asarray(denoiser(stack, float(sigmas[i])), dtype=np.float32)
        if estimate.shape != x.shape:
            raise ValidationError(
                f"denoiser returned shape {estimate.shape}, expected {x.shape}"
            )
        if not np.isfinite(estimate).all():
            raise NumericsError(f"denoiser output non-finite at step {i} (sigma={sigmas[i]:g})")
        ratio = np.float32(sigmas[i + 1] / sigmas[i])
        for m in noisy_rows:
            x[m] = estimate[m] + ratio * (x[m] - estimate[m])
        if on_step is not None:
            on_step(SamplerState(latents=x.copy(), clear_flags=clear_flags.copy(), step=i + 1))
    return x


_BLOCK_NAMES = {
    "latent": NOISY_SLICE,
    "geometry-latents": NOISY_SLICE,  # ablation spelling for the latent block
    "global": GLOBAL_SLICE,
    "illumination": ILLUM_SLICE,
}


def drop_to_zero(stack_slice: np.ndarray, blocks) -> np.ndarray:
    """Overwrite named channel blocks of a slice with exact zeros.

    Valid names: ``latent`` (alias ``geometry-latents``), ``global``,
    ``illumination``.  Everything else is untouched; an empty block set is
    the identity.
    """
    stack_slice = np.asarray(stack_slice)
    if stack_slice.shape[-1] != STACK_CHANNELS:
        raise ValidationError(f"expected {STACK_CHANNELS} channels, got {stack_slice.shape[-1]}")
    out = stack_slice.copy()
    for name in blocks:
        key = str(name).lower()
        if key not in _BLOCK_NAMES:
            raise ValidationError(
                f"unknown block {name!r}; choose from {sorted(set(_BLOCK_NAMES) - {'geometry-latents'})}"
            )
        out[..., _BLOCK_NAMES[key]] = 0.0
    return out


def _bilinear_axis(blocks: np.ndarray, factor: int, axis: int) -> np.ndarray:
    n = blocks.shape[axis]
    pos = (np.arange(n * factor) + 0.5) / factor - 0.5
    i0f = np.floor(pos)
    t = pos - i0f
    i0 = np.clip(i0f, 0, n - 1).astype(np.int64)
    i1 = np.clip(i0f + 1, 0, n - 1).astype(np.int64)
    a = np.take(blocks, i0, axis=axis)
    b = np.take(blocks, i1, axis=axis)
    shape = [1] * blocks.ndim
    shape[axis] = len(pos)
    t = t.reshape(shape)
    return a * (1.0 - t) + b * t


def mock_vae_roundtrip(image: np.ndarray, factor: int = 8) -> np.ndarray:
    """Lossy stand-in codec: block-mean downsample then bilinear upsample.

    Deterministic, shape-preserving, and range-contracting (outputs are
    convex combinations of block means), with the same sharp-boundary
    failure mode as a learned autoencoder: hard silhouette edges smear into
    the background.
    """
    arr = np.asarray(image)
    if arr.ndim not in (2, 3):
        raise ValidationError(f"expected (H, W) or (H, W, C), got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h % factor or w % factor:
        raise ValidationError(f"dimensions {h}x{w} not divisible by {factor}")
    work = arr.astype(np.float64)
    if work.ndim == 2:
        blocks = work.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    else:
        blocks = work.reshape(h // factor, factor, w // factor, factor, -1).mean(axis=(1, 3))
    up = _bilinear_axis(_bilinear_axis(blocks, factor, 0), factor, 1)
    return up.astype(arr.dtype) if np.issubdtype(arr.dtype, np.floating) else up


def identity_denoiser(stack: np.ndarray, sigma: float) -> np.ndarray:
    """D(x; sigma) = x; the update rule then never moves the latents."""
    return stack[..., NOISY_SLICE]


def zero_denoiser(stack: np.ndarray, sigma: float) -> np.ndarray:
    return np.zeros_like(stack[..., NOISY_SLICE])


def constant_denoiser(target: np.ndarray) -> DenoiserPlugin:
    """Oracle denoiser that always predicts ``target`` (M, H, W, 16)."""
    target = np.asarray(target, dtype=np.float32)

    def _denoise(stack: np.ndarray, sigma: float) -> np.ndarray:
        return np.broadcast_to(target, stack.shape[:-1] + (LATENT_CHANNELS,)).copy()

    return _denoise


def blur_denoiser(weight: float = 0.5) -> DenoiserPlugin:
    """Deterministic non-trivial plugin: lerp toward the spatial mean."""

    def _denoise(stack: np.ndarray, sigma: float) -> np.ndarray:
        lat = stack[..., NOISY_SLICE]
        mean = lat.mean(axis=(1, 2), keepdims=True)
        return (1.0 - weight) * lat + weight * mean

    return _denoise
