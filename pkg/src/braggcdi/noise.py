"""Poisson photon-noise protocol.

The intensity is rescaled so its brightest voxel equals the photon budget,
then every voxel (the brightest one included) gets an independent Poisson
draw. Sampling is counter-based per z-slice: each slice uses its own
Philox stream keyed by (seed, slice index), so the result is independent
of the order in which slices are evaluated.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .forward import IntensityVolume


class NoiseContractError(ValueError):
    """Input intensity violates the non-negativity contract."""


class NoiseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    max_photons: float = Field(default=1e11, gt=0.0)
    rng_seed: int = 0


def apply_poisson(intensity: IntensityVolume, spec: NoiseSpec) -> IntensityVolume:
    """Photon-count realization of the intensity; identity when disabled."""
    if np.any(intensity.data < 0):
        raise NoiseContractError("intensity must be non-negative")
    if not spec.enabled:
        return IntensityVolume(
            data=intensity.data.copy(),
            grid=intensity.grid,
            photon_scale=intensity.photon_scale,
        )
    peak = intensity.data.max()
    if peak <= 0:
        raise NoiseContractError("cannot scale an all-zero intensity to a photon budget")
    scale = spec.max_photons / peak
    lam = intensity.data * scale
    counts = np.empty_like(lam)
    for k in range(lam.shape[2]):
        counts[:, :, k] = _slice_counts(lam[:, :, k], spec.rng_seed, k)
    return IntensityVolume(data=counts, grid=intensity.grid, photon_scale=scale)


def _slice_counts(lam_slice: np.ndarray, seed: int, index: int) -> np.ndarray:
    key = np.array([seed % (1 << 64), index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.poisson(lam_slice).astype(float)
