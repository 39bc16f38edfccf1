"""Kinematical far-field intensity simulation on the oversampled q-grid.

Two routes are provided: a literal direct-sum evaluation of the
shape + cross + deviation expansion (O(V^2), oracle use only) and an FFT
fast path. Shared DFT conventions, used by every module:

  * forward kernel exp(-i q.r), unnormalized; inverse kernel exp(+i q.r)
    with a 1/V factor;
  * q = 0 sits at array index dims//2 (centered layout);
  * per-axis frequencies q_k = 2*pi*(k - M//2) / (M*a), k = 0..M-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .model import ComplexVolume, CrystalSpec

DEFAULT_ORACLE_CAP = 32  # largest per-axis array size the direct sum accepts


class OracleSizeError(ValueError):
    """Direct-sum evaluation refused: array above the oracle-size cap."""


@dataclass
class QGrid:
    """Centered reciprocal-space grid attached to an oversampled array."""

    dims: tuple[int, int, int]
    pitch: float

    @property
    def dq(self) -> tuple[float, float, float]:
        return tuple(2.0 * np.pi / (m * self.pitch) for m in self.dims)

    def axis_values(self, axis: int) -> np.ndarray:
        m = self.dims[axis]
        return 2.0 * np.pi * (np.arange(m) - m // 2) / (m * self.pitch)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(
            self.axis_values(0),
            self.axis_values(1),
            self.axis_values(2),
            indexing="ij",
        )

    @classmethod
    def for_spec(cls, spec: CrystalSpec) -> "QGrid":
        return cls(dims=spec.array_dims, pitch=spec.lattice_const)


class ForwardConfig(BaseModel):
    """Scale constant and optional per-q interference weight.

    ``shape_term``: 'dirichlet' uses the exact finite lattice sum (the
    default, bit-consistent with the FFT path); 'sinc' uses the continuum
    small-angle approximation for fidelity comparisons.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    intensity_scale: float = Field(default=1.0, gt=0.0)
    shape_term: str = Field(default="dirichlet", pattern="^(dirichlet|sinc)$")
    oracle_cap: int = DEFAULT_ORACLE_CAP
    form_factor: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = (
        None
    )


@dataclass
class IntensityVolume:
    """Non-negative real 3D array on a centered QGrid."""

    data: np.ndarray
    grid: QGrid
    photon_scale: float | None = None


def fft_forward(data: np.ndarray) -> np.ndarray:
    """Forward DFT with exp(-i q.r) kernel, output centered (q=0 at dims//2)."""
    return np.fft.fftshift(np.fft.fftn(data))


def fft_inverse(data_q: np.ndarray) -> np.ndarray:
    """Inverse DFT with exp(+i q.r) kernel and 1/V factor, from centered input."""
    return np.fft.ifftn(np.fft.ifftshift(data_q))


def ideal_lattice_amplitude(qgrid: QGrid, spec: CrystalSpec) -> np.ndarray:
    """Exact finite geometric (Dirichlet) lattice sum S(q), centered layout.

    Per axis: sum_{n=0}^{N-1} exp(-i q a n); at q=0 the product equals
    Nx*Ny*Nz. Cell positions are relative to the crystal-box corner.
    """
    a = spec.lattice_const
    factors = []
    for axis in range(3):
        q = qgrid.axis_values(axis)
        n = spec.n_cells[axis]
        factors.append(_dirichlet_axis(q * a, n))
    return (
        factors[0][:, None, None] * factors[1][None, :, None] * factors[2][None, None, :]
    )


def _dirichlet_axis(qa: np.ndarray, n: int) -> np.ndarray:
    # geometric sum of exp(-i*qa*k), k = 0..n-1, with the q=0 limit handled
    phase = np.exp(-0.5j * qa * (n - 1))
    num = np.sin(0.5 * qa * n)
    den = np.sin(0.5 * qa)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(np.abs(den) > 1e-300, num / den, float(n))
    small = np.abs(den) <= 1e-300
    if np.any(small):
        mag = np.where(small, float(n), mag)
    return phase * mag


def _sinc_shape_axis(qa: np.ndarray, n: int) -> np.ndarray:
    # printed small-angle form: N * sin(qaN/2) / (qaN/2), with its phase factor
    phase = np.exp(-0.5j * qa * (n - 1))
    arg = 0.5 * qa * n
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(np.abs(arg) > 1e-300, np.sin(arg) / arg, 1.0) * n
    return phase * mag


def _shape_amplitude(qgrid: QGrid, spec: CrystalSpec, cfg: ForwardConfig) -> np.ndarray:
    a = spec.lattice_const
    axis_fn = _dirichlet_axis if cfg.shape_term == "dirichlet" else _sinc_shape_axis
    fx = axis_fn(qgrid.axis_values(0) * a, spec.n_cells[0])
    fy = axis_fn(qgrid.axis_values(1) * a, spec.n_cells[1])
    fz = axis_fn(qgrid.axis_values(2) * a, spec.n_cells[2])
    return fx[:, None, None] * fy[None, :, None] * fz[None, None, :]


def simulate_intensity_direct(
    obj: ComplexVolume, spec: CrystalSpec, cfg: ForwardConfig | None = None
) -> IntensityVolume:
    """Literal term-by-term evaluation of the kinematical intensity.

    Shape term |S|^2, the two cross terms with the deviation sum over
    crystal cells where the object departs from 1, and the squared
    deviation term. Oracle use only: cost is O(V) per deviating cell.
    """
    cfg = cfg or ForwardConfig()
    qgrid = QGrid.for_spec(spec)
    m = max(qgrid.dims)
    if m > cfg.oracle_cap:
        raise OracleSizeError(
            f"array size {qgrid.dims} exceeds oracle cap {cfg.oracle_cap}"
        )

    s = _shape_amplitude(qgrid, spec, cfg)
    f_dev = _deviation_sum(obj, spec, qgrid)
    if cfg.form_factor is not None:
        z = cfg.form_factor(*qgrid.meshgrid())
    else:
        z = 1.0
    zf = z * f_dev
    intensity = (
        np.abs(s) ** 2
        + np.conj(s) * zf
        + s * np.conj(zf)
        + np.abs(zf) ** 2
    )
    data = cfg.intensity_scale * intensity.real
    return IntensityVolume(data=data, grid=qgrid)


def _deviation_sum(obj: ComplexVolume, spec: CrystalSpec, qgrid: QGrid) -> np.ndarray:
    """sum_p exp(-i q.R_p) * (o_p - 1) over crystal cells, R_p relative to
    the box corner (brute-force phasor sum)."""
    a = spec.lattice_const
    cells = obj.crop_box()
    dev = cells - 1.0
    px, py, pz = np.nonzero(np.abs(dev) > 0)
    out = np.zeros(qgrid.dims, dtype=complex)
    qx = qgrid.axis_values(0)
    qy = qgrid.axis_values(1)
    qz = qgrid.axis_values(2)
    for ix, iy, iz in zip(px, py, pz):
        phase = (
            np.exp(-1j * qx * a * ix)[:, None, None]
            * np.exp(-1j * qy * a * iy)[None, :, None]
            * np.exp(-1j * qz * a * iz)[None, None, :]
        )
        out += dev[ix, iy, iz] * phase
    return out


def simulate_intensity_fft(
    obj: ComplexVolume, cfg: ForwardConfig | None = None, spec: CrystalSpec | None = None
) -> IntensityVolume:
    """FFT fast path: C * |DFT(object)|^2 on the centered q-grid.

    A non-trivial form factor weights only the deviation part, which the
    fast path cannot factorize; that case is delegated to the direct sum.
    """
    cfg = cfg or ForwardConfig()
    if cfg.form_factor is not None:
        if spec is None:
            raise ValueError("form_factor path needs the crystal spec")
        return simulate_intensity_direct(obj, spec, cfg)
    qgrid = QGrid(dims=obj.dims, pitch=obj.pitch)
    amp = fft_forward(obj.data)
    data = cfg.intensity_scale * np.abs(amp) ** 2
    return IntensityVolume(data=data, grid=qgrid)


def autocorrelation(intensity: IntensityVolume) -> ComplexVolume:
    """Centered inverse DFT of the intensity (peak at dims//2)."""
    acf = np.fft.fftshift(fft_inverse(intensity.data))
    return ComplexVolume(data=acf, pitch=intensity.grid.pitch)
