"""Ground-truth crystal synthesis.

Builds the complex-valued target field (real amplitude times a curved
phase factor) on a cell grid embedded centrally in an oversampled array.
All fields are sampled at cell centers, i.e. at ((i + 1/2) * a, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class InvalidSpecError(ValueError):
    """Raised when a crystal specification violates an invariant."""


class Inclusion(BaseModel):
    """Spherical region of reduced scattering amplitude.

    Coordinates and radius are in cell units; ``beta`` is the amplitude
    inside the sphere (bulk amplitude is 1).
    """

    model_config = ConfigDict(extra="forbid")

    center: tuple[float, float, float]
    radius: float = Field(gt=0.0)
    beta: float = Field(default=0.9, gt=0.0, le=1.0)


class CrystalSpec(BaseModel):
    """Parametric description of the simulated crystal.

    ``n_cells`` must be equal along all axes (cubic box). ``gamma`` is the
    curvature coefficient of the deformation phase in rad/nm^2; when unset
    it is derived from ``max_phase``. ``lattice_const`` doubles as the
    voxel pitch. ``reflection`` must have exactly one nonzero component
    (the z one, for an (00L)-type reflection).
    """

    model_config = ConfigDict(extra="forbid")

    n_cells: tuple[int, int, int] = (32, 32, 32)
    lattice_const: float = Field(default=80.0, gt=0.0)
    gamma: float | None = None
    max_phase: float = 0.25 * np.pi
    inclusions: list[Inclusion] = Field(default_factory=list)
    oversampling: int = Field(default=4, ge=2)
    reflection: tuple[int, int, int] = (0, 0, 1)

    @model_validator(mode="after")
    def _check(self) -> "CrystalSpec":
        nx, ny, nz = self.n_cells
        if not (nx == ny == nz):
            raise InvalidSpecError("n_cells must be equal along all axes")
        if nx <= 0:
            raise InvalidSpecError("n_cells must be positive")
        hx, hy, hz = self.reflection
        if hz == 0 or hx != 0 or hy != 0:
            raise InvalidSpecError(
                "reflection must have exactly one nonzero component (z)"
            )
        for inc in self.inclusions:
            if inc.center[2] <= nz / 2:
                raise InvalidSpecError(
                    "inclusion centers must lie in the upper half (z > L_z/2)"
                )
        return self

    @property
    def box_lengths(self) -> tuple[float, float, float]:
        a = self.lattice_const
        return tuple(n * a for n in self.n_cells)

    @property
    def array_dims(self) -> tuple[int, int, int]:
        return tuple(n * self.oversampling for n in self.n_cells)

    @property
    def box_origin(self) -> tuple[int, int, int]:
        """Corner index of the crystal box, centered in the oversampled array."""
        return tuple((m - n) // 2 for m, n in zip(self.array_dims, self.n_cells))

    def resolved_gamma(self) -> float:
        return self.gamma if self.gamma is not None else gamma_from_max_phase(self)


@dataclass
class ComplexVolume:
    """3D complex voxel array with grid metadata.

    ``origin`` is the corner index of the crystal box inside the array;
    arrays are indexed [x, y, z].
    """

    data: np.ndarray
    pitch: float
    origin: tuple[int, int, int] = (0, 0, 0)
    box_dims: tuple[int, int, int] | None = None

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def box_slices(self) -> tuple[slice, slice, slice]:
        if self.box_dims is None:
            raise ValueError("volume carries no crystal-box metadata")
        return tuple(
            slice(o, o + n) for o, n in zip(self.origin, self.box_dims)
        )

    def crop_box(self) -> np.ndarray:
        return self.data[self.box_slices()]


def gamma_from_max_phase(spec: CrystalSpec) -> float:
    """Curvature coefficient giving ``max_phase`` at the z=0 box corners."""
    lx, ly, _ = spec.box_lengths
    if lx <= 0.0 or ly <= 0.0:
        raise InvalidSpecError("crystal dimensions must be positive")
    return spec.max_phase / ((lx / 2.0) ** 2 + (ly / 2.0) ** 2)


def phase_at(spec: CrystalSpec, x, y, z):
    """Deformation phase -h.u evaluated at physical coordinates (nm)."""
    lx, ly, lz = spec.box_lengths
    g = spec.resolved_gamma()
    return g * ((x - lx / 2.0) ** 2 + (y - ly / 2.0) ** 2) * (1.0 - z / lz)


def _cell_centers(spec: CrystalSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = spec.lattice_const
    nx, ny, nz = spec.n_cells
    cx = (np.arange(nx) + 0.5) * a
    cy = (np.arange(ny) + 0.5) * a
    cz = (np.arange(nz) + 0.5) * a
    return np.meshgrid(cx, cy, cz, indexing="ij")


def build_phase_field(spec: CrystalSpec) -> np.ndarray:
    """Phase sampled at cell centers of the crystal box, shape n_cells."""
    x, y, z = _cell_centers(spec)
    return phase_at(spec, x, y, z)


def build_amplitude(spec: CrystalSpec) -> np.ndarray:
    """Amplitude beta_h at cell centers: 1 in bulk, inclusion beta inside spheres.

    Overlapping inclusions take the minimum beta.
    """
    nx, ny, nz = spec.n_cells
    amp = np.ones(spec.n_cells, dtype=float)
    # sphere test in cell coordinates, at cell centers (i + 1/2)
    ix = np.arange(nx) + 0.5
    iy = np.arange(ny) + 0.5
    iz = np.arange(nz) + 0.5
    gx, gy, gz = np.meshgrid(ix, iy, iz, indexing="ij")
    for inc in spec.inclusions:
        cx, cy, cz = inc.center
        inside = (gx - cx) ** 2 + (gy - cy) ** 2 + (gz - cz) ** 2 <= inc.radius**2
        amp[inside] = np.minimum(amp[inside], inc.beta)
    return amp


def embed_cell_field(spec: CrystalSpec, cell_field: np.ndarray) -> ComplexVolume:
    """Place a per-cell complex field into the centered crystal box of the
    oversampled array; zero elsewhere."""
    if cell_field.shape != spec.n_cells:
        raise InvalidSpecError(
            f"cell field shape {cell_field.shape} != n_cells {spec.n_cells}"
        )
    data = np.zeros(spec.array_dims, dtype=complex)
    origin = spec.box_origin
    sl = tuple(slice(o, o + n) for o, n in zip(origin, spec.n_cells))
    data[sl] = cell_field
    return ComplexVolume(
        data=data,
        pitch=spec.lattice_const,
        origin=origin,
        box_dims=spec.n_cells,
    )


def build_object(spec: CrystalSpec) -> ComplexVolume:
    """Ground-truth complex object beta_h * exp(i * phase) in the oversampled array."""
    amp = build_amplitude(spec)
    phase = build_phase_field(spec)
    return embed_cell_field(spec, amp * np.exp(1j * phase))


def default_inclusions(n: int) -> list[Inclusion]:
    """Three disjoint spheres of radii {2, 3, 4} cells in the upper half.

    Positions scale with the box size; for n >= 16 the spheres are
    mutually disjoint, interior to the box, and entirely above z = L_z/2
    (no sampled cell of the lower half touches any sphere).
    """
    return [
        Inclusion(center=(0.25 * n, 0.30 * n, 0.72 * n), radius=2.0, beta=0.90),
        Inclusion(center=(0.70 * n, 0.30 * n, 0.70 * n), radius=3.0, beta=0.93),
        Inclusion(center=(0.45 * n, 0.70 * n, 0.75 * n), radius=4.0, beta=0.95),
    ]


def default_spec(n: int = 32, oversampling: int = 4, **kwargs) -> CrystalSpec:
    """Paper-style default crystal: cubic box, three upper-half inclusions,
    curved deformation with 0.25*pi maximum phase."""
    kwargs.setdefault("inclusions", default_inclusions(n))
    return CrystalSpec(
        n_cells=(n, n, n),
        oversampling=oversampling,
        **kwargs,
    )
