"""Raw-binary volume files with a text sidecar header, plus CSV helpers.

A volume ``name`` is stored as two files:

  * ``name.hdr`` - self-describing text header, one ``key: value`` pair
    per line (dims, pitch, kind, layout, endianness, index order, and the
    crystal-box metadata when present);
  * ``name.raw`` - little-endian 64-bit floats in x-fastest index order;
    complex volumes interleave (re, im) per voxel.

All writes go through a temp file in the target directory followed by an
atomic rename.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .forward import IntensityVolume, QGrid
from .model import ComplexVolume

FORMAT_VERSION = "1"


class VolumeFormatError(ValueError):
    """Header missing, malformed, or inconsistent with the raw body."""


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode())


def _header_text(fields: dict[str, str]) -> str:
    return "".join(f"{k}: {v}\n" for k, v in fields.items())


def _parse_header(text: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if ":" not in line:
            raise VolumeFormatError(f"header line {lineno}: missing ':' separator")
        key, value = line.split(":", 1)
        fields[key.strip()] = value.strip()
    return fields


def _base_fields(dims, pitch, kind) -> dict[str, str]:
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "dims": " ".join(str(d) for d in dims),
        "pitch_nm": repr(float(pitch)),
        "dtype": "float64",
        "endianness": "little",
        "index_order": "x-fastest",
        "layout": "interleaved re,im" if kind == "complex" else "scalar",
    }


def write_complex_volume(base_path: str | Path, volume: ComplexVolume) -> tuple[Path, Path]:
    base = Path(base_path)
    fields = _base_fields(volume.dims, volume.pitch, "complex")
    if volume.box_dims is not None:
        fields["box_origin"] = " ".join(str(i) for i in volume.origin)
        fields["box_dims"] = " ".join(str(i) for i in volume.box_dims)
    hdr = base.with_suffix(".hdr")
    raw = base.with_suffix(".raw")
    body = np.ascontiguousarray(volume.data.ravel(order="F")).astype("<c16")
    _atomic_write_bytes(raw, body.tobytes())
    atomic_write_text(hdr, _header_text(fields))
    return hdr, raw


def write_intensity_volume(base_path: str | Path, volume: IntensityVolume) -> tuple[Path, Path]:
    base = Path(base_path)
    fields = _base_fields(volume.data.shape, volume.grid.pitch, "intensity")
    if volume.photon_scale is not None:
        fields["photon_scale"] = repr(float(volume.photon_scale))
    hdr = base.with_suffix(".hdr")
    raw = base.with_suffix(".raw")
    body = np.ascontiguousarray(volume.data.ravel(order="F")).astype("<f8")
    _atomic_write_bytes(raw, body.tobytes())
    atomic_write_text(hdr, _header_text(fields))
    return hdr, raw


def _read_header(base: Path) -> dict[str, str]:
    hdr = base.with_suffix(".hdr")
    if not hdr.exists():
        raise VolumeFormatError(f"missing header file {hdr}")
    return _parse_header(hdr.read_text())


def _read_body(base: Path, dims: tuple[int, int, int], complex_kind: bool) -> np.ndarray:
    raw = base.with_suffix(".raw")
    if not raw.exists():
        raise VolumeFormatError(f"missing raw file {raw}")
    dtype = "<c16" if complex_kind else "<f8"
    flat = np.fromfile(raw, dtype=dtype)
    expected = int(np.prod(dims))
    if flat.size != expected:
        raise VolumeFormatError(
            f"raw body has {flat.size} voxels, header says {expected}"
        )
    return flat.reshape(dims, order="F")


def read_complex_volume(base_path: str | Path) -> ComplexVolume:
    base = Path(base_path)
    fields = _read_header(base)
    if fields.get("kind") != "complex":
        raise VolumeFormatError(f"{base}: not a complex volume")
    dims = tuple(int(x) for x in fields["dims"].split())
    pitch = float(fields["pitch_nm"])
    origin = (0, 0, 0)
    box_dims = None
    if "box_origin" in fields:
        origin = tuple(int(x) for x in fields["box_origin"].split())
        box_dims = tuple(int(x) for x in fields["box_dims"].split())
    data = _read_body(base, dims, complex_kind=True)
    return ComplexVolume(data=data, pitch=pitch, origin=origin, box_dims=box_dims)


def read_intensity_volume(base_path: str | Path) -> IntensityVolume:
    base = Path(base_path)
    fields = _read_header(base)
    if fields.get("kind") != "intensity":
        raise VolumeFormatError(f"{base}: not an intensity volume")
    dims = tuple(int(x) for x in fields["dims"].split())
    pitch = float(fields["pitch_nm"])
    data = _read_body(base, dims, complex_kind=False)
    scale = fields.get("photon_scale")
    return IntensityVolume(
        data=data,
        grid=QGrid(dims=dims, pitch=pitch),
        photon_scale=float(scale) if scale is not None else None,
    )


def write_csv(path: str | Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


class StreamingCsv:
    """Append-as-you-go CSV writer, flushed per record; atomically renamed
    into place on close."""

    def __init__(self, path: str | Path, header: list[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self._tmp = tempfile.mkstemp(
            dir=self.path.parent, prefix=self.path.name, suffix=".tmp"
        )
        self._handle = os.fdopen(fd, "w")
        self._handle.write(",".join(header) + "\n")
        self._handle.flush()

    def write_row(self, row: list[str]) -> None:
        self._handle.write(",".join(row) + "\n")
        self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            os.replace(self._tmp, self.path)
            self._handle = None

    def abort(self) -> None:
        if self._handle is not None:
            self._handle.close()
            os.unlink(self._tmp)
            self._handle = None

    def __enter__(self) -> "StreamingCsv":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self.abort()
