"""On-disk container: a JSON manifest plus raw little-endian binary64 files.

Complex arrays are stored as interleaved ``(re, im)`` pairs, real arrays as
plain binary64.  Three-dimensional fields are written with ``x`` fastest
(index ``ix`` varies first).  Reading back reproduces every array bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core_types import FOURIER_SIGN, FarFieldDataset, GridSpec, PotentialGrid, SpectralField

FORMAT = "backscatter-container"
VERSION = 1
_COMPLEX = np.dtype("<c16")
_REAL = np.dtype("<f8")


def _write_array(directory: Path, name: str, array, order="C") -> dict:
    array = np.asarray(array)
    dtype = _COMPLEX if np.iscomplexobj(array) else _REAL
    fname = f"{name}.bin"
    (directory / fname).write_bytes(np.asarray(array, dtype=dtype).tobytes(order=order))
    return {"file": fname, "dtype": "complex-pair" if dtype == _COMPLEX else "real",
            "shape": list(array.shape), "order": "x-fastest" if order == "F" else "row-major"}


def _read_array(directory: Path, entry: dict) -> np.ndarray:
    dtype = _COMPLEX if entry["dtype"] == "complex-pair" else _REAL
    raw = np.frombuffer((directory / entry["file"]).read_bytes(), dtype=dtype)
    order = "F" if entry["order"] == "x-fastest" else "C"
    return raw.reshape(entry["shape"], order=order).astype(dtype.newbyteorder("="))


def _manifest(content: str, **extra) -> dict:
    return {"format": FORMAT, "version": VERSION, "content": content, "endianness": "little",
            "real_bytes": 8, "fourier_sign": FOURIER_SIGN, **extra}


def _dump(directory, manifest):
    (Path(directory) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _load_manifest(directory, kind):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != FORMAT or manifest.get("content") != kind:
        raise ValueError(f"{directory} does not hold a {kind} container")
    if manifest.get("endianness") != "little" or manifest.get("version") != VERSION:
        raise ValueError("unsupported container version or byte order")
    return directory, manifest


def save_dataset(dataset: FarFieldDataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {name: _write_array(directory, name, getattr(dataset, name))
              for name in ("betas", "alphas", "ks", "etas", "amplitudes")}
    arrays["valid"] = _write_array(directory, "valid", dataset.valid.astype(float))
    _dump(directory, _manifest("dataset", kind=dataset.kind, records=len(dataset),
                               record_schema=["beta(3)", "alpha(3)", "k", "eta", "amplitude", "valid"],
                               arrays=arrays))
    return directory


def load_dataset(directory) -> FarFieldDataset:
    directory, m = _load_manifest(directory, "dataset")
    a = {name: _read_array(directory, entry) for name, entry in m["arrays"].items()}
    return FarFieldDataset(a["betas"], a["alphas"], a["ks"], a["etas"], a["amplitudes"],
                           m["kind"], a["valid"] != 0)


def save_field(values, grid: GridSpec, directory, name="field", **meta) -> Path:
    """A field on the spatial grid, ``x`` fastest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entry = _write_array(directory, name, grid.check_field(values), order="F")
    _dump(directory, _manifest("field", grid={"half_width": grid.half_width, "n": grid.n},
                               arrays={name: entry}, meta=meta))
    return directory


def load_field(directory, name="field"):
    """Returns ``(values, grid, meta)``."""
    directory, m = _load_manifest(directory, "field")
    grid = GridSpec(m["grid"]["half_width"], m["grid"]["n"])
    return _read_array(directory, m["arrays"][name]), grid, m.get("meta", {})


def save_potential(q: PotentialGrid, directory) -> Path:
    return save_field(q.values, q.grid, directory, "potential", smoothness_l=q.smoothness_l)


def load_potential(directory) -> PotentialGrid:
    values, grid, meta = load_field(directory, "potential")
    return PotentialGrid.on(grid, values, meta.get("smoothness_l", 3))


def save_spectral(sf: SpectralField, directory, name="spectrum") -> Path:
    """A spectral field with its frequency-grid manifest (first node, spacing, count)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entry = _write_array(directory, name, sf.values, order="F")
    axis = _write_array(directory, f"{name}_axis", sf.xi_axis)
    _dump(directory, _manifest("spectral", frequency_grid={
        "first": float(sf.xi_axis[0]), "spacing": sf.dxi, "count": len(sf.xi_axis)},
        arrays={name: entry, "axis": axis}))
    return directory


def load_spectral(directory, name="spectrum") -> SpectralField:
    directory, m = _load_manifest(directory, "spectral")
    return SpectralField(_read_array(directory, m["arrays"]["axis"]),
                         _read_array(directory, m["arrays"][name]), m["fourier_sign"])
