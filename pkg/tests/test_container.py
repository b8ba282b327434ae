import json

import numpy as np
import pytest

from backscatter.container import (load_dataset, load_field, load_potential, load_spectral, save_dataset,
                                   save_field, save_potential, save_spectral)
from backscatter.core_types import FarFieldDataset, GridSpec, PotentialGrid, fibonacci_sphere
from backscatter.spectral import fourier_forward


@pytest.fixture
def dataset(rng):
    a = fibonacci_sphere(7)
    valid = np.ones(7, bool)
    valid[3] = False
    amps = rng.normal(size=7) + 1j * rng.normal(size=7)
    amps[3] = np.nan
    return FarFieldDataset(-a, a, rng.uniform(0.1, 3, 7), rng.uniform(0, 2, 7), amps, "backscatter", valid)


def test_dataset_round_trip_bit_exact(dataset, tmp_path):
    back = load_dataset(save_dataset(dataset, tmp_path / "d"))
    for name in ("betas", "alphas", "ks", "etas"):
        assert getattr(back, name).tobytes() == getattr(dataset, name).tobytes()
    assert back.amplitudes.tobytes() == dataset.amplitudes.tobytes()
    assert np.array_equal(back.valid, dataset.valid) and back.kind == "backscatter"


def test_field_is_x_fastest(tmp_path):
    g = GridSpec(1.0, 8)
    f = np.zeros(g.shape)
    f[1, 0, 0] = 1.0
    save_field(f, g, tmp_path)
    raw = np.frombuffer((tmp_path / "field.bin").read_bytes(), "<f8")
    assert raw[1] == 1.0 and np.count_nonzero(raw) == 1
    values, grid, _ = load_field(tmp_path)
    assert grid == g and values.tobytes() == f.tobytes()


def test_complex_stored_as_pairs(tmp_path):
    g = GridSpec(1.0, 8)
    f = np.zeros(g.shape, complex)
    f[0, 0, 0] = 1.5 - 2.5j
    save_field(f, g, tmp_path)
    raw = np.frombuffer((tmp_path / "field.bin").read_bytes(), "<f8")
    assert raw[0] == 1.5 and raw[1] == -2.5


def test_potential_round_trip(rng, tmp_path):
    g = GridSpec(1.5, 10)
    v = np.zeros(g.shape)
    v[2:-2, 2:-2, 2:-2] = rng.normal(size=(6, 6, 6))
    q = PotentialGrid.on(g, v, 4)
    back = load_potential(save_potential(q, tmp_path))
    assert back.values.tobytes() == q.values.tobytes() and back.smoothness_l == 4


def test_spectral_round_trip(rng, tmp_path):
    g = GridSpec(1.5, 10)
    sf = fourier_forward(rng.normal(size=g.shape), g)
    back = load_spectral(save_spectral(sf, tmp_path))
    assert back.values.tobytes() == sf.values.tobytes()
    assert back.xi_axis.tobytes() == sf.xi_axis.tobytes()
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["frequency_grid"]["count"] == 10 and m["fourier_sign"] == sf.convention


def test_manifest_declares_layout(dataset, tmp_path):
    save_dataset(dataset, tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["endianness"] == "little" and m["real_bytes"] == 8 and m["records"] == 7
    assert m["arrays"]["amplitudes"]["dtype"] == "complex-pair"


def test_wrong_content_rejected(dataset, tmp_path):
    save_dataset(dataset, tmp_path)
    with pytest.raises(ValueError):
        load_potential(tmp_path)
