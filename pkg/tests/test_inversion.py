import numpy as np
import pytest
from hypothesis import given, strategies as st

import backscatter.inversion as inv
from backscatter.core_types import (FarFieldDataset, GridSpec, PotentialGrid, fibonacci_sphere, grid_l2_norm,
                                    make_bump_potential)
from backscatter.datatools import add_noise
from backscatter.errors import CoverageError, DivergenceError
from backscatter.far_field import backscattering_dataset
from backscatter.inversion import (born_consistent_dataset, born_inversion, fixed_point_refine, misfit,
                                   project, support_mask, uniqueness_experiment)
from backscatter.spectral import fourier_at

G = GridSpec(2.25, 24)
BETAS = fibonacci_sphere(200)


def ks(k_max, count=16):
    return k_max * np.arange(1, count + 1) / count


@pytest.fixture(scope="module")
def bump():
    return make_bump_potential((0, 0, 0), 1.5, 0.1, G)


def err(rec, q):
    return grid_l2_norm(rec.values - q.values, q.grid) / grid_l2_norm(q.values, q.grid)


@pytest.fixture(scope="module")
def consistent_errors(bump):
    return {k: err(born_inversion(born_consistent_dataset(bump, BETAS, ks(k)), G), bump) for k in (2, 4, 8)}


def test_zero_data_gives_zero():
    z = PotentialGrid.on(G, np.zeros(G.shape))
    d = backscattering_dataset(z, fibonacci_sphere(60), ks(1.0, 4))
    assert born_inversion(d, G).is_zero()


def test_born_consistent_accuracy(consistent_errors):
    assert consistent_errors[8] <= 0.05


def test_band_limit_monotone(consistent_errors):
    assert consistent_errors[2] > consistent_errors[4] > consistent_errors[8]


def test_imaginary_residue_small(bump):
    xi, vals = inv._samples(born_consistent_dataset(bump, BETAS, ks(4)))
    field, _ = inv._reconstruct(xi, vals, G)
    assert np.linalg.norm(field.imag) <= 0.1 * np.linalg.norm(field.real)


def test_projection_does_not_increase_misfit(bump):
    d = born_consistent_dataset(bump, BETAS, ks(4))
    xi, vals = inv._samples(d)
    field, _ = inv._reconstruct(xi, vals, G)
    probes = 2 * d.ks[:, None] * d.alphas

    def born_misfit(values):
        return misfit(d, -fourier_at(values, G, probes) / (4 * np.pi))

    raw = np.where(support_mask(G), field, 0.0)
    assert born_misfit(project(field, G, 1.6)) <= born_misfit(raw)


@given(st.integers(0, 2**31), st.one_of(st.none(), st.floats(0.3, 2.0)))
def test_projection_idempotent(seed, radius):
    f = np.random.default_rng(seed).normal(size=(8, 8, 8)) * (1 + 1j)
    g = GridSpec(1.0, 8)
    once = project(f, g, radius)
    assert np.array_equal(project(once, g, radius), once)
    assert np.isrealobj(once)


def test_sparse_directions_rejected(bump):
    with pytest.raises(CoverageError):
        born_inversion(born_consistent_dataset(bump, fibonacci_sphere(8), ks(4)), G)


def test_rejects_other_kinds_and_complex_shift(bump):
    d = born_consistent_dataset(bump, fibonacci_sphere(20), ks(1, 2))
    shifted = FarFieldDataset(d.betas, d.alphas, d.ks, np.full(len(d), 1.0), d.amplitudes, "backscatter")
    with pytest.raises(ValueError):
        born_inversion(shifted, G)
    full = FarFieldDataset(d.betas, d.alphas, d.ks, d.etas, d.amplitudes, "full")
    with pytest.raises(ValueError):
        born_inversion(full, G)
    with pytest.raises(ValueError):
        fixed_point_refine(d, bump, 1, eta=1.0)


def test_noise_floor_scales_linearly(bump):
    d = born_consistent_dataset(bump, BETAS, ks(4))
    clean = born_inversion(d, G)
    floor = [err(born_inversion(add_noise(d, delta, 5), G), clean) for delta in (1e-2, 1e-3)]
    assert 10 / 3 <= floor[0] / floor[1] <= 30


def test_fixed_point_is_stationary():
    g = GridSpec(2.25, 16)
    q = make_bump_potential((0, 0, 0), 1.2, 0.1, g)
    d = backscattering_dataset(q, fibonacci_sphere(40), ks(1.0, 4), tol=1e-11)
    its = fixed_point_refine(d, q, 1, tol=1e-11)
    assert len(its) == 2 and len(its.misfits) == 2
    assert its.misfits[0] <= 1e-9
    assert np.max(np.abs(its[1].values - q.values)) <= 1e-8 * np.max(np.abs(q.values))


def test_divergence_detected(monkeypatch):
    g = GridSpec(2.25, 16)
    q = make_bump_potential((0, 0, 0), 1.2, 0.1, g)
    d = born_consistent_dataset(q, fibonacci_sphere(40), ks(1.0, 4))
    growth = iter(range(1, 100))
    monkeypatch.setattr(inv, "_predict", lambda q_, d_, tol, threads: d_.amplitudes * (1 + next(growth)))
    with pytest.raises(DivergenceError):
        fixed_point_refine(d, q, 5)


class TestUniqueness:
    g = GridSpec(3.0, 24)

    def test_identical(self):
        q = make_bump_potential((0, 0, 0), 1.2, 0.2, self.g)
        rep = uniqueness_experiment(q, q, fibonacci_sphere(4), [0.5, 1.0], tol=1e-8)
        assert rep["delta_A"] <= 2e-8 and rep["p_l1"] == 0

    def test_small_perturbation_detected(self):
        q = make_bump_potential((0, 0, 0), 1.2, 0.2, self.g)
        p = make_bump_potential((0.3, -0.2, 0.1), 0.5, 1e-2, self.g)
        rep = uniqueness_experiment(q, q + p, fibonacci_sphere(4), [0.5, 1.0], tol=1e-8)
        assert rep["delta_A"] > 10 * 1e-8
        assert rep["kind"] == "backscatter" and rep["records"] == 8

    def test_fixed_incident_kind(self):
        q = make_bump_potential((0, 0, 0), 1.2, 0.2, self.g)
        p = make_bump_potential((0.3, -0.2, 0.1), 0.5, 1e-2, self.g)
        rep = uniqueness_experiment(q, q + p, fibonacci_sphere(4), [1.0], kind="fixed_incident")
        assert rep["kind"] == "fixed_incident" and rep["delta_A"] > 0

    def test_unknown_kind(self):
        q = make_bump_potential((0, 0, 0), 1.2, 0.2, self.g)
        with pytest.raises(ValueError):
            uniqueness_experiment(q, q, fibonacci_sphere(2), [1.0], kind="full")
