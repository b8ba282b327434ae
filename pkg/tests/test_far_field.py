import csv

import numpy as np
import pytest

import backscatter.far_field as ff
from backscatter.core_types import GridSpec, PotentialGrid, WaveParams, fibonacci_sphere, make_bump_potential, make_radial_well, unit_vector
from backscatter.far_field import (amplitude, amplitudes, backscattering_dataset, fixed_incident_dataset,
                                   full_dataset, lemma1_residual, lemma1_terms, sphere_rule, write_csv)
from backscatter.forward_solver import solve_scattering
from backscatter.oracle import RadialWell, bump_fourier, partial_wave_amplitude

G32 = GridSpec(3.0, 32)


@pytest.fixture(scope="module")
def bumps():
    q1 = make_bump_potential((0.2, 0.0, -0.1), 1.2, 0.2, G32)
    q2 = make_bump_potential((-0.3, 0.2, 0.1), 1.0, -0.15, G32)
    return q1, q2


def zero(grid):
    return PotentialGrid.on(grid, np.zeros(grid.shape))


def test_zero_potential_amplitude():
    q = zero(G32)
    sol = solve_scattering(q, WaveParams(1.0))
    assert amplitude(q, sol, (1, 0, 0)) == 0


def test_weak_bump_born():
    q = make_bump_potential((0, 0, 0), 1.2, 0.02, G32)
    alpha = np.array([0.0, 0.0, 1.0])
    sol = solve_scattering(q, WaveParams(1.0, 0.0, tuple(alpha)), tol=1e-12)
    betas = fibonacci_sphere(12)
    got = amplitudes(q, sol, betas)
    born = -bump_fourier(0.02, 1.2, np.linalg.norm(alpha - betas, axis=1)) / (4 * np.pi)
    assert np.max(np.abs(got - born) / np.abs(born)) <= 0.05


def test_square_well_partial_waves():
    g = GridSpec(3.0, 48)
    q = make_radial_well([1.0], [-0.5], g)
    sol = solve_scattering(q, WaveParams(1.0), tol=1e-10)
    theta = np.linspace(0, np.pi, 7)
    betas = np.stack([np.sin(theta), 0 * theta, np.cos(theta)], axis=1)
    ref = partial_wave_amplitude(RadialWell.square(0.5, 1.0), 1.0, theta)
    assert np.max(np.abs(amplitudes(q, sol, betas) - ref) / np.abs(ref)) <= 1e-3


def test_backscatter_zero():
    d = backscattering_dataset(zero(GridSpec(2.0, 16)), fibonacci_sphere(4), [0.5, 1.0])
    assert d.kind == "backscatter" and len(d) == 8 and not np.any(d.amplitudes)


def test_backscatter_symmetric_potential():
    g = GridSpec(3.0, 24)
    q = make_bump_potential((0, 0, 0), 1.3, 0.3, g)
    betas = fibonacci_sphere(5)
    d_pos = backscattering_dataset(q, betas, [0.7, 1.2], tol=1e-11)
    d_neg = backscattering_dataset(q, -betas, [0.7, 1.2], tol=1e-11)
    assert np.max(np.abs(d_pos.amplitudes - d_neg.amplitudes)) <= 1e-8
    assert np.allclose(d_pos.betas, -d_pos.alphas)


def test_fixed_incident_zero():
    d = fixed_incident_dataset(zero(GridSpec(2.0, 16)), (0, 0, 1), fibonacci_sphere(4), [1.0])
    assert not np.any(d.amplitudes)


def test_fixed_incident_consistency_and_cost(monkeypatch, bumps):
    q = bumps[0]
    calls = []
    real = ff._solve_or_none

    def counting(*args):
        calls.append(args)
        return real(*args)

    monkeypatch.setattr(ff, "_solve_or_none", counting)
    alpha0 = unit_vector([0.1, 0.2, 1.0])
    betas = np.vstack([alpha0, fibonacci_sphere(6)])
    ks = [0.5, 1.0, 1.5]
    d = fixed_incident_dataset(q, alpha0, betas, ks, tol=1e-10)
    assert len(calls) == len(ks)
    sol = solve_scattering(q, WaveParams(1.0, 0.0, tuple(alpha0)), tol=1e-10)
    rec = d.amplitudes[len(betas)]
    assert abs(rec - amplitude(q, sol, alpha0)) <= 1e-12 * abs(rec)


def test_nonconverged_records_are_flagged(monkeypatch, bumps):
    monkeypatch.setattr(ff, "_solve_or_none", lambda *a: None)
    d = backscattering_dataset(bumps[0], fibonacci_sphere(2), [1.0])
    assert not np.any(d.valid) and np.all(np.isnan(d.amplitudes))


def test_full_dataset_reciprocity(bumps, rng):
    q = bumps[0]
    pairs = []
    for _ in range(4):
        b, a = unit_vector(rng.normal(size=3)), unit_vector(rng.normal(size=3))
        pairs += [(b, a), (-a, -b)]
    d = full_dataset(q, pairs, [1.0], tol=1e-11)
    assert np.max(np.abs(d.amplitudes[0::2] - d.amplitudes[1::2])) <= 1e-6


def test_optical_theorem(bumps):
    q = bumps[0] + bumps[1]
    k = 1.0
    alpha = unit_vector([0.2, -0.3, 0.9])
    sol = solve_scattering(q, WaveParams(k, 0.0, tuple(alpha)), tol=1e-12)
    pts, w = sphere_rule(24)
    total = k / (4 * np.pi) * np.sum(w * np.abs(amplitudes(q, sol, pts)) ** 2)
    forward = amplitude(q, sol, alpha).imag
    assert abs(forward - total) <= 1e-3 * abs(total)


def test_sphere_rule_exactness():
    pts, w = sphere_rule(10)
    assert np.sum(w) == pytest.approx(4 * np.pi, rel=1e-14)
    assert np.sum(w * pts[:, 2] ** 4) == pytest.approx(4 * np.pi / 5, rel=1e-13)
    assert np.sum(w * pts[:, 0] ** 2 * pts[:, 1] ** 2) == pytest.approx(4 * np.pi / 15, rel=1e-13)


class TestLemma1:
    def test_equal_potentials(self, bumps):
        assert lemma1_residual(bumps[0], bumps[0], (0, 0, 1), (1, 0, 0), WaveParams(1.0)) == 0.0

    def test_second_potential_zero(self, bumps):
        res = lemma1_residual(bumps[0], zero(G32), (0, 0.6, 0.8), (0.6, 0, -0.8), WaveParams(1.0, 2.0))
        assert res <= 1e-10

    @pytest.mark.parametrize("eta", [0.0, 2.0, 4.0])
    @pytest.mark.parametrize("tol", [1e-6, 1e-8])
    def test_distinct_bumps(self, bumps, eta, tol):
        res = lemma1_residual(*bumps, (0, 0.6, 0.8), (0.6, 0, -0.8), WaveParams(1.0, eta), tol)
        assert res <= 5 * tol

    def test_randomised_suite(self, rng):
        g = GridSpec(3.0, 24)
        for eta in (0.0, 2.0, 4.0):
            c1, c2 = rng.uniform(-0.5, 0.5, (2, 3))
            q1 = make_bump_potential(c1, rng.uniform(0.7, 1.2), rng.uniform(-0.3, 0.3), g)
            q2 = make_bump_potential(c2, rng.uniform(0.7, 1.2), rng.uniform(-0.3, 0.3), g)
            alpha, beta = unit_vector(rng.normal(size=3)), unit_vector(rng.normal(size=3))
            k = rng.uniform(0.3, 1.0)
            lhs, rhs, _, _ = lemma1_terms(q1, q2, alpha, beta, WaveParams(k, eta), tol=1e-9)
            assert abs(lhs - rhs) <= 5e-9


def test_write_csv(tmp_path, bumps):
    d = backscattering_dataset(bumps[0], fibonacci_sphere(2), [1.0], tol=1e-10)
    write_csv(d, tmp_path / "d.csv")
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert tuple(rows[0]) == ff.CSV_COLUMNS
    assert complex(float(rows[1][8]), float(rows[1][9])) == d.amplitudes[0]
