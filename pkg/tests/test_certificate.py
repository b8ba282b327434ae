import json

import numpy as np
import pytest
from scipy import integrate

from backscatter.certificate import (CertificateReport, bound_integral_I, bound_integrand_closed_form,
                                    composite_epsilon, contraction_certificate, decay_slope, eta0_bound,
                                    inner_t_integral_quadrature, orthogonality_residual, orthogonality_terms)
from backscatter.core_types import GridSpec, PotentialGrid, WaveParams, fibonacci_sphere, make_bump_potential, make_radial_well
from backscatter.far_field import backscattering_dataset
from backscatter.forward_solver import solve_scattering
from backscatter.oracle import RadialWell, bound_state_kappas
from backscatter.spectral import t_integral

from reference import double_integral_I

# (k, eta, l) -> I by nested adaptive quadrature of the raw (r, t) double
# integral with r = x/(1-x); independent of the closed-form inner integral.
I_ORACLE = {
    (1, 2, 3): 0.3530737224650763,
    (0.5, 1, 3): 0.4870950722674718,
    (1, 1, 3): 0.47977498659545836,
    (2, 2, 3): 0.3387946683117422,
    (1, 4, 3): 0.24491453466134908,
    (1, 2, 4): 0.17505768173051356,
    (1, 2, 5): 0.10493236747399688,
    (2, 8, 3.5): 0.10239305145253673,
    (3, 1, 4): 0.1910177384695853,
}


G32 = GridSpec(3.0, 32)


@pytest.fixture(scope="module")
def bumps():
    q1 = make_bump_potential((0.2, 0.0, -0.1), 1.2, 0.2, G32)
    q2 = make_bump_potential((-0.3, 0.2, 0.1), 1.0, -0.15, G32)
    return q1, q2


class TestBoundIntegral:
    def test_integrand_at_origin(self):
        assert bound_integrand_closed_form(0.0, 1.0, 2.0, 3) == 0.0

    def test_integrand_decays(self):
        assert bound_integrand_closed_form(1e4, 1.0, 2.0, 3) < 1e-6

    def test_inner_integral(self):
        ref = inner_t_integral_quadrature(1.0, 1.0, 2.0)
        assert ref == pytest.approx(1.0320363424447336, rel=1e-12)
        assert t_integral(1.0, 1.0, 2.0) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("r", [0.01, 0.3, 2.0, 17.0, 250.0])
    def test_inner_identity_pointwise(self, r):
        closed = bound_integrand_closed_form(r, 1.0, 2.0, 3) / (r * (1 + r) ** -3 * 2 * np.sqrt(5.0))
        assert closed == pytest.approx(inner_t_integral_quadrature(r, 1.0, 2.0), rel=1e-10)

    def test_oracle_values_reproduce(self):
        assert double_integral_I(1, 2, 3) == pytest.approx(I_ORACLE[(1, 2, 3)], rel=1e-10)

    @pytest.mark.parametrize("point", sorted(I_ORACLE))
    def test_matches_double_integral(self, point):
        assert bound_integral_I(*point) == pytest.approx(I_ORACLE[point], rel=1e-6)

    def test_positive_and_decreasing_in_l(self):
        vals = [bound_integral_I(1.0, 2.0, l) for l in (3, 4, 5)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_large_eta_asymptotics(self):
        # I ~ (log(4 eta)/2 - B)/eta for l = 3: eta I - log(eta)/2 settles
        etas = [16.0, 32.0, 64.0, 128.0]
        g = [e * bound_integral_I(1.0, e, 3) - 0.5 * np.log(e) for e in etas]
        steps = np.abs(np.diff(g))
        # a pure 1/eta law would move this by log(2)/2 = 0.35 per doubling
        assert np.all(steps < 0.05)
        assert steps[2] < 0.6 * steps[1] < 0.36 * steps[0]

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            bound_integral_I(1.0, 2.0, 2.0)
        with pytest.raises(ValueError):
            bound_integral_I(1.0, 0.0, 3.0)


class TestEta0:
    def test_nonnegative_potential(self):
        q = make_bump_potential((0, 0, 0), 1.0, 0.5, GridSpec(2.0, 16))
        assert eta0_bound(q) == pytest.approx(0.1)

    def test_constant_well(self):
        assert eta0_bound(np.full(5, -4.0)) == pytest.approx(2.1)

    def test_dominates_bound_state(self):
        well = RadialWell.square(4.0, 1.5)
        kappas = bound_state_kappas(well)
        assert len(kappas) > 0
        q = make_radial_well([1.5], [-4.0], GridSpec(3.0, 24))
        assert eta0_bound(q) > max(kappas)


class TestOrthogonality:
    def test_equal_potentials(self, bumps):
        t = orthogonality_terms(bumps[0], bumps[0], (0, 0.6, 0.8), WaveParams(1.0, 2.0))
        assert t.spatial == 0 and t.data_side == 0

    @pytest.mark.parametrize("eta", [0.0, 2.0])
    def test_spatial_equals_data_side(self, bumps, eta):
        t = orthogonality_terms(*bumps, (0, 0.6, 0.8), WaveParams(1.0, eta), tol=1e-13)
        assert abs(t.spatial - t.data_side) <= 1e-10 * max(1.0, abs(t.data_side))

    @pytest.mark.parametrize("eta", [0.0, 2.0])
    def test_spectral_route(self, bumps, eta):
        t = orthogonality_terms(*bumps, (0, 0.6, 0.8), WaveParams(1.0, eta), tol=1e-12)
        assert abs(t.spectral - t.spatial) <= 1e-3 * abs(t.spatial)

    def test_residual_over_dataset(self, bumps):
        d = backscattering_dataset(bumps[0], fibonacci_sphere(3), [1.0], tol=1e-10)
        assert orthogonality_residual(bumps[0], bumps[0], d) == 0.0
        res = orthogonality_residual(*bumps, d)
        assert 0 < res < 1

    def test_composite_identity(self, bumps):
        beta = np.array([0.0, 0.6, 0.8])
        w = WaveParams(1.0, 2.0, tuple(beta))
        s1, s2 = (solve_scattering(q, w, tol=1e-10) for q in bumps)
        eps = composite_epsilon(s1.epsilon, s2.epsilon)
        assert np.array_equal(eps, s1.epsilon + s2.epsilon + s1.epsilon * s2.epsilon)
        plane = np.exp(2j * w.ktilde * G32.dot(beta))
        prod = s1.u * s2.u
        assert np.max(np.abs(prod - plane * (1 + eps)) / np.abs(prod)) <= 1e-13


def test_decay_slope_fit():
    etas = [2, 4, 8, 16]
    assert decay_slope(etas, [1 / e for e in etas]) == pytest.approx(-1.0)
    assert decay_slope(etas, [5.0, 1.0, 0.25, 0.0625]) == pytest.approx(-2.0)
    assert np.isnan(decay_slope([2.0], [1.0]))


def test_certificate_zero_potentials():
    z = PotentialGrid.on(G32, np.zeros(G32.shape))
    rep = contraction_certificate(z, z, 1.0)
    assert rep.certified and rep.contraction_eta == 2.0
    assert rep.l1_values == [0.0, 0.0, 0.0, 0.0]


@pytest.fixture(scope="module")
def weak_report(bumps):
    return contraction_certificate(*bumps, 1.0, (2.0, 4.0, 8.0))


class TestCertificate:
    def test_certified(self, weak_report):
        assert weak_report.certified
        assert weak_report.contraction_eta <= 8.0

    def test_strictly_decreasing(self, weak_report):
        v = weak_report.l1_values
        assert all(b < a for a, b in zip(v, v[1:]))
        assert not any(f.startswith("anomaly: l1") for f in weak_report.flags)

    def test_chain_holds(self, weak_report):
        assert not any(f.startswith("chain") for f in weak_report.flags)

    def test_serialisation(self, weak_report):
        d = json.loads(weak_report.to_json())
        assert d["verdict"] == "certified" and d["eta_samples"] == [2.0, 4.0, 8.0]
        lines = weak_report.to_csv().splitlines()
        assert lines[0] == "eta,l1,I" and len(lines) == 4

    def test_eta_below_eta0_flagged(self):
        g = GridSpec(3.0, 16)
        q = make_bump_potential((0, 0, 0), 1.0, -9.0, g)
        z = PotentialGrid.on(g, np.zeros(g.shape))
        rep = contraction_certificate(q, z, 1.0, (2.0,))
        assert any(f.startswith("eta-below-eta0") for f in rep.flags)

    def test_rejects_unsorted_etas(self, bumps):
        with pytest.raises(ValueError):
            contraction_certificate(*bumps, 1.0, (4.0, 2.0))

    def test_report_defaults(self):
        rep = CertificateReport(1.0, (0, 0, 1), 3, [], [], [], float("nan"), 0.1, None, "x")
        assert not rep.certified and rep.flags == []


def test_nonsmooth_potential_is_flagged_not_certified():
    g = GridSpec(2.25, 16)
    well = make_radial_well([1.0], [-0.05], g)
    rep = contraction_certificate(well, PotentialGrid.on(g, np.zeros(g.shape)), 1.0, [2.0, 4.0])
    assert not rep.certified
    assert any(f.startswith("unbounded-tail") for f in rep.flags)
