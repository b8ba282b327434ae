"""Reference solutions for radial potentials.

Everything here is independent of the grid solver: phase shifts come from
matching spherical Bessel solutions across the shells of a piecewise
constant potential, Born amplitudes from closed-form Fourier transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .core_types import bump_profile, unit_vector

MAX_L = 200
TRUNCATION = 1e-12


@dataclass(frozen=True)
class RadialWell:
    """Piecewise-constant radial potential: ``values[i]`` on ``radii[i-1] <= r < radii[i]``."""

    radii: tuple
    values: tuple

    def __post_init__(self):
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        values = tuple(float(v) for v in np.atleast_1d(self.values))
        if len(radii) != len(values) or not radii:
            raise ValueError("radii and values must be non-empty and of equal length")
        if len(radii) > 4:
            raise ValueError("at most 4 shells are supported")
        if radii[0] <= 0 or np.any(np.diff(radii) <= 0):
            raise ValueError("radii must be positive and increasing")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)

    @classmethod
    def square(cls, depth: float, radius: float) -> "RadialWell":
        return cls((radius,), (-depth,))

    def fourier(self, xi):
        """``q~(xi)`` for real or complex frequency vectors of shape ``(..., 3)``."""
        xi = np.asarray(xi)
        s2 = np.sum(xi * xi, axis=-1)
        steps = np.array(self.values) - np.append(self.values[1:], 0.0)
        return sum(dv * ball_fourier(R, s2) for R, dv in zip(self.radii, steps))


@dataclass(frozen=True)
class GaussianFamily:
    amplitude: float
    width: float
    center: tuple = (0.0, 0.0, 0.0)

    def fourier(self, xi):
        xi = np.asarray(xi)
        s2 = np.sum(xi * xi, axis=-1)
        shift = np.exp(1j * (xi @ np.asarray(self.center, dtype=float)))
        return self.amplitude * (2 * np.pi * self.width**2) ** 1.5 \
            * np.exp(-0.5 * self.width**2 * s2) * shift


def ball_fourier(radius, s2):
    """Transform of the unit-height ball indicator, as a function of ``s^2 = xi.xi``.

    ``4 pi (sin(sR) - sR cos(sR)) / s^3``; an even entire function of ``s``,
    evaluated by its Taylor series near the origin.
    """
    s2 = np.asarray(s2)
    is_real = np.isrealobj(s2)
    x2 = s2.astype(complex) * radius**2
    x = np.sqrt(x2)
    out = np.empty_like(x2)
    small = np.abs(x) < 1e-2
    xs = x[~small]
    out[~small] = (np.sin(xs) - xs * np.cos(xs)) / xs**3
    t = x2[small]
    out[small] = 1 / 3 - t / 30 + t**2 / 840 - t**3 / 45360
    out *= 4 * np.pi * radius**3
    return out.real if is_real else out


def bump_fourier(amplitude, radius, xi_norm):
    """Transform of the smooth bump at real ``|xi|`` by 1-D adaptive quadrature."""
    def one(s):
        if s == 0:
            f = lambda r: r * r * bump_profile(r / radius)
        else:
            f = lambda r: r * np.sin(s * r) / s * bump_profile(r / radius)
        val, _ = integrate.quad(f, 0.0, radius, epsabs=0.0, epsrel=1e-12, limit=200)
        return 4 * np.pi * amplitude * val
    return np.vectorize(one, otypes=[float])(np.asarray(xi_norm, dtype=float))


# -- partial waves -----------------------------------------------------------

def _radial_pair(l, K2, r):
    """Regular/irregular radial solutions and derivatives for local ``K^2``.

    Returns ``(f1, f1', f2, f2')`` in r.
    """
    if K2 > 0:
        K = np.sqrt(K2)
        x = K * r
        return (special.spherical_jn(l, x), K * special.spherical_jn(l, x, derivative=True),
                special.spherical_yn(l, x), K * special.spherical_yn(l, x, derivative=True))
    if K2 < 0:
        K = np.sqrt(-K2)
        x = K * r
        return (special.spherical_in(l, x), K * special.spherical_in(l, x, derivative=True),
                special.spherical_kn(l, x), K * special.spherical_kn(l, x, derivative=True))
    return (r**l, l * r ** (l - 1) if l else 0.0, r ** (-l - 1), -(l + 1) * r ** (-l - 2))


def _propagate(well: RadialWell, energy: float, l: int):
    """Value and derivative of the regular solution at the outermost radius.

    ``energy`` is ``k^2`` (negative for bound states).  The pair is rescaled
    after each shell; only the logarithmic derivative matters.
    """
    f1, d1, _, _ = _radial_pair(l, energy - well.values[0], well.radii[0])
    psi, dpsi = f1, d1
    for i in range(1, len(well.radii)):
        K2 = energy - well.values[i]
        a1, b1, a2, b2 = _radial_pair(l, K2, well.radii[i - 1])
        c1, c2 = np.linalg.solve([[a1, a2], [b1, b2]], [psi, dpsi])
        e1, g1, e2, g2 = _radial_pair(l, K2, well.radii[i])
        psi, dpsi = c1 * e1 + c2 * e2, c1 * g1 + c2 * g2
        scale = max(abs(psi), abs(dpsi))
        psi, dpsi = psi / scale, dpsi / scale
    return psi, dpsi


def partial_wave_coefficients(well: RadialWell, k: float):
    """``e^{i delta_l} sin(delta_l)`` for ``l = 0..L`` with the series truncated
    once ``(2l+1)|e^{i delta_l} sin delta_l|`` drops below 1e-12 of the largest term
    for two consecutive ``l``.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    R = well.radii[-1]
    x = k * R
    coeffs = []
    biggest = 0.0
    quiet = 0
    for l in range(MAX_L + 1):
        psi, dpsi = _propagate(well, k * k, l)
        j, jp = special.spherical_jn(l, x), special.spherical_jn(l, x, derivative=True)
        y, yp = special.spherical_yn(l, x), special.spherical_yn(l, x, derivative=True)
        num = k * jp * psi - j * dpsi
        den = k * yp * psi - y * dpsi
        # tan(delta) = num/den; e^{i delta} sin(delta) = num / (den - i num)
        c = num / (den - 1j * num) if np.isfinite(den) else 0.0 + 0.0j
        coeffs.append(complex(c))
        term = (2 * l + 1) * abs(c)
        biggest = max(biggest, term)
        quiet = quiet + 1 if term <= TRUNCATION * biggest else 0
        if biggest == 0.0 and l >= 1:
            return np.zeros(1, complex)
        if quiet >= 2:
            return np.array(coeffs)
    raise ArithmeticError(f"partial-wave series needs more than {MAX_L} terms")


def partial_wave_amplitude(well: RadialWell, k: float, theta):
    """Scattering amplitude ``A(theta) = (1/k) sum (2l+1) e^{i d_l} sin d_l P_l(cos theta)``."""
    c = partial_wave_coefficients(well, k)
    l = np.arange(len(c))
    mu = np.cos(np.asarray(theta, dtype=float))
    series = np.polynomial.legendre.legval(mu, (2 * l + 1) * c)
    return series / k


def scattering_length(well: RadialWell) -> float:
    """Zero-energy s-wave scattering length ``a_s`` (``A -> -a_s`` as ``k -> 0``)."""
    # regular zero-energy solution of u'' = q u carried to the last radius
    u, du = 0.0, 1.0
    r_prev = 0.0
    for R, V in zip(well.radii, well.values):
        L = R - r_prev
        if V > 0:
            K = np.sqrt(V)
            u, du = u * np.cosh(K * L) + du * np.sinh(K * L) / K, u * K * np.sinh(K * L) + du * np.cosh(K * L)
        elif V < 0:
            K = np.sqrt(-V)
            u, du = u * np.cos(K * L) + du * np.sin(K * L) / K, -u * K * np.sin(K * L) + du * np.cos(K * L)
        else:
            u, du = u + du * L, du
        r_prev = R
    return well.radii[-1] - u / du


def bound_state_kappas(well: RadialWell, l: int = 0, samples: int = 4000):
    """All ``kappa > 0`` with ``-kappa^2`` an eigenvalue in partial wave ``l``.

    Shooting in ``kappa``: the interior solution is propagated shell by shell
    and matched to the decaying exterior solution ``k_l(kappa r)``; sign
    changes of the Wronskian mismatch are refined with Brent's method.
    """
    depth = max(0.0, -min(well.values))
    if depth == 0.0:
        return np.array([])
    R = well.radii[-1]

    def mismatch(kappa):
        psi, dpsi = _propagate(well, -kappa * kappa, l)
        x = kappa * R
        kn = special.spherical_kn(l, x)
        dkn = kappa * special.spherical_kn(l, x, derivative=True)
        return (dpsi * kn - psi * dkn) / np.hypot(psi, dpsi) / abs(kn)

    grid = np.linspace(1e-6, np.sqrt(depth) * (1 - 1e-9), samples)
    vals = np.array([mismatch(x) for x in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.sign(fa) != np.sign(fb) and np.isfinite(fa) and np.isfinite(fb):
            root = optimize.brentq(mismatch, a, b, xtol=1e-14)
            if abs(mismatch(root)) < 1e-6:
                roots.append(root)
    return np.array(sorted(roots))


# -- Born ----------------------------------------------------------------------

def born_amplitude_closed_form(family, k, alpha, beta):
    """First Born amplitude ``-(1/4 pi) q~(k (alpha - beta))``.

    ``family`` is a :class:`RadialWell` or :class:`GaussianFamily`; ``k`` may be
    complex.  ``beta`` may be an array of directions with shape ``(m, 3)``.
    """
    alpha = unit_vector(alpha)
    beta = np.asarray(beta, dtype=float)
    xi = k * (alpha - beta)
    return -family.fourier(xi) / (4 * np.pi)
