"""Scattering amplitudes and the two data slices used for inversion.

The amplitude is the quadrature of the representation integral

    A(beta, alpha, k~) = -(1/4 pi) int exp(-i k~ beta.x) q(x) u(x, alpha, k~) dx,

which is the difference identity with the second potential set to zero.
At complex ``k~`` the same integral defines the continued amplitude.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core_types import FarFieldDataset, PotentialGrid, ScatteringSolution, WaveParams, unit_vector
from .errors import ConvergenceError, GridError
from .forward_solver import solve_scattering

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("bx", "by", "bz", "ax", "ay", "az", "k", "eta", "reA", "imA")


def _check_same_grid(q: PotentialGrid, solution: ScatteringSolution):
    if solution.grid != q.grid:
        raise GridError("solution and potential live on different grids")


def amplitudes(q: PotentialGrid, solution: ScatteringSolution, betas) -> np.ndarray:
    """Amplitudes for many observation directions ``betas`` of shape ``(m, 3)``."""
    _check_same_grid(q, solution)
    grid = q.grid
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    kt = solution.wave.ktilde
    alpha = solution.wave.alpha_array
    X, Y, Z = grid.coords
    mask = q.values != 0
    pts = np.stack([X[mask], Y[mask], Z[mask]], axis=1)
    density = q.values[mask] * solution.v[mask]
    phase = np.exp(1j * kt * (pts @ (alpha[:, None] - betas.T)))
    return -(grid.cell_volume / (4 * np.pi)) * (density @ phase)


def amplitude(q: PotentialGrid, solution: ScatteringSolution, beta) -> complex:
    """``A(beta, alpha, k + i eta)`` for the incident data stored in ``solution``."""
    return complex(amplitudes(q, solution, [beta])[0])


def _map(func, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(it) for it in items]


def _solve_or_none(q, wave, tol, max_iter):
    try:
        return solve_scattering(q, wave, tol=tol, max_iter=max_iter)
    except ConvergenceError as exc:
        logger.warning("record dropped: %s", exc)
        return None


def backscattering_dataset(q: PotentialGrid, betas, ks, eta: float = 0.0, tol: float = 1e-8,
                           max_iter: int = 300, threads: int = 1) -> FarFieldDataset:
    """``A(-beta, beta, k + i eta)`` for every pair of ``betas`` x ``ks``.

    Records are ordered beta-major.  A record whose solve does not converge
    is kept with ``valid=False`` and a NaN amplitude.
    """
    betas = np.array([unit_vector(b) for b in np.atleast_2d(betas)])
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    if np.any(ks <= 0):
        raise ValueError("wavenumbers must be positive")
    pairs = [(b, k) for b in betas for k in ks]

    def one(pair):
        beta, k = pair
        sol = _solve_or_none(q, WaveParams(k, eta, tuple(beta)), tol, max_iter)
        return np.nan + 0j if sol is None else amplitude(q, sol, -beta)

    amps = np.array(_map(one, pairs, threads), dtype=complex)
    incident = np.array([b for b, _ in pairs]).reshape(-1, 3)
    return FarFieldDataset(-incident, incident, [k for _, k in pairs], np.full(len(pairs), eta),
                           amps, "backscatter", np.isfinite(amps))


def fixed_incident_dataset(q: PotentialGrid, alpha0, betas, ks, eta: float = 0.0,
                           tol: float = 1e-8, max_iter: int = 300,
                           threads: int = 1) -> FarFieldDataset:
    """``A(beta, alpha0, k + i eta)``; one solve per ``k`` shared by all ``betas``.

    Records are ordered k-major.
    """
    alpha0 = unit_vector(alpha0)
    betas = np.array([unit_vector(b) for b in np.atleast_2d(betas)])
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    if np.any(ks <= 0):
        raise ValueError("wavenumbers must be positive")

    def one(k):
        sol = _solve_or_none(q, WaveParams(k, eta, tuple(alpha0)), tol, max_iter)
        if sol is None:
            return np.full(len(betas), np.nan + 0j)
        return amplitudes(q, sol, betas)

    amps = np.concatenate(_map(one, list(ks), threads))
    m = len(ks) * len(betas)
    return FarFieldDataset(np.tile(betas, (len(ks), 1)), np.tile(alpha0, (m, 1)),
                           np.repeat(ks, len(betas)), np.full(m, eta), amps,
                           "fixed_incident", np.isfinite(amps))


def full_dataset(q: PotentialGrid, pairs, ks, eta: float = 0.0, tol: float = 1e-8,
                 max_iter: int = 300) -> FarFieldDataset:
    """Amplitudes at arbitrary ``(beta, alpha)`` pairs, one solve per ``(alpha, k)``."""
    pairs = [(unit_vector(b), unit_vector(a)) for b, a in pairs]
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    rows = []
    cache = {}
    for k in ks:
        for beta, alpha in pairs:
            key = (k, tuple(alpha))
            if key not in cache:
                cache[key] = _solve_or_none(q, WaveParams(k, eta, tuple(alpha)), tol, max_iter)
            sol = cache[key]
            amp = np.nan + 0j if sol is None else amplitude(q, sol, beta)
            rows.append((beta, alpha, k, amp))
    return FarFieldDataset([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
                           np.full(len(rows), eta), [r[3] for r in rows], "full")


def lemma1_terms(q1: PotentialGrid, q2: PotentialGrid, alpha, beta, wave: WaveParams,
                 tol: float = 1e-10):
    """Both sides of the difference identity for one ``(alpha, beta, k~)``.

    Returns ``(lhs, rhs, A1, A2)`` with ``lhs = -4 pi (A1 - A2)`` and
    ``rhs = int (q1 - q2) u1(x, alpha) u2(x, -beta) dx``.
    """
    alpha, beta = unit_vector(alpha), unit_vector(beta)
    grid = q1.grid
    s1 = solve_scattering(q1, WaveParams(wave.k, wave.eta, tuple(alpha)), tol=tol)
    s2 = solve_scattering(q2, WaveParams(wave.k, wave.eta, tuple(-beta)), tol=tol)
    a1 = amplitude(q1, s1, beta)
    a2 = amplitude(q2, solve_scattering(q2, WaveParams(wave.k, wave.eta, tuple(alpha)), tol=tol), beta)
    p = q1.values - q2.values
    kt = wave.ktilde
    # u1 u2 = exp(i k~ (alpha - beta).x) v1 v2, combined before exponentiating
    prod = np.exp(1j * kt * grid.dot(alpha - beta)) * s1.v * s2.v
    rhs = np.sum(p * prod) * grid.cell_volume
    return -4 * np.pi * (a1 - a2), rhs, a1, a2


def lemma1_residual(q1: PotentialGrid, q2: PotentialGrid, alpha, beta, wave: WaveParams,
                    tol: float = 1e-10) -> float:
    """Absolute defect ``|-4 pi [A1 - A2] - int p u1(., alpha) u2(., -beta)|``.

    Both sides are amplitude-sized, so the defect is compared with the
    solver tolerance directly.
    """
    lhs, rhs, _, _ = lemma1_terms(q1, q2, alpha, beta, wave, tol)
    return float(abs(lhs - rhs))


def sphere_rule(degree: int):
    """Product Gauss-Legendre x trapezoid rule on the unit sphere.

    Integrates spherical harmonics up to ``degree`` exactly.  Returns
    ``(points, weights)`` with weights summing to ``4 pi``.
    """
    m = degree // 2 + 1
    mu, wmu = np.polynomial.legendre.leggauss(m)
    nphi = degree + 1
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1 - mu**2)
    pts = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                    np.outer(mu, np.ones(nphi))], axis=-1).reshape(-1, 3)
    w = np.outer(wmu, np.full(nphi, 2 * np.pi / nphi)).reshape(-1)
    return pts, w


def write_csv(dataset: FarFieldDataset, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for rec in dataset.records:
            out.writerow([*map(repr, rec.beta.tolist()), *map(repr, rec.alpha.tolist()),
                          repr(rec.k), repr(rec.eta), repr(rec.amplitude.real),
                          repr(rec.amplitude.imag)])
