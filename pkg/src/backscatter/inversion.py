"""Reconstruction from backscattering data.

With ``q2 = 0`` the difference identity reads, along the backscattering slice,

    -4 pi A(-beta, beta, k) = q~(2 k beta) + int q exp(2 i k beta.x) eps1 dx,

so ``-4 pi A`` samples ``q~`` on the ball ``|xi| <= 2 k_max`` up to the
multiple-scattering term.  :func:`born_inversion` drops that term;
:func:`fixed_point_refine` restores it iteratively.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import cKDTree

from .core_types import (FarFieldDataset, GridSpec, PotentialGrid, SpectralField, grid_l1_norm,
                         grid_l2_norm, unit_vector, WaveParams)
from .errors import CoverageError, DivergenceError
from .far_field import _map, _solve_or_none, amplitude, backscattering_dataset, fixed_incident_dataset
from .spectral import fourier_at, fourier_inverse

logger = logging.getLogger(__name__)

COVERAGE_LIMIT = 0.2
IDW_NEIGHBOURS = 8
MAX_ITER = 300


def _samples(dataset: FarFieldDataset):
    if dataset.kind != "backscatter":
        raise ValueError("reconstruction needs a backscatter dataset")
    ok = dataset.valid & np.isfinite(dataset.amplitudes)
    if np.any(dataset.etas[ok] != 0):
        raise ValueError("reconstruction uses real-k data; complex-shift records are not samples of q~")
    xi = 2 * dataset.ks[ok, None] * dataset.alphas[ok]
    values = -4 * np.pi * dataset.amplitudes[ok]
    # q is real, so q~(-xi) = conj q~(xi)
    return np.concatenate([xi, -xi]), np.concatenate([values, np.conj(values)])


def support_mask(grid: GridSpec, support_radius: float | None = None, center=(0.0, 0.0, 0.0)):
    """Nodes where a reconstruction may be non-zero."""
    mask = ~grid.boundary_mask()
    if support_radius is not None:
        mask &= grid.radius(center) <= support_radius
    return mask


def project(values, grid: GridSpec, support_radius: float | None = None,
            center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Real part and support projection; idempotent."""
    return np.where(support_mask(grid, support_radius, center), np.real(values), 0.0)


def _reconstruct(xi, values, grid: GridSpec, check_coverage=True):
    """Band-limited field whose transform interpolates the samples ``(xi, values)``."""
    axis = (np.arange(grid.n) - grid.n // 2) * (np.pi / grid.half_width)
    dxi = axis[1] - axis[0]
    radius = min(float(np.max(np.linalg.norm(xi, axis=1))) if len(xi) else 0.0, np.pi / grid.h)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.stack([X, Y, Z], axis=-1)
    ball = np.sqrt(X**2 + Y**2 + Z**2) <= radius
    spec = np.zeros(grid.shape, complex)
    if not len(xi):
        return spec, 0.0
    tree = cKDTree(xi)
    dist, _ = tree.query(nodes[ball])
    uncovered = float(np.mean(dist > dxi))
    if check_coverage and uncovered > COVERAGE_LIMIT:
        raise CoverageError(f"{100 * uncovered:.1f}% of the data ball has no sample within one cell")
    xi, first = np.unique(xi, axis=0, return_index=True)
    values = values[first]
    spec[ball] = LinearNDInterpolator(xi, values)(nodes[ball])
    gap = ball & ~np.isfinite(spec)
    if np.any(gap):
        # outside the convex hull of the samples
        kq = min(IDW_NEIGHBOURS, len(xi))
        d, i = cKDTree(xi).query(nodes[gap], k=kq)
        d, i = d.reshape(-1, kq), i.reshape(-1, kq)
        w = 1.0 / np.maximum(d, 1e-12 * dxi) ** 2
        spec[gap] = np.sum(w * values[i], axis=1) / np.sum(w, axis=1)
    field = fourier_inverse(SpectralField(axis, spec), grid)
    return field, uncovered


def born_inversion(dataset: FarFieldDataset, grid: GridSpec, support_radius: float | None = None,
                   center=(0.0, 0.0, 0.0), smoothness_l: int = 3) -> PotentialGrid:
    """Born reconstruction: ``q~(2 k beta) ~ -4 pi A(-beta, beta, k)``.

    Nodes of the dual grid of ``grid`` inside the ball ``|xi| <= 2 k_max``
    are interpolated piecewise linearly over the Delaunay tetrahedra of the
    samples; nodes outside their convex hull are filled by inverse-distance
    weighting and the rest of frequency space is zero.  The inverse
    transform is projected to real values on the support.

    Raises
    ------
    CoverageError
        If more than 20% of the nodes in the data ball have no sample within
        one frequency cell.
    """
    xi, values = _samples(dataset)
    field, _ = _reconstruct(xi, values, grid)
    imag = np.linalg.norm(np.imag(field))
    real = np.linalg.norm(np.real(field))
    if imag > 0.1 * real:
        logger.warning("reconstruction has a large imaginary part (%.2e vs %.2e)", imag, real)
    return PotentialGrid.on(grid, project(field, grid, support_radius, center), smoothness_l)


def born_consistent_dataset(q: PotentialGrid, betas, ks) -> FarFieldDataset:
    """Backscattering records with ``A = -q~(2 k beta) / 4 pi`` exactly (no multiple scattering)."""
    betas = np.array([unit_vector(b) for b in np.atleast_2d(betas)])
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    alpha = np.repeat(betas, len(ks), axis=0)
    k = np.tile(ks, len(betas))
    amps = -fourier_at(q.values, q.grid, 2 * k[:, None] * alpha) / (4 * np.pi)
    return FarFieldDataset(-alpha, alpha, k, np.zeros(len(k)), amps, "backscatter")


def _predict(q: PotentialGrid, dataset: FarFieldDataset, tol, threads):
    """Forward amplitudes of ``q`` at every record of a backscattering dataset."""
    def one(i):
        alpha, k = dataset.alphas[i], float(dataset.ks[i])
        if not dataset.valid[i]:
            return np.nan + 0j
        sol = _solve_or_none(q, WaveParams(k, 0.0, tuple(alpha)), tol, MAX_ITER)
        return np.nan + 0j if sol is None else amplitude(q, sol, -alpha)
    return np.array(_map(one, range(len(dataset)), threads), dtype=complex)


def misfit(dataset: FarFieldDataset, predicted) -> float:
    """Relative l2 data misfit over the valid records."""
    ok = dataset.valid & np.isfinite(dataset.amplitudes)
    r = np.asarray(predicted)[ok] - dataset.amplitudes[ok]
    return float(np.linalg.norm(r) / max(np.linalg.norm(dataset.amplitudes[ok]), np.finfo(float).tiny))


class Iterates(list):
    """Refinement iterates ``[q0, q1, ...]`` with the data misfit of each."""

    def __init__(self, items=(), misfits=()):
        super().__init__(items)
        self.misfits = list(misfits)


def fixed_point_refine(dataset: FarFieldDataset, q_init: PotentialGrid, n_iter: int = 3,
                       eta: float = 0.0, tol: float = 1e-6, threads: int = 1,
                       support_radius: float | None = None, center=(0.0, 0.0, 0.0)) -> Iterates:
    """Correct the Born reconstruction for multiple scattering.

    Each step solves the forward problem at the current iterate, forms the
    residual ``-4 pi (A_data - A(q_n))`` and adds its band-limited
    reconstruction:

        q_{n+1} = q_n + w_n P[R(-4 pi (A_data - A(q_n)))],

    with ``R`` the Born reconstruction operator and ``P`` the real-part and
    support projection.  The step ``w_n`` minimises the misfit of the
    Born-linearised prediction ``A(q_n) - u~(2 k beta) / 4 pi`` along the
    update ``u``; without it the interpolation error of ``R`` makes full
    steps overshoot once the misfit reaches that error.  A fixed point
    reproduces the data, and ``q_n = q`` is fixed for exact data.  Returns ``n_iter + 1`` iterates starting with
    ``q_init``; ``misfits[i]`` belongs to iterate ``i``.

    Raises
    ------
    DivergenceError
        If the misfit increases for two consecutive iterations.
    """
    if eta != 0.0:
        raise ValueError("refinement works on real-k backscattering data (eta = 0)")
    grid = q_init.grid
    ok = dataset.valid & np.isfinite(dataset.amplitudes)
    xi_all = 2 * dataset.ks[:, None] * dataset.alphas
    iterates = Iterates([q_init])
    q = q_init
    rises = 0
    for it in range(n_iter + 1):
        pred = _predict(q, dataset, tol, threads)
        iterates.misfits.append(misfit(dataset, pred))
        logger.info("refine iteration %d misfit %.6e", it, iterates.misfits[-1])
        if it > 0 and iterates.misfits[-1] > iterates.misfits[-2]:
            rises += 1
            if rises >= 2:
                raise DivergenceError(f"misfit increased twice in a row: {iterates.misfits}")
        else:
            rises = 0
        if it == n_iter:
            break
        resid = -4 * np.pi * (dataset.amplitudes[ok] - pred[ok])
        xi = np.concatenate([xi_all[ok], -xi_all[ok]])
        vals = np.concatenate([resid, np.conj(resid)])
        update, _ = _reconstruct(xi, vals, grid)
        update = project(update, grid, support_radius, center)
        # step length minimising the Born-linearised misfit along the update
        change = -fourier_at(update, grid, xi_all[ok]) / (4 * np.pi)
        d = dataset.amplitudes[ok] - pred[ok]
        denom = np.vdot(change, change).real
        step = np.vdot(change, d).real / denom if denom > 0 else 0.0
        logger.info("refine iteration %d step %.4f", it, step)
        q = q.with_values(project(q.values + step * update, grid, support_radius, center))
        iterates.append(q)
    return iterates


def uniqueness_experiment(q1: PotentialGrid, q2: PotentialGrid, betas, ks, eta: float = 0.0,
                          tol: float = 1e-8, kind: str = "backscatter", alpha0=(0.0, 0.0, 1.0),
                          threads: int = 1) -> dict:
    """Data discrepancy against potential discrepancy for one pair.

    Returns ``delta_A`` (max record difference), ``p_l1``, ``p_l2`` and
    ``p_linf``; ``kind`` selects backscattering or fixed-incident data.
    """
    if kind == "backscatter":
        d1 = backscattering_dataset(q1, betas, ks, eta, tol, threads=threads)
        d2 = backscattering_dataset(q2, betas, ks, eta, tol, threads=threads)
    elif kind == "fixed_incident":
        d1 = fixed_incident_dataset(q1, alpha0, betas, ks, eta, tol, threads=threads)
        d2 = fixed_incident_dataset(q2, alpha0, betas, ks, eta, tol, threads=threads)
    else:
        raise ValueError("kind must be backscatter or fixed_incident")
    p = q1.values - q2.values
    return {
        "kind": kind,
        "delta_A": float(np.max(np.abs(d1.amplitudes - d2.amplitudes))),
        "p_l1": grid_l1_norm(p, q1.grid),
        "p_l2": grid_l2_norm(p, q1.grid),
        "p_linf": float(np.max(np.abs(p))),
        "records": len(d1),
        "tol": tol,
    }
