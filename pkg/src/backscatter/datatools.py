"""Bounded noise and the tail/compactness calculus for decaying potentials.

A potential decaying like ``|x|^-gamma`` contributes ``O(R^(3-gamma))`` to the
amplitudes from outside the ball of radius ``R``.  Data known to accuracy
``delta`` therefore only see ``q`` inside ``R ~ delta^(1/(3-gamma))``.  The
constant in the ``O`` is unknown and fixed to 1, so these are
order-of-magnitude values.
"""

from __future__ import annotations

import math

import numpy as np

from .core_types import FarFieldDataset, GridSpec, PotentialGrid, WaveParams, ball_indicator_weights
from .far_field import amplitude
from .forward_solver import solve_scattering

ULP_SEARCH = 64


def add_noise(dataset: FarFieldDataset, delta: float, seed=None) -> FarFieldDataset:
    """Add ``m exp(i phi)`` to every amplitude, ``m ~ U[0, delta)``, ``phi ~ U[0, 2 pi)``.

    Every perturbation is strictly smaller than ``delta`` in modulus.  The
    generator is ``numpy.random.default_rng(seed)``, owned by this call.
    """
    if not delta >= 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return dataset
    rng = np.random.default_rng(seed)
    m = len(dataset)
    modulus = rng.uniform(0.0, delta, m)
    phase = rng.uniform(0.0, 2 * np.pi, m)
    return dataset.with_amplitudes(dataset.amplitudes + modulus * np.exp(1j * phase))


def _check_gamma(gamma):
    if not gamma > 3:
        raise ValueError(f"gamma must exceed 3 for an integrable tail, got {gamma}")


def tail_contribution(gamma: float, R: float) -> float:
    """Model size ``R^(3-gamma)`` of the tail beyond radius ``R``."""
    _check_gamma(gamma)
    if not R > 0:
        raise ValueError("R must be positive")
    return R ** (3.0 - gamma)


def radius_of_compactness(delta: float, gamma: float) -> float:
    """Radius ``delta^(1/(3-gamma))`` beyond which the tail drops below ``delta``.

    Among the floats next to the rounded power, the one whose
    :func:`tail_contribution` is closest to ``delta`` is returned, so the
    round trip is exact whenever binary64 admits such a radius.

    Raises
    ------
    OverflowError
        If the radius is not representable (``gamma`` close to 3, tiny ``delta``).
    """
    _check_gamma(gamma)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    try:
        R = delta ** (1.0 / (3.0 - gamma))
    except OverflowError:
        raise OverflowError(f"radius for delta={delta}, gamma={gamma} exceeds the float range") from None
    best, err = R, abs(tail_contribution(gamma, R) - delta)
    lo = hi = R
    for _ in range(ULP_SEARCH):
        if err == 0:
            break
        lo, hi = math.nextafter(lo, 0.0), math.nextafter(hi, math.inf)
        for cand in (lo, hi):
            e = abs(tail_contribution(gamma, cand) - delta)
            if e < err:
                best, err = cand, e
    return best


def power_law_potential(grid: GridSpec, gamma: float, R: float, amplitude: float = 0.05,
                        center=(0.0, 0.0, 0.0)) -> PotentialGrid:
    """``amplitude (1 + |x|^2)^(-gamma/2)`` truncated to the ball of radius ``R``.

    The truncation uses the moment-free ball filter of
    :func:`~backscatter.core_types.ball_indicator_weights`.
    """
    _check_gamma(gamma)
    r = grid.radius(center)
    weights = ball_indicator_weights(grid, center, R)
    return PotentialGrid.on(grid, amplitude * (1 + r * r) ** (-gamma / 2) * weights,
                            smoothness_l=3)


def truncation_experiment(gamma: float, R: float, grid: GridSpec, k: float = 0.5,
                          amplitude_: float = 0.05, direction=(0.0, 0.0, 1.0),
                          r_ref: float | None = None, tol: float = 1e-10) -> dict:
    """Measure how the tail beyond ``R`` and ``2R`` moves the forward amplitude.

    ``delta(R) = |A(q_ref) - A(q_R)|`` with ``q_ref`` truncated at the
    largest radius the grid allows.  The model predicts
    ``delta(2R) / delta(R) ~ 2^(3-gamma)``.  The forward direction is used
    because its Born term is the plain integral of ``q``, where the tail
    enters without oscillatory cancellation.
    """
    _check_gamma(gamma)
    if r_ref is None:
        r_ref = grid.max_support_radius() - 2 * grid.h - 1e-9
    if not 2 * R < r_ref:
        raise ValueError("2R must lie inside the reference radius")
    wave = WaveParams(k, 0.0, tuple(direction))

    def amp(radius):
        q = power_law_potential(grid, gamma, radius, amplitude_)
        return amplitude(q, solve_scattering(q, wave, tol=tol), direction)

    ref, a1, a2 = amp(r_ref), amp(R), amp(2 * R)
    d1, d2 = abs(ref - a1), abs(ref - a2)
    return {
        "gamma": gamma, "R": R, "r_ref": r_ref, "k": k,
        "delta_R": d1, "delta_2R": d2,
        "ratio": d2 / d1 if d1 else float("nan"),
        "predicted": 2.0 ** (3.0 - gamma),
    }
