"""Lippmann-Schwinger solver in ripple form at complex wavenumber.

With ``k~ = k + i*eta`` and ``u = exp(i k~ alpha.x) v`` the integral equation
``u = exp(i k~ alpha.x) - int g(x-y) q(y) u(y) dy`` becomes

    (I + B) v = 1,    (B v)(x) = int G(x-y) q(y) v(y) dy,

with ``G(z) = g(z) exp(-i k~ alpha.z)`` and ``g(z) = exp(i k~ |z|)/(4 pi |z|)``.
The correction is ``eps = v - 1 = -B v``.  ``B`` is applied by zero-padded
FFT convolution with the nodal kernel on the doubled grid.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .core_types import GridSpec, PotentialGrid, ScatteringSolution, WaveParams
from .errors import ConvergenceError, GridError

logger = logging.getLogger(__name__)

# Origin weights, in units of h^2/(4 pi), for the 1/r part of the kernel.
# "zeta": minus the Epstein zeta value Z_{Z^3}(1/2); the punctured
#   trapezoidal rule plus this weight is exact to O(h^4) for smooth data.
# "cell": integral of 1/r over the unit cube centred at the origin.
ORIGIN_WEIGHTS = {
    "zeta": 2.8372974794806,
    "cell": 3.0 * math.log((math.sqrt(3.0) + 1.0) / (math.sqrt(3.0) - 1.0)) - 0.5 * math.pi,
}
RESOLUTION_LIMIT = 0.5
RESTART = 30


class GridResolutionWarning(UserWarning):
    pass


def green_kernel(x_minus_y, wave: WaveParams):
    """Outgoing Helmholtz kernel ``exp(i k~ r) / (4 pi r)`` at separation(s) ``x - y``."""
    d = np.asarray(x_minus_y, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise ZeroDivisionError("green_kernel is singular at r = 0; use the discrete kernel")
    return np.exp(1j * wave.ktilde * r) / (4.0 * np.pi * r)


@lru_cache(maxsize=6)
def _kernel_hat(half_width, n, ktilde, alpha, origin):
    grid = GridSpec(half_width, n)
    h = grid.h
    m = np.fft.fftfreq(2 * n, d=1.0 / (2 * n))
    mx, my, mz = np.meshgrid(m, m, m, indexing="ij", sparse=True)
    r = h * np.sqrt(mx * mx + my * my + mz * mz)
    phase = r if alpha is None else r - h * (alpha[0] * mx + alpha[1] * my + alpha[2] * mz)
    with np.errstate(divide="ignore", invalid="ignore"):
        ker = np.exp(1j * ktilde * phase) / (4.0 * np.pi * r) * h**3
    ker[0, 0, 0] = (ORIGIN_WEIGHTS[origin] * h**2 + 1j * ktilde * h**3) / (4.0 * np.pi)
    # offset -n never pairs two nodes of an n-point axis
    ker[n, :, :] = 0.0
    ker[:, n, :] = 0.0
    ker[:, :, n] = 0.0
    # truncation ball of radius 2a*sqrt(3) covers every node pair
    ker[r > 2.0 * half_width * math.sqrt(3.0) + 1e-12] = 0.0
    out = sfft.fftn(ker)
    out.setflags(write=False)
    return out


class LsOperator:
    """The operator ``B`` for one potential and one ``(k, eta, alpha)``.

    The precomputed kernel transform is read-only, so one instance may be
    shared by concurrent readers.
    """

    def __init__(self, q: PotentialGrid, wave: WaveParams, origin: str = "zeta"):
        if origin not in ORIGIN_WEIGHTS:
            raise ValueError(f"unknown origin rule {origin!r}")
        self.q_ref = q
        self.wave = wave
        self.grid = q.grid
        self.origin = origin
        # At real k the plane-wave phases are unimodular, so the alpha-free
        # kernel can be shared between directions.  At complex k the phases
        # grow exponentially and the alpha-frame kernel G is used instead.
        self._plain = wave.eta == 0.0
        alpha = None if self._plain else wave.alpha
        self.kernel_hat = _kernel_hat(self.grid.half_width, self.grid.n, wave.ktilde, alpha, origin)
        if self._plain:
            self._phase = np.exp(1j * wave.k * self.grid.dot(wave.alpha))

    def convolve(self, f) -> np.ndarray:
        """Discrete ``int G(x-y) f(y) dy`` at every node."""
        f = self.grid.check_field(f)
        n = self.grid.n
        if self._plain:
            f = self._phase * f
        # pruned transforms: the input fills one octant of the doubled grid
        # and only that octant of the output is kept
        spec = sfft.fft(f, n=2 * n, axis=2)
        spec = sfft.fft(spec, n=2 * n, axis=1)
        spec = sfft.fft(spec, n=2 * n, axis=0)
        spec *= self.kernel_hat
        out = sfft.ifft(spec, axis=0)[:n]
        out = sfft.ifft(out, axis=1)[:, :n]
        out = sfft.ifft(out, axis=2)[:, :, :n]
        if self._plain:
            out *= np.conj(self._phase)
        return out

    def apply(self, v) -> np.ndarray:
        """``B v``."""
        return self.convolve(self.q_ref.values * self.grid.check_field(v))

    def matvec(self, v) -> np.ndarray:
        """``(I + B) v``."""
        return v + self.apply(v)

    def as_linear_operator(self) -> LinearOperator:
        shape = self.grid.shape
        size = int(np.prod(shape))

        def mv(x):
            return self.matvec(x.reshape(shape)).reshape(-1)

        return LinearOperator((size, size), matvec=mv, dtype=complex)


def apply_B(v_field, q: PotentialGrid, wave: WaveParams, origin: str = "zeta") -> np.ndarray:
    return LsOperator(q, wave, origin).apply(v_field)


def _check_resolution(grid: GridSpec, wave: WaveParams):
    kh = wave.k * grid.h
    if kh > RESOLUTION_LIMIT:
        warnings.warn(f"|k|h = {kh:.3g} exceeds {RESOLUTION_LIMIT}; grid too coarse for this wavenumber",
                      GridResolutionWarning, stacklevel=3)


def solve_scattering(q: PotentialGrid, wave: WaveParams, tol: float = 1e-8, max_iter: int = 300,
                     origin: str = "zeta", operator: LsOperator | None = None) -> ScatteringSolution:
    """Solve ``(I + B) v = 1`` by restarted GMRES.

    Raises
    ------
    ConvergenceError
        If the relative residual ``||(I+B)v - 1|| / ||1||`` is still above
        ``tol`` after ``max_iter`` Krylov iterations.
    """
    if not (0.0 < tol <= 1e-2):
        raise ValueError("tol must lie in (0, 1e-2]")
    grid = q.grid
    if q.is_zero():
        return ScatteringSolution(wave, grid, np.ones(grid.shape, complex), 0.0, 0)
    _check_resolution(grid, wave)
    op = operator if operator is not None else LsOperator(q, wave, origin)
    if op.q_ref is not q and (op.q_ref.values.shape != q.values.shape
                              or np.any(op.q_ref.values != q.values)):
        raise GridError("operator was built for a different potential")

    t0 = time.perf_counter()
    A = op.as_linear_operator()
    b = np.ones(A.shape[0], complex)
    bnorm = np.linalg.norm(b)
    x = None
    count = 0
    residual = 1.0
    while residual > tol and count < max_iter:
        steps = []
        budget = max_iter - count
        # a zero start needs no initial matvec; restarts continue from x
        x, _ = gmres(A, b, x0=x, rtol=0.5 * tol, atol=0.0, restart=min(RESTART, budget),
                     maxiter=max(1, math.ceil(budget / RESTART)),
                     callback=steps.append, callback_type="pr_norm")
        count += max(len(steps), 1)
        residual = np.linalg.norm(A.matvec(x) - b) / bnorm
    logger.info(json.dumps({
        "event": "ls_solve", "k": wave.k, "eta": wave.eta, "alpha": list(wave.alpha),
        "n": grid.n, "iterations": count, "residual": float(residual),
        "seconds": round(time.perf_counter() - t0, 6), "converged": bool(residual <= tol)}))
    if residual > tol:
        raise ConvergenceError(
            f"GMRES stalled at relative residual {residual:.3e} after {count} iterations "
            f"(k={wave.k}, eta={wave.eta}); I+B may be nearly singular",
            iterations=count, residual=float(residual))
    return ScatteringSolution(wave, grid, x.reshape(grid.shape), float(residual), count)


def epsilon_field(solution: ScatteringSolution) -> np.ndarray:
    """``eps = v - 1``."""
    return solution.epsilon
