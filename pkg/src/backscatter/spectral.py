"""Fourier-side machinery: grid transforms, the propagator symbol and ``||eps~||_1``.

The transform is ``p~(xi) = int exp(+i xi.x) p(x) dx``.  On a grid of ``n``
nodes, zero-padded to ``N = pad*n`` nodes per axis, it is evaluated exactly
(for the nodal quadrature) at ``xi_m = m * 2 pi / (N h)``, ``m = -N/2..N/2-1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .core_types import GridSpec, PotentialGrid, ScatteringSolution, SpectralField, WaveParams, unit_vector
from .errors import EwaldSingularityError, GridError
from .forward_solver import solve_scattering

# padding that makes the periodic image of the truncated kernel harmless
TRUNCATED_PAD = 3


def _axis_phase(xi, x0):
    ph = np.exp(1j * xi * x0)
    return ph[:, None, None] * ph[None, :, None] * ph[None, None, :]


def fourier_forward(field, grid: GridSpec, pad: int = 1) -> SpectralField:
    """Nodal-quadrature Fourier transform ``h^3 sum_j exp(i xi.x_j) p_j`` on the dual grid."""
    field = grid.check_field(field)
    if pad < 1 or int(pad) != pad:
        raise ValueError("pad must be a positive integer")
    n, N = grid.n, grid.n * int(pad)
    buf = np.zeros((N,) * 3, complex)
    buf[:n, :n, :n] = field
    s = sfft.fftshift(sfft.ifftn(buf, norm="forward"))
    xi = (np.arange(N) - N // 2) * (2 * np.pi / (N * grid.h))
    values = grid.cell_volume * s * _axis_phase(xi, -grid.half_width)
    if np.isrealobj(field):
        _assert_conjugate_symmetric(values)
    return SpectralField(xi, values)


def _assert_conjugate_symmetric(values, rtol=1e-10):
    # index m <-> -m inside the symmetric block 1..N-1
    inner = values[1:, 1:, 1:]
    mirrored = np.conj(inner[::-1, ::-1, ::-1])
    scale = np.max(np.abs(values)) or 1.0
    err = np.max(np.abs(inner - mirrored)) if inner.size else 0.0
    if err > rtol * scale:
        raise ArithmeticError(f"real input lost conjugate symmetry (defect {err / scale:.2e})")


def fourier_inverse(sf: SpectralField, grid: GridSpec) -> np.ndarray:
    """Inverse of :func:`fourier_forward`, cropped back to the ``n^3`` box."""
    N = len(sf.xi_axis)
    if N % grid.n:
        raise GridError("frequency grid is not a padding of this spatial grid")
    if not np.isclose(sf.dxi, 2 * np.pi / (N * grid.h), rtol=1e-12):
        raise GridError("frequency spacing does not match this spatial grid")
    s = sf.values * np.conj(_axis_phase(sf.xi_axis, -grid.half_width))
    out = sfft.fftn(sfft.ifftshift(s)) / (N * grid.h) ** 3
    n = grid.n
    return out[:n, :n, :n]


def fourier_at(field, grid: GridSpec, xi) -> np.ndarray:
    """Direct evaluation of ``p~`` at arbitrary (possibly complex) frequencies ``(m, 3)``."""
    field = grid.check_field(field)
    xi = np.atleast_2d(np.asarray(xi))
    mask = field != 0
    X, Y, Z = grid.coords
    pts = np.stack([X[mask], Y[mask], Z[mask]], axis=1)
    return grid.cell_volume * (np.exp(1j * (xi @ pts.T)) @ field[mask])


def _denominator(xi, k, eta, beta):
    xi = np.asarray(xi, dtype=float)
    beta = unit_vector(beta)
    return np.sum(xi * xi, axis=-1) - 2 * complex(k, eta) * (xi @ beta)


def green_kernel_hat(xi, k: float, eta: float, beta) -> np.ndarray:
    """``-1 / (|xi|^2 - 2 (k + i eta) beta.xi)``, the symbol mapping ``psi~`` to ``eps~``.

    Raises
    ------
    EwaldSingularityError
        At ``xi = 0`` and, for ``eta = 0``, on the sphere ``|xi|^2 = 2k beta.xi``.
    """
    xi = np.asarray(xi, dtype=float)
    D = _denominator(xi, k, eta, beta)
    scale = np.maximum(1.0, np.sum(xi * xi, axis=-1))
    if np.any(np.abs(D) <= 1e-14 * scale):
        raise EwaldSingularityError("symbol denominator vanishes (xi = 0 or Ewald sphere)")
    return -1.0 / D


def _sinc(z):
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-4
    out[~small] = np.sin(z[~small]) / z[~small]
    t = z[small] ** 2
    out[small] = 1 - t / 6 + t * t / 120
    return out


def _phi(w, R):
    # (exp(i w R) - 1) / (i w), stable at w -> 0
    x = np.asarray(w, dtype=complex) * R
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    out[~small] = (np.exp(1j * x[~small]) - 1) / (1j * x[~small])
    t = x[small]
    out[small] = 1 + 1j * t / 2 - t * t / 6 - 1j * t**3 / 24
    return R * out


def truncated_kernel_hat(xi, k: float, eta: float, beta, radius: float) -> np.ndarray:
    """Transform of ``G(z) = exp(i k~ (|z| - beta.z)) / (4 pi |z|)`` cut to ``|z| < radius``.

    ``(1 - exp(i k~ R)(cos sR - i k~ R sinc sR)) / D`` with ``s^2 = D + k~^2``;
    an entire function of ``xi``, so it can be sampled on a grid without
    the singularities of the untruncated symbol.
    """
    kt = complex(k, eta)
    D = np.asarray(_denominator(xi, k, eta, beta), dtype=complex)
    s = np.sqrt(D + kt * kt)
    R = radius
    out = np.empty_like(D)
    big = np.abs(D) > 1e-3 * max(abs(kt) ** 2, 1e-300)
    sb = s[big]
    out[big] = (1 - np.exp(1j * kt * R) * (np.cos(sb * R) - 1j * kt * R * _sinc(sb * R))) / D[big]
    ss = s[~big]
    out[~big] = (_phi(kt + ss, R) - _phi(kt - ss, R)) / (2j * ss)
    return out


def _require_damping(eta):
    if not eta > 0:
        raise ValueError("eta must be positive: at real k the symbol is singular on the Ewald sphere")


def _direction(solution: ScatteringSolution, beta):
    alpha = solution.wave.alpha_array
    if beta is not None and np.max(np.abs(unit_vector(beta) - alpha)) > 1e-12:
        raise ValueError("beta must equal the incident direction of the solution")
    return alpha


def epsilon_hat(q: PotentialGrid, solution: ScatteringSolution, beta=None, pad: int = 2) -> SpectralField:
    """``eps~ = -psi~ / (|xi|^2 - 2 k~ beta.xi)`` with ``psi = q v`` on the dual grid.

    The ``xi = 0`` node, where the symbol is singular but integrable, is set
    to zero; :func:`epsilon_hat_l1` accounts for its cell analytically.
    """
    _require_damping(solution.wave.eta)
    beta = _direction(solution, beta)
    psi = fourier_forward(q.values * solution.v, q.grid, pad)
    X, Y, Z = psi.xi_grid
    xi = np.stack([X, Y, Z], axis=-1)
    D = _denominator(xi, solution.wave.k, solution.wave.eta, beta)
    centre = len(psi.xi_axis) // 2
    D[centre, centre, centre] = np.inf
    return SpectralField(psi.xi_axis, -psi.values / D)


def epsilon_spectral_route(q: PotentialGrid, solution: ScatteringSolution, pad: int = TRUNCATED_PAD):
    """``eps`` on the grid, assembled in frequency space and transformed back.

    Uses the transform of the kernel truncated to the box diameter, which
    coincides with the full kernel for every pair of nodes; with
    ``pad >= 1 + sqrt(3)`` the periodic images do not reach the box.
    """
    grid = q.grid
    if pad < 1 + np.sqrt(3):
        raise ValueError("pad must be at least 1 + sqrt(3)")
    psi = fourier_forward(q.values * solution.v, grid, pad)
    X, Y, Z = psi.xi_grid
    w = solution.wave
    sym = truncated_kernel_hat(np.stack([X, Y, Z], axis=-1), w.k, w.eta, w.alpha,
                               2 * np.sqrt(3) * grid.half_width)
    return fourier_inverse(SpectralField(psi.xi_axis, -psi.values * sym), grid)


# -- L1 norm --------------------------------------------------------------------

def t_integral(r, k: float, eta: float):
    """``int_{-1}^{1} dt / sqrt((r - 2kt)^2 + 4 eta^2 t^2)`` in closed form.

    Equals ``log(N/M) / (2 sqrt(k^2+eta^2))`` with
    ``N = 1-a+sqrt((1-a)^2+b)``, ``M = -1-a+sqrt((1+a)^2+b)``,
    ``a = kr/(2(k^2+eta^2))`` and ``b = eta^2 r^2 / (4 (k^2+eta^2)^2)``.
    Both ``N`` and ``M`` are evaluated without cancellation.
    """
    r = np.asarray(r, dtype=float)
    s = k * k + eta * eta
    a = k * r / (2 * s)
    b = (eta * r) ** 2 / (4 * s * s)
    rp = np.sqrt((1 + a) ** 2 + b)
    rm = np.sqrt((1 - a) ** 2 + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        M = b / (1 + a + rp)
        N = np.where(a <= 1, 1 - a + rm, b / (a - 1 + rm))
        return np.log(N / M) / (2 * np.sqrt(s))


def _radial_l1(k, eta, lo, hi, weight=None):
    """``2 pi int_lo^hi r T(r) w(r) dr``: the integral of ``w(|xi|)/|D|`` over a shell."""
    f = (lambda r: r * t_integral(r, k, eta)) if weight is None \
        else (lambda r: r * t_integral(r, k, eta) * weight(r))
    val, _ = integrate.quad(f, lo, hi, limit=400, epsabs=0.0, epsrel=1e-10)
    return 2 * np.pi * val


@dataclass(frozen=True)
class L1Estimate:
    value: float            # (2 pi)^-3 ||eps~||_1
    inner_part: float       # contribution of the Nyquist ball |xi| <= pi/h
    origin_part: float      # analytic xi = 0 cell ("grid" method only)
    tail_part: float        # decay bound outside the Nyquist ball
    decay_constant: float   # max (1+|xi|)^l |psi~| on the outer half of the Nyquist ball
    smoothness_l: float
    method: str


def psi_decay_bound(q: PotentialGrid, solution: ScatteringSolution, l: float | None = None,
                    pad: int = 1) -> float:
    """``max (1+|xi|)^l |psi~(xi)|`` over the whole dual grid."""
    l = q.smoothness_l if l is None else l
    psi = fourier_forward(q.values * solution.v, q.grid, pad)
    return float(np.max((1 + psi.xi_norm) ** l * np.abs(psi.values)))


def _frame(beta):
    b = unit_vector(beta)
    e = np.eye(3)[np.argmin(np.abs(b))]
    e1 = np.cross(b, e)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(b, e1), b


def _aligned_inner(psi, grid, k, eta, beta, n_r, n_u, n_phi):
    """Spherical quadrature of ``int_{|xi| <= pi/h} |psi~| / |D| dxi`` about ``beta``.

    In coordinates ``xi = r (sqrt(1-t^2) (cos phi e1 + sin phi e2) + t beta)``
    the weight is ``r dr dt dphi / sqrt((r-2kt)^2 + 4 eta^2 t^2)``.  The
    substitution ``t = t0 + (m/sqrt(A)) sinh u`` absorbs the weight exactly,
    so the ridge of width ``~ r/eta`` around ``beta.xi = 0`` is resolved at
    any ``eta``.  ``psi~`` is evaluated off-grid by direct summation.
    """
    s = k * k + eta * eta
    mask = psi != 0
    X, Y, Z = grid.coords
    pts = np.stack([X[mask], Y[mask], Z[mask]], axis=1)
    dens = psi[mask] * grid.cell_volume
    panels = 8
    xr, wr = np.polynomial.legendre.leggauss(max(1, n_r // panels))
    edges = np.linspace(0.0, np.pi / grid.h, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    radii = (0.5 * (hi - lo) * xr + 0.5 * (hi + lo)).ravel()
    wradii = (0.5 * (hi - lo) * wr).ravel()
    xu, wu = np.polynomial.legendre.leggauss(n_u)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    e1, e2, b = _frame(beta)
    ring = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    sqrt_a = 2 * np.sqrt(s)
    total = 0.0
    for r, w in zip(radii, wradii):
        t0 = k * r / (2 * s)
        m = r * eta / np.sqrt(s)
        u0 = np.arcsinh((-1 - t0) * sqrt_a / m)
        u1 = np.arcsinh((1 - t0) * sqrt_a / m)
        u = 0.5 * (u1 - u0) * xu + 0.5 * (u1 + u0)
        wt = 0.5 * (u1 - u0) * wu / sqrt_a
        t = np.clip(t0 + m / sqrt_a * np.sinh(u), -1.0, 1.0)
        dirs = np.sqrt(1 - t * t)[:, None, None] * ring[None] + t[:, None, None] * b
        vals = np.abs(np.exp(1j * r * (dirs.reshape(-1, 3) @ pts.T)) @ dens).reshape(n_u, n_phi)
        total += w * r * np.sum(wt[:, None] * vals) * (2 * np.pi / n_phi)
    return total


def _grid_inner(psi_sf, k, eta, beta, xi_max):
    X, Y, Z = psi_sf.xi_grid
    D = _denominator(np.stack([X, Y, Z], axis=-1), k, eta, beta)
    centre = len(psi_sf.xi_axis) // 2
    D[centre, centre, centre] = np.inf
    abspsi = np.abs(psi_sf.values)
    inside = psi_sf.xi_norm <= xi_max
    inner = float(np.sum(abspsi[inside] / np.abs(D[inside]))) * psi_sf.dxi**3
    r_cell = psi_sf.dxi * (3 / (4 * np.pi)) ** (1 / 3)
    origin = abspsi[centre, centre, centre] * _radial_l1(k, eta, 0.0, r_cell)
    return inner, float(origin)


L1_METHODS = ("aligned", "grid")


def epsilon_hat_l1_parts(q: PotentialGrid, solution: ScatteringSolution, pad: int = 2,
                         l: float | None = None, method: str = "aligned",
                         resolution=(48, 40, 32)) -> L1Estimate:
    """Quadrature of ``(2 pi)^-3 int |psi~| / |D| dxi`` with explicit error terms.

    Inside the Nyquist ball ``|xi| <= pi/h``:

    * ``"aligned"`` (default): spherical product rule about ``beta`` that
      integrates the ``1/|D|`` weight exactly, see :func:`_aligned_inner`;
      ``resolution`` is the number of ``(r, t, phi)`` nodes;
    * ``"grid"``: trapezoidal sum on the dual grid with the ``xi = 0`` node
      replaced by ``|psi~(0)|`` times the exact integral of ``1/|D|`` over
      the ball of equal volume.  Cheap, but the ridge of ``1/|D|`` narrows
      like ``1/eta``, so this rule over-counts at large ``eta``.

    Outside, ``|psi~| <= c (1+|xi|)^-l`` with ``c`` measured on the outer
    half of the ball gives an analytic tail.
    """
    w = solution.wave
    _require_damping(w.eta)
    if method not in L1_METHODS:
        raise ValueError(f"method must be one of {L1_METHODS}")
    l = q.smoothness_l if l is None else l
    if l <= 1:
        raise ValueError("the decay tail needs smoothness l > 1")
    psi_x = q.values * solution.v
    psi = fourier_forward(psi_x, q.grid, pad)
    rho = psi.xi_norm
    xi_max = np.pi / q.grid.h
    if method == "aligned":
        inner = _aligned_inner(psi_x, q.grid, w.k, w.eta, w.alpha, *resolution)
        origin = 0.0
    else:
        inner, origin = _grid_inner(psi, w.k, w.eta, w.alpha, xi_max)
    outer = (rho <= xi_max) & (rho > 0.5 * xi_max)
    c = float(np.max((1 + rho[outer]) ** l * np.abs(psi.values[outer])))
    tail = c * _radial_l1(w.k, w.eta, xi_max, np.inf, lambda r: (1 + r) ** (-l))
    norm = (2 * np.pi) ** -3
    return L1Estimate(float(norm * (inner + origin + tail)), float(norm * inner),
                      float(norm * origin), float(norm * tail), c, float(l), method)


def epsilon_hat_l1(q: PotentialGrid, wave: WaveParams, beta=None, tol: float = 1e-10,
                   pad: int = 2, solution: ScatteringSolution | None = None,
                   method: str = "aligned") -> float:
    """``(2 pi)^-3 ||eps~(., beta, k + i eta)||_1`` for incidence along ``beta``."""
    _require_damping(wave.eta)
    if beta is not None:
        wave = wave.with_alpha(unit_vector(beta))
    if q.is_zero():
        return 0.0
    if solution is None:
        solution = solve_scattering(q, wave, tol=tol)
    return epsilon_hat_l1_parts(q, solution, pad, method=method).value


def plancherel_defect(field, grid: GridSpec, pad: int = 1) -> float:
    """Relative gap between ``||p||_2^2`` and ``(2 pi)^-3 ||p~||_2^2`` on the grids."""
    sf = fourier_forward(field, grid, pad)
    lhs = np.sum(np.abs(field) ** 2) * grid.cell_volume
    rhs = np.sum(np.abs(sf.values) ** 2) * sf.dxi**3 / (2 * np.pi) ** 3
    return float(abs(lhs - rhs) / max(lhs, np.finfo(float).tiny))
