"""Grid geometry, domain containers and synthetic potentials.

Conventions used throughout the package:

* A box ``[-a, a]^3`` is sampled by ``n`` nodes per axis at
  ``x_i = -a + i*h`` with ``h = 2a/n``.  The node set is symmetric under
  ``x -> -x`` except for the ``-a`` layer, which always carries zeros.
* Fields are stored as ``(n, n, n)`` arrays indexed ``[ix, iy, iz]``.
* Fourier transforms use ``p~(xi) = int exp(+i xi.x) p(x) dx`` with inverse
  ``(2 pi)^-3 int exp(-i xi.x) p~(xi) dxi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np

from .errors import GridError, SupportError

FOURIER_SIGN = +1
PADDING_SHELLS = 2
DATASET_KINDS = ("full", "backscatter", "fixed_incident")


def unit_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("cannot normalise the zero vector")
    return v / nrm


def fibonacci_sphere(count: int) -> np.ndarray:
    """Near-uniform points on the unit sphere from the golden-angle spiral.

    Returns an array of shape ``(count, 3)``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass(frozen=True)
class GridSpec:
    half_width: float
    n: int

    def __post_init__(self):
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise GridError(f"half_width must be positive, got {self.half_width}")
        if self.n < 8 or self.n % 2:
            raise GridError(f"n must be even and >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij"))

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(n, n, n, 3)`` array."""
        return np.stack(self.coords, axis=-1)

    def dot(self, direction) -> np.ndarray:
        """``direction . x`` evaluated at every node (complex directions allowed)."""
        d = np.asarray(direction)
        X, Y, Z = self.coords
        return d[0] * X + d[1] * Y + d[2] * Z

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        c = np.asarray(center, dtype=float)
        X, Y, Z = self.coords
        return np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)

    def check_field(self, values) -> np.ndarray:
        values = np.asarray(values)
        if values.shape != self.shape:
            raise GridError(f"field shape {values.shape} does not match grid {self.shape}")
        return values

    def boundary_mask(self, shells: int = PADDING_SHELLS) -> np.ndarray:
        idx = np.arange(self.n)
        edge = (idx < shells) | (idx >= self.n - shells)
        return edge[:, None, None] | edge[None, :, None] | edge[None, None, :]

    def max_support_radius(self) -> float:
        """Largest ball radius (about the origin) clear of the padding shells."""
        return self.half_width - PADDING_SHELLS * self.h


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PotentialGrid:
    """Real, compactly supported potential ``q`` sampled on a cubic grid."""

    half_width_a: float
    n: int
    values: np.ndarray = field(repr=False)
    smoothness_l: int = 3

    def __post_init__(self):
        grid = GridSpec(self.half_width_a, self.n)
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals):
            raise GridError("potential values must be real")
        vals = grid.check_field(vals.astype(float, copy=False))
        if not np.all(np.isfinite(vals)):
            raise GridError("potential values must be finite")
        if np.any(vals[grid.boundary_mask()] != 0.0):
            raise SupportError("potential does not vanish on the two outermost grid shells")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.half_width_a, self.n)

    @classmethod
    def on(cls, grid: GridSpec, values, smoothness_l: int = 3) -> "PotentialGrid":
        return cls(grid.half_width, grid.n, values, smoothness_l)

    def with_values(self, values) -> "PotentialGrid":
        return PotentialGrid(self.half_width_a, self.n, values, self.smoothness_l)

    def __add__(self, other: "PotentialGrid") -> "PotentialGrid":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "PotentialGrid") -> "PotentialGrid":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def scaled(self, factor: float) -> "PotentialGrid":
        return self.with_values(factor * self.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def _check_compatible(self, other):
        if (self.half_width_a, self.n) != (other.half_width_a, other.n):
            raise GridError("potentials live on different grids")


@dataclass(frozen=True)
class WaveParams:
    """Complex wavenumber ``k + i*eta`` with incident direction ``alpha``."""

    k: float
    eta: float = 0.0
    alpha: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (3,):
            raise ValueError("alpha must be a 3-vector")
        if abs(np.linalg.norm(alpha) - 1.0) > 1e-12:
            raise ValueError(f"alpha must be a unit vector, |alpha| = {np.linalg.norm(alpha)!r}")
        if self.k < 0 or self.eta < 0:
            raise ValueError("k and eta must be non-negative")
        if self.k == 0 and self.eta == 0:
            raise ValueError("(k, eta) = (0, 0) is not allowed")
        object.__setattr__(self, "alpha", tuple(float(c) for c in alpha))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def ktilde(self) -> complex:
        return complex(self.k, self.eta)

    @property
    def alpha_array(self) -> np.ndarray:
        return np.array(self.alpha)

    def with_alpha(self, alpha) -> "WaveParams":
        return WaveParams(self.k, self.eta, tuple(alpha))


@dataclass(frozen=True)
class ScatteringSolution:
    """Ripple function ``v = exp(-i k~ alpha.x) u`` with solve diagnostics."""

    wave: WaveParams
    grid: GridSpec
    v: np.ndarray = field(repr=False)
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "v", _freeze(self.grid.check_field(self.v).astype(complex)))

    @property
    def epsilon(self) -> np.ndarray:
        return self.v - 1.0

    @property
    def u(self) -> np.ndarray:
        return np.exp(1j * self.wave.ktilde * self.grid.dot(self.wave.alpha)) * self.v


class Record(NamedTuple):
    beta: np.ndarray
    alpha: np.ndarray
    k: float
    eta: float
    amplitude: complex
    valid: bool


@dataclass(frozen=True)
class FarFieldDataset:
    """Scattering amplitudes ``A(beta, alpha, k + i*eta)`` as column arrays."""

    betas: np.ndarray
    alphas: np.ndarray
    ks: np.ndarray
    etas: np.ndarray
    amplitudes: np.ndarray
    kind: str = "full"
    valid: np.ndarray | None = None

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float).reshape(-1, 3)
        alphas = np.asarray(self.alphas, dtype=float).reshape(-1, 3)
        ks = np.asarray(self.ks, dtype=float).reshape(-1)
        etas = np.asarray(self.etas, dtype=float).reshape(-1)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        m = len(amps)
        if not (len(betas) == len(alphas) == len(ks) == len(etas) == m):
            raise ValueError("dataset columns have different lengths")
        valid = np.ones(m, dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != (m,):
            raise ValueError("valid mask has the wrong length")
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        for name, dirs in (("beta", betas), ("alpha", alphas)):
            if m and np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)) > 1e-12:
                raise ValueError(f"every {name} must be a unit vector")
        if self.kind == "backscatter" and m and np.max(np.abs(betas + alphas)) > 1e-12:
            raise ValueError("backscatter records need beta = -alpha")
        if self.kind == "fixed_incident" and m and np.max(np.abs(alphas - alphas[0])) > 0:
            raise ValueError("fixed_incident records must share one alpha")
        for name, arr in (("betas", betas), ("alphas", alphas), ("ks", ks), ("etas", etas),
                          ("amplitudes", amps), ("valid", valid)):
            object.__setattr__(self, name, _freeze(arr))

    def __len__(self) -> int:
        return len(self.amplitudes)

    @property
    def records(self) -> Iterator[Record]:
        for i in range(len(self)):
            yield Record(self.betas[i], self.alphas[i], float(self.ks[i]), float(self.etas[i]),
                         complex(self.amplitudes[i]), bool(self.valid[i]))

    def with_amplitudes(self, amplitudes) -> "FarFieldDataset":
        return FarFieldDataset(self.betas, self.alphas, self.ks, self.etas, amplitudes,
                               self.kind, self.valid)

    @property
    def frequencies(self) -> np.ndarray:
        """Complex probe frequencies ``k~ (alpha - beta)`` of every record."""
        kt = self.ks + 1j * self.etas
        return kt[:, None] * (self.alphas - self.betas)


@dataclass(frozen=True)
class SpectralField:
    """Values of a Fourier transform on a uniform, centred frequency grid."""

    xi_axis: np.ndarray
    values: np.ndarray = field(repr=False)
    convention: int = FOURIER_SIGN

    def __post_init__(self):
        axis = np.asarray(self.xi_axis, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (len(axis),) * 3:
            raise GridError("spectral values do not match the frequency axis")
        if self.convention != FOURIER_SIGN:
            raise ValueError("only the exp(+i xi.x) convention is supported")
        object.__setattr__(self, "xi_axis", _freeze(axis))
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def dxi(self) -> float:
        return float(self.xi_axis[1] - self.xi_axis[0])

    @cached_property
    def xi_grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.xi_axis, self.xi_axis, self.xi_axis, indexing="ij"))

    @property
    def xi_norm(self) -> np.ndarray:
        X, Y, Z = self.xi_grid
        return np.sqrt(X**2 + Y**2 + Z**2)


# -- norms ------------------------------------------------------------------

def grid_l1_norm(values, grid: GridSpec) -> float:
    """L1 norm by the periodic trapezoidal rule (uniform weights ``h^3``).

    Exact for constants; for fields that vanish near the box faces it is
    the ordinary trapezoidal rule.
    """
    return float(np.sum(np.abs(grid.check_field(values))) * grid.cell_volume)


def grid_l2_norm(values, grid: GridSpec) -> float:
    return float(np.sqrt(np.sum(np.abs(grid.check_field(values)) ** 2) * grid.cell_volume))


def grid_linf_norm(values) -> float:
    values = np.asarray(values)
    return float(np.max(np.abs(values))) if values.size else 0.0


# -- synthetic potentials ---------------------------------------------------

def bump_profile(s):
    """``exp(1 - 1/(1 - s^2))`` for ``|s| < 1``, zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _check_ball_in_box(grid: GridSpec, center, radius, reach=0.0):
    c = np.asarray(center, dtype=float)
    limit = grid.half_width - PADDING_SHELLS * grid.h
    if radius <= 0:
        raise ValueError("radius must be positive")
    if np.max(np.abs(c)) + radius + reach >= limit:
        raise SupportError(
            f"ball of radius {radius} at {tuple(c)} reaches the padding shell (limit {limit:.4g})")


def make_bump_potential(center, radius: float, amplitude: float, grid: GridSpec,
                        smoothness_l: int = 3) -> PotentialGrid:
    """Smooth compactly supported bump sampled at the nodes.

    ``q(x) = amplitude * exp(1 - 1/(1 - |x-c|^2/radius^2))`` inside the ball
    and zero outside.  ``smoothness_l`` is metadata only; the bump itself is
    infinitely differentiable.
    """
    if not np.isfinite(amplitude):
        raise ValueError("amplitude must be finite")
    _check_ball_in_box(grid, center, radius)
    values = amplitude * bump_profile(grid.radius(center) / radius)
    return PotentialGrid.on(grid, values, smoothness_l)


def make_gaussian_potential(center, width: float, amplitude: float, grid: GridSpec,
                            smoothness_l: int = 3) -> PotentialGrid:
    """Gaussian ``amplitude * exp(-|x-c|^2 / (2 width^2))`` cut where it drops below 1e-17."""
    cutoff = width * np.sqrt(2.0 * np.log(1e17))
    _check_ball_in_box(grid, center, cutoff)
    r = grid.radius(center)
    values = np.where(r < cutoff, amplitude * np.exp(-0.5 * (r / width) ** 2), 0.0)
    return PotentialGrid.on(grid, values, smoothness_l)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _ball_cube_fraction(nodes, side, center, radius):
    """Volume fraction of the axis-aligned cubes ``node +- side/2`` inside a ball.

    Fully inside / outside cubes are classified exactly; cut cubes use a
    16x16 Gauss rule in (x, y) with the z-chord length in closed form.
    """
    d = nodes - center
    half = 0.5 * side
    near = np.sqrt(np.sum(np.maximum(np.abs(d) - half, 0.0) ** 2, axis=1))
    far = np.sqrt(np.sum((np.abs(d) + half) ** 2, axis=1))
    frac = np.where(far <= radius, 1.0, 0.0)
    cut = (near < radius) & (far > radius)
    if np.any(cut):
        dc = d[cut]
        t = half * _GL_NODES
        w = half * _GL_WEIGHTS
        x = dc[:, 0, None, None] + t[None, :, None]
        y = dc[:, 1, None, None] + t[None, None, :]
        chord = np.sqrt(np.maximum(radius**2 - x**2 - y**2, 0.0))
        z0 = dc[:, 2, None, None] - half
        z1 = dc[:, 2, None, None] + half
        length = np.clip(np.minimum(z1, chord) - np.maximum(z0, -chord), 0.0, None)
        vol = np.einsum("i,j,nij->n", w, w, length)
        frac[cut] = vol / side**3
    return frac


def ball_indicator_weights(grid: GridSpec, center, radius: float) -> np.ndarray:
    """Nodal weights representing the indicator of a ball.

    Each node carries ``4/3 avg_h - 1/3 avg_2h``, where ``avg_s`` is the
    volume fraction of the ball in the cube of side ``s`` centred at the node.
    This filter has unit mass and vanishing second moments, so trapezoidal
    sums against smooth functions reproduce the ball integral to fourth
    order in ``h`` instead of the first-order error of point sampling.
    """
    c = np.asarray(center, dtype=float)
    pts = grid.points().reshape(-1, 3)
    r = grid.radius(c).reshape(-1)
    h = grid.h
    active = r < radius + 2.0 * h
    w = np.zeros(pts.shape[0])
    p = pts[active]
    w[active] = (4.0 / 3.0) * _ball_cube_fraction(p, h, c, radius) \
        - (1.0 / 3.0) * _ball_cube_fraction(p, 2.0 * h, c, radius)
    return w.reshape(grid.shape)


def make_radial_well(radii, values, grid: GridSpec, center=(0.0, 0.0, 0.0),
                     smoothness_l: int = 0) -> PotentialGrid:
    """Piecewise-constant radial potential with shells ``r < radii[0]``, ...

    ``values[i]`` is the potential in shell ``i``; it is zero beyond
    ``radii[-1]``.  A well of depth ``d`` has ``values = [-d]``.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if radii.shape != values.shape or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be increasing and match values")
    _check_ball_in_box(grid, center, radii[-1], reach=2.0 * grid.h)
    steps = values - np.append(values[1:], 0.0)
    q = np.zeros(grid.shape)
    for R, dv in zip(radii, steps):
        if dv:
            q += dv * ball_indicator_weights(grid, center, R)
    return PotentialGrid.on(grid, q, smoothness_l)
