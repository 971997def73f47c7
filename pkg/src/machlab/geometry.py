"""Fixed exterior domain, obstacle motion, and the divergence-free lifting.

The computational domain is a truncated box around a disk obstacle centered
at the origin of the fixed frame. Scalars live at cell centers, velocity
components at faces (MAC staggering). Cell classification is a partition
into fluid, solid and boundary-cut cells; cut cells are the active cells
that carry a boundary normal (obstacle stair-step or outer rim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GeometryTooCoarse, OutOfHorizon

FLUID, SOLID, CUT = 0, 1, 2


class Grid:
    """Staggered Cartesian grid on [x0, x0 + nx*h] x [y0, y0 + ny*h].

    Immutable after construction; derived discrete operators are cached
    lazily by the operators module.
    """

    def __init__(self, x0, y0, nx, ny, h, obstacle_radius=0.0, dimension=2):
        if dimension != 2:
            raise NotImplementedError("desk-scale build is two-dimensional")
        self.dimension = dimension
        self.x0 = float(x0)
        self.y0 = float(y0)
        self.nx = int(nx)
        self.ny = int(ny)
        self.h = float(h)
        self.obstacle_radius = float(obstacle_radius)
        self.x1 = self.x0 + self.nx * self.h
        self.y1 = self.y0 + self.ny * self.h
        self._classify()
        self._ops = None

    # -- geometry helpers -------------------------------------------------

    def cell_centers(self):
        """Meshgrid (X, Y) of cell-center coordinates, shape (nx, ny)."""
        x = self.x0 + (np.arange(self.nx) + 0.5) * self.h
        y = self.y0 + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def nodes(self):
        """Meshgrid of node coordinates, shape (nx+1, ny+1)."""
        x = self.x0 + np.arange(self.nx + 1) * self.h
        y = self.y0 + np.arange(self.ny + 1) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def xface_coords(self):
        x = self.x0 + np.arange(self.nx + 1) * self.h
        y = self.y0 + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def yface_coords(self):
        x = self.x0 + (np.arange(self.nx) + 0.5) * self.h
        y = self.y0 + np.arange(self.ny + 1) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def _classify(self):
        xc, yc = self.cell_centers()
        a = self.obstacle_radius
        solid = np.zeros((self.nx, self.ny), dtype=bool)
        if a > 0.0:
            solid = xc**2 + yc**2 < a**2
        self.active = ~solid
        cell_type = np.full((self.nx, self.ny), FLUID, dtype=np.int8)
        cell_type[solid] = SOLID

        # cut cells: active cells face-adjacent to solid, or on the outer rim
        near_solid = np.zeros_like(solid)
        near_solid[1:, :] |= solid[:-1, :]
        near_solid[:-1, :] |= solid[1:, :]
        near_solid[:, 1:] |= solid[:, :-1]
        near_solid[:, :-1] |= solid[:, 1:]
        rim = np.zeros_like(solid)
        rim[0, :] = rim[-1, :] = rim[:, 0] = rim[:, -1] = True
        cut = self.active & (near_solid | rim)
        cell_type[cut] = CUT
        self.cell_type = cell_type

        # outward (out of the fluid) unit normals carried by cut cells:
        # analytic disk normal -y/|y| at obstacle cells, box normal at the rim
        nxa = np.zeros((self.nx, self.ny))
        nya = np.zeros((self.nx, self.ny))
        obst_cut = cut & near_solid
        r = np.sqrt(xc**2 + yc**2)
        with np.errstate(invalid="ignore", divide="ignore"):
            nxa[obst_cut] = -(xc / r)[obst_cut]
            nya[obst_cut] = -(yc / r)[obst_cut]
        rim_only = cut & rim & ~near_solid
        bx = np.where(xc > 0, 1.0, -1.0) * (
            np.minimum(self.x1 - xc, xc - self.x0)
            <= np.minimum(self.y1 - yc, yc - self.y0)
        )
        by = np.where(yc > 0, 1.0, -1.0) * (
            np.minimum(self.y1 - yc, yc - self.y0)
            < np.minimum(self.x1 - xc, xc - self.x0)
        )
        nxa[rim_only] = bx[rim_only]
        nya[rim_only] = by[rim_only]
        self.cut_normal = (nxa, nya)

        act = self.active
        # interior faces: unknown-carrying, both neighbor cells active
        self.uface_interior = np.zeros((self.nx + 1, self.ny), dtype=bool)
        self.uface_interior[1:-1, :] = act[:-1, :] & act[1:, :]
        self.vface_interior = np.zeros((self.nx, self.ny + 1), dtype=bool)
        self.vface_interior[:, 1:-1] = act[:, :-1] & act[:, 1:]

        # boundary faces split by what prescribes them: obstacle stair faces
        # carry the body's normal velocity, outer-rim faces the far-field
        # rest state
        uo = np.zeros((self.nx + 1, self.ny), dtype=bool)
        uo[1:-1, :] = act[:-1, :] ^ act[1:, :]
        self.uface_obstacle = uo
        ur = np.zeros((self.nx + 1, self.ny), dtype=bool)
        ur[0, :] = act[0, :]
        ur[-1, :] = act[-1, :]
        self.uface_rim = ur
        self.uface_boundary = uo | ur
        vo = np.zeros((self.nx, self.ny + 1), dtype=bool)
        vo[:, 1:-1] = act[:, :-1] ^ act[:, 1:]
        self.vface_obstacle = vo
        vr = np.zeros((self.nx, self.ny + 1), dtype=bool)
        vr[:, 0] = act[:, 0]
        vr[:, -1] = act[:, -1]
        self.vface_rim = vr
        self.vface_boundary = vo | vr

        self.n_active = int(np.count_nonzero(act))
        self.n_solid = int(np.count_nonzero(solid))
        self.n_cut = int(np.count_nonzero(cut))

    # -- cached discrete operators ----------------------------------------

    @property
    def ops(self):
        if self._ops is None:
            from .operators import DiscreteOperators

            self._ops = DiscreteOperators(self)
        return self._ops

    def l2norm(self, cell_field, mask=None):
        """Grid L2 norm of a cell field, restricted to active cells."""
        m = self.active if mask is None else (self.active & mask)
        return self.h * math.sqrt(float(np.sum(cell_field[m] ** 2)))

    def lq_norm(self, cell_field, q, mask=None):
        """Grid Lq norm over active cells; q = inf gives the max norm."""
        m = self.active if mask is None else (self.active & mask)
        vals = np.abs(cell_field[m])
        if np.isinf(q):
            return float(vals.max(initial=0.0))
        return float((self.h**2 * np.sum(vals**q)) ** (1.0 / q))


def build_grid(dimension: int, extent: float, obstacle_radius: float, cell_size: float) -> Grid:
    """Classified staggered grid on [-extent, extent]^2 around a disk.

    Raises GeometryTooCoarse when fewer than 4 cells span the obstacle
    diameter, and rejects geometries violating the basic invariants
    (cell_size divides 2*extent, obstacle strictly interior with room for
    a window and a sponge layer).
    """
    L, a, h = float(extent), float(obstacle_radius), float(cell_size)
    if h <= 0.0 or L <= 0.0:
        raise ValueError("extent and cell_size must be positive")
    n = 2.0 * L / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"cell_size {h} does not divide the box side {2 * L}")
    if 2.0 * a / h < 4.0:
        raise GeometryTooCoarse(
            f"obstacle diameter {2 * a} spans {2 * a / h:.2f} < 4 cells"
        )
    if not a > 2.0 * h:
        raise ValueError("obstacle radius must exceed 2 cells")
    if not L > 4.0 * a:
        raise ValueError("domain must satisfy extent > 4 * obstacle_radius")
    n = int(round(n))
    return Grid(-L, -L, n, n, h, obstacle_radius=a, dimension=dimension)


def build_rectangle_grid(x0, x1, y0, y1, cell_size) -> Grid:
    """Obstacle-free box grid, used by spectral validation studies."""
    h = float(cell_size)
    nx = (x1 - x0) / h
    ny = (y1 - y0) / h
    for n, name in ((nx, "x"), (ny, "y")):
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"cell_size does not divide the {name} side")
    return Grid(x0, y0, int(round(nx)), int(round(ny)), h, obstacle_radius=0.0)


# -- obstacle motion -------------------------------------------------------


@dataclass(frozen=True)
class MotionPath:
    """Obstacle translation m(t) with first and second derivatives.

    m(0) must vanish; the three callables return length-2 vectors.
    """

    m: Callable[[float], np.ndarray]
    m_prime: Callable[[float], np.ndarray]
    m_double: Callable[[float], np.ndarray]
    horizon: float
    kind: str = "custom"

    def __post_init__(self):
        if self.horizon < 0.0:
            raise ValueError("horizon must be nonnegative")
        if np.linalg.norm(np.asarray(self.m(0.0), dtype=float)) > 1e-12:
            raise ValueError("motion path must satisfy m(0) = 0")


def static_path(horizon: float) -> MotionPath:
    zero = lambda t: np.zeros(2)
    return MotionPath(zero, zero, zero, horizon, kind="static")


def linear_path(velocity, horizon: float) -> MotionPath:
    v = np.asarray(velocity, dtype=float)
    return MotionPath(
        lambda t: v * t,
        lambda t: v.copy(),
        lambda t: np.zeros(2),
        horizon,
        kind="linear",
    )


def sinusoidal_path(amplitude, frequency: float, horizon: float) -> MotionPath:
    """m(t) = A * sin(omega t) with omega = frequency."""
    amp = np.asarray(amplitude, dtype=float)
    w = float(frequency)
    return MotionPath(
        lambda t: amp * math.sin(w * t),
        lambda t: amp * w * math.cos(w * t),
        lambda t: -amp * w * w * math.sin(w * t),
        horizon,
        kind="sinusoidal",
    )


def eval_motion(path: MotionPath, t: float):
    """Evaluate (m, m', m'') at time t within the horizon."""
    if t < -1e-12 or t > path.horizon + 1e-12:
        raise OutOfHorizon(f"t = {t} outside [0, {path.horizon}]")
    return (
        np.asarray(path.m(t), dtype=float),
        np.asarray(path.m_prime(t), dtype=float),
        np.asarray(path.m_double(t), dtype=float),
    )


# -- divergence-free extension field ---------------------------------------


def _taper(r, r_inner, r_outer):
    """Quintic C2 cutoff: 1 for r <= r_inner, 0 for r >= r_outer."""
    s = np.clip((r - r_inner) / (r_outer - r_inner), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass(frozen=True)
class ExtensionFieldSample:
    """One time slice of the lifting field V: face components and metadata."""

    u: np.ndarray
    v: np.ndarray
    support_radius: float
    t: float


@dataclass(frozen=True)
class ExtensionField:
    """Compactly supported divergence-free lifting of the obstacle velocity.

    Built as the exact discrete curl of a nodal stream function
    psi = taper(|y|) * (vx*y - vy*x), so the discrete divergence vanishes
    identically, V equals m'(t) in a collar around the obstacle (hence
    matches the boundary normal velocity exactly), and V = 0 beyond the
    support radius.
    """

    grid: Grid
    path: MotionPath
    support_radius: float
    collar: float = field(default=0.0)

    def __post_init__(self):
        g, R = self.grid, self.support_radius
        a = g.obstacle_radius
        if not a < R:
            raise ValueError("support radius must exceed the obstacle radius")
        if R >= min(g.x1, g.y1, -g.x0, -g.y0):
            raise ValueError("support radius must stay inside the box")
        collar = a + max(4.0 * g.h, 0.15 * (R - a))
        # the stream function must die one cell early so every face beyond
        # the support radius has all its nodes in the zero region
        if collar >= R - g.h:
            raise ValueError("support radius leaves no room for the taper")
        object.__setattr__(self, "collar", collar)

    def _curl_of(self, velocity):
        g = self.grid
        vx, vy = float(velocity[0]), float(velocity[1])
        xn, yn = g.nodes()
        r = np.sqrt(xn**2 + yn**2)
        psi = _taper(r, self.collar, self.support_radius - g.h) * (vx * yn - vy * xn)
        u = (psi[:, 1:] - psi[:, :-1]) / g.h  # (nx+1, ny)
        v = -(psi[1:, :] - psi[:-1, :]) / g.h  # (nx, ny+1)
        return u, v

    def sample(self, t: float) -> ExtensionFieldSample:
        """V(t, .) on faces."""
        _, mp, _ = eval_motion(self.path, t)
        u, v = self._curl_of(mp)
        return ExtensionFieldSample(u, v, self.support_radius, t)

    def sample_dt(self, t: float) -> ExtensionFieldSample:
        """Fixed-frame time derivative d/dt V(t, y); linear in m''."""
        _, _, mpp = eval_motion(self.path, t)
        u, v = self._curl_of(mpp)
        return ExtensionFieldSample(u, v, self.support_radius, t)


def build_extension_field(
    grid: Grid, path: MotionPath, t: float, support_radius: float
) -> ExtensionFieldSample:
    """Sample the divergence-free lifting field at time t."""
    return ExtensionField(grid, path, support_radius).sample(t)


# -- frame correspondence ---------------------------------------------------


def transport_to_fixed(grid: Grid, cell_field: np.ndarray, m) -> np.ndarray:
    """Sample a moving-frame cell field at y + m: f~(t, y) = f(t, y + m)."""
    return _bilinear_shift(grid, cell_field, np.asarray(m, dtype=float))


def transport_to_moving(grid: Grid, cell_field: np.ndarray, m) -> np.ndarray:
    """Inverse of transport_to_fixed up to interpolation error."""
    return _bilinear_shift(grid, cell_field, -np.asarray(m, dtype=float))


def _bilinear_shift(grid: Grid, f: np.ndarray, shift: np.ndarray) -> np.ndarray:
    h = grid.h
    # fractional index of the sample point, clamped to the box
    gx = np.arange(grid.nx) + shift[0] / h
    gy = np.arange(grid.ny) + shift[1] / h
    gx = np.clip(gx, 0.0, grid.nx - 1.0)
    gy = np.clip(gy, 0.0, grid.ny - 1.0)
    ix = np.minimum(gx.astype(int), grid.nx - 2)
    iy = np.minimum(gy.astype(int), grid.ny - 2)
    fx = (gx - ix)[:, None]
    fy = (gy - iy)[None, :]
    f00 = f[np.ix_(ix, iy)]
    f10 = f[np.ix_(ix + 1, iy)]
    f01 = f[np.ix_(ix, iy + 1)]
    f11 = f[np.ix_(ix + 1, iy + 1)]
    return (
        (1 - fx) * (1 - fy) * f00
        + fx * (1 - fy) * f10
        + (1 - fx) * fy * f01
        + fx * fy * f11
    )
