"""Space-time states on a regular grid: sampling, second-order finite
difference stencils and the discrete norms used by the objective."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

# Weight of the time-derivative contribution inside the discrete H^2
# space-time norm.  The continuous norm leaves this weighting free; we
# fix it to one and document it here.
H2_TIME_WEIGHT = 1.0


@dataclass(frozen=True)
class Grid:
    """Node-centered uniform grid on [t_min, t_max] x [x_min, x_max]."""

    t_min: float
    t_max: float
    x_min: float
    x_max: float
    n_t: int
    n_x: int

    def __post_init__(self):
        if self.n_t < 3 or self.n_x < 3:
            raise ValueError("grid needs at least 3 nodes per direction")
        if not (self.t_max > self.t_min and self.x_max > self.x_min):
            raise ValueError("grid spans must be strictly positive")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.n_t - 1)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def span_t(self) -> float:
        return self.t_max - self.t_min

    @property
    def span_x(self) -> float:
        return self.x_max - self.x_min

    @cached_property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_t)

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @cached_property
    def wt(self) -> np.ndarray:
        """Trapezoidal quadrature weights along t."""
        w = np.full(self.n_t, self.dt)
        w[0] = w[-1] = self.dt / 2
        return w

    @cached_property
    def wx(self) -> np.ndarray:
        """Trapezoidal quadrature weights along x."""
        w = np.full(self.n_x, self.dx)
        w[0] = w[-1] = self.dx / 2
        return w

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """(n_t, n_x) tensor-product trapezoidal weights."""
        return np.outer(self.wt, self.wx)


@dataclass(eq=False)
class StateField:
    """State values sampled on a grid, row = time index."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_t, self.grid.n_x):
            raise ValueError(
                f"values of shape {self.values.shape} do not match grid "
                f"({self.grid.n_t}, {self.grid.n_x})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state field contains non-finite entries")


def sample(grid: Grid, fn) -> StateField:
    """Sample fn(t, x) on every grid node."""
    values = np.empty((grid.n_t, grid.n_x))
    for j, t in enumerate(grid.t_nodes):
        for i, x in enumerate(grid.x_nodes):
            v = fn(t, x)
            if not np.isfinite(v):
                raise ValueError(f"fn is not finite at node (t={t}, x={x})")
            values[j, i] = v
    return StateField(grid, values)


@lru_cache(maxsize=None)
def diff_matrix(n: int, h: float) -> np.ndarray:
    """Second-order first-derivative stencil matrix for a uniform grid.

    Central differences at interior nodes, one-sided three-point stencils
    at the boundaries; exact on polynomials of degree <= 2.
    """
    if n < 3:
        raise ValueError("derivative stencils need at least 3 nodes")
    D = np.zeros((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -1.0
        D[i, i + 1] = 1.0
    D[0, 0], D[0, 1], D[0, 2] = -3.0, 4.0, -1.0
    D[-1, -1], D[-1, -2], D[-1, -3] = 3.0, -4.0, 1.0
    return D / (2 * h)


@lru_cache(maxsize=None)
def diff2_matrix(n: int, h: float) -> np.ndarray:
    """Second-order second-derivative stencil matrix (uniform grid)."""
    if n < 5:
        raise ValueError("second-derivative stencils need at least 5 nodes")
    D = np.zeros((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = 1.0
        D[i, i] = -2.0
        D[i, i + 1] = 1.0
    D[0, :4] = (2.0, -5.0, 4.0, -1.0)
    D[-1, -4:] = (-1.0, 4.0, -5.0, 2.0)
    return D / h**2


def ddx(u: StateField) -> StateField:
    """Spatial derivative along x."""
    D = diff_matrix(u.grid.n_x, u.grid.dx)
    return StateField(u.grid, u.values @ D.T)


def ddt(u: StateField) -> StateField:
    """Temporal derivative along t."""
    D = diff_matrix(u.grid.n_t, u.grid.dt)
    return StateField(u.grid, D @ u.values)


def l2_spacetime(u: StateField) -> float:
    """Trapezoidal space-time L2 norm."""
    return float(np.sqrt(np.sum(u.grid.quad_weights * u.values**2)))


def sobolev_h2_norm(u: StateField) -> float:
    """Discrete L2-in-time H2-in-space norm with an L2 time-derivative term.

    Square root of the quadrature of u^2 + (du/dx)^2 + (d2u/dx2)^2 plus
    H2_TIME_WEIGHT times (du/dt)^2.
    """
    if u.grid.n_x < 5:
        raise ValueError("H2 norm needs at least 5 spatial nodes")
    W = u.grid.quad_weights
    ux = ddx(u).values
    uxx = u.values @ diff2_matrix(u.grid.n_x, u.grid.dx).T
    ut = ddt(u).values
    total = np.sum(
        W * (u.values**2 + ux**2 + uxx**2 + H2_TIME_WEIGHT * ut**2)
    )
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# CSV import/export

_GRID_FIELDS = ("t_min", "t_max", "x_min", "x_max", "n_t", "n_x")


def write_csv(u: StateField, path) -> None:
    """Write a state field as CSV: grid metadata header rows, then the
    value matrix (row = time index, column = space index)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_GRID_FIELDS)
        g = u.grid
        writer.writerow(
            [repr(g.t_min), repr(g.t_max), repr(g.x_min), repr(g.x_max), g.n_t, g.n_x]
        )
        for row in u.values:
            writer.writerow([repr(v) for v in row])


def read_csv(path) -> StateField:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _GRID_FIELDS:
            raise ValueError(f"{path}: unexpected state-field header {header}")
        meta = next(reader)
        grid = Grid(
            float(meta[0]), float(meta[1]), float(meta[2]), float(meta[3]),
            int(meta[4]), int(meta[5]),
        )
        values = np.array([[float(v) for v in row] for row in reader])
    return StateField(grid, values)
