"""Spectral measurement operators: normalized cosine analysis per time
node, reduced operators that keep the lowest modes and average over
equal time cells, synthesis back to grid fields, and the multiplicative
noise model.

Reduced-operator time averaging integrates, on every cell, a
reconstruction built only from the nodes belonging to that cell
(piecewise-linear inside, linearly extended to the cell edges; constant
for single-node cells; for node-free cells the global interpolant is
used).  This rule is exact for coefficients that are linear in time and
for fields that are constant on each cell, so synthesized records
re-analyze to themselves wherever the grid resolves the cells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .field import Grid, StateField, l2_spacetime


@dataclass(frozen=True)
class CosineBasis:
    """Orthonormal cosine family on an interval of length omega_length.

    e_0 = 1/sqrt(L); e_i(x) = sqrt(2/L) cos(i pi x / L) for i >= 1.  On a
    uniform node-centered grid these are exactly orthonormal under
    trapezoidal quadrature for mode indices below n_nodes - 1.
    """

    omega_length: float
    n_modes: int

    def __post_init__(self):
        if self.omega_length <= 0:
            raise ValueError("omega_length must be positive")
        if self.n_modes < 1:
            raise ValueError("need at least one mode")

    def sample(self, x: np.ndarray) -> np.ndarray:
        """(len(x), n_modes) matrix of basis values; x measured from the
        left endpoint of the interval."""
        x = np.asarray(x, dtype=float)
        L = self.omega_length
        cols = [np.full_like(x, 1.0 / np.sqrt(L))]
        for i in range(1, self.n_modes):
            cols.append(np.sqrt(2.0 / L) * np.cos(i * np.pi * x / L))
        return np.stack(cols, axis=1)


@lru_cache(maxsize=None)
def _basis_matrix(grid: Grid, n_modes: int) -> np.ndarray:
    basis = CosineBasis(grid.span_x, n_modes)
    return basis.sample(grid.x_nodes - grid.x_min)


def cell_boundaries(grid: Grid, m: int) -> np.ndarray:
    return np.linspace(grid.t_min, grid.t_max, m + 1)


def cell_index(grid: Grid, m: int, t: np.ndarray) -> np.ndarray:
    """Left-closed cell assignment; the last cell is closed on the right."""
    bounds = cell_boundaries(grid, m)
    idx = np.searchsorted(bounds, np.asarray(t, dtype=float), side="right") - 1
    return np.clip(idx, 0, m - 1)


@lru_cache(maxsize=None)
def time_average_matrix(grid: Grid, m: int) -> np.ndarray:
    """(m, n_t) matrix mapping node values to per-cell time averages."""
    if m < 1:
        raise ValueError("need at least one time cell")
    t = grid.t_nodes
    dt = grid.dt
    bounds = cell_boundaries(grid, m)
    delta = grid.span_t / m
    assignment = cell_index(grid, m, t)
    A = np.zeros((m, grid.n_t))
    for c in range(m):
        (inside,) = np.nonzero(assignment == c)
        w = np.zeros(grid.n_t)
        if inside.size >= 2:
            j0, j1 = inside[0], inside[-1]
            # interior trapezoids
            w[j0:j1 + 1] += dt
            w[j0] -= dt / 2
            w[j1] -= dt / 2
            # linear extension to the cell edges
            e_l = t[j0] - bounds[c]
            w[j0] += e_l + e_l**2 / (2 * dt)
            w[j0 + 1] -= e_l**2 / (2 * dt)
            e_r = bounds[c + 1] - t[j1]
            w[j1] += e_r + e_r**2 / (2 * dt)
            w[j1 - 1] -= e_r**2 / (2 * dt)
        elif inside.size == 1:
            w[inside[0]] = delta
        else:
            # cell sits strictly inside one node interval; use the global
            # interpolant, which is exact at the cell midpoint for linears
            k = int(np.searchsorted(t, bounds[c], side="right") - 1)
            k = min(max(k, 0), grid.n_t - 2)
            mid = (bounds[c] + bounds[c + 1]) / 2
            w[k] = delta * (t[k + 1] - mid) / dt
            w[k + 1] = delta * (mid - t[k]) / dt
        A[c] = w / delta
    return A


@dataclass(eq=False)
class MeasurementRecord:
    """Per-time-cell coefficients of the reduced measurement operator.

    coeffs[c, i] is the cell-c time average of the mode-i spectral
    coefficient.  n_modes equals m unless the grid cannot resolve that
    many modes, in which case the caller capped it.
    """

    m: int
    coeffs: np.ndarray
    grid: Grid
    basis: CosineBasis

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.coeffs.shape != (self.m, self.basis.n_modes):
            raise ValueError(
                f"coefficients of shape {self.coeffs.shape} do not match "
                f"(m={self.m}, n_modes={self.basis.n_modes})"
            )
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("measurement record contains non-finite entries")

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def cell_width(self) -> float:
        return self.grid.span_t / self.m

    def l2_norm(self) -> float:
        """Exact space-time L2 norm of the synthesized measurement
        function (piecewise constant in time, orthonormal in space)."""
        return float(np.sqrt(self.cell_width() * np.sum(self.coeffs**2)))


def analyze_full(u: StateField, n_modes: int) -> np.ndarray:
    """Spatial spectral coefficients at every time node, (n_t, n_modes)."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if n_modes > u.grid.n_x:
        raise ValueError(
            f"{n_modes} modes are not resolvable on {u.grid.n_x} spatial nodes"
        )
    E = _basis_matrix(u.grid, n_modes)
    return u.values @ (u.grid.wx[:, None] * E)


def analyze_reduced(u: StateField, m: int, n_modes: int | None = None) -> MeasurementRecord:
    """Reduced measurement: lowest n_modes coefficients averaged over m
    equal time cells.  n_modes defaults to m."""
    if m < 1:
        raise ValueError("m must be positive")
    if n_modes is None:
        n_modes = m
    coeffs_full = analyze_full(u, n_modes)
    A = time_average_matrix(u.grid, m)
    return MeasurementRecord(
        m, A @ coeffs_full, u.grid, CosineBasis(u.grid.span_x, n_modes)
    )


def synthesize(rec: MeasurementRecord) -> StateField:
    """Materialize the record on the grid: piecewise constant across time
    cells, cosine synthesis in space."""
    E = _basis_matrix(rec.grid, rec.n_modes)
    assignment = cell_index(rec.grid, rec.m, rec.grid.t_nodes)
    return StateField(rec.grid, rec.coeffs[assignment] @ E.T)


def add_noise(rec: MeasurementRecord, delta: float, seed: int) -> MeasurementRecord:
    """Multiplicative noise on the synthesized grid values.

    Every grid value v becomes v * eps**delta with eps ~ Unif(0.5, 1.5)
    drawn per grid point from a PCG64 generator seeded with seed, after
    which the field is re-analyzed.  delta = 0 returns the record
    unchanged.  Deterministic given (record, delta, seed).
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0.0:
        return MeasurementRecord(rec.m, rec.coeffs.copy(), rec.grid, rec.basis)
    rng = np.random.Generator(np.random.PCG64(seed))
    synth = synthesize(rec)
    eps = rng.uniform(0.5, 1.5, size=synth.values.shape)
    noisy = StateField(rec.grid, synth.values * eps**delta)
    return analyze_reduced(noisy, rec.m, rec.n_modes)


def operator_gap(u: StateField, m: int) -> float:
    """Space-time L2 distance between the reduced measurement of u and
    its full (all resolvable modes, per-node) spectral projection."""
    reduced = synthesize(analyze_reduced(u, m, min(m, u.grid.n_x - 1)))
    n_full = u.grid.n_x - 1
    E = _basis_matrix(u.grid, n_full)
    full = analyze_full(u, n_full) @ E.T
    return l2_spacetime(StateField(u.grid, reduced.values - full))


# ---------------------------------------------------------------------------
# CSV import/export

_HEADER = ("m", "n_modes", "t_min", "t_max", "x_min", "x_max", "n_t", "n_x")


def write_csv(rec: MeasurementRecord, path) -> None:
    """Long-format CSV: metadata header rows, then cell, mode, coefficient."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        g = rec.grid
        writer.writerow(
            [rec.m, rec.n_modes, repr(g.t_min), repr(g.t_max), repr(g.x_min),
             repr(g.x_max), g.n_t, g.n_x]
        )
        writer.writerow(("cell", "mode", "coefficient"))
        for c in range(rec.m):
            for i in range(rec.n_modes):
                writer.writerow([c, i, repr(rec.coeffs[c, i])])


def read_csv(path) -> MeasurementRecord:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _HEADER:
            raise ValueError(f"{path}: unexpected measurement header {header}")
        meta = next(reader)
        m, n_modes = int(meta[0]), int(meta[1])
        grid = Grid(
            float(meta[2]), float(meta[3]), float(meta[4]), float(meta[5]),
            int(meta[6]), int(meta[7]),
        )
        next(reader)  # column names
        coeffs = np.zeros((m, n_modes))
        for row in reader:
            coeffs[int(row[0]), int(row[1])] = float(row[2])
    return MeasurementRecord(m, coeffs, grid, CosineBasis(grid.span_x, n_modes))
