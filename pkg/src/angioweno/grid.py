"""Uniform rectangular mesh, Gauss-Legendre tables and double cell averages.

Node offsets are stored in units of the cell width on ``[-1/2, 1/2]``;
physical coordinates are produced on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: ghost layers per side; the centre values of the first ghost cell need a
#: full five-cell stencil, hence three layers rather than two
NGHOST = 3

MIN_CELLS = 5


@dataclass(frozen=True)
class QuadratureTables:
    gl3_nodes: np.ndarray
    gl3_weights: np.ndarray
    t5_nodes: np.ndarray
    t5_weights: np.ndarray


def make_quadrature() -> QuadratureTables:
    """Three-point Gauss-Legendre rule and its five-point self-convolution.

    The five-point rule integrates against the hat kernel produced by two
    nested cell averages, so ``sum(t5_weights * f(t5_nodes))`` is the 1D
    double average of ``f``.
    """
    r = np.sqrt(15.0) / 10.0
    gl_nodes = np.array([-r, 0.0, r])
    w1, w2, w3 = 5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0
    gl_weights = np.array([w1, w2, w3])
    t5_nodes = np.array([-2 * r, -r, 0.0, r, 2 * r])
    t5_weights = np.array([w1 * w1, 2 * w1 * w2, 2 * w1 * w3 + w2 * w2, 2 * w3 * w2, w3 * w3])
    for arr in (gl_nodes, gl_weights, t5_nodes, t5_weights):
        arr.setflags(write=False)
    return QuadratureTables(gl_nodes, gl_weights, t5_nodes, t5_weights)


QUAD = make_quadrature()


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred mesh on ``[0, X] x [Y0, Y1]``."""

    X: float
    Y0: float
    Y1: float
    Nx: int
    Ny: int
    x0: float = 0.0
    dx: float = field(init=False)
    dy: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dx", self.X / self.Nx)
        object.__setattr__(self, "dy", (self.Y1 - self.Y0) / self.Ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx, self.Ny)

    @property
    def x_interfaces(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.Nx + 1)

    @property
    def y_interfaces(self) -> np.ndarray:
        return self.Y0 + self.dy * np.arange(self.Ny + 1)

    @property
    def x_centers(self) -> np.ndarray:
        return self.x0 + self.dx * (np.arange(self.Nx) + 0.5)

    @property
    def y_centers(self) -> np.ndarray:
        return self.Y0 + self.dy * (np.arange(self.Ny) + 0.5)

    def x_center(self, i: int) -> float:
        """Centre of cell ``i``; negative or ``>= Nx`` indices address ghosts."""
        return self.x0 + self.dx * (i + 0.5)

    def y_center(self, j: int) -> float:
        return self.Y0 + self.dy * (j + 0.5)

    def cell_widths_x(self) -> np.ndarray:
        return np.diff(self.x_interfaces)

    def cell_widths_y(self) -> np.ndarray:
        return np.diff(self.y_interfaces)


def build_grid(X: float, Y0: float, Y1: float, Nx: int, Ny: int) -> GridSpec:
    if not X > 0:
        raise ValueError(f"domain length must be positive, got X={X}")
    if not Y1 > Y0:
        raise ValueError(f"need Y1 > Y0, got [{Y0}, {Y1}]")
    if int(Nx) != Nx or int(Ny) != Ny:
        raise ValueError("cell counts must be integers")
    if Nx < MIN_CELLS or Ny < MIN_CELLS:
        raise ValueError(f"need at least {MIN_CELLS} cells per direction for the 5-point stencil, got {Nx}x{Ny}")
    return GridSpec(float(X), float(Y0), float(Y1), int(Nx), int(Ny))


@dataclass
class AveragedField:
    """Double cell averages of one unknown, with an optional ghost-padded copy."""

    values: np.ndarray
    ghost: np.ndarray | None = None

    def padded(self) -> np.ndarray:
        if self.ghost is None:
            raise ValueError("ghost layers have not been populated")
        return self.ghost

    def check_finite(self, name: str = "field") -> None:
        bad = ~np.isfinite(self.values)
        if bad.any():
            idx = tuple(int(k) for k in np.argwhere(bad)[0])
            raise FloatingPointError(f"non-finite {name} value at cell {idx}")


def tensor_nodes(grid: GridSpec, q: QuadratureTables = QUAD) -> tuple[np.ndarray, np.ndarray]:
    """Physical coordinates of the 5x5 double-average nodes, shape (Nx, Ny, 5, 5).

    Axis 2 runs over x nodes, axis 3 over y nodes.
    """
    xn = grid.x_centers[:, None] + q.t5_nodes[None, :] * grid.dx
    yn = grid.y_centers[:, None] + q.t5_nodes[None, :] * grid.dy
    X = np.broadcast_to(xn[:, None, :, None], (grid.Nx, grid.Ny, 5, 5))
    Y = np.broadcast_to(yn[None, :, None, :], (grid.Nx, grid.Ny, 5, 5))
    return X, Y


def double_average(f, cell: tuple[int, int], grid: GridSpec, q: QuadratureTables = QUAD) -> float:
    """Double cell average of ``f(x, y)`` over one cell by tensor quadrature."""
    i, j = cell
    xs = grid.x_center(i) + q.t5_nodes * grid.dx
    ys = grid.y_center(j) + q.t5_nodes * grid.dy
    vals = np.asarray(f(xs[:, None], ys[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (5, 5))
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError(f"non-finite integrand in cell {cell}")
    return float(q.t5_weights @ vals @ q.t5_weights)


def average_field(f, grid: GridSpec, q: QuadratureTables = QUAD) -> np.ndarray:
    """Vectorised :func:`double_average` over every interior cell."""
    X, Y = tensor_nodes(grid, q)
    vals = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite integrand while averaging field")
    return np.einsum("ijab,a,b->ij", vals, q.t5_weights, q.t5_weights)


def pad_periodic(values: np.ndarray, g: int = NGHOST) -> np.ndarray:
    return np.pad(values, g, mode="wrap")
