"""Uniform grids and the 4th-order derivative stencil.

Radial grids exclude r = 0: the first node sits at one spacing, which
encodes the Dirichlet condition of the reduced problem on the half line.
Ghost values outside the grid are taken to be zero, so the first
derivative matrix is exactly antisymmetric and ``D1.T @ D1`` is a
positive-semidefinite 4th-order discretization of ``-d^2/dr^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "GridSpec", "Grid", "build_grid",
    "deriv1_matrix", "staggered_deriv_matrix", "laplacian_form_matrix",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform-grid description.

    kind: "radial" (nodes at spacing, 2*spacing, ..., r_max) or
    "cartesian" (nodes symmetric about 0 spanning a width r_max).
    """

    kind: str
    n_points: int
    r_max: float

    @property
    def spacing(self) -> float:
        return self.r_max / self.n_points

    def validate(self):
        problems = []
        if self.kind not in ("radial", "cartesian"):
            problems.append(f"grid.kind must be 'radial' or 'cartesian', got {self.kind!r}")
        if not isinstance(self.n_points, (int, np.integer)) or self.n_points < 8:
            problems.append(f"grid.n must be an integer >= 8, got {self.n_points!r}")
        if not self.r_max > 0:
            problems.append(f"grid.r_max must be > 0, got {self.r_max!r}")
        if problems:
            raise ConfigurationError(problems)


@dataclass(frozen=True)
class Grid:
    """Materialized grid: node coordinates plus boundary metadata."""

    kind: str
    nodes: np.ndarray          # node coordinates x_i
    spacing: float
    r_max: float

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def radii(self) -> np.ndarray:
        """|x_i|, the radial coordinate used by all cutoff profiles."""
        return np.abs(self.nodes)

    def __post_init__(self):
        self.nodes.setflags(write=False)


def build_grid(spec: GridSpec) -> Grid:
    """Materialize a grid from its spec.

    Radial: nodes i*dr for i = 1..n (r = 0 excluded, Dirichlet).
    Cartesian: n nodes centered on 0 with the same spacing, ghost
    Dirichlet walls half a stencil outside.
    """
    spec.validate()
    dr = spec.spacing
    if spec.kind == "radial":
        nodes = dr * np.arange(1, spec.n_points + 1, dtype=float)
    else:
        nodes = dr * (np.arange(1, spec.n_points + 1, dtype=float) - (spec.n_points + 1) / 2.0)
    return Grid(kind=spec.kind, nodes=nodes, spacing=dr, r_max=spec.r_max)


def deriv1_matrix(grid: Grid) -> np.ndarray:
    """4th-order centered first-derivative matrix with zero ghost values.

    f'(x_i) ~ (f_{i-2} - 8 f_{i-1} + 8 f_{i+1} - f_{i+2}) / (12 dr).
    Exactly antisymmetric.  Used for sampling derivatives of smooth grid
    functions (weights, profiles), not for building the kinetic operator:
    its symbol vanishes at the Nyquist mode, so D1.T @ D1 would carry
    spurious low-lying sawtooth eigenvalues.
    """
    n = grid.n
    dr = grid.spacing
    D = np.zeros((n, n))
    c1 = 8.0 / (12.0 * dr)
    c2 = 1.0 / (12.0 * dr)
    idx = np.arange(n)
    D[idx[:-1], idx[:-1] + 1] = c1
    D[idx[1:], idx[1:] - 1] = -c1
    D[idx[:-2], idx[:-2] + 2] = -c2
    D[idx[2:], idx[2:] - 2] = c2
    return D


def staggered_deriv_matrix(grid: Grid):
    """4th-order staggered derivative: node values -> midpoint derivatives.

    (Dh u)_{i+1/2} = [27(u_{i+1} - u_i) - (u_{i+2} - u_{i-1})] / (24 dr)

    with zero ghost values outside the grid (Dirichlet walls half a
    spacing outside the first/last node on each side).  The symbol has no
    interior zeros, so Dh.T @ Dh is an alias-free symmetric PSD 4th-order
    discretization of -d^2/dx^2.

    Returns (Dh, mid_radii): Dh is (n+1) x n, mid_radii the |x| values of
    the n+1 midpoints.
    """
    n = grid.n
    dr = grid.spacing
    c1 = 27.0 / (24.0 * dr)
    c2 = 1.0 / (24.0 * dr)
    Dh = np.zeros((n + 1, n))
    for m in range(n + 1):
        # midpoint m sits between node m-1 and node m (0-based nodes)
        for off, coef in ((m, c1), (m - 1, -c1), (m + 1, -c2), (m - 2, c2)):
            if 0 <= off < n:
                Dh[m, off] += coef
    mid_coords = np.concatenate(([grid.nodes[0] - dr / 2.0], grid.nodes + dr / 2.0))
    return Dh, np.abs(mid_coords)


def laplacian_form_matrix(grid: Grid) -> np.ndarray:
    """Dh.T @ Dh: symmetric PSD alias-free 4th-order form of -d^2/dx^2."""
    Dh, _ = staggered_deriv_matrix(grid)
    return Dh.T @ Dh
