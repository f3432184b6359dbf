"""Finite-difference calculus on network grids.

Forward/second differences, the two-slope gradient pair, the weighted inner
product, the transport operator acting on (U, M), and the vertex transition
operators for U (Kirchhoff balance) and M (flux balance).  All functions are
pure; the scalar forms below are the reference definitions, while assembly
code uses equivalent vectorized per-edge routines (tested against these).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import Hamiltonian
from .network import Grid

__all__ = [
    "GridFunction",
    "forward_diff",
    "second_diff",
    "grad_pair",
    "weighted_inner",
    "transport",
    "transport_edge",
    "kirchhoff_u",
    "kirchhoff_m",
]


@dataclass
class GridFunction:
    """One real value per dof; continuity at vertices holds by construction."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.num_dofs,):
            raise ValueError(
                f"expected {self.grid.num_dofs} values, got {self.values.shape}")

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.num_dofs))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.num_dofs, float(value)))

    def value(self, j: int, k: int) -> float:
        """Value at node (j, k); k = 0 / N_j resolve to the vertex dofs."""
        return float(self.values[self.grid.index_of(j, k)])

    def edge_values(self, j: int) -> np.ndarray:
        """All N_j + 1 node values along edge j (vertex values included)."""
        return self.values[self.grid.edge_dofs[j]]

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


def forward_diff(U: GridFunction, j: int, k: int) -> float:
    """(U_{j,k+1} - U_{j,k}) / h_j for k = 0..N_j-1."""
    nj = U.grid.n_nodes[j]
    if not 0 <= k <= nj - 1:
        raise IndexError(f"forward difference needs 0 <= k <= {nj - 1}, got {k}")
    return (U.value(j, k + 1) - U.value(j, k)) / U.grid.h[j]


def second_diff(U: GridFunction, j: int, k: int) -> float:
    """(U_{j,k-1} - 2 U_{j,k} + U_{j,k+1}) / h_j^2 for k = 1..N_j-1."""
    nj = U.grid.n_nodes[j]
    if not 1 <= k <= nj - 1:
        raise IndexError(f"second difference needs 1 <= k <= {nj - 1}, got {k}")
    h = U.grid.h[j]
    return (U.value(j, k - 1) - 2.0 * U.value(j, k) + U.value(j, k + 1)) / (h * h)


def grad_pair(U: GridFunction, j: int, k: int) -> tuple[float, float]:
    """Upwind gradient pair (D+ U at k, D+ U at k-1) for k = 1..N_j-1."""
    nj = U.grid.n_nodes[j]
    if not 1 <= k <= nj - 1:
        raise IndexError(f"gradient pair needs 1 <= k <= {nj - 1}, got {k}")
    return forward_diff(U, j, k), forward_diff(U, j, k - 1)


def weighted_inner(U: GridFunction, W: GridFunction) -> float:
    """Scalar product (U, W)_2: h_j on interior nodes, h_{v_i} at vertices."""
    same = U.grid is W.grid or (
        U.grid.network is W.grid.network and U.grid.n_nodes == W.grid.n_nodes)
    if not same:
        raise ValueError("grid functions live on different grids")
    return float(np.dot(U.grid.dof_weights, U.values * W.values))


def _edge_slopes(U: GridFunction, j: int) -> np.ndarray:
    u = U.edge_values(j)
    return np.diff(u) / U.grid.h[j]


def transport(U: GridFunction, M: GridFunction, ham: Hamiltonian, j: int, k: int) -> float:
    """Transport stencil at interior node (j, k), k = 1..N_j-1.

    The interior case carries four flux terms; at k = 1 the inward flux
    through the tail and at k = N_j - 1 the one through the head are
    omitted -- those fluxes belong to the vertex operator.
    """
    grid = U.grid
    nj = grid.n_nodes[j]
    if not 1 <= k <= nj - 1:
        raise IndexError(f"transport needs 1 <= k <= {nj - 1}, got {k}")
    h = grid.h[j]
    eid = grid.network.edges[j].id

    def parts(m):
        _, d1, d2 = ham.eval(eid, m / nj, forward_diff(U, j, m), forward_diff(U, j, m - 1))
        return d1, d2

    d1_k, d2_k = parts(k)
    acc = M.value(j, k) * d1_k - M.value(j, k) * d2_k
    if k >= 2:
        d1_km, _ = parts(k - 1)
        acc -= M.value(j, k - 1) * d1_km
    if k <= nj - 2:
        _, d2_kp = parts(k + 1)
        acc += M.value(j, k + 1) * d2_kp
    return acc / h


def transport_edge(U: GridFunction, M: GridFunction, ham: Hamiltonian, j: int) -> np.ndarray:
    """Vectorized transport values at k = 1..N_j-1 of edge j."""
    grid = U.grid
    nj = grid.n_nodes[j]
    h = grid.h[j]
    eid = grid.network.edges[j].id
    du = _edge_slopes(U, j)
    t = np.arange(1, nj) / nj
    _, d1, d2 = ham.eval(eid, t, du[1:], du[:-1])
    m = M.edge_values(j)[1:-1]
    acc = m * d1 - m * d2
    acc[1:] -= m[:-1] * d1[:-1]
    acc[:-1] += m[1:] * d2[1:]
    return acc / h


def kirchhoff_u(U: GridFunction, V: GridFunction, i: int) -> float:
    """Discrete Kirchhoff balance for U at vertex class i.

    Sums nu_j (D+ U) at the vertex-side intervals with orientation signs,
    plus the (h_j / 2) V endpoint terms; the caller passes V = V_h[M] - Lambda.
    """
    grid = U.grid
    net = grid.network
    if not 0 <= i < net.num_vertices:
        raise IndexError(f"unknown vertex index {i}")
    acc = 0.0
    for j in net.inc_plus[i]:
        nu, h = net.edges[j].nu, grid.h[j]
        acc += nu * forward_diff(U, j, 0) + 0.5 * h * V.value(j, 0)
    for j in net.inc_minus[i]:
        nu, h = net.edges[j].nu, grid.h[j]
        nj = grid.n_nodes[j]
        acc -= nu * forward_diff(U, j, nj - 1) - 0.5 * h * V.value(j, nj)
    return acc


def kirchhoff_m(M: GridFunction, U: GridFunction, ham: Hamiltonian, i: int) -> float:
    """Discrete flux balance for M at vertex class i (upwinded by orientation)."""
    grid = U.grid
    net = grid.network
    if not 0 <= i < net.num_vertices:
        raise IndexError(f"unknown vertex index {i}")
    acc = 0.0
    for j in net.inc_plus[i]:
        e = net.edges[j]
        nj = grid.n_nodes[j]
        _, _, d2 = ham.eval(e.id, 1.0 / nj, forward_diff(U, j, 1), forward_diff(U, j, 0))
        acc += e.nu * forward_diff(M, j, 0) + M.value(j, 1) * d2
    for j in net.inc_minus[i]:
        e = net.edges[j]
        nj = grid.n_nodes[j]
        _, d1, _ = ham.eval(e.id, (nj - 1.0) / nj,
                            forward_diff(U, j, nj - 1), forward_diff(U, j, nj - 2))
        acc -= e.nu * forward_diff(M, j, nj - 1) + M.value(j, nj - 1) * d1
    return acc
