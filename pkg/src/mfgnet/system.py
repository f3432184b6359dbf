"""Assembly of the overdetermined residual map and its sparse Jacobian.

Unknown layout: X = [U dofs | M dofs | Lambda], 2 N^h + 1 reals.  Residual
rows, 2 N^h + 2 in total, come in fixed blocks:

    HJB interior rows (edge-by-edge, k ascending)
    HJB vertex rows   (Kirchhoff balance, vertex order)
    FP interior rows
    FP vertex rows    (flux balance)
    mass row  (M, 1)_2 - 1
    mean row  (U, 1)_2

Assembly is vectorized per edge and emits triplets in a deterministic order
whose (row, col) pattern depends only on the grid, so repeated assemblies at
the same X are bitwise identical and downstream solvers may precompute
scatter maps once per problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingOperator
from .hamiltonian import Hamiltonian
from .network import Grid, Network
from .operators import GridFunction

__all__ = [
    "Problem",
    "SparseJacobian",
    "assemble_residual",
    "assemble_jacobian",
    "fd_jacobian",
    "kink_nodes",
    "dump_system",
]


@dataclass(frozen=True, eq=False)
class Problem:
    """Network, grid, Hamiltonian and coupling bundled with the row layout."""

    network: Network
    grid: Grid
    hamiltonian: Hamiltonian
    coupling: CouplingOperator

    @property
    def num_dofs(self) -> int:
        return self.grid.num_dofs

    @property
    def num_unknowns(self) -> int:
        return 2 * self.grid.num_dofs + 1

    @property
    def num_residuals(self) -> int:
        return 2 * self.grid.num_dofs + 2

    @property
    def num_interior(self) -> int:
        return self.grid.num_dofs - self.network.num_vertices

    # --- residual row offsets ---
    def row_hjb(self, j: int, k: int) -> int:
        return self.grid.interior_offset[j] - self.network.num_vertices + (k - 1)

    def row_s(self, i: int) -> int:
        return self.num_interior + i

    def row_fp(self, j: int, k: int) -> int:
        return self.num_interior + self.network.num_vertices + self.row_hjb(j, k)

    def row_t(self, i: int) -> int:
        return 2 * self.num_interior + self.network.num_vertices + i

    @property
    def row_mass(self) -> int:
        return self.num_residuals - 2

    @property
    def row_mean(self) -> int:
        return self.num_residuals - 1

    # --- unknown vector helpers ---
    def pack(self, U: GridFunction, M: GridFunction, lam: float) -> np.ndarray:
        return np.concatenate([U.values, M.values, [float(lam)]])

    def unpack(self, X: np.ndarray):
        n = self.num_dofs
        U = GridFunction(self.grid, X[:n].copy())
        M = GridFunction(self.grid, X[n:2 * n].copy())
        return U, M, float(X[2 * n])

    def initial_guess(self) -> np.ndarray:
        """Default start: U = 0, Lambda = 0, M uniform at 1/L."""
        X = np.zeros(self.num_unknowns)
        X[self.num_dofs:2 * self.num_dofs] = 1.0 / self.network.total_length
        return X


@dataclass
class SparseJacobian:
    """Triplet-form Jacobian; duplicate (row, col) entries add up."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple[int, int]

    def to_coo(self):
        import scipy.sparse as sp

        mat = sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)
        mat.sum_duplicates()
        return mat

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.vals)
        return out

    @property
    def nnz(self) -> int:
        return len(self.vals)


def _edge_quantities(problem: Problem, Uv: np.ndarray, j: int):
    """Per-edge slopes and Hamiltonian partials at interior nodes k=1..N-1."""
    grid = problem.grid
    dofs = grid.edge_dofs[j]
    nj = grid.n_nodes[j]
    h = grid.h[j]
    u = Uv[dofs]
    du = np.diff(u) / h
    t = np.arange(1, nj) / nj
    eid = problem.network.edges[j].id
    g, ga, gb = problem.hamiltonian.eval(eid, t, du[1:], du[:-1])
    return dofs, nj, h, du, g, ga, gb


def assemble_residual(X: np.ndarray, problem: Problem) -> np.ndarray:
    """Residual vector of the discrete system at X (2 N^h + 2 entries)."""
    X = np.asarray(X, dtype=float)
    if X.shape != (problem.num_unknowns,):
        raise ValueError(
            f"expected {problem.num_unknowns} unknowns, got {X.shape}")
    grid = problem.grid
    net = problem.network
    n = problem.num_dofs
    Uv = X[:n]
    Mv = X[n:2 * n]
    lam = X[2 * n]
    Vv = problem.coupling.value(Mv)

    F = np.zeros(problem.num_residuals)
    per_edge = []
    for j in range(net.num_edges):
        dofs, nj, h, du, g, ga, gb = _edge_quantities(problem, Uv, j)
        nu = net.edges[j].nu
        u = Uv[dofs]
        m = Mv[dofs]
        d2u = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (h * h)
        d2m = (m[:-2] - 2.0 * m[1:-1] + m[2:]) / (h * h)

        r0 = problem.row_hjb(j, 1)
        F[r0:r0 + nj - 1] = -nu * d2u + g + lam - Vv[dofs[1:-1]]

        mi = m[1:-1]
        b = mi * ga - mi * gb
        b[1:] -= mi[:-1] * ga[:-1]
        b[:-1] += mi[1:] * gb[1:]
        r0 = problem.row_fp(j, 1)
        F[r0:r0 + nj - 1] = nu * d2m + b / h
        per_edge.append((dofs, nj, h, du, ga, gb))

    for i in range(net.num_vertices):
        s_acc = 0.0
        t_acc = 0.0
        for j in net.inc_plus[i]:
            dofs, nj, h, du, ga, gb = per_edge[j]
            nu = net.edges[j].nu
            dm0 = (Mv[dofs[1]] - Mv[dofs[0]]) / h
            s_acc += nu * du[0] + 0.5 * h * (Vv[dofs[0]] - lam)
            t_acc += nu * dm0 + Mv[dofs[1]] * gb[0]
        for j in net.inc_minus[i]:
            dofs, nj, h, du, ga, gb = per_edge[j]
            nu = net.edges[j].nu
            dmN = (Mv[dofs[nj]] - Mv[dofs[nj - 1]]) / h
            s_acc -= nu * du[nj - 1] - 0.5 * h * (Vv[dofs[nj]] - lam)
            t_acc -= nu * dmN + Mv[dofs[nj - 1]] * ga[nj - 2]
        F[problem.row_s(i)] = s_acc
        F[problem.row_t(i)] = t_acc

    w = grid.dof_weights
    F[problem.row_mass] = np.dot(w, Mv) - 1.0
    F[problem.row_mean] = np.dot(w, Uv)
    return F


def jacobian_pattern(problem: Problem) -> tuple[np.ndarray, np.ndarray]:
    """Fixed (row, col) triplet pattern of the analytic Jacobian.

    The pattern depends only on the grid, so structured solvers can build
    scatter maps once; :func:`jacobian_values` fills matching values.
    """
    rows, cols = [], []

    def emit(r, c):
        rows.append(np.asarray(r, dtype=np.int64))
        cols.append(np.asarray(c, dtype=np.int64))

    _assemble_jac(problem, None, emit_pattern=emit)
    return np.concatenate(rows), np.concatenate(cols)


def jacobian_values(X: np.ndarray, problem: Problem) -> np.ndarray:
    """Triplet values matching :func:`jacobian_pattern` order."""
    vals = []

    def emit(v):
        vals.append(np.asarray(v, dtype=float))

    _assemble_jac(problem, np.asarray(X, dtype=float), emit_values=emit)
    return np.concatenate(vals)


def _assemble_jac(problem: Problem, X, emit_pattern=None, emit_values=None):
    """Shared walk for pattern and values; order is deterministic."""
    grid = problem.grid
    net = problem.network
    n = problem.num_dofs
    lam_col = 2 * n

    if X is not None:
        Uv = X[:n]
        Mv = X[n:2 * n]
        dVv = problem.coupling.derivative(Mv)

    def put(r, c, v):
        if emit_pattern is not None:
            emit_pattern(r, c)
        if emit_values is not None:
            emit_values(v)

    per_edge = []
    for j in range(net.num_edges):
        dofs = grid.edge_dofs[j]
        nj = grid.n_nodes[j]
        h = grid.h[j]
        nu = net.edges[j].nu
        colU = dofs
        colM = dofs + n
        r_hjb = problem.row_hjb(j, 1) + np.arange(nj - 1)
        r_fp = problem.row_fp(j, 1) + np.arange(nj - 1)

        if X is not None:
            u = Uv[dofs]
            du = np.diff(u) / h
            q1, q2 = du[1:], du[:-1]
            t = np.arange(1, nj) / nj
            eid = net.edges[j].id
            _, ga, gb = problem.hamiltonian.eval(eid, t, q1, q2)
            gaa, gab, gbb = problem.hamiltonian.second_partials(q1, q2)
            m = Mv[dofs][1:-1]
            per_edge.append((du, ga, gb, gaa, gab, gbb))
        else:
            z = np.zeros(nj - 1)
            ga = gb = gaa = gab = gbb = m = z
            per_edge.append(None)

        ih2 = nu / (h * h)
        # HJB rows: tri-diagonal in U, diagonal in M, dense in Lambda
        put(r_hjb, colU[:-2], -ih2 - gb / h)
        put(r_hjb, colU[1:-1], 2.0 * ih2 + (gb - ga) / h)
        put(r_hjb, colU[2:], -ih2 + ga / h)
        put(r_hjb, colM[1:-1], -dVv[dofs[1:-1]] if X is not None else z)
        put(r_hjb, np.full(nj - 1, lam_col), np.ones(nj - 1))

        # FP rows, mass part
        v_km = np.full(nj - 1, ih2)
        v_km[1:] -= ga[:-1] / h
        put(r_fp, colM[:-2], v_km)
        put(r_fp, colM[1:-1], -2.0 * ih2 + (ga - gb) / h)
        v_kp = np.full(nj - 1, ih2)
        v_kp[:-1] += gb[1:] / h
        put(r_fp, colM[2:], v_kp)

        # FP rows, value part: flux derivatives through the g partials
        h2 = h * h
        c_k = m / h2
        put(r_fp, colU[:-2], c_k * (gbb - gab))
        put(r_fp, colU[1:-1], c_k * ((gab - gaa) - (gbb - gab)))
        put(r_fp, colU[2:], c_k * (gaa - gab))
        # neighbor terms, emitted for their valid ranges only
        c_km = (m[:-1] / h2) if X is not None else np.zeros(nj - 2)
        put(r_fp[1:], colU[:-3], c_km * gab[:-1])
        put(r_fp[1:], colU[1:-2], -c_km * (gab[:-1] - gaa[:-1]))
        put(r_fp[1:], colU[2:-1], -c_km * gaa[:-1])
        c_kp = (m[1:] / h2) if X is not None else np.zeros(nj - 2)
        put(r_fp[:-1], colU[1:-2], -c_kp * gbb[1:])
        put(r_fp[:-1], colU[2:-1], c_kp * (gbb[1:] - gab[1:]))
        put(r_fp[:-1], colU[3:], c_kp * gab[1:])

    for i in range(net.num_vertices):
        rs = problem.row_s(i)
        rt = problem.row_t(i)
        hv = grid.vertex_weights[i]
        colU_i = i
        colM_i = n + i
        for j in net.inc_plus[i]:
            dofs = grid.edge_dofs[j]
            h = grid.h[j]
            nu = net.edges[j].nu
            if X is not None:
                du, ga, gb, gaa, gab, gbb = per_edge[j]
                m1 = Mv[dofs[1]]
                s_vals = (nu / h, -nu / h)
                t_m = (nu / h + gb[0], -nu / h)
                t_u = (-m1 * gbb[0] / h, m1 * (gbb[0] - gab[0]) / h, m1 * gab[0] / h)
            else:
                s_vals = t_m = t_u = None
            put([rs, rs], [dofs[1], colU_i], s_vals)
            put([rt, rt], [dofs[1] + n, colM_i], t_m)
            put([rt, rt, rt], [colU_i, dofs[1], dofs[2]], t_u)
        for j in net.inc_minus[i]:
            dofs = grid.edge_dofs[j]
            nj = grid.n_nodes[j]
            h = grid.h[j]
            nu = net.edges[j].nu
            if X is not None:
                du, ga, gb, gaa, gab, gbb = per_edge[j]
                mN = Mv[dofs[nj - 1]]
                s_vals = (nu / h, -nu / h)
                t_m = (nu / h - ga[nj - 2], -nu / h)
                t_u = (mN * gab[nj - 2] / h, -mN * (gab[nj - 2] - gaa[nj - 2]) / h,
                       -mN * gaa[nj - 2] / h)
            else:
                s_vals = t_m = t_u = None
            put([rs, rs], [dofs[nj - 1], colU_i], s_vals)
            put([rt, rt], [dofs[nj - 1] + n, colM_i], t_m)
            put([rt, rt, rt], [dofs[nj - 2], dofs[nj - 1], colU_i], t_u)
        if X is not None:
            put([rs, rs], [colM_i, lam_col], (hv * dVv[i], -hv))
        else:
            put([rs, rs], [colM_i, lam_col], None)

    all_dofs = np.arange(n)
    w = grid.dof_weights
    put(np.full(n, problem.row_mass), all_dofs + n, w)
    put(np.full(n, problem.row_mean), all_dofs, w)


def assemble_jacobian(X: np.ndarray, problem: Problem) -> SparseJacobian:
    """Analytic Jacobian of the residual map at X, in triplet form."""
    rows, cols = jacobian_pattern(problem)
    vals = jacobian_values(X, problem)
    return SparseJacobian(rows, cols, vals,
                          (problem.num_residuals, problem.num_unknowns))


def fd_jacobian(X: np.ndarray, problem: Problem, step: float = 1e-6) -> SparseJacobian:
    """Central-difference Jacobian, the verification oracle for the analytic one.

    Per-column step is scaled by 1 + |X_c|.  Intended for small problems;
    never used in the solve path.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    X = np.asarray(X, dtype=float)
    n_un = problem.num_unknowns
    dense = np.zeros((problem.num_residuals, n_un))
    for c in range(n_un):
        e = step * (1.0 + abs(X[c]))
        xp = X.copy()
        xp[c] += e
        xm = X.copy()
        xm[c] -= e
        dense[:, c] = (assemble_residual(xp, problem)
                       - assemble_residual(xm, problem)) / (2.0 * e)
    rows, cols = np.nonzero(dense)
    return SparseJacobian(rows.astype(np.int64), cols.astype(np.int64),
                          dense[rows, cols], dense.shape)


def kink_nodes(X: np.ndarray, problem: Problem, margin: float = 1e-3):
    """Interior nodes whose gradient pair sits within ``margin`` of a kink.

    Finite differencing of the upwind Hamiltonian is one-sided there, so
    Jacobian comparisons skip rows and columns touching these nodes.
    """
    grid = problem.grid
    n = problem.num_dofs
    Uv = np.asarray(X, dtype=float)[:n]
    out = []
    for j in range(problem.network.num_edges):
        dofs = grid.edge_dofs[j]
        du = np.diff(Uv[dofs]) / grid.h[j]
        q1, q2 = du[1:], du[:-1]
        bad = (np.abs(q1) < margin) | (np.abs(q2) < margin)
        out.extend((j, int(k)) for k in np.nonzero(bad)[0] + 1)
    return out


def dump_system(X: np.ndarray, problem: Problem, path_prefix: str) -> tuple[str, str]:
    """Write F and J at X in matrix-market-style text files.

    Produces ``<prefix>_jacobian.mtx`` (coordinate format, 1-based) and
    ``<prefix>_residual.mtx`` (dense array format).
    """
    F = assemble_residual(X, problem)
    J = assemble_jacobian(X, problem).to_coo()
    jac_path = f"{path_prefix}_jacobian.mtx"
    res_path = f"{path_prefix}_residual.mtx"
    with open(jac_path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{J.shape[0]} {J.shape[1]} {J.nnz}\n")
        for r, c, v in zip(J.row, J.col, J.data):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")
    with open(res_path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{F.size} 1\n")
        for v in F:
            fh.write(f"{v:.17g}\n")
    return jac_path, res_path
