"""Structured least-squares backend exploiting the per-edge band pattern.

The residual map has one row more than it has unknowns, and the surplus is
known in closed form: the weighted sum of the interior mass-transport rows
plus all vertex flux-balance rows vanishes identically (the discrete
mass-conservation identity), for the Jacobian as well as the residual.  The
left null space of J is therefore spanned by an analytic vector u.  The
least-squares step of min ||J d + F||_2 is obtained exactly by

  1. removing the unreducible component: F~ = F - (u.F / u.u) u, so that
     J d = -F~ is consistent, and the optimal residual norm is |u.F|/|u|;
  2. solving the consistent system on n independent rows.  Dropping one
     flux-balance row (where u is nonzero) leaves a nonsingular square
     system whose interior block B -- interleaved (U, M) pairs edge by
     edge -- is banded with lower bandwidth 5 and upper bandwidth 3, and
     whose only wide couplings sit in a thin border (vertex dofs and
     Lambda as columns; Kirchhoff/flux/normalization rows).
  3. factorizing B by banded Givens QR (fill stays within width 9), back
     substituting against the rotated border block, and closing the border
     unknowns through a small Schur-complement solve.

The result equals the dense-QR least-squares solution up to roundoff; the
dense path in :mod:`mfgnet.solver` remains the reference implementation.
Kernels are plain loops, jitted with numba when available.
"""

from __future__ import annotations

import math

import numpy as np

LOWER_BW = 5
UPPER_BW = 3
BAND_W = LOWER_BW + UPPER_BW + 1   # row storage width after fill-in

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a normal dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _merge_band_rows(init_band, init_border, Rband, Rborder, occ):
    """Givens row-merge QR of the square banded block.

    ``init_border`` carries the border columns and right-hand sides; it is
    rotated alongside.  Returns the count of rows that ran out of band
    support while still carrying border/rhs mass (rank deficiency of the
    banded block).
    """
    n_band = init_band.shape[0]
    W = init_band.shape[1]
    nb = init_border.shape[1]
    w = np.empty(W)
    wb = np.empty(nb)
    lost = 0
    for r in range(n_band):
        for d in range(W):
            w[d] = init_band[r, d]
        for d in range(nb):
            wb[d] = init_border[r, d]
        c = r - LOWER_BW
        while True:
            d0 = -1
            for d in range(W):
                if w[d] != 0.0:
                    d0 = d
                    break
            if d0 < 0:
                for d in range(nb):
                    if wb[d] != 0.0:
                        lost += 1
                        break
                break
            c += d0
            if d0 > 0:
                for d in range(W - d0):
                    w[d] = w[d + d0]
                for d in range(W - d0, W):
                    w[d] = 0.0
            if not occ[c]:
                for d in range(W):
                    Rband[c, d] = w[d]
                for d in range(nb):
                    Rborder[c, d] = wb[d]
                occ[c] = True
                break
            a = Rband[c, 0]
            b = w[0]
            hyp = math.hypot(a, b)
            cs = a / hyp
            sn = b / hyp
            for d in range(W):
                t = cs * Rband[c, d] + sn * w[d]
                w[d] = -sn * Rband[c, d] + cs * w[d]
                Rband[c, d] = t
            for d in range(nb):
                t = cs * Rborder[c, d] + sn * wb[d]
                wb[d] = -sn * Rborder[c, d] + cs * wb[d]
                Rborder[c, d] = t
            w[0] = 0.0
    return lost


@njit(cache=True)
def _back_substitute_block(Rband, RB, X):
    """Solve R X = RB columnwise for the banded upper-triangular R."""
    n_band = Rband.shape[0]
    W = Rband.shape[1]
    q = RB.shape[1]
    for c in range(n_band - 1, -1, -1):
        for col in range(q):
            s = RB[c, col]
            for d in range(1, W):
                cc = c + d
                if cc >= n_band:
                    break
                s -= Rband[c, d] * X[cc, col]
            X[c, col] = s / Rband[c, 0]


class BorderedBandQR:
    """Reusable least-squares workspace bound to one problem's sparsity.

    ``solve(vals, F)`` takes the Jacobian triplet values in pattern order
    plus the residual vector and returns ``(delta, residual_norm)`` for
    min ||J delta + F||_2.
    """

    def __init__(self, problem):
        from .system import jacobian_pattern

        grid = problem.grid
        net = problem.network
        n_dofs = grid.num_dofs
        n_vert = net.num_vertices
        n_band = 2 * (n_dofs - n_vert)
        nb = 2 * n_vert + 1
        self.n_band = n_band
        self.nb = nb
        self.n = n_band + nb

        # Column permutation: interleaved interior pairs, then the border.
        perm_col = np.empty(2 * n_dofs + 1, dtype=np.int64)
        # Row permutation: band rows 0..n_band-1, border rows n_band..,
        # the dropped flux-balance row -> -1.
        perm_row = np.full(2 * n_dofs + 2, -1, dtype=np.int64)
        for j in range(net.num_edges):
            nj = grid.n_nodes[j]
            off = grid.interior_offset[j]
            base = 2 * (off - n_vert)
            ks = np.arange(nj - 1)
            perm_col[off + ks] = base + 2 * ks
            perm_col[n_dofs + off + ks] = base + 2 * ks + 1
            perm_row[problem.row_hjb(j, 1) + ks] = base + 2 * ks
            perm_row[problem.row_fp(j, 1) + ks] = base + 2 * ks + 1
        verts = np.arange(n_vert)
        perm_col[verts] = n_band + verts
        perm_col[n_dofs + verts] = n_band + n_vert + verts
        perm_col[2 * n_dofs] = n_band + 2 * n_vert
        perm_row[problem.row_s(0) + verts] = n_band + verts
        # all flux-balance rows except the last; u is nonzero there
        perm_row[problem.row_t(0) + verts[:-1]] = n_band + n_vert + verts[:-1]
        perm_row[problem.row_mass] = n_band + 2 * n_vert - 1
        perm_row[problem.row_mean] = n_band + 2 * n_vert
        self.perm_col = perm_col
        self.perm_row = perm_row

        # Analytic left null vector of the Jacobian (mass conservation).
        u = np.zeros(2 * n_dofs + 2)
        for j in range(net.num_edges):
            r0 = problem.row_fp(j, 1)
            u[r0:r0 + grid.n_nodes[j] - 1] = grid.h[j]
        u[problem.row_t(0) + verts] = 1.0
        self.null_unit = u / np.linalg.norm(u)

        rows, cols = jacobian_pattern(problem)
        pr = perm_row[rows]
        pc = perm_col[cols]
        keep = pr >= 0
        band_row = keep & (pr < n_band)
        band_col = pc < n_band
        sel_bb = band_row & band_col
        sel_bc = band_row & ~band_col
        sel_brd = keep & (pr >= n_band)
        off_diag = pc[sel_bb] - pr[sel_bb] + LOWER_BW
        if off_diag.size and (off_diag.min() < 0 or off_diag.max() >= BAND_W):
            raise AssertionError("jacobian entry outside the expected band")
        self.sel_bb = np.nonzero(sel_bb)[0]
        self.sel_bc = np.nonzero(sel_bc)[0]
        self.sel_brd = np.nonzero(sel_brd)[0]
        self.col_of_bb = pc[sel_bb]
        self.pos_bb = pr[sel_bb] * BAND_W + off_diag
        # border block of band rows: nb columns plus one rhs slot
        self.pos_bc = pr[sel_bc] * (nb + 1) + (pc[sel_bc] - n_band)
        self.pos_brd = (pr[sel_brd] - n_band) * self.n + pc[sel_brd]

        self.init_band = np.zeros((n_band, BAND_W))
        self.init_border = np.zeros((n_band, nb + 1))
        self.border_rows = np.zeros((nb, self.n))
        self.Rband = np.zeros((n_band, BAND_W))
        self.Rborder = np.zeros((n_band, nb + 1))
        self.occ = np.zeros(n_band, dtype=np.bool_)
        self.Y = np.zeros((n_band, nb + 1))
        self.rhs = np.zeros(2 * n_dofs + 2)

    def solve(self, vals: np.ndarray, F: np.ndarray):
        from .solver import RankDeficiencyError

        F = np.asarray(F, dtype=float)
        coef = float(self.null_unit @ F)
        residual = abs(coef)
        rhs_full = -(F - coef * self.null_unit)

        self.init_band[:] = 0.0
        self.init_border[:] = 0.0
        self.border_rows[:] = 0.0
        self.Rband[:] = 0.0
        self.Rborder[:] = 0.0
        self.occ[:] = False
        np.add.at(self.init_band.reshape(-1), self.pos_bb, vals[self.sel_bb])
        np.add.at(self.init_border.reshape(-1), self.pos_bc, vals[self.sel_bc])
        np.add.at(self.border_rows.reshape(-1), self.pos_brd, vals[self.sel_brd])
        keep = self.perm_row >= 0
        self.rhs[self.perm_row[keep]] = rhs_full[keep]
        self.init_border[:, self.nb] = self.rhs[:self.n_band]
        f_bot = self.rhs[self.n_band:self.n_band + self.nb].copy()

        col_norm = np.sqrt(np.bincount(self.col_of_bb,
                                       weights=vals[self.sel_bb] ** 2,
                                       minlength=self.n_band))

        lost = _merge_band_rows(self.init_band, self.init_border,
                                self.Rband, self.Rborder, self.occ)
        diag = np.abs(self.Rband[:, 0])
        if lost or not self.occ.all():
            raise RankDeficiencyError(int(self.occ.sum()), self.n)
        # diagonal negligible against its own column: banded block singular
        bad = diag <= self.n_band * np.finfo(float).eps * col_norm
        if bad.any():
            raise RankDeficiencyError(int((~bad).sum()) + self.nb, self.n)

        # Y = B^-1 [C | f_top]; border unknowns close via the Schur system.
        _back_substitute_block(self.Rband, self.Rborder, self.Y)
        D = self.border_rows[:, :self.n_band]
        E = self.border_rows[:, self.n_band:]
        schur = E - D @ self.Y[:, :self.nb]
        rhs_s = f_bot - D @ self.Y[:, self.nb]
        try:
            xb = np.linalg.solve(schur, rhs_s)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError(self.n - 1, self.n) from exc
        if not np.all(np.isfinite(xb)):
            raise RankDeficiencyError(self.n - 1, self.n)
        x_band = self.Y[:, self.nb] - self.Y[:, :self.nb] @ xb
        x_full = np.concatenate([x_band, xb])
        delta = x_full[self.perm_col]
        return delta, residual
