"""Damped Gauss-Newton with a QR-based linear least-squares inner solve.

Each iteration assembles the residual F and Jacobian J, solves
min ||J d + F||_2 by orthogonal factorization (never by forming the normal
equations, which would square the condition number), and updates
X <- X + alpha d.  The loop stops when ||d||_2 drops below the tolerance;
the final sub-tolerance probe is not applied and not counted, so a restart
from a converged point performs at most one iteration and an affine
residual is solved in exactly one iteration at alpha = 1.

Two interchangeable least-squares backends satisfy the same contract: a
dense Householder QR (LAPACK via scipy) and the structured bordered-band
Givens QR from :mod:`mfgnet._bandqr`, which is the default at production
sizes.  A single solve is sequential; independent solves may run
concurrently on separate problem instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._bandqr import BorderedBandQR
from .system import (Problem, SparseJacobian, assemble_residual,
                     jacobian_pattern, jacobian_values)

__all__ = [
    "SolverOptions",
    "SolveReport",
    "RankDeficiencyError",
    "lsq_solve",
    "gauss_newton",
]

_BANDED_MIN_UNKNOWNS = 500


class RankDeficiencyError(RuntimeError):
    """Jacobian lost full column rank; carries the numerical rank estimate."""

    def __init__(self, rank: int, ncols: int):
        super().__init__(f"rank-deficient least-squares system: "
                         f"numerical rank {rank} of {ncols} columns")
        self.rank = rank
        self.ncols = ncols


@dataclass
class SolverOptions:
    alpha: float = 0.9          # damping, 0 < alpha <= 1
    epsilon: float = 1e-4       # stop when ||delta||_2 < epsilon
    max_iter: int = 200
    initial_guess: np.ndarray | None = None
    backend: str = "auto"       # auto | dense | banded

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.backend not in ("auto", "dense", "banded"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_norms: list[float] = field(default_factory=list)
    step_norms: list[float] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    initial_residual_norm: float = 0.0
    final_residual_norm: float = 0.0
    message: str = ""

    def monotone_tail(self, span: int = 5) -> bool:
        """Diagnostic: ||F|| nonincreasing over the last ``span`` iterations."""
        tail = self.residual_norms[-span:]
        return all(b <= a * (1.0 + 1e-12) for a, b in zip(tail, tail[1:]))

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norms": list(self.residual_norms),
            "step_norms": list(self.step_norms),
            "lambdas": list(self.lambdas),
            "wall_time": self.wall_time,
            "initial_residual_norm": self.initial_residual_norm,
            "final_residual_norm": self.final_residual_norm,
            "message": self.message,
        }


def _dense_lsq(A: np.ndarray, F: np.ndarray):
    m, n = A.shape
    Q, R = scipy.linalg.qr(A, mode="economic")
    diag = np.abs(np.diag(R))
    tol = max(m, n) * np.finfo(float).eps * (diag.max() if n else 0.0)
    rank = int((diag > tol).sum())
    if rank < n:
        raise RankDeficiencyError(rank, n)
    delta = scipy.linalg.solve_triangular(R, -(Q.T @ F))
    residual = float(np.linalg.norm(A @ delta + F))
    return delta, residual


def _pivoted_basic_lsq(A: np.ndarray, F: np.ndarray):
    """Rank-tolerant step: column-pivoted QR, basic solution on the
    numerically independent columns, zeros elsewhere.  Mirrors how sparse
    QR libraries treat rank-deficient least-squares systems."""
    m, n = A.shape
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(m, n) * np.finfo(float).eps * (diag.max() if n else 0.0)
    rank = max(int((diag > tol).sum()), 1)
    z = scipy.linalg.solve_triangular(R[:rank, :rank], -(Q.T @ F)[:rank])
    delta = np.zeros(n)
    delta[piv[:rank]] = z
    residual = float(np.linalg.norm(A @ delta + F))
    return delta, residual


def lsq_solve(J, F: np.ndarray):
    """Solve min ||J delta + F||_2 via QR; returns (delta, residual norm).

    ``J`` may be a :class:`SparseJacobian` or a dense 2-d array.  Raises
    :class:`RankDeficiencyError` (with the numerical rank) when the columns
    are dependent.
    """
    if isinstance(J, SparseJacobian):
        A = J.to_dense()
    else:
        A = np.asarray(J, dtype=float)
    F = np.asarray(F, dtype=float)
    if A.ndim != 2 or A.shape[0] != F.shape[0]:
        raise ValueError(f"shape mismatch: J {A.shape}, F {F.shape}")
    return _dense_lsq(A, F)


def default_initial_guess(problem: Problem) -> np.ndarray:
    return problem.initial_guess()


def gauss_newton(problem: Problem, options: SolverOptions | None = None):
    """Run the damped Gauss-Newton loop; returns (X, SolveReport).

    Starts from U = 0, Lambda = 0, M = 1/L unless an explicit guess is
    given.  No nonnegativity constraint is imposed on M at any point.
    Non-convergence within ``max_iter`` returns converged=False rather than
    raising; rank deficiency in the inner solve propagates.
    """
    options = options or SolverOptions()
    X = (problem.initial_guess() if options.initial_guess is None
         else np.asarray(options.initial_guess, dtype=float).copy())
    if X.shape != (problem.num_unknowns,):
        raise ValueError(
            f"initial guess has {X.shape}, expected {(problem.num_unknowns,)}")

    use_banded = options.backend == "banded" or (
        options.backend == "auto" and problem.num_unknowns >= _BANDED_MIN_UNKNOWNS)
    workspace = BorderedBandQR(problem) if use_banded else None
    rows, cols = jacobian_pattern(problem)

    report = SolveReport(converged=False, iterations=0)
    t0 = time.perf_counter()
    report.initial_residual_norm = float(
        np.linalg.norm(assemble_residual(X, problem)))

    for _ in range(options.max_iter):
        F = assemble_residual(X, problem)
        vals = jacobian_values(X, problem)
        try:
            if use_banded:
                delta, _ = workspace.solve(vals, F)
            else:
                J = SparseJacobian(rows, cols, vals,
                                   (problem.num_residuals, problem.num_unknowns))
                delta, _ = lsq_solve(J, F)
        except RankDeficiencyError:
            # an intermediate iterate may lose full rank (e.g. sign changes
            # of the mass flip the coupling); take the pivoted basic step
            # instead of aborting, as sparse QR least-squares codes do
            J = SparseJacobian(rows, cols, vals,
                               (problem.num_residuals, problem.num_unknowns))
            delta, _ = _pivoted_basic_lsq(J.to_dense(), F)
            if "rank-deficient" not in report.message:
                report.message += "rank-deficient iterates handled by pivoted QR; "
        step = float(np.linalg.norm(delta))
        if step < options.epsilon:
            report.converged = True
            break
        X = X + options.alpha * delta
        report.iterations += 1
        report.residual_norms.append(float(np.linalg.norm(F)))
        report.step_norms.append(step)
        report.lambdas.append(float(X[-1]))
    else:
        report.message = f"no convergence within {options.max_iter} iterations"

    report.final_residual_norm = float(
        np.linalg.norm(assemble_residual(X, problem)))
    report.wall_time = time.perf_counter() - t0
    return X, report
