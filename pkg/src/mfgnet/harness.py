"""Experiment presets, the grid-refinement error study, and solution export."""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingOperator, parse_coupling
from .hamiltonian import CostField, Hamiltonian
from .network import (Network, build_grid, load_network, preset_self_similar,
                      preset_tripod)
from .operators import GridFunction
from .solver import SolveReport, SolverOptions, gauss_newton
from .system import Problem, dump_system

__all__ = [
    "ExperimentConfig",
    "ErrorStudyRow",
    "Solution",
    "RunResult",
    "preset_config",
    "build_problem",
    "run_preset",
    "error_study",
    "export_solution",
    "read_solution",
]

PRESET_NAMES = ("test1", "test2", "test3", "test4", "tripod", "self-similar")


@dataclass
class ExperimentConfig:
    """Everything needed to set up and solve one experiment."""

    preset: str = "custom"
    network: Network | None = None
    network_path: str | None = None
    nodes: int = 250
    levels: int = 3                    # self-similar generations
    nu: float | None = 0.1             # None keeps a loaded file's values
    beta: float = 2.0
    ham_scale: float | None = None     # None -> 1/beta, the experiments' form
    switches: tuple[float, ...] | None = None   # None -> all edges active
    cost_samples: dict | None = None
    coupling: CouplingOperator = field(default_factory=CouplingOperator.power)
    epsilon: float = 1e-4
    alpha: float = 0.9
    max_iter: int = 200
    backend: str = "auto"


def preset_config(name: str) -> ExperimentConfig:
    """Configurations of the four reference experiments.

    test1: quadratic coupling, nu = 0.1, cost active everywhere.
    test2: same at vanishing viscosity nu = 1e-4.
    test3: decreasing arctan coupling (uniqueness not guaranteed), nu = 0.1.
    test4: self-similar network, quadratic coupling, nu = 0.1.
    """
    if name in ("test1", "tripod"):
        return ExperimentConfig(preset=name)
    if name == "test2":
        return ExperimentConfig(preset=name, nu=1e-4)
    if name == "test3":
        return ExperimentConfig(preset=name, coupling=CouplingOperator.arctan())
    if name in ("test4", "self-similar"):
        return ExperimentConfig(preset=name)
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


def _with_uniform_nu(network: Network, nu: float) -> Network:
    edges = tuple(dataclasses.replace(e, nu=nu) for e in network.edges)
    return dataclasses.replace(network, edges=edges)


def resolve_network(config: ExperimentConfig) -> Network:
    if config.network is not None:
        net = config.network
        if config.nu is not None:
            net = _with_uniform_nu(net, config.nu)
        return net
    if config.network_path is not None:
        net = load_network(config.network_path)
        if config.nu is not None:
            net = _with_uniform_nu(net, config.nu)
        return net
    nu = 0.1 if config.nu is None else config.nu
    if config.preset in ("test4", "self-similar"):
        return preset_self_similar(config.levels, nu=nu)
    return preset_tripod(nu=nu)


def build_problem(config: ExperimentConfig, nodes: int | None = None) -> Problem:
    network = resolve_network(config)
    grid = build_grid(network, n=nodes if nodes is not None else config.nodes)
    if config.cost_samples is not None:
        cost = CostField.from_samples(config.cost_samples)
    else:
        switches = config.switches if config.switches is not None else (1.0,)
        cost = CostField.from_switches(network, switches)
    scale = config.ham_scale if config.ham_scale is not None else 1.0 / config.beta
    ham = Hamiltonian(beta=config.beta, cost=cost, scale=scale)
    return Problem(network=network, grid=grid, hamiltonian=ham,
                   coupling=config.coupling)


def solver_options(config: ExperimentConfig) -> SolverOptions:
    return SolverOptions(alpha=config.alpha, epsilon=config.epsilon,
                         max_iter=config.max_iter, backend=config.backend)


@dataclass
class Solution:
    problem: Problem
    U: GridFunction
    M: GridFunction
    lam: float


@dataclass
class RunResult:
    solution: Solution
    report: SolveReport
    summary: dict


def run_preset(config: ExperimentConfig, out: str | None = None,
               fmt: str = "csv", log: str | None = None,
               dump: str | None = None) -> RunResult:
    """Solve one configured experiment; optionally export and log.

    The summary carries (min M, max M, Lambda) for comparison with the
    reference figure headers, plus the uniqueness label of the coupling.
    """
    problem = build_problem(config)
    X, report = gauss_newton(problem, solver_options(config))
    U, M, lam = problem.unpack(X)
    solution = Solution(problem, U, M, lam)
    summary = {
        "preset": config.preset,
        "min_m": float(M.values.min()),
        "max_m": float(M.values.max()),
        "lambda": lam,
        "iterations": report.iterations,
        "converged": report.converged,
        "coupling": config.coupling.label,
        "nu": config.nu,
        "beta": config.beta,
    }
    if out is not None:
        export_solution(solution, out, fmt=fmt)
    if log is not None:
        with open(log, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    if dump is not None:
        dump_system(X, problem, dump)
    return RunResult(solution=solution, report=report, summary=summary)


@dataclass
class ErrorStudyRow:
    n: int
    dofs: int
    error: float
    error_lambda: float
    iterations: int
    eoc: float | None
    cpu_time: float


def _interp_to_coarse(ref: Solution, problem: Problem) -> tuple[GridFunction, GridFunction]:
    """Linear interpolation of the reference solution onto a coarser grid."""
    ref_grid = ref.problem.grid
    grid = problem.grid
    u = np.empty(grid.num_dofs)
    m = np.empty(grid.num_dofs)
    nv = grid.num_vertex_dofs
    u[:nv] = ref.U.values[:nv]
    m[:nv] = ref.M.values[:nv]
    for j in range(grid.network.num_edges):
        t_c = grid.arc_fractions(j)[1:-1]
        t_r = ref_grid.arc_fractions(j)
        sl = slice(grid.interior_offset[j],
                   grid.interior_offset[j] + grid.n_nodes[j] - 1)
        u[sl] = np.interp(t_c, t_r, ref.U.edge_values(j))
        m[sl] = np.interp(t_c, t_r, ref.M.edge_values(j))
    return GridFunction(grid, u), GridFunction(grid, m)


def error_study(config: ExperimentConfig, n_list, n_ref: int) -> list[ErrorStudyRow]:
    """Grid-refinement study against an internal fine-grid reference.

    The run at ``n_ref`` intervals per edge is treated as exact; each entry
    of ``n_list`` is solved and compared in the discrete 1-norm
    h * sum |W_k| over all dofs (linear interpolation of the reference),
    plus the gap in the ergodic constant.  Eoc is reported between
    successive rows.
    """
    n_list = [int(n) for n in n_list]
    if any(n >= n_ref for n in n_list):
        raise ValueError("every study resolution must be below the reference")
    if any(n < 3 for n in n_list):
        raise ValueError("resolutions must allow at least 3 intervals per edge")
    lengths = {e.length for e in resolve_network(config).edges}
    if len(lengths) != 1:
        raise ValueError("the error study expects edges of equal length")

    ref_problem = build_problem(config, nodes=n_ref)
    opts = solver_options(config)
    Xr, _ = gauss_newton(ref_problem, opts)
    Ur, Mr, lam_r = ref_problem.unpack(Xr)
    ref = Solution(ref_problem, Ur, Mr, lam_r)

    rows: list[ErrorStudyRow] = []
    prev: tuple[float, float] | None = None
    for n in sorted(n_list):
        problem = build_problem(config, nodes=n)
        t0 = time.perf_counter()
        X, report = gauss_newton(problem, opts)
        cpu = time.perf_counter() - t0
        U, M, lam = problem.unpack(X)
        Ui, Mi = _interp_to_coarse(ref, problem)
        h = problem.grid.h[0]
        err = (h * np.abs(U.values - Ui.values).sum()
               + h * np.abs(M.values - Mi.values).sum()
               + abs(lam - lam_r))
        eoc = None
        if prev is not None:
            h_prev, err_prev = prev
            eoc = float(np.log(err_prev / err) / np.log(h_prev / h))
        rows.append(ErrorStudyRow(n=n, dofs=problem.num_unknowns, error=float(err),
                                  error_lambda=abs(lam - lam_r),
                                  iterations=report.iterations, eoc=eoc,
                                  cpu_time=cpu))
        prev = (h, err)
    return rows


def study_to_csv(rows: list[ErrorStudyRow], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "dofs", "E_h", "err_lambda", "iterations",
                         "eoc", "cpu_time"])
        for r in rows:
            writer.writerow([r.n, r.dofs, f"{r.error:.6e}",
                             f"{r.error_lambda:.6e}", r.iterations,
                             "" if r.eoc is None else f"{r.eoc:.3f}",
                             f"{r.cpu_time:.3f}"])


def _node_records(solution: Solution):
    """Vertices first (network order), then edge interiors; one per dof."""
    grid = solution.problem.grid
    net = grid.network
    for i in range(net.num_vertices):
        x, y = net.vertex_xy[i]
        yield ("v", net.vertex_ids[i], "", "", x, y,
               solution.U.values[i], solution.M.values[i])
    for j, e in enumerate(net.edges):
        x0, y0 = net.raw_xy[e.tail]
        x1, y1 = net.raw_xy[e.head]
        t = grid.arc_fractions(j)
        dofs = grid.edge_dofs[j]
        for k in range(1, grid.n_nodes[j]):
            tk = t[k]
            yield ("e", e.id, k, tk,
                   x0 + tk * (x1 - x0), y0 + tk * (y1 - y0),
                   solution.U.values[dofs[k]], solution.M.values[dofs[k]])


def export_solution(solution: Solution, path: str, fmt: str = "csv"):
    """Write one record per dof with byte-stable ordering and full precision."""
    meta = {
        "lambda": solution.lam,
        "nu": [e.nu for e in solution.problem.network.edges],
        "beta": solution.problem.hamiltonian.beta,
        "coupling": solution.problem.coupling.label,
    }
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            for key, val in meta.items():
                fh.write(f"# {key} = {json.dumps(val)}\n")
            writer = csv.writer(fh)
            writer.writerow(["kind", "id", "k", "t", "x", "y", "u", "m"])
            for rec in _node_records(solution):
                writer.writerow([rec[0], rec[1], rec[2],
                                 _fmt(rec[3]), _fmt(rec[4]), _fmt(rec[5]),
                                 _fmt(rec[6]), _fmt(rec[7])])
    elif fmt == "json":
        nodes = [dict(zip(("kind", "id", "k", "t", "x", "y", "u", "m"), rec))
                 for rec in _node_records(solution)]
        with open(path, "w") as fh:
            json.dump({"meta": meta, "nodes": nodes}, fh, indent=1)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def _fmt(v) -> str:
    return "" if v == "" else repr(float(v))


def read_solution(path: str, fmt: str = "csv"):
    """Round-trip reader for exported solutions; returns (meta, records)."""
    if fmt == "json":
        with open(path) as fh:
            data = json.load(fh)
        return data["meta"], data["nodes"]
    meta = {}
    records = []
    with open(path) as fh:
        rows = []
        for line in fh:
            if line.startswith("# "):
                key, _, val = line[2:].partition(" = ")
                meta[key.strip()] = json.loads(val)
            else:
                rows.append(line)
        for row in csv.reader(rows):
            if not row or row[0] == "kind":
                continue
            records.append({
                "kind": row[0], "id": row[1],
                "k": int(row[2]) if row[2] else "",
                "t": float(row[3]) if row[3] else "",
                "x": float(row[4]), "y": float(row[5]),
                "u": float(row[6]), "m": float(row[7]),
            })
    return meta, records
