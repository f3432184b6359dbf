"""Metric networks (multigraphs with parametrized edges) and uniform grids.

A network is a set of vertices joined by oriented arcs.  Edge ``j`` is
parametrized by arc length over ``[0, l_j]``; its *tail* sits at parameter 0
and its *head* at parameter ``l_j``.  Raw vertices may be merged into
identified classes (e.g. all outer endpoints of the reference three-edge
network form a single class), so parallel edges and self-loops are legal.

Networks and grids are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Edge",
    "Network",
    "Grid",
    "NetworkError",
    "build_network",
    "load_network",
    "incidence",
    "build_grid",
    "preset_tripod",
    "preset_self_similar",
]


class NetworkError(ValueError):
    """Invalid network or grid description."""


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str   # raw vertex id at arc parameter 0
    head: str   # raw vertex id at arc parameter l
    length: float
    nu: float   # per-edge diffusion, > 0


@dataclass(frozen=True, eq=False)
class Network:
    """Validated metric network with vertex identification applied.

    ``vertex_ids`` lists the identified classes in deterministic order (first
    appearance of any member in the raw vertex list).  ``inc_plus[i]`` /
    ``inc_minus[i]`` hold indices of edges whose tail / head lies in class
    ``i``; a self-loop shows up in both.
    """

    vertex_ids: tuple[str, ...]
    vertex_xy: tuple[tuple[float, float], ...]
    vertex_members: tuple[tuple[str, ...], ...]
    edges: tuple[Edge, ...]
    edge_tail_class: tuple[int, ...]
    edge_head_class: tuple[int, ...]
    inc_plus: tuple[tuple[int, ...], ...]
    inc_minus: tuple[tuple[int, ...], ...]
    raw_xy: dict[str, tuple[float, float]] = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def class_index(self, vertex_id: str) -> int:
        """Resolve a class id or any raw member id to the class index."""
        for i, vid in enumerate(self.vertex_ids):
            if vid == vertex_id:
                return i
        for i, members in enumerate(self.vertex_members):
            if vertex_id in members:
                return i
        raise NetworkError(f"unknown vertex {vertex_id!r}")

    def edge_index(self, edge_id: str) -> int:
        for j, e in enumerate(self.edges):
            if e.id == edge_id:
                return j
        raise NetworkError(f"unknown edge {edge_id!r}")


def incidence(network: Network, vertex: str | int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Edge ids incident to a vertex, split by orientation.

    Returns ``(inc_plus, inc_minus)``: edges whose tail, respectively head,
    sits at the vertex.  A self-loop appears in both tuples.
    """
    i = vertex if isinstance(vertex, int) else network.class_index(vertex)
    if not 0 <= i < network.num_vertices:
        raise NetworkError(f"unknown vertex index {i}")
    plus = tuple(network.edges[j].id for j in network.inc_plus[i])
    minus = tuple(network.edges[j].id for j in network.inc_minus[i])
    return plus, minus


def build_network(spec: dict) -> Network:
    """Build and validate a network from its JSON-style description.

    Expected shape::

        {"vertices": [{"id": str, "xy": [x, y]}, ...],
         "edges": [{"id": str, "tail": str, "head": str,
                    "length": float, "nu": float}, ...],
         "identify": [[id, ...], ...]}        # optional partition groups

    Raises :class:`NetworkError` on dangling endpoints, nonpositive length
    or diffusion, duplicate ids, or a disconnected network.
    """
    raw_vertices = spec.get("vertices", [])
    if not raw_vertices:
        raise NetworkError("network has no vertices")
    raw_ids = [v["id"] for v in raw_vertices]
    if len(set(raw_ids)) != len(raw_ids):
        raise NetworkError("duplicate vertex ids")
    raw_xy = {v["id"]: (float(v["xy"][0]), float(v["xy"][1])) for v in raw_vertices}

    # Identification: mentioned groups merge; unmentioned vertices stay singletons.
    group_of: dict[str, int] = {}
    groups: list[list[str]] = []
    for group in spec.get("identify", []):
        for vid in group:
            if vid not in raw_xy:
                raise NetworkError(f"identify references unknown vertex {vid!r}")
            if vid in group_of:
                raise NetworkError(f"vertex {vid!r} appears in two identify groups")
        groups.append(list(group))
        for vid in group:
            group_of[vid] = len(groups) - 1

    class_members: list[list[str]] = []
    class_of: dict[str, int] = {}
    for vid in raw_ids:
        if vid in class_of:
            continue
        if vid in group_of:
            members = groups[group_of[vid]]
        else:
            members = [vid]
        idx = len(class_members)
        class_members.append(members)
        for m in members:
            class_of[m] = idx

    edges = []
    tail_class = []
    head_class = []
    seen_edge_ids = set()
    for e in spec.get("edges", []):
        eid = e["id"]
        if eid in seen_edge_ids:
            raise NetworkError(f"duplicate edge id {eid!r}")
        seen_edge_ids.add(eid)
        for endpoint in (e["tail"], e["head"]):
            if endpoint not in raw_xy:
                raise NetworkError(f"edge {eid!r} references unknown vertex {endpoint!r}")
        length = float(e["length"])
        nu = float(e["nu"])
        if not length > 0:
            raise NetworkError(f"edge {eid!r} has nonpositive length {length}")
        if not nu > 0:
            raise NetworkError(f"edge {eid!r} has nonpositive diffusion {nu}")
        edges.append(Edge(eid, e["tail"], e["head"], length, nu))
        tail_class.append(class_of[e["tail"]])
        head_class.append(class_of[e["head"]])
    if not edges:
        raise NetworkError("network has no edges")

    n_classes = len(class_members)
    inc_plus: list[list[int]] = [[] for _ in range(n_classes)]
    inc_minus: list[list[int]] = [[] for _ in range(n_classes)]
    for j in range(len(edges)):
        inc_plus[tail_class[j]].append(j)
        inc_minus[head_class[j]].append(j)

    # Connectivity over identified classes.
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in inc_plus[i] + inc_minus[i]:
            for nb in (tail_class[j], head_class[j]):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    if len(seen) != n_classes:
        raise NetworkError("network is not connected")

    return Network(
        vertex_ids=tuple(m[0] for m in class_members),
        vertex_xy=tuple(raw_xy[m[0]] for m in class_members),
        vertex_members=tuple(tuple(m) for m in class_members),
        edges=tuple(edges),
        edge_tail_class=tuple(tail_class),
        edge_head_class=tuple(head_class),
        inc_plus=tuple(tuple(p) for p in inc_plus),
        inc_minus=tuple(tuple(m) for m in inc_minus),
        raw_xy=raw_xy,
    )


def load_network(path: str) -> Network:
    with open(path) as fh:
        return build_network(json.load(fh))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform per-edge grid with vertex-identified degrees of freedom.

    Dof order is deterministic: one dof per identified vertex (network
    order), then interior nodes edge-by-edge with k ascending.  Boundary
    node indices (j, 0) and (j, N_j) resolve to the vertex dofs, so
    continuity at vertices is structural, never an equation.
    """

    network: Network
    n_nodes: tuple[int, ...]      # N_j = l_j / h_j per edge
    h: tuple[float, ...]
    num_dofs: int                 # #I + sum_j (N_j - 1)
    interior_offset: tuple[int, ...]
    edge_dofs: tuple[np.ndarray, ...] = field(repr=False)   # per edge, length N_j + 1
    dof_weights: np.ndarray = field(repr=False)              # quadrature weight per dof
    vertex_weights: tuple[float, ...]                        # h_{v_i} per vertex class

    @property
    def num_vertex_dofs(self) -> int:
        return self.network.num_vertices

    def index_of(self, j: int, k: int) -> int:
        """Dof index of node (j, k); k = 0 and k = N_j map to vertex dofs."""
        nj = self.n_nodes[j]
        if not 0 <= k <= nj:
            raise IndexError(f"node index k={k} out of range 0..{nj} on edge {j}")
        return int(self.edge_dofs[j][k])

    def node_of(self, dof: int):
        """Inverse of the dof map: ('v', i) for vertices, ('e', j, k) inside."""
        if not 0 <= dof < self.num_dofs:
            raise IndexError(f"dof {dof} out of range")
        if dof < self.num_vertex_dofs:
            return ("v", dof)
        for j, off in enumerate(self.interior_offset):
            if off <= dof < off + self.n_nodes[j] - 1:
                return ("e", j, dof - off + 1)
        raise IndexError(f"dof {dof} not resolvable")  # pragma: no cover

    def arc_fractions(self, j: int) -> np.ndarray:
        """t = k / N_j for k = 0..N_j."""
        nj = self.n_nodes[j]
        return np.arange(nj + 1) / nj


def build_grid(network: Network, n: int | dict | None = None, h: float | None = None) -> Grid:
    """Build the grid from per-edge node counts or a global step.

    ``n`` is a per-edge interval count (int applies to every edge, or a
    mapping edge-id -> count); alternatively a global ``h`` must divide
    every edge length exactly.  Every edge needs N_j >= 3 so the three
    transport stencils at k = 1, interior, k = N_j - 1 stay disjoint.
    """
    if (n is None) == (h is None):
        raise NetworkError("specify exactly one of n or h")
    counts = []
    for j, e in enumerate(network.edges):
        if n is not None:
            nj = n[e.id] if isinstance(n, dict) else int(n)
        else:
            ratio = e.length / h
            nj = round(ratio)
            if abs(nj * h - e.length) > 1e-9 * max(1.0, e.length):
                raise NetworkError(
                    f"step h={h} does not divide edge {e.id!r} of length {e.length}")
        if nj < 3:
            raise NetworkError(f"edge {e.id!r} needs at least 3 intervals, got {nj}")
        counts.append(int(nj))

    steps = tuple(e.length / nj for e, nj in zip(network.edges, counts))
    n_vert = network.num_vertices
    offsets = []
    pos = n_vert
    for nj in counts:
        offsets.append(pos)
        pos += nj - 1
    num_dofs = pos

    edge_dofs = []
    for j, nj in enumerate(counts):
        dofs = np.empty(nj + 1, dtype=np.int64)
        dofs[0] = network.edge_tail_class[j]
        dofs[nj] = network.edge_head_class[j]
        dofs[1:nj] = np.arange(offsets[j], offsets[j] + nj - 1)
        edge_dofs.append(dofs)

    vertex_weights = []
    for i in range(n_vert):
        w = sum(steps[j] / 2 for j in network.inc_plus[i])
        w += sum(steps[j] / 2 for j in network.inc_minus[i])
        vertex_weights.append(w)

    weights = np.zeros(num_dofs)
    weights[:n_vert] = vertex_weights
    for j, nj in enumerate(counts):
        weights[offsets[j]:offsets[j] + nj - 1] = steps[j]

    return Grid(
        network=network,
        n_nodes=tuple(counts),
        h=steps,
        num_dofs=num_dofs,
        interior_offset=tuple(offsets),
        edge_dofs=tuple(edge_dofs),
        dof_weights=weights,
        vertex_weights=tuple(vertex_weights),
    )


def preset_tripod(nu: float = 0.1) -> Network:
    """Reference network: 2 identified vertices, 3 unit edges.

    One vertex at the origin; the edges run outward to the 3rd roots of
    unity, whose endpoints are identified into a single boundary class.
    """
    vertices = [{"id": "c", "xy": [0.0, 0.0]}]
    edges = []
    outer = []
    for j in range(3):
        ang = 2 * math.pi * j / 3
        vid = f"b{j}"
        outer.append(vid)
        vertices.append({"id": vid, "xy": [math.cos(ang), math.sin(ang)]})
        edges.append({"id": f"e{j}", "tail": "c", "head": vid, "length": 1.0, "nu": nu})
    return build_network({"vertices": vertices, "edges": edges, "identify": [outer]})


def preset_self_similar(levels: int, nu: float = 0.1) -> Network:
    """Binary self-similar tree with all extremal vertices merged.

    Construction: one central unit edge; each further generation attaches
    two edges of half the parent length at every current leaf, fanning out
    at +-60 degrees (coordinates are export metadata only).  ``levels``
    counts edge generations, so levels=1 is the central edge alone and
    levels=2 adds the four half-length branches.  After truncation all
    remaining leaves are identified into one class; for levels=1 that turns
    the central edge into a self-loop.
    """
    if levels < 1:
        raise NetworkError("levels must be >= 1")
    vertices = [{"id": "v0", "xy": [0.0, 0.0]}, {"id": "v1", "xy": [1.0, 0.0]}]
    edges = [{"id": "e0", "tail": "v0", "head": "v1", "length": 1.0, "nu": nu}]
    # leaves: (vertex id, xy, unit direction of incoming edge, incoming length)
    leaves = [("v0", (0.0, 0.0), (-1.0, 0.0), 1.0), ("v1", (1.0, 0.0), (1.0, 0.0), 1.0)]
    for _ in range(levels - 1):
        next_leaves = []
        for vid, xy, (dx, dy), length in leaves:
            child_len = length / 2
            for sign in (1.0, -1.0):
                ang = sign * math.pi / 3
                ca, sa = math.cos(ang), math.sin(ang)
                ndx, ndy = ca * dx - sa * dy, sa * dx + ca * dy
                nid = f"v{len(vertices)}"
                nxy = (xy[0] + child_len * ndx, xy[1] + child_len * ndy)
                vertices.append({"id": nid, "xy": [nxy[0], nxy[1]]})
                edges.append({"id": f"e{len(edges)}", "tail": vid, "head": nid,
                              "length": child_len, "nu": nu})
                next_leaves.append((nid, nxy, (ndx, ndy), child_len))
        leaves = next_leaves
    identify = [[leaf[0] for leaf in leaves]]
    return build_network({"vertices": vertices, "edges": edges, "identify": identify})
