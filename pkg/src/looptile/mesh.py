"""Synthetic triangle meshes over rectangular domains, plus renumbering.

The generator splits every quad of an nx-by-ny grid along the same diagonal
(bottom-left to top-right) so outputs are deterministic and hand-checkable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .chain import IterationSpace, MeshMap


@dataclass(frozen=True, eq=False)
class Mesh:
    """A 2D triangulation: flat connectivity arrays plus coordinates for output."""

    num_vertices: int
    num_cells: int
    num_edges: int
    cells_to_vertices: np.ndarray  # flat, arity 3
    edges_to_vertices: np.ndarray  # flat, arity 2
    vertex_coords: np.ndarray      # shape (num_vertices, 2)

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.cells_to_vertices[3 * c : 3 * c + 3]

    def edge_vertices(self, e: int) -> np.ndarray:
        return self.edges_to_vertices[2 * e : 2 * e + 2]

    def validate(self) -> None:
        c2v = self.cells_to_vertices
        e2v = self.edges_to_vertices
        assert len(c2v) == 3 * self.num_cells
        assert len(e2v) == 2 * self.num_edges
        if self.num_cells:
            assert 0 <= c2v.min() and c2v.max() < self.num_vertices
        assert 0 <= e2v.min() and e2v.max() < self.num_vertices
        # distinct vertices per entity
        tri = c2v.reshape(-1, 3)
        assert np.all(tri[:, 0] != tri[:, 1])
        assert np.all(tri[:, 1] != tri[:, 2])
        assert np.all(tri[:, 0] != tri[:, 2])
        pairs = e2v.reshape(-1, 2)
        assert np.all(pairs[:, 0] != pairs[:, 1])
        # the edge set is exactly the set of undirected cell sides, once each
        sides = _cell_sides(tri)
        stored = {tuple(sorted(p)) for p in pairs.tolist()}
        assert sides == stored, "edge set does not match cell sides"
        assert len(stored) == self.num_edges


def _cell_sides(tri: np.ndarray) -> set[tuple[int, int]]:
    sides = set()
    for a, b, c in tri.tolist():
        sides.add((min(a, b), max(a, b)))
        sides.add((min(b, c), max(b, c)))
        sides.add((min(a, c), max(a, c)))
    return sides


def generate_rect_mesh(nx: int, ny: int) -> Mesh:
    """Triangulate an nx-by-ny quad grid into 2*nx*ny triangles.

    Vertex (i, j) gets id j*(nx+1)+i; every quad is split along its
    bottom-left to top-right diagonal.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"mesh dimensions must be positive, got {nx}x{ny}")
    nvx, nvy = nx + 1, ny + 1
    num_vertices = nvx * nvy

    ii, jj = np.meshgrid(np.arange(nvx), np.arange(nvy))
    coords = np.column_stack([ii.ravel().astype(float), jj.ravel().astype(float)])

    cells = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * nvx + i
            v10 = v00 + 1
            v01 = v00 + nvx
            v11 = v01 + 1
            cells.append((v00, v10, v11))  # lower triangle
            cells.append((v00, v11, v01))  # upper triangle
    tri = np.array(cells, dtype=np.int64)

    edges = sorted(_cell_sides(tri))
    e2v = np.array(edges, dtype=np.int64).ravel()

    mesh = Mesh(
        num_vertices=num_vertices,
        num_cells=len(cells),
        num_edges=len(edges),
        cells_to_vertices=tri.ravel(),
        edges_to_vertices=e2v,
        vertex_coords=coords,
    )
    return mesh


def vertex_adjacency(mesh: Mesh) -> list[list[int]]:
    """Neighbor lists over the edge graph, each sorted ascending."""
    adj: list[set[int]] = [set() for _ in range(mesh.num_vertices)]
    pairs = mesh.edges_to_vertices.reshape(-1, 2)
    for a, b in pairs.tolist():
        adj[a].add(b)
        adj[b].add(a)
    return [sorted(s) for s in adj]


def adjacency_bandwidth(adjacency: list[list[int]]) -> int:
    """max |i - j| over connected vertex pairs."""
    width = 0
    for v, nbrs in enumerate(adjacency):
        for w in nbrs:
            width = max(width, abs(v - w))
    return width


def rcm_ordering(adjacency: list[list[int]]) -> np.ndarray:
    """Reverse Cuthill-McKee permutation: position k holds the old id placed k-th.

    Deterministic tie-breaks: start from the lowest-id minimum-degree vertex,
    visit neighbors by (degree, id).  Raises ValueError on a disconnected graph.
    """
    n = len(adjacency)
    degree = [len(a) for a in adjacency]
    start = min(range(n), key=lambda v: (degree[v], v))
    order = []
    seen = [False] * n
    queue = deque([start])
    seen[start] = True
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in sorted(adjacency[v], key=lambda u: (degree[u], u)):
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    if len(order) != n:
        raise ValueError("graph is disconnected; renumbering unsupported")
    return np.array(order[::-1], dtype=np.int64)


@dataclass(frozen=True)
class MeshRenumbering:
    """Old-to-new index maps for each entity space; all bijections."""

    vertex_perm: np.ndarray
    cell_perm: np.ndarray
    edge_perm: np.ndarray


def rcm_permutations(mesh: Mesh) -> MeshRenumbering:
    """RCM vertex permutation plus induced cell/edge orders.

    Cells and edges are relabeled by the sorted tuple of their new vertex
    ids, keeping entities with nearby vertices nearby, so chunked seed
    partitions stay spatially compact.
    """
    order = rcm_ordering(vertex_adjacency(mesh))
    vertex_perm = np.empty(mesh.num_vertices, dtype=np.int64)  # old -> new
    vertex_perm[order] = np.arange(mesh.num_vertices)

    tri = vertex_perm[mesh.cells_to_vertices.reshape(-1, 3)]
    cell_keys = [tuple(sorted(row)) for row in tri.tolist()]
    cell_order = sorted(range(mesh.num_cells), key=lambda c: cell_keys[c])
    cell_perm = np.empty(mesh.num_cells, dtype=np.int64)
    cell_perm[cell_order] = np.arange(mesh.num_cells)

    pairs = vertex_perm[mesh.edges_to_vertices.reshape(-1, 2)]
    edge_keys = [tuple(sorted(row)) for row in pairs.tolist()]
    edge_order = sorted(range(mesh.num_edges), key=lambda e: edge_keys[e])
    edge_perm = np.empty(mesh.num_edges, dtype=np.int64)
    edge_perm[edge_order] = np.arange(mesh.num_edges)

    return MeshRenumbering(vertex_perm=vertex_perm, cell_perm=cell_perm,
                           edge_perm=edge_perm)


def apply_renumbering(mesh: Mesh, renum: MeshRenumbering) -> Mesh:
    vperm, cperm, eperm = renum.vertex_perm, renum.cell_perm, renum.edge_perm
    tri = vperm[mesh.cells_to_vertices.reshape(-1, 3)]
    new_tri = np.empty_like(tri)
    new_tri[cperm] = tri
    pairs = np.sort(vperm[mesh.edges_to_vertices.reshape(-1, 2)], axis=1)
    new_pairs = np.empty_like(pairs)
    new_pairs[eperm] = pairs
    coords = np.empty_like(mesh.vertex_coords)
    coords[vperm] = mesh.vertex_coords
    return Mesh(
        num_vertices=mesh.num_vertices,
        num_cells=mesh.num_cells,
        num_edges=mesh.num_edges,
        cells_to_vertices=new_tri.ravel(),
        edges_to_vertices=new_pairs.ravel(),
        vertex_coords=coords,
    )


def rcm_renumber(mesh: Mesh) -> Mesh:
    """Relabel all entity spaces by reverse Cuthill-McKee over the edge graph."""
    return apply_renumbering(mesh, rcm_permutations(mesh))


# -- chain-building helpers -------------------------------------------------

CELLS, EDGES, VERTS = "cells", "edges", "verts"


def mesh_spaces(mesh: Mesh) -> dict[str, IterationSpace]:
    """Single-rank iteration spaces: everything core, no halo regions."""
    return {
        CELLS: IterationSpace(CELLS, mesh.num_cells),
        EDGES: IterationSpace(EDGES, mesh.num_edges),
        VERTS: IterationSpace(VERTS, mesh.num_vertices),
    }


def mesh_maps(mesh: Mesh, spaces: dict[str, IterationSpace]) -> dict[str, MeshMap]:
    return {
        "c2v": MeshMap("c2v", spaces[CELLS], spaces[VERTS], 3, mesh.cells_to_vertices),
        "e2v": MeshMap("e2v", spaces[EDGES], spaces[VERTS], 2, mesh.edges_to_vertices),
    }
