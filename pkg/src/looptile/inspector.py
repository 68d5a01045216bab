"""Run-time inspection: build a legal sparse-tiling schedule for a loop chain.

The seed loop's iteration space is chunked into tiles; every later loop is
scheduled onto those tiles by projecting which tile last touched each element
and taking per-element color maxima.  Coloring conflicts discovered along the
way trigger fake adjacency connections and a recoloring round.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .chain import (InverseMap, IterationSpace, Loop, LoopChain, MeshMap,
                    Region, invert_map)
from .errors import ColoringLimitError, InspectionError

NO_TILE = -1


class ExecMode(enum.Enum):
    SEQUENTIAL = "sequential"
    SHARED = "shared"
    DISTRIBUTED = "distributed"

    @classmethod
    def parse(cls, token: str) -> "ExecMode":
        for mode in cls:
            if token == mode.value:
                return mode
        raise ValueError(f"unknown execution mode {token!r}")


@dataclass(eq=False)
class Tile:
    """An atomically executed unit: one iteration list per loop, plus a color."""

    id: int
    region: Region
    color: int = -1
    iteration_lists: dict[int, np.ndarray] = field(default_factory=dict)
    local_maps: dict[tuple[int, str], np.ndarray] = field(default_factory=dict)

    def size(self, loop_index: int) -> int:
        lst = self.iteration_lists.get(loop_index)
        return 0 if lst is None else len(lst)


@dataclass
class TilingFunction:
    """Per-element tile assignment for one loop."""

    loop_index: int
    assignment: np.ndarray


@dataclass
class Projection:
    """Per-element record of the maximum-color tile that touched the element."""

    space: IterationSpace
    assignment: np.ndarray  # NO_TILE where nothing touched yet


@dataclass
class ConflictMatrix:
    """Symmetric, irreflexive relation over tile ids that grew adjacent."""

    pairs: set[tuple[int, int]] = field(default_factory=set)

    def add(self, a: int, b: int) -> None:
        if a != b:
            self.pairs.add((min(a, b), max(a, b)))

    def has_conflicts(self) -> bool:
        return bool(self.pairs)


@dataclass
class InspectionStats:
    partition_s: float = 0.0
    coloring_s: float = 0.0
    projection_tiling_s: float = 0.0
    local_maps_s: float = 0.0
    total_s: float = 0.0

    def dominant_phase(self) -> tuple[str, float]:
        """Name and share of the costliest phase, over the summed phases."""
        phases = {
            "partition": self.partition_s,
            "coloring": self.coloring_s,
            "projection_tiling": self.projection_tiling_s,
            "local_maps": self.local_maps_s,
        }
        span = sum(phases.values()) or 1.0
        name = max(phases, key=phases.get)
        return name, phases[name] / span


@dataclass(frozen=True, eq=False)
class Schedule:
    """Inspector output: populated tiles plus the color execution order."""

    mode: ExecMode
    fingerprint: str
    n_loops: int
    tiles: tuple[Tile, ...]
    recolor_rounds: int
    stats: InspectionStats = field(compare=False, repr=False,
                                   default_factory=InspectionStats)

    @property
    def color_order(self) -> list[int]:
        return sorted({t.color for t in self.tiles})

    @property
    def nonexec_tile(self) -> Tile:
        return self.tiles[-1]

    def executable_tiles(self) -> list[Tile]:
        return [t for t in self.tiles if t.region is not Region.NONEXEC]

    def tiles_in_region(self, region: Region) -> list[Tile]:
        return [t for t in self.tiles if t.region is region]

    def tile_of(self, loop_index: int, n_elements: int) -> np.ndarray:
        """Invert the iteration lists of one loop back into a per-element array."""
        out = np.full(n_elements, NO_TILE, dtype=np.int64)
        for t in self.tiles:
            lst = t.iteration_lists.get(loop_index)
            if lst is not None:
                out[lst] = t.id
        return out

    def serialize(self) -> bytes:
        lines = [
            "schedule-v1",
            f"mode={self.mode.value}",
            f"fingerprint={self.fingerprint}",
            f"loops={self.n_loops}",
            f"rounds={self.recolor_rounds}",
            f"colors={','.join(map(str, self.color_order))}",
        ]
        for t in self.tiles:
            lines.append(f"tile id={t.id} region={t.region.name.lower()} color={t.color}")
            for j in sorted(t.iteration_lists):
                lines.append(f"  list {j}=" + ",".join(map(str, t.iteration_lists[j].tolist())))
            for (j, name) in sorted(t.local_maps):
                lines.append(f"  lmap {j} {name}=" +
                             ",".join(map(str, t.local_maps[(j, name)].tolist())))
        return ("\n".join(lines) + "\n").encode()

    def summary(self) -> str:
        by_region = {r: len(self.tiles_in_region(r)) for r in Region}
        lines = [
            f"tiles: {len(self.tiles)} "
            f"(core {by_region[Region.CORE]}, boundary {by_region[Region.BOUNDARY]}, "
            f"non-exec {by_region[Region.NONEXEC]})",
            f"colors: {len(self.color_order)}",
            f"recolor rounds: {self.recolor_rounds}",
        ]
        for j in range(self.n_loops):
            sizes = [t.size(j) for t in self.executable_tiles()]
            lines.append(
                f"loop {j}: tile size min/mean/max = "
                f"{min(sizes)}/{sum(sizes) / len(sizes):.1f}/{max(sizes)}")
        s = self.stats
        lines.append(f"inspection wall time: {s.total_s * 1e3:.3f} ms")
        lines.append(
            "phases (ms): partition %.3f, coloring %.3f, projection+tiling %.3f, "
            "local maps %.3f" % (s.partition_s * 1e3, s.coloring_s * 1e3,
                                 s.projection_tiling_s * 1e3, s.local_maps_s * 1e3))
        name, share = s.dominant_phase()
        lines.append(f"dominant phase: {name} ({share:.1%})")
        return "\n".join(lines)


# -- inspection steps ---------------------------------------------------------


def partition_seed(space: IterationSpace, ts: int) -> tuple[TilingFunction, list[Tile]]:
    """Chunk the seed space into tiles of ts contiguous iterations per region.

    Core chunks come first, then boundary chunks, then the single non-exec
    tile covering the non-exec region (created even when that region is empty).
    """
    if ts < 1:
        raise ValueError(f"tile size must be >= 1, got {ts}")
    m = math.ceil(space.core_size / ts)
    k = math.ceil(space.boundary_size / ts)
    tiles = [Tile(id=i, region=Region.CORE) for i in range(m)]
    tiles += [Tile(id=m + j, region=Region.BOUNDARY) for j in range(k)]
    tiles.append(Tile(id=m + k, region=Region.NONEXEC))

    assignment = np.empty(space.total, dtype=np.int64)
    core = np.arange(space.core_size)
    assignment[:space.core_size] = core // ts
    boundary = np.arange(space.boundary_size)
    assignment[space.core_size:space.executable_size] = m + boundary // ts
    assignment[space.executable_size:] = m + k
    return TilingFunction(loop_index=0, assignment=assignment), tiles


def _seed_adjacency(tiles: list[Tile], seed_map: MeshMap | None) -> dict[int, set[int]]:
    """Tiles are adjacent iff their seed iterations share a target element."""
    adjacency: dict[int, set[int]] = {t.id: set() for t in tiles}
    if seed_map is None:
        return adjacency
    by_target: dict[int, list[int]] = {}
    for t in tiles:
        seed_list = t.iteration_lists.get(0)
        if seed_list is None or not len(seed_list):
            continue
        for g in np.unique(seed_map.values.reshape(-1, seed_map.arity)[seed_list]).tolist():
            by_target.setdefault(g, []).append(t.id)
    for ids in by_target.values():
        for a in ids:
            for b in ids:
                if a != b:
                    adjacency[a].add(b)
    return adjacency


def color_tiles(tiles: list[Tile], seed_map: MeshMap | None,
                fake_connections: set[tuple[int, int]], mode: ExecMode,
                adjacency: dict[int, set[int]] | None = None) -> None:
    """Assign execution-priority colors.

    Shared mode reuses colors across non-adjacent tiles (greedy first-fit over
    the seed-map adjacency plus fake connections); sequential and distributed
    modes give tile i color i.  Boundary colors always exceed core colors and
    the non-exec tile gets the highest color.  ``adjacency`` short-circuits
    the seed-map scan when the caller already holds it (it never changes
    across recoloring rounds).
    """
    if mode is ExecMode.SHARED:
        if adjacency is None:
            adjacency = _seed_adjacency(tiles, seed_map)
        adjacency = {t: set(nbrs) for t, nbrs in adjacency.items()}
        for a, b in sorted(fake_connections):
            adjacency[a].add(b)
            adjacency[b].add(a)
        floor = 0
        for region in (Region.CORE, Region.BOUNDARY):
            group = [t for t in tiles if t.region is region]
            assigned: dict[int, int] = {}
            for t in group:
                used = {assigned[n] for n in adjacency[t.id] if n in assigned}
                color = floor
                while color in used:
                    color += 1
                assigned[t.id] = color
                t.color = color
            if group:
                floor = max(t.color for t in group) + 1
        tiles[-1].color = floor  # non-exec tile above everything
    else:
        for t in tiles:
            t.color = t.id


def project(loop: Loop, sigma: TilingFunction, phi: dict[str, Projection],
            conflicts: ConflictMatrix, tiles: list[Tile],
            inverse_maps: dict[str, InverseMap]) -> None:
    """Fold loop's tile assignment into the per-space projections (updates phi, C).

    Direct descriptors copy sigma wholesale; mapped descriptors scan each
    target element's inverse segment for the maximum-color toucher.  Any two
    distinct equal-colored tiles touching the same element are recorded as a
    conflict.
    """
    colors = np.array([t.color for t in tiles], dtype=np.int64)
    for d in loop.descriptors:
        if d.is_direct:
            space = loop.space
            old = phi.get(space.name)
            new = sigma.assignment.copy()
            if old is not None:
                both = (old.assignment >= 0) & (new >= 0) & (old.assignment != new)
                clash = both & (colors[old.assignment] == colors[new])
                for e in np.flatnonzero(clash):
                    conflicts.add(int(old.assignment[e]), int(new[e]))
            phi[space.name] = Projection(space, new)
        else:
            if d.map.name not in inverse_maps:
                inverse_maps[d.map.name] = invert_map(d.map)
            inv = inverse_maps[d.map.name]
            space = d.map.target
            old = phi.get(space.name)
            old_assign = old.assignment if old is not None else None
            offsets, sources = inv.offsets, inv.values
            sa = sigma.assignment
            new = np.full(space.total, NO_TILE, dtype=np.int64)
            for e in range(space.total):
                if old_assign is not None and old_assign[e] >= 0:
                    best = int(old_assign[e])
                    best_color = int(colors[best])
                    seen = {best_color: best}
                else:
                    best, best_color, seen = NO_TILE, -1, {}
                for f in sources[offsets[e]:offsets[e + 1]]:
                    t = int(sa[f])
                    c = int(colors[t])
                    prior = seen.get(c)
                    if prior is None:
                        seen[c] = t
                    elif prior != t:
                        conflicts.add(prior, t)
                    if c > best_color:
                        best, best_color = t, c
                new[e] = best
            phi[space.name] = Projection(space, new)


def tile_loop(loop: Loop, phi: dict[str, Projection], tiles: list[Tile],
              conflicts: ConflictMatrix | None = None) -> TilingFunction:
    """Build the loop's tiling function from the available projections.

    Every element lands on the maximum-color tile reachable through any of the
    loop's descriptors; color ties keep the tile already held.  Descriptors
    over spaces no earlier loop touched contribute nothing.

    A second sweep compares each executed element's final tile against all
    its candidates: an equal-colored distinct candidate means the assigned
    tile will touch data some same-colored tile already touched, which the
    projections alone cannot see for the last loop in the chain.
    """
    colors = np.array([t.color for t in tiles], dtype=np.int64)
    space = loop.space
    assignment = np.full(space.total, NO_TILE, dtype=np.int64)
    held_color = np.full(space.total, -1, dtype=np.int64)

    def candidate_arrays():
        for d in loop.descriptors:
            if d.is_direct:
                proj = phi.get(space.name)
                if proj is not None:
                    yield proj.assignment, None, 1
            else:
                proj = phi.get(d.map.target.name)
                if proj is not None:
                    yield proj.assignment, d.map.values, d.map.arity

    applied = False
    for pa, vals, a in candidate_arrays():
        applied = True
        for e in range(space.total):
            base = e * a
            for k in range(a):
                candidate = int(pa[e] if vals is None else pa[vals[base + k]])
                if candidate < 0:
                    continue
                c = int(colors[candidate])
                if c > held_color[e]:
                    assignment[e] = candidate
                    held_color[e] = c

    if not applied:
        raise InspectionError(
            f"loop {loop.index} over {space.name!r}: no projection covers any "
            f"accessed space")
    if np.any(assignment[:space.executable_size] < 0):
        missing = int(np.flatnonzero(assignment[:space.executable_size] < 0)[0])
        raise InspectionError(
            f"loop {loop.index}: element {missing} of {space.name!r} is not "
            f"reachable through any projection")

    if conflicts is not None:
        for pa, vals, a in candidate_arrays():
            for e in range(space.executable_size):
                held = int(assignment[e])
                base = e * a
                for k in range(a):
                    candidate = int(pa[e] if vals is None else pa[vals[base + k]])
                    if (candidate >= 0 and candidate != held
                            and colors[candidate] == colors[held]):
                        conflicts.add(held, candidate)
    return TilingFunction(loop_index=loop.index, assignment=assignment)


def assign(sigma: TilingFunction, tiles: list[Tile]) -> None:
    """Distribute elements into tiles' iteration lists, ascending per tile."""
    order = np.argsort(sigma.assignment, kind="stable")
    sorted_ids = sigma.assignment[order]
    bounds = np.searchsorted(sorted_ids, np.arange(len(tiles) + 1))
    for t in tiles:
        t.iteration_lists[sigma.loop_index] = order[bounds[t.id]:bounds[t.id + 1]].copy()


_EMPTY = np.empty(0, dtype=np.int64)


def compute_local_maps(tiles: list[Tile], chain: LoopChain) -> None:
    """Restrict each map to every tile's iteration list, in list order.

    The executor can then index map rows by position-in-tile instead of
    global element id.  Gathers run once per (loop, map) over all tiles'
    concatenated lists, then split per tile.
    """
    for t in tiles:
        t.local_maps.clear()
    for j, loop in enumerate(chain.loops):
        done = set()
        for d in loop.descriptors:
            if d.is_direct or d.map.name in done:
                continue
            done.add(d.map.name)
            lists = [t.iteration_lists.get(j, _EMPTY) for t in tiles]
            flat = d.map.values.reshape(-1, d.map.arity)[np.concatenate(lists)].ravel()
            offset = 0
            for t, lst in zip(tiles, lists):
                span = len(lst) * d.map.arity
                t.local_maps[(j, d.map.name)] = flat[offset:offset + span].copy()
                offset += span


def find_seed_map(chain: LoopChain) -> MeshMap | None:
    """The map used for tile adjacency: the seed loop's own, else any map off the seed space."""
    seed_space = chain.loops[0].space
    for d in chain.loops[0].descriptors:
        if not d.is_direct and d.map.source is seed_space:
            return d.map
    for m in chain.maps:
        if m.source is seed_space:
            return m
    return None


def inspect_chain(chain: LoopChain, ts: int, mode: ExecMode) -> Schedule:
    """Run the full inspection and return a conflict-free schedule.

    Pure in (chain, ts, mode): repeated calls produce identical schedules.
    Raises ColoringLimitError if recoloring fails to converge within
    10 * (number of tiles) rounds.
    """
    t_start = time.perf_counter()
    stats = InspectionStats()
    n = len(chain.loops)
    seed_loop = chain.loops[0]

    t0 = time.perf_counter()
    sigma_seed, tiles = partition_seed(seed_loop.space, ts)
    assign(sigma_seed, tiles)
    seed_map = find_seed_map(chain)
    stats.partition_s += time.perf_counter() - t0

    t0 = time.perf_counter()
    seed_adjacency = (_seed_adjacency(tiles, seed_map)
                      if mode is ExecMode.SHARED else None)
    stats.coloring_s += time.perf_counter() - t0

    inverse_maps: dict[str, InverseMap] = {}
    fake_connections: set[tuple[int, int]] = set()
    max_rounds = 10 * len(tiles)
    tne_id = tiles[-1].id
    rounds = 0

    while True:
        rounds += 1
        if rounds > max_rounds:
            raise ColoringLimitError(
                f"recoloring did not converge after {max_rounds} rounds")
        t0 = time.perf_counter()
        color_tiles(tiles, seed_map, fake_connections, mode,
                    adjacency=seed_adjacency)
        stats.coloring_s += time.perf_counter() - t0

        conflicts = ConflictMatrix()
        phi: dict[str, Projection] = {}
        sigma = sigma_seed
        t0 = time.perf_counter()
        for j in range(1, n):
            project(chain.loops[j - 1], sigma, phi, conflicts, tiles, inverse_maps)
            sigma = tile_loop(chain.loops[j], phi, tiles, conflicts)
            # the non-exec region is never computed by this rank
            sigma.assignment[chain.loops[j].space.executable_size:] = tne_id
            assign(sigma, tiles)
        stats.projection_tiling_s += time.perf_counter() - t0

        if conflicts.has_conflicts():
            fake_connections |= conflicts.pairs
            continue
        break

    t0 = time.perf_counter()
    compute_local_maps(tiles, chain)
    stats.local_maps_s += time.perf_counter() - t0
    stats.total_s = time.perf_counter() - t_start

    return Schedule(mode=mode, fingerprint=chain.fingerprint, n_loops=n,
                    tiles=tuple(tiles), recolor_rounds=rounds, stats=stats)
