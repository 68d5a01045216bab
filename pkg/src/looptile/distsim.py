"""Simulated distributed-memory execution: N virtual ranks in one process.

Each rank gets a local mesh, chain, datasets and schedule.  All halo traffic
for one chain execution happens in a single exchange: staging snapshots every
owner's values before any rank computes, and each rank commits its incoming
buffers between its core and boundary phases.  Core tiles therefore run
against stale halos, exactly the contract they must satisfy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import AccessMode, LoopChain
from .errors import PartitionBugError
from .executor import (Dataset, ExecutionReport, KernelRegistry,
                       execute_schedule)
from .inspector import ExecMode, Schedule, inspect_chain
from .mesh import Mesh
from .partition import LocalMesh, partition_for_ranks
from .problems import Problem, local_setup


class HaloEndpoint:
    """One rank's side of the halo exchange.

    begin() pulls every neighbor-owned value this rank holds a copy of into
    staging buffers; end() commits the buffers into the local exec/non-exec
    slots.  The two calls strictly alternate.
    """

    def __init__(self, local_mesh: LocalMesh, datasets: dict[str, Dataset],
                 exchanged: tuple[str, ...]):
        self.local_mesh = local_mesh
        self.rank = local_mesh.rank
        self.datasets = datasets
        self.exchanged = exchanged
        self.peers: dict[int, "HaloEndpoint"] = {}
        self.exchange_count = 0
        self.bytes_exchanged = 0
        self._staged: list[tuple[str, np.ndarray, np.ndarray]] | None = None

    def link(self, endpoints: list["HaloEndpoint"]) -> None:
        self.peers = {e.rank: e for e in endpoints if e.rank != self.rank}

    def begin(self) -> None:
        if self._staged is not None:
            raise PartitionBugError("begin() called twice without end()")
        staged = []
        for (space, nbr), table in sorted(self.local_mesh.exchange_table.items()):
            peer = self.peers[nbr]
            owned_here = self.local_mesh.sizes[space].owned_total
            incoming = table[table[:, 0] >= owned_here]  # rows the neighbor owns
            if not len(incoming):
                continue
            for name in self.exchanged:
                ds = self.datasets[name]
                if ds.space.name != space:
                    continue
                k = ds.values_per_element
                src = peer.datasets[name].values.reshape(-1, k)[incoming[:, 1]]
                staged.append((name, self._flat_slots(incoming[:, 0], k),
                               src.ravel().copy()))
        self._staged = staged

    @staticmethod
    def _flat_slots(locals_: np.ndarray, k: int) -> np.ndarray:
        return (locals_[:, None] * k + np.arange(k)[None, :]).ravel()

    def end(self) -> None:
        if self._staged is None:
            raise PartitionBugError("end() called without begin()")
        moved = 0
        for name, slots, payload in self._staged:
            self.datasets[name].values[slots] = payload
            moved += payload.nbytes
        self._staged = None
        self.exchange_count += 1
        self.bytes_exchanged += moved


def check_exchange_symmetry(endpoints: list[HaloEndpoint]) -> None:
    """Tables of each rank pair must list identical global ids in identical order."""
    by_rank = {e.rank: e for e in endpoints}
    for e in endpoints:
        for (space, nbr), table in e.local_mesh.exchange_table.items():
            peer = by_rank[nbr]
            mirror = peer.local_mesh.exchange_table.get((space, e.rank))
            if mirror is None or len(mirror) != len(table):
                raise PartitionBugError(
                    f"asymmetric exchange table for {space} between ranks "
                    f"{e.rank} and {nbr}")
            here = e.local_mesh.global_ids[space][table[:, 0]]
            there = peer.local_mesh.global_ids[space][mirror[:, 0]]
            if not np.array_equal(here, there):
                raise PartitionBugError(
                    f"exchange tables for {space} pair different global ids "
                    f"between ranks {e.rank} and {nbr}")


def halo_exchange(endpoints: list[HaloEndpoint]) -> None:
    """One synchronous exchange: every owner's values land in all halo copies."""
    check_exchange_symmetry(endpoints)
    for e in endpoints:
        e.begin()
    for e in endpoints:
        e.end()


class _PreStaged:
    """Adapter for execute_schedule when staging already happened chain-wide."""

    def __init__(self, endpoint: HaloEndpoint):
        self.endpoint = endpoint

    def begin(self) -> None:
        pass

    def end(self) -> None:
        self.endpoint.end()

    @property
    def bytes_exchanged(self) -> int:
        return self.endpoint.bytes_exchanged


@dataclass
class VirtualRank:
    rank: int
    local_mesh: LocalMesh
    chain: LoopChain
    datasets: dict[str, Dataset]
    bindings: tuple
    schedule: Schedule
    endpoint: HaloEndpoint
    report: ExecutionReport | None = None


@dataclass
class DistributedResult:
    datasets: dict[str, np.ndarray]  # gathered, in global numbering
    ranks: list[VirtualRank]
    reports: list[ExecutionReport] = field(default_factory=list)

    @property
    def exchange_counts(self) -> list[int]:
        return [r.endpoint.exchange_count for r in self.ranks]


def exchanged_dataset_names(problem: Problem) -> tuple[str, ...]:
    """Datasets any fused loop reads or increments travel in the exchange."""
    names = []
    for spec in problem.loops:
        for access in spec.accesses:
            if access.mode in (AccessMode.READ, AccessMode.INC):
                if access.dataset not in names:
                    names.append(access.dataset)
    return tuple(names)


def gather(mesh: Mesh, problem: Problem, ranks: list[VirtualRank]) -> dict[str, np.ndarray]:
    """Collect every owned element's values into global arrays.

    Halo copies are discarded; overlapping or missing owners are a
    partition bug.
    """
    totals = {"cells": mesh.num_cells, "edges": mesh.num_edges,
              "verts": mesh.num_vertices}
    out: dict[str, np.ndarray] = {}
    for spec in problem.datasets:
        n = totals[spec.space]
        values = np.full(n * spec.values_per_element, np.nan)
        seen = np.zeros(n, dtype=bool)
        for vr in ranks:
            owned = vr.local_mesh.sizes[spec.space].owned_total
            gids = vr.local_mesh.global_ids[spec.space][:owned]
            if np.any(seen[gids]):
                raise PartitionBugError(
                    f"{spec.space} ownership overlaps while gathering {spec.name!r}")
            seen[gids] = True
            k = spec.values_per_element
            local = vr.datasets[spec.name].values.reshape(-1, k)[:owned]
            values.reshape(-1, k)[gids] = local
        if not seen.all():
            raise PartitionBugError(
                f"{spec.space} elements without owner while gathering {spec.name!r}")
        out[spec.name] = values
    return out


def run_distributed(mesh: Mesh, problem: Problem, nranks: int, ts: int,
                    depth: int, registry: KernelRegistry,
                    use_local_maps: bool = False,
                    poison_halo: bool = False,
                    initial: dict[str, np.ndarray] | None = None) -> DistributedResult:
    """Partition, inspect and execute on N virtual ranks, then gather.

    One halo exchange serves the whole chain execution: staging precedes all
    computation, each rank commits between its core and boundary phases.
    ``poison_halo`` overwrites halo slots before staging to prove no core
    tile depends on them; ``initial`` replaces the problem's dataset
    initializers with given global arrays (for chaining sub-chains).
    """
    local_meshes = partition_for_ranks(mesh, nranks, depth)
    exchanged = exchanged_dataset_names(problem)

    ranks: list[VirtualRank] = []
    endpoints: list[HaloEndpoint] = []
    for lm in local_meshes:
        chain, datasets, bindings = local_setup(lm, problem, depth)
        if initial is not None:
            for name, ds in datasets.items():
                k = ds.values_per_element
                gids = lm.global_ids[ds.space.name]
                ds.values.reshape(-1, k)[:] = initial[name].reshape(-1, k)[gids]
        if poison_halo:
            for ds in datasets.values():
                owned = lm.sizes[ds.space.name].owned_total
                ds.values[owned * ds.values_per_element:] = 1e30
        schedule = inspect_chain(chain, ts, ExecMode.DISTRIBUTED)
        endpoint = HaloEndpoint(lm, datasets, exchanged)
        endpoints.append(endpoint)
        ranks.append(VirtualRank(rank=lm.rank, local_mesh=lm, chain=chain,
                                 datasets=datasets, bindings=bindings,
                                 schedule=schedule, endpoint=endpoint))

    for e in endpoints:
        e.link(endpoints)
    check_exchange_symmetry(endpoints)
    for e in endpoints:
        e.begin()  # snapshot owners before anything runs

    reports = []
    for vr in ranks:
        vr.report = execute_schedule(vr.schedule, vr.chain, vr.bindings,
                                     vr.datasets, registry,
                                     exchange=_PreStaged(vr.endpoint),
                                     use_local_maps=use_local_maps)
        reports.append(vr.report)

    gathered = gather(mesh, problem, ranks)
    return DistributedResult(datasets=gathered, ranks=ranks, reports=reports)
