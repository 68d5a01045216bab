"""Execute loop chains: an untiled reference executor and the tiled one.

Kernels are user-registered callables receiving one view per descriptor:
direct accesses get the element's own values, mapped accesses a list of the
target elements' values.  Read views are frozen; write and increment views
are ordinary mutable numpy slices.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import AccessMode, IterationSpace, Loop, LoopChain, Region
from .errors import ExecutionError, StaleScheduleError
from .inspector import Schedule, Tile

THREADS_ENV = "LOOPTILE_THREADS"


@dataclass
class Dataset:
    """Values attached to an iteration space, values_per_element reals each."""

    name: str
    space: IterationSpace
    values_per_element: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if len(self.values) != self.space.total * self.values_per_element:
            raise ExecutionError(
                f"dataset {self.name!r}: {len(self.values)} values for "
                f"{self.space.total} x {self.values_per_element}")

    def copy(self) -> "Dataset":
        return Dataset(self.name, self.space, self.values_per_element,
                       self.values.copy())


class KernelRegistry:
    """Kernel bodies by id; an id registers once."""

    def __init__(self):
        self._kernels: dict[str, tuple] = {}

    def register(self, kernel_id: str, body, nargs: int) -> None:
        if kernel_id in self._kernels:
            raise ExecutionError(f"kernel {kernel_id!r} already registered")
        self._kernels[kernel_id] = (body, nargs)

    def get(self, kernel_id: str):
        try:
            return self._kernels[kernel_id]
        except KeyError:
            raise ExecutionError(f"kernel {kernel_id!r} not registered") from None


@dataclass(frozen=True)
class KernelBinding:
    """Dataset names paired positionally with a loop's descriptors."""

    kernel: str
    args: tuple[str, ...]


@dataclass
class ExecutionReport:
    """Per-phase wall times and tile counts for one tiled execution."""

    phase_seconds: dict[str, float] = field(default_factory=dict)
    tiles_per_color: dict[int, int] = field(default_factory=dict)
    bytes_exchanged: int = 0

    PHASES = ("exchange_start", "core", "exchange_wait", "boundary")

    def to_text(self) -> str:
        lines = ["execution report"]
        for phase in self.PHASES:
            lines.append(f"  {phase}: {self.phase_seconds.get(phase, 0.0) * 1e3:.3f} ms")
        for color in sorted(self.tiles_per_color):
            lines.append(f"  color {color}: {self.tiles_per_color[color]} tiles")
        lines.append(f"  bytes exchanged: {self.bytes_exchanged}")
        return "\n".join(lines)

    def to_kv(self) -> str:
        items = [f"phase.{p}={self.phase_seconds.get(p, 0.0):.9f}" for p in self.PHASES]
        items += [f"tiles.color{c}={n}" for c, n in sorted(self.tiles_per_color.items())]
        items.append(f"bytes_exchanged={self.bytes_exchanged}")
        return "\n".join(items)


def check_bindings(chain: LoopChain, bindings, datasets: dict[str, Dataset]) -> None:
    if len(bindings) != len(chain.loops):
        raise ExecutionError(
            f"{len(bindings)} bindings for {len(chain.loops)} loops")
    for loop, binding in zip(chain.loops, bindings):
        if binding.kernel != loop.kernel:
            raise ExecutionError(
                f"loop {loop.index} expects kernel {loop.kernel!r}, "
                f"bound {binding.kernel!r}")
        if len(binding.args) != len(loop.descriptors):
            raise ExecutionError(
                f"loop {loop.index}: {len(binding.args)} args for "
                f"{len(loop.descriptors)} descriptors")
        for d, name in zip(loop.descriptors, binding.args):
            if name not in datasets:
                raise ExecutionError(f"loop {loop.index}: dataset {name!r} missing")
            ds = datasets[name]
            wanted = loop.space if d.is_direct else d.map.target
            if ds.space is not wanted and ds.space.name != wanted.name:
                raise ExecutionError(
                    f"loop {loop.index}: dataset {name!r} lives on "
                    f"{ds.space.name!r}, descriptor needs {wanted.name!r}")


def _frozen(view: np.ndarray) -> np.ndarray:
    out = view[...]
    out.flags.writeable = False
    return out


def _run_loop(loop: Loop, binding: KernelBinding, datasets: dict[str, Dataset],
              registry: KernelRegistry, elements, local_maps=None) -> None:
    """Run one loop's kernel over ``elements``; local_maps indexes by position."""
    body, nargs = registry.get(loop.kernel)
    if nargs != len(loop.descriptors):
        raise ExecutionError(
            f"kernel {loop.kernel!r} takes {nargs} args, loop {loop.index} "
            f"has {len(loop.descriptors)} descriptors")
    plan = []
    for d, name in zip(loop.descriptors, binding.args):
        ds = datasets[name]
        rows = None
        if not d.is_direct:
            rows = local_maps[d.map.name] if local_maps is not None else d.map.values
        plan.append((d, ds.values, ds.values_per_element, rows))

    for pos, e in enumerate(elements):
        args = []
        for d, values, k, rows in plan:
            if d.is_direct:
                view = values[e * k:(e + 1) * k]
                args.append(_frozen(view) if d.mode is AccessMode.READ else view)
            else:
                a = d.map.arity
                base = (pos if local_maps is not None else e) * a
                if d.mode is AccessMode.READ:
                    views = [_frozen(values[t * k:(t + 1) * k])
                             for t in rows[base:base + a]]
                else:
                    views = [values[t * k:(t + 1) * k]
                             for t in rows[base:base + a]]
                args.append(views)
        body(*args)


def execute_untiled(chain: LoopChain, bindings, datasets: dict[str, Dataset],
                    registry: KernelRegistry) -> None:
    """The semantic reference: loops in chain order, ascending element order."""
    check_bindings(chain, bindings, datasets)
    for loop, binding in zip(chain.loops, bindings):
        _run_loop(loop, binding, datasets, registry,
                  range(loop.space.executable_size))


def _execute_tile(tile: Tile, chain: LoopChain, bindings, datasets, registry,
                  use_local_maps: bool) -> None:
    for j, (loop, binding) in enumerate(zip(chain.loops, bindings)):
        elements = tile.iteration_lists.get(j)
        if elements is None or not len(elements):
            continue
        local = None
        if use_local_maps:
            local = {name: tile.local_maps[(j, name)]
                     for (jj, name) in tile.local_maps if jj == j}
        _run_loop(loop, binding, datasets, registry, elements, local_maps=local)


def execute_schedule(schedule: Schedule, chain: LoopChain, bindings,
                     datasets: dict[str, Dataset], registry: KernelRegistry,
                     exchange=None, use_local_maps: bool = False,
                     max_workers: int | None = None) -> ExecutionReport:
    """Run the tiled schedule: core tiles by color, halo wait, boundary tiles.

    ``exchange`` is an optional endpoint with begin()/end() hooks and a
    bytes_exchanged attribute; the non-exec tile is never executed.  Within a
    color, tiles touch disjoint data and may run on ``max_workers`` threads
    (defaults to the LOOPTILE_THREADS environment variable, else 1).
    """
    if schedule.fingerprint != chain.fingerprint:
        raise StaleScheduleError("schedule was inspected for a different chain")
    if schedule.n_loops != len(chain.loops):
        raise StaleScheduleError("schedule loop count differs from chain")
    check_bindings(chain, bindings, datasets)
    if max_workers is None:
        max_workers = int(os.environ.get(THREADS_ENV, "1"))

    report = ExecutionReport()
    core = [t for t in schedule.tiles if t.region is Region.CORE]
    boundary = [t for t in schedule.tiles if t.region is Region.BOUNDARY]

    def run_phase(tiles_group):
        by_color: dict[int, list[Tile]] = {}
        for t in tiles_group:
            by_color.setdefault(t.color, []).append(t)
        for color in sorted(by_color):
            batch = by_color[color]
            report.tiles_per_color[color] = (
                report.tiles_per_color.get(color, 0) + len(batch))
            if max_workers > 1 and len(batch) > 1:
                with ThreadPoolExecutor(max_workers=max_workers) as pool:
                    list(pool.map(
                        lambda t: _execute_tile(t, chain, bindings, datasets,
                                                registry, use_local_maps),
                        batch))
            else:
                for t in batch:
                    _execute_tile(t, chain, bindings, datasets, registry,
                                  use_local_maps)

    t0 = time.perf_counter()
    if exchange is not None:
        exchange.begin()
    report.phase_seconds["exchange_start"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    run_phase(core)
    report.phase_seconds["core"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if exchange is not None:
        exchange.end()
        report.bytes_exchanged = getattr(exchange, "bytes_exchanged", 0)
    report.phase_seconds["exchange_wait"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    run_phase(boundary)
    report.phase_seconds["boundary"] = time.perf_counter() - t0
    return report


# -- result comparison --------------------------------------------------------

def integer_valued(values: np.ndarray) -> bool:
    return bool(np.all(values == np.rint(values)))


def diff_datasets(reference: dict[str, Dataset], candidate: dict[str, Dataset],
                  rtol: float = 1e-12, limit: int = 10) -> list[tuple]:
    """First ``limit`` (dataset, element, ref, got) mismatches.

    Integer-valued reference data is compared exactly; anything else within
    ``rtol`` relative tolerance.
    """
    diffs = []
    for name in sorted(reference):
        ref, got = reference[name].values, candidate[name].values
        if integer_valued(ref):
            bad = np.flatnonzero(ref != got)
        else:
            bad = np.flatnonzero(~np.isclose(got, ref, rtol=rtol, atol=0.0))
        k = reference[name].values_per_element
        for flat in bad[:limit - len(diffs)]:
            diffs.append((name, int(flat // k), float(ref[flat]), float(got[flat])))
        if len(diffs) >= limit:
            break
    return diffs
