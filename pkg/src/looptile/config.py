"""Declarative run configuration: an INI file with mesh, chain, run sections.

Example::

    [mesh]
    nx = 8
    ny = 4
    renumber = rcm

    [chain]
    preset = fig2
    depth = 3

    [run]
    mode = shared
    tile_size = 16
    fusion = 0-2:16
    nranks = 2

    [output]
    report = out/report.txt

Chains may also be spelled out explicitly with [loops] / [datasets] sections;
each loop line reads ``<space> <kernel> <mode>@<map|->:<dataset>, ...``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .chain import AccessMode
from .errors import DepthExceededError
from .inspector import ExecMode
from .problems import PRESETS, AccessSpec, DatasetSpec, LoopSpec, Problem


class ConfigError(ValueError):
    """Unusable run configuration; message names the offending section/key."""


@dataclass(frozen=True)
class SubChain:
    start: int
    stop: int  # exclusive
    tile_size: int

    @property
    def n_loops(self) -> int:
        return self.stop - self.start


@dataclass
class RunConfig:
    nx: int
    ny: int
    renumber: bool
    problem: Problem
    depth: int
    mode: ExecMode
    tile_size: int
    nranks: int
    fusion: tuple[SubChain, ...]
    report_path: str | None = None
    summary_path: str | None = None
    vtk_path: str | None = None
    source: str = field(default="<memory>", compare=False)

    @property
    def fused_stop(self) -> int:
        return self.fusion[-1].stop if self.fusion else 0


def _parse_fusion(text: str, n_loops: int, tile_size: int, depth: int,
                  mode: ExecMode) -> tuple[SubChain, ...]:
    """Parse "a-b:ts,c-d:ts" (inclusive ranges); must cover a prefix of the loops."""
    subchains = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            span, _, ts_text = part.partition(":")
            lo_text, _, hi_text = span.partition("-")
            lo, hi = int(lo_text), int(hi_text if hi_text else lo_text)
            ts = int(ts_text) if ts_text else tile_size
        except ValueError as exc:
            raise ConfigError(f"bad fusion entry {part!r}: {exc}") from None
        subchains.append(SubChain(lo, hi + 1, ts))
    expected = 0
    for sc in subchains:
        if sc.start != expected:
            raise ConfigError(
                f"fusion sub-chains must cover a gapless prefix; "
                f"expected start {expected}, got {sc.start}")
        if sc.stop <= sc.start or sc.stop > n_loops:
            raise ConfigError(f"fusion range {sc.start}-{sc.stop - 1} out of bounds")
        if sc.tile_size < 1:
            raise ConfigError("fusion tile size must be >= 1")
        if mode is ExecMode.DISTRIBUTED and sc.n_loops > depth:
            raise DepthExceededError(
                f"sub-chain of {sc.n_loops} loops exceeds depth {depth}")
        expected = sc.stop
    if not subchains:
        raise ConfigError("empty fusion scheme")
    return tuple(subchains)


def _parse_explicit_problem(parser: configparser.ConfigParser) -> Problem:
    if not parser.has_section("loops"):
        raise ConfigError("[chain] needs preset=... or a [loops] section")
    loops = []
    for key in sorted(parser["loops"], key=int):
        tokens = parser["loops"][key].split(None, 2)
        if len(tokens) != 3:
            raise ConfigError(f"[loops] {key}: expected '<space> <kernel> <accesses>'")
        space, kernel, access_text = tokens
        accesses = []
        for item in access_text.split(","):
            item = item.strip()
            try:
                mode_text, _, rest = item.partition("@")
                map_text, _, dataset = rest.partition(":")
            except ValueError:
                raise ConfigError(f"[loops] {key}: bad access {item!r}") from None
            if not dataset:
                raise ConfigError(f"[loops] {key}: access {item!r} names no dataset")
            accesses.append(AccessSpec(None if map_text == "-" else map_text,
                                       AccessMode.parse(mode_text), dataset))
        loops.append(LoopSpec(space, kernel, tuple(accesses)))
    if not parser.has_section("datasets"):
        raise ConfigError("explicit chains need a [datasets] section")
    datasets = []
    for name in parser["datasets"]:
        tokens = parser["datasets"][name].split()
        if len(tokens) != 3:
            raise ConfigError(f"[datasets] {name}: expected '<space> <vpe> <init>'")
        space, vpe, init = tokens
        datasets.append(DatasetSpec(name, space, int(vpe), init))
    return Problem("custom", tuple(loops), tuple(datasets))


def parse_config(path: str) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    try:
        nx = parser.getint("mesh", "nx")
        ny = parser.getint("mesh", "ny")
        renumber = parser.get("mesh", "renumber", fallback="rcm").lower()
        if renumber not in ("rcm", "none"):
            raise ConfigError(f"[mesh] renumber must be rcm or none, got {renumber!r}")
        preset = parser.get("chain", "preset", fallback=None)
        depth = parser.getint("chain", "depth", fallback=1)
        if preset is not None:
            try:
                problem = PRESETS[preset]
            except KeyError:
                raise ConfigError(
                    f"unknown preset {preset!r}; available: {sorted(PRESETS)}") from None
        else:
            problem = _parse_explicit_problem(parser)
        mode = ExecMode.parse(parser.get("run", "mode", fallback="sequential"))
        tile_size = parser.getint("run", "tile_size", fallback=16)
        nranks = parser.getint("run", "nranks", fallback=2)
        fusion_text = parser.get(
            "run", "fusion", fallback=f"0-{len(problem.loops) - 1}:{tile_size}")
        fusion = _parse_fusion(fusion_text, len(problem.loops), tile_size,
                               depth, mode)
    except (configparser.Error, ValueError) as exc:
        if isinstance(exc, (ConfigError, DepthExceededError)):
            raise
        raise ConfigError(f"{path}: {exc}") from exc

    return RunConfig(
        nx=nx, ny=ny, renumber=(renumber == "rcm"), problem=problem,
        depth=depth, mode=mode, tile_size=tile_size, nranks=nranks,
        fusion=fusion,
        report_path=parser.get("output", "report", fallback=None),
        summary_path=parser.get("output", "summary", fallback=None),
        vtk_path=parser.get("output", "vtk", fallback=None),
        source=path,
    )
