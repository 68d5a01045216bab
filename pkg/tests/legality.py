"""Brute-force dependence oracle used by property and acceptance tests.

Enumerates flow, anti and output dependence pairs straight from the chain's
descriptors (increments folded into writes, at least one side indirect), plus
same-loop reduction pairs.  Deliberately independent of the inspector: it
only reads descriptors and map values.
"""

from collections import defaultdict

from looptile.chain import AccessMode
from looptile.inspector import NO_TILE, Region


def _touches(loop, element, want_write):
    """(space, target) pairs element reads (or writes) via each descriptor."""
    out = []
    for d in loop.descriptors:
        writes = d.mode is not AccessMode.READ  # increments count as writes
        reads = d.mode is AccessMode.READ
        if want_write and not writes:
            continue
        if not want_write and not reads:
            continue
        if d.is_direct:
            out.append((loop.space.name, element, True))
        else:
            base = element * d.map.arity
            for t in d.map.values[base:base + d.map.arity]:
                out.append((d.map.target.name, int(t), False))
    return out


def _by_target(loop, want_write):
    """target -> [(element, is_direct)] over the loop's executable iterations."""
    table = defaultdict(list)
    for e in range(loop.space.executable_size):
        for space, t, direct in _touches(loop, e, want_write):
            table[(space, t)].append((e, direct))
    return table


def cross_loop_pairs(chain):
    """All (x, e_x, y, e_y) flow/anti/output pairs, x < y, one side indirect."""
    writes = [_by_target(loop, True) for loop in chain.loops]
    reads = [_by_target(loop, False) for loop in chain.loops]
    pairs = set()
    n = len(chain.loops)
    for x in range(n):
        for y in range(x + 1, n):
            for first, second in ((writes[x], reads[y]),    # flow
                                  (reads[x], writes[y]),    # anti
                                  (writes[x], writes[y])):  # output
                for key, firsts in first.items():
                    seconds = second.get(key)
                    if not seconds:
                        continue
                    for e_x, direct_x in firsts:
                        for e_y, direct_y in seconds:
                            if direct_x and direct_y:
                                continue  # both direct: outside the enumeration
                            pairs.add((x, e_x, y, e_y))
    return sorted(pairs)


def reduction_pairs(chain):
    """Same-loop iteration pairs whose increment targets intersect."""
    pairs = set()
    for j, loop in enumerate(chain.loops):
        table = defaultdict(list)
        for e in range(loop.space.executable_size):
            for d in loop.descriptors:
                if d.mode is not AccessMode.INC or d.is_direct:
                    continue
                base = e * d.map.arity
                for t in d.map.values[base:base + d.map.arity]:
                    table[(d.map.target.name, int(t))].append(e)
        for elements in table.values():
            for a in elements:
                for b in elements:
                    if a < b:
                        pairs.add((j, a, b))
    return sorted(pairs)


def check_legality(chain, schedule):
    """Violations of the ordering rules over every enumerated pair."""
    sigma = [schedule.tile_of(j, loop.space.total)
             for j, loop in enumerate(chain.loops)]
    colors = {t.id: t.color for t in schedule.tiles}
    tne = schedule.nonexec_tile.id
    violations = []
    for x, e_x, y, e_y in cross_loop_pairs(chain):
        tx, ty = int(sigma[x][e_x]), int(sigma[y][e_y])
        if tx == tne or ty == tne or tx == NO_TILE or ty == NO_TILE:
            continue  # never executed
        if colors[ty] < colors[tx]:
            violations.append(
                f"pair L{x}[{e_x}] -> L{y}[{e_y}]: color {colors[ty]} < {colors[tx]}")
        elif colors[ty] == colors[tx] and tx != ty:
            violations.append(
                f"pair L{x}[{e_x}] -> L{y}[{e_y}]: equal color, tiles {tx} != {ty}")
    for j, a, b in reduction_pairs(chain):
        ta, tb = int(sigma[j][a]), int(sigma[j][b])
        if ta == tne or tb == tne or ta == NO_TILE or tb == NO_TILE:
            continue
        if ta != tb and colors[ta] == colors[tb]:
            violations.append(
                f"reduction L{j}[{a}] ~ L{j}[{b}]: split across equal color "
                f"{colors[ta]} tiles {ta}, {tb}")
    return violations


def count_pairs(chain):
    return len(cross_loop_pairs(chain)) + len(reduction_pairs(chain))


def footprint_conflicts(chain, schedule):
    """Racing pairs: equal-colored executed tiles sharing an indirect target
    that at least one of them writes or increments.

    Read-read sharing is benign: equal-colored tiles may read a common
    element concurrently.
    """
    touched, written = {}, {}
    for t in schedule.tiles:
        if t.region is Region.NONEXEC:
            continue
        reads, writes = set(), set()
        for j, loop in enumerate(chain.loops):
            elements = t.iteration_lists.get(j)
            if elements is None:
                continue
            for d in loop.descriptors:
                if d.is_direct:
                    continue
                rows = d.map.values.reshape(-1, d.map.arity)[elements]
                bucket = reads if d.mode is AccessMode.READ else writes
                bucket.update((d.map.target.name, int(v)) for v in rows.ravel())
        touched[t.id] = reads | writes
        written[t.id] = writes
    clashes = []
    ids = sorted(touched)
    color = {t.id: t.color for t in schedule.tiles}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if color[a] != color[b]:
                continue
            if (written[a] & touched[b]) or (written[b] & touched[a]):
                clashes.append((a, b))
    return clashes
