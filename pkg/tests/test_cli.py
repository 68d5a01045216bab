import numpy as np
import pytest

from looptile.chain import AccessMode
from looptile.cli import (ScheduleCache, compare_values, main, reference_values,
                          run_config, verify_config, export_vtk_config,
                          inspect_only, sweep_config)
from looptile.config import ConfigError, parse_config
from looptile.errors import DepthExceededError, VerificationError
from looptile.executor import execute_schedule
from looptile.inspector import ExecMode, inspect_chain
from looptile.mesh import generate_rect_mesh
from looptile.problems import (FIG2, AccessSpec, DatasetSpec, LoopSpec,
                               Problem, global_setup)
from looptile.vtk import export_vtk, parse_vtk

from conftest import dataset_values


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


FIG2_INI = """
[mesh]
nx = 8
ny = 4
renumber = rcm

[chain]
preset = fig2
depth = 3

[run]
mode = {mode}
tile_size = {ts}
{extra}
"""


def test_parse_config_roundtrip(tmp_path):
    path = write_config(tmp_path, FIG2_INI.format(mode="shared", ts=16, extra=""))
    cfg = parse_config(path)
    assert (cfg.nx, cfg.ny, cfg.renumber) == (8, 4, True)
    assert cfg.problem.name == "fig2"
    assert cfg.mode is ExecMode.SHARED
    assert cfg.fusion[0].start == 0 and cfg.fusion[0].stop == 3


def test_missing_file_and_bad_values_are_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "nope.ini"))
    path = write_config(tmp_path, "[mesh]\nnx = panther\nny = 1\n")
    with pytest.raises(ConfigError):
        parse_config(path)
    path = write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=16, extra="fusion = 1-2:4"))
    with pytest.raises(ConfigError, match="prefix"):
        parse_config(path)


def test_distributed_fusion_deeper_than_halo_is_depth_error(tmp_path):
    path = write_config(tmp_path, FIG2_INI.format(
        mode="distributed", ts=8, extra="fusion = 0-2:8\nnranks = 2").replace(
            "depth = 3", "depth = 2"))
    with pytest.raises(DepthExceededError):
        parse_config(path)


def test_explicit_chain_config(tmp_path):
    body = """
[mesh]
nx = 3
ny = 2
renumber = none

[chain]
depth = 2

[loops]
0 = edges edge_inc r@-:edge_w, i@e2v:vertex_acc
1 = edges edge_read w@-:edge_out, r@e2v:vertex_acc

[datasets]
edge_w = edges 1 ramp
vertex_acc = verts 1 zeros
edge_out = edges 1 zeros

[run]
mode = sequential
tile_size = 4
"""
    cfg = parse_config(write_config(tmp_path, body))
    assert len(cfg.problem.loops) == 2
    assert cfg.problem.loops[1].accesses[0].mode is AccessMode.WRITE
    verify_config(cfg)


@pytest.mark.parametrize("mode", ["sequential", "shared", "distributed"])
def test_verify_passes_for_fig2(tmp_path, mode):
    extra = "nranks = 2" if mode == "distributed" else ""
    cfg = parse_config(write_config(
        tmp_path, FIG2_INI.format(mode=mode, ts=16, extra=extra)))
    result = verify_config(cfg)
    assert set(result.values) == {"edge_w", "cell_w", "vertex_acc", "edge_out"}


def test_two_subchains_hit_the_cache_on_second_run(tmp_path):
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=16, extra="fusion = 0-1:8,2-2:8")))
    cache = ScheduleCache()
    first = run_config(cfg, cache)
    assert (cache.hits, cache.misses) == (0, 2)
    second = run_config(cfg, cache)
    assert (cache.hits, cache.misses) == (2, 2)
    for name in first.values:
        np.testing.assert_array_equal(first.values[name], second.values[name])


def test_unfused_tail_loops_run_untiled(tmp_path):
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=16, extra="fusion = 0-1:8")))
    result = run_config(cfg)
    reference = reference_values(cfg, result.mesh)
    assert compare_values(reference, result.values) == []


def test_single_loop_subchains_are_valid(tmp_path):
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=16, extra="fusion = 0-0:4,1-2:8")))
    verify_config(cfg)


def test_identical_configs_produce_identical_outputs_and_vtk(tmp_path):
    out1, out2 = tmp_path / "a.vtk", tmp_path / "b.vtk"
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=8, extra=f"\n[output]\nvtk = {out1}")))
    r1 = run_config(cfg)
    export_vtk_config(cfg, str(out1))
    cfg2 = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=8, extra=f"\n[output]\nvtk = {out2}"), name="b.ini"))
    r2 = run_config(cfg2)
    export_vtk_config(cfg2, str(out2))
    for name in r1.values:
        np.testing.assert_array_equal(r1.values[name], r2.values[name])
    assert out1.read_bytes() == out2.read_bytes()


CELL_SEEDED = Problem(
    "cellseed",
    loops=(LoopSpec("cells", "cell_inc",
                    (AccessSpec(None, AccessMode.READ, "cell_w"),
                     AccessSpec("c2v", AccessMode.INC, "vertex_acc"))),),
    datasets=(DatasetSpec("cell_w", "cells", 1, "ramp"),
              DatasetSpec("vertex_acc", "verts", 1, "zeros")))


def test_vtk_single_tile_schedule(tmp_path):
    mesh = generate_rect_mesh(2, 2)
    chain, _, _ = global_setup(mesh, CELL_SEEDED, depth=1)
    schedule = inspect_chain(chain, 1000, ExecMode.SHARED)
    path = tmp_path / "one.vtk"
    export_vtk(schedule, chain, mesh, str(path))
    parsed = parse_vtk(str(path))
    assert np.all(parsed["cell_data"]["tile_id"] == 0)


def test_vtk_four_tiles_three_colors(tmp_path):
    # four seed partitions where two non-adjacent tiles share a color
    mesh = generate_rect_mesh(2, 3)
    chain, _, _ = global_setup(mesh, CELL_SEEDED, depth=1)
    schedule = inspect_chain(chain, 3, ExecMode.SHARED)
    path = tmp_path / "four.vtk"
    export_vtk(schedule, chain, mesh, str(path))
    parsed = parse_vtk(str(path))
    assert len(np.unique(parsed["cell_data"]["tile_id"])) == 4
    assert len(np.unique(parsed["cell_data"]["color"])) == 3


def test_vtk_counts_match_mesh_sizes(tmp_path):
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=8, extra="")))
    path = str(tmp_path / "tiles.vtk")
    export_vtk_config(cfg, path)
    parsed = parse_vtk(path)
    mesh = generate_rect_mesh(8, 4)
    assert len(parsed["points"]) == mesh.num_vertices
    assert len(parsed["cells"]) == mesh.num_cells
    assert set(parsed["cell_data"]) == {"tile_id", "color"}
    schedule = inspect_only(cfg)[0]
    tile_of = schedule.tile_of(1, mesh.num_cells)
    assert np.array_equal(parsed["cell_data"]["tile_id"], tile_of)


def test_corrupted_schedule_fails_verification(registry, mesh_8x4):
    # moving one iteration into an earlier-colored tile breaks legality and
    # must be caught by the output diff
    chain, datasets, bindings = global_setup(mesh_8x4, FIG2, depth=3)
    schedule = inspect_chain(chain, 6, ExecMode.SHARED)
    tiles = sorted(schedule.executable_tiles(), key=lambda t: t.color)
    lo, hi = tiles[0], tiles[-1]
    assert lo.color < hi.color
    moved = hi.iteration_lists[2][:1]
    hi.iteration_lists[2] = hi.iteration_lists[2][1:]
    lo.iteration_lists[2] = np.sort(np.concatenate([lo.iteration_lists[2], moved]))
    execute_schedule(schedule, chain, bindings, datasets, registry)

    chain2, datasets2, bindings2 = global_setup(mesh_8x4, FIG2, depth=3)
    from looptile.executor import execute_untiled
    execute_untiled(chain2, bindings2, datasets2, registry)
    reference = dataset_values(datasets2)
    diffs = compare_values(reference, dataset_values(datasets))
    assert diffs, "legality violation went unnoticed by the oracle diff"


def test_sweep_emits_a_row_per_combination(tmp_path, capsys):
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=8, extra="")))
    rows = sweep_config(cfg, tile_sizes=[4, 16], modes=[ExecMode.SEQUENTIAL,
                                                        ExecMode.SHARED])
    assert len(rows) == 4
    assert all(r["verify"] == "pass" for r in rows)
    out = capsys.readouterr().out
    assert "inspect_ms" in out


EIGHT_INI = """
[mesh]
nx = 4
ny = 2
renumber = rcm

[chain]
preset = eight_loop
depth = 8

[run]
mode = shared
tile_size = 8
"""


def test_five_scheme_sweep_over_eight_loop_chain(tmp_path, capsys):
    # varying fusion aggressiveness, from no fusion beyond pairs up to
    # one chain fusing everything
    cfg = parse_config(write_config(tmp_path, EIGHT_INI))
    schemes = [
        "0-1,2-3,4-5,6-7",
        "0-3,4-7",
        "0-2,3-5,6-7",
        "0-5,6-7",
        "0-7",
    ]
    rows = sweep_config(cfg, tile_sizes=[8], modes=[ExecMode.SHARED],
                        schemes=schemes)
    assert len(rows) == 5
    assert all(r["verify"] == "pass" for r in rows)
    table = capsys.readouterr().out
    assert all(s in table for s in schemes)


def test_compare_values_tolerates_float_noise():
    ref = {"a": np.array([0.5, 1.5])}
    close = {"a": np.array([0.5 * (1 + 1e-14), 1.5])}
    far = {"a": np.array([0.5 * (1 + 1e-9), 1.5])}
    assert compare_values(ref, close) == []
    assert compare_values(ref, far) != []
    # integer-valued data is compared exactly
    ref_int = {"a": np.array([2.0, 3.0])}
    off = {"a": np.array([2.0 + 1e-14, 3.0])}
    assert compare_values(ref_int, off) != []


def test_main_exit_codes(tmp_path, monkeypatch, capsys):
    good = write_config(tmp_path, FIG2_INI.format(mode="shared", ts=16, extra=""))
    assert main(["verify", good]) == 0
    assert main(["run", good]) == 0
    assert main(["inspect-only", good]) == 0
    out = capsys.readouterr().out
    assert "dominant phase" in out

    missing = str(tmp_path / "missing.ini")
    assert main(["verify", missing]) == 2

    deep = write_config(tmp_path, FIG2_INI.format(
        mode="distributed", ts=8, extra="nranks = 2").replace(
            "depth = 3", "depth = 2"), name="deep.ini")
    assert main(["run", deep]) == 4

    def fail(cfg, cache=None):
        raise VerificationError("injected mismatch")

    monkeypatch.setattr("looptile.cli.run_config", fail)
    assert main(["verify", good]) == 3


def test_verify_dumps_both_runs_for_external_diffing(tmp_path):
    report = tmp_path / "verify.txt"
    cfg = parse_config(write_config(tmp_path, FIG2_INI.format(
        mode="shared", ts=16, extra=f"\n[output]\nreport = {report}")))
    verify_config(cfg)
    tiled = (tmp_path / "verify.txt.tiled").read_text().splitlines()
    untiled = (tmp_path / "verify.txt.untiled").read_text().splitlines()
    assert tiled == untiled
    assert tiled[0].split()[0] == "cell_w"


def test_recoloring_guard_trips_on_nonconvergence(monkeypatch, mesh_8x4):
    # a coloring that ignores fake connections can never resolve conflicts
    from looptile import inspector as insp
    from looptile.errors import ColoringLimitError

    def stubborn(tiles, seed_map, fakes, mode, adjacency=None):
        for t in tiles[:-1]:
            t.color = 0
        tiles[-1].color = 1

    monkeypatch.setattr(insp, "color_tiles", stubborn)
    chain, _, _ = global_setup(mesh_8x4, FIG2, depth=3)
    with pytest.raises(ColoringLimitError):
        insp.inspect_chain(chain, 4, ExecMode.SHARED)


def test_export_vtk_to_unwritable_path_raises(tmp_path):
    mesh = generate_rect_mesh(2, 2)
    chain, _, _ = global_setup(mesh, CELL_SEEDED, depth=1)
    schedule = inspect_chain(chain, 4, ExecMode.SEQUENTIAL)
    with pytest.raises(OSError):
        export_vtk(schedule, chain, mesh, str(tmp_path))  # a directory


def test_main_writes_configured_outputs(tmp_path):
    report = tmp_path / "report.txt"
    summary = tmp_path / "summary.txt"
    vtk_path = tmp_path / "tiles.vtk"
    extra = f"\n[output]\nreport = {report}\nsummary = {summary}\nvtk = {vtk_path}"
    cfg_path = write_config(tmp_path, FIG2_INI.format(mode="shared", ts=16,
                                                      extra=extra))
    assert main(["run", cfg_path]) == 0
    assert "phase.core" in report.read_text()
    assert "dominant phase" in summary.read_text()
    assert vtk_path.exists()
