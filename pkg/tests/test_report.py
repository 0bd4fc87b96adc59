import csv
import io
from importlib import resources
from pathlib import Path

import pytest

from vnncomp.report import cactus_data, render_benchmark_table, render_cactus_csv, render_overall, write_report
from vnncomp.scoring import (InstanceRecord, ScoredInstance, Status, ToolCounts, Truth, read_counts_csv,
                             score_benchmark, scoreboard_from_counts)

DATA = Path(str(resources.files("vnncomp") / "data"))


def scored(tool, runtime, points, bench="b", status=Status.HOLDS, i=0):
    return ScoredInstance(InstanceRecord(bench, f"i{i}", tool, status, runtime), Truth.HOLDS, points)


def csv_rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_header_and_acasxu_row():
    board = scoreboard_from_counts(read_counts_csv(DATA / "vnncomp2023_scored.csv"))
    md, cs = render_benchmark_table(board.per_benchmark["2023-acasxu"])
    rows = csv_rows(cs)
    assert rows[0] == ["#", "Tool", "Verified", "Falsified", "Fastest", "Penalty", "Score", "Percent"]
    assert rows[1] == ["1", "nnenum", "139", "47", "0", "0", "1860", "100.0%"]
    assert "| 1 | nnenum | 139 | 47 | 0 | 0 | 1860 | 100.0% |" in md


def test_negative_row_shows_zero_percent():
    board = scoreboard_from_counts(read_counts_csv(DATA / "vnncomp2023_scored.csv"))
    rows = csv_rows(render_benchmark_table(board.per_benchmark["2023-traffic-signs-recognition"])[1])
    assert ["4", "NeuralSAT", "0", "0", "0", "35", "-5250", "0%"] in rows


def test_empty_table():
    md, cs = render_benchmark_table([])
    assert csv_rows(cs) == [["#", "Tool", "Verified", "Falsified", "Fastest", "Penalty", "Score", "Percent"]]
    assert md.count("\n") == 2


def test_cactus_sorted():
    items = [scored("A", t, 10, i=k) for k, t in enumerate([3.0, 1.0, 2.0])]
    assert cactus_data(items) == {"A": [(1, 1.0), (2, 2.0), (3, 3.0)]}
    assert cactus_data(items, "cumulative") == {"A": [(1, 1.0), (2, 3.0), (3, 6.0)]}


def test_cactus_only_solved():
    items = [scored("A", 1.0, 10), scored("A", 9.0, 0, status=Status.TIMEOUT, i=1),
             scored("A", 0.5, -150, status=Status.VIOLATED, i=2)]
    assert cactus_data(items) == {"A": [(1, 1.0)]}


def test_cactus_convention_checked():
    with pytest.raises(ValueError):
        cactus_data([], "log")


def test_cactus_csv_header_names_convention():
    assert render_cactus_csv({"A": [(1, 0.5)]}, "cumulative").splitlines()[0] == "tool,solved,cumulative_runtime_s"
    assert render_cactus_csv({"A": [(1, 0.5)]}).splitlines() == ["tool,solved,runtime_s", "A,1,0.500000"]


def test_overall_render():
    board = scoreboard_from_counts(read_counts_csv(DATA / "vnncomp2023_scored.csv"))
    rows = csv_rows(render_overall(board.overall)[1])
    assert rows[1] == ["1", "alpha-beta-CROWN", "930.9"]
    assert rows[-1] == ["7", "FastBATLLNN", "100.0"]


def test_write_report(tmp_path):
    items = [scored("A", 1.0, 10), scored("B", 2.0, 10)]
    board = scoreboard_from_counts([ToolCounts("b", "A", 1, 0, 0), ToolCounts("b", "B", 1, 0, 0)])
    paths = write_report(board, items, tmp_path)
    names = sorted(str(p.relative_to(tmp_path)) for p in paths)
    assert names == ["cactus/b.csv", "overall.csv", "overall.md", "tables/b.csv", "tables/b.md"]


def test_cactus_counts_match_scoreboard():
    items = [scored("A", float(k), 10 if k % 3 else 0, i=k) for k in range(9)] + \
            [scored("B", float(k), 10, status=Status.VIOLATED, i=k) for k in range(4)]
    counts = {}
    for s in items:
        if s.points == 10:
            counts[s.record.tool] = counts.get(s.record.tool, 0) + 1
    rows = score_benchmark([ToolCounts("b", t, n, 0, 0) for t, n in counts.items()])
    data = cactus_data(items)
    for r in rows:
        assert len(data[r.tool]) == r.verified + r.falsified
