"""Recompute the 2023 competition tables from the bundled per-tool counts.

Each tool earns 10 points per verified or falsified instance and loses
150 per incorrect result.  Percent is relative to the best tool in the
benchmark, and the overall score is the sum of percents.
"""
from importlib import resources
from pathlib import Path

from vnncomp.report import render_benchmark_table, render_overall
from vnncomp.scoring import read_counts_csv, scoreboard_from_counts

data = Path(str(resources.files("vnncomp") / "data"))
counts = read_counts_csv(data / "vnncomp2023_scored.csv")

board = scoreboard_from_counts(counts)
md, _ = render_benchmark_table(board.per_benchmark["2023-acasxu"], title="2023-acasxu")
print(md)
print(render_overall(board.overall)[0])

# moving bad-output witnesses from falsified to penalties changes the standings
alt = scoreboard_from_counts(counts, alternative=True)
print(render_overall(alt.overall, title="Overall Score (outputs checked)")[0])
