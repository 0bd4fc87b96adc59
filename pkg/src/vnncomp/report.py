"""Scoreboard tables (Markdown and CSV) and cactus-plot data."""
from __future__ import annotations

import csv
import io
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from .scoring import BenchmarkScoreRow, OverallRow, ScoredInstance, Scoreboard

TABLE_COLUMNS = ("#", "Tool", "Verified", "Falsified", "Fastest", "Penalty", "Score", "Percent")
CONVENTIONS = ("individual", "cumulative")


def table_cells(row: BenchmarkScoreRow) -> list[str]:
    return [str(row.rank), row.tool, str(row.verified), str(row.falsified), str(row.fastest),
            str(row.penalties), str(row.raw_score), row.percent_display]


def _markdown(header: Sequence[str], rows: Iterable[Sequence[str]], title: str | None) -> str:
    lines = [f"## {title}", ""] if title else []
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join("---" if h == "Tool" else "---:" for h in header) + "|")
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_benchmark_table(rows: Sequence[BenchmarkScoreRow], title: str | None = None) -> tuple[str, str]:
    """Return ``(markdown, csv)`` for one benchmark."""
    cells = [table_cells(r) for r in rows]
    return _markdown(TABLE_COLUMNS, cells, title), _csv(TABLE_COLUMNS, cells)


def render_overall(rows: Sequence[OverallRow], title: str = "Overall Score") -> tuple[str, str]:
    header = ("#", "Tool", "Score")
    cells = [[str(r.rank), r.tool, r.total_display] for r in rows]
    return _markdown(header, cells, title), _csv(header, cells)


def cactus_data(scored: Iterable[ScoredInstance], convention: str = "individual",
                tools: Iterable[str] = ()) -> dict[str, list[tuple[int, float]]]:
    """Per tool, ``(k, t_k)`` over correctly solved instances sorted by runtime.

    ``individual``: t_k is the k-th smallest runtime.  ``cumulative``: t_k is
    the sum of the k smallest.  Tools named in ``tools`` appear even when
    they solved nothing.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    times: dict[str, list[float]] = {t: [] for t in tools}
    for s in scored:
        times.setdefault(s.record.tool, [])
        if s.solved:
            times[s.record.tool].append(s.record.runtime_s)
    out = {}
    for tool, ts in sorted(times.items()):
        ts.sort()
        acc, pts = 0.0, []
        for k, t in enumerate(ts, 1):
            acc += t
            pts.append((k, acc if convention == "cumulative" else t))
        out[tool] = pts
    return out


def render_cactus_csv(data: dict[str, list[tuple[int, float]]], convention: str = "individual") -> str:
    col = "cumulative_runtime_s" if convention == "cumulative" else "runtime_s"
    rows = [[tool, str(k), f"{t:.6f}"] for tool, pts in data.items() for k, t in pts]
    return _csv(("tool", "solved", col), rows)


def safe_name(benchmark: str) -> str:
    return re.sub(r"[^A-Za-z0-9._+-]+", "_", benchmark) or "_"


def write_report(board: Scoreboard, scored: Sequence[ScoredInstance], outdir,
                 convention: str = "individual") -> list[Path]:
    """Write ``tables/<b>.{md,csv}``, ``cactus/<b>.csv`` and ``overall.{md,csv}``."""
    outdir = Path(outdir)
    (outdir / "tables").mkdir(parents=True, exist_ok=True)
    written = []
    for bench, rows in board.per_benchmark.items():
        md, cs = render_benchmark_table(rows, bench)
        for ext, text in (("md", md), ("csv", cs)):
            p = outdir / "tables" / f"{safe_name(bench)}.{ext}"
            p.write_text(text)
            written.append(p)

    by_bench: dict[str, list[ScoredInstance]] = defaultdict(list)
    for s in scored:
        by_bench[s.record.benchmark].append(s)
    if by_bench:
        (outdir / "cactus").mkdir(parents=True, exist_ok=True)
    for bench, items in sorted(by_bench.items()):
        data = cactus_data(items, convention)
        p = outdir / "cactus" / f"{safe_name(bench)}.csv"
        p.write_text(render_cactus_csv(data, convention))
        written.append(p)

    md, cs = render_overall(board.overall)
    sections = [md] + [render_benchmark_table(rows, bench)[0] for bench, rows in board.per_benchmark.items()]
    for name, text in (("overall.md", "\n".join(sections)), ("overall.csv", cs)):
        (outdir / name).write_text(text)
        written.append(outdir / name)
    return written
