"""Competition scoring: adjudication, instance points, benchmark normalization.

Instance points are +10 for a correct ``holds`` or a correct ``violated``
and -150 for an incorrect result.  Disagreements are settled by the
burden-of-proof rule: a violation counts only with a validated witness, and
a validated witness makes every ``holds`` claim on that instance incorrect.

A benchmark score is a tool's points divided by the best tool's points on
that benchmark (so the winner gets 100); the overall score is the sum of
benchmark scores.  Percents are kept as exact fractions; rounding happens
only for display.
"""
from __future__ import annotations

import csv
import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cex import CexVerdict, Mode

log = logging.getLogger(__name__)

CORRECT_POINTS = 10
INCORRECT_POINTS = -150
TRIVIAL_BENCHMARK = "_trivial"


class Status(enum.Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    TIMEOUT = "timeout"
    ERROR = "error"
    UNKNOWN = "unknown"


class Truth(enum.Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class InstanceRecord:
    benchmark: str
    instance: str
    tool: str
    status: Status
    runtime_s: float
    cex_verdict: CexVerdict | None = None
    timeout_s: float | None = None
    cex_path: str | None = None
    onnx: str | None = None
    vnnlib: str | None = None

    def __post_init__(self):
        if not self.runtime_s >= 0:
            raise ValueError(f"runtime must be non-negative, got {self.runtime_s}")

    @property
    def witness_valid(self) -> bool:
        return self.status is Status.VIOLATED and self.cex_verdict is not None and self.cex_verdict.valid


@dataclass(frozen=True)
class GroundTruth:
    instance: str
    truth: Truth


def adjudicate(records: Sequence[InstanceRecord], declared: Truth | None = None) -> GroundTruth:
    """Ground truth for one instance from every tool's report on it.

    A validated witness always wins.  Otherwise a declared truth (from a
    fixture) is used, and failing that any ``holds`` report.
    """
    if not records:
        raise ValueError("adjudicate needs at least one record")
    instance = records[0].instance
    if any(r.witness_valid for r in records):
        return GroundTruth(instance, Truth.VIOLATED)
    if declared is not None:
        return GroundTruth(instance, declared)
    if any(r.status is Status.HOLDS for r in records):
        return GroundTruth(instance, Truth.HOLDS)
    return GroundTruth(instance, Truth.UNDETERMINED)


def is_incorrect(record: InstanceRecord, truth: Truth) -> bool:
    if record.status is Status.VIOLATED:
        return not record.witness_valid
    if record.status is Status.HOLDS:
        return truth is Truth.VIOLATED
    return False


def score_instance(record: InstanceRecord, truth: Truth) -> int:
    if is_incorrect(record, truth):
        return INCORRECT_POINTS
    if record.status is Status.VIOLATED:
        return CORRECT_POINTS
    if record.status is Status.HOLDS and truth is Truth.HOLDS:
        return CORRECT_POINTS
    return 0


@dataclass(frozen=True)
class ScoredInstance:
    record: InstanceRecord
    truth: Truth
    points: int

    @property
    def solved(self) -> bool:
        return self.points == CORRECT_POINTS


def score_records(records: Iterable[InstanceRecord],
                  declared: Mapping[tuple[str, str], Truth] | None = None) -> list[ScoredInstance]:
    """Adjudicate each ``(benchmark, instance)`` group and score every record in it."""
    groups: dict[tuple[str, str], list[InstanceRecord]] = defaultdict(list)
    for r in records:
        groups[(r.benchmark, r.instance)].append(r)
    out = []
    for key, recs in groups.items():
        truth = adjudicate(recs, (declared or {}).get(key)).truth
        out.extend(ScoredInstance(r, truth, score_instance(r, truth)) for r in recs)
    return out


@dataclass(frozen=True)
class ToolCounts:
    """Per-tool tallies on one benchmark.

    ``bad_outputs`` counts falsified results whose witness carried missing
    or wrong output values; it only matters in the alternative mode.
    """
    benchmark: str
    tool: str
    verified: int = 0
    falsified: int = 0
    penalties: int = 0
    bad_outputs: int = 0

    @property
    def raw_score(self) -> int:
        return CORRECT_POINTS * (self.verified + self.falsified) + INCORRECT_POINTS * self.penalties

    def alternative(self) -> "ToolCounts":
        return replace(self, falsified=self.falsified - self.bad_outputs,
                       penalties=self.penalties + self.bad_outputs, bad_outputs=0)


def counts_from_scored(scored: Iterable[ScoredInstance]) -> dict[str, list[ToolCounts]]:
    tally: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0, 0])
    for s in scored:
        t = tally[(s.record.benchmark, s.record.tool)]
        if s.points == INCORRECT_POINTS:
            t[2] += 1
        elif s.points == CORRECT_POINTS:
            t[0 if s.record.status is Status.HOLDS else 1] += 1
    out: dict[str, list[ToolCounts]] = defaultdict(list)
    for (bench, tool), (v, f, p) in sorted(tally.items()):
        out[bench].append(ToolCounts(bench, tool, v, f, p))
    return dict(out)


def tie_key(tool: str) -> tuple[str, str]:
    return (tool.casefold(), tool)


def round_percent(p: Fraction) -> Fraction:
    """One decimal, round half to even, computed exactly."""
    return Fraction(round(p * 10), 10)


def format_percent(p: Fraction) -> str:
    q = round(p * 10)
    return f"{q // 10}.{q % 10}"


@dataclass(frozen=True)
class BenchmarkScoreRow:
    rank: int
    tool: str
    verified: int
    falsified: int
    fastest: int
    penalties: int
    raw_score: int
    percent_exact: Fraction = field(repr=False)

    @property
    def percent(self) -> float:
        return float(self.percent_exact)

    @property
    def percent_display(self) -> str:
        return "0%" if self.raw_score <= 0 else format_percent(self.percent_exact) + "%"


def score_benchmark(counts: Iterable[ToolCounts]) -> list[BenchmarkScoreRow]:
    """Normalize raw scores by the best tool; negative raw scores clamp to 0%.

    If no tool has a positive score every percent is 0.  Ties are ordered by
    tool name, case-insensitively.
    """
    counts = list(counts)
    if not counts:
        return []
    best = max(c.raw_score for c in counts)
    ordered = sorted(counts, key=lambda c: (-c.raw_score,) + tie_key(c.tool))
    rows = []
    for rank, c in enumerate(ordered, 1):
        pct = Fraction(100 * c.raw_score, best) if best > 0 and c.raw_score > 0 else Fraction(0)
        rows.append(BenchmarkScoreRow(rank, c.tool, c.verified, c.falsified, 0, c.penalties, c.raw_score, pct))
    return rows


@dataclass(frozen=True)
class OverallRow:
    rank: int
    tool: str
    total_exact: Fraction = field(repr=False)

    @property
    def total(self) -> float:
        return float(self.total_exact)

    @property
    def total_display(self) -> str:
        return format_percent(self.total_exact)


def score_overall(per_benchmark: Mapping[str, Sequence[BenchmarkScoreRow]]) -> list[OverallRow]:
    totals: dict[str, Fraction] = defaultdict(Fraction)
    for rows in per_benchmark.values():
        for row in rows:
            totals[row.tool] += row.percent_exact
    ordered = sorted(totals.items(), key=lambda kv: (-kv[1],) + tie_key(kv[0]))
    return [OverallRow(i, tool, total) for i, (tool, total) in enumerate(ordered, 1)]


@dataclass(frozen=True)
class Scoreboard:
    per_benchmark: dict[str, list[BenchmarkScoreRow]]
    overall: list[OverallRow]


def scoreboard_from_counts(counts: Iterable[ToolCounts], alternative: bool = False) -> Scoreboard:
    by_bench: dict[str, list[ToolCounts]] = defaultdict(list)
    for c in counts:
        by_bench[c.benchmark].append(c.alternative() if alternative else c)
    per = {b: score_benchmark(cs) for b, cs in by_bench.items()}
    return Scoreboard(per, score_overall(per))


# --------------------------------------------------------------------------
# overhead correction


def overhead_from_runtimes(runtimes: Iterable[float]) -> float:
    """The smallest runtime observed for a tool is taken as its startup overhead."""
    runtimes = list(runtimes)
    if not runtimes:
        raise ValueError("no runtimes to derive an overhead from")
    return min(runtimes)


def apply_overhead(records: Iterable[InstanceRecord], overhead: float,
                   timeouts: Mapping[str, float] | None = None) -> list[InstanceRecord]:
    """Subtract ``overhead`` from runtimes and turn over-time results into timeouts.

    ``timeouts`` maps instance id to its limit; otherwise each record's own
    ``timeout_s`` is used.  Points are otherwise unchanged.
    """
    out = []
    for r in records:
        limit = (timeouts or {}).get(r.instance, r.timeout_s)
        adjusted = max(0.0, r.runtime_s - overhead)
        status = r.status
        if limit is not None and adjusted > limit and status is not Status.TIMEOUT:
            status = Status.TIMEOUT
        out.append(replace(r, runtime_s=adjusted, status=status))
    return out


# --------------------------------------------------------------------------
# CSV ingestion

RESULT_COLUMNS = ("benchmark", "instance", "status", "runtime_s", "cex_path")
COUNT_COLUMNS = ("benchmark", "tool", "verified", "falsified", "penalties")


class ResultsFormatError(ValueError):
    pass


def read_counts_csv(path) -> list[ToolCounts]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COUNT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ResultsFormatError(f"{path}: missing columns {sorted(missing)}")
        return [ToolCounts(row["benchmark"], row["tool"], int(row["verified"]), int(row["falsified"]),
                           int(row["penalties"]), int(row.get("bad_outputs") or 0))
                for row in reader]


def _opt_float(s: str | None) -> float | None:
    return float(s) if s not in (None, "") else None


def read_results_csv(path, tool: str | None = None) -> list[InstanceRecord]:
    """Per-tool results; the tool name defaults to the file stem."""
    path = Path(path)
    tool = tool or path.stem
    base = path.parent
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ResultsFormatError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, 2):
            try:
                status = Status(row["status"].strip().lower())
            except ValueError:
                raise ResultsFormatError(f"{path}:{line}: unknown status {row['status']!r}") from None

            def resolve(p):
                return str(base / p) if p and not Path(p).is_absolute() else (p or None)
            records.append(InstanceRecord(
                row["benchmark"], row["instance"], tool, status, float(row["runtime_s"]),
                timeout_s=_opt_float(row.get("timeout_s")), cex_path=resolve(row["cex_path"]),
                onnx=resolve(row.get("onnx")), vnnlib=resolve(row.get("vnnlib"))))
    return records


def csv_kind(path) -> str:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if set(COUNT_COLUMNS) <= set(header):
        return "counts"
    if set(RESULT_COLUMNS) <= set(header):
        return "results"
    raise ResultsFormatError(f"{path}: header matches neither results nor count tables")


def attach_verdicts(records: Iterable[InstanceRecord], mode: Mode,
                    out_tol: float | None = None) -> list[InstanceRecord]:
    """Validate the witness of every ``violated`` record; unreadable witnesses are invalid."""
    from . import cex as cexmod
    from .onnx_rt import load_network
    from .specfmt import load_vnnlib

    nets, specs = {}, {}
    out = []
    for r in records:
        if r.status is not Status.VIOLATED or r.cex_verdict is not None:
            out.append(r)
            continue
        verdict = None
        if r.cex_path and r.onnx and r.vnnlib and Path(r.cex_path).exists():
            try:
                if r.onnx not in nets:
                    nets[r.onnx] = load_network(r.onnx)
                if r.vnnlib not in specs:
                    specs[r.vnnlib] = load_vnnlib(r.vnnlib)
                witness = cexmod.load_counterexample(r.cex_path)
                kw = {} if out_tol is None else {"out_tol": out_tol}
                verdict = cexmod.validate(witness, specs[r.vnnlib], nets[r.onnx], mode, **kw)
            except (ValueError, OSError) as e:
                log.warning("%s/%s (%s): witness rejected: %s", r.benchmark, r.instance, r.tool, e)
        if verdict is None:
            verdict = CexVerdict(False, cexmod.Reason.NO_WITNESS)
        out.append(replace(r, cex_verdict=verdict))
    return out


def prepare_tool_records(records: Sequence[InstanceRecord]) -> list[InstanceRecord]:
    """Overhead-correct one tool's records and drop the trivial probe rows."""
    if not records:
        return []
    overhead = overhead_from_runtimes(r.runtime_s for r in records)
    real = [r for r in records if r.benchmark != TRIVIAL_BENCHMARK]
    return apply_overhead(real, overhead)


def load_results_dir(directory, mode: Mode = Mode.DISCARD_OUTPUTS,
                     out_tol: float | None = None) -> tuple[list[ScoredInstance], list[ToolCounts]]:
    """Read every ``*.csv`` under ``directory``.

    Instance-level files are overhead-corrected, witness-checked and
    adjudicated; count-level files are passed through.
    """
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise ResultsFormatError(f"no .csv files in {directory}")
    records: list[InstanceRecord] = []
    counts: list[ToolCounts] = []
    for f in files:
        if csv_kind(f) == "counts":
            counts.extend(read_counts_csv(f))
        else:
            records.extend(prepare_tool_records(read_results_csv(f)))
    scored = score_records(attach_verdicts(records, mode, out_tol)) if records else []
    return scored, counts


def build_scoreboard(scored: Sequence[ScoredInstance], counts: Sequence[ToolCounts],
                     alternative: bool = False) -> Scoreboard:
    all_counts = [c for cs in counts_from_scored(scored).values() for c in cs]
    all_counts += [c.alternative() if alternative else c for c in counts]
    by_bench: dict[str, list[ToolCounts]] = defaultdict(list)
    for c in all_counts:
        by_bench[c.benchmark].append(c)
    per = {b: score_benchmark(cs) for b, cs in sorted(by_bench.items())}
    return Scoreboard(per, score_overall(per))
