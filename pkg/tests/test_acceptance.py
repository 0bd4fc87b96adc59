"""Acceptance gate: one test (and one PASS/FAIL line) per criterion.

Run ``pytest tests/test_acceptance.py -v``; the per-criterion lines are
printed in the "acceptance criteria" section of the terminal summary.
"""
import csv
import itertools
import os
import shutil
import textwrap
import time
from importlib import resources
from pathlib import Path

import numpy as np
import onnx
import pytest

from vnncomp import baseline, cex, cli, fixtures, runner, specfmt
from vnncomp.baseline import Budget, IntervalVector, Verdict
from vnncomp.cex import Counterexample, Mode
from vnncomp.onnx_rt import infer_batch, load_network
from vnncomp.scoring import (InstanceRecord, Status, ToolCounts, Truth, apply_overhead, read_counts_csv,
                             read_results_csv, score_instance, scoreboard_from_counts)

import oracles
from helpers import record_criterion, tiny_instance

DATA = Path(str(resources.files("vnncomp") / "data"))
GOLDEN = Path(__file__).parent / "data" / "published_tables.csv"
CORPUS = sorted((Path(__file__).parent / "data" / "vnnlib").glob("*.vnnlib"))

ALT_TOTALS = [("alpha-beta-CROWN", 830.9), ("Marabou", 531.6), ("NeuralSAT", 469.6), ("nnenum", 441.9),
              ("PyRAT", 276.6), ("NNV", 176.4), ("FastBATLLNN", 100.0)]


def golden(scored: str) -> dict:
    with open(GOLDEN, newline="") as fh:
        return {(r["benchmark"], r["tool"]): r for r in csv.DictReader(fh) if r["scored"] == scored}


def table_mismatches(report_dir: Path, want: dict) -> list[str]:
    """Compare written table CSVs against published rows.

    Score and Percent (and the count columns) must be identical.  Rank is
    checked up to reordering inside a group of equal scores.
    """
    bad = []
    got = {}
    for path in sorted((report_dir / "tables").glob("*.csv")):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            got[(path.stem, r["Tool"])] = (r, [int(t["#"]) for t in rows if t["Score"] == r["Score"]])
    missing = set(want) - set(got)
    bad += [f"missing row {k}" for k in sorted(missing)]
    for key, w in want.items():
        if key not in got:
            continue
        r, tied = got[key]
        cells = [r["Verified"], r["Falsified"], r["Fastest"], r["Penalty"], r["Score"], r["Percent"]]
        if cells != [w["verified"], w["falsified"], w["fastest"], w["penalty"], w["score"], w["percent"]]:
            bad.append(f"{key}: {cells}")
        if not min(tied) <= int(w["rank"]) <= max(tied):
            bad.append(f"{key}: rank {r['#']} vs {w['rank']}")
    return bad


def score_counts_via_cli(tmp_path, fname, *extra):
    res = tmp_path / "in"
    res.mkdir(exist_ok=True)
    shutil.copy(DATA / fname, res / fname)
    out = tmp_path / ("out" + "".join(extra).replace("-", ""))
    t0 = time.perf_counter()
    code = cli.main(["score", "--results", str(res), "--out", str(out), *extra])
    return code, out, time.perf_counter() - t0


# --------------------------------------------------------------------------


def test_criterion_01_scored_tables(tmp_path):
    code, out, elapsed = score_counts_via_cli(tmp_path, "vnncomp2023_scored.csv")
    want = golden("1")
    bad = table_mismatches(out, want)
    benches = {b for b, _ in want}
    anchors = {
        ("2023-acasxu", "alpha-beta-CROWN"): ("1700", "91.4%"),
        ("2023-collins-rul-cnn", "NNV"): ("-3820", "0%"),
        ("2023-nn4sys", "alpha-beta-CROWN"): ("1940", "100.0%"),
        ("2023-traffic-signs-recognition", "NeuralSAT"): ("-5250", "0%"),
    }
    for (b, t), (score, pct) in anchors.items():
        with open(out / "tables" / f"{b}.csv", newline="") as fh:
            row = next(r for r in csv.DictReader(fh) if r["Tool"] == t)
        if (row["Score"], row["Percent"]) != (score, pct):
            bad.append(f"anchor {b}/{t}: {row['Score']} {row['Percent']}")
    ok = code == 0 and not bad and len(benches) == 10 and elapsed < 1.0
    record_criterion(1, ok, f"{len(want)} rows over {len(benches)} scored tables, "
                            f"{len(bad)} mismatches, {elapsed:.3f} s")
    assert ok, bad


def test_criterion_02_unscored_tables(tmp_path):
    code, out, _ = score_counts_via_cli(tmp_path, "vnncomp2023_unscored.csv")
    want = golden("0")
    bad = table_mismatches(out, want)
    with open(out / "tables" / "2022-vggnet16-2022.csv", newline="") as fh:
        abc = next(r for r in csv.DictReader(fh) if r["Tool"] == "alpha-beta-CROWN")
    if (abc["Score"], abc["Percent"]) != ("-10", "0%"):
        bad.append(f"2022-vggnet16 alpha-beta-CROWN: {abc['Score']} {abc['Percent']}")
    tables = len({b for b, _ in want})
    ok = code == 0 and not bad
    record_criterion(2, ok, f"{len(want)} rows over {tables} unscored tables, {len(bad)} mismatches")
    assert ok, bad


def test_criterion_03_alternative_overall(tmp_path):
    code, out, _ = score_counts_via_cli(tmp_path, "vnncomp2023_scored.csv", "--alt")
    with open(out / "overall.csv", newline="") as fh:
        rows = [(r["Tool"], float(r["Score"])) for r in csv.DictReader(fh)]
    exact = scoreboard_from_counts(read_counts_csv(DATA / "vnncomp2023_scored.csv"), alternative=True).overall
    order_ok = [t for t, _ in rows] == [t for t, _ in ALT_TOTALS]
    within = all(abs(float(r.total_exact) - v) <= 0.1 for r, (_, v) in zip(exact, ALT_TOTALS))
    ok = code == 0 and order_ok and within and len(rows) == len(ALT_TOTALS)
    record_criterion(3, ok, "alt ranking " + " > ".join(f"{t} {v:.1f}" for t, v in rows))
    assert ok


def rule_table(status: Status, witness: bool | None, truth: Truth) -> int:
    """Instance points written directly from the rule text."""
    if status is Status.VIOLATED:
        return 10 if witness else -150
    if status is Status.HOLDS:
        return {Truth.HOLDS: 10, Truth.VIOLATED: -150, Truth.UNDETERMINED: 0}[truth]
    return 0


def test_criterion_04_instance_scores():
    verdicts = {None: None, True: cex.CexVerdict(True, cex.Reason.VALID, 0),
                False: cex.CexVerdict(False, cex.Reason.OUTPUT_MISMATCH, max_abs_dev=1.0)}
    combos = list(itertools.product(Status, verdicts, Truth))
    fails = 0
    for status, w, truth in combos:
        r = InstanceRecord("b", "i", "t", status, 1.0, verdicts[w])
        fails += score_instance(r, truth) != rule_table(status, w, truth)
    rng = np.random.default_rng(4)
    statuses, truths, wits = list(Status), list(Truth), [None, True, False]
    n = 100_000
    values = set()
    for s, t, w in zip(rng.integers(0, 5, n), rng.integers(0, 3, n), rng.integers(0, 3, n)):
        r = InstanceRecord("b", "i", "t", statuses[s], 1.0, verdicts[wits[w]])
        v = score_instance(r, truths[t])
        values.add(v)
        fails += v != rule_table(statuses[s], wits[w], truths[t])
    ok = fails == 0 and values <= {10, 0, -150}
    record_criterion(4, ok, f"{len(combos)} exhaustive + {n} random pairs, {fails} disagreements")
    assert ok


def test_criterion_05_cex_metamorphic():
    rng = np.random.default_rng(55)
    changed = implications = 0
    for _ in range(1000):
        w, b = fixtures.random_mlp(rng, (2, 5, 2))
        net = load_network(fixtures.make_mlp(w, b))
        thr = float(np.round(rng.uniform(-1, 1), 3))
        spec = specfmt.parse_vnnlib(fixtures.box_property([-1, -1], [1, 1], 2,
                                                          [[f"(>= Y_0 {thr!r})"], ["(>= Y_1 Y_0)"]]))
        x = rng.uniform(-1.1, 1.1, 2)
        y = infer_batch(net, x[None]).reshape(-1).astype(np.float64)
        base = Counterexample({0: float(x[0]), 1: float(x[1])}, {0: float(y[0]), 1: float(y[1])})
        ref = cex.validate(base, spec, net, Mode.DISCARD_OUTPUTS)
        variants = [
            Counterexample(base.inputs, {j: v + rng.normal(0, 10) for j, v in base.outputs.items()}),
            Counterexample(base.inputs, {0: base.outputs[0]}),
            Counterexample(base.inputs, None),
            Counterexample(base.inputs, {0: float(rng.normal(0, 1e3)), 1: float("nan")}),
        ]
        for v in [base] + variants:
            changed += cex.validate(v, spec, net, Mode.DISCARD_OUTPUTS) != ref
            pen = cex.validate(v, spec, net, Mode.PENALIZE_OUTPUTS)
            implications += pen.valid and not ref.valid
    ok = changed == 0 and implications == 0
    record_criterion(5, ok, f"1000 fixtures x 5 output variants: {changed} discard-mode changes, "
                            f"{implications} penalize-valid-but-discard-invalid")
    assert ok


def test_criterion_06_parser():
    rng = np.random.default_rng(66)
    disagreements = trees = 0
    for _ in range(500):
        t = oracles.random_tree(rng, 2, 2, depth=int(rng.integers(1, 6)), max_kids=3)
        if len(oracles.brute_force_dnf(t)) > 4096:
            t = oracles.random_tree(rng, 2, 2, depth=3)
        spec = specfmt.parse_vnnlib(oracles.tree_vnnlib(t, 2, 2))
        env_x, env_y = rng.uniform(-2.5, 2.5, (2, 10_000)), rng.uniform(-2.5, 2.5, (2, 10_000))
        env = {"X_0": env_x[0], "X_1": env_x[1], "Y_0": env_y[0], "Y_1": env_y[1]}
        disagreements += int(np.sum(oracles.eval_tree_vec(t, env) != oracles.eval_cases_vec(spec.cases, env)))
        # spot-check the package's own scalar evaluator on a few assignments
        for k in rng.integers(0, 10_000, 5):
            x, y = env_x[:, k], env_y[:, k]
            disagreements += (spec.satisfied_case(x, y) is not None) != oracles.eval_tree(t, {
                "X_0": x[0], "X_1": x[1], "Y_0": y[0], "Y_1": y[1]})
        trees += 1
    unstable = [p.name for p in CORPUS
                if specfmt.parse_vnnlib(specfmt.serialize_specification(specfmt.load_vnnlib(p)))
                != specfmt.load_vnnlib(p)]
    ok = disagreements == 0 and not unstable and trees == 500 and len(CORPUS) > 0
    record_criterion(6, ok, f"{trees} trees x 10^4 assignments: {disagreements} disagreements; "
                            f"round-trip stable on {len(CORPUS) - len(unstable)}/{len(CORPUS)} corpus files")
    assert ok


def test_criterion_07_inference_oracle():
    rng = np.random.default_rng(77)
    # relative to max(|ref|, 1): outputs near zero come from cancellation, where
    # float32 rounding makes a purely elementwise ratio meaningless
    worst = pure = 0.0
    for k in range(20):
        sizes = [int(rng.integers(2, 12))] + [int(rng.integers(4, 40)) for _ in range(2)] + [int(rng.integers(1, 8))]
        act = ["Relu", "Tanh", "Sigmoid"][k % 3]
        w, b = fixtures.random_mlp(rng, sizes)
        net = load_network(fixtures.make_mlp(w, b, act, use_gemm=bool(k % 2)))
        xs = rng.uniform(-3, 3, (100, sizes[0])).astype(np.float32)
        ys = infer_batch(net, xs).reshape(100, -1)
        for x, y in zip(xs, ys):
            ref = oracles.scalar_mlp(w, b, x, act)
            worst = max(worst, float(np.max(np.abs(y - ref) / np.maximum(np.abs(ref), 1.0))))
            pure = max(pure, float(np.max(np.abs(y - ref) / np.maximum(np.abs(ref), 1e-3))))
    ok = worst <= 1e-4
    record_criterion(7, ok, f"20 MLPs x 100 inputs, max relative deviation {worst:.2e} "
                            f"(elementwise with 1e-3 floor: {pure:.2e})")
    assert ok


def test_criterion_08_baseline_soundness(tmp_path):
    rng = np.random.default_rng(88)
    t0 = time.perf_counter()
    rejected = contradicted = escaped = 0
    tally = {}
    for k in range(100):
        inst = tiny_instance(rng)
        res = baseline.verify_specification(inst.net, inst.spec, Budget(max_nodes=5000, time_limit_s=10))
        tally[res.verdict.value] = tally.get(res.verdict.value, 0) + 1
        if res.verdict is Verdict.VIOLATED:
            d = tmp_path / f"i{k}"
            d.mkdir()
            onnx.save(fixtures.make_mlp(inst.weights, inst.biases), str(d / "n.onnx"))
            (d / "p.vnnlib").write_text(specfmt.serialize_specification(inst.spec))
            (d / "w.counterexample").write_text(cex.serialize_counterexample(res.witness))
            rejected += cli.main(["cex", "check", str(d / "n.onnx"), str(d / "p.vnnlib"),
                                  str(d / "w.counterexample")]) != 0
        if (inst.grid == "violated" and res.verdict is Verdict.HOLDS) or \
                (inst.grid == "holds" and res.verdict is Verdict.VIOLATED):
            contradicted += 1
        bounds = baseline.ibp_forward(inst.net, IntervalVector(inst.lower, inst.upper))
        ys = infer_batch(inst.net, rng.uniform(inst.lower, inst.upper, (10_000, len(inst.lower))))
        ys = ys.reshape(10_000, -1)
        escaped += int(np.sum((ys < bounds.lower) | (ys > bounds.upper)))
    elapsed = time.perf_counter() - t0
    ok = rejected == 0 and contradicted == 0 and escaped == 0 and elapsed < 300
    record_criterion(8, ok, f"100 tiny instances {tally}: {rejected} rejected witnesses, "
                            f"{contradicted} grid contradictions, {escaped} samples outside IBP, {elapsed:.1f} s")
    assert ok


def test_criterion_09_runner_timing(tmp_path):
    onnx_p, spec_p = fixtures.trivial_instance(tmp_path / "inst")
    # (a) a tool that ignores SIGTERM must be gone by timeout + grace
    stubborn = tmp_path / "stubborn.py"
    stubborn.write_text("import signal, time\nsignal.signal(signal.SIGTERM, signal.SIG_IGN)\ntime.sleep(120)\n")
    slow = runner.ToolAdapter("stubborn", f"{{python}} {stubborn}")
    inst = runner.Instance(onnx_p, spec_p, 1.0)
    t0 = time.monotonic()
    rec = runner.run_instance(slow, inst, tmp_path / "w1")
    killed_after = time.monotonic() - t0
    killed_ok = rec.status is Status.TIMEOUT and killed_after <= inst.timeout_s + runner.GRACE_S + 0.5

    # (b) overhead = min runtime over all rows, trivial probe included; a tool with a
    # fixed 1.2 s startup finishing 0.8 s past its 2 s timeout is kept alive and re-admitted
    tool = tmp_path / "startup.py"
    tool.write_text(textwrap.dedent("""
        import sys, time
        time.sleep(1.2)
        if "late" in sys.argv[2]:
            time.sleep(1.6)
        open(sys.argv[4], "w").write("holds\\n")
        """))
    adapter = runner.ToolAdapter("startup", f"{{python}} {tool} {{onnx}} {{vnnlib}} {{timeout}} "
                                            "{result_out} {cex_out}")
    bench = tmp_path / "bench"
    bench.mkdir()
    shutil.copy(onnx_p, bench / "n.onnx")
    for name in ("early", "late"):
        shutil.copy(spec_p, bench / f"{name}.vnnlib")
    (bench / "instances.csv").write_text("n.onnx,early.vnnlib,2\nn.onnx,late.vnnlib,2\n")
    csv_path, overhead = runner.run_benchmark(adapter, runner.load_manifest(bench / "instances.csv"), tmp_path / "o")
    rows = read_results_csv(csv_path)
    overhead_ok = (overhead == pytest.approx(min(r.runtime_s for r in rows), abs=1e-6)
                   and rows[0].benchmark == "_trivial" and overhead >= 1.0)
    late = next(r for r in rows if "late" in r.instance)
    readmitted = apply_overhead([late], overhead)[0].status is Status.HOLDS and late.runtime_s > 2.0

    # (c) the literal case: 117 s under a 116 s cap
    r117 = InstanceRecord("b", "i", "t", Status.HOLDS, 117.0, timeout_s=116.0)
    literal = (apply_overhead([r117], 1.0)[0].status is Status.HOLDS
               and apply_overhead([r117], 0.9)[0].status is Status.TIMEOUT)
    ok = killed_ok and overhead_ok and readmitted and literal
    record_criterion(9, ok, f"SIGTERM-ignoring tool gone after {killed_after:.2f} s (limit "
                            f"{inst.timeout_s + runner.GRACE_S:.0f} s); overhead {overhead:.3f} s = min of "
                            f"{len(rows)} rows; late run {late.runtime_s:.2f} s re-admitted: {readmitted}; "
                            f"117/116 rule: {literal}")
    assert ok


def test_criterion_10_end_to_end(tmp_path):
    manifest = fixtures.write_acasxu_like(tmp_path / "acasxu_like", n_instances=12)
    with open(manifest) as fh:
        timeouts = {float(r[2]) for r in csv.reader(fh)}
    out = tmp_path / "run"
    assert cli.main(["run", "--manifest", str(manifest), "--adapter", "baseline", "--out", str(out)]) == 0
    assert cli.main(["score", "--results", str(out / "results"), "--out", str(tmp_path / "report")]) == 0
    with open(tmp_path / "report" / "tables" / "acasxu_like.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    with open(tmp_path / "report" / "cactus" / "acasxu_like.csv", newline="") as fh:
        cactus = list(csv.DictReader(fh))
    (row,) = table
    points = sum(1 for r in cactus if r["tool"] == "baseline")
    solved = int(row["Verified"]) + int(row["Falsified"])
    complete = list(row) == ["#", "Tool", "Verified", "Falsified", "Fastest", "Penalty", "Score", "Percent"]
    ok = complete and points == solved and solved > 0 and timeouts == {116.0} and \
        (tmp_path / "report" / "overall.md").exists()
    record_criterion(10, ok, f"12 instances: verified {row['Verified']}, falsified {row['Falsified']}, "
                             f"penalties {row['Penalty']}, score {row['Score']}; cactus points {points}")
    assert ok
