"""Drive verification tools through the prepare/run script interface.

A tool is described by an adapter file (INI)::

    [adapter]
    name = baseline
    prepare =
    run = {python} -m vnncomp.baseline {onnx} {vnnlib} {timeout} {result_out} {cex_out}

    [env]
    OMP_NUM_THREADS = 1

Each instance runs in its own process group.  When the time allowance runs
out the whole group gets SIGTERM, and SIGKILL after a grace period.  The
tool reports through its result file, whose first token is the status word.
"""
from __future__ import annotations

import configparser
import csv
import logging
import math
import os
import shlex
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .scoring import TRIVIAL_BENCHMARK, InstanceRecord, Status, overhead_from_runtimes

log = logging.getLogger(__name__)

BENCHMARK_CAP_S = 6 * 3600.0
GRACE_S = 10.0
POLL_S = 0.2
RESULT_FIELDS = ("benchmark", "instance", "status", "runtime_s", "cex_path", "onnx", "vnnlib", "timeout_s")
PLACEHOLDERS = ("onnx", "vnnlib", "timeout", "result_out", "cex_out", "python")


class RunnerError(Exception):
    pass


class CapExceeded(RunnerError):
    pass


class MissingFile(RunnerError):
    pass


class EmptyManifest(MissingFile):
    pass


class NoSuccessfulRun(RunnerError):
    pass


class AdapterError(RunnerError):
    pass


@dataclass(frozen=True)
class Instance:
    onnx: Path
    vnnlib: Path
    timeout_s: float

    @property
    def instance_id(self) -> str:
        return f"{self.onnx.stem}+{self.vnnlib.stem}"


@dataclass(frozen=True)
class BenchmarkManifest:
    name: str
    instances: tuple[Instance, ...]

    @property
    def total_timeout(self) -> float:
        return sum(i.timeout_s for i in self.instances)


def _is_header(row: Sequence[str]) -> bool:
    try:
        float(row[2])
    except (ValueError, IndexError):
        return True
    return False


def load_manifest(path, name: str | None = None, cap_s: float = BENCHMARK_CAP_S) -> BenchmarkManifest:
    """Read ``onnx,vnnlib,timeout`` rows (optional header); paths are relative to the file."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    base = path.resolve().parent
    instances = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and _is_header(rows[0]):
        rows = rows[1:]
    for line, row in enumerate(rows, 1):
        if len(row) < 3:
            raise RunnerError(f"{path}: row {line} needs onnx,vnnlib,timeout")
        onnx_p, spec_p = (base / row[0].strip()), (base / row[1].strip())
        for p in (onnx_p, spec_p):
            if not p.is_file():
                raise MissingFile(f"{path}: row {line}: no such file {p}")
        timeout = float(row[2])
        if not (timeout > 0 and math.isfinite(timeout)):
            raise RunnerError(f"{path}: row {line}: timeout must be positive")
        instances.append(Instance(onnx_p, spec_p, timeout))
    if not instances:
        raise EmptyManifest(f"manifest has no instances: {path}")
    manifest = BenchmarkManifest(name or base.name or path.stem, tuple(instances))
    if manifest.total_timeout > cap_s:
        raise CapExceeded(f"total timeout {manifest.total_timeout:g} s exceeds the {cap_s:g} s cap")
    return manifest


@dataclass(frozen=True)
class ToolAdapter:
    name: str
    run_cmd: str
    prepare_cmd: str = ""
    env: dict[str, str] = field(default_factory=dict)

    def command(self, template: str, values: dict[str, str]) -> list[str]:
        values = {"python": sys.executable, **values}
        try:
            return [tok.format(**values) for tok in shlex.split(template)]
        except (KeyError, IndexError) as e:
            raise AdapterError(f"unknown placeholder {e} in {template!r}") from None


def load_adapter(path) -> ToolAdapter:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path):
        raise MissingFile(f"adapter file not found: {path}")
    if not cp.has_section("adapter") or not cp.get("adapter", "run", fallback="").strip():
        raise AdapterError(f"{path}: [adapter] section with a run command is required")
    sec = cp["adapter"]
    env = dict(cp["env"]) if cp.has_section("env") else {}
    return ToolAdapter(sec.get("name", Path(path).stem).strip(), sec["run"].strip(),
                       sec.get("prepare", "").strip(), env)


def _terminate_group(proc: subprocess.Popen, grace_s: float) -> None:
    try:
        os.killpg(proc.pid, signal.SIGTERM)
    except ProcessLookupError:
        pass
    try:
        proc.wait(timeout=grace_s)
    except subprocess.TimeoutExpired:
        pass
    # kill the group even if the leader left: grandchildren may linger
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass
    proc.wait()


def _spawn(argv, env, logfile):
    return subprocess.Popen(argv, env={**os.environ, **env}, stdin=subprocess.DEVNULL,
                            stdout=logfile, stderr=subprocess.STDOUT, start_new_session=True)


def read_result_file(path) -> Status:
    """First token of the file must be a status word."""
    text = Path(path).read_text(errors="replace").split()
    if not text:
        raise ValueError("empty result file")
    return Status(text[0].strip().lower())


def run_instance(adapter: ToolAdapter, instance: Instance, workdir, benchmark: str = "",
                 allowance_s: float = 0.0, grace_s: float = GRACE_S, poll_s: float = POLL_S) -> InstanceRecord:
    """Run one instance; the process group is stopped at ``timeout + allowance_s``."""
    workdir = Path(workdir).resolve()
    workdir.mkdir(parents=True, exist_ok=True)
    stem = instance.instance_id
    result_out, cex_out = workdir / f"{stem}.result", workdir / f"{stem}.counterexample"
    for p in (result_out, cex_out):
        p.unlink(missing_ok=True)
    instance = Instance(instance.onnx.resolve(), instance.vnnlib.resolve(), instance.timeout_s)
    values = {"onnx": str(instance.onnx), "vnnlib": str(instance.vnnlib),
              "timeout": f"{instance.timeout_s:g}", "result_out": str(result_out), "cex_out": str(cex_out)}

    def record(status, runtime, cex=None):
        return InstanceRecord(benchmark, stem, adapter.name, status, max(runtime, 0.0),
                              timeout_s=instance.timeout_s, cex_path=cex,
                              onnx=str(instance.onnx), vnnlib=str(instance.vnnlib))

    with open(workdir / f"{stem}.log", "wb") as logfile:
        if adapter.prepare_cmd:
            try:
                prep = _spawn(adapter.command(adapter.prepare_cmd, values), adapter.env, logfile)
                try:
                    code = prep.wait(timeout=max(instance.timeout_s, 60.0))
                except subprocess.TimeoutExpired:
                    _terminate_group(prep, grace_s)
                    code = -1
            except (OSError, AdapterError) as e:
                log.warning("prepare failed for %s: %s", stem, e)
                return record(Status.ERROR, 0.0)
            if code != 0:
                log.warning("prepare exited %s for %s", code, stem)
                return record(Status.ERROR, 0.0)
        try:
            argv = adapter.command(adapter.run_cmd, values)
            start = time.monotonic()
            proc = _spawn(argv, adapter.env, logfile)
        except (OSError, AdapterError) as e:
            log.warning("could not start %s: %s", adapter.name, e)
            return record(Status.ERROR, 0.0)
        deadline = start + instance.timeout_s + allowance_s
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                _terminate_group(proc, grace_s)
                return record(Status.TIMEOUT, time.monotonic() - start)
            try:
                proc.wait(timeout=min(poll_s, remaining))
                break
            except subprocess.TimeoutExpired:
                pass
        runtime = time.monotonic() - start
        try:
            os.killpg(proc.pid, signal.SIGKILL)  # stray children
        except (ProcessLookupError, PermissionError):
            pass

    try:
        status = read_result_file(result_out)
    except (OSError, ValueError) as e:
        log.warning("%s on %s: no usable result file (%s), exit code %s", adapter.name, stem, e, proc.returncode)
        return record(Status.ERROR, runtime)
    cex = str(cex_out) if status is Status.VIOLATED and cex_out.exists() else None
    return record(status, runtime, cex)


def measure_overhead(records: Sequence[InstanceRecord]) -> float:
    """Minimum runtime over every executed instance, trivial probes included."""
    runtimes = [r.runtime_s for r in records if r.status is not Status.ERROR or r.runtime_s > 0]
    if not runtimes:
        raise NoSuccessfulRun("no instance produced a runtime")
    return overhead_from_runtimes(runtimes)


def trivial_instances(directory) -> list[Instance]:
    from .fixtures import trivial_instance

    onnx_p, spec_p = trivial_instance(directory)
    return [Instance(onnx_p, spec_p, 60.0)]


class ResultsWriter:
    """Append-only results CSV, flushed after every row."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.DictWriter(self._fh, RESULT_FIELDS, lineterminator="\n")
        self._w.writeheader()
        self._fh.flush()

    def write(self, r: InstanceRecord) -> None:
        self._w.writerow({"benchmark": r.benchmark, "instance": r.instance, "status": r.status.value,
                          "runtime_s": f"{r.runtime_s:.6f}", "cex_path": r.cex_path or "",
                          "onnx": r.onnx or "", "vnnlib": r.vnnlib or "",
                          "timeout_s": "" if r.timeout_s is None else f"{r.timeout_s:g}"})
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_benchmark(adapter: ToolAdapter, manifest: BenchmarkManifest, outdir,
                  results_csv=None, grace_s: float = GRACE_S, poll_s: float = POLL_S,
                  on_record: Callable[[InstanceRecord], None] | None = None) -> tuple[Path, float]:
    """Run the trivial probe then every instance; returns ``(results csv, overhead)``.

    Results go to ``results_csv`` or ``<outdir>/results/<tool>.csv``; tool
    output files go under ``<outdir>/work``.

    The overhead measured on the probe widens each instance's kill deadline
    so that the later correction can still admit runs just over the timeout.
    """
    outdir = Path(outdir)
    work = outdir / "work" / adapter.name
    csv_path = Path(results_csv) if results_csv else outdir / "results" / f"{adapter.name}.csv"
    records = []
    with ResultsWriter(csv_path) as writer:
        for inst in trivial_instances(work / "_trivial_fixture"):
            r = run_instance(adapter, inst, work / TRIVIAL_BENCHMARK, TRIVIAL_BENCHMARK,
                             grace_s=grace_s, poll_s=poll_s)
            writer.write(r)
            records.append(r)
        allowance = measure_overhead(records) if any(r.runtime_s > 0 for r in records) else 0.0
        for inst in manifest.instances:
            r = run_instance(adapter, inst, work / manifest.name, manifest.name,
                             allowance_s=allowance, grace_s=grace_s, poll_s=poll_s)
            writer.write(r)
            records.append(r)
            log.info("%s %s: %s in %.2f s", adapter.name, r.instance, r.status.value, r.runtime_s)
            if on_record:
                on_record(r)
    return csv_path, measure_overhead(records)


def baseline_adapter(seed: int = 0) -> ToolAdapter:
    """The built-in reference verifier, run through the same script contract."""
    return ToolAdapter("baseline",
                       "{python} -m vnncomp.baseline {onnx} {vnnlib} {timeout} {result_out} {cex_out} "
                       f"--seed {int(seed)}", env={"OMP_NUM_THREADS": "1"})
