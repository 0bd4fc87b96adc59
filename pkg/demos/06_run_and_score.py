"""The whole pipeline on a small synthetic benchmark.

The runner executes the baseline tool on every instance (after a trivial
probe instance that measures startup overhead), writes one results CSV
per tool, and the scorer turns those into tables and cactus data.
Equivalent shell session:

    vnncomp run --manifest DIR/instances.csv --adapter baseline --out OUT
    vnncomp score --results OUT/results --out REPORT
"""
import sys
import tempfile
from pathlib import Path

from vnncomp import cli
from vnncomp.fixtures import write_acasxu_like

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    manifest = write_acasxu_like(tmp / "acasxu_like", n_instances=6)
    if cli.main(["run", "--manifest", str(manifest), "--adapter", "baseline", "--out", str(tmp / "run")]):
        sys.exit("run failed")
    print((tmp / "run" / "results" / "baseline.csv").read_text())
    cli.main(["score", "--results", str(tmp / "run" / "results"), "--out", str(tmp / "report")])
    print((tmp / "report" / "cactus" / "acasxu_like.csv").read_text())
