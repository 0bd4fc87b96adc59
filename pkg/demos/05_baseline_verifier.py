"""Run the reference verifier on one provable and one violated property.

It bounds the network with interval arithmetic, splits the input box when
the bounds are too loose, and samples points to look for violations.
"""
import tempfile
from pathlib import Path

from vnncomp import baseline, cex, specfmt
from vnncomp.fixtures import write_acasxu_like
from vnncomp.onnx_rt import load_network

with tempfile.TemporaryDirectory() as tmp:
    manifest = write_acasxu_like(Path(tmp), n_instances=2)
    for line in manifest.read_text().splitlines():
        onnx_name, spec_name, _ = line.split(",")
        net = load_network(manifest.parent / onnx_name)
        spec = specfmt.load_vnnlib(manifest.parent / spec_name)
        res = baseline.verify_specification(net, spec, baseline.Budget(time_limit_s=30))
        print(f"{spec_name}: {res.verdict.value} after {res.nodes} nodes")
        if res.witness is not None:
            print("  witness:", " ".join(cex.serialize_counterexample(res.witness).split()))
            print("  check:", cex.validate(res.witness, spec, net).describe())
