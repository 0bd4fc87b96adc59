"""Check counterexamples the way a competition does.

A tool that reports a violation must produce a witness.  The witness
inputs are re-run through the network; the recorded outputs are either
ignored (discard mode) or must match the recomputed ones (penalize mode).
"""
import numpy as np

from vnncomp import cex, fixtures, specfmt
from vnncomp.cex import Mode
from vnncomp.onnx_rt import load_network

# y = 4*x0 + 4*x1 on the unit square; the property is violated when y >= 3.5
net = load_network(fixtures.make_mlp([np.full((2, 1), 4.0, np.float32)], [np.zeros(1, np.float32)]))
spec = specfmt.parse_vnnlib(fixtures.box_property([0, 0], [1, 1], 1, [["(>= Y_0 3.5)"]]))

witnesses = {
    "genuine": "((X_0 0.5) (X_1 0.5) (Y_0 4.0))",
    "wrong recorded output": "((X_0 0.5) (X_1 0.5) (Y_0 9.0))",
    "does not reach 3.5": "((X_0 0.1) (X_1 0.1) (Y_0 0.8))",
    "outside the box": "((X_0 1.5) (X_1 0.5) (Y_0 8.0))",
}
for label, text in witnesses.items():
    w = cex.parse_counterexample(text)
    d = cex.validate(w, spec, net, Mode.DISCARD_OUTPUTS)
    p = cex.validate(w, spec, net, Mode.PENALIZE_OUTPUTS)
    print(f"{label:24s} discard: {d.describe():40s} penalize: {p.describe()}")
