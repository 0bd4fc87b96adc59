"""Build a small ReLU network, load it with the built-in interpreter and run it.

The interpreter works in float32 like the runtimes that adjudicate
competition results.  Here it is compared with a plain numpy forward pass.
"""
import numpy as np

from vnncomp import fixtures
from vnncomp.onnx_rt import describe, infer, infer_batch, load_network

rng = np.random.default_rng(0)
weights, biases = fixtures.random_mlp(rng, (5, 50, 50, 5))
net = load_network(fixtures.make_mlp(weights, biases))

info = describe(net)
print("input", info["input"]["shape"], "output", info["output"]["shape"])
print("parameters:", info["parameter_count"], "ops:", net.op_counts())

x = rng.uniform(-1, 1, 5)
print("y =", infer(net, x).ravel())

h = x.astype(np.float64)
for k, (w, b) in enumerate(zip(weights, biases)):
    h = h @ w + b
    if k < len(weights) - 1:
        h = np.maximum(h, 0)
print("float64 numpy reference:", h)

xs = rng.uniform(-1, 1, (1000, 5))
ys = infer_batch(net, xs)
print("batch of", len(xs), "-> shape", ys.shape)
