"""Builders for small synthetic benchmark files (ONNX networks, VNN-LIB properties).

Real competition networks are not shipped; these produce models and
properties in the same file formats so every stage of the harness can run.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

ACASXU_LAYERS = (5, 50, 50, 50, 50, 50, 50, 5)
ACASXU_TIMEOUT = 116.0


def make_mlp(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
             activation: str | Sequence[str] = "Relu", *, use_gemm: bool = False,
             batch_dim: bool = True, opset: int = 13) -> onnx.ModelProto:
    """Fully connected network ``x -> act(x W0 + b0) -> ... -> x Wn + bn``.

    ``weights[i]`` has shape ``(fan_in, fan_out)``.  No activation follows
    the last layer.  With ``use_gemm`` the layers are Gemm nodes with
    ``transB=1`` (PyTorch export style) instead of MatMul + Add.
    """
    n_layers = len(weights)
    acts = [activation] * (n_layers - 1) if isinstance(activation, str) else list(activation)
    lead = [1] if batch_dim else []
    inits, nodes = [], []
    cur = "input"
    for i, (w, b) in enumerate(zip(weights, biases)):
        w = np.asarray(w, dtype=np.float32)
        b = np.asarray(b, dtype=np.float32)
        if use_gemm:
            inits += [numpy_helper.from_array(np.ascontiguousarray(w.T), f"W{i}"),
                      numpy_helper.from_array(b, f"B{i}")]
            nodes.append(helper.make_node("Gemm", [cur, f"W{i}", f"B{i}"], [f"gemm{i}"], transB=1))
            cur = f"gemm{i}"
        else:
            inits += [numpy_helper.from_array(w, f"W{i}"), numpy_helper.from_array(b, f"B{i}")]
            nodes.append(helper.make_node("MatMul", [cur, f"W{i}"], [f"mm{i}"]))
            nodes.append(helper.make_node("Add", [f"mm{i}", f"B{i}"], [f"add{i}"]))
            cur = f"add{i}"
        if i < n_layers - 1 and acts[i]:
            nodes.append(helper.make_node(acts[i], [cur], [f"act{i}"]))
            cur = f"act{i}"
    nodes[-1].output[0] = "output"
    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, lead + [weights[0].shape[0]])
    y = helper.make_tensor_value_info("output", TensorProto.FLOAT, lead + [weights[-1].shape[1]])
    graph = helper.make_graph(nodes, "mlp", [x], [y], inits)
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", opset)])
    model.ir_version = 8
    return model


def random_mlp(rng: np.random.Generator, sizes: Sequence[int], scale: float = 1.0):
    """Random weights/biases with He-style scaling; returns ``(weights, biases)``."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append((rng.standard_normal((fan_in, fan_out)) * scale * np.sqrt(2.0 / fan_in)).astype(np.float32))
        biases.append((rng.standard_normal(fan_out) * 0.1 * scale).astype(np.float32))
    return weights, biases


def identity_network(n: int = 1) -> onnx.ModelProto:
    return make_mlp([np.eye(n, dtype=np.float32)], [np.zeros(n, dtype=np.float32)])


def box_property(lower: Sequence[float], upper: Sequence[float], num_outputs: int,
                 output_cases: Sequence[Sequence[str]], comment: str | None = None) -> str:
    """VNN-LIB text: an input box plus a disjunction of output-constraint conjunctions.

    ``output_cases`` holds raw SMT atoms such as ``"(>= Y_0 3.5)"``.
    """
    lines = [f"; {comment}"] if comment else []
    lines += [f"(declare-const X_{i} Real)" for i in range(len(lower))]
    lines += [f"(declare-const Y_{j} Real)" for j in range(num_outputs)]
    for i, (lo, hi) in enumerate(zip(lower, upper)):
        lines.append(f"(assert (<= X_{i} {float(hi)!r}))")
        lines.append(f"(assert (>= X_{i} {float(lo)!r}))")
    if len(output_cases) == 1:
        lines.append(f"(assert (and {' '.join(output_cases[0])}))")
    else:
        ands = " ".join(f"(and {' '.join(c)})" for c in output_cases)
        lines.append(f"(assert (or {ands}))")
    return "\n".join(lines) + "\n"


def trivial_instance(directory) -> tuple[Path, Path]:
    """1x1 identity network with a property that trivially holds (overhead probe)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    onnx_path = directory / "trivial_identity.onnx"
    spec_path = directory / "trivial_holds.vnnlib"
    onnx.save(identity_network(1), str(onnx_path))
    spec_path.write_text(box_property([0.0], [1.0], 1, [["(>= Y_0 2.0)"]], "identity net never reaches 2"))
    return onnx_path, spec_path


def write_acasxu_like(directory, n_instances: int = 10, seed: int = 0,
                      timeout: float = ACASXU_TIMEOUT, n_networks: int = 2,
                      split_depth: int = 5) -> Path:
    """Small benchmark with the ACAS Xu layout: 5 inputs, 6x50 ReLU layers, 5 outputs.

    Properties ask whether output 0 can reach a threshold over a random
    input box.  Odd instances use a threshold inside the sampled output
    range (violated).  Even instances use a threshold just above the
    interval bound of output 0 after bisecting the box ``split_depth``
    times, so they provably hold but need some splitting to show it.
    Returns the manifest path.
    """
    from .baseline import BabNode, IntervalVector, ibp_forward
    from .onnx_rt import load_network

    rng = np.random.default_rng(seed)
    directory = Path(directory)
    (directory / "onnx").mkdir(parents=True, exist_ok=True)
    (directory / "vnnlib").mkdir(parents=True, exist_ok=True)
    nets = []
    for k in range(n_networks):
        w, b = random_mlp(rng, ACASXU_LAYERS, scale=0.8)
        path = directory / "onnx" / f"acasxu_like_{k}.onnx"
        onnx.save(make_mlp(w, b), str(path))
        nets.append((path, w, b, load_network(path)))
    rows = []
    for i in range(n_instances):
        path, w, b, net = nets[i % n_networks]
        center = rng.uniform(-1, 1, 5)
        radius = rng.uniform(0.02, 0.1)
        lo, hi = center - radius, center + radius
        xs = rng.uniform(lo, hi, (512, 5))
        h = xs
        for j, (wj, bj) in enumerate(zip(w, b)):
            h = h @ wj + bj
            if j < len(w) - 1:
                h = np.maximum(h, 0)
        ymin, ymax = h[:, 0].min(), h[:, 0].max()
        span = max(ymax - ymin, 1e-3)
        if i % 2:
            thr = ymax - 0.25 * span
        else:
            leaves = [BabNode(IntervalVector(lo, hi))]
            for _ in range(split_depth):
                leaves = [c for node in leaves for c in node.split()]
            top = max(ibp_forward(net, node.box).upper[0] for node in leaves)
            thr = top + 1e-3 * (1.0 + abs(top))
        spec = box_property(lo, hi, 5, [[f"(>= Y_0 {float(thr)!r})"]], f"instance {i}")
        spec_path = directory / "vnnlib" / f"prop_{i}.vnnlib"
        spec_path.write_text(spec)
        rows.append((f"onnx/{path.name}", f"vnnlib/{spec_path.name}", timeout))
    manifest = directory / "instances.csv"
    with open(manifest, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return manifest
