"""Minimal float32 ONNX interpreter for fully connected networks.

This is the adjudication oracle for counterexamples: results must be
bit-reproducible, so matrix products accumulate in float32 one term at a
time, left to right, instead of going through BLAS.

Internally every dynamic value carries an extra leading batch axis; a single
``infer`` call is a batch of one.  Values derived only from initializers are
folded into constants at load time.
"""
from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import onnx
from onnx import numpy_helper

SUPPORTED_OPS = frozenset({
    "MatMul", "Gemm", "Add", "Sub", "Mul", "Div", "Relu", "Sigmoid", "Tanh",
    "Flatten", "Reshape", "Transpose", "Concat", "Slice", "Constant",
})


class OnnxError(ValueError):
    pass


class UnsupportedOperator(OnnxError):
    def __init__(self, op: str, detail: str = ""):
        self.op = op
        super().__init__(f"unsupported operator {op!r}" + (f": {detail}" if detail else ""))


class ShapeInferenceFailure(OnnxError):
    pass


class MalformedModel(OnnxError):
    pass


class ShapeMismatch(OnnxError):
    pass


@dataclass(frozen=True)
class Node:
    op_type: str
    name: str
    inputs: tuple[str, ...]
    output: str
    attrs: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Network:
    input_name: str
    input_shape: tuple[int, ...]
    output_name: str
    output_shape: tuple[int, ...]
    nodes: tuple[Node, ...]
    initializers: Mapping[str, np.ndarray]
    shapes: Mapping[str, tuple[int, ...]]
    opset: int = 13

    @property
    def num_inputs(self) -> int:
        return math.prod(self.input_shape)

    @property
    def num_outputs(self) -> int:
        return math.prod(self.output_shape)

    @property
    def parameter_count(self) -> int:
        return sum(a.size for a in self.initializers.values() if a.dtype.kind == "f")

    def op_counts(self) -> dict[str, int]:
        return dict(collections.Counter(n.op_type for n in self.nodes))


class Value(NamedTuple):
    """Runtime tensor; ``batched`` means axis 0 is the batch axis."""
    array: np.ndarray
    batched: bool

    @property
    def rank(self) -> int:
        return self.array.ndim - int(self.batched)


# --------------------------------------------------------------------------
# kernels


def matmul_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` over the last two axes, summing ``k`` terms left to right in float32."""
    k = a.shape[-1]
    if b.shape[-2] != k:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    acc = a[..., :, 0:1] * b[..., 0:1, :]
    for i in range(1, k):
        acc = acc + a[..., :, i:i + 1] * b[..., i:i + 1, :]
    return acc


def _align(args: Sequence[Value]) -> list[Value]:
    """Pad batched values with unit axes so ranks line up for broadcasting."""
    target = max(v.rank for v in args)
    out = []
    for v in args:
        if v.batched and v.rank < target:
            arr = v.array.reshape(v.array.shape[:1] + (1,) * (target - v.rank) + v.array.shape[1:])
            out.append(Value(arr, True))
        else:
            out.append(v)
    return out


def _norm_axis(axis: int, rank: int) -> int:
    if not -rank <= axis < max(rank, 1) + (1 if rank == 0 else 0):
        raise ValueError(f"axis {axis} out of range for rank {rank}")
    return axis + rank if axis < 0 else axis


def _k_matmul(node, args):
    a, b = args
    arr_a, arr_b = a.array, b.array
    rank_a, rank_b = max(a.rank, 2), max(b.rank, 2)
    if a.rank == 1:
        arr_a = arr_a[..., None, :]
    if b.rank == 1:
        arr_b = arr_b[..., :, None]
    # keep the batch axis out of the other operand's stacking dims
    if a.batched and rank_a < rank_b:
        arr_a = arr_a.reshape(arr_a.shape[:1] + (1,) * (rank_b - rank_a) + arr_a.shape[1:])
    if b.batched and rank_b < rank_a:
        arr_b = arr_b.reshape(arr_b.shape[:1] + (1,) * (rank_a - rank_b) + arr_b.shape[1:])
    out = matmul_f32(arr_a, arr_b)
    if b.rank == 1:
        out = out[..., 0]
    if a.rank == 1:
        out = out[..., 0, :] if b.rank != 1 else out[..., 0]
    return Value(out, a.batched or b.batched)


def _swap_last(v: Value) -> Value:
    return Value(np.swapaxes(v.array, -1, -2), v.batched)


def _k_gemm(node, args):
    a, b = args[0], args[1]
    if a.rank != 2 or b.rank != 2:
        raise ValueError("Gemm operands must be 2-D")
    if node.attrs.get("transA", 0):
        a = _swap_last(a)
    if node.attrs.get("transB", 0):
        b = _swap_last(b)
    acc = matmul_f32(a.array, b.array)
    alpha = np.float32(node.attrs.get("alpha", 1.0))
    beta = np.float32(node.attrs.get("beta", 1.0))
    if alpha != 1.0:
        acc = acc * alpha
    batched = a.batched or b.batched
    if len(args) > 2 and args[2] is not None:
        c = args[2]
        carr = c.array if beta == 1.0 else c.array * beta
        if c.batched:
            acc, carr = _align([Value(acc, batched), Value(carr, True)])
            acc, carr = acc.array, carr.array
        acc = acc + carr
        batched = batched or c.batched
    return Value(acc, batched)


def _elementwise(fn):
    def kernel(node, args):
        vals = _align(args)
        return Value(fn(*(v.array for v in vals)), any(v.batched for v in vals))
    return kernel


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return (np.float32(1.0) / (np.float32(1.0) + np.exp(-x))).astype(np.float32)


def _k_flatten(node, args):
    (v,) = args
    shape = v.array.shape[1:] if v.batched else v.array.shape
    axis = _norm_axis(node.attrs.get("axis", 1), len(shape)) if shape else 0
    new = (math.prod(shape[:axis]), math.prod(shape[axis:]))
    return Value(v.array.reshape((v.array.shape[0],) + new if v.batched else new), v.batched)


def _k_reshape(node, args):
    v, shape_v = args[0], args[1]
    if shape_v.batched:
        raise UnsupportedOperator("Reshape", "target shape must be constant")
    cur = v.array.shape[1:] if v.batched else v.array.shape
    target = [int(s) for s in shape_v.array.reshape(-1)]
    allowzero = node.attrs.get("allowzero", 0)
    for i, s in enumerate(target):
        if s == 0 and not allowzero:
            target[i] = cur[i]
    if target.count(-1) > 1:
        raise ValueError("Reshape with more than one -1")
    if -1 in target:
        known = math.prod(s for s in target if s != -1)
        target[target.index(-1)] = math.prod(cur) // known if known else 0
    if math.prod(target) != math.prod(cur):
        raise ValueError(f"cannot reshape {tuple(cur)} to {tuple(target)}")
    lead = (v.array.shape[0],) if v.batched else ()
    return Value(v.array.reshape(lead + tuple(target)), v.batched)


def _k_transpose(node, args):
    (v,) = args
    rank = v.rank
    perm = list(node.attrs.get("perm", range(rank - 1, -1, -1)))
    if sorted(perm) != list(range(rank)):
        raise ValueError(f"bad permutation {perm} for rank {rank}")
    if v.batched:
        perm = [0] + [p + 1 for p in perm]
    return Value(np.transpose(v.array, perm), v.batched)


def _k_concat(node, args):
    vals = _align(args)
    rank = vals[0].rank
    axis = _norm_axis(node.attrs["axis"], rank)
    if any(v.batched for v in vals):
        n = next(v.array.shape[0] for v in vals if v.batched)
        arrs = [v.array if v.batched else np.broadcast_to(v.array, (n,) + v.array.shape) for v in vals]
        return Value(np.concatenate(arrs, axis=axis + 1), True)
    return Value(np.concatenate([v.array for v in vals], axis=axis), False)


def _const_ints(v: Value | None, what: str) -> list[int] | None:
    if v is None:
        return None
    if v.batched:
        raise UnsupportedOperator("Slice", f"{what} must be constant")
    return [int(s) for s in v.array.reshape(-1)]


def _k_slice(node, args):
    v = args[0]
    if len(args) > 1:
        starts = _const_ints(args[1], "starts")
        ends = _const_ints(args[2], "ends")
        axes = _const_ints(args[3] if len(args) > 3 else None, "axes")
        steps = _const_ints(args[4] if len(args) > 4 else None, "steps")
    else:
        starts, ends = list(node.attrs["starts"]), list(node.attrs["ends"])
        axes, steps = node.attrs.get("axes"), None
    rank = v.rank
    axes = list(range(len(starts))) if axes is None else [_norm_axis(a, rank) for a in axes]
    steps = [1] * len(starts) if steps is None else steps
    index = [slice(None)] * v.array.ndim
    off = int(v.batched)
    for ax, s, e, st in zip(axes, starts, ends, steps):
        if st == 0:
            raise ValueError("Slice step cannot be 0")
        dim = v.array.shape[ax + off]
        # clamp the way ONNX does; python slicing already clamps positive overflow
        if st < 0 and e < -dim:
            e = None
        index[ax + off] = slice(s, e, st)
    return Value(v.array[tuple(index)], v.batched)


KERNELS = {
    "MatMul": _k_matmul,
    "Gemm": _k_gemm,
    "Add": _elementwise(np.add),
    "Sub": _elementwise(np.subtract),
    "Mul": _elementwise(np.multiply),
    "Div": _elementwise(np.divide),
    "Relu": _elementwise(lambda x: np.maximum(x, np.float32(0.0))),
    "Sigmoid": _elementwise(_sigmoid),
    "Tanh": _elementwise(np.tanh),
    "Flatten": _k_flatten,
    "Reshape": _k_reshape,
    "Transpose": _k_transpose,
    "Concat": _k_concat,
    "Slice": _k_slice,
}

STRUCTURAL_OPS = frozenset({"Flatten", "Reshape", "Transpose", "Concat", "Slice"})


def run_node(node: Node, args: Sequence[Value | None]) -> Value:
    out = KERNELS[node.op_type](node, list(args))
    if out.array.dtype.kind == "f" and out.array.dtype != np.float32:
        out = Value(out.array.astype(np.float32), out.batched)
    return out


def node_args(net: Network, node: Node, env: Mapping[str, Value]) -> list[Value | None]:
    args = []
    for name in node.inputs:
        if name == "":
            args.append(None)
        elif name in env:
            args.append(env[name])
        else:
            args.append(Value(net.initializers[name], False))
    return args


# --------------------------------------------------------------------------
# loading


def _attrs(proto_node) -> dict:
    out = {}
    for a in proto_node.attribute:
        val = onnx.helper.get_attribute_value(a)
        if isinstance(val, onnx.TensorProto):
            val = numpy_helper.to_array(val)
        elif isinstance(val, bytes):
            val = val.decode()
        elif isinstance(val, list):
            val = tuple(val)
        out[a.name] = val
    return out


def _constant_value(attrs: dict) -> np.ndarray:
    if "value" in attrs:
        return np.asarray(attrs["value"])
    if "value_float" in attrs:
        return np.asarray(attrs["value_float"], dtype=np.float32)
    if "value_floats" in attrs:
        return np.asarray(attrs["value_floats"], dtype=np.float32)
    if "value_int" in attrs:
        return np.asarray(attrs["value_int"], dtype=np.int64)
    if "value_ints" in attrs:
        return np.asarray(attrs["value_ints"], dtype=np.int64)
    raise UnsupportedOperator("Constant", f"attribute set {sorted(attrs)} not supported")


def _as_const(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr)
    if arr.dtype.kind == "f":
        arr = arr.astype(np.float32)
    arr.setflags(write=False)
    return arr


def _static_shape(value_info, what: str) -> tuple[int, ...]:
    dims = value_info.type.tensor_type.shape.dim
    shape = []
    for i, d in enumerate(dims):
        if d.HasField("dim_value") and d.dim_value > 0:
            shape.append(d.dim_value)
        elif i == 0:
            # symbolic or zero leading dim is the batch axis
            shape.append(1)
        else:
            raise ShapeInferenceFailure(f"{what} {value_info.name!r} has a dynamic dimension at axis {i}")
    return tuple(shape)


def load_network(source) -> Network:
    """Load an ONNX model from a path, raw bytes, or an ``onnx.ModelProto``."""
    if isinstance(source, onnx.ModelProto):
        model = source
    else:
        try:
            if isinstance(source, (bytes, bytearray)):
                model = onnx.load_from_string(bytes(source))
            else:
                model = onnx.load(str(Path(source)))
        except FileNotFoundError:
            raise
        except Exception as e:  # protobuf decode errors have no common base
            raise MalformedModel(f"cannot decode ONNX model: {e}") from None
    graph = model.graph
    opset = next((o.version for o in model.opset_import if o.domain in ("", "ai.onnx")), 13)

    consts: dict[str, np.ndarray] = {t.name: _as_const(numpy_helper.to_array(t)) for t in graph.initializer}
    inputs = [i for i in graph.input if i.name not in consts]
    if len(inputs) != 1:
        raise MalformedModel(f"expected exactly one graph input, found {len(inputs)}")
    if len(graph.output) != 1:
        raise MalformedModel(f"expected exactly one graph output, found {len(graph.output)}")
    input_name = inputs[0].name
    input_shape = _static_shape(inputs[0], "input")
    output_name = graph.output[0].name

    dynamic: set[str] = {input_name}
    nodes: list[Node] = []
    for i, pn in enumerate(graph.node):
        op = pn.op_type
        if pn.domain not in ("", "ai.onnx") or op not in SUPPORTED_OPS:
            raise UnsupportedOperator(op)
        if len(pn.output) != 1:
            raise MalformedModel(f"node {pn.name or i} ({op}) has {len(pn.output)} outputs")
        attrs = _attrs(pn)
        out_name = pn.output[0]
        if op == "Constant":
            consts[out_name] = _as_const(_constant_value(attrs))
            continue
        for name in pn.input:
            if name and name not in consts and name not in dynamic:
                raise MalformedModel(f"node {pn.name or i} ({op}) reads undefined tensor {name!r}")
        node = Node(op, pn.name or f"{op}_{i}", tuple(pn.input), out_name, MappingProxyType(attrs))
        live = [n for n in pn.input if n in dynamic]
        if not live:
            args = [Value(consts[n], False) if n else None for n in node.inputs]
            try:
                consts[out_name] = _as_const(run_node(node, args).array)
            except (ValueError, IndexError) as e:
                raise ShapeInferenceFailure(f"node {node.name} ({op}): {e}") from None
            continue
        if op in ("Mul", "Div") and len(live) > 1:
            raise UnsupportedOperator(op, "both operands depend on the network input")
        if op == "Div" and pn.input[1] in dynamic:
            raise UnsupportedOperator(op, "divisor depends on the network input")
        dynamic.add(out_name)
        nodes.append(node)

    if output_name not in dynamic:
        raise MalformedModel("graph output does not depend on the graph input")
    used = {n for node in nodes for n in node.inputs}
    inits = {k: v for k, v in consts.items() if k in used}

    # dry run to infer and check every intermediate shape
    shapes = {input_name: input_shape}
    env = {input_name: Value(np.zeros((1,) + input_shape, dtype=np.float32), True)}
    proto_net = Network(input_name, input_shape, output_name, (), tuple(nodes),
                        MappingProxyType(inits), {}, opset)
    for node in nodes:
        try:
            out = run_node(node, node_args(proto_net, node, env))
        except (ValueError, IndexError, KeyError) as e:
            raise ShapeInferenceFailure(f"node {node.name} ({node.op_type}): {e}") from None
        env[node.output] = out
        shapes[node.output] = tuple(out.array.shape[1:]) if out.batched else tuple(out.array.shape)
    output_shape = shapes[output_name]
    declared = graph.output[0].type.tensor_type.shape.dim
    if declared:
        want = [d.dim_value if d.HasField("dim_value") else None for d in declared]
        if len(want) != len(output_shape) or any(w not in (None, 0, s) for w, s in zip(want, output_shape)):
            raise ShapeInferenceFailure(f"declared output shape {want} does not match inferred {list(output_shape)}")
    return Network(input_name, input_shape, output_name, output_shape, tuple(nodes),
                   MappingProxyType(inits), MappingProxyType(shapes), opset)


# --------------------------------------------------------------------------
# inference


def _execute(net: Network, xb: np.ndarray) -> np.ndarray:
    env = {net.input_name: Value(xb, True)}
    for node in net.nodes:
        env[node.output] = run_node(node, node_args(net, node, env))
    return env[net.output_name].array


def infer_batch(net: Network, xs) -> np.ndarray:
    """Evaluate ``len(xs)`` inputs at once; returns shape ``(N, *output_shape)``."""
    xs = np.asarray(xs, dtype=np.float32)
    if xs.ndim == 0 or math.prod(xs.shape[1:]) != net.num_inputs:
        raise ShapeMismatch(f"batch of shape {xs.shape} does not hold inputs of shape {net.input_shape}")
    xb = np.ascontiguousarray(xs.reshape((xs.shape[0],) + net.input_shape))
    return _execute(net, xb).reshape((xs.shape[0],) + net.output_shape)


def infer(net: Network, x) -> np.ndarray:
    """Run the network on one input; a flat vector of the right size is accepted."""
    x = np.asarray(x, dtype=np.float32)
    if x.size != net.num_inputs:
        raise ShapeMismatch(f"input has {x.size} elements, network expects {net.num_inputs} {net.input_shape}")
    return infer_batch(net, x.reshape(1, -1))[0]


def describe(net: Network) -> dict:
    return {
        "input": {"name": net.input_name, "shape": list(net.input_shape)},
        "output": {"name": net.output_name, "shape": list(net.output_shape)},
        "opset": net.opset,
        "nodes": [{"op": n.op_type, "name": n.name, "output_shape": list(net.shapes[n.output])} for n in net.nodes],
        "op_counts": net.op_counts(),
        "parameter_count": net.parameter_count,
    }
