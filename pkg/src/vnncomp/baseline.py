"""Reference verifier: interval bound propagation + input-splitting branch and bound.

It is deliberately simple.  Each branch-and-bound node is a sub-box of a
case's input box.  A node is discarded when interval bounds show some
constraint of the case cannot hold anywhere in it; otherwise a sampling
falsifier looks for a concrete counterexample, and failing that the widest
input dimension is bisected.

Run as a tool (same contract as any external verifier)::

    python -m vnncomp.baseline NET.onnx PROP.vnnlib TIMEOUT RESULT_OUT CEX_OUT
"""
from __future__ import annotations

import argparse
import enum
import itertools
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import onnx_rt
from .cex import Counterexample, from_vectors, serialize_counterexample
from .onnx_rt import KERNELS, Network, UnsupportedOperator, Value, infer_batch
from .specfmt import (ConjunctiveCase, LinearConstraint, Relation, Specification, VarKind,
                      evaluate_case)

ROUNDING_SLACK = 1e-6
ACTIVATION_ABS_SLACK = 1e-7


class UnboundedInput(ValueError):
    pass


@dataclass(frozen=True)
class IntervalVector:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper differ in shape")
        if np.any(lo > hi):
            raise ValueError("lower bound above upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __len__(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return (self.lower + self.upper) / 2

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=-1)


# --------------------------------------------------------------------------
# interval bound propagation


def _mm(node, a, a_batched, b, b_batched):
    return KERNELS["MatMul"](node, [Value(a, a_batched), Value(b, b_batched)]).array


def _affine_const(node, lo, hi, const, dyn_left):
    """Bounds of ``dyn @ const`` (or ``const @ dyn``) plus a rounding allowance."""
    pos, neg = np.maximum(const, 0.0), np.minimum(const, 0.0)
    mag_in = np.maximum(np.abs(lo), np.abs(hi))
    if dyn_left:
        out_lo = _mm(node, lo, True, pos, False) + _mm(node, hi, True, neg, False)
        out_hi = _mm(node, hi, True, pos, False) + _mm(node, lo, True, neg, False)
        mag = _mm(node, mag_in, True, np.abs(const), False)
    else:
        out_lo = _mm(node, pos, False, lo, True) + _mm(node, neg, False, hi, True)
        out_hi = _mm(node, pos, False, hi, True) + _mm(node, neg, False, lo, True)
        mag = _mm(node, np.abs(const), False, mag_in, True)
    return out_lo, out_hi, mag


def _scale(lo, hi, c):
    a, b = lo * c, hi * c
    return np.minimum(a, b), np.maximum(a, b)


def _widen(lo, hi, mag, abs_slack=0.0):
    eps = ROUNDING_SLACK * mag + abs_slack
    return lo - eps, hi + eps


def _interval_node(node, args):
    """``args`` holds ``(lo, hi, batched)`` per input; returns ``(lo, hi, batched)``."""
    op = node.op_type
    if op in onnx_rt.STRUCTURAL_OPS:
        lo = KERNELS[op](node, [None if a is None else Value(a[0], a[2]) for a in args])
        hi = KERNELS[op](node, [None if a is None else Value(a[1], a[2]) for a in args])
        return lo.array, hi.array, lo.batched
    if op in ("Relu", "Sigmoid", "Tanh"):
        lo, hi, batched = args[0]
        if op == "Relu":
            return np.maximum(lo, 0.0), np.maximum(hi, 0.0), batched
        f = np.tanh if op == "Tanh" else (lambda v: 1.0 / (1.0 + np.exp(-v)))
        with np.errstate(over="ignore"):
            flo, fhi = f(lo), f(hi)
        l2, h2 = _widen(flo, fhi, np.maximum(np.abs(flo), np.abs(fhi)), ACTIVATION_ABS_SLACK)
        return l2, h2, batched
    if op in ("Add", "Sub"):
        (l1, h1, b1), (l2, h2, b2) = args
        v = onnx_rt._align([Value(l1, b1), Value(l2, b2)])
        w = onnx_rt._align([Value(h1, b1), Value(h2, b2)])
        l1, l2 = v[0].array, v[1].array
        h1, h2 = w[0].array, w[1].array
        if op == "Add":
            lo, hi = l1 + l2, h1 + h2
        else:
            lo, hi = l1 - h2, h1 - l2
        mag = np.maximum(np.abs(l1), np.abs(h1)) + np.maximum(np.abs(l2), np.abs(h2))
        lo, hi = _widen(lo, hi, mag)
        return lo, hi, b1 or b2
    if op in ("Mul", "Div"):
        (l1, h1, b1), (l2, h2, b2) = args
        if b1 and b2:
            raise UnsupportedOperator(op, "both operands vary")
        if b2 and op == "Div":
            raise UnsupportedOperator(op, "divisor varies")
        (dl, dh, db), c = ((l1, h1, b1), l2) if b1 else ((l2, h2, b2), l1)
        v = onnx_rt._align([Value(dl, db), Value(c, False)])
        dl = v[0].array
        dh = onnx_rt._align([Value(dh, db), Value(c, False)])[0].array
        factor = (1.0 / c) if op == "Div" else c
        with np.errstate(divide="ignore"):
            lo, hi = _scale(dl, dh, factor)
        lo, hi = _widen(lo, hi, np.maximum(np.abs(lo), np.abs(hi)))
        return lo, hi, True
    if op == "MatMul":
        (l1, h1, b1), (l2, h2, b2) = args
        if b1 and b2:
            raise UnsupportedOperator(op, "both operands vary")
        if b1:
            lo, hi, mag = _affine_const(node, l1, h1, l2, True)
        else:
            lo, hi, mag = _affine_const(node, l2, h2, l1, False)
        lo, hi = _widen(lo, hi, mag)
        return lo, hi, True
    if op == "Gemm":
        (la, ha, ba), (lb, hb, bb) = args[0], args[1]
        if ba and bb:
            raise UnsupportedOperator(op, "both operands vary")
        if node.attrs.get("transA", 0):
            la, ha = np.swapaxes(la, -1, -2), np.swapaxes(ha, -1, -2)
        if node.attrs.get("transB", 0):
            lb, hb = np.swapaxes(lb, -1, -2), np.swapaxes(hb, -1, -2)
        alpha = float(np.float32(node.attrs.get("alpha", 1.0)))
        if ba:
            lo, hi, mag = _affine_const(node, la, ha, lb * alpha, True)
        else:
            lo, hi, mag = _affine_const(node, lb, hb, la * alpha, False)
        if len(args) > 2 and args[2] is not None:
            beta = float(np.float32(node.attrs.get("beta", 1.0)))
            cl, ch = _scale(args[2][0], args[2][1], beta)
            lo, hi = lo + cl, hi + ch
            mag = mag + np.maximum(np.abs(cl), np.abs(ch))
        lo, hi = _widen(lo, hi, mag)
        return lo, hi, True
    raise UnsupportedOperator(op)


def ibp_forward(net: Network, box: IntervalVector) -> IntervalVector:
    """Sound element-wise bounds on ``infer(net, x)`` for every ``x`` in ``box``."""
    if len(box) != net.num_inputs:
        raise ValueError(f"box has {len(box)} dimensions, network expects {net.num_inputs}")
    shape = (1,) + net.input_shape
    env = {net.input_name: (box.lower.reshape(shape), box.upper.reshape(shape), True)}
    for node in net.nodes:
        args = []
        for name in node.inputs:
            if name == "":
                args.append(None)
            elif name in env:
                args.append(env[name])
            else:
                c = np.asarray(net.initializers[name])
                c = c.astype(np.float64) if c.dtype.kind == "f" else c
                args.append((c, c, False))
        env[node.output] = _interval_node(node, args)
    lo, hi, _ = env[net.output_name]
    return IntervalVector(lo.reshape(-1), hi.reshape(-1))


# --------------------------------------------------------------------------
# branch and bound


class Verdict(enum.Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Budget:
    max_nodes: int = 20000
    time_limit_s: float | None = None
    samples: int = 256
    max_depth: int = 60
    seed: int = 0


@dataclass(frozen=True)
class BabNode:
    box: IntervalVector
    depth: int = 0

    def split(self) -> tuple["BabNode", "BabNode"] | None:
        """Bisect the widest dimension; None once it can no longer be halved."""
        lo, hi = self.box.lower, self.box.upper
        widths = hi - lo
        d = int(np.argmax(widths))
        mid = lo[d] + widths[d] / 2
        if not lo[d] < mid < hi[d]:
            return None
        left_hi, right_lo = hi.copy(), lo.copy()
        left_hi[d] = mid
        right_lo[d] = mid
        return (BabNode(IntervalVector(lo, left_hi), self.depth + 1),
                BabNode(IntervalVector(right_lo, hi), self.depth + 1))


@dataclass(frozen=True)
class CaseResult:
    verdict: Verdict
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    nodes: int = 0


@dataclass(frozen=True)
class SpecResult:
    verdict: Verdict
    witness: Counterexample | None = None
    case_index: int | None = None
    nodes: int = 0


def constraint_range(con: LinearConstraint, xbox: IntervalVector, ybox: IntervalVector) -> tuple[float, float]:
    lo = hi = 0.0
    for var, c in con.coefficients:
        box = xbox if var.kind is VarKind.INPUT else ybox
        a, b = c * box.lower[var.index], c * box.upper[var.index]
        lo += min(a, b)
        hi += max(a, b)
    return lo, hi


def _status_over_box(case: ConjunctiveCase, xbox, ybox) -> str:
    """'infeasible', 'all' (every point satisfies the case) or 'mixed'."""
    certain = True
    for con in case.constraints:
        lo, hi = constraint_range(con, xbox, ybox)
        if con.relation is Relation.LE:
            if lo > con.constant:
                return "infeasible"
            certain &= hi <= con.constant
        else:
            if hi < con.constant:
                return "infeasible"
            certain &= lo >= con.constant
    return "all" if certain else "mixed"


def _dense(case: ConjunctiveCase, n_in: int, n_out: int):
    m = len(case.constraints)
    ax, ay = np.zeros((m, n_in)), np.zeros((m, n_out))
    rhs, sign = np.empty(m), np.empty(m)
    for k, con in enumerate(case.constraints):
        for var, c in con.coefficients:
            (ax if var.kind is VarKind.INPUT else ay)[k, var.index] += c
        # store every row as  sign * lhs <= sign * rhs
        sign[k] = 1.0 if con.relation is Relation.LE else -1.0
        rhs[k] = con.constant
    return ax, ay, rhs, sign


def snap_to_float32(pts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Round points to float32 values, nudging inward so they stay inside ``[lo, hi]``."""
    p32 = pts.astype(np.float32)
    below = p32.astype(np.float64) < lo
    p32 = np.where(below, np.nextafter(p32, np.float32(np.inf)), p32)
    above = p32.astype(np.float64) > hi
    p32 = np.where(above, np.nextafter(p32, np.float32(-np.inf)), p32)
    return p32.astype(np.float64)


def sample_points(lo: np.ndarray, hi: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Center, then corners (when there are at most ``count`` of them), then uniform samples."""
    n = lo.size
    pts = [(lo + hi) / 2]
    if n <= 16 and 2 ** n < count:
        pts.extend(np.where(np.array(bits, dtype=bool), hi, lo) for bits in itertools.product((0, 1), repeat=n))
    rest = max(count - len(pts), 0)
    arr = np.vstack(pts + ([rng.uniform(lo, hi, (rest, n))] if rest else []))
    arr = snap_to_float32(arr, lo, hi)
    ok = np.all((arr >= lo) & (arr <= hi), axis=1)
    return arr[ok]


def _falsify(net, case, dense, lo, hi, samples, rng):
    pts = sample_points(lo, hi, samples, rng)
    if len(pts) == 0:
        return None
    ys = infer_batch(net, pts).reshape(len(pts), -1).astype(np.float64)
    ax, ay, rhs, sign = dense
    lhs = pts @ ax.T + ys @ ay.T
    # vectorized filter with a little slack, then the exact sequential check
    hits = np.all(sign * lhs <= sign * rhs + 1e-9 * (1 + np.abs(rhs)), axis=1)
    for k in np.flatnonzero(hits):
        if evaluate_case(case, pts[k], ys[k]):
            return pts[k], ys[k]
    return None


def verify_case(net: Network, case: ConjunctiveCase, budget: Budget = Budget(),
                case_index: int = 0, deadline: float | None = None) -> CaseResult:
    if case.input_box is None:
        raise UnboundedInput("case has no finite input box")
    root_lo, root_hi = case.box_arrays()
    if root_lo.size != net.num_inputs:
        raise ValueError(f"case box has {root_lo.size} inputs, network expects {net.num_inputs}")
    if deadline is None and budget.time_limit_s is not None:
        deadline = time.monotonic() + budget.time_limit_s
    dense = _dense(case, net.num_inputs, net.num_outputs)
    stack = [BabNode(IntervalVector(root_lo, root_hi))]
    explored = 0
    exhausted = False
    while stack:
        if explored >= budget.max_nodes or (deadline is not None and time.monotonic() > deadline):
            return CaseResult(Verdict.UNKNOWN, nodes=explored)
        node = stack.pop()
        explored += 1
        ybox = ibp_forward(net, node.box)
        if _status_over_box(case, node.box, ybox) == "infeasible":
            continue
        rng = np.random.default_rng([budget.seed, case_index, explored])
        found = _falsify(net, case, dense, node.box.lower, node.box.upper, budget.samples, rng)
        if found is not None:
            return CaseResult(Verdict.VIOLATED, found[0], found[1], explored)
        children = node.split() if node.depth < budget.max_depth else None
        if children is None:
            exhausted = True
            continue
        stack.append(children[1])
        stack.append(children[0])
    return CaseResult(Verdict.UNKNOWN if exhausted else Verdict.HOLDS, nodes=explored)


def verify_specification(net: Network, spec: Specification, budget: Budget = Budget()) -> SpecResult:
    """Holds iff every case holds; the first violated case ends the search."""
    deadline = time.monotonic() + budget.time_limit_s if budget.time_limit_s is not None else None
    unknown = False
    total = 0
    for k, case in enumerate(spec.cases):
        res = verify_case(net, case, budget, case_index=k, deadline=deadline)
        total += res.nodes
        if res.verdict is Verdict.VIOLATED:
            return SpecResult(Verdict.VIOLATED, from_vectors(res.x, res.y), k, total)
        if res.verdict is Verdict.UNKNOWN:
            unknown = True
    return SpecResult(Verdict.UNKNOWN if unknown else Verdict.HOLDS, nodes=total)


# --------------------------------------------------------------------------
# tool entry point


def run_tool(onnx_path, vnnlib_path, timeout: float, result_out, cex_out,
             seed: int = 0, max_nodes: int = Budget.max_nodes) -> SpecResult | None:
    """Verify one instance and write the result file (and witness when violated)."""
    from .specfmt import load_vnnlib

    result_out, cex_out = Path(result_out), Path(cex_out)
    try:
        net = onnx_rt.load_network(onnx_path)
        spec = load_vnnlib(vnnlib_path)
        budget = Budget(max_nodes=max_nodes, time_limit_s=max(0.0, float(timeout) * 0.9), seed=seed)
        res = verify_specification(net, spec, budget)
    except (ValueError, OSError) as e:
        result_out.write_text(f"error\n{e}\n")
        return None
    if res.verdict is Verdict.VIOLATED:
        cex_out.write_text(serialize_counterexample(res.witness))
    result_out.write_text(res.verdict.value + "\n")
    return res


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m vnncomp.baseline", description=__doc__.splitlines()[0])
    ap.add_argument("onnx")
    ap.add_argument("vnnlib")
    ap.add_argument("timeout", type=float)
    ap.add_argument("result_out")
    ap.add_argument("cex_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-nodes", type=int, default=Budget.max_nodes)
    args = ap.parse_args(argv)
    res = run_tool(args.onnx, args.vnnlib, args.timeout, args.result_out, args.cex_out,
                   seed=args.seed, max_nodes=args.max_nodes)
    return 0 if res is not None else 1


if __name__ == "__main__":
    sys.exit(main())
