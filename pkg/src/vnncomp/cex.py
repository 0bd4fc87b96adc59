"""Counterexample witness files and their adjudication.

The tool claiming a violation carries the burden of proof: its witness is
re-run through :mod:`vnncomp.onnx_rt` and checked against the property.
Two modes exist.  ``DISCARD_OUTPUTS`` ignores whatever outputs the tool
wrote and uses only the recomputed ones (the rule that decided the
rankings).  ``PENALIZE_OUTPUTS`` additionally requires the recorded outputs
to be present and to match the recomputed ones.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .onnx_rt import Network, infer
from .specfmt import (DimensionMismatch, SpecError, Specification, Token, VariableId, VarKind,
                      evaluate_case, read_sexprs, tokenize)

DEFAULT_OUT_TOL = 1e-4


class CexFormatError(ValueError):
    pass


class DuplicateAssignment(CexFormatError):
    pass


class MalformedPair(CexFormatError):
    pass


class UnknownVariable(CexFormatError):
    pass


class Mode(enum.Enum):
    DISCARD_OUTPUTS = "discard"
    PENALIZE_OUTPUTS = "penalize"


class Reason(enum.Enum):
    VALID = "valid"
    INPUT_OUTSIDE_ALL_CASES = "input_outside_all_cases"
    OUTPUT_VIOLATES_CASE = "output_violates_case"
    MISSING_INPUT = "missing_input"
    MISSING_OUTPUT = "missing_output"
    OUTPUT_MISMATCH = "output_mismatch"
    NO_WITNESS = "no_witness"


@dataclass(frozen=True)
class Counterexample:
    inputs: dict[int, float]
    outputs: dict[int, float] | None = None

    def input_vector(self, n: int) -> np.ndarray:
        return np.array([self.inputs[i] for i in range(n)], dtype=np.float64)


@dataclass(frozen=True)
class CexVerdict:
    valid: bool
    reason: Reason
    satisfied_case: int | None = None
    max_abs_dev: float | None = None

    def __post_init__(self):
        if self.valid != (self.reason is Reason.VALID):
            raise ValueError("valid must agree with reason")
        if self.valid and self.satisfied_case is None:
            raise ValueError("a valid verdict names the satisfied case")

    def describe(self) -> str:
        if self.valid:
            return f"valid (case {self.satisfied_case})"
        if self.reason is Reason.OUTPUT_MISMATCH:
            return f"invalid: output mismatch, max |dev| = {self.max_abs_dev:.6g}"
        return f"invalid: {self.reason.value.replace('_', ' ')}"


def parse_counterexample(text) -> Counterexample:
    """Read ``(X_i value)`` / ``(Y_j value)`` pairs, optionally inside one outer group."""
    try:
        exprs = read_sexprs(tokenize(text))
    except SpecError as e:
        raise MalformedPair(str(e)) from None
    if len(exprs) == 1 and isinstance(exprs[0], list) and exprs[0] and isinstance(exprs[0][0], list):
        exprs = list(exprs[0])
    elif len(exprs) == 1 and isinstance(exprs[0], list) and not exprs[0]:
        exprs = []
    inputs: dict[int, float] = {}
    outputs: dict[int, float] = {}
    for pair in exprs:
        if isinstance(pair, Token) or len(pair) != 2 or not all(isinstance(t, Token) for t in pair):
            where = pair if isinstance(pair, Token) else next((t for t in pair if isinstance(t, Token)), None)
            loc = f" at {where.line}:{where.col}" if where is not None else ""
            raise MalformedPair(f"expected (NAME value){loc}")
        name, val = pair
        if name.kind != "symbol" or val.kind != "number":
            raise MalformedPair(f"expected (NAME value) at {name.line}:{name.col}")
        var = VariableId.parse(name.text)
        if var is None:
            raise UnknownVariable(f"unknown variable {name.text!r} at {name.line}:{name.col}")
        target = inputs if var.kind is VarKind.INPUT else outputs
        if var.index in target:
            raise DuplicateAssignment(f"{name.text} assigned twice (line {name.line})")
        target[var.index] = float(val.text)
    return Counterexample(inputs, outputs or None)


def load_counterexample(path) -> Counterexample:
    return parse_counterexample(Path(path).read_bytes())


def serialize_counterexample(cex: Counterexample) -> str:
    lines = [f"(X_{i} {cex.inputs[i]!r})" for i in sorted(cex.inputs)]
    if cex.outputs:
        lines += [f"(Y_{j} {cex.outputs[j]!r})" for j in sorted(cex.outputs)]
    return "(" + "\n ".join(lines) + ")\n"


def from_vectors(x, y=None) -> Counterexample:
    inputs = {i: float(v) for i, v in enumerate(np.asarray(x, dtype=np.float64).reshape(-1))}
    outputs = None
    if y is not None:
        outputs = {j: float(v) for j, v in enumerate(np.asarray(y, dtype=np.float64).reshape(-1))}
    return Counterexample(inputs, outputs)


def validate(cex: Counterexample, spec: Specification, net: Network,
             mode: Mode = Mode.DISCARD_OUTPUTS, out_tol: float = DEFAULT_OUT_TOL) -> CexVerdict:
    if net.num_inputs != spec.num_inputs or net.num_outputs != spec.num_outputs:
        raise DimensionMismatch(
            f"network is {net.num_inputs}->{net.num_outputs}, property is {spec.num_inputs}->{spec.num_outputs}")
    extra = [i for i in cex.inputs if i >= spec.num_inputs]
    if extra:
        raise DimensionMismatch(f"witness assigns X_{extra[0]} but the property has {spec.num_inputs} inputs")
    if any(i not in cex.inputs for i in range(spec.num_inputs)):
        return CexVerdict(False, Reason.MISSING_INPUT)

    x = cex.input_vector(spec.num_inputs)
    y = infer(net, x).reshape(-1).astype(np.float64)

    inside = [k for k, case in enumerate(spec.cases)
              if all(c.holds(x, y) for c in case.input_constraints)]
    if not inside:
        return CexVerdict(False, Reason.INPUT_OUTSIDE_ALL_CASES)
    hit = next((k for k in inside if evaluate_case(spec.cases[k], x, y)), None)
    if hit is None:
        return CexVerdict(False, Reason.OUTPUT_VIOLATES_CASE)

    if mode is Mode.PENALIZE_OUTPUTS:
        recorded = cex.outputs or {}
        if any(j >= spec.num_outputs for j in recorded):
            raise DimensionMismatch(f"witness assigns outputs beyond Y_{spec.num_outputs - 1}")
        if len(recorded) != spec.num_outputs:
            return CexVerdict(False, Reason.MISSING_OUTPUT)
        dev = max(abs(recorded[j] - y[j]) for j in range(spec.num_outputs))
        if not dev <= out_tol:
            return CexVerdict(False, Reason.OUTPUT_MISMATCH, max_abs_dev=dev if math.isfinite(dev) else math.inf)
    return CexVerdict(True, Reason.VALID, satisfied_case=hit)
