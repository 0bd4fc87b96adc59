"""VNN-LIB property files: tokenizer, parser and DNF normalization.

A property is read as a *definition of counterexamples*: the file is
satisfiable iff the network violates the property.  Every file is reduced
to a disjunction of :class:`ConjunctiveCase` objects, each one a conjunction
of linear constraints over the input variables ``X_i`` and the output
variables ``Y_j``.

Only the subset of SMT-LIB used by competition benchmarks is accepted:
``declare-const`` of sort ``Real``, ``assert``, ``and``/``or``, the
non-strict comparisons ``<=``/``>=`` and linear terms built with ``+``,
``-`` and ``*``.  Anything else raises instead of being silently ignored.
"""
from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence, Union

import numpy as np

DEFAULT_CASE_CAP = 65536


class SpecError(ValueError):
    """Base class for every problem found while reading a property file."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class UnterminatedToken(SpecError):
    pass


class InvalidCharacter(SpecError):
    pass


class UndeclaredVariable(SpecError):
    pass


class NonlinearTerm(SpecError):
    pass


class UnsupportedForm(SpecError):
    pass


class InvalidDeclaration(SpecError):
    pass


class ContradictoryBox(SpecError):
    pass


class EmptyDNF(SpecError):
    pass


class CaseExplosion(SpecError):
    pass


class DimensionMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# variables and constraints


class VarKind(enum.Enum):
    INPUT = "X"
    OUTPUT = "Y"


_VAR_RE = re.compile(r"^([XY])_(0|[1-9][0-9]*)$")


@dataclass(frozen=True)
class VariableId:
    kind: VarKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value}_{self.index}"

    @classmethod
    def parse(cls, name: str) -> "VariableId | None":
        m = _VAR_RE.match(name)
        if m is None:
            return None
        return cls(VarKind(m.group(1)), int(m.group(2)))

    def __lt__(self, other: "VariableId") -> bool:
        return (self.kind.value, self.index) < (other.kind.value, other.index)


def X(i: int) -> VariableId:
    return VariableId(VarKind.INPUT, i)


def Y(j: int) -> VariableId:
    return VariableId(VarKind.OUTPUT, j)


class Relation(enum.Enum):
    LE = "<="
    GE = ">="


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coef * var) <relation> constant``.

    ``coefficients`` keeps the order in which variables first appeared in
    the source term; evaluation sums left to right in that order.
    """

    coefficients: tuple[tuple[VariableId, float], ...]
    relation: Relation
    constant: float

    def __post_init__(self):
        if not self.coefficients or all(c == 0.0 for _, c in self.coefficients):
            raise UnsupportedForm("constraint has no nonzero coefficient")
        if not all(math.isfinite(c) for _, c in self.coefficients) or not math.isfinite(self.constant):
            raise UnsupportedForm("constraint has a non-finite number")

    @property
    def variables(self) -> tuple[VariableId, ...]:
        return tuple(v for v, _ in self.coefficients)

    def as_dict(self) -> dict[VariableId, float]:
        return dict(self.coefficients)

    @property
    def inputs_only(self) -> bool:
        return all(v.kind is VarKind.INPUT for v, _ in self.coefficients)

    def lhs(self, x: Sequence[float], y: Sequence[float]) -> float:
        s = 0.0
        for var, c in self.coefficients:
            val = x[var.index] if var.kind is VarKind.INPUT else y[var.index]
            s += c * float(val)
        return s

    def holds(self, x: Sequence[float], y: Sequence[float]) -> bool:
        s = self.lhs(x, y)
        if self.relation is Relation.LE:
            return s <= self.constant
        return s >= self.constant

    def as_bound(self) -> tuple[int, str, float] | None:
        """``(input index, 'lower'|'upper', value)`` for ``±X_i <= / >= k``, else None."""
        if len(self.coefficients) != 1:
            return None
        var, c = self.coefficients[0]
        if var.kind is not VarKind.INPUT or c not in (1.0, -1.0):
            return None
        upper = (self.relation is Relation.LE) == (c == 1.0)
        return var.index, "upper" if upper else "lower", self.constant * c


@dataclass(frozen=True)
class ConjunctiveCase:
    input_constraints: tuple[LinearConstraint, ...]
    output_constraints: tuple[LinearConstraint, ...]
    input_box: tuple[tuple[float, float], ...] | None = None

    @property
    def constraints(self) -> tuple[LinearConstraint, ...]:
        return self.input_constraints + self.output_constraints

    def box_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self.input_box is None:
            raise ValueError("case has no finite input box")
        box = np.asarray(self.input_box, dtype=np.float64)
        return box[:, 0].copy(), box[:, 1].copy()


@dataclass(frozen=True)
class Specification:
    num_inputs: int
    num_outputs: int
    cases: tuple[ConjunctiveCase, ...]

    def satisfied_case(self, x, y) -> int | None:
        """Index of the first case satisfied by ``(x, y)``, or None."""
        x, y = _check_dims(x, y, self.num_inputs, self.num_outputs)
        for i, case in enumerate(self.cases):
            if evaluate_case(case, x, y):
                return i
        return None

    def evaluate(self, x, y) -> bool:
        return self.satisfied_case(x, y) is not None


def _check_dims(x, y, n_in, n_out):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != n_in or y.size != n_out:
        raise DimensionMismatch(
            f"expected {n_in} inputs / {n_out} outputs, got {x.size} / {y.size}")
    return x, y


def evaluate_case(case: ConjunctiveCase, x, y) -> bool:
    """True iff every constraint of ``case`` holds at ``(x, y)``.

    float32 values are promoted to float64 before comparison.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    for con in case.constraints:
        for var, _ in con.coefficients:
            size = x.size if var.kind is VarKind.INPUT else y.size
            if var.index >= size:
                raise DimensionMismatch(f"{var} referenced but vector has length {size}")
    return all(con.holds(x, y) for con in case.constraints)


# --------------------------------------------------------------------------
# tokenizer


class Token(NamedTuple):
    kind: str  # "(", ")", "symbol", "number", "string"
    text: str
    line: int
    col: int

    @property
    def value(self) -> float:
        return float(self.text)


_NUMBER_RE = re.compile(r"^[-+]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][-+]?[0-9]+)?$")
_SYMBOL_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789~!@$%^&*_-+=<>.?/")
_DELIMS = set(" \t\r\n\f();\"|")


def tokenize(text: Union[str, bytes]) -> list[Token]:
    """Split VNN-LIB source into parenthesis, symbol, number and string tokens.

    ``;`` starts a comment running to the end of the line.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise InvalidCharacter(f"input is not valid UTF-8 ({e.reason})") from None
    return list(_iter_tokens(text))


def _iter_tokens(text: str) -> Iterator[Token]:
    i, n = 0, len(text)
    line, line_start = 1, 0
    while i < n:
        ch = text[i]
        col = i - line_start + 1
        if ch == "\n":
            line += 1
            line_start = i + 1
            i += 1
        elif ch in " \t\r\f":
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield Token(ch, ch, line, col)
            i += 1
        elif ch == '"' or ch == "|":
            # strings use "" as an escaped quote; |quoted symbols| have no escapes
            start_line = line
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    what = "string" if ch == '"' else "quoted symbol"
                    raise UnterminatedToken(f"unterminated {what}", start_line, col)
                c = text[j]
                if c == ch:
                    if ch == '"' and j + 1 < n and text[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                if c == "\n":
                    line += 1
                    line_start = j + 1
                buf.append(c)
                j += 1
            yield Token("string" if ch == '"' else "symbol", "".join(buf), start_line, col)
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in _DELIMS:
                j += 1
            word = text[i:j]
            if _NUMBER_RE.match(word):
                yield Token("number", word, line, col)
            else:
                for k, c in enumerate(word):
                    if c not in _SYMBOL_CHARS:
                        raise InvalidCharacter(f"invalid character {c!r}", line, col + k)
                if word[0].isdigit() or (word[0] in "+-." and len(word) > 1 and word[1].isdigit()):
                    raise InvalidCharacter(f"malformed numeric literal {word!r}", line, col)
                yield Token("symbol", word, line, col)
            i = j


# --------------------------------------------------------------------------
# s-expressions and assertion trees


def read_sexprs(tokens: Sequence[Token]) -> list:
    """Group tokens into nested lists. Leaves stay :class:`Token` objects."""
    stack: list[list] = [[]]
    opens: list[Token] = []
    for tok in tokens:
        if tok.kind == "(":
            stack.append([])
            opens.append(tok)
        elif tok.kind == ")":
            if len(stack) == 1:
                raise UnsupportedForm("unbalanced ')'", tok.line, tok.col)
            done = stack.pop()
            opens.pop()
            stack[-1].append(_SList(done))
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        t = opens[-1]
        raise UnsupportedForm("unclosed '('", t.line, t.col)
    return stack[0]


class _SList(list):
    @property
    def where(self) -> tuple[int | None, int | None]:
        for item in self:
            if isinstance(item, Token):
                return item.line, item.col
            if isinstance(item, _SList):
                return item.where
        return None, None


@dataclass(frozen=True)
class Atom:
    constraint: LinearConstraint


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


Formula = Union[Atom, And, Or]


def evaluate_formula(node: Formula, x, y) -> bool:
    """Direct evaluation of an assertion tree (no normalization)."""
    if isinstance(node, Atom):
        return node.constraint.holds(x, y)
    if isinstance(node, And):
        return all(evaluate_formula(c, x, y) for c in node.children)
    return any(evaluate_formula(c, x, y) for c in node.children)


def _head(expr) -> str | None:
    if isinstance(expr, _SList) and expr and isinstance(expr[0], Token) and expr[0].kind == "symbol":
        return expr[0].text
    return None


def _loc(expr):
    if isinstance(expr, Token):
        return expr.line, expr.col
    return expr.where


class _Linear:
    """Affine term under construction: ordered coefficients + constant."""

    __slots__ = ("coef", "const")

    def __init__(self, coef=None, const=0.0):
        self.coef: dict[VariableId, float] = coef if coef is not None else {}
        self.const = const

    @property
    def is_constant(self) -> bool:
        return not self.coef

    def scaled(self, k: float) -> "_Linear":
        return _Linear({v: k * c for v, c in self.coef.items()}, k * self.const)

    def plus(self, other: "_Linear", sign: float = 1.0) -> "_Linear":
        coef = dict(self.coef)
        for v, c in other.coef.items():
            coef[v] = coef[v] + sign * c if v in coef else sign * c
        return _Linear(coef, self.const + sign * other.const)


class _Parser:
    def __init__(self):
        self.declared: dict[str, VariableId] = {}

    def term(self, expr) -> _Linear:
        if isinstance(expr, Token):
            if expr.kind == "number":
                return _Linear(const=float(expr.text))
            if expr.kind == "symbol":
                var = self.declared.get(expr.text)
                if var is None:
                    raise UndeclaredVariable(f"undeclared variable {expr.text!r}", expr.line, expr.col)
                return _Linear({var: 1.0})
            raise UnsupportedForm(f"unexpected {expr.kind} in term", expr.line, expr.col)
        op = _head(expr)
        line, col = _loc(expr)
        args = [self.term(a) for a in expr[1:]]
        if op == "+" and args:
            out = args[0]
            for a in args[1:]:
                out = out.plus(a)
            return out
        if op == "-" and args:
            if len(args) == 1:
                return args[0].scaled(-1.0)
            out = args[0]
            for a in args[1:]:
                out = out.plus(a, -1.0)
            return out
        if op == "*" and args:
            variable = [a for a in args if not a.is_constant]
            if len(variable) > 1:
                raise NonlinearTerm("product of two non-constant terms", line, col)
            k = 1.0
            for a in args:
                if a.is_constant:
                    k *= a.const
            if not variable:
                return _Linear(const=k)
            return variable[0].scaled(k) if k != 1.0 else variable[0]
        raise UnsupportedForm(f"unsupported term operator {op!r}", line, col)

    def atom(self, expr) -> Atom:
        op = _head(expr)
        line, col = _loc(expr)
        if len(expr) != 3:
            raise UnsupportedForm(f"{op} takes exactly two arguments", line, col)
        lhs, rhs = self.term(expr[1]), self.term(expr[2])
        rel = Relation(op)
        if lhs.is_constant and not rhs.is_constant:
            # k <= t  ->  t >= k, exact
            rel = Relation.GE if rel is Relation.LE else Relation.LE
            lhs, rhs = rhs, lhs
        diff = lhs.plus(_Linear(rhs.coef), -1.0)
        constant = rhs.const - lhs.const
        coefs = tuple((v, c) for v, c in diff.coef.items() if c != 0.0)
        if not coefs:
            raise UnsupportedForm("comparison between constants", line, col)
        try:
            return Atom(LinearConstraint(coefs, rel, constant))
        except UnsupportedForm as e:
            raise UnsupportedForm(str(e), line, col) from None

    def formula(self, expr) -> Formula:
        op = _head(expr)
        line, col = _loc(expr)
        if op == "and" or op == "or":
            if len(expr) == 1 and op == "and":
                raise UnsupportedForm("empty 'and'", line, col)
            kids = tuple(self.formula(e) for e in expr[1:])
            return And(kids) if op == "and" else Or(kids)
        if op in ("<=", ">="):
            return self.atom(expr)
        if op in ("<", ">"):
            raise UnsupportedForm(f"strict inequality {op!r} is not supported", line, col)
        raise UnsupportedForm(f"unsupported formula {op!r}", line, col)

    def declare(self, expr):
        line, col = _loc(expr)
        if len(expr) != 3 or not all(isinstance(t, Token) and t.kind == "symbol" for t in expr[1:]):
            raise InvalidDeclaration("expected (declare-const NAME Real)", line, col)
        name, sort = expr[1], expr[2]
        if sort.text != "Real":
            raise InvalidDeclaration(f"unsupported sort {sort.text!r}", sort.line, sort.col)
        var = VariableId.parse(name.text)
        if var is None:
            raise InvalidDeclaration(f"variable name {name.text!r} is not X_<i> or Y_<j>", name.line, name.col)
        if name.text in self.declared:
            raise InvalidDeclaration(f"duplicate declaration of {name.text}", name.line, name.col)
        self.declared[name.text] = var


def parse_assertions(tokens: Sequence[Token]) -> tuple[int, int, Formula]:
    """Parse declarations and asserts; returns ``(num_inputs, num_outputs, tree)``.

    Multiple asserts are joined under a single ``And``.
    """
    p = _Parser()
    asserts = []
    for cmd in read_sexprs(tokens):
        op = _head(cmd)
        line, col = _loc(cmd)
        if op == "declare-const":
            p.declare(cmd)
        elif op == "assert":
            if len(cmd) != 2:
                raise UnsupportedForm("assert takes one formula", line, col)
            asserts.append(p.formula(cmd[1]))
        else:
            raise UnsupportedForm(f"unsupported command {op!r}", line, col)
    counts = {}
    for kind in VarKind:
        idx = sorted(v.index for v in p.declared.values() if v.kind is kind)
        if idx != list(range(len(idx))):
            missing = sorted(set(range(max(idx) + 1)) - set(idx))
            raise InvalidDeclaration(f"{kind.value} variables are not dense, missing {kind.value}_{missing[0]}")
        counts[kind] = len(idx)
    if not asserts:
        raise UnsupportedForm("specification has no assert")
    tree = asserts[0] if len(asserts) == 1 else And(tuple(asserts))
    return counts[VarKind.INPUT], counts[VarKind.OUTPUT], tree


def count_cases(node: Formula) -> int:
    if isinstance(node, Atom):
        return 1
    if isinstance(node, Or):
        return sum(count_cases(c) for c in node.children)
    n = 1
    for c in node.children:
        n *= count_cases(c)
        if n == 0:
            return 0
    return n


def _expand(node: Formula) -> list[tuple[LinearConstraint, ...]]:
    if isinstance(node, Atom):
        return [(node.constraint,)]
    if isinstance(node, Or):
        return [case for c in node.children for case in _expand(c)]
    parts = [_expand(c) for c in node.children]
    return [tuple(itertools.chain.from_iterable(combo)) for combo in itertools.product(*parts)]


def extract_box(constraints: Iterable[LinearConstraint], num_inputs: int):
    """Tightest per-input bounds implied by ``±X_i <=/>= k`` constraints.

    Returns None unless every input gets a finite lower and upper bound.
    """
    lo = [-math.inf] * num_inputs
    hi = [math.inf] * num_inputs
    for con in constraints:
        b = con.as_bound()
        if b is None:
            continue
        i, side, val = b
        if side == "lower":
            lo[i] = max(lo[i], val)
        else:
            hi[i] = min(hi[i], val)
    for i in range(num_inputs):
        if lo[i] > hi[i]:
            raise ContradictoryBox(f"X_{i} has lower bound {lo[i]!r} above upper bound {hi[i]!r}")
    if num_inputs == 0 or not all(math.isfinite(v) for v in lo + hi):
        return None
    return tuple(zip(lo, hi))


def normalize_dnf(tree: Formula, num_inputs: int, cap: int = DEFAULT_CASE_CAP) -> list[ConjunctiveCase]:
    """Distribute conjunction over disjunction and route atoms to input/output lists."""
    n = count_cases(tree)
    if n > cap:
        raise CaseExplosion(f"DNF would have {n} cases, above the cap of {cap}")
    if n == 0:
        raise EmptyDNF("specification normalizes to zero cases")
    cases = []
    for atoms in _expand(tree):
        ins = tuple(a for a in atoms if a.inputs_only)
        outs = tuple(a for a in atoms if not a.inputs_only)
        cases.append(ConjunctiveCase(ins, outs, extract_box(ins, num_inputs)))
    return cases


def parse_specification(tokens: Sequence[Token], cap: int = DEFAULT_CASE_CAP) -> Specification:
    n_in, n_out, tree = parse_assertions(tokens)
    cases = normalize_dnf(tree, n_in, cap)
    return Specification(n_in, n_out, tuple(cases))


def parse_vnnlib(text: Union[str, bytes], cap: int = DEFAULT_CASE_CAP) -> Specification:
    return parse_specification(tokenize(text), cap)


def load_vnnlib(path, cap: int = DEFAULT_CASE_CAP) -> Specification:
    return parse_vnnlib(Path(path).read_bytes(), cap)


# --------------------------------------------------------------------------
# rendering


def _fmt(v: float) -> str:
    return repr(float(v))


def _render_term(con: LinearConstraint) -> str:
    parts = []
    for var, c in con.coefficients:
        if c == 1.0:
            parts.append(str(var))
        elif c == -1.0:
            parts.append(f"(- {var})")
        else:
            parts.append(f"(* {_fmt(c)} {var})")
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def render_constraint(con: LinearConstraint) -> str:
    return f"({con.relation.value} {_render_term(con)} {_fmt(con.constant)})"


def serialize_specification(spec: Specification) -> str:
    """Canonical VNN-LIB text for ``spec``; reparses to an equal object."""
    lines = ["; canonical disjunctive normal form"]
    lines += [f"(declare-const X_{i} Real)" for i in range(spec.num_inputs)]
    lines += [f"(declare-const Y_{j} Real)" for j in range(spec.num_outputs)]
    lines.append("(assert (or")
    for case in spec.cases:
        atoms = " ".join(render_constraint(c) for c in case.constraints)
        lines.append(f"  (and {atoms})")
    lines.append("))")
    return "\n".join(lines) + "\n"


def constraint_json(con: LinearConstraint) -> dict:
    return {
        "coefficients": {str(v): c for v, c in con.coefficients},
        "relation": con.relation.value,
        "constant": con.constant,
    }


def to_json(spec: Specification) -> dict:
    return {
        "num_inputs": spec.num_inputs,
        "num_outputs": spec.num_outputs,
        "cases": [
            {
                "input_box": [list(b) for b in case.input_box] if case.input_box is not None else None,
                "input_constraints": [constraint_json(c) for c in case.input_constraints],
                "output_constraints": [constraint_json(c) for c in case.output_constraints],
            }
            for case in spec.cases
        ],
    }
