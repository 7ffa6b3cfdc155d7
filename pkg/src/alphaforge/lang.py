"""Alpha expression language: operator catalog, AST, parser, printer.

Expressions are immutable trees built from three node types:

* ``Field("close")``       -- reference to a panel field
* ``Const(20)``            -- integer literal (windows, bucket counts, tail bounds)
* ``Call("ts_mean", (...))`` -- operator application

Surface syntax is function-call form with ``+ - * /`` and unary ``-`` as
sugar for ``add``/``subtract``/``multiply``/``divide``/``neg``::

    rank(ts_corr(close, volume, 20))
    -ts_arg_max(close * volume, 10)
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import NamedTuple, Union

from .errors import ArityError, ExprSyntaxError, UnknownOperator, WindowOutOfRange

MIN_WINDOW = 2
MAX_WINDOW = 252
MAX_BUCKETS = 100
DEFAULT_MAX_DEPTH = 6

# Slot kinds:
#   x  real series (booleans coerce to 1/0)
#   b  boolean series
#   v  real series or integer literal (if_else branches)
#   w  window length, integer in [MIN_WINDOW, MAX_WINDOW]
#   q  bucket count, integer in [2, MAX_BUCKETS]
#   c  free integer literal
SERIES_SLOTS = frozenset("xbv")
PARAM_SLOTS = frozenset("wqc")


class OperatorSignature(NamedTuple):
    name: str
    category: str
    slots: str
    output: str  # "real" | "bool"
    commutative: bool = False

    @property
    def arity(self):
        return len(self.slots)

    @property
    def series_slots(self):
        return [i for i, s in enumerate(self.slots) if s in SERIES_SLOTS]

    @property
    def needs_groups(self):
        return self.category == "group"


def _ops(category, slots, names, output="real", commutative=()):
    return [OperatorSignature(n, category, slots, output, n in commutative) for n in names]


CATALOG = {
    sig.name: sig
    for sig in (
        _ops("mathematical", "xx", ["add", "subtract", "multiply", "divide", "power", "min", "max"],
             commutative={"add", "multiply", "min", "max"})
        + _ops("mathematical", "x", ["neg", "abs", "sign", "log", "sqrt", "inverse"])
        + _ops("horizontal", "x", ["rank", "zscore", "demean", "normalize"])
        + _ops("horizontal", "xq", ["quantile"])
        + _ops("group", "x", ["group_rank", "group_mean", "group_zscore"])
        + _ops("logical", "bb", ["and", "or"], "bool", commutative={"and", "or"})
        + _ops("logical", "b", ["not"], "bool")
        + _ops("logical", "xx", ["equal", "less", "greater"], "bool", commutative={"equal"})
        + _ops("logical", "bvv", ["if_else"])
        + _ops("time-series", "xw", [
            "ts_mean", "ts_std", "ts_sum", "ts_min", "ts_max", "ts_delay", "ts_delta", "ts_rank",
            "ts_zscore", "ts_skew", "ts_kurtosis", "ts_arg_max", "ts_arg_min", "ts_ir"])
        + _ops("time-series", "xxw", [
            "ts_corr", "ts_cov", "ts_co_skewness", "ts_co_kurtosis", "ts_regression",
            "ts_regression_res"], commutative={"ts_corr", "ts_cov"})
        + _ops("risk", "xxw", ["ts_beta"])
        + _ops("risk", "xw", ["ts_sharpe"])
        + _ops("transformation", "x", ["sin", "cos"])
        + _ops("transformation", "xccc", ["tail"])
        + _ops("technical", "xww", ["ts_macd"])
        + _ops("technical", "xw", ["ta_rsi"])
    )
}

INFIX = {"+": "add", "-": "subtract", "*": "multiply", "/": "divide"}


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Field:
    name: str


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Call:
    op: str
    args: tuple

    @property
    def signature(self) -> OperatorSignature:
        return CATALOG[self.op]


Expr = Union[Field, Const, Call]


def depth(expr) -> int:
    """Operator nesting depth; a bare field has depth 0."""
    if isinstance(expr, Call):
        subs = [depth(a) for a in expr.args if not isinstance(a, Const)]
        return 1 + max(subs, default=0)
    return 0


def output_domain(expr) -> str:
    if isinstance(expr, Call):
        sig = CATALOG.get(expr.op)
        return sig.output if sig else "real"
    return "real"


def fields_used(expr) -> list:
    """Field names in left-to-right order (with repeats)."""
    if isinstance(expr, Field):
        return [expr.name]
    if isinstance(expr, Call):
        return [f for a in expr.args for f in fields_used(a)]
    return []


def size(expr) -> int:
    if isinstance(expr, Call):
        return 1 + sum(size(a) for a in expr.args)
    return 1


# ------------------------------------------------------------------ printer


def to_text(expr) -> str:
    """Canonical function-call text; ``parse(to_text(e)) == e``."""
    if isinstance(expr, Field):
        return expr.name
    if isinstance(expr, Const):
        return str(expr.value)
    return f"{expr.op}({', '.join(to_text(a) for a in expr.args)})"


# ------------------------------------------------------------------- parser

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[a-z_][a-z0-9_]*)|(?P<punct>[-+*/(),]))")


class _Tok(NamedTuple):
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list:
    toks, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}",
                                  len(text) - len(text[pos:].lstrip()))
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


# binding powers for precedence climbing
_BINARY_PREC = {"+": 10, "-": 10, "*": 20, "/": 20}
_UNARY_PREC = 30


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", tok.pos)
        return tok

    def parse(self):
        expr = self.expr(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.pos)
        return expr

    def expr(self, min_prec):
        lhs = self.prefix()
        while True:
            tok = self.peek()
            prec = _BINARY_PREC.get(tok.text) if tok.kind == "punct" else None
            if prec is None or prec < min_prec:
                return lhs
            self.next()
            rhs = self.expr(prec + 1)  # left-associative
            lhs = _RawCall(INFIX[tok.text], (lhs, rhs), tok.pos)

    def prefix(self):
        tok = self.next()
        if tok.kind == "int":
            return Const(int(tok.text))
        if tok.kind == "ident":
            if self.peek().text == "(":
                self.next()
                args = [self.expr(0)]
                while self.peek().text == ",":
                    self.next()
                    args.append(self.expr(0))
                self.expect(")")
                return _RawCall(tok.text, tuple(args), tok.pos)
            return Field(tok.text)
        if tok.text == "(":
            inner = self.expr(0)
            self.expect(")")
            return inner
        if tok.text == "-":
            operand = self.expr(_UNARY_PREC)
            if isinstance(operand, Const):
                return Const(-operand.value)
            return _RawCall("neg", (operand,), tok.pos)
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {found}", tok.pos)


class _RawCall(NamedTuple):
    op: str
    args: tuple
    pos: int


def _resolve(node):
    if not isinstance(node, _RawCall):
        return node
    sig = CATALOG.get(node.op)
    if sig is None:
        raise UnknownOperator(f"unknown operator {node.op!r} at position {node.pos}")
    if len(node.args) != sig.arity:
        raise ArityError(f"{node.op} takes {sig.arity} arguments ({sig.slots}), got {len(node.args)}")
    args = []
    for slot, arg in zip(sig.slots, node.args):
        arg = _resolve(arg)
        if slot in PARAM_SLOTS:
            if not isinstance(arg, Const):
                raise ArityError(f"{node.op}: parameter slot expects an integer literal, got {to_text(arg)!r}")
            check_param(node.op, slot, arg.value)
        args.append(arg)
    return Call(node.op, tuple(args))


def check_param(op, slot, value):
    if slot == "w" and not MIN_WINDOW <= value <= MAX_WINDOW:
        raise WindowOutOfRange(f"{op}: window {value} outside [{MIN_WINDOW}, {MAX_WINDOW}]")
    if slot == "q" and not 2 <= value <= MAX_BUCKETS:
        raise WindowOutOfRange(f"{op}: bucket count {value} outside [2, {MAX_BUCKETS}]")


def parse(text: str):
    """Parse expression text into an AST resolved against the catalog."""
    return _resolve(_Parser(text).parse())


# ----------------------------------------------------------------- validate


class PanelSchema(NamedTuple):
    fields: frozenset
    has_groups: bool = False

    @classmethod
    def of(cls, panel):
        return cls(frozenset(panel.field_names), panel.has_groups)


class Diagnostic(NamedTuple):
    code: str
    message: str


def validate(expr, schema: PanelSchema, max_depth: int | None = None) -> list:
    """Return a list of diagnostics; an empty list means the expression is valid."""
    out = []
    _check(expr, schema, "x", out)
    if isinstance(expr, Const):
        out.append(Diagnostic("Literal", "a bare literal is not an alpha"))
    if max_depth is not None and depth(expr) > max_depth:
        out.append(Diagnostic("Depth", f"depth {depth(expr)} exceeds {max_depth}"))
    return out


def _check(node, schema, slot, out):
    if isinstance(node, Field):
        if node.name not in schema.fields:
            out.append(Diagnostic("UnknownField", f"field {node.name!r} not in panel"))
        if slot == "b":
            out.append(Diagnostic("Domain", f"boolean expected, got field {node.name!r}"))
        return
    if isinstance(node, Const):
        if slot == "x" or slot == "b":
            out.append(Diagnostic("Literal", f"literal {node.value} not allowed in a series slot"))
        return
    if not isinstance(node, Call):
        out.append(Diagnostic("Malformed", f"not an expression node: {node!r}"))
        return
    sig = CATALOG.get(node.op)
    if sig is None:
        out.append(Diagnostic("UnknownOperator", f"unknown operator {node.op!r}"))
        return
    if slot in PARAM_SLOTS:
        out.append(Diagnostic("Domain", f"{node.op}(...) where an integer parameter is expected"))
    if slot == "b" and sig.output != "bool":
        out.append(Diagnostic("Domain", f"{node.op} produces reals but a boolean is required"))
    if sig.needs_groups and not schema.has_groups:
        out.append(Diagnostic("MissingGroups", f"{node.op} requires group labels"))
    if len(node.args) != sig.arity:
        out.append(Diagnostic("Arity", f"{node.op} takes {sig.arity} arguments, got {len(node.args)}"))
        return
    for s, arg in zip(sig.slots, node.args):
        if s in PARAM_SLOTS:
            if not isinstance(arg, Const):
                out.append(Diagnostic("Arity", f"{node.op}: parameter slot needs an integer literal"))
                continue
            try:
                check_param(node.op, s, arg.value)
            except WindowOutOfRange as exc:
                out.append(Diagnostic("WindowOutOfRange", str(exc)))
        else:
            _check(arg, schema, s, out)


# ------------------------------------------------------------- canonicalize


def canonicalize(expr):
    """Sort commutative operands by printed form and drop double negation."""
    if not isinstance(expr, Call):
        return expr
    args = tuple(canonicalize(a) for a in expr.args)
    if expr.op == "neg" and isinstance(args[0], Call) and args[0].op == "neg":
        return args[0].args[0]
    sig = CATALOG.get(expr.op)
    if sig is not None and sig.commutative:
        series = sorted((args[i] for i in sig.series_slots), key=to_text)
        merged, it = list(args), iter(series)
        for i in sig.series_slots:
            merged[i] = next(it)
        args = tuple(merged)
    return Call(expr.op, args)


def expr_hash(expr) -> str:
    """Stable content hash of the canonical form."""
    return hashlib.sha1(to_text(canonicalize(expr)).encode()).hexdigest()[:16]
