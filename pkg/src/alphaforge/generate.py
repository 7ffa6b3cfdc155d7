"""Random expression instantiation and single-step mutation."""
from __future__ import annotations

import random
from typing import Mapping, Optional

from .errors import NoLegalMove
from .lang import (
    CATALOG,
    DEFAULT_MAX_DEPTH,
    PARAM_SLOTS,
    Call,
    Const,
    Field,
    PanelSchema,
    depth,
    fields_used,
    output_domain,
)

DEFAULT_WINDOWS = (5, 10, 21, 63)
BUCKET_CHOICES = (2, 3, 4, 5, 10)
LITERAL_CHOICES = (-1, 0, 1)
TEMPLATE_PROB = 0.5
LEAF_PROB = 0.3
LITERAL_BRANCH_PROB = 0.3

MOVES = (
    "replace_operator",
    "jitter_window",
    "swap_field",
    "wrap_root",
    "replace_subtree",
    "prune_to_child",
)

WRAP_OPS = ("neg", "abs", "sign", "log", "sqrt", "inverse", "sin", "cos",
            "rank", "zscore", "demean", "normalize",
            "group_rank", "group_mean", "group_zscore")

_TS_UNARY = [n for n, s in CATALOG.items() if s.slots == "xw"]
_MATH_BINARY = ["add", "subtract", "multiply", "divide"]


def _min_depth(sig):
    """Smallest subtree depth that can realize this operator."""
    return 2 if "b" in sig.slots else 1


def _eligible_ops(schema, want, budget):
    out = []
    for sig in CATALOG.values():
        if sig.needs_groups and not schema.has_groups:
            continue
        if want == "b" and sig.output != "bool":
            continue
        if _min_depth(sig) <= budget:
            out.append(sig)
    return out


class _Builder:
    def __init__(self, rng: random.Random, schema: PanelSchema, windows: Optional[Mapping]):
        self.rng = rng
        self.schema = schema
        self.fields = sorted(schema.fields)
        self.windows = {k: tuple(sorted(v)) for k, v in (windows or {}).items()}

    def menu(self, subtree):
        names = fields_used(subtree)
        if names and names[0] in self.windows:
            return self.windows[names[0]]
        return DEFAULT_WINDOWS

    def field(self):
        return Field(self.rng.choice(self.fields))

    def param(self, op, slot, anchor, index=0):
        if slot == "w":
            return Const(self.rng.choice(self.menu(anchor)))
        if slot == "q":
            return Const(self.rng.choice(BUCKET_CHOICES))
        # tail(x, lo, hi, v): keep lo < hi
        if op == "tail":
            return Const((-1, 1, self.rng.choice(LITERAL_CHOICES))[index])
        return Const(self.rng.choice(LITERAL_CHOICES))

    def grow(self, budget, want="x", root=False):
        """Random subtree of depth <= budget producing the wanted domain."""
        if want == "v" and not root and self.rng.random() < LITERAL_BRANCH_PROB:
            return Const(self.rng.choice(LITERAL_CHOICES))
        can_leaf = want != "b"
        if can_leaf and (budget == 0 or (not root and self.rng.random() < LEAF_PROB)):
            return self.field()
        ops = _eligible_ops(self.schema, want, budget)
        sig = self.rng.choice(ops)
        return self.call(sig, budget)

    def call(self, sig, budget):
        args = [None] * sig.arity
        for i, slot in enumerate(sig.slots):
            if slot not in PARAM_SLOTS:
                args[i] = self.grow(budget - 1, slot)
        anchor = next((a for a in args if a is not None and not isinstance(a, Const)), None)
        for k, (i, slot) in enumerate((i, s) for i, s in enumerate(sig.slots) if s in PARAM_SLOTS):
            args[i] = self.param(sig.name, slot, anchor, k)
        return Call(sig.name, tuple(args))

    # Table I style templates and the alpha shapes reported alongside them
    def template(self, max_depth):
        f = self.field
        rng = self.rng

        def ts(op, x, *extra):
            return Call(op, (x, *extra, Const(rng.choice(self.menu(x)))))

        choices = [
            (1, lambda: ts(rng.choice(_TS_UNARY), f())),
            (1, lambda: Call(rng.choice(_MATH_BINARY), (f(), f()))),
            (3, lambda: Call("neg", (ts("ts_arg_max", Call("multiply", (f(), f()))),))),
            (3, lambda: ts("ts_ir", ts("ts_zscore", Call("multiply", (f(), f()))))),
            (1, lambda: ts("ts_regression", f(), f())),
            (2, lambda: Call("rank", (ts(rng.choice(["ts_corr", "ts_co_skewness", "ts_co_kurtosis"]), f(), f()),))),
            (2, lambda: Call("normalize", (ts("ts_arg_max", f()),))),
            (2, lambda: Call("rank", (Call("divide", (f(), f())),))),
        ]
        usable = [make for need, make in choices if need <= max_depth]
        return rng.choice(usable)()


def random_instantiate(rng_seed: int, schema: PanelSchema, windows: Optional[Mapping] = None,
                       max_depth: int = DEFAULT_MAX_DEPTH):
    """Draw a valid random expression; deterministic in ``rng_seed``.

    Half the draws instantiate a template shape (time-series op on a field,
    field arithmetic, the reversal and IR-of-zscore templates, rolling
    regression, ranked co-moments); the rest grow a random tree over the
    whole catalog.
    """
    if not schema.fields:
        raise ValueError("schema has no fields")
    rng = random.Random(rng_seed)
    b = _Builder(rng, schema, windows)
    if max_depth >= 1 and rng.random() < TEMPLATE_PROB:
        return b.template(max_depth)
    return b.grow(max(max_depth, 0), "x", root=True)


# ------------------------------------------------------------------ mutation


def _nodes(expr, path=(), slot="x"):
    """Yield (path, node, slot kind) for every node, pre-order."""
    yield path, expr, slot
    if isinstance(expr, Call):
        for i, (s, a) in enumerate(zip(CATALOG[expr.op].slots, expr.args)):
            yield from _nodes(a, path + (i,), s)


def _replace(expr, path, new):
    if not path:
        return new
    i = path[0]
    args = list(expr.args)
    args[i] = _replace(args[i], path[1:], new)
    return Call(expr.op, tuple(args))


def _node_depth(path):
    return len(path)


def _same_signature(sig, schema):
    return [
        s.name for s in CATALOG.values()
        if s.name != sig.name and s.slots == sig.slots and s.output == sig.output
        and (schema.has_groups or not s.needs_groups)
    ]


def _parent_of(expr, path):
    node = expr
    for i in path[:-1]:
        node = node.args[i]
    return node


class _Mutator:
    def __init__(self, rng, expr, schema, windows, max_depth):
        self.rng = rng
        self.expr = expr
        self.schema = schema
        self.b = _Builder(rng, schema, windows)
        self.max_depth = max_depth
        self.nodes = list(_nodes(expr))

    def replace_operator(self):
        opts = [(p, n) for p, n, _ in self.nodes if isinstance(n, Call) and _same_signature(CATALOG[n.op], self.schema)]
        if not opts:
            return None
        path, node = self.rng.choice(opts)
        op = self.rng.choice(_same_signature(CATALOG[node.op], self.schema))
        return _replace(self.expr, path, Call(op, node.args))

    def jitter_window(self):
        opts = []
        for p, n, s in self.nodes:
            if s == "w":
                parent = _parent_of(self.expr, p)
                anchor = next((a for a in parent.args if not isinstance(a, Const)), None)
                menu = [w for w in self.b.menu(anchor) if w != n.value]
                if menu:
                    opts.append((p, menu))
        if not opts:
            return None
        path, menu = self.rng.choice(opts)
        return _replace(self.expr, path, Const(self.rng.choice(menu)))

    def swap_field(self):
        opts = [(p, n) for p, n, _ in self.nodes if isinstance(n, Field)]
        others = lambda name: [f for f in self.b.fields if f != name]  # noqa: E731
        opts = [(p, n) for p, n in opts if others(n.name)]
        if not opts:
            return None
        path, node = self.rng.choice(opts)
        return _replace(self.expr, path, Field(self.rng.choice(others(node.name))))

    def wrap_root(self):
        if depth(self.expr) + 1 > self.max_depth:
            return None
        ops = [o for o in WRAP_OPS if self.schema.has_groups or not CATALOG[o].needs_groups]
        return Call(self.rng.choice(ops), (self.expr,))

    def replace_subtree(self):
        opts = [(p, s) for p, n, s in self.nodes if s not in PARAM_SLOTS
                and self.max_depth - _node_depth(p) >= (1 if s == "b" else 0)]
        if not opts:
            return None
        path, slot = self.rng.choice(opts)
        budget = min(2, self.max_depth - _node_depth(path))
        new = self.b.grow(budget, slot, root=not path)
        if not path and isinstance(new, Const):
            return None
        return _replace(self.expr, path, new)

    def prune_to_child(self):
        opts = []
        for p, n, s in self.nodes:
            if not isinstance(n, Call):
                continue
            for i, cs in enumerate(CATALOG[n.op].slots):
                child = n.args[i]
                if cs in PARAM_SLOTS or isinstance(child, Const):
                    continue
                if s == "b" and output_domain(child) != "bool":
                    continue
                if s in PARAM_SLOTS:
                    continue
                opts.append((p, child))
        if not opts:
            return None
        path, child = self.rng.choice(opts)
        return _replace(self.expr, path, child)


def mutate(rng_seed: int, expr, schema: PanelSchema, windows: Optional[Mapping] = None,
           max_depth: int = DEFAULT_MAX_DEPTH, return_move: bool = False):
    """Apply one randomly chosen legal move.

    Moves are tried in a seed-determined random order; the first one that
    yields a different expression wins. When nothing applies (for instance a
    single field over a one-field schema) a fresh random expression is
    returned instead.
    """
    rng = random.Random(rng_seed)
    m = _Mutator(rng, expr, schema, windows, max_depth)
    order = list(MOVES)
    rng.shuffle(order)
    for move in order:
        for _ in range(4):
            out = getattr(m, move)()
            if out is None:
                break
            if out != expr and depth(out) <= max_depth:
                return (out, move) if return_move else out
    fresh = random_instantiate(rng.getrandbits(63), schema, windows, max_depth)
    return (fresh, "fallback") if return_move else fresh


def mutate_strict(rng_seed, expr, schema, windows=None, max_depth=DEFAULT_MAX_DEPTH):
    """Like ``mutate`` but raises NoLegalMove instead of falling back."""
    out, move = mutate(rng_seed, expr, schema, windows, max_depth, return_move=True)
    if move == "fallback":
        raise NoLegalMove(f"no legal move for {expr!r}")
    return out
