import random

import pytest
from hypothesis import given, settings, strategies as st

from alphaforge.errors import ArityError, ExprSyntaxError, NoLegalMove, UnknownOperator, WindowOutOfRange
from alphaforge.generate import MOVES, mutate, mutate_strict, random_instantiate
from alphaforge.lang import (CATALOG, Call, Const, Field, PanelSchema, canonicalize, depth, expr_hash, parse,
                             to_text, validate)

SCHEMA = PanelSchema(frozenset({"close", "volume", "open"}), True)
WINDOWS = {"close": (5, 10, 20), "volume": (5, 10, 20), "open": (21, 63)}

seeds = st.integers(min_value=0, max_value=2**62)


def test_parse_nested_example():
    e = parse("rank(ts_corr(close, volume, 20))")
    assert e == Call("rank", (Call("ts_corr", (Field("close"), Field("volume"), Const(20))),))


def test_infix_desugars():
    assert parse("close / volume") == parse("divide(close, volume)")
    assert parse("close + volume * open") == parse("add(close, multiply(volume, open))")
    assert parse("close - volume - open") == parse("subtract(subtract(close, volume), open)")
    assert parse("-close") == parse("neg(close)")
    assert parse("(close + volume) * open") == parse("multiply(add(close, volume), open)")


def test_parse_errors():
    with pytest.raises(ArityError):
        parse("ts_mean(close)")
    with pytest.raises(UnknownOperator):
        parse("frobnicate(close)")
    with pytest.raises(WindowOutOfRange):
        parse("ts_mean(close, 1)")
    with pytest.raises(WindowOutOfRange):
        parse("ts_mean(close, 253)")
    with pytest.raises(ExprSyntaxError) as exc:
        parse("rank(close")
    assert exc.value.position is not None
    with pytest.raises(ExprSyntaxError):
        parse("close $ volume")


def test_print_examples():
    e = Call("neg", (Call("ts_arg_max", (Call("multiply", (Field("x"), Field("y"))), Const(10))),))
    assert to_text(e) == "neg(ts_arg_max(multiply(x, y), 10))"
    assert to_text(Field("close")) == "close"


def test_validate_examples():
    codes = {d.code for d in validate(parse("and(rank(close), rank(volume))"), SCHEMA)}
    assert "Domain" in codes
    no_groups = PanelSchema(frozenset({"close"}), False)
    assert "MissingGroups" in {d.code for d in validate(parse("group_rank(close)"), no_groups)}
    assert validate(parse("ts_corr(close, volume, 20)"), SCHEMA) == []
    assert "UnknownField" in {d.code for d in validate(parse("rank(nope)"), SCHEMA)}
    assert validate(parse("if_else(greater(close, open), close, -1)"), SCHEMA) == []


def test_canonicalize_examples():
    assert canonicalize(parse("add(volume, close)")) == parse("add(close, volume)")
    assert canonicalize(parse("neg(neg(rank(close)))")) == parse("rank(close)")
    assert expr_hash(parse("add(volume, close)")) == expr_hash(parse("add(close, volume)"))
    assert expr_hash(parse("subtract(volume, close)")) != expr_hash(parse("subtract(close, volume)"))


def test_catalog_signatures_unique():
    assert len(CATALOG) == len({s.name for s in CATALOG.values()})


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_round_trip_and_idempotence(seed):
    e = random_instantiate(seed, SCHEMA, WINDOWS, 6)
    assert parse(to_text(e)) == e
    c = canonicalize(e)
    assert canonicalize(c) == c
    assert validate(e, SCHEMA, 6) == []


def test_random_instantiate_deterministic():
    assert random_instantiate(42, SCHEMA, WINDOWS) == random_instantiate(42, SCHEMA, WINDOWS)


def test_random_depth3_always_valid():
    for s in range(10_000):
        e = random_instantiate(s, SCHEMA, WINDOWS, 3)
        assert depth(e) <= 3
        assert not validate(e, SCHEMA, 3), to_text(e)


def _is_ir_template(e):
    return (isinstance(e, Call) and e.op == "ts_ir" and isinstance(e.args[0], Call)
            and e.args[0].op == "ts_zscore" and isinstance(e.args[0].args[0], Call)
            and e.args[0].args[0].op == "multiply")


def test_ir_template_reachable():
    assert any(_is_ir_template(random_instantiate(s, SCHEMA, WINDOWS, 6)) for s in range(10_000))


def test_windows_from_menu():
    for s in range(500):
        e = random_instantiate(s, SCHEMA, WINDOWS, 4)
        stack = [e]
        while stack:
            n = stack.pop()
            if isinstance(n, Call):
                sig = CATALOG[n.op]
                for slot, a in zip(sig.slots, n.args):
                    if slot == "w":
                        assert a.value in {5, 10, 20, 21, 63}
                    stack.append(a)


def test_jitter_window_contract():
    e = parse("ts_mean(close, 20)")
    outs = {mutate(s, e, SCHEMA, WINDOWS, return_move=True) for s in range(300)}
    jittered = [o for o, m in outs if m == "jitter_window"]
    assert jittered
    for o in jittered:
        assert o.op == "ts_mean" and o.args[0] == Field("close") and o.args[1].value in {5, 10}


def test_all_moves_used():
    e = parse("rank(ts_corr(close, volume, 10))")
    moves = {mutate(s, e, SCHEMA, WINDOWS, return_move=True)[1] for s in range(500)}
    assert set(MOVES) <= moves


@settings(max_examples=300, deadline=None)
@given(seeds, seeds)
def test_mutate_valid_and_deterministic(s1, s2):
    e = random_instantiate(s1, SCHEMA, WINDOWS, 5)
    a = mutate(s2, e, SCHEMA, WINDOWS, 5)
    assert a == mutate(s2, e, SCHEMA, WINDOWS, 5)
    assert a != e
    assert not validate(a, SCHEMA, 5)
    assert depth(a) <= 5


def test_mutate_10k_valid():
    rng = random.Random(0)
    for _ in range(10_000):
        e = random_instantiate(rng.getrandbits(32), SCHEMA, WINDOWS, 4)
        out = mutate(rng.getrandbits(32), e, SCHEMA, WINDOWS, 4)
        assert not validate(out, SCHEMA, 4)


def test_no_legal_move_falls_back():
    one = PanelSchema(frozenset({"close"}), False)
    e = Field("close")
    with pytest.raises(NoLegalMove):
        mutate_strict(0, e, one, {"close": (5,)}, max_depth=0)
    out = mutate(0, e, one, {"close": (5,)}, max_depth=0)
    assert out == Field("close") or not validate(out, one, 0)
