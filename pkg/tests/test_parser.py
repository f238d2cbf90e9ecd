"""Tests for tokenizer, parser, desugaring and pretty-printer round trips."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pichan.core import (Fusion, In, IntLit, NameRef, New, Nil, Out, Par,
                         Repeat, StrLit, free_names, is_core)
from pichan.diag import ParseError
from pichan.parser import (Program, desugar, format_program, parse_program,
                           program_alpha_eq, tokenize)
from pichan.typecheck import INT

from randgen import gen_program

ACCOUNT_EXTERN = """
extern FClass -> class Account {
  void readn() {
    call readn: void;
    return Ret1: void;
  } acceded as {rec S {readn().Ret1().S}}
  int read() {
    call read: void;
    return Ret2: int;
  } acceded as {rec S {read().Ret2(int).S}}
}
"""


def test_parse_account_extern_block():
    program = parse_program(ACCOUNT_EXTERN + "nil")
    assert len(program.externs) == 1
    d = program.externs[0]
    assert d.alias == "FClass"
    assert d.class_name == "Account"
    assert [m.name for m in d.methods] == ["readn", "read"]
    readn, read = d.methods
    assert readn.call_channel.display == "readn"
    assert readn.return_channel.display == "Ret1"
    assert readn.param_sorts == () and readn.return_payload == ()
    assert read.call_channel.display == "read"
    assert read.return_channel.display == "Ret2"
    assert read.param_sorts == () and read.return_payload == (INT,)
    # declared protocols equal the canonical synthesized ones
    for m in d.methods:
        assert m.protocol == m.canonical_automaton()
        assert m.protocol_declared


def test_parse_nil():
    program = parse_program("nil")
    assert program == Program((), Nil())


def test_parse_omitted_acceded_clause():
    src = """
extern A -> class Account {
  int read() {
    call read: void;
    return Ret2: int;
  }
}
nil
"""
    program = parse_program(src)
    m = program.externs[0].methods[0]
    assert not m.protocol_declared
    assert m.protocol == m.canonical_automaton()


def test_parse_output_input_fusion():
    program = parse_program('x!(1, "hi").y?(v).v=true')
    p = program.main
    assert isinstance(p, Out)
    assert p.objects[0] == IntLit(1)
    assert p.objects[1] == StrLit("hi")
    inp = p.cont
    assert isinstance(inp, In) and inp.binding
    fus = inp.cont
    assert isinstance(fus, Fusion)
    assert fus.left == NameRef(inp.objects[0])


def test_parse_free_input_and_new_chain():
    program = parse_program("new a, b in a?<b>.b!()")
    p = program.main
    assert isinstance(p, New) and isinstance(p.body, New)
    inner = p.body.body
    assert isinstance(inner, In) and not inner.binding
    assert inner.subject == p.name
    assert inner.objects == (p.body.name,)


def test_parse_par_right_assoc_and_parens():
    program = parse_program("x!() | y!() | nil")
    p = program.main
    assert isinstance(p, Par) and isinstance(p.right, Par)
    grouped = parse_program("(x!() | y!()) | nil").main
    assert isinstance(grouped.left, Par)


def test_parse_comments_and_strings():
    program = parse_program('// leading comment\nx!("a\\nb") // trailing\n')
    assert program.main.objects == (StrLit("a\nb"),)


def test_parse_negative_int():
    assert parse_program("x!(-7)").main.objects == (IntLit(-7),)


def test_parse_repeated_name_is_same_free_name():
    program = parse_program("x!() | x?<y>")
    assert program.main.left.subject == program.main.right.subject


def test_parse_errors_have_spans():
    with pytest.raises(ParseError) as exc:
        parse_program("x!(")
    d = exc.value.diagnostics[0]
    assert d.code == "E-SYNTAX"
    assert d.span.line == 1


def test_parse_empty_input_rejected():
    with pytest.raises(ParseError):
        parse_program("")
    with pytest.raises(ParseError):
        parse_program("// only a comment\n")


def test_parse_duplicate_extern_channel_rejected():
    src = """
extern A -> class C {
  void m() { call ch: void; return ch: void; }
}
nil
"""
    with pytest.raises(ParseError) as exc:
        parse_program(src)
    assert "declared twice" in exc.value.diagnostics[0].message


def test_parse_unterminated_string():
    with pytest.raises(ParseError):
        parse_program('x!("oops')


def test_tokenize_positions():
    toks = tokenize("x!()\ny?<v>")
    ident = [t for t in toks if t.kind == "ident"]
    assert (ident[0].span.line, ident[0].span.column) == (1, 1)
    assert (ident[1].span.line, ident[1].span.column) == (2, 1)


def test_method_header_mismatch_rejected():
    src = """
extern A -> class C {
  int m() { call m: void; return R: void; }
}
nil
"""
    with pytest.raises(ParseError) as exc:
        parse_program(src)
    assert "return type" in exc.value.diagnostics[0].message


# ---------------------------------------------------------------------------
# desugar


def test_desugar_binding_input():
    program = desugar(parse_program("x?(v).v!()"))
    p = program.main
    assert isinstance(p, New)
    inp = p.body
    assert isinstance(inp, In) and not inp.binding
    assert inp.objects == (p.name,)
    assert inp.cont == Out(p.name, (), Nil())
    assert is_core(p)


def test_desugar_zero_arity_flag_only():
    program = desugar(parse_program("x?().y!()"))
    p = program.main
    assert isinstance(p, In) and not p.binding and p.objects == ()


def test_desugar_nested_no_capture():
    program = parse_program("x?(v).y?(w).v!(w)")
    core = desugar(program).main
    # new v' in x?<v'>. new w' in y?<w'>. v'!(w')
    assert isinstance(core, New)
    inp_x = core.body
    assert isinstance(inp_x.cont, New)
    inp_y = inp_x.cont.body
    assert inp_y.cont.subject == core.name
    assert inp_y.cont.objects == (NameRef(inp_x.cont.name),)
    assert free_names(core) == free_names(program.main)


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_desugar_idempotent_and_preserves_free_names(seed):
    program = gen_program(random.Random(seed))
    once = desugar(program)
    assert is_core(once.main)
    assert desugar(once) == once
    assert free_names(once.main) == free_names(program.main)


# ---------------------------------------------------------------------------
# format round trip


def test_format_nil():
    assert format_program(Program((), Nil())) == "nil\n"


def test_format_account_extern_round_trip():
    program = parse_program(ACCOUNT_EXTERN + "read!() | Ret2?(v).nil")
    text = format_program(program)
    again = parse_program(text)
    assert program_alpha_eq(program, again)


def test_format_escapes_strings():
    program = parse_program('x!("a\\"b\\\\c\\n")')
    again = parse_program(format_program(program))
    assert again.main.objects == program.main.objects


@given(st.integers(0, 10**6))
@settings(max_examples=150, deadline=None)
def test_format_parse_round_trip(seed):
    program = gen_program(random.Random(seed))
    text = format_program(program)
    again = parse_program(text)
    assert program_alpha_eq(program, again)
