import pytest

from midend.errors import ParseError, VerificationError
from midend.ir import ensure_valid, parse_module, parse_with_lines, print_module, verify_module

from .helpers import PROGRAMS, load, source


@pytest.mark.parametrize("name", PROGRAMS)
def test_corpus_programs_verify(name):
    assert verify_module(load(name)) == []


@pytest.mark.parametrize("name", PROGRAMS)
def test_printing_is_a_fixpoint(name):
    printed = print_module(load(name))
    assert print_module(parse_module(printed)) == printed


def test_ordinals_follow_text_order():
    module = load("move_cases")
    located = module.instruction(6)
    assert located.instruction.opcode == "load"
    assert located.block.label == "entry"
    assert module.shape() == (13, 2, 1)


def _rules(text):
    return {d.rule for d in verify_module(parse_module(text))}


def test_alloca_outside_entry_is_rejected():
    text = """
func @main() -> i64 {
entry:
  br next
next:
  %p = alloca 2
  ret 0
}
"""
    assert "alloca-position" in _rules(text)


def test_phi_must_name_every_predecessor():
    text = """
func @main(%a: i64) -> i64 {
entry:
  %c = slt %a, 0
  brcond %c, left, right
left:
  br join
right:
  br join
join:
  %x = phi [left: 1]
  ret %x
}
"""
    assert "phi-incomplete" in _rules(text)


def test_only_function_pointers_may_be_stored():
    text = """
func @main() -> i64 {
entry:
  %p = alloca 2
  store %p, %p
  ret 0
}
"""
    assert "store-value" in _rules(text)


def test_use_before_definition_breaks_dominance():
    text = """
func @main(%a: i64) -> i64 {
entry:
  %c = slt %a, 0
  brcond %c, left, join
left:
  %x = add %a, 1
  br join
join:
  %y = add %x, 1
  ret %y
}
"""
    assert "ssa-dominance" in _rules(text)


def test_ensure_valid_raises_with_diagnostics():
    text = """
func @main() -> i64 {
entry:
  %q = sdiv 1, 0
  ret %q
}
"""
    with pytest.raises(VerificationError) as info:
        ensure_valid(parse_module(text))
    assert [d.rule for d in info.value.diagnostics] == ["div-by-zero-literal"]


def test_parse_error_reports_line():
    text = "func @main() -> i64 {\nentry:\n  %x = add %y, 1\n  ret %x\n}\n"
    with pytest.raises(ParseError) as info:
        parse_module(text)
    assert info.value.line == 3
    assert "%y" in info.value.message


@pytest.mark.parametrize(
    "literal, fits",
    [
        ("9223372036854775807", True),
        ("-9223372036854775808", True),
        ("9223372036854775808", False),
        ("-9223372036854775809", False),
    ],
)
def test_integer_literals_must_fit_in_i64(literal, fits):
    text = f"func @main() -> i64 {{\nentry:\n  %x = add 0, 1\n  %y = add %x, {literal}\n  ret %y\n}}\n"
    if fits:
        added = parse_module(text).function("main").block("entry").instructions[1]
        assert added.operands[1].value == int(literal)
        return
    with pytest.raises(ParseError) as info:
        parse_module(text)
    assert info.value.line == 4
    assert "i64" in info.value.message


def test_oversized_global_initializer_is_rejected():
    with pytest.raises(ParseError, match="does not fit in i64"):
        parse_module("global @g: i64[1] = [99999999999999999999]\n")


def test_parse_error_on_unknown_label():
    text = "func @main() -> i64 {\nentry:\n  br nowhere\n}\n"
    with pytest.raises(ParseError) as info:
        parse_module(text)
    assert info.value.line == 3


def test_parse_with_lines_maps_instructions_to_source():
    module, lines = parse_with_lines(source("while_sum"))
    assert lines[0] == 4
    text_lines = source("while_sum").splitlines()
    for _, _, inst in module.instructions():
        assert inst.opcode in text_lines[lines[inst.id] - 1]


def test_metadata_survives_printing():
    text = source("while_sum") + "\n!note hello world\n"
    module = parse_module(text)
    assert module.metadata_values("note") == ["hello world"]
    assert "!note hello world" in print_module(module)
