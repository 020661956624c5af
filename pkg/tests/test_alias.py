from midend.alias import (
    TOP,
    AbstractObject,
    AliasAnalysis,
    AliasAnswer,
    ModRef,
    ObjectKind,
    compute_points_to,
    normalize,
    overlap,
)
from midend.interp import run_program
from midend.ir import parse_module

from .helpers import load

CELL = AbstractObject(ObjectKind.GLOBAL, "g", 4)
OTHER = AbstractObject(ObjectKind.GLOBAL, "h", 4)

RECURSIVE = """
func @rec(%n: i64) -> i64 {
entry:
  %a = alloca 1
  store %n, %a
  %c = sgt %n, 0
  brcond %c, more, stop
more:
  %m = sub %n, 1
  %r = call @rec(%m)
  %v = load %a
  %s = add %v, %r
  ret %s
stop:
  ret 0
}

func @main() -> i64 {
entry:
  %x = call @rec(3)
  ret %x
}
"""

FLAT = """
func @main() -> i64 {
entry:
  %a = alloca 1
  store 5, %a
  %v = load %a
  ret %v
}
"""


def _by_opcode(module, function, opcode):
    return [inst for inst in module.function(function).instructions() if inst.opcode == opcode]


def test_overlap_answers():
    assert overlap({(CELL, 1)}, {(CELL, 1)}) is AliasAnswer.MUST_ALIAS
    assert overlap({(CELL, 1)}, {(CELL, 2)}) is AliasAnswer.NO_ALIAS
    assert overlap({(CELL, 1)}, {(CELL, TOP)}) is AliasAnswer.MAY_ALIAS
    assert overlap({(CELL, TOP)}, {(CELL, TOP)}) is AliasAnswer.MAY_ALIAS
    assert overlap({(CELL, 0)}, {(OTHER, 0)}) is AliasAnswer.NO_ALIAS
    assert overlap({(CELL, 0), (OTHER, 0)}, {(CELL, 0), (OTHER, 0)}) is AliasAnswer.MAY_ALIAS
    assert overlap(set(), {(CELL, 0)}) is AliasAnswer.NO_ALIAS


def test_normalize_widens_to_top():
    assert normalize({(CELL, 0), (CELL, TOP)}, 8) == {(CELL, TOP)}
    assert normalize({(CELL, 0), (CELL, 1), (CELL, 2)}, 2) == {(CELL, TOP)}
    assert normalize({(CELL, 0), (OTHER, 1)}, 1) == {(CELL, 0), (OTHER, 1)}


def test_variable_index_loses_the_offset():
    module = load("two_objects")
    pts = compute_points_to(module)
    assert pts.dump(module)[:2] == ["pts %a -> {alloca#0@0}", "pts %b -> {alloca#1@0}"]
    assert "pts %pa -> {alloca#0@T}" in pts.dump(module)
    assert "pts %q -> {alloca#1@3}" in pts.dump(module)


def test_distinct_allocations_never_alias():
    module = load("two_objects")
    aa = AliasAnalysis(module)
    store_a, store_b = _by_opcode(module, "main", "store")
    load_v = _by_opcode(module, "main", "load")[0]
    assert aa.alias(store_a, store_b) is AliasAnswer.NO_ALIAS
    assert aa.alias(store_a, load_v) is AliasAnswer.MAY_ALIAS


def test_constant_cell_is_a_must_alias():
    module = parse_module(FLAT)
    aa = AliasAnalysis(module)
    (store,) = _by_opcode(module, "main", "store")
    (read,) = _by_opcode(module, "main", "load")
    assert aa.alias(store, read) is AliasAnswer.MUST_ALIAS


def test_recursive_frames_weaken_must_to_may():
    module = parse_module(RECURSIVE)
    aa = AliasAnalysis(module)
    (store,) = _by_opcode(module, "rec", "store")
    (read,) = _by_opcode(module, "rec", "load")
    assert aa.alias(store, read) is AliasAnswer.MAY_ALIAS


def test_function_pointers_flow_through_memory():
    module = load("icall_table")
    pts = compute_points_to(module)
    (icall,) = _by_opcode(module, "main", "icall")
    assert pts.call_targets[icall.id] == ["double", "negate", "square"]
    target = pts.of("main", icall.operands[0])
    assert {obj.site for obj, _ in target} == {"double", "negate", "square"}


def test_call_mod_ref_summaries():
    module = load("call_writes")
    aa = AliasAnalysis(module)
    (call,) = _by_opcode(module, "main", "call")
    (read,) = _by_opcode(module, "main", "load")
    assert aa.mod_ref_of_call(call, read) is ModRef.MOD_REF
    assert aa.may_write(call)

    pure = load("chain_call")
    aa = AliasAnalysis(pure)
    (square,) = _by_opcode(pure, "main", "call")
    assert aa.footprint(square).empty


def test_cells_returned_by_a_helper_are_distinct_per_call():
    module = load("fresh_cells")
    aa = AliasAnalysis(module)
    store_p, store_q = _by_opcode(module, "main", "store")
    (read,) = _by_opcode(module, "main", "load")
    assert aa.alias(store_p, store_q) is AliasAnswer.MAY_ALIAS
    assert aa.alias(store_p, read) is AliasAnswer.MAY_ALIAS
    assert run_program(module).output == [1]


def test_helper_frame_keeps_its_own_must_alias():
    module = parse_module(
        "func @mk() -> i64 {\nentry:\n  %c = alloca 1\n  store 3, %c\n  %v = load %c\n  ret %v\n}\n\n"
        "func @main() -> i64 {\nentry:\n  %a = call @mk()\n  %b = call @mk()\n  %s = add %a, %b\n  ret %s\n}\n"
    )
    aa = AliasAnalysis(module)
    (store,) = _by_opcode(module, "mk", "store")
    (read,) = _by_opcode(module, "mk", "load")
    assert aa.alias(store, read) is AliasAnswer.MUST_ALIAS
