import pytest

from midend.errors import TransformError
from midend.interp import collect_profile, embed_profile, run_program
from midend.ir import parse_module, verify_module
from midend.pdg import build_pdg
from midend.transforms import (
    MovePoint,
    can_move_before,
    dead_function_elimination,
    licm,
    move_before,
)

from .helpers import PROGRAMS, inputs, load

# move_cases numbering: 0 %buf, 1 %x, 2 %y, 3 %p, 4 store, 5 %q, 6 %v, 7 %z,
# 8 print %z, 9 br, 10 %w, 11 print %w, 12 ret
MOVES = [
    (2, MovePoint("entry", 1), True),
    (6, MovePoint("entry", 4), False),
    (7, MovePoint("entry", 2), False),
    (10, MovePoint("entry"), True),
    (8, MovePoint("tail", 11), True),
    (11, MovePoint("entry"), False),
    (0, MovePoint("entry", 1), False),
    (9, MovePoint("tail", 11), False),
]


@pytest.mark.parametrize("ordinal, point, allowed", MOVES)
def test_move_legality(ordinal, point, allowed):
    module = load("move_cases")
    assert can_move_before(module, ordinal, point, build_pdg(module)) is allowed


@pytest.mark.parametrize("ordinal, point", [(m[0], m[1]) for m in MOVES if m[2]])
def test_legal_moves_keep_behaviour(ordinal, point):
    module = load("move_cases")
    moved = move_before(module, ordinal, point)
    assert verify_module(moved) == []
    for args in inputs("move_cases"):
        assert run_program(moved, args) == run_program(module, args)


def test_illegal_move_is_refused():
    with pytest.raises(TransformError, match="would break a dependence"):
        move_before(load("move_cases"), 6, MovePoint("entry", 4))


TRAP_AFTER_PRINT = """
func @main(%a: i64, %b: i64) -> i64 {
entry:
  print %a
  %q = sdiv %a, %b
  %r = add %a, 1
  ret %q
}
"""


def test_possible_trap_stays_behind_output():
    module = parse_module(TRAP_AFTER_PRINT)
    pdg = build_pdg(module)
    assert not can_move_before(module, 1, MovePoint("entry", 0), pdg)
    assert can_move_before(module, 2, MovePoint("entry", 0), pdg)
    with pytest.raises(TransformError, match="would break a dependence"):
        move_before(module, 1, MovePoint("entry", 0))


def test_output_stays_ahead_of_a_possible_trap():
    module = parse_module(TRAP_AFTER_PRINT)
    assert not can_move_before(module, 0, MovePoint("entry", 2))
    # division by zero must still happen after the print
    assert run_program(module, [7, 0]).output == [7]


def test_move_to_an_unknown_block_is_refused():
    assert not can_move_before(load("move_cases"), 2, MovePoint("nowhere"))


def test_move_point_text():
    assert str(MovePoint("entry")) == "entry:end"
    assert str(MovePoint("tail", 11)) == "tail:#11"


@pytest.mark.parametrize("naive", [False, True])
def test_licm_hoists_a_parameter_expression(naive):
    result = licm(load("licm_simple"), naive=naive)
    assert result.hoisted == {("main", "loop"): 1}


@pytest.mark.parametrize(
    "name, full, naive",
    [("chain_arith", 3, 1), ("chain_load", 3, 1), ("chain_call", 3, 1)],
)
def test_dependence_based_invariants_hoist_whole_chains(name, full, naive):
    module = load(name)
    assert licm(module).total == full
    assert licm(module, naive=True).total == naive


@pytest.mark.parametrize("name", ["licm_simple", "chain_arith", "chain_load", "chain_call"])
@pytest.mark.parametrize("naive", [False, True])
def test_licm_keeps_output_and_saves_steps(name, naive):
    module = load(name)
    hoisted = licm(module, naive=naive).module
    assert verify_module(hoisted) == []
    for args in inputs(name):
        before, after = run_program(module, args), run_program(hoisted, args)
        assert after.output == before.output
        assert after.exit_value == before.exit_value
        assert after.steps <= before.steps
    assert run_program(hoisted, inputs(name)[0]).steps < run_program(module, inputs(name)[0]).steps


@pytest.mark.parametrize("name", PROGRAMS)
@pytest.mark.parametrize("naive", [False, True])
def test_licm_preserves_behaviour_across_the_corpus(name, naive):
    module = load(name)
    hoisted = licm(module, naive=naive).module
    assert verify_module(hoisted) == []
    for args in inputs(name):
        assert run_program(hoisted, args).same_behaviour(run_program(module, args))


@pytest.mark.parametrize("name", ["guarded_div", "call_writes", "print_loop", "pointer_chase"])
def test_licm_leaves_unsafe_code_alone(name):
    result = licm(load(name))
    assert result.total == 0


def test_hot_threshold_needs_a_profile():
    module = load("licm_simple")
    assert licm(module, hot_threshold=0.5).total == 0
    profiled = embed_profile(module, collect_profile(module, [[2]]))
    result = licm(profiled, hot_threshold=0.5)
    assert result.total == 1
    assert "prof" not in [key for key, _ in result.module.metadata]


def test_unreachable_functions_are_removed():
    module = load("dead_island")
    result = dead_function_elimination(module)
    assert result.removed == ["ping", "pong", "unused_leaf"]
    assert [fn.name for fn in result.module.functions] == ["used", "main"]
    assert run_program(result.module) == run_program(module)


def test_function_pointer_targets_survive():
    module = load("funcptr_only")
    result = dead_function_elimination(module)
    assert result.removed == ["orphan"]
    assert result.module.get_function("hidden") is not None
    assert run_program(result.module).output == [42]


def test_nothing_to_remove():
    result = dead_function_elimination(load("recursion"))
    assert result.removed == []


@pytest.mark.parametrize("name", PROGRAMS)
def test_dead_function_elimination_preserves_behaviour_across_the_corpus(name):
    module = load(name)
    result = dead_function_elimination(module)
    assert verify_module(result.module) == []
    assert len(result.module.functions) + len(result.removed) == len(module.functions)
    for args in inputs(name):
        assert run_program(result.module, args).same_behaviour(run_program(module, args))
