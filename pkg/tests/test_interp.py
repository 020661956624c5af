import pytest

from midend.errors import MidendError, ProfileMismatchError
from midend.interp import (
    TRAP_BAD_ICALL,
    TRAP_DIV_BY_ZERO,
    TRAP_OUT_OF_BOUNDS,
    TRAP_STEP_BUDGET,
    collect_profile,
    embed_profile,
    function_hotness,
    hotness,
    parse_profile_lines,
    profile_lines,
    read_profile,
    run_program,
)
from midend.ir import parse_module, print_module

from .helpers import PROGRAMS, first_loop, inputs, load

# (program, args, printed values, exit value)
EXPECTED = [
    ("straight_line", [3, 4], [14, 11], 14),
    ("straight_line", [-2, 10], [16, 18], 16),
    ("diamond", [3, 9], [6], 6),
    ("diamond", [9, 3], [6], 6),
    ("diamond", [5, 5], [0], 0),
    ("while_sum", [], [45], 45),
    ("while_countdown", [], [77], 77),
    ("while_sle", [], [51], 51),
    ("while_ne", [], [12], 12),
    ("while_update_test", [], [36], 36),
    ("while_sub_step", [], [30], 30),
    ("while_swapped", [], [15], 15),
    ("while_exit_on_true", [], [12], 12),
    ("while_zero_trip", [], [7], 7),
    ("while_param", [10], [45], 45),
    ("while_param", [-5], [0], 0),
    ("dowhile_sum", [], [10], 10),
    ("nested_loops", [], [18], 18),
    ("array_squares", [], [140], 140),
    ("array_sum", [], [28], 28),
    ("array_max", [], [11], 11),
    ("array_min_param", [5], [-3], -3),
    ("array_min_param", [1], [9], 9),
    ("array_min_param", [0], [1000], 1000),
    ("doall_map", [1], [39355], 39355),
    ("doall_map", [-4], [-9850], -9850),
    ("doall_iv_liveout", [7], [7, 106], 113),
    ("doall_iv_liveout", [0], [0, 0], 0),
    ("doall_strided", [20], [12], 12),
    ("doall_strided", [2], [4], 4),
    ("doall_countdown", [6], [720], 720),
    ("doall_countdown", [1], [1], 1),
    ("licm_simple", [2], [70], 70),
    ("chain_arith", [3], [141], 141),
    ("chain_arith", [-1], [21], 21),
    ("chain_load", [], [88], 88),
    ("chain_call", [4], [170], 170),
    ("icall_table", [0, 5], [10], 10),
    ("icall_table", [1, 5], [25], 25),
    ("icall_table", [2, 5], [-5], -5),
    ("icall_loop", [], [6, 3], 9),
    ("pointer_chase", [], [210], 210),
    ("dead_island", [], [42], 42),
    ("funcptr_only", [], [42], 42),
    ("recursion", [5], [120], 120),
    ("recursion", [0], [1], 1),
    ("two_objects", [4], [7], 7),
    ("call_writes", [], [5], 5),
    ("guarded_div", [0, 0], [0], 0),
    ("guarded_div", [3, 12], [24], 24),
    ("early_exit", [8], [2], 2),
    ("early_exit", [100], [-1], -1),
    ("print_loop", [3], [0, 1, 4], 3),
    ("move_cases", [0, 3], [5, 6], 6),
    ("move_cases", [1, 3], [10, 10], 10),
    ("branchy_loop", [10, 3], [145], 145),
    ("branchy_loop", [1, 0], [0], 0),
]


@pytest.mark.parametrize("name, args, output, exit_value", EXPECTED)
def test_reference_results(name, args, output, exit_value):
    result = run_program(load(name), args)
    assert result.trap is None
    assert result.output == output
    assert result.exit_value == exit_value


@pytest.mark.parametrize("name", PROGRAMS)
def test_runs_are_deterministic(name):
    module = load(name)
    for args in inputs(name):
        first = run_program(module, args)
        second = run_program(module, args)
        assert first == second


def test_out_of_bounds_store_traps_after_earlier_output():
    result = run_program(load("trap_oob"))
    assert result.trap == TRAP_OUT_OF_BOUNDS
    assert result.output == [0, 1, 2]


def test_division_by_zero_traps():
    result = run_program(load("guarded_div"), [3, 0])
    assert result.trap == TRAP_DIV_BY_ZERO
    assert result.output == []


def test_step_budget_is_enforced():
    result = run_program(load("while_sum"), step_budget=10)
    assert result.trap == TRAP_STEP_BUDGET
    assert result.steps == 10


def test_icall_of_a_plain_integer_traps():
    module = parse_module(
        """
func @main() -> i64 {
entry:
  %t = add 3, 4
  %r = icall %t(1)
  ret %r
}
"""
    )
    assert run_program(module).trap == TRAP_BAD_ICALL


def test_main_arity_is_checked():
    with pytest.raises(MidendError, match="expects 2 arguments"):
        run_program(load("diamond"), [1])


def test_every_executed_instruction_costs_one_step():
    # entry br, then 11 header visits of 4 instructions and 10 bodies of 3, then print and ret
    result = run_program(load("while_sum"))
    assert result.steps == 1 + 11 * 4 + 10 * 3 + 2


def test_profile_counts_loop_iterations():
    module = load("while_sum")
    profile = collect_profile(module)
    loop = first_loop(module)
    assert profile.loop_invocations[loop.id.ordinal] == 1
    assert profile.loop_iterations[loop.id.ordinal] == 10
    assert profile.total_steps == run_program(module).steps
    assert profile.functions == {0: 1}


def test_zero_trip_loop_counts_an_invocation_without_iterations():
    module = load("while_zero_trip")
    profile = collect_profile(module)
    loop = first_loop(module).id.ordinal
    assert profile.loop_invocations[loop] == 1
    assert loop not in profile.loop_iterations


def test_profiles_merge_over_inputs():
    module = load("while_param")
    loop = first_loop(module).id.ordinal
    profile = collect_profile(module, [[10], [3]])
    assert profile.loop_invocations[loop] == 2
    assert profile.loop_iterations[loop] == 13


def test_embedded_profile_reads_back():
    module = load("array_squares")
    profile = collect_profile(module)
    embedded = embed_profile(module, profile)
    again = read_profile(parse_module(print_module(embedded)))
    assert again == profile
    assert read_profile(module) is None


def test_profile_of_another_module_is_rejected():
    profile = collect_profile(load("diamond"), [[1, 2]])
    with pytest.raises(ProfileMismatchError):
        embed_profile(load("while_sum"), profile)


def test_malformed_profile_line_is_rejected():
    with pytest.raises(ProfileMismatchError):
        parse_profile_lines(["instruction 3"])


def test_profile_lines_list_loop_iterations():
    module = load("while_sum")
    lines = profile_lines(collect_profile(module))
    assert lines[0] == "shape {} {} {}".format(*module.shape())
    assert f"loop-iterations {first_loop(module).id.ordinal} 10" in lines


def test_hotness_is_the_share_of_steps_inside_the_loop():
    module = load("while_sum")
    profile = collect_profile(module)
    loop = first_loop(module)
    assert hotness(module, loop, profile) == pytest.approx(74 / 77)
    assert hotness(module, loop) == 0.0
    assert function_hotness(module, "main", profile) == 1.0
