import pytest

from midend.errors import MidendError
from midend.interp import collect_profile, embed_profile, read_profile, run_program
from midend.ir import link_modules, parse_module, verify_module

from .helpers import load

LIBRARY = """
func @helper(%x: i64) -> i64 {
entry:
  %y = add %x, 1
  ret %y
}
"""


def test_link_renumbers_in_text_order():
    library = parse_module(LIBRARY)
    program = load("while_sum")
    linked = link_modules([library, program])

    assert [fn.name for fn in linked.functions] == ["helper", "main"]
    assert verify_module(linked) == []
    assert linked.shape() == (2 + program.shape()[0], 1 + program.shape()[1], 2)
    assert linked.function("main").entry.instructions[0].id == 2
    assert run_program(linked).exit_value == 45


def test_link_rejects_duplicate_names():
    with pytest.raises(MidendError, match="duplicate function @main"):
        link_modules([load("while_sum"), load("diamond")])


def test_link_rebases_embedded_profiles():
    program = load("while_sum")
    profiled = embed_profile(program, collect_profile(program))
    linked = link_modules([parse_module(LIBRARY), profiled])

    carried = read_profile(linked)
    fresh = collect_profile(linked)
    assert carried is not None
    assert carried.shape == linked.shape()
    assert carried.instructions == fresh.instructions
    assert carried.loop_iterations == fresh.loop_iterations
    assert carried.edges == fresh.edges
