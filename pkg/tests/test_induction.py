from collections import defaultdict

import pytest

from midend.analysis import ModuleAnalysis
from midend.induction import trip_count
from midend.interp import Observer, collect_profile, run_program
from midend.invariants import dependence_only_rejections, is_invariant, naive_is_invariant
from midend.ir import compute_dominators, parse_module

from .helpers import PROGRAMS, first_loop, inputs, load, loop_with_header

TRIPS = [
    ("while_sum", "loop", 10),
    ("while_countdown", "loop", 7),
    ("while_sle", "loop", 6),
    ("while_ne", "loop", 3),
    ("while_update_test", "loop", 9),
    ("while_sub_step", "loop", 6),
    ("while_swapped", "loop", 3),
    ("while_exit_on_true", "loop", 4),
    ("while_zero_trip", "loop", 0),
    ("dowhile_sum", "loop", 5),
    ("array_sum", "loop", 6),
    ("array_max", "loop", 7),
    ("array_squares", "fill", 8),
    ("array_squares", "sum", 8),
    ("nested_loops", "outer", 4),
    ("nested_loops", "inner", 3),
]


def _names(module, function="main"):
    return {inst.id: inst.result for inst in module.function(function).instructions()}


@pytest.mark.parametrize("name, header, trips", TRIPS)
def test_closed_form_trip_counts(name, header, trips):
    module = load(name)
    info = ModuleAnalysis(module).info(loop_with_header(module, header))
    assert info.trip_count == trips


@pytest.mark.parametrize("name", [name for name in PROGRAMS if name != "trap_oob"])
def test_trip_counts_agree_with_profiles(name):
    module = load(name)
    analysis = ModuleAnalysis(module)
    profile = collect_profile(module, inputs(name))
    for loop in analysis.loops:
        trips = analysis.info(loop).trip_count
        if trips is None:
            continue
        ordinal = loop.id.ordinal
        expected = trips * profile.loop_invocations.get(ordinal, 0)
        assert profile.loop_iterations.get(ordinal, 0) == expected


def test_run_time_bound_has_no_literal_trip_count():
    module = load("while_param")
    info = ModuleAnalysis(module).info(first_loop(module))
    iv, governing = info.governing
    assert iv.name == "i"
    assert governing.predicate == "slt"
    assert governing.trip_count is None
    assert info.trip_count is None


@pytest.mark.parametrize("name", ["early_exit", "pointer_chase"])
def test_loops_without_a_governing_variable(name):
    module = load(name)
    assert ModuleAnalysis(module).info(first_loop(module)).governing is None


def test_latch_only_recognizer_misses_while_loops():
    analysis = ModuleAnalysis(load("while_sum"))
    info = analysis.info(analysis.loops[0])
    assert info.governing is not None
    assert info.dowhile_governing is None

    analysis = ModuleAnalysis(load("dowhile_sum"))
    info = analysis.info(analysis.loops[0])
    assert info.dowhile_governing is not None
    assert info.dowhile_governing[1].compares_update


def test_governing_predicate_is_normalized():
    module = load("while_exit_on_true")
    _, governing = ModuleAnalysis(module).info(first_loop(module)).governing
    assert governing.predicate == "slt"
    assert governing.while_shaped

    module = load("while_swapped")
    _, governing = ModuleAnalysis(module).info(first_loop(module)).governing
    assert governing.predicate == "slt"


def test_basic_and_derived_variables():
    module = load("nested_loops")
    names = _names(module)
    info = ModuleAnalysis(module).info(loop_with_header(module, "inner"))
    by_name = {iv.name: iv for iv in info.ivs}
    assert by_name["j"].is_basic
    assert by_name["j"].literal_step == 1
    assert names[by_name["j"].update] == "j.next"
    assert by_name["ij"].derived_from == "j"
    assert by_name["ij"].coefficient is None
    assert "t" not in by_name


def test_subtraction_step_is_negated():
    module = load("while_sub_step")
    info = ModuleAnalysis(module).info(first_loop(module))
    (iv,) = [iv for iv in info.ivs if iv.is_basic]
    assert iv.literal_step == -2
    assert str(iv) == "%i start=10 step=-2"


@pytest.mark.parametrize(
    "predicate, first, step, bound, expected",
    [
        ("slt", 0, 1, 10, 10),
        ("sle", 0, 2, 9, 5),
        ("sgt", 10, -3, 0, 4),
        ("sge", 10, -2, 0, 6),
        ("ne", 0, 4, 12, 3),
        ("ne", 0, 3, 10, None),
        ("slt", 12, 1, 10, 0),
        ("slt", 5, -1, 10, None),
    ],
)
def test_trip_count_formula(predicate, first, step, bound, expected):
    assert trip_count(predicate, first, step, bound) == expected


@pytest.mark.parametrize(
    "name, full, naive",
    [
        ("chain_arith", {"x", "y", "z"}, {"x"}),
        ("chain_load", {"g", "f", "f2"}, {"g"}),
        ("chain_call", {"q", "q1", "q2"}, {"q"}),
    ],
)
def test_dependence_walk_finds_more_invariants(name, full, naive):
    module = load(name)
    names = _names(module)
    info = ModuleAnalysis(module).info(first_loop(module))
    assert {names[m] for m in info.invariants.members} == full
    assert {names[m] for m in info.naive.members} == naive


@pytest.mark.parametrize("name", [name for name in PROGRAMS if name != "trap_oob"])
def test_naive_invariants_are_a_subset(name):
    module = load(name)
    analysis = ModuleAnalysis(module)
    for loop in analysis.loops:
        info = analysis.info(loop)
        extra = info.naive.members - info.invariants.members
        assert extra == dependence_only_rejections(info.naive, info.invariants, module, loop, info.ldg)


class _ValuesPerInvocation(Observer):
    """Collects the values an instruction produces, grouped by invocation of one loop.

    A result is read at the next event of the same frame, after the instruction ran.
    """

    def __init__(self, loop, watched):
        self.loop = loop
        self.watched = watched
        self.seen = defaultdict(set)
        self.pending = {}
        self.run = 0

    def _settle(self):
        if not self.machine.stack:
            return
        frame = self.machine.stack[-1]
        waiting = self.pending.pop(id(frame), None)
        if waiting is not None:
            inst, invocation = waiting
            self.seen[(self.run, inst.id, invocation)].add(frame.values[inst.result])

    def on_function(self, fn):
        self._settle()

    def on_block(self, fn, block, prev):
        self._settle()

    def on_instruction(self, fn, inst):
        self._settle()
        if fn.name != self.loop.function or inst.id not in self.watched:
            return
        frame = self.machine.stack[-1]
        for active, invocation, _ in frame.loops:
            if active.header == self.loop.header:
                self.pending[id(frame)] = (inst, invocation)


@pytest.mark.parametrize("name", [name for name in PROGRAMS if name != "trap_oob"])
def test_invariants_take_one_value_per_loop_invocation(name):
    module = load(name)
    analysis = ModuleAnalysis(module)
    for loop in analysis.loops:
        fn = module.function(loop.function)
        watched = {
            inst.id
            for inst in fn.instructions()
            if inst.id in analysis.info(loop).invariants and inst.result is not None
        }
        if not watched:
            continue
        observer = _ValuesPerInvocation(loop, watched)
        for run, args in enumerate(inputs(name)):
            observer.run = run
            observer.pending.clear()
            run_program(module, args, observer=observer)
        for (run, ordinal, invocation), values in observer.seen.items():
            assert len(values) == 1, (loop.header, run, ordinal, invocation, values)


def test_single_instruction_queries():
    module = load("chain_arith")
    analysis = ModuleAnalysis(module)
    loop = first_loop(module)
    ldg = analysis.info(loop).ldg
    fn = module.function("main")
    by_name = {inst.result: inst for inst in fn.instructions() if inst.result}

    assert is_invariant(by_name["z"], loop, ldg, module)
    assert not is_invariant(by_name["u"], loop, ldg, module)
    assert not is_invariant(by_name["i"], loop, ldg, module)
    dom = compute_dominators(fn)
    assert naive_is_invariant(by_name["x"], loop, dom, analysis.aa)
    assert not naive_is_invariant(by_name["y"], loop, dom, analysis.aa)


STORE_LOOP = """
global @g: i64[1]

func @main(%k: i64) -> i64 {
entry:
  br loop
loop:
  %i = phi [entry: 0], [loop: %i.next]
  store %k, @g
  %v = load @g
  %i.next = add %i, 1
  %c = slt %i.next, 4
  brcond %c, loop, done
done:
  %r = load @g
  ret %r
}
"""

READ_BEFORE_STORE = STORE_LOOP.replace(
    "  store %k, @g\n  %v = load @g\n", "  %v = load @g\n  store %k, @g\n"
)

CALLS_IN_NEST = """
global @t: i64[1] = [5]

func @peek() -> i64 {
entry:
  %v = load @t
  ret %v
}

func @read_cell(%p: ptr) -> i64 {
entry:
  %v = load %p
  ret %v
}

func @read_table(%p: ptr) -> i64 {
entry:
  %v = load %p
  ret %v
}

func @main(%n: i64) -> i64 {
entry:
  %cell = alloca 1
  store 3, %cell
  br outer
outer:
  %i = phi [entry: 0], [outer.latch: %i.next]
  %a = call @peek()
  %b = call @read_cell(%cell)
  %c = call @read_table(@t)
  br inner
inner:
  %j = phi [outer: 0], [inner: %j.next]
  store %j, %cell
  %j.next = add %j, 1
  %jc = slt %j.next, 2
  brcond %jc, inner, outer.latch
outer.latch:
  %i.next = add %i, 1
  %ic = slt %i.next, %n
  brcond %ic, outer, done
done:
  ret %i.next
}
"""


def _naive_query(text, header):
    module = parse_module(text)
    analysis = ModuleAnalysis(module)
    loop = loop_with_header(module, header)
    fn = module.function("main")
    dom = compute_dominators(fn)
    by_opcode = {}
    for inst in loop.instructions(fn):
        by_opcode.setdefault(inst.opcode, []).append(inst)
    return module, analysis, loop, dom, by_opcode


def test_store_dominating_every_read_is_operand_invariant():
    module, analysis, loop, dom, ops = _naive_query(STORE_LOOP, "loop")
    (store,) = ops["store"]
    (read,) = ops["load"]
    assert naive_is_invariant(store, loop, dom, analysis.aa)
    assert not naive_is_invariant(read, loop, dom, analysis.aa)

    info = analysis.info(loop)
    assert store.id not in info.invariants
    assert dependence_only_rejections(info.naive, info.invariants, module, loop, info.ldg) == {store.id}


def test_store_after_an_in_loop_read_is_not_operand_invariant():
    _, analysis, loop, dom, ops = _naive_query(READ_BEFORE_STORE, "loop")
    (store,) = ops["store"]
    assert not naive_is_invariant(store, loop, dom, analysis.aa)


def test_call_rules_consult_arguments_and_inner_loops():
    _, analysis, loop, dom, ops = _naive_query(CALLS_IN_NEST, "outer")
    peek, cell, table = ops["call"]
    assert not naive_is_invariant(peek, loop, dom, analysis.aa)
    assert not naive_is_invariant(cell, loop, dom, analysis.aa)
    assert naive_is_invariant(table, loop, dom, analysis.aa)
