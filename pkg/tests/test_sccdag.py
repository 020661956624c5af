import random

import pytest

from midend.analysis import ModuleAnalysis
from midend.graphs import reachable, tarjan_sccs
from midend.interp import run_program
from midend.ir import parse_module
from midend.ir.model import I64_MAX, I64_MIN
from midend.pdg import DATA, REGISTER, DependenceEdge, DependenceGraph
from midend.sccdag import IDENTITIES, SCCKind, build_sccdag

from .helpers import first_loop, load, loop_with_header


def _random_graph(rng, size, density):
    edges = [
        (a, b)
        for a in range(size)
        for b in range(size)
        if a != b and rng.random() < density
    ]
    graph = DependenceGraph(internal=set(range(size)))
    graph.edges = [DependenceEdge(a, b, DATA, "RAW", REGISTER) for a, b in edges]
    return graph, edges


@pytest.mark.parametrize("seed", range(200))
def test_components_are_the_mutual_reachability_classes(seed):
    rng = random.Random(seed)
    size = rng.randint(1, 14)
    graph, edges = _random_graph(rng, size, rng.choice([0.05, 0.15, 0.3]))
    succs = {node: [b for a, b in edges if a == node] for node in range(size)}
    reach = {node: reachable(succs, [node]) | {node} for node in range(size)}

    dag = build_sccdag(graph)

    assert sorted(m for scc in dag.sccs for m in scc.members) == list(range(size))
    for a in range(size):
        for b in range(size):
            same = dag.scc_of(a) is dag.scc_of(b)
            assert same == (b in reach[a] and a in reach[b])
    assert dag.is_acyclic()
    for a, b in edges:
        x, y = dag.scc_of(a).id, dag.scc_of(b).id
        assert x == y or (x, y) in dag.edges


def test_tarjan_handles_long_chains():
    size = 5000
    chain = {node: [node + 1] for node in range(size - 1)}
    chain[size - 1] = [0]
    components = tarjan_sccs(chain)
    assert len(components) == 1
    assert len(components[0]) == size


def _kinds(name, header=None):
    module = load(name)
    loop = loop_with_header(module, header) if header else first_loop(module)
    info = ModuleAnalysis(module).info(loop)
    names = {inst.id: inst.result for inst in module.function(loop.function).instructions()}
    return info.dag, names


@pytest.mark.parametrize(
    "name, accumulator, op",
    [
        ("array_sum", "s", "add"),
        ("array_max", "m", "max"),
        ("array_min_param", "m", "min"),
        ("doall_strided", "x", "xor"),
        ("doall_countdown", "f", "mul"),
    ],
)
def test_reductions_are_recognized(name, accumulator, op):
    dag, names = _kinds(name)
    reducible = [scc for scc in dag.sccs if scc.kind is SCCKind.REDUCIBLE]
    assert len(reducible) == 1
    reduction = reducible[0].reduction
    assert names[reduction.accumulator] == accumulator
    assert reduction.op == op
    assert reduction.identity == IDENTITIES[op]
    assert reduction.members == set(reducible[0].members)


def test_min_max_reduction_keeps_its_compare():
    dag, names = _kinds("array_max")
    reduction = next(scc.reduction for scc in dag.sccs if scc.reduction is not None)
    assert names[reduction.compare] == "gt"
    assert names[reduction.update] == "m.next"


def test_accumulator_with_extra_work_is_sequential():
    dag, names = _kinds("doall_map", header="check")
    kinds = {names[m]: scc.kind for scc in dag.sccs for m in scc.members if names.get(m)}
    assert kinds["h"] is SCCKind.SEQUENTIAL
    assert kinds["h3"] is SCCKind.SEQUENTIAL


def test_pointer_chasing_is_sequential():
    dag, names = _kinds("pointer_chase")
    kinds = {names[m]: scc.kind for scc in dag.sccs for m in scc.members if names.get(m)}
    assert kinds["n.next"] is SCCKind.SEQUENTIAL
    assert kinds["s"] is SCCKind.REDUCIBLE


def test_map_body_is_independent():
    dag, names = _kinds("doall_map", header="map")
    kinds = {names[m]: scc.kind for scc in dag.sccs for m in scc.members if names.get(m)}
    for value in ("p", "v", "w", "x", "q"):
        assert kinds[value] is SCCKind.INDEPENDENT
    assert dag.is_acyclic()
    assert any(line.startswith("SCC#") for line in dag.dump())


_ORDER = {"min": "slt", "max": "sgt"}


def _folded(lines, op, left, right, name):
    if op in _ORDER:
        lines.append(f"  %{name}.keep = {_ORDER[op]} {left}, {right}")
        lines.append(f"  %{name} = select %{name}.keep, {left}, {right}")
    else:
        lines.append(f"  %{name} = {op} {left}, {right}")
    return f"%{name}"


def _accumulate(lines, op, start, values, name):
    acc = start
    for index, value in enumerate(values):
        acc = _folded(lines, op, acc, str(value), f"{name}.{index}")
    return acc


def _reduction_programs(rng):
    op = rng.choice(sorted(IDENTITIES))
    wide = rng.random() < 0.3
    values = [
        rng.randint(I64_MIN, I64_MAX) if wide else rng.randint(-50, 50)
        for _ in range(rng.randint(0, 12))
    ]
    tasks = rng.randint(1, 5)
    initial = rng.randint(-20, 20)

    sequential = ["func @main() -> i64 {", "entry:"]
    total = _accumulate(sequential, op, str(initial), values, "s")
    sequential += [f"  print {total}", f"  ret {total}", "}"]

    privatized = ["func @main() -> i64 {", "entry:"]
    merged = str(initial)
    for task in range(tasks):
        private = _accumulate(privatized, op, str(IDENTITIES[op]), values[task::tasks], f"t{task}")
        merged = _folded(privatized, op, merged, private, f"m{task}")
    privatized += [f"  print {merged}", f"  ret {merged}", "}"]
    return "\n".join(sequential) + "\n", "\n".join(privatized) + "\n"


@pytest.mark.parametrize("seed", range(1000))
def test_private_partials_merge_to_the_sequential_result(seed):
    sequential, privatized = _reduction_programs(random.Random(seed))
    expected = run_program(parse_module(sequential))
    assert expected.trap is None
    assert run_program(parse_module(privatized)).same_behaviour(expected)
