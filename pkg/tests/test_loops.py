import random

import pytest

from midend.errors import IrreducibleLoopError, UnknownEntityError
from midend.ir import EntityId, EntityKind, parse_module
from midend.loops import (
    LoopForest,
    build_forest,
    detect_loops,
    find_loop,
    forest_delete_node,
    innermost_loop_of,
    loop_by_key,
    loop_rpo,
    module_loops,
)

from .helpers import load

IRREDUCIBLE = """
func @main(%x: i64) -> i64 {
entry:
  %c = slt %x, 0
  brcond %c, a, b
a:
  br b
b:
  %d = slt %x, 5
  brcond %d, a, out
out:
  ret 0
}
"""


def test_nested_loops_structure():
    module = load("nested_loops")
    outer, inner = detect_loops(module.function("main"))

    assert outer.header == "outer"
    assert outer.preheader == "entry"
    assert outer.latches == ["outer.latch"]
    assert outer.exits == [("outer", "done")]
    assert outer.parent is None and outer.depth == 1

    assert inner.header == "inner"
    assert inner.preheader == "inner.pre"
    assert inner.blocks == {"inner", "inner.body"}
    assert inner.parent == outer.id
    assert inner.depth == 2
    assert inner.blocks < outer.blocks
    assert str(inner) == f"L{inner.id.ordinal}"


def test_loop_ordinal_is_the_header_block():
    module = load("array_squares")
    fn = module.function("main")
    loops = detect_loops(fn)
    assert [loop.header for loop in loops] == ["fill", "sum"]
    for loop in loops:
        assert loop.id.ordinal == fn.block(loop.header).id
        assert find_loop(module, loop.id.ordinal)[1].header == loop.header
    with pytest.raises(UnknownEntityError):
        find_loop(module, 999)


def test_single_block_loop_is_its_own_latch():
    loop = detect_loops(load("dowhile_sum").function("main"))[0]
    assert loop.latches == ["loop"]
    assert loop.exiting_blocks() == ["loop"]


def test_early_exit_has_two_exiting_blocks():
    loop = detect_loops(load("early_exit").function("main"))[0]
    assert loop.exiting_blocks() == ["loop", "body"]


def test_irreducible_flow_is_reported_and_skipped():
    module = parse_module(IRREDUCIBLE)
    with pytest.raises(IrreducibleLoopError, match="irreducible"):
        detect_loops(module.function("main"))
    assert module_loops(module) == []


def test_loop_key_survives_lookup():
    module = load("nested_loops")
    fn, loop = loop_by_key(module, ("main", "inner"))
    assert fn.name == "main"
    assert loop.key == ("main", "inner")
    with pytest.raises(UnknownEntityError):
        loop_by_key(module, ("main", "done"))


def test_innermost_loop_and_rpo():
    module = load("nested_loops")
    fn = module.function("main")
    outer, inner = detect_loops(fn)
    innermost = innermost_loop_of([outer, inner])
    assert innermost["inner.body"] is inner
    assert innermost["outer.latch"] is outer
    assert "done" not in innermost
    assert loop_rpo(fn, outer)[0] == "outer"
    assert set(loop_rpo(fn, outer)) == outer.blocks


def test_forest_delete_node_promotes_children():
    module = load("nested_loops")
    outer, inner = detect_loops(module.function("main"))
    forest = build_forest([outer, inner])
    assert forest.roots == [outer.id]
    assert forest.children[outer.id] == [inner.id]
    assert forest.depth(inner.id) == 2
    assert forest.postorder() == [inner.id, outer.id]

    trimmed = forest_delete_node(forest, outer.id)
    assert trimmed.roots == [inner.id]
    assert trimmed.parent[inner.id] is None
    assert outer.id not in trimmed
    assert forest.roots == [outer.id]
    with pytest.raises(UnknownEntityError):
        forest_delete_node(trimmed, outer.id)


def _random_forest(rng, size):
    forest = LoopForest()
    nodes = [EntityId(EntityKind.LOOP, ordinal) for ordinal in rng.sample(range(100), size)]
    for index, node in enumerate(nodes):
        up = rng.choice(nodes[:index]) if index and rng.random() < 0.7 else None
        forest.parent[node] = up
        forest.children[node] = []
        if up is None:
            forest.roots.append(node)
        else:
            forest.children[up].append(node)
    return forest


def _preorder(forest):
    order = []

    def visit(node):
        order.append(node)
        for child in forest.children.get(node, []):
            visit(child)

    for root in forest.roots:
        visit(root)
    return order


@pytest.mark.parametrize("seed", range(100))
def test_deleting_every_node_keeps_the_forest_consistent(seed):
    rng = random.Random(seed)
    original = _random_forest(rng, rng.randint(1, 20))
    full_order = _preorder(original)

    def surviving_ancestor(node, alive):
        up = original.parent[node]
        while up is not None and up not in alive:
            up = original.parent[up]
        return up

    forest = original
    alive = set(original.nodes())
    for node in rng.sample(sorted(alive), len(alive)):
        forest = forest_delete_node(forest, node)
        alive.discard(node)
        assert set(forest.nodes()) == alive
        assert _preorder(forest) == [n for n in full_order if n in alive]
        for survivor in alive:
            assert forest.parent[survivor] == surviving_ancestor(survivor, alive)
        placed = forest.roots + [c for kids in forest.children.values() for c in kids]
        assert sorted(placed) == sorted(alive)
    assert forest.roots == []
    assert forest.nodes() == []
    assert set(original.nodes()) == set(full_order)
