import random

import pytest

from midend.ir import VIRTUAL_EXIT, Direction, compute_dominators, parse_module
from midend.pdg import control_dependences

from .helpers import load, random_cfg


def test_forward_dominators_of_a_diamond():
    fn = load("diamond").function("main")
    dom = compute_dominators(fn)
    assert dom.root == "entry"
    assert dom.idom == {"left": "entry", "right": "entry", "join": "entry"}
    assert dom.frontier["left"] == {"join"}
    assert dom.frontier["right"] == {"join"}
    assert dom.strictly_dominates("entry", "join")
    assert not dom.dominates("left", "join")


def test_post_dominators_hang_off_the_virtual_exit():
    fn = load("diamond").function("main")
    pdom = compute_dominators(fn, Direction.POST)
    assert pdom.root == VIRTUAL_EXIT
    assert pdom.idom["join"] == VIRTUAL_EXIT
    assert pdom.idom["entry"] == "join"
    assert pdom.dominates("join", "left")
    assert not pdom.dominates("left", "entry")


def test_loop_body_depends_on_the_header_test():
    fn = load("while_sum").function("main")
    deps = control_dependences(fn).deps
    branch = fn.block("loop").terminator.id
    for label in ("loop", "body"):
        for inst in fn.block(label).instructions:
            assert deps[inst.id] == {(branch, "true")}
    assert all(inst.id not in deps for inst in fn.block("done").instructions)


def _dominator_sets(fn):
    """Iterate Dom(n) = {n} | meet of Dom(p) over predecessors until nothing changes."""
    labels = [block.label for block in fn.blocks]
    preds = fn.predecessors()
    entry = fn.entry.label
    sets = {label: set(labels) for label in labels}
    sets[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for label in labels:
            if label == entry:
                continue
            meet = set(labels)
            for pred in preds[label]:
                meet &= sets[pred]
            meet.add(label)
            if meet != sets[label]:
                sets[label] = meet
                changed = True
    return sets


def _returns_avoiding(fn, start, avoid):
    succs = fn.successors()
    seen, stack = set(), [start]
    while stack:
        label = stack.pop()
        if label == avoid or label in seen:
            continue
        seen.add(label)
        if fn.block(label).terminator.opcode == "ret":
            return True
        stack.extend(succs[label])
    return False


def _post_dominates(fn, a, b):
    """Every path from ``b`` to a return passes through ``a``."""
    return a == b or not _returns_avoiding(fn, b, a)


@pytest.mark.parametrize("seed", range(60))
def test_dominators_match_set_intersection(seed):
    rng = random.Random(seed)
    fn = parse_module(random_cfg(rng, rng.randint(1, 16))).function("main")
    dom = compute_dominators(fn)
    sets = _dominator_sets(fn)
    labels = [block.label for block in fn.blocks]
    for b in labels:
        for a in labels:
            assert dom.dominates(a, b) == (a in sets[b]), (a, b)
        if b != fn.entry.label:
            closest = [d for d in sets[b] if d != b and len(sets[d]) == len(sets[b]) - 1]
            assert closest == [dom.idom[b]]


@pytest.mark.parametrize("seed", range(60))
def test_post_dominators_match_path_removal(seed):
    rng = random.Random(500 + seed)
    fn = parse_module(random_cfg(rng, rng.randint(1, 16))).function("main")
    pdom = compute_dominators(fn, Direction.POST)
    labels = [block.label for block in fn.blocks]
    for a in labels:
        for b in labels:
            assert pdom.dominates(a, b) == _post_dominates(fn, a, b), (a, b)


@pytest.mark.parametrize("seed", range(60))
def test_control_dependence_matches_path_definition(seed):
    rng = random.Random(900 + seed)
    fn = parse_module(random_cfg(rng, rng.randint(2, 16))).function("main")
    expected: dict[str, set] = {block.label: set() for block in fn.blocks}
    for block in fn.blocks:
        branch = block.terminator
        if branch.opcode != "brcond":
            continue
        for edge, target in (("true", branch.operands[1].name), ("false", branch.operands[2].name)):
            for y in expected:
                strictly = y != block.label and _post_dominates(fn, y, block.label)
                if _post_dominates(fn, y, target) and not strictly:
                    expected[y].add((branch.id, edge))
    deps = control_dependences(fn).deps
    for block in fn.blocks:
        for inst in block.instructions:
            assert deps.get(inst.id, set()) == expected[block.label], block.label
