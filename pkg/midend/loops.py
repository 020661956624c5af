from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import IrreducibleLoopError, UnknownEntityError
from .graphs import postorder
from .ir.dominators import DominatorInfo, compute_dominators
from .ir.model import EntityId, EntityKind, FunctionIR, Instruction, ModuleIR


@dataclass(slots=True)
class LoopStructure:
    id: EntityId
    function: str
    header: str
    preheader: Optional[str]
    latches: list[str]
    exits: list[tuple[str, str]]
    blocks: set[str]
    parent: Optional[EntityId] = None
    depth: int = 1

    @property
    def key(self) -> tuple[str, str]:
        """Identity that survives renumbering."""
        return self.function, self.header

    def exiting_blocks(self) -> list[str]:
        seen: list[str] = []
        for block, _ in self.exits:
            if block not in seen:
                seen.append(block)
        return seen

    def instructions(self, fn: FunctionIR) -> list[Instruction]:
        return [
            inst for block in fn.blocks if block.label in self.blocks for inst in block.instructions
        ]

    def __str__(self) -> str:
        return f"L{self.id.ordinal}"


def _retreating_edges(fn: FunctionIR) -> list[tuple[str, str]]:
    succs = fn.successors()
    entry = fn.entry.label
    on_stack = {entry}
    seen = {entry}
    found: list[tuple[str, str]] = []
    stack: list[tuple[str, Iterator[str]]] = [(entry, iter(succs[entry]))]
    while stack:
        node, it = stack[-1]
        for succ in it:
            if succ in on_stack:
                found.append((node, succ))
            elif succ not in seen:
                seen.add(succ)
                on_stack.add(succ)
                stack.append((succ, iter(succs[succ])))
                break
        else:
            stack.pop()
            on_stack.discard(node)
    return found


def detect_loops(fn: FunctionIR, dom: Optional[DominatorInfo] = None) -> list[LoopStructure]:
    """Natural loops of ``fn`` ordered by header block ordinal, parents and depths filled in."""
    dom = dom or compute_dominators(fn)
    preds = fn.predecessors()
    succs = fn.successors()
    latches_of: dict[str, list[str]] = {}
    for tail, head in _retreating_edges(fn):
        if not dom.dominates(head, tail):
            raise IrreducibleLoopError(
                f"irreducible control flow in @{fn.name}: edge {tail} -> {head}"
            )
        latches_of.setdefault(head, []).append(tail)

    order = {block.label: block for block in fn.blocks}
    loops: list[LoopStructure] = []
    for header, latches in latches_of.items():
        body = {header}
        work = [latch for latch in latches if latch != header]
        body.update(work)
        while work:
            node = work.pop()
            for pred in preds[node]:
                if pred not in body:
                    body.add(pred)
                    work.append(pred)
        outside = [pred for pred in preds[header] if pred not in body]
        preheader = None
        if len(outside) == 1 and succs[outside[0]] == [header]:
            preheader = outside[0]
        exits = [
            (block.label, succ)
            for block in fn.blocks
            if block.label in body
            for succ in succs[block.label]
            if succ not in body
        ]
        in_order = [block.label for block in fn.blocks if block.label in latches]
        loops.append(
            LoopStructure(
                id=EntityId(EntityKind.LOOP, order[header].id),
                function=fn.name,
                header=header,
                preheader=preheader,
                latches=in_order,
                exits=exits,
                blocks=body,
            )
        )
    loops.sort(key=lambda loop: loop.id.ordinal)

    for loop in loops:
        enclosing = [
            other
            for other in loops
            if other is not loop and loop.header in other.blocks and loop.blocks < other.blocks
        ]
        if enclosing:
            loop.parent = min(enclosing, key=lambda other: len(other.blocks)).id
            loop.depth = len(enclosing) + 1
    return loops


def module_loops(module: ModuleIR, logger: Optional[logging.Logger] = None) -> list[LoopStructure]:
    """Loops of every function; functions with irreducible control flow are skipped."""
    found: list[LoopStructure] = []
    for fn in module.functions:
        try:
            found.extend(detect_loops(fn))
        except IrreducibleLoopError as exc:
            if logger:
                logger.warning("skipping loops of @%s: %s", fn.name, exc)
    return found


def find_loop(module: ModuleIR, ordinal: int) -> tuple[FunctionIR, LoopStructure]:
    for loop in module_loops(module):
        if loop.id.ordinal == ordinal:
            return module.function(loop.function), loop
    raise UnknownEntityError(f"unknown loop L{ordinal}")


def loop_by_key(module: ModuleIR, key: tuple[str, str]) -> tuple[FunctionIR, LoopStructure]:
    fn = module.function(key[0])
    for loop in detect_loops(fn):
        if loop.header == key[1]:
            return fn, loop
    raise UnknownEntityError(f"no loop headed by {key[1]} in @{key[0]}")


def innermost_loop_of(loops: list[LoopStructure]) -> dict[str, LoopStructure]:
    """Map each block to the innermost loop containing it."""
    result: dict[str, LoopStructure] = {}
    for loop in sorted(loops, key=lambda item: item.depth):
        for label in loop.blocks:
            result[label] = loop
    return result


@dataclass(slots=True)
class LoopForest:
    roots: list[EntityId] = field(default_factory=list)
    children: dict[EntityId, list[EntityId]] = field(default_factory=dict)
    parent: dict[EntityId, Optional[EntityId]] = field(default_factory=dict)

    def nodes(self) -> list[EntityId]:
        return sorted(self.parent)

    def __contains__(self, node: EntityId) -> bool:
        return node in self.parent

    def depth(self, node: EntityId) -> int:
        depth = 1
        up = self.parent[node]
        while up is not None:
            depth += 1
            up = self.parent[up]
        return depth

    def postorder(self) -> list[EntityId]:
        """Children before parents; siblings in order."""
        order: list[EntityId] = []

        def visit(node: EntityId) -> None:
            for child in self.children.get(node, []):
                visit(child)
            order.append(node)

        for root in self.roots:
            visit(root)
        return order


def build_forest(loops: list[LoopStructure]) -> LoopForest:
    forest = LoopForest()
    for loop in sorted(loops, key=lambda item: item.id):
        forest.parent[loop.id] = loop.parent
        forest.children.setdefault(loop.id, [])
    for loop in sorted(loops, key=lambda item: item.id):
        if loop.parent is None:
            forest.roots.append(loop.id)
        else:
            forest.children.setdefault(loop.parent, []).append(loop.id)
    return forest


def forest_delete_node(forest: LoopForest, node: EntityId) -> LoopForest:
    """Remove ``node``; its children take its place under its parent, order preserved."""
    if node not in forest.parent:
        raise UnknownEntityError(f"unknown loop {node}")
    up = forest.parent[node]
    orphans = list(forest.children.get(node, []))
    result = LoopForest(
        roots=list(forest.roots),
        children={key: list(value) for key, value in forest.children.items() if key != node},
        parent={key: value for key, value in forest.parent.items() if key != node},
    )
    siblings = result.roots if up is None else result.children[up]
    position = siblings.index(node)
    siblings[position : position + 1] = orphans
    for orphan in orphans:
        result.parent[orphan] = up
    return result


def loop_rpo(fn: FunctionIR, loop: LoopStructure) -> list[str]:
    """Loop blocks in reverse post-order of the function CFG."""
    order = list(reversed(postorder(fn.successors(), fn.entry.label)))
    return [label for label in order if label in loop.blocks]

