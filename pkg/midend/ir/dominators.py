from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from ..graphs import postorder, reachable, reverse, tarjan_sccs
from .model import FunctionIR

VIRTUAL_EXIT = "<exit>"


class Direction(str, Enum):
    FORWARD = "forward"
    POST = "post"


@dataclass(slots=True)
class DominatorInfo:
    direction: Direction
    root: str
    idom: dict[str, str]
    frontier: dict[str, set[str]]
    order: list[str] = field(default_factory=list)

    def dominates(self, a: str, b: str) -> bool:
        """Reflexive dominance (post-dominance for the post direction)."""
        node: Optional[str] = b
        while node is not None:
            if node == a:
                return True
            node = self.idom.get(node)
        return False

    def strictly_dominates(self, a: str, b: str) -> bool:
        return a != b and self.dominates(a, b)

    def children(self) -> dict[str, list[str]]:
        tree: dict[str, list[str]] = {node: [] for node in self.order}
        for node in self.order:
            parent = self.idom.get(node)
            if parent is not None:
                tree.setdefault(parent, []).append(node)
        return tree

    def contains(self, node: str) -> bool:
        return node == self.root or node in self.idom


def dominator_tree(
    graph: Mapping[str, Sequence[str]], root: str
) -> tuple[dict[str, str], list[str]]:
    """Iterative dominators over reverse post-order (Cooper, Harvey, Kennedy)."""
    order = list(reversed(postorder(graph, root)))
    index = {node: i for i, node in enumerate(order)}
    preds = reverse({node: [s for s in graph[node] if s in index] for node in order})
    idom: dict[str, str] = {root: root}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for node in order[1:]:
            new_idom: Optional[str] = None
            for pred in preds[node]:
                if pred in idom:
                    new_idom = pred if new_idom is None else intersect(pred, new_idom)
            if new_idom is not None and idom.get(node) != new_idom:
                idom[node] = new_idom
                changed = True
    del idom[root]
    return idom, order


def dominance_frontier(
    graph: Mapping[str, Sequence[str]], idom: Mapping[str, str], order: Sequence[str]
) -> dict[str, set[str]]:
    members = set(order)
    preds = reverse({node: [s for s in graph[node] if s in members] for node in order})
    frontier: dict[str, set[str]] = {node: set() for node in order}
    for node in order:
        node_preds = preds[node]
        if not node_preds:
            continue
        for pred in node_preds:
            runner: Optional[str] = pred
            while runner is not None and runner != idom.get(node):
                frontier[runner].add(node)
                runner = idom.get(runner)
    return frontier


def exit_sources(fn: FunctionIR) -> list[str]:
    """Blocks given an edge to the virtual exit: ret blocks, then one block per exit-free cycle."""
    labels = [block.label for block in fn.blocks]
    position = {label: i for i, label in enumerate(labels)}
    succs = fn.successors()
    sources = [
        block.label
        for block in fn.blocks
        if block.terminator is not None and block.terminator.opcode == "ret"
    ]
    preds = reverse(succs)
    while True:
        reaching = reachable(preds, sources)
        rest = [label for label in labels if label not in reaching]
        if not rest:
            return sources
        rest_set = set(rest)
        sub = {label: [s for s in succs[label] if s in rest_set] for label in rest}
        sinks = []
        for scc in tarjan_sccs(sub):
            members = set(scc)
            if all(s in members for label in scc for s in sub[label]):
                sinks.append(min(scc, key=position.__getitem__))
        sources.append(min(sinks, key=position.__getitem__))


def post_dominance_graph(fn: FunctionIR) -> dict[str, list[str]]:
    """Reverse CFG rooted at the virtual exit."""
    succs = fn.successors()
    graph: dict[str, list[str]] = {VIRTUAL_EXIT: exit_sources(fn)}
    for label in succs:
        graph.setdefault(label, [])
    for label, targets in succs.items():
        for target in targets:
            if label not in graph[target]:
                graph[target].append(label)
    return graph


def compute_dominators(fn: FunctionIR, direction: Direction | str = Direction.FORWARD) -> DominatorInfo:
    direction = Direction(direction)
    if direction is Direction.FORWARD:
        graph: dict[str, list[str]] = fn.successors()
        root = fn.entry.label
    else:
        graph = post_dominance_graph(fn)
        root = VIRTUAL_EXIT
    idom, order = dominator_tree(graph, root)
    frontier = dominance_frontier(graph, idom, order)
    return DominatorInfo(direction=direction, root=root, idom=idom, frontier=frontier, order=order)
