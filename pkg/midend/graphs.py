"""Small graph algorithms shared by the analyses.

Graphs are adjacency dicts ``node -> iterable of successors``; every successor
must itself be a key.
"""

from __future__ import annotations

from collections import deque
from typing import Hashable, Iterable, Mapping, TypeVar

N = TypeVar("N", bound=Hashable)

BEGIN, CONTINUE, RETURN = 0, 1, 2


def tarjan_sccs(graph: Mapping[N, Iterable[N]]) -> list[list[N]]:
    """Iterative Tarjan. SCCs come out in reverse topological order (sinks first)."""
    adjacency = {node: list(succs) for node, succs in graph.items()}
    indices: dict[N, int] = {}
    lowlinks: dict[N, int] = {}
    on_stack: set[N] = set()
    stack: list[N] = []
    sccs: list[list[N]] = []
    counter = 0

    for start in adjacency:
        if start in indices:
            continue
        iter_stack: list[tuple[N, int, int]] = [(start, 0, BEGIN)]
        while iter_stack:
            v, succ_index, state = iter_stack.pop()
            if state == BEGIN:
                indices[v] = lowlinks[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
                iter_stack.append((v, 0, CONTINUE))
            elif state == RETURN:
                w = adjacency[v][succ_index]
                lowlinks[v] = min(lowlinks[v], lowlinks[w])
                iter_stack.append((v, succ_index + 1, CONTINUE))
            else:
                successors = adjacency[v]
                if succ_index == len(successors):
                    if lowlinks[v] == indices[v]:
                        scc: list[N] = []
                        while True:
                            w = stack.pop()
                            on_stack.discard(w)
                            scc.append(w)
                            if w == v:
                                break
                        sccs.append(scc)
                    continue
                w = successors[succ_index]
                if w not in indices:
                    iter_stack.append((v, succ_index, RETURN))
                    iter_stack.append((w, 0, BEGIN))
                else:
                    if w in on_stack:
                        lowlinks[v] = min(lowlinks[v], indices[w])
                    iter_stack.append((v, succ_index + 1, CONTINUE))
    return sccs


def reachable(graph: Mapping[N, Iterable[N]], roots: Iterable[N]) -> set[N]:
    seen: set[N] = set()
    work = deque(root for root in roots if root in graph)
    seen.update(work)
    while work:
        node = work.popleft()
        for succ in graph[node]:
            if succ not in seen:
                seen.add(succ)
                work.append(succ)
    return seen


def reverse(graph: Mapping[N, Iterable[N]]) -> dict[N, list[N]]:
    rev: dict[N, list[N]] = {node: [] for node in graph}
    for node, succs in graph.items():
        for succ in succs:
            if node not in rev[succ]:
                rev[succ].append(node)
    return rev


def postorder(graph: Mapping[N, Iterable[N]], root: N) -> list[N]:
    order: list[N] = []
    seen = {root}
    stack: list[tuple[N, Iterable]] = [(root, iter(graph[root]))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for succ in it:
            if succ not in seen:
                seen.add(succ)
                stack.append((succ, iter(graph[succ])))
                advanced = True
                break
        if not advanced:
            stack.pop()
            order.append(node)
    return order


def undirected_components(nodes: Iterable[N], edges: Iterable[tuple[N, N]]) -> list[set[N]]:
    neighbours: dict[N, set[N]] = {node: set() for node in nodes}
    for a, b in edges:
        neighbours[a].add(b)
        neighbours[b].add(a)
    components: list[set[N]] = []
    seen: set[N] = set()
    for node in neighbours:
        if node in seen:
            continue
        component = reachable(neighbours, [node])
        seen |= component
        components.append(component)
    return components
