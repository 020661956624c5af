from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .alias import PointsToResult, compute_points_to
from .graphs import reachable, undirected_components
from .ir.model import FuncRef, ModuleIR

MAY = "may"
MUST = "must"


@dataclass(slots=True)
class CallEdge:
    caller: str
    callee: str
    certainty: str = MAY
    sites: list[int] = field(default_factory=list)

    def __str__(self) -> str:
        via = ",".join(f"#{site}" for site in self.sites)
        return f"{self.caller} -> {self.callee} [{self.certainty}] via {via}"


@dataclass(frozen=True, slots=True)
class Island:
    members: frozenset[str]


@dataclass(slots=True)
class CallGraph:
    nodes: list[str] = field(default_factory=list)
    edges: list[CallEdge] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def successors(self) -> dict[str, list[str]]:
        graph: dict[str, list[str]] = {node: [] for node in self.nodes}
        for edge in self.edges:
            if edge.callee not in graph[edge.caller]:
                graph[edge.caller].append(edge.callee)
        return graph

    def edge(self, caller: str, callee: str) -> Optional[CallEdge]:
        for edge in self.edges:
            if edge.caller == caller and edge.callee == callee:
                return edge
        return None

    def dump(self) -> list[str]:
        return [str(edge) for edge in self.edges]


def build_call_graph(
    module: ModuleIR,
    pts: Optional[PointsToResult] = None,
    *,
    logger: Optional[logging.Logger] = None,
) -> CallGraph:
    """Direct and indirect call edges; one sub-edge per call site."""
    pts = pts or compute_points_to(module)
    graph = CallGraph(nodes=[fn.name for fn in module.functions])
    index: dict[tuple[str, str], CallEdge] = {}
    for fn, _, inst in module.instructions():
        if not inst.is_call:
            continue
        if inst.opcode == "call":
            targets = [inst.operands[0].name]  # type: ignore[union-attr]
            certainty = MUST
        else:
            targets = pts.call_targets.get(inst.id, [])
            certainty = MUST if len(targets) == 1 else MAY
            if not targets:
                message = f"icall at {inst.entity} in @{fn.name} has no resolved targets"
                graph.diagnostics.append(message)
                if logger:
                    logger.warning(message)
        for target in targets:
            edge = index.get((fn.name, target))
            if edge is None:
                edge = index[(fn.name, target)] = CallEdge(fn.name, target, certainty)
                graph.edges.append(edge)
            elif certainty == MUST:
                edge.certainty = MUST
            edge.sites.append(inst.id)
    return graph


def islands(cg: CallGraph) -> list[Island]:
    components = undirected_components(cg.nodes, ((e.caller, e.callee) for e in cg.edges))
    found = [Island(frozenset(component)) for component in components]
    return sorted(found, key=lambda island: min(island.members))


def reachable_functions(cg: CallGraph, roots: Iterable[str]) -> set[str]:
    return reachable(cg.successors(), roots)


def address_taken(module: ModuleIR) -> list[str]:
    taken: list[str] = []
    for _, _, inst in module.instructions():
        if inst.opcode == "funcptr":
            name = inst.operands[0].name  # type: ignore[union-attr]
            if name not in taken:
                taken.append(name)
    return taken


def referenced_functions(module: ModuleIR, name: str) -> list[str]:
    """Functions whose address ``name`` takes with ``funcptr``."""
    fn = module.function(name)
    return [
        inst.operands[0].name  # type: ignore[union-attr]
        for inst in fn.instructions()
        if inst.opcode == "funcptr" and isinstance(inst.operands[0], FuncRef)
    ]


def default_roots(module: ModuleIR) -> list[str]:
    if module.get_function("main") is not None:
        return ["main"]
    taken = address_taken(module)
    if taken:
        return taken
    return [fn.name for fn in module.functions]
