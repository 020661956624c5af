"""Loop invariant detection: dependence-graph walk and the operand-only baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .alias import AliasAnalysis, AliasAnswer, Entry
from .ir.dominators import DominatorInfo, compute_dominators
from .ir.model import FunctionIR, Instruction, Local, ModuleIR
from .loops import LoopStructure, detect_loops
from .pdg import DependenceGraph


@dataclass(slots=True)
class InvariantSet:
    loop: int
    members: set[int] = field(default_factory=set)

    def __contains__(self, ordinal: int) -> bool:
        return ordinal in self.members

    def __len__(self) -> int:
        return len(self.members)


def _candidates(fn: FunctionIR, loop: LoopStructure) -> list[Instruction]:
    return [inst for inst in loop.instructions(fn) if not inst.is_phi and not inst.is_terminator]


class InvariantChecker:
    """Memoized walk over incoming dependences; a node met again on the stack is variant."""

    def __init__(self, module: ModuleIR, loop: LoopStructure, ldg: DependenceGraph) -> None:
        fn = module.function(loop.function)
        self.loop = loop
        self.by_id = {inst.id: inst for inst in loop.instructions(fn)}
        self.incoming = ldg.incoming()
        self.memo: dict[int, bool] = {}

    def is_invariant(self, ordinal: int) -> bool:
        return self._visit(ordinal, set())

    def _visit(self, ordinal: int, stack: set[int]) -> bool:
        if ordinal in self.memo:
            return self.memo[ordinal]
        inst = self.by_id.get(ordinal)
        if inst is None:
            return True
        if inst.is_phi or inst.is_terminator:
            self.memo[ordinal] = False
            return False
        if ordinal in stack:
            return False
        stack.add(ordinal)
        result = True
        for edge in self.incoming.get(ordinal, []):
            if edge.src not in self.by_id or edge.is_control:
                continue
            if not self._visit(edge.src, stack):
                result = False
                break
        stack.discard(ordinal)
        self.memo[ordinal] = result
        return result


def is_invariant(inst: Instruction, loop: LoopStructure, ldg: DependenceGraph, module: ModuleIR) -> bool:
    return InvariantChecker(module, loop, ldg).is_invariant(inst.id)


def invariants_of_loop(module: ModuleIR, loop: LoopStructure, ldg: DependenceGraph) -> InvariantSet:
    checker = InvariantChecker(module, loop, ldg)
    fn = module.function(loop.function)
    found = InvariantSet(loop.id.ordinal)
    for inst in _candidates(fn, loop):
        if checker.is_invariant(inst.id):
            found.members.add(inst.id)
    return found


class _Frame:
    """Instruction-level dominance and memory queries inside one function."""

    def __init__(self, fn: FunctionIR, dom: DominatorInfo, aa: AliasAnalysis) -> None:
        self.fn = fn
        self.dom = dom
        self.aa = aa
        self.block_of = fn.block_of()
        self.position = {
            inst.id: index for block in fn.blocks for index, inst in enumerate(block.instructions)
        }

    def dominates(self, a: Instruction, b: Instruction) -> bool:
        home_a, home_b = self.block_of[a.id], self.block_of[b.id]
        if home_a == home_b:
            return self.position[a.id] <= self.position[b.id]
        return self.dom.dominates(home_a, home_b)

    def may_overlap(self, first: frozenset[Entry], second: frozenset[Entry]) -> bool:
        if not first or not second:
            return False
        return self.aa.compare(first, second, self.fn.name) is not AliasAnswer.NO_ALIAS

    def modifies(self, writer: Instruction, location: frozenset[Entry]) -> bool:
        return self.may_overlap(self.aa.footprint(writer).writes, location)

    def nearest_dominating_access(self, inst: Instruction) -> Optional[Instruction]:
        """Closest instruction up the dominator tree whose accesses may overlap ``inst``'s."""
        location = self.aa.location(inst)
        label: Optional[str] = self.block_of[inst.id]
        preceding = self.fn.block(label).instructions[: self.position[inst.id]]  # type: ignore[arg-type]
        while label is not None:
            for other in reversed(preceding):
                if self.may_overlap(self.aa.location(other), location):
                    return other
            label = self.dom.idom.get(label)
            if label is not None:
                preceding = self.fn.block(label).instructions
        return None


def _sub_loops(fn: FunctionIR, loop: LoopStructure, dom: DominatorInfo) -> list[LoopStructure]:
    return [
        other
        for other in detect_loops(fn, dom)
        if other.header != loop.header and other.blocks <= loop.blocks
    ]


def naive_is_invariant(
    inst: Instruction, loop: LoopStructure, dom: DominatorInfo, aa: AliasAnalysis
) -> bool:
    """Operand-only invariance: operands, then the load, store and call memory rules."""
    if inst.is_phi or inst.is_terminator:
        return False
    fn = aa.module.function(loop.function)
    frame = _Frame(fn, dom, aa)
    defs = fn.definitions()
    for op in inst.operands:
        if isinstance(op, Local) and op.name in defs and frame.block_of[defs[op.name].id] in loop.blocks:
            return False
    body = loop.instructions(fn)

    if inst.opcode == "load":
        location = aa.location(inst)
        if any(frame.modifies(other, location) for other in body):
            return False

    if inst.opcode == "store":
        for use in body:
            footprint = aa.footprint(use)
            if footprint.reads and not footprint.writes and not frame.dominates(inst, use):
                return False
        nearest = frame.nearest_dominating_access(inst)
        if nearest is not None and frame.block_of[nearest.id] in loop.blocks:
            return False

    if inst.is_call or inst.opcode == "print":
        footprint = aa.footprint(inst)
        if footprint.writes:
            return False
        arguments = [aa.pts.of(fn.name, arg) for arg in inst.call_args()]
        reachable = {obj for entries in arguments for obj, _ in entries}
        if any(obj not in reachable for obj, _ in footprint.reads):
            return False
        inner = [i for sub in _sub_loops(fn, loop, dom) for i in sub.instructions(fn)]
        for entries in arguments:
            if any(frame.modifies(other, entries) for other in inner):
                return False

    return True


def naive_invariants_of_loop(module: ModuleIR, loop: LoopStructure, aa: AliasAnalysis) -> InvariantSet:
    fn = module.function(loop.function)
    dom = compute_dominators(fn)
    found = InvariantSet(loop.id.ordinal)
    for inst in _candidates(fn, loop):
        if naive_is_invariant(inst, loop, dom, aa):
            found.members.add(inst.id)
    return found


def dependence_only_rejections(
    naive: InvariantSet, full: InvariantSet, module: ModuleIR, loop: LoopStructure, ldg: DependenceGraph
) -> set[int]:
    """Stores the operand-only test accepts but the dependence walk rejects for their own WAW cycle."""
    fn = module.function(loop.function)
    stores = {inst.id for inst in loop.instructions(fn) if inst.opcode == "store"}
    self_waw = {e.src for e in ldg.edges if e.src == e.dst and e.kind == "WAW"}
    return (naive.members - full.members) & stores & self_waw
