"""Bitvector data-flow engine with block-level transfer and a loop-aware worklist."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import IrreducibleLoopError, MidendError
from .graphs import postorder
from .ir.model import FunctionIR, Local
from .loops import detect_loops


class FlowDirection(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class Meet(str, Enum):
    UNION = "union"
    INTERSECTION = "intersection"


@dataclass(slots=True)
class DataFlowProblem:
    direction: FlowDirection
    meet: Meet
    universe: list[int]
    gen: dict[int, int] = field(default_factory=dict)
    kill: dict[int, int] = field(default_factory=dict)
    boundary: int = 0
    # extra bits flowing along a CFG edge (source block, target block)
    edge_gen: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def full(self) -> int:
        return (1 << len(self.universe)) - 1

    def bit(self, ordinal: int) -> int:
        return 1 << self.universe.index(ordinal)

    def members(self, mask: int) -> list[int]:
        return [ordinal for k, ordinal in enumerate(self.universe) if mask >> k & 1]

    def check(self) -> None:
        full = self.full
        for inst, mask in self.gen.items():
            if mask & ~full or self.kill.get(inst, 0) & ~full:
                raise MidendError(f"data-flow sets of instr #{inst} exceed the universe")
            if mask & self.kill.get(inst, 0):
                raise MidendError(f"gen and kill overlap at instr #{inst}")


@dataclass(slots=True)
class DataFlowResult:
    problem: DataFlowProblem
    function: FunctionIR
    block_in: dict[str, int] = field(default_factory=dict)
    block_out: dict[str, int] = field(default_factory=dict)
    _ins: dict[int, int] = field(default_factory=dict, repr=False)
    _outs: dict[int, int] = field(default_factory=dict, repr=False)

    def _expand(self, label: str) -> None:
        block = self.function.block(label)
        gen, kill = self.problem.gen, self.problem.kill
        if self.problem.direction is FlowDirection.FORWARD:
            current = self.block_in[label]
            for inst in block.instructions:
                self._ins[inst.id] = current
                current = gen.get(inst.id, 0) | (current & ~kill.get(inst.id, 0))
                self._outs[inst.id] = current
        else:
            current = self.block_out[label]
            for inst in reversed(block.instructions):
                self._outs[inst.id] = current
                current = gen.get(inst.id, 0) | (current & ~kill.get(inst.id, 0))
                self._ins[inst.id] = current

    def _ensure(self, ordinal: int) -> None:
        if ordinal in self._ins:
            return
        for block in self.function.blocks:
            if any(inst.id == ordinal for inst in block.instructions):
                self._expand(block.label)
                return
        raise MidendError(f"instr #{ordinal} is not in @{self.function.name}")

    def in_mask(self, ordinal: int) -> int:
        self._ensure(ordinal)
        return self._ins[ordinal]

    def out_mask(self, ordinal: int) -> int:
        self._ensure(ordinal)
        return self._outs[ordinal]

    def in_set(self, ordinal: int) -> list[int]:
        return self.problem.members(self.in_mask(ordinal))

    def out_set(self, ordinal: int) -> list[int]:
        return self.problem.members(self.out_mask(ordinal))

    def dump(self) -> list[str]:
        lines = []
        for inst in self.function.instructions():
            lines.append(f"IN[{inst.id}] = {self.in_set(inst.id)}")
            lines.append(f"OUT[{inst.id}] = {self.out_set(inst.id)}")
        return lines


def _block_transfer(problem: DataFlowProblem, fn: FunctionIR) -> dict[str, tuple[int, int]]:
    """Compose each block's gen/kill once, in the direction of the problem."""
    composed: dict[str, tuple[int, int]] = {}
    for block in fn.blocks:
        insts = block.instructions
        if problem.direction is FlowDirection.BACKWARD:
            insts = list(reversed(insts))
        gen = kill = 0
        for inst in insts:
            inst_gen = problem.gen.get(inst.id, 0)
            inst_kill = problem.kill.get(inst.id, 0)
            gen = inst_gen | (gen & ~inst_kill)
            kill = (kill | inst_kill) & ~inst_gen
        composed[block.label] = (gen, kill)
    return composed


def _loop_depths(fn: FunctionIR) -> dict[str, int]:
    depths = {block.label: 0 for block in fn.blocks}
    try:
        loops = detect_loops(fn)
    except IrreducibleLoopError:
        return depths
    for loop in loops:
        for label in loop.blocks:
            depths[label] = max(depths[label], loop.depth)
    return depths


def solve(
    problem: DataFlowProblem, fn: FunctionIR, *, shuffle_seed: Optional[int] = None
) -> DataFlowResult:
    """Maximal fixpoint by a worklist keyed on loop depth, then (reverse) post-order.

    ``shuffle_seed`` replaces the order by a random priority; the result must not change.
    """
    problem.check()
    forward = problem.direction is FlowDirection.FORWARD
    succs = fn.successors()
    preds = fn.predecessors()
    flow_in, flow_out = (preds, succs) if forward else (succs, preds)
    order = postorder(succs, fn.entry.label)
    if forward:
        order.reverse()
    order += [block.label for block in fn.blocks if block.label not in order]
    depths = _loop_depths(fn)
    if shuffle_seed is None:
        priority = {label: (-depths[label], k) for k, label in enumerate(order)}
    else:
        rng = random.Random(shuffle_seed)
        priority = {label: (rng.random(), k) for k, label in enumerate(order)}

    transfer = _block_transfer(problem, fn)
    interior = problem.full if problem.meet is Meet.INTERSECTION else 0
    before = {label: interior for label in order}
    after = {label: interior for label in order}

    def meet(label: str) -> int:
        sources = flow_in[label]
        if not sources:
            return problem.boundary
        values = []
        for source in sources:
            edge = (source, label) if forward else (label, source)
            values.append(after[source] | problem.edge_gen.get(edge, 0))
        result = values[0]
        for value in values[1:]:
            result = result | value if problem.meet is Meet.UNION else result & value
        return result

    heap = [(priority[label], label) for label in order]
    heapq.heapify(heap)
    queued = set(order)
    while heap:
        _, label = heapq.heappop(heap)
        queued.discard(label)
        before[label] = meet(label)
        gen, kill = transfer[label]
        value = gen | (before[label] & ~kill)
        if value != after[label]:
            after[label] = value
            for target in flow_out[label]:
                if target not in queued:
                    queued.add(target)
                    heapq.heappush(heap, (priority[target], target))

    if forward:
        return DataFlowResult(problem, fn, block_in=before, block_out=after)
    return DataFlowResult(problem, fn, block_in=after, block_out=before)


def liveness(fn: FunctionIR) -> DataFlowResult:
    """Live SSA values; bit k stands for the value defined by the k-th defining instruction."""
    defining = [inst for inst in fn.instructions() if inst.result is not None]
    universe = [inst.id for inst in defining]
    position = {inst.result: k for k, inst in enumerate(defining)}
    problem = DataFlowProblem(FlowDirection.BACKWARD, Meet.UNION, universe)
    for inst in fn.instructions():
        if inst.result is not None:
            problem.kill[inst.id] = 1 << position[inst.result]
        if inst.is_phi:
            continue
        mask = 0
        for name in inst.uses():
            if name in position and name != inst.result:
                mask |= 1 << position[name]
        if mask:
            problem.gen[inst.id] = mask
    for block in fn.blocks:
        for phi in block.phis():
            for label, value in phi.phi_arms():
                if isinstance(value, Local) and value.name in position:
                    edge = (label, block.label)
                    problem.edge_gen[edge] = problem.edge_gen.get(edge, 0) | (1 << position[value.name])
    return solve(problem, fn)


def reaching_definitions(fn: FunctionIR) -> DataFlowResult:
    defining = [inst for inst in fn.instructions() if inst.result is not None]
    problem = DataFlowProblem(FlowDirection.FORWARD, Meet.UNION, [inst.id for inst in defining])
    for k, inst in enumerate(defining):
        problem.gen[inst.id] = 1 << k
    return solve(problem, fn)
