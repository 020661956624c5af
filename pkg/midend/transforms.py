"""Instruction motion, loop-invariant code motion and dead function elimination."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .alias import AliasAnalysis
from .analysis import ModuleAnalysis
from .callgraph import build_call_graph, default_roots, islands, referenced_functions
from .errors import IrreducibleLoopError, TransformError
from .graphs import reachable
from .interp import hotness, read_profile
from .ir.dominators import Direction, compute_dominators
from .ir.model import FunctionIR, Instruction, Local, ModuleIR
from .ir.verify import ensure_valid
from .loop_builder import hoist_blocker, hoist_instructions, may_trap
from .loops import build_forest, detect_loops, loop_by_key, loop_rpo, module_loops
from .pdg import DependenceGraph, build_pdg


@dataclass(frozen=True, slots=True)
class MovePoint:
    block: str
    # None stands for the end of the block, just before its terminator
    before: Optional[int] = None

    def __str__(self) -> str:
        where = "end" if self.before is None else f"#{self.before}"
        return f"{self.block}:{where}"


def _index_of(fn: FunctionIR, point: MovePoint) -> int:
    block = fn.block(point.block)
    if point.before is None:
        return len(block.instructions) - 1
    for index, inst in enumerate(block.instructions):
        if inst.id == point.before:
            return index
    raise TransformError(f"instr #{point.before} is not in block {point.block}")


def _loops_containing(fn: FunctionIR, label: str) -> frozenset[str]:
    return frozenset(loop.header for loop in detect_loops(fn) if label in loop.blocks)


def _between(fn: FunctionIR, first: str, last: str) -> set[str]:
    """Blocks met on some path first -> last that does not revisit either end."""
    ends = (first, last)
    succs = fn.successors()
    preds = fn.predecessors()
    inner_succs = {k: [s for s in v if s not in ends] for k, v in succs.items() if k not in ends}
    inner_preds = {k: [p for p in v if p not in ends] for k, v in preds.items() if k not in ends}
    forward = reachable(inner_succs, [s for s in succs[first] if s not in ends])
    backward = reachable(inner_preds, [p for p in preds[last] if p not in ends])
    return forward & backward


def _has_effect(inst: Instruction) -> bool:
    return inst.opcode in ("print", "store") or inst.is_call


def _must_stay_ordered(a: Instruction, b: Instruction, fn: FunctionIR, aa: AliasAnalysis) -> bool:
    """A possible trap keeps its place relative to output, memory writes and other traps."""
    trap_a, trap_b = may_trap(a, fn, aa), may_trap(b, fn, aa)
    return (trap_a and (trap_b or _has_effect(b))) or (trap_b and _has_effect(a))


def can_move_before(
    module: ModuleIR, ordinal: int, point: MovePoint, pdg: Optional[DependenceGraph] = None
) -> bool:
    """Whether moving instr ``ordinal`` to ``point`` keeps every dependence and SSA dominance."""
    located = module.instruction(ordinal)
    fn, home, inst = located.function, located.block, located.instruction
    if not fn.has_block(point.block):
        return False
    if inst.is_phi or inst.is_terminator or inst.opcode == "alloca":
        return False
    target = fn.block(point.block)
    at = _index_of(fn, point)
    if any(other.is_phi for other in target.instructions[at:]):
        return False
    pdg = pdg or build_pdg(module)
    sources = {e.src for e in pdg.edges if e.dst == ordinal and not e.is_control and e.src != ordinal}
    sinks = {e.dst for e in pdg.edges if e.src == ordinal and not e.is_control and e.dst != ordinal}

    aa = AliasAnalysis(module)

    def keeps_order(crossed: list[Instruction]) -> bool:
        return not any(_must_stay_ordered(inst, other, fn, aa) for other in crossed)

    position = home.instructions.index(inst)
    if target is home:
        if at > position:
            crossed = home.instructions[position + 1 : at]
            return not any(other.id in sinks for other in crossed) and keeps_order(crossed)
        crossed = home.instructions[at:position]
        return not any(other.id in sources for other in crossed) and keeps_order(crossed)

    try:
        if _loops_containing(fn, home.label) != _loops_containing(fn, target.label):
            return False
    except IrreducibleLoopError:
        return False
    dom = compute_dominators(fn)
    post = compute_dominators(fn, Direction.POST)
    if dom.dominates(target.label, home.label) and post.dominates(home.label, target.label):
        middle = _between(fn, target.label, home.label)
        crossed = target.instructions[at:] + [
            other for block in fn.blocks if block.label in middle for other in block.instructions
        ] + home.instructions[:position]
        if any(other.id in sources for other in crossed) or not keeps_order(crossed):
            return False
    elif dom.dominates(home.label, target.label) and post.dominates(target.label, home.label):
        middle = _between(fn, home.label, target.label)
        crossed = home.instructions[position + 1 :] + [
            other for block in fn.blocks if block.label in middle for other in block.instructions
        ] + target.instructions[:at]
        if any(other.id in sinks for other in crossed) or not keeps_order(crossed):
            return False
    else:
        return False

    # the new position must still see every operand and dominate every use
    block_of = fn.block_of()
    defs = fn.definitions()
    for name in inst.uses():
        origin = defs.get(name)
        if origin is None:
            continue
        where = block_of[origin.id]
        if where == target.label:
            if target.instructions.index(origin) >= at:
                return False
        elif not dom.dominates(where, target.label):
            return False
    if inst.result is not None:
        for user in fn.users().get(inst.result, []):
            if user.is_phi:
                arms = [label for label, value in user.phi_arms() if value == Local(inst.result)]
                if not all(dom.dominates(target.label, label) for label in arms):
                    return False
                continue
            where = block_of[user.id]
            if where == target.label:
                if target.instructions.index(user) < at:
                    return False
            elif not dom.strictly_dominates(target.label, where):
                return False
    return True


def move_before(
    module: ModuleIR,
    ordinal: int,
    point: MovePoint,
    *,
    pdg: Optional[DependenceGraph] = None,
    logger: Optional[logging.Logger] = None,
) -> ModuleIR:
    if not can_move_before(module, ordinal, point, pdg):
        raise TransformError(f"moving instr #{ordinal} to {point} would break a dependence")
    result = module.clone()
    located = result.instruction(ordinal)
    fn, home, inst = located.function, located.block, located.instruction
    anchor = None if point.before is None else result.instruction(point.before).instruction
    home.instructions.remove(inst)
    target = fn.block(point.block)
    if anchor is None:
        target.instructions.insert(len(target.instructions) - 1, inst)
    else:
        target.instructions.insert(target.instructions.index(anchor), inst)
    result.without_metadata("prof", "pdg").renumber()
    if logger:
        logger.info("moved instr #%d to %s", ordinal, point)
    return ensure_valid(result)


@dataclass(slots=True)
class LicmResult:
    module: ModuleIR
    # (function, header) -> hoisted instruction count
    hoisted: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.hoisted.values())


def licm(
    module: ModuleIR,
    *,
    naive: bool = False,
    hot_threshold: float = 0.0,
    logger: Optional[logging.Logger] = None,
) -> LicmResult:
    """Hoist invariants from innermost loops outward, each loop to a fixpoint.

    ``naive`` uses the operand-only invariant set and makes one pass per loop.
    """
    current = module.clone()
    loops = module_loops(current, logger)
    by_id = {loop.id: loop for loop in loops}
    order = [by_id[node].key for node in build_forest(loops).postorder()]
    profile = read_profile(module) if hot_threshold > 0 else None
    if hot_threshold > 0 and profile is None and logger:
        logger.warning("no embedded profile; every loop is below the hot threshold")
    result = LicmResult(current)

    for key in order:
        if hot_threshold > 0:
            _, original = loop_by_key(module, key)
            if hotness(module, original, profile) < hot_threshold:
                continue
        hoisted = 0
        while True:
            analysis = ModuleAnalysis(current)
            fn, loop = loop_by_key(current, key)
            info = analysis.info(loop)
            candidates = info.naive if naive else info.invariants
            picked: list[int] = []
            names: list[str] = []
            for label in loop_rpo(fn, loop):
                for inst in fn.block(label).instructions:
                    if inst.id not in candidates:
                        continue
                    if hoist_blocker(current, loop, inst, info, analysis.aa, names) is None:
                        picked.append(inst.id)
                        if inst.result is not None:
                            names.append(inst.result)
            if not picked:
                break
            current = hoist_instructions(current, loop, picked, analysis=analysis, logger=logger)
            hoisted += len(picked)
            if naive:
                break
        if hoisted:
            result.hoisted[key] = hoisted
            if logger:
                _, loop = loop_by_key(current, key)
                logger.info("hoisted %d instructions from loop %s", hoisted, loop)
    result.module = current.without_metadata("prof", "pdg") if result.total else current
    return result


@dataclass(slots=True)
class DeadFunctionResult:
    module: ModuleIR
    removed: list[str] = field(default_factory=list)


def dead_function_elimination(
    module: ModuleIR, *, roots: Optional[list[str]] = None, logger: Optional[logging.Logger] = None
) -> DeadFunctionResult:
    """Drop functions no root reaches through calls or ``funcptr`` references."""
    cg = build_call_graph(module, logger=logger)
    graph = cg.successors()
    for name in graph:
        for referenced in referenced_functions(module, name):
            if referenced not in graph[name]:
                graph[name].append(referenced)
    roots = roots or default_roots(module)
    live = reachable(graph, roots)
    dead = [fn.name for fn in module.functions if fn.name not in live]
    if not dead:
        return DeadFunctionResult(module.clone())

    if logger:
        for island in islands(cg):
            if island.members.isdisjoint(live):
                logger.info("unreachable island {%s}", ", ".join(sorted(island.members)))
    result = module.clone()
    result.functions = [fn for fn in result.functions if fn.name in live]
    result.metadata = [
        (key, text)
        for key, text in result.metadata
        if key != "doall" or text.split()[:1] != [] and text.split()[0][1:] in live
    ]
    result.without_metadata("prof", "pdg").renumber()
    if logger:
        for name in dead:
            logger.info("removed function @%s", name)
    return DeadFunctionResult(ensure_valid(result), dead)
