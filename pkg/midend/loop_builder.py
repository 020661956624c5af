"""Loop-shaping transformations: preheader creation, hoisting, IV step scaling."""

from __future__ import annotations

import logging
from typing import Iterable, Optional

from .alias import TOP, AliasAnalysis, ObjectKind
from .analysis import LoopInfo, ModuleAnalysis
from .errors import TransformError
from .induction import InductionVariable
from .ir.dominators import compute_dominators
from .ir.model import (
    BINARY_OPS,
    COMPARE_OPS,
    BasicBlock,
    Const,
    FunctionIR,
    Instruction,
    Label,
    Local,
    ModuleIR,
    Operand,
    TypeTag,
    wrap_i64,
)
from .ir.verify import ensure_valid
from .loops import LoopStructure, loop_by_key, loop_rpo

_TRAPPING = ("sdiv", "srem")
_SPECULATABLE = (BINARY_OPS | COMPARE_OPS | {"select", "gep", "funcptr"}) - set(_TRAPPING)


def create_preheader(
    module: ModuleIR, loop: LoopStructure, *, logger: Optional[logging.Logger] = None
) -> ModuleIR:
    """Copy of ``module`` where ``loop`` has a dedicated block whose only successor is the header."""
    result = module.clone()
    if loop.preheader is not None:
        return result
    fn = result.function(loop.function)
    if fn.entry.label == loop.header:
        raise TransformError(f"loop {loop} is headed by the entry block of @{fn.name}")
    outside = [label for label in fn.predecessors()[loop.header] if label not in loop.blocks]
    label = fn.fresh_label(f"{loop.header}.preheader")
    preheader = BasicBlock(label)
    header = fn.block(loop.header)
    for phi in header.phis():
        incoming = [(lab, value) for lab, value in phi.phi_arms() if lab in outside]
        values = {value for _, value in incoming}
        if len(values) == 1:
            merged = incoming[0][1]
        else:
            name = fn.fresh_name(f"{phi.result}.ph")
            preheader.instructions.append(
                Instruction("phi", [], result=name, type=phi.type)
            )
            preheader.instructions[-1].set_phi_arms(incoming)
            merged = Local(name)
        arms = []
        placed = False
        for lab, value in phi.phi_arms():
            if lab not in outside:
                arms.append((lab, value))
            elif not placed:
                arms.append((label, merged))
                placed = True
        phi.set_phi_arms(arms)
    preheader.instructions.append(Instruction("br", [Label(loop.header)]))
    for pred in outside:
        fn.block(pred).terminator.retarget(loop.header, label)  # type: ignore[union-attr]
    fn.blocks.insert(fn.blocks.index(header), preheader)
    result.renumber()
    if logger:
        logger.debug("created preheader %s for loop %s in @%s", label, loop, fn.name)
    return ensure_valid(result)


def _speculatable(inst: Instruction, fn: FunctionIR, aa: AliasAnalysis) -> bool:
    if inst.opcode in _SPECULATABLE:
        return True
    if inst.opcode in _TRAPPING:
        divisor = inst.operands[1]
        return isinstance(divisor, Const) and divisor.value not in (0, -1)
    if inst.opcode == "load":
        return _in_bounds(inst.operands[0], fn, aa)
    return False


def _in_bounds(pointer: Operand, fn: FunctionIR, aa: AliasAnalysis) -> bool:
    entries = aa.pts.of(fn.name, pointer)
    return bool(entries) and all(
        offset is not TOP
        and obj.kind in (ObjectKind.ALLOCA, ObjectKind.GLOBAL)
        and 0 <= offset < obj.size
        for obj, offset in entries
    )


def may_trap(inst: Instruction, fn: FunctionIR, aa: AliasAnalysis) -> bool:
    """Calls count as trapping: the callee may divide by zero or step out of bounds."""
    if inst.is_call:
        return True
    if inst.opcode == "store":
        return not _in_bounds(inst.operands[1], fn, aa)
    if inst.opcode in ("print", "br", "brcond", "ret", "phi", "alloca"):
        return False
    return not _speculatable(inst, fn, aa)


def hoist_blocker(
    module: ModuleIR,
    loop: LoopStructure,
    inst: Instruction,
    info: LoopInfo,
    aa: AliasAnalysis,
    hoisted: Iterable[str] = (),
) -> Optional[str]:
    """Why ``inst`` cannot move to the preheader of ``loop``, or None when it can.

    Values named in ``hoisted`` count as already defined outside the loop.
    """
    fn = module.function(loop.function)
    block_of = fn.block_of()
    if block_of.get(inst.id) not in loop.blocks:
        return f"instr #{inst.id} is not in loop {loop}"
    if inst.is_phi or inst.is_terminator or inst.opcode in ("store", "print", "alloca"):
        return f"instr #{inst.id} ({inst.opcode}) cannot be hoisted"
    if inst.id not in info.invariants:
        return f"instr #{inst.id} is not invariant in loop {loop}"
    defs = fn.definitions()
    moved = set(hoisted)
    for name in inst.uses():
        origin = defs.get(name)
        if origin is not None and block_of[origin.id] in loop.blocks and name not in moved:
            return f"operand %{name} of instr #{inst.id} is defined in loop {loop}"
    dom = compute_dominators(fn)
    home = block_of[inst.id]
    dominates_exits = all(dom.dominates(home, block) for block in loop.exiting_blocks())
    if inst.is_call:
        if aa.footprint(inst).writes:
            return f"call #{inst.id} may write memory"
        if not dominates_exits:
            return f"call #{inst.id} does not execute on every iteration"
        return None
    if dominates_exits or _speculatable(inst, fn, aa):
        return None
    return f"instr #{inst.id} may trap and does not dominate the loop exits"


def hoist_instructions(
    module: ModuleIR,
    loop: LoopStructure,
    ordinals: Iterable[int],
    *,
    analysis: Optional[ModuleAnalysis] = None,
    logger: Optional[logging.Logger] = None,
) -> ModuleIR:
    """Move the given invariants, in loop order, to the end of the loop preheader."""
    analysis = analysis or ModuleAnalysis(module)
    info = analysis.info(loop)
    fn = module.function(loop.function)
    wanted = set(ordinals)
    order = [
        inst
        for label in loop_rpo(fn, loop)
        for inst in fn.block(label).instructions
        if inst.id in wanted
    ]
    missing = wanted - {inst.id for inst in order}
    if missing:
        raise TransformError(f"instr #{min(missing)} is not in loop {loop}")
    hoisted: list[str] = []
    places: list[tuple[str, int]] = []
    for inst in order:
        reason = hoist_blocker(module, loop, inst, info, analysis.aa, hoisted)
        if reason:
            raise TransformError(f"cannot hoist: {reason}")
        if inst.result is not None:
            hoisted.append(inst.result)
        block = fn.block(fn.block_of()[inst.id])
        places.append((block.label, block.instructions.index(inst)))
    if not order:
        return module.clone()

    result = create_preheader(module, loop, logger=logger)
    target_fn = result.function(loop.function)
    _, current = loop_by_key(result, loop.key)
    moving = [target_fn.block(label).instructions[index] for label, index in places]
    for inst in moving:
        for block in target_fn.blocks:
            if inst in block.instructions:
                block.instructions.remove(inst)
                break
    preheader = target_fn.block(current.preheader)  # type: ignore[arg-type]
    preheader.instructions[-1:-1] = moving
    result.renumber()
    if logger:
        logger.debug("moved %d instructions to %s in @%s", len(moving), preheader.label, fn.name)
    return ensure_valid(result)


def hoist_to_preheader(
    module: ModuleIR,
    loop: LoopStructure,
    ordinal: int,
    *,
    analysis: Optional[ModuleAnalysis] = None,
    logger: Optional[logging.Logger] = None,
) -> ModuleIR:
    return hoist_instructions(module, loop, [ordinal], analysis=analysis, logger=logger)


def chunking_blocker(loop: LoopStructure, iv: InductionVariable) -> Optional[str]:
    """Why the iterations of ``loop`` cannot be strided over ``iv``, or None."""
    if not iv.is_basic or iv.literal_step is None:
        return f"%{iv.name} is not a basic induction variable with a literal step"
    governing = iv.governing
    if governing is None:
        return f"%{iv.name} does not govern loop {loop}"
    if not governing.while_shaped:
        return f"loop {loop} does not test %{iv.name} before its body"
    step = iv.literal_step
    if not (
        (governing.predicate in ("slt", "sle") and step > 0)
        or (governing.predicate in ("sgt", "sge") and step < 0)
    ):
        return f"unsupported exit test {governing.predicate} with step {step} for %{iv.name}"
    return None


def restride(
    fn: FunctionIR,
    latches: Iterable[str],
    phi: Instruction,
    update: Instruction,
    entry: str,
    start: Operand,
    stride: Operand,
) -> str:
    """Enter ``phi`` with ``start`` from ``entry`` and advance it by ``stride`` on every latch.

    ``update`` stays in place for its other users; returns the name of the new increment.
    """
    next_name = fn.fresh_name(f"{phi.result}.next")
    increment = Instruction("add", [Local(phi.result), stride], result=next_name, type=TypeTag.I64)  # type: ignore[arg-type]
    home = fn.block(fn.block_of()[update.id])
    home.instructions.insert(home.instructions.index(update) + 1, increment)
    latch_set = set(latches)
    arms: list[tuple[str, Operand]] = []
    for label, value in phi.phi_arms():
        if label == entry:
            arms.append((label, start))
        elif label in latch_set and value == Local(update.result):  # type: ignore[arg-type]
            arms.append((label, Local(next_name)))
        else:
            arms.append((label, value))
    phi.set_phi_arms(arms)
    return next_name


def scale_iv_step(
    module: ModuleIR,
    loop: LoopStructure,
    iv: InductionVariable,
    factor: int,
    offset: int,
    *,
    logger: Optional[logging.Logger] = None,
) -> ModuleIR:
    """Rewrite ``loop`` to visit only every ``factor``-th value of ``iv`` starting at ``offset``.

    The governing test is kept, so for an ordering predicate the visited values are
    exactly start + (offset + k*factor)*step of the original iteration space.
    """
    if factor < 1:
        raise TransformError(f"chunk factor must be at least 1, got {factor}")
    if not 0 <= offset < factor:
        raise TransformError(f"chunk offset {offset} is outside [0, {factor})")
    if factor == 1:
        return module.clone()
    reason = chunking_blocker(loop, iv)
    if reason:
        raise TransformError(reason)
    step = iv.literal_step
    update_name = module.instruction(iv.update).instruction.result  # type: ignore[arg-type]

    result = create_preheader(module, loop, logger=logger)
    fn = result.function(loop.function)
    _, current = loop_by_key(result, loop.key)
    defs = fn.definitions()
    preheader = fn.block(current.preheader)  # type: ignore[arg-type]

    start: Operand = iv.start  # type: ignore[assignment]
    if offset:
        if isinstance(start, Const):
            start = Const(wrap_i64(start.value + offset * step))
        else:
            name = fn.fresh_name(f"{iv.name}.start")
            preheader.instructions.insert(
                len(preheader.instructions) - 1,
                Instruction("add", [start, Const(offset * step)], result=name, type=TypeTag.I64),
            )
            start = Local(name)
    restride(
        fn,
        current.latches,
        defs[iv.name],
        defs[update_name],  # type: ignore[index]
        current.preheader,  # type: ignore[arg-type]
        start,
        Const(wrap_i64(step * factor)),
    )
    result.renumber()
    if logger:
        logger.debug("scaled %%%s in loop %s by %d from offset %d", iv.name, loop, factor, offset)
    return ensure_valid(result)
