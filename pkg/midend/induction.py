"""Induction variables, governing IV recognition and closed-form trip counts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .interp import compare
from .invariants import InvariantSet
from .ir.model import Const, FunctionIR, GlobalRef, Instruction, Local, ModuleIR, Operand
from .loops import LoopStructure, loop_rpo
from .sccdag import SCCDAG

_SWAPPED = {"slt": "sgt", "sle": "sge", "sgt": "slt", "sge": "sle", "eq": "eq", "ne": "ne"}
_NEGATED = {"slt": "sge", "sle": "sgt", "sgt": "sle", "sge": "slt", "eq": "ne", "ne": "eq"}


@dataclass(slots=True)
class GoverningIVInfo:
    exit_compare: int
    exit_branch: int
    bound: Operand
    trip_count: Optional[int]
    # continue-predicate with the IV on the left
    predicate: str
    compares_update: bool
    while_shaped: bool
    exiting_block: str


@dataclass(slots=True)
class InductionVariable:
    name: str
    instruction: int
    start: Optional[Operand] = None
    step: Optional[Operand] = None
    update: Optional[int] = None
    scc: Optional[int] = None
    derived_from: Optional[str] = None
    parent: Optional[str] = None
    coefficient: Optional[int] = None
    offset: Optional[int] = None
    governing: Optional[GoverningIVInfo] = None

    @property
    def is_basic(self) -> bool:
        return self.derived_from is None

    @property
    def literal_step(self) -> Optional[int]:
        return self.step.value if isinstance(self.step, Const) else None

    def __str__(self) -> str:
        if self.is_basic:
            return f"%{self.name} start={self.start} step={self.step}"
        affine = ""
        if self.coefficient is not None and self.offset is not None:
            affine = f" = {self.coefficient}*%{self.derived_from} + {self.offset}"
        return f"%{self.name} derived from %{self.derived_from}{affine}"


class _LoopValues:
    def __init__(self, fn: FunctionIR, loop: LoopStructure, invariants: InvariantSet) -> None:
        self.defs = fn.definitions()
        self.block_of = fn.block_of()
        self.loop = loop
        self.invariants = invariants

    def inside(self, name: str) -> bool:
        origin = self.defs.get(name)
        return origin is not None and self.block_of[origin.id] in self.loop.blocks

    def invariant(self, op: Operand) -> bool:
        if isinstance(op, (Const, GlobalRef)):
            return True
        if not isinstance(op, Local):
            return False
        if not self.inside(op.name):
            return True
        return self.defs[op.name].id in self.invariants


def _basic_update(update: Instruction, phi: str, values: _LoopValues) -> Optional[Operand]:
    """The invariant step when ``update`` is phi + step, step + phi or phi - step."""
    if update.opcode not in ("add", "sub"):
        return None
    a, b = update.operands
    acc = Local(phi)
    if update.opcode == "add":
        if a == acc and b != acc and values.invariant(b):
            return b
        if b == acc and a != acc and values.invariant(a):
            return a
        return None
    if a == acc and b != acc and values.invariant(b):
        if isinstance(b, Const):
            return Const(-b.value)
        return b
    return None


def detect_ivs(
    module: ModuleIR, loop: LoopStructure, dag: Optional[SCCDAG], invariants: InvariantSet
) -> list[InductionVariable]:
    fn = module.function(loop.function)
    values = _LoopValues(fn, loop, invariants)
    found: list[InductionVariable] = []
    by_name: dict[str, InductionVariable] = {}
    updates: set[int] = set()
    for phi in fn.block(loop.header).phis():
        latch = [value for label, value in phi.phi_arms() if label in loop.latches]
        entry = [value for label, value in phi.phi_arms() if label not in loop.latches]
        if len(entry) != 1 or not latch or any(arm != latch[0] for arm in latch):
            continue
        if not isinstance(latch[0], Local) or not values.inside(latch[0].name):
            continue
        update = values.defs[latch[0].name]
        step = _basic_update(update, phi.result, values)  # type: ignore[arg-type]
        if step is None:
            continue
        iv = InductionVariable(
            name=phi.result,  # type: ignore[arg-type]
            instruction=phi.id,
            start=entry[0],
            step=step,
            update=update.id,
            scc=dag.scc_of(phi.id).id if dag is not None else None,
            coefficient=1,
            offset=0,
        )
        found.append(iv)
        by_name[iv.name] = iv
        updates.add(update.id)

    for label in loop_rpo(fn, loop):
        for inst in fn.block(label).instructions:
            if inst.result is None or inst.id in updates or inst.opcode not in ("add", "sub", "mul", "shl"):
                continue
            derived = _derive(inst, by_name, values)
            if derived is not None:
                found.append(derived)
                by_name[derived.name] = derived
    return found


def _derive(
    inst: Instruction, ivs: dict[str, InductionVariable], values: _LoopValues
) -> Optional[InductionVariable]:
    a, b = inst.operands
    if isinstance(a, Local) and a.name in ivs and values.invariant(b):
        source, other, iv_first = ivs[a.name], b, True
    elif isinstance(b, Local) and b.name in ivs and values.invariant(a) and inst.opcode != "shl":
        source, other, iv_first = ivs[b.name], a, False
    else:
        return None
    base = source.name if source.is_basic else source.derived_from
    coefficient, offset = source.coefficient, source.offset
    literal = other.value if isinstance(other, Const) else None
    if coefficient is not None and offset is not None and literal is not None:
        op = inst.opcode
        if op == "add":
            offset += literal
        elif op == "sub" and iv_first:
            offset -= literal
        elif op == "sub":
            coefficient, offset = -coefficient, literal - offset
        elif op == "mul":
            coefficient, offset = coefficient * literal, offset * literal
        elif 0 <= literal < 63:
            coefficient, offset = coefficient << literal, offset << literal
        else:
            coefficient = offset = None
    else:
        coefficient = offset = None
    return InductionVariable(
        name=inst.result,  # type: ignore[arg-type]
        instruction=inst.id,
        derived_from=base,
        parent=source.name,
        coefficient=coefficient,
        offset=offset,
    )


def trip_count(predicate: str, first: int, step: int, bound: int) -> Optional[int]:
    """How many consecutive values first, first+step, ... satisfy ``value <predicate> bound``."""
    if predicate == "slt" and step > 0:
        return max(0, -((first - bound) // step))
    if predicate == "sle" and step > 0:
        return max(0, (bound - first) // step + 1)
    if predicate == "sgt" and step < 0:
        return max(0, -((bound - first) // -step))
    if predicate == "sge" and step < 0:
        return max(0, (first - bound) // -step + 1)
    if predicate == "ne" and step != 0:
        distance = bound - first
        if distance % step == 0 and distance // step >= 0:
            return distance // step
        return None
    if predicate == "eq" and step != 0:
        return 1 if first == bound else 0
    if not compare(predicate, first, bound):
        return 0
    return None


def _exit_test(fn: FunctionIR, loop: LoopStructure) -> Optional[tuple[str, Instruction, Instruction, bool]]:
    """(exiting block, compare, branch, continues-on-true) of a loop with one conditional exit."""
    exiting = loop.exiting_blocks()
    if len(exiting) != 1:
        return None
    branch = fn.block(exiting[0]).terminator
    if branch is None or branch.opcode != "brcond" or not isinstance(branch.operands[0], Local):
        return None
    on_true = branch.operands[1].name in loop.blocks  # type: ignore[union-attr]
    on_false = branch.operands[2].name in loop.blocks  # type: ignore[union-attr]
    if on_true == on_false:
        return None
    cmp = fn.definitions().get(branch.operands[0].name)
    if cmp is None or cmp.opcode not in _NEGATED:
        return None
    block_of = fn.block_of()
    if block_of[cmp.id] not in loop.blocks:
        return None
    return exiting[0], cmp, branch, on_true


def _governing(
    module: ModuleIR, loop: LoopStructure, ivs: list[InductionVariable], invariants: InvariantSet, dowhile_only: bool
) -> Optional[tuple[InductionVariable, GoverningIVInfo]]:
    fn = module.function(loop.function)
    test = _exit_test(fn, loop)
    if test is None:
        return None
    exiting, cmp, branch, continues_on_true = test
    while_shaped = exiting == loop.header and loop.header not in loop.latches
    if dowhile_only and exiting not in loop.latches:
        return None
    values = _LoopValues(fn, loop, invariants)
    candidates = []
    for iv in ivs:
        if not iv.is_basic:
            continue
        update_name = next(
            (inst.result for inst in fn.instructions() if inst.id == iv.update), None
        )
        for position, operand in enumerate(cmp.operands):
            other = cmp.operands[1 - position]
            if not isinstance(operand, Local) or not values.invariant(other):
                continue
            if operand.name == iv.name:
                candidates.append((iv, other, position, False))
            elif operand.name == update_name:
                candidates.append((iv, other, position, True))
    if len(candidates) != 1:
        return None
    iv, bound, position, compares_update = candidates[0]
    predicate = cmp.opcode if position == 0 else _SWAPPED[cmp.opcode]
    if not continues_on_true:
        predicate = _NEGATED[predicate]

    trips: Optional[int] = None
    literals = all(isinstance(op, Const) for op in (iv.start, iv.step, bound))
    if literals:
        start, step, limit = iv.start.value, iv.step.value, bound.value  # type: ignore[union-attr]
        if while_shaped:
            trips = trip_count(predicate, start + step if compares_update else start, step, limit)
        elif exiting in loop.latches and len(loop.latches) == 1:
            rest = trip_count(predicate, start + step if compares_update else start, step, limit)
            trips = None if rest is None else 1 + rest
    info = GoverningIVInfo(
        exit_compare=cmp.id,
        exit_branch=branch.id,
        bound=bound,
        trip_count=trips,
        predicate=predicate,
        compares_update=compares_update,
        while_shaped=while_shaped,
        exiting_block=exiting,
    )
    return iv, info


def governing_iv(
    module: ModuleIR, loop: LoopStructure, ivs: list[InductionVariable], invariants: InvariantSet
) -> Optional[tuple[InductionVariable, GoverningIVInfo]]:
    """The unique basic IV whose compare against an invariant bound decides the loop's only exit."""
    found = _governing(module, loop, ivs, invariants, dowhile_only=False)
    if found is not None:
        found[0].governing = found[1]
    return found


def dowhile_governing_iv(
    module: ModuleIR, loop: LoopStructure, ivs: list[InductionVariable], invariants: InvariantSet
) -> Optional[tuple[InductionVariable, GoverningIVInfo]]:
    """Baseline recognizer that only looks at exit tests placed in a latch."""
    return _governing(module, loop, ivs, invariants, dowhile_only=True)
