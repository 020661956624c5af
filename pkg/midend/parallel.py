"""DOALL: environments, task outlining with strided chunks, reduction privatization."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .analysis import ModuleAnalysis
from .errors import TransformError
from .induction import InductionVariable
from .ir.model import (
    BasicBlock,
    Const,
    FuncRef,
    FunctionIR,
    Instruction,
    Label,
    Local,
    ModuleIR,
    Operand,
    Param,
    TypeTag,
)
from .ir.verify import ensure_valid
from .loop_builder import chunking_blocker, create_preheader, restride
from .loops import LoopStructure, loop_by_key
from .pdg import Carried, DependenceGraph
from .sccdag import SCCDAG, IDENTITIES, ReductionInfo, SCCKind

_MERGE_COMPARE = {"min": "slt", "max": "sgt"}


class SlotRole(str, Enum):
    LIVE_IN = "live-in"
    LIVE_OUT = "live-out"
    REDUCTION = "reduction"


@dataclass(slots=True)
class EnvSlot:
    index: int
    role: SlotRole
    name: str
    type: TypeTag
    # defining instruction; None for function parameters
    source: Optional[int] = None

    def __str__(self) -> str:
        return f"slot {self.index} {self.role.value} %{self.name}"


@dataclass(slots=True)
class Environment:
    """Live-in slots are shared; live-out and reduction slots repeat once per task."""

    slots: list[EnvSlot] = field(default_factory=list)

    def role(self, role: SlotRole) -> list[EnvSlot]:
        return [slot for slot in self.slots if slot.role is role]

    @property
    def live_ins(self) -> list[EnvSlot]:
        return self.role(SlotRole.LIVE_IN)

    @property
    def live_outs(self) -> list[EnvSlot]:
        return self.role(SlotRole.LIVE_OUT)

    @property
    def reductions(self) -> list[EnvSlot]:
        return self.role(SlotRole.REDUCTION)

    @property
    def shared(self) -> list[EnvSlot]:
        """Live-ins carried through env cells; pointers travel as task arguments instead."""
        return [slot for slot in self.live_ins if slot.type is not TypeTag.PTR]

    @property
    def pointers(self) -> list[EnvSlot]:
        return [slot for slot in self.live_ins if slot.type is TypeTag.PTR]

    @property
    def private(self) -> list[EnvSlot]:
        return self.reductions + self.live_outs

    def cells(self, tasks: int) -> int:
        return len(self.shared) + tasks * len(self.private)

    def private_cell(self, task: int, position: int) -> int:
        return len(self.shared) + task * len(self.private) + position

    def dump(self) -> list[str]:
        return [str(slot) for slot in self.slots]


@dataclass(slots=True)
class Task:
    body: str
    loop: int
    environment: Environment
    num_tasks: int


@dataclass(slots=True)
class ParallelPlan:
    loop: int
    key: tuple[str, str]
    num_tasks: int = 1
    reductions: list[ReductionInfo] = field(default_factory=list)
    environment: Optional[Environment] = None
    governing: Optional[InductionVariable] = None
    rejected: Optional[str] = None

    @property
    def applicable(self) -> bool:
        return self.rejected is None


def compute_live_in_out(
    module: ModuleIR, loop: LoopStructure, ldg: DependenceGraph, dag: Optional[SCCDAG] = None
) -> Environment:
    """Slots ordered by role then by defining ordinal; parameters come first among live-ins."""
    fn = module.function(loop.function)
    block_of = fn.block_of()
    by_id = {inst.id: inst for inst in fn.instructions()}
    inside = {inst.id for inst in loop.instructions(fn)}
    params = fn.param_types()

    ins: dict[str, Instruction] = {}
    outs: dict[str, Instruction] = {}
    for edge in ldg.edges:
        if not edge.is_register:
            continue
        if edge.src in by_id and edge.src not in inside and edge.dst in inside:
            origin = by_id[edge.src]
            ins[origin.result] = origin  # type: ignore[index]
        elif edge.src in inside and edge.dst in block_of and edge.dst not in inside:
            origin = by_id[edge.src]
            outs[origin.result] = origin  # type: ignore[index]
    used_params = [
        param.name
        for param in fn.params
        if any(param.name in inst.uses() for inst in loop.instructions(fn))
    ]
    accumulators: set[int] = set()
    if dag is not None:
        for scc in dag.sccs:
            if scc.reduction is not None:
                accumulators.add(scc.reduction.accumulator)

    env = Environment()
    for name in used_params:
        env.slots.append(EnvSlot(0, SlotRole.LIVE_IN, name, params[name]))
    for origin in sorted(ins.values(), key=lambda inst: inst.id):
        env.slots.append(EnvSlot(0, SlotRole.LIVE_IN, origin.result, origin.type, origin.id))  # type: ignore[arg-type]
    ordered_outs = sorted(outs.values(), key=lambda inst: inst.id)
    for origin in ordered_outs:
        if origin.id in accumulators:
            env.slots.append(EnvSlot(0, SlotRole.REDUCTION, origin.result, origin.type, origin.id))  # type: ignore[arg-type]
    for origin in ordered_outs:
        if origin.id not in accumulators:
            env.slots.append(EnvSlot(0, SlotRole.LIVE_OUT, origin.result, origin.type, origin.id))  # type: ignore[arg-type]
    for index, slot in enumerate(env.slots):
        slot.index = index
    return env


def _describe(scc_members) -> str:
    return ", ".join(f"#{member}" for member in sorted(scc_members))


def doall_check(
    module: ModuleIR,
    loop: LoopStructure,
    *,
    tasks: int = 1,
    analysis: Optional[ModuleAnalysis] = None,
) -> ParallelPlan:
    """Decide whether the iterations of ``loop`` may run as independent strided chunks."""
    analysis = analysis or ModuleAnalysis(module)
    info = analysis.info(loop)
    plan = ParallelPlan(loop.id.ordinal, loop.key, num_tasks=tasks)

    def reject(reason: str) -> ParallelPlan:
        plan.rejected = f"DOALL rejected: {reason}"
        return plan

    if tasks < 1:
        return reject(f"task count must be at least 1, got {tasks}")
    fn = module.function(loop.function)
    if fn.entry.label == loop.header:
        return reject(f"loop {loop} is headed by the entry block")

    dag = info.dag
    control: set[int] = set()
    governing_scc = None
    if info.governing is not None:
        iv, governing = info.governing
        control = {iv.instruction, iv.update, governing.exit_compare, governing.exit_branch}  # type: ignore[arg-type]
        governing_scc = dag.scc_of(iv.instruction)
    for scc in dag.sccs:
        if scc.kind is not SCCKind.SEQUENTIAL:
            continue
        if scc is governing_scc and scc.members <= control:
            continue
        return reject(f"SCC#{scc.id} Sequential (instr {_describe(scc.members)})")

    if info.governing is None:
        return reject(f"loop {loop} has no governing induction variable")
    iv, governing = info.governing
    reason = chunking_blocker(loop, iv)
    if reason:
        return reject(reason)
    if len(loop.exits) != 1 or loop.exits[0][0] != governing.exiting_block:
        return reject(f"loop {loop} must leave only through its governing test")

    for edge in info.ldg.edges:
        if edge.is_control or edge.src not in info.ldg.internal or edge.dst not in info.ldg.internal:
            continue
        if dag.scc_of(edge.src) is dag.scc_of(edge.dst):
            continue
        if edge.carried(loop.id.ordinal) is not Carried.FALSE:
            return reject(f"loop-carried {edge.kind} dependence #{edge.src} -> #{edge.dst}")

    env = compute_live_in_out(module, loop, info.ldg, dag)
    accumulators = {
        scc.reduction.accumulator: scc.reduction for scc in dag.sccs if scc.reduction is not None
    }
    governing_values = {iv.instruction, iv.update}
    for slot in env.reductions:
        plan.reductions.append(accumulators[slot.source])  # type: ignore[index]
    for slot in env.live_outs:
        if slot.source not in governing_values:
            return reject(
                f"live-out %{slot.name} is neither a reduction nor the governing induction variable"
            )
    plan.environment = env
    plan.governing = iv
    return plan


class _Emitter:
    """Appends instructions before the terminator of ``block`` (or at its end)."""

    def __init__(self, fn: FunctionIR, block: BasicBlock) -> None:
        self.fn = fn
        self.block = block

    def place(self, inst: Instruction) -> None:
        if self.block.terminator is not None:
            self.block.instructions.insert(len(self.block.instructions) - 1, inst)
        else:
            self.block.instructions.append(inst)

    def value(self, opcode: str, operands: list[Operand], base: str, type: TypeTag = TypeTag.I64) -> Local:
        name = self.fn.fresh_name(base)
        self.place(Instruction(opcode, operands, result=name, type=type))
        return Local(name)

    def effect(self, opcode: str, operands: list[Operand]) -> None:
        self.place(Instruction(opcode, operands))

    def cell(self, env: Operand, index: Operand) -> Local:
        return self.value("gep", [env, index], "env.cell", TypeTag.PTR)


def _fresh(base: str, taken: set[str]) -> str:
    name, counter = base, 0
    while name in taken:
        counter += 1
        name = f"{base}.{counter}"
    taken.add(name)
    return name


def _fold(emit: _Emitter, op: str, left: Operand, right: Operand, base: str) -> Local:
    if op in _MERGE_COMPARE:
        keep = emit.value(_MERGE_COMPARE[op], [left, right], f"{base}.keep", TypeTag.I1)
        return emit.value("select", [keep, left, right], base)
    return emit.value(op, [left, right], base)


def _reduction_of(plan: ParallelPlan, slot: EnvSlot) -> ReductionInfo:
    return next(red for red in plan.reductions if red.accumulator == slot.source)


def _outline(
    module: ModuleIR, fn: FunctionIR, loop: LoopStructure, plan: ParallelPlan, exit_target: str
) -> tuple[Task, FunctionIR]:
    """Copy the loop into a task function over one strided chunk of the governing IV."""
    env: Environment = plan.environment  # type: ignore[assignment]
    iv: InductionVariable = plan.governing  # type: ignore[assignment]
    by_id = {inst.id: inst for inst in fn.instructions()}
    step = iv.literal_step
    taken_fns = {other.name for other in module.functions} | {glob.name for glob in module.globals}
    task_name = _fresh(f"{fn.name}.doall{loop.id.ordinal}", taken_fns)

    blocks = [copy.deepcopy(block) for block in fn.blocks if block.label in loop.blocks]
    labels = {block.label for block in blocks}
    task = FunctionIR(task_name, return_type=TypeTag.VOID, blocks=[])
    entry = BasicBlock(_fresh("task.entry", set(labels)))
    leave = BasicBlock(_fresh("task.exit", labels | {entry.label}))
    task.blocks = [entry, *blocks, leave]

    taken = {inst.result for block in blocks for inst in block.instructions if inst.result}
    taken |= {slot.name for slot in env.live_ins}
    env_name, off_name, factor_name = (_fresh(base, taken) for base in ("env", "off", "factor"))
    task.params = [
        Param(env_name, TypeTag.PTR),
        Param(off_name, TypeTag.I64),
        Param(factor_name, TypeTag.I64),
        *(Param(slot.name, TypeTag.PTR) for slot in env.pointers),
    ]

    emit = _Emitter(task, entry)
    for position, slot in enumerate(env.shared):
        cell = emit.cell(Local(env_name), Const(position))
        if slot.type is TypeTag.I1:
            raw = emit.value("load", [cell], f"{slot.name}.raw")
            entry.instructions.append(
                Instruction("ne", [raw, Const(0)], result=slot.name, type=TypeTag.I1)
            )
        else:
            entry.instructions.append(Instruction("load", [cell], result=slot.name, type=TypeTag.I64))
    first = emit.value("mul", [Local(off_name), Const(step)], f"{iv.name}.first")  # type: ignore[arg-type]
    start = emit.value("add", [iv.start, first], f"{iv.name}.start")  # type: ignore[list-item]
    stride = emit.value("mul", [Local(factor_name), Const(step)], f"{iv.name}.stride")  # type: ignore[arg-type]
    entry.instructions.append(Instruction("br", [Label(loop.header)]))

    header = task.block(loop.header)
    for phi in header.phis():
        outer = [label for label, _ in phi.phi_arms() if label not in loop.blocks]
        for label in outer:
            phi.retarget(label, entry.label)
    privatized = {by_id[red.accumulator].result: red for red in plan.reductions}
    task_defs = task.definitions()
    for phi in header.phis():
        reduction = privatized.get(phi.result)  # type: ignore[arg-type]
        if reduction is not None:
            phi.set_phi_arms(
                [
                    (label, Const(reduction.identity) if label == entry.label else value)
                    for label, value in phi.phi_arms()
                ]
            )
    update_name = by_id[iv.update].result  # type: ignore[index]
    restride(
        task,
        loop.latches,
        task_defs[iv.name],
        task_defs[update_name],  # type: ignore[index]
        entry.label,
        start,
        stride,
    )
    for block in blocks:
        term = block.terminator
        if term is not None:
            term.retarget(exit_target, leave.label)

    emit = _Emitter(task, leave)
    if env.private:
        width = emit.value("mul", [Local(off_name), Const(len(env.private))], "slot.base")
        base = emit.value("add", [width, Const(len(env.shared))], "slot.base")
        for position, slot in enumerate(env.private):
            index = emit.value("add", [base, Const(position)], "slot")
            cell = emit.cell(Local(env_name), index)
            stored = iv.name if slot.source in (iv.instruction, iv.update) else slot.name
            emit.effect("store", [Local(stored), cell])
    leave.instructions.append(Instruction("ret", []))
    return Task(task_name, loop.id.ordinal, env, plan.num_tasks), task


def doall_transform(
    module: ModuleIR,
    plan: ParallelPlan,
    tasks: Optional[int] = None,
    *,
    logger: Optional[logging.Logger] = None,
) -> ModuleIR:
    """Replace the planned loop by ``tasks`` strided task calls plus reduction merges."""
    if not plan.applicable:
        raise TransformError(plan.rejected or "DOALL plan is not applicable")
    tasks = tasks or plan.num_tasks
    if tasks < 1:
        raise TransformError(f"task count must be at least 1, got {tasks}")
    _, loop = loop_by_key(module, plan.key)
    if loop.id.ordinal != plan.loop:
        raise TransformError(f"plan for loop L{plan.loop} does not match the module")
    result = create_preheader(module, loop, logger=logger)
    _, loop = loop_by_key(result, plan.key)
    plan = doall_check(result, loop, tasks=tasks)
    if not plan.applicable:
        raise TransformError(f"plan does not match the module: {plan.rejected}")

    fn = result.function(loop.function)
    env: Environment = plan.environment  # type: ignore[assignment]
    iv: InductionVariable = plan.governing  # type: ignore[assignment]
    exit_from, exit_target = loop.exits[0]
    task, body = _outline(result, fn, loop, plan, exit_target)
    preheader = fn.block(loop.preheader)  # type: ignore[arg-type]

    env_name = fn.fresh_name("env")
    fn.entry.instructions.insert(
        0, Instruction("alloca", [Const(max(1, env.cells(tasks)))], result=env_name, type=TypeTag.PTR)
    )
    env_ptr = Local(env_name)
    emit = _Emitter(fn, preheader)
    for position, slot in enumerate(env.shared):
        value: Operand = Local(slot.name)
        if slot.type is TypeTag.I1:
            value = emit.value("select", [value, Const(1), Const(0)], f"{slot.name}.wide")
        emit.effect("store", [value, emit.cell(env_ptr, Const(position))])
    for ordinal in range(tasks):
        for position, slot in enumerate(env.private):
            if slot.role is SlotRole.REDUCTION:
                identity = IDENTITIES[_reduction_of(plan, slot).op]
                cell = emit.cell(env_ptr, Const(env.private_cell(ordinal, position)))
                emit.effect("store", [Const(identity), cell])
    pointer_args = [Local(slot.name) for slot in env.pointers]
    for ordinal in range(tasks):
        emit.effect(
            "call", [FuncRef(task.body), env_ptr, Const(ordinal), Const(tasks), *pointer_args]
        )

    replacements: dict[str, Operand] = {}
    step = iv.literal_step or 0
    for position, slot in enumerate(env.private):
        if slot.role is SlotRole.REDUCTION:
            reduction = _reduction_of(plan, slot)
            op, merged = reduction.op, reduction.initial
        else:
            op, merged = ("min" if step > 0 else "max"), None
        for ordinal in range(tasks):
            cell = emit.cell(env_ptr, Const(env.private_cell(ordinal, position)))
            private = emit.value("load", [cell], f"{slot.name}.part")
            merged = private if merged is None else _fold(emit, op, merged, private, f"{slot.name}.merged")
        if slot.role is SlotRole.LIVE_OUT and slot.source == iv.update:
            merged = emit.value("add", [merged, Const(step)], f"{slot.name}.final")  # type: ignore[list-item]
        replacements[slot.name] = merged  # type: ignore[assignment]
    preheader.instructions[-1] = Instruction("br", [Label(exit_target)])

    inside = set(loop.blocks)
    for block in fn.blocks:
        if block.label in inside:
            continue
        for inst in block.instructions:
            if inst.is_phi:
                inst.retarget(exit_from, preheader.label)
            for name, replacement in replacements.items():
                inst.replace_uses(name, replacement)
    fn.blocks = [block for block in fn.blocks if block.label not in inside]
    result.functions.insert(result.functions.index(fn) + 1, body)

    result.without_metadata("prof", "pdg")
    result.metadata.append(("doall", f"@{task.body} {tasks}"))
    result.renumber()
    if logger:
        logger.info(
            "outlined loop %s of @%s into @%s with %d tasks, %d reductions",
            loop,
            fn.name,
            task.body,
            tasks,
            len(plan.reductions),
        )
    return ensure_valid(result)
