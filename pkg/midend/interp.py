"""Reference interpreter, dynamic dependence tracer and profiler."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import anyio
import regex

from .config import get_settings
from .errors import (
    ContractViolation,
    IrreducibleLoopError,
    MidendError,
    ProfileMismatchError,
    TrapError,
    UnknownEntityError,
)
from .ir.model import (
    BINARY_OPS,
    COMPARE_OPS,
    BasicBlock,
    Const,
    FunctionIR,
    GlobalRef,
    Instruction,
    Local,
    ModuleIR,
    Operand,
    wrap_i64,
)
from .loops import LoopStructure, detect_loops

FUNC_TAG = 0x7A5C << 48
IO_SITE = "io"

TRAP_DIV_BY_ZERO = "div-by-zero"
TRAP_OUT_OF_BOUNDS = "out-of-bounds"
TRAP_STEP_BUDGET = "step-budget-exceeded"
TRAP_BAD_ICALL = "bad-icall"

MODE_SEQUENTIAL = "sequential-any-order"
MODE_CONCURRENT = "concurrent"


class MemObject:
    """One runtime allocation; ``site`` names its static allocation site."""

    __slots__ = ("site", "cells")

    def __init__(self, site: str, cells: list[int]) -> None:
        self.site = site
        self.cells = cells


@dataclass(frozen=True, slots=True)
class Pointer:
    obj: MemObject
    offset: int


Value = Union[int, Pointer]


def alloca_site(inst: Instruction) -> str:
    return f"alloca#{inst.id}"


def global_site(name: str) -> str:
    return f"@{name}"


@dataclass(slots=True)
class ExecResult:
    output: list[int] = field(default_factory=list)
    exit_value: int = 0
    steps: int = 0
    trap: Optional[str] = None

    def same_behaviour(self, other: "ExecResult") -> bool:
        return (self.output, self.exit_value, self.trap) == (other.output, other.exit_value, other.trap)


class Observer:
    """Execution hooks; every method is a no-op by default."""

    machine: "Machine"

    def on_function(self, fn: FunctionIR) -> None:
        pass

    def on_block(self, fn: FunctionIR, block: BasicBlock, prev: Optional[str]) -> None:
        pass

    def on_instruction(self, fn: FunctionIR, inst: Instruction) -> None:
        pass

    def on_call(self, caller: FunctionIR, site: Instruction, callee: FunctionIR) -> None:
        pass

    def on_access(self, inst: Instruction, kind: str, obj: MemObject, offset: int) -> None:
        pass

    def on_loop(self, loop: LoopStructure, invocation: int, iteration: int) -> None:
        pass


@dataclass(slots=True)
class Frame:
    fn: FunctionIR
    block: BasicBlock
    values: dict[str, Value]
    index: int = 0
    prev: Optional[str] = None
    site: Optional[Instruction] = None
    # active loops of this activation: [loop, invocation serial, iteration]
    loops: list[list] = field(default_factory=list)


class Machine:
    def __init__(
        self,
        module: ModuleIR,
        *,
        step_budget: Optional[int] = None,
        observer: Optional[Observer] = None,
        task_mode: Optional[str] = None,
        rng: Optional[random.Random] = None,
        check_writes: bool = True,
        parent: Optional["Machine"] = None,
    ) -> None:
        self.module = module
        self.budget = step_budget if step_budget is not None else get_settings().step_budget
        self.observer = observer
        if observer is not None:
            observer.machine = self
        self.task_mode = task_mode
        self.rng = rng or random.Random(0)
        self.check_writes = check_writes
        self.steps = 0
        self.stack: list[Frame] = []
        self.write_log: Optional[set[tuple[MemObject, int]]] = None
        self.invocations = 0
        if parent is not None:
            self.functions = parent.functions
            self.by_ordinal = parent.by_ordinal
            self.blocks = parent.blocks
            self.globals = parent.globals
            self.io = parent.io
            self.output = parent.output
            self.task_fns = parent.task_fns
            self.loop_headers = parent.loop_headers
            return
        self.functions = {fn.name: fn for fn in module.functions}
        self.by_ordinal = {fn.id: fn for fn in module.functions}
        self.blocks = {fn.name: {block.label: block for block in fn.blocks} for fn in module.functions}
        self.globals = {}
        for glob in module.globals:
            cells = list(glob.init) + [0] * (glob.cells - len(glob.init))
            self.globals[glob.name] = MemObject(global_site(glob.name), cells)
        self.io = MemObject(IO_SITE, [0])
        self.output: list[int] = []
        self.task_fns = task_functions(module)
        self.loop_headers: dict[str, dict[str, LoopStructure]] = {}

    # helpers

    def trap(self, kind: str) -> TrapError:
        return TrapError(kind)

    def headers(self, fn: FunctionIR) -> dict[str, LoopStructure]:
        found = self.loop_headers.get(fn.name)
        if found is None:
            try:
                found = {loop.header: loop for loop in detect_loops(fn)}
            except IrreducibleLoopError:
                found = {}
            self.loop_headers[fn.name] = found
        return found

    def loop_snapshot(self) -> dict[int, tuple[int, int]]:
        """Active loops of the whole stack: loop ordinal -> (invocation, iteration); inner frames win."""
        snapshot: dict[int, tuple[int, int]] = {}
        for frame in self.stack:
            for loop, invocation, iteration in frame.loops:
                snapshot[loop.id.ordinal] = (invocation, iteration)
        return snapshot

    def value(self, frame: Frame, op: Operand) -> Value:
        if isinstance(op, Const):
            return op.value
        if isinstance(op, Local):
            return frame.values[op.name]
        if isinstance(op, GlobalRef):
            return Pointer(self.globals[op.name], 0)
        raise MidendError(f"operand {op} has no value")

    def tick(self) -> None:
        if self.steps >= self.budget:
            raise self.trap(TRAP_STEP_BUDGET)
        self.steps += 1

    def cell(self, ptr: Value) -> tuple[MemObject, int]:
        if not isinstance(ptr, Pointer) or not 0 <= ptr.offset < len(ptr.obj.cells):
            raise self.trap(TRAP_OUT_OF_BOUNDS)
        return ptr.obj, ptr.offset

    def resolve_icall(self, target: Value, n_args: int) -> FunctionIR:
        if isinstance(target, Pointer):
            raise self.trap(TRAP_BAD_ICALL)
        callee = self.by_ordinal.get(target - FUNC_TAG)
        if callee is None or len(callee.params) != n_args:
            raise self.trap(TRAP_BAD_ICALL)
        return callee

    # frames and blocks

    def push(self, fn: FunctionIR, args: Sequence[Value], site: Optional[Instruction]) -> None:
        values: dict[str, Value] = {param.name: arg for param, arg in zip(fn.params, args)}
        frame = Frame(fn=fn, block=fn.entry, values=values, site=site)
        self.stack.append(frame)
        if self.observer is not None:
            self.observer.on_function(fn)
        self.enter(frame, fn.entry.label, None)

    def enter(self, frame: Frame, label: str, prev: Optional[str]) -> None:
        block = self.blocks[frame.fn.name][label]
        frame.prev = prev
        frame.block = block
        frame.index = 0
        if self.observer is not None:
            self.track_loops(frame, label)
            self.observer.on_block(frame.fn, block, prev)
        phis = []
        for inst in block.instructions:
            if not inst.is_phi:
                break
            phis.append(inst)
        if not phis:
            return
        incoming = []
        for inst in phis:
            self.tick()
            for arm_label, op in inst.phi_arms():
                if arm_label == prev:
                    incoming.append(self.value(frame, op))
                    break
            else:
                raise MidendError(f"phi at {inst.entity} has no arm for {prev}")
        for inst, val in zip(phis, incoming):
            frame.values[inst.result] = val  # type: ignore[index]
            if self.observer is not None:
                self.observer.on_instruction(frame.fn, inst)
        frame.index = len(phis)

    def track_loops(self, frame: Frame, label: str) -> None:
        frame.loops = [entry for entry in frame.loops if label in entry[0].blocks]
        loop = self.headers(frame.fn).get(label)
        if loop is None:
            return
        if frame.loops and frame.loops[-1][0] is loop:
            frame.loops[-1][2] += 1
        else:
            self.invocations += 1
            frame.loops.append([loop, self.invocations, 0])
        _, invocation, iteration = frame.loops[-1]
        self.observer.on_loop(loop, invocation, iteration)  # type: ignore[union-attr]

    def record_access(self, inst: Instruction, kind: str, obj: MemObject, offset: int) -> None:
        if kind == "W" and self.write_log is not None:
            self.write_log.add((obj, offset))
        if self.observer is not None:
            self.observer.on_access(inst, kind, obj, offset)

    # execution

    def execute(self, fn: FunctionIR, args: Sequence[Value]) -> Optional[Value]:
        base = len(self.stack)
        self.push(fn, args, None)
        result: Optional[Value] = None
        while len(self.stack) > base:
            frame = self.stack[-1]
            inst = frame.block.instructions[frame.index]
            op = inst.opcode
            if op == "call" and self.task_mode and inst.operands[0].name in self.task_fns:  # type: ignore[union-attr]
                self.dispatch_tasks(frame)
                continue
            self.tick()
            if self.observer is not None:
                self.observer.on_instruction(frame.fn, inst)
            ops = inst.operands
            if op in BINARY_OPS:
                frame.values[inst.result] = self.binary(  # type: ignore[index]
                    op, self.value(frame, ops[0]), self.value(frame, ops[1])  # type: ignore[arg-type]
                )
            elif op in COMPARE_OPS:
                frame.values[inst.result] = int(  # type: ignore[index]
                    compare(op, self.value(frame, ops[0]), self.value(frame, ops[1]))  # type: ignore[arg-type]
                )
            elif op == "select":
                chosen = ops[1] if self.value(frame, ops[0]) else ops[2]
                frame.values[inst.result] = self.value(frame, chosen)  # type: ignore[index]
            elif op == "alloca":
                obj = MemObject(alloca_site(inst), [0] * ops[0].value)  # type: ignore[union-attr]
                frame.values[inst.result] = Pointer(obj, 0)  # type: ignore[index]
            elif op == "gep":
                base_ptr = self.value(frame, ops[0])
                if not isinstance(base_ptr, Pointer):
                    raise self.trap(TRAP_OUT_OF_BOUNDS)
                delta = self.value(frame, ops[1])
                frame.values[inst.result] = Pointer(base_ptr.obj, base_ptr.offset + delta)  # type: ignore[index,operator]
            elif op == "load":
                obj, offset = self.cell(self.value(frame, ops[0]))
                self.record_access(inst, "R", obj, offset)
                frame.values[inst.result] = obj.cells[offset]  # type: ignore[index]
            elif op == "store":
                stored = self.value(frame, ops[0])
                obj, offset = self.cell(self.value(frame, ops[1]))
                self.record_access(inst, "W", obj, offset)
                obj.cells[offset] = stored  # type: ignore[assignment]
            elif op == "funcptr":
                callee = self.functions[ops[0].name]  # type: ignore[union-attr]
                frame.values[inst.result] = FUNC_TAG + callee.id  # type: ignore[index]
            elif op == "print":
                self.record_access(inst, "W", self.io, 0)
                self.output.append(self.value(frame, ops[0]))  # type: ignore[arg-type]
            elif op == "call" or op == "icall":
                args_v = [self.value(frame, arg) for arg in ops[1:]]
                if op == "call":
                    callee = self.functions[ops[0].name]  # type: ignore[union-attr]
                else:
                    callee = self.resolve_icall(self.value(frame, ops[0]), len(args_v))
                if self.observer is not None:
                    self.observer.on_call(frame.fn, inst, callee)
                self.push(callee, args_v, inst)
                continue
            elif op == "br":
                self.enter(frame, ops[0].name, frame.block.label)  # type: ignore[union-attr]
                continue
            elif op == "brcond":
                target = ops[1] if self.value(frame, ops[0]) else ops[2]
                self.enter(frame, target.name, frame.block.label)  # type: ignore[union-attr]
                continue
            elif op == "ret":
                returned = self.value(frame, ops[0]) if ops else None
                self.stack.pop()
                if len(self.stack) == base:
                    result = returned
                    break
                caller = self.stack[-1]
                if frame.site is not None and frame.site.result is not None:
                    caller.values[frame.site.result] = returned  # type: ignore[assignment]
                caller.index += 1
                continue
            frame.index += 1
        return result

    def binary(self, op: str, a: int, b: int) -> int:
        if op == "add":
            return wrap_i64(a + b)
        if op == "sub":
            return wrap_i64(a - b)
        if op == "mul":
            return wrap_i64(a * b)
        if op == "sdiv" or op == "srem":
            if b == 0:
                raise self.trap(TRAP_DIV_BY_ZERO)
            quotient = abs(a) // abs(b)
            if (a < 0) != (b < 0):
                quotient = -quotient
            if op == "sdiv":
                return wrap_i64(quotient)
            return wrap_i64(a - b * quotient)
        if op == "and":
            return wrap_i64(a & b)
        if op == "or":
            return wrap_i64(a | b)
        if op == "xor":
            return wrap_i64(a ^ b)
        if op == "shl":
            return wrap_i64(a << (b & 63))
        if op == "lshr":
            return wrap_i64((a & ((1 << 64) - 1)) >> (b & 63))
        raise MidendError(f"unknown binary opcode {op}")

    # task groups

    def dispatch_tasks(self, frame: Frame) -> None:
        """Run the consecutive calls to one task function as a group."""
        block = frame.block.instructions
        first = block[frame.index]
        name = first.operands[0].name  # type: ignore[union-attr]
        group: list[tuple[FunctionIR, list[Value]]] = []
        while frame.index < len(block):
            inst = block[frame.index]
            if inst.opcode != "call" or inst.operands[0].name != name:  # type: ignore[union-attr]
                break
            self.tick()
            group.append((self.functions[name], [self.value(frame, arg) for arg in inst.operands[1:]]))
            frame.index += 1
        if self.task_mode == MODE_CONCURRENT:
            writes = self.run_concurrent(group)
        else:
            order = list(range(len(group)))
            self.rng.shuffle(order)
            writes = []
            for k in order:
                fn, args = group[k]
                self.write_log = set()
                self.execute(fn, args)
                writes.append(self.write_log)
                self.write_log = None
        if self.check_writes:
            check_disjoint(name, writes)

    def run_concurrent(self, group: list[tuple[FunctionIR, list[Value]]]) -> list[set]:
        outcomes: list = [None] * len(group)

        def run_one(k: int) -> None:
            fn, args = group[k]
            child = Machine(
                self.module,
                step_budget=max(self.budget - self.steps, 0),
                parent=self,
            )
            child.write_log = set()
            try:
                child.execute(fn, args)
                outcomes[k] = (child.steps, child.write_log, None)
            except TrapError as exc:
                outcomes[k] = (child.steps, child.write_log, exc)

        async def launch() -> None:
            async with anyio.create_task_group() as group_scope:
                for k in range(len(group)):
                    group_scope.start_soon(anyio.to_thread.run_sync, run_one, k)

        anyio.run(launch)
        writes = []
        for steps, written, error in outcomes:
            self.steps += steps
            if error is not None:
                raise error
            writes.append(written)
        if self.steps > self.budget:
            raise self.trap(TRAP_STEP_BUDGET)
        return writes


def check_disjoint(task: str, writes: list[set]) -> None:
    seen: set = set()
    for k, written in enumerate(writes):
        overlap = seen & written
        if overlap:
            raise ContractViolation(
                f"tasks of @{task} wrote {len(overlap)} common cell(s) (task {k})"
            )
        seen |= written


def compare(op: str, a: int, b: int) -> bool:
    if op == "eq":
        return a == b
    if op == "ne":
        return a != b
    if op == "slt":
        return a < b
    if op == "sle":
        return a <= b
    if op == "sgt":
        return a > b
    return a >= b


def task_functions(module: ModuleIR) -> dict[str, int]:
    """Task functions registered by ``!doall @task <tasks>`` metadata."""
    found: dict[str, int] = {}
    for text in module.metadata_values("doall"):
        fields = text.split()
        if len(fields) >= 2 and fields[0].startswith("@"):
            found[fields[0][1:]] = int(fields[1])
    return found


def _main_of(module: ModuleIR, args: Sequence[int]) -> FunctionIR:
    main = module.get_function("main")
    if main is None:
        raise UnknownEntityError("module has no @main")
    if len(main.params) != len(args):
        raise MidendError(f"@main expects {len(main.params)} arguments, got {len(args)}")
    return main


def _run(machine: Machine, module: ModuleIR, args: Sequence[int]) -> ExecResult:
    main = _main_of(module, args)
    try:
        returned = machine.execute(main, list(args))
    except TrapError as exc:
        return ExecResult(output=machine.output, exit_value=0, steps=machine.steps, trap=exc.trap)
    exit_value = returned if isinstance(returned, int) else 0
    return ExecResult(output=machine.output, exit_value=exit_value, steps=machine.steps)


def run_program(
    module: ModuleIR,
    args: Sequence[int] = (),
    step_budget: Optional[int] = None,
    *,
    observer: Optional[Observer] = None,
) -> ExecResult:
    machine = Machine(module, step_budget=step_budget, observer=observer)
    return _run(machine, module, args)


def run_parallel(
    module: ModuleIR,
    args: Sequence[int] = (),
    mode: str = MODE_SEQUENTIAL,
    *,
    seed: Optional[int] = None,
    step_budget: Optional[int] = None,
    check_writes: bool = True,
) -> ExecResult:
    """Run a module whose task groups execute in a shuffled order or on worker threads.

    A broken execution contract raises ``ContractViolation``; traps are reported in the result.
    """
    if mode not in (MODE_SEQUENTIAL, MODE_CONCURRENT):
        raise MidendError(f"unknown execution mode {mode!r}")
    seed = get_settings().seed if seed is None else seed
    machine = Machine(
        module,
        step_budget=step_budget,
        task_mode=mode,
        rng=random.Random(seed),
        check_writes=check_writes,
    )
    return _run(machine, module, args)


# dynamic dependences


@dataclass(slots=True)
class DynamicDependence:
    src: int
    dst: int
    kind: str
    object: str
    same_iteration: dict[int, bool] = field(default_factory=dict)


class _AccessSummary:
    """What one static instruction did to one cell: per (loop, invocation) first iteration and repeats."""

    __slots__ = ("loops",)

    def __init__(self) -> None:
        self.loops: dict[tuple[int, int], list] = {}

    def add(self, snapshot: dict[int, tuple[int, int]]) -> None:
        for loop, (invocation, iteration) in snapshot.items():
            entry = self.loops.get((loop, invocation))
            if entry is None:
                self.loops[(loop, invocation)] = [iteration, False]
            elif entry[0] != iteration:
                entry[1] = True


_KIND_OF = {("W", "R"): "RAW", ("W", "W"): "WAW", ("R", "W"): "WAR"}


class DependenceTracer(Observer):
    def __init__(self) -> None:
        self.history: dict[tuple[MemObject, int], dict[tuple[int, str], _AccessSummary]] = {}
        self.found: dict[tuple[int, int, str, str], DynamicDependence] = {}

    def on_access(self, inst: Instruction, kind: str, obj: MemObject, offset: int) -> None:
        snapshot = self.machine.loop_snapshot()
        cell = (obj, offset)
        seen = self.history.setdefault(cell, {})
        for (src, src_kind), summary in seen.items():
            dep_kind = _KIND_OF.get((src_kind, kind))
            if dep_kind is None:
                continue
            key = (src, inst.id, dep_kind, obj.site)
            dep = self.found.get(key)
            if dep is None:
                dep = self.found[key] = DynamicDependence(src, inst.id, dep_kind, obj.site)
            for loop, (invocation, iteration) in snapshot.items():
                entry = summary.loops.get((loop, invocation))
                if entry is None:
                    continue
                same = not entry[1] and entry[0] == iteration
                dep.same_iteration[loop] = dep.same_iteration.get(loop, True) and same
        summary = seen.get((inst.id, kind))
        if summary is None:
            summary = seen[(inst.id, kind)] = _AccessSummary()
        summary.add(snapshot)


def trace_dependences(
    module: ModuleIR, args: Sequence[int] = (), step_budget: Optional[int] = None
) -> list[DynamicDependence]:
    tracer = DependenceTracer()
    result = run_program(module, args, step_budget, observer=tracer)
    if result.trap:
        raise TrapError(result.trap)
    return sorted(tracer.found.values(), key=lambda d: (d.src, d.dst, d.kind, d.object))


# profiles


@dataclass(slots=True)
class ProfileData:
    shape: tuple[int, int, int] = (0, 0, 0)
    instructions: dict[int, int] = field(default_factory=dict)
    blocks: dict[int, int] = field(default_factory=dict)
    functions: dict[int, int] = field(default_factory=dict)
    loop_invocations: dict[int, int] = field(default_factory=dict)
    loop_iterations: dict[int, int] = field(default_factory=dict)
    edges: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def total_steps(self) -> int:
        return sum(self.instructions.values())

    def merge(self, other: "ProfileData") -> None:
        for mine, theirs in (
            (self.instructions, other.instructions),
            (self.blocks, other.blocks),
            (self.functions, other.functions),
            (self.loop_invocations, other.loop_invocations),
            (self.loop_iterations, other.loop_iterations),
            (self.edges, other.edges),
        ):
            for key, count in theirs.items():
                mine[key] = mine.get(key, 0) + count  # type: ignore[index]


def _bump(counter: dict, key) -> None:
    counter[key] = counter.get(key, 0) + 1


class Profiler(Observer):
    def __init__(self) -> None:
        self.profile = ProfileData()

    def on_function(self, fn: FunctionIR) -> None:
        _bump(self.profile.functions, fn.id)

    def on_block(self, fn: FunctionIR, block: BasicBlock, prev: Optional[str]) -> None:
        if prev is not None:
            source = self.machine.blocks[fn.name][prev]
            _bump(self.profile.edges, (source.id, block.id))

    def on_instruction(self, fn: FunctionIR, inst: Instruction) -> None:
        _bump(self.profile.instructions, inst.id)


def _finish_profile(module: ModuleIR, profile: ProfileData) -> ProfileData:
    """Derive block and loop counters from instruction and edge counts."""
    profile.shape = module.shape()
    for fn in module.functions:
        for block in fn.blocks:
            count = profile.instructions.get(block.instructions[-1].id, 0)
            if count:
                profile.blocks[block.id] = count
        ids = {block.label: block.id for block in fn.blocks}
        for loop in _safe_loops(fn):
            header = ids[loop.header]
            inside = {ids[label] for label in loop.blocks}
            entries = sum(
                count
                for (src, dst), count in profile.edges.items()
                if dst == header and src not in inside
            )
            # A header visit that leaves straight away only evaluated the exit test.
            visits = profile.blocks.get(header, 0)
            if loop.header not in loop.latches:
                visits -= sum(
                    count
                    for (src, dst), count in profile.edges.items()
                    if src == header and dst not in inside
                )
            if entries:
                profile.loop_invocations[loop.id.ordinal] = entries
            if visits:
                profile.loop_iterations[loop.id.ordinal] = visits
    return profile


def collect_profile(
    module: ModuleIR, inputs: Sequence[Sequence[int]] = ((),), step_budget: Optional[int] = None
) -> ProfileData:
    profile = ProfileData()
    for args in inputs:
        profiler = Profiler()
        result = run_program(module, args, step_budget, observer=profiler)
        if result.trap:
            raise TrapError(result.trap)
        profile.merge(profiler.profile)
    return _finish_profile(module, profile)


_PROF_KINDS = {
    "instruction": "instructions",
    "basic-block": "blocks",
    "function": "functions",
    "loop": "loop_invocations",
    "loop-iterations": "loop_iterations",
}
_PROF_LINE = regex.compile(r"^(?P<kind>[a-z-]+)\s+(?P<fields>-?\d+(?:\s+-?\d+)*)$")


def profile_lines(profile: ProfileData, edges: bool = True) -> list[str]:
    lines = ["shape {} {} {}".format(*profile.shape)]
    for kind, attr in _PROF_KINDS.items():
        counts: dict[int, int] = getattr(profile, attr)
        lines.extend(f"{kind} {key} {counts[key]}" for key in sorted(counts))
    if edges:
        lines.extend(
            f"edge {src} {dst} {count}" for (src, dst), count in sorted(profile.edges.items())
        )
    return lines


def _check_ids(module: ModuleIR, profile: ProfileData) -> None:
    n_instr, n_blocks, n_funcs = module.shape()
    if profile.shape != (n_instr, n_blocks, n_funcs):
        raise ProfileMismatchError(
            f"profile shape {profile.shape} does not match module shape {(n_instr, n_blocks, n_funcs)}"
        )
    headers = {loop.id.ordinal for fn in module.functions for loop in _safe_loops(fn)}
    limits = {
        "instructions": n_instr,
        "blocks": n_blocks,
        "functions": n_funcs,
    }
    for attr, limit in limits.items():
        for key in getattr(profile, attr):
            if not 0 <= key < limit:
                raise ProfileMismatchError(f"profile {attr} id {key} out of range")
    for attr in ("loop_invocations", "loop_iterations"):
        for key in getattr(profile, attr):
            if key not in headers:
                raise ProfileMismatchError(f"profile names unknown loop L{key}")


def _safe_loops(fn: FunctionIR) -> list[LoopStructure]:
    try:
        return detect_loops(fn)
    except IrreducibleLoopError:
        return []


def embed_profile(module: ModuleIR, profile: ProfileData) -> ModuleIR:
    """Replace any ``!prof`` entries of ``module`` with ``profile``."""
    _check_ids(module, profile)
    embedded = module.clone().without_metadata("prof")
    embedded.metadata.extend(("prof", line) for line in profile_lines(profile))
    return embedded


def parse_profile_lines(lines: Sequence[str]) -> ProfileData:
    profile = ProfileData()
    for raw in lines:
        text = raw.strip()
        if text.startswith("!prof"):
            text = text[len("!prof") :].strip()
        if not text or text.startswith("#"):
            continue
        match = _PROF_LINE.match(text)
        if match is None:
            raise ProfileMismatchError(f"malformed profile entry {raw!r}")
        kind = match.group("kind")
        fields = [int(value) for value in match.group("fields").split()]
        if kind == "shape" and len(fields) == 3:
            profile.shape = (fields[0], fields[1], fields[2])
        elif kind == "edge" and len(fields) == 3:
            profile.edges[(fields[0], fields[1])] = fields[2]
        elif kind in _PROF_KINDS and len(fields) == 2:
            getattr(profile, _PROF_KINDS[kind])[fields[0]] = fields[1]
        else:
            raise ProfileMismatchError(f"malformed profile entry {raw!r}")
    return profile


def read_profile(module: ModuleIR) -> Optional[ProfileData]:
    """Recover embedded profile data, or None when the module carries none."""
    lines = module.metadata_values("prof")
    if not lines:
        return None
    profile = parse_profile_lines(lines)
    _check_ids(module, profile)
    return profile


def hotness(module: ModuleIR, loop: LoopStructure, profile: Optional[ProfileData] = None) -> float:
    """Share of executed instructions that belong to the loop's blocks."""
    profile = profile or read_profile(module)
    if profile is None or not profile.total_steps:
        return 0.0
    fn = module.function(loop.function)
    inside = sum(profile.instructions.get(inst.id, 0) for inst in loop.instructions(fn))
    return inside / profile.total_steps


def function_hotness(module: ModuleIR, name: str, profile: Optional[ProfileData] = None) -> float:
    profile = profile or read_profile(module)
    if profile is None or not profile.total_steps:
        return 0.0
    fn = module.function(name)
    inside = sum(profile.instructions.get(inst.id, 0) for inst in fn.instructions())
    return inside / profile.total_steps


# call observation


class CallRecorder(Observer):
    def __init__(self) -> None:
        self.pairs: set[tuple[str, str]] = set()
        self.targets: dict[int, set[str]] = {}
        self.reached: set[str] = set()

    def on_function(self, fn: FunctionIR) -> None:
        self.reached.add(fn.name)

    def on_call(self, caller: FunctionIR, site: Instruction, callee: FunctionIR) -> None:
        self.pairs.add((caller.name, callee.name))
        self.targets.setdefault(site.id, set()).add(callee.name)


async def _both(first, second) -> tuple[ExecResult, ExecResult]:
    results: list = [None, None]

    async def run(k: int, job) -> None:
        results[k] = await anyio.to_thread.run_sync(job)

    async with anyio.create_task_group() as group:
        group.start_soon(run, 0, first)
        group.start_soon(run, 1, second)
    return results[0], results[1]


def run_pair(first, second) -> tuple[ExecResult, ExecResult]:
    """Evaluate two zero-argument interpreter jobs on worker threads."""
    return anyio.run(_both, first, second)
