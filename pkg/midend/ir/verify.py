from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import VerificationError
from ..graphs import reachable
from .dominators import compute_dominators
from .model import (
    BINARY_OPS,
    COMPARE_OPS,
    Const,
    EntityId,
    FuncRef,
    FunctionIR,
    GlobalRef,
    Instruction,
    Label,
    Local,
    ModuleIR,
    Operand,
    TypeTag,
)


@dataclass(frozen=True, slots=True)
class Diagnostic:
    entity: Optional[EntityId]
    rule: str
    message: str

    def __str__(self) -> str:
        return self.message


class _FunctionChecker:
    def __init__(self, module: ModuleIR, fn: FunctionIR, out: list[Diagnostic]) -> None:
        self.module = module
        self.fn = fn
        self.out = out
        self.types: dict[str, TypeTag] = fn.param_types()
        self.defs: dict[str, Instruction] = {}
        for inst in fn.instructions():
            if inst.result is not None:
                self.types.setdefault(inst.result, inst.type)
                self.defs.setdefault(inst.result, inst)

    def report(self, entity: EntityId, rule: str, message: str) -> None:
        self.out.append(Diagnostic(entity, rule, message))

    def operand_type(self, op: Operand) -> Optional[TypeTag]:
        if isinstance(op, Const):
            return TypeTag.I64
        if isinstance(op, GlobalRef):
            return TypeTag.PTR
        if isinstance(op, Local):
            return self.types.get(op.name)
        return None

    def expect(self, inst: Instruction, op: Operand, *allowed: TypeTag) -> None:
        if isinstance(op, Const):
            if TypeTag.I64 in allowed or (TypeTag.I1 in allowed and op.value in (0, 1)):
                return
        elif isinstance(op, (Label, FuncRef)):
            self.report(inst.entity, "type", f"operand {op} is not a value at {inst.entity}")
            return
        else:
            tag = self.operand_type(op)
            if tag is None or tag in allowed:
                return
        wanted = "/".join(str(tag) for tag in allowed)
        self.report(inst.entity, "type", f"operand {op} must be {wanted} at {inst.entity}")

    def check(self) -> None:
        fn = self.fn
        baseline = len(self.out)
        self.check_structure()
        if not fn.blocks or any(b.terminator is None for b in fn.blocks):
            return
        labels = {block.label for block in fn.blocks}
        for inst in fn.instructions():
            for op in inst.operands:
                if isinstance(op, Label) and op.name not in labels:
                    self.report(inst.entity, "unknown-label", f"unknown label {op.name} at {inst.entity}")
                    return
        succs = fn.successors()
        live = reachable(succs, [fn.entry.label])
        for block in fn.blocks:
            if block.label not in live:
                self.report(block.entity, "unreachable-block", f"block {block.label} is unreachable")
        preds = fn.predecessors()
        if preds[fn.entry.label]:
            self.report(fn.entry.entity, "entry-preds", f"entry block of @{fn.name} has predecessors")
        seen: set[str] = {param.name for param in fn.params}
        for inst in fn.instructions():
            if inst.result is None:
                continue
            if inst.result in seen:
                self.report(inst.entity, "duplicate-definition", f"%{inst.result} defined twice")
            seen.add(inst.result)
        for block in fn.blocks:
            for inst in block.instructions:
                self.check_instruction(inst, block.label, preds[block.label])
        if len(self.out) == baseline and len(live) == len(fn.blocks):
            self.check_dominance(preds)

    def check_structure(self) -> None:
        fn = self.fn
        if not fn.blocks:
            self.report(fn.entity, "empty-function", f"@{fn.name} has no blocks")
            return
        for block in fn.blocks:
            if not block.instructions:
                self.report(block.entity, "terminator", f"block {block.label} is empty")
                continue
            for inst in block.instructions[:-1]:
                if inst.is_terminator:
                    self.report(inst.entity, "terminator", f"instruction follows terminator at {inst.entity}")
            if not block.instructions[-1].is_terminator:
                self.report(block.entity, "terminator", f"block {block.label} lacks a terminator")
            seen_non_phi = False
            for inst in block.instructions:
                if inst.is_phi and seen_non_phi:
                    self.report(inst.entity, "phi-position", f"phi after non-phi at {inst.entity}")
                seen_non_phi = seen_non_phi or not inst.is_phi
        for inst in fn.entry.instructions:
            if inst.is_phi:
                self.report(inst.entity, "entry-phi", f"phi in entry block at {inst.entity}")

    def check_instruction(self, inst: Instruction, label: str, preds: list[str]) -> None:
        op = inst.opcode
        ops = inst.operands
        fn = self.fn
        for operand in ops:
            if isinstance(operand, Local) and operand.name not in self.types:
                self.report(inst.entity, "undefined-value", f"%{operand.name} undefined at {inst.entity}")
                return
            if isinstance(operand, GlobalRef) and self.module.get_global(operand.name) is None:
                self.report(inst.entity, "undefined-value", f"@{operand.name} undefined at {inst.entity}")
                return
            if isinstance(operand, FuncRef) and self.module.get_function(operand.name) is None:
                self.report(inst.entity, "undefined-value", f"@{operand.name} undefined at {inst.entity}")
                return
        if op in BINARY_OPS or op in COMPARE_OPS:
            self.expect(inst, ops[0], TypeTag.I64)
            self.expect(inst, ops[1], TypeTag.I64)
            if op in ("sdiv", "srem") and isinstance(ops[1], Const) and ops[1].value == 0:
                self.report(inst.entity, "div-by-zero-literal", f"division by literal 0 at {inst.entity}")
        elif op == "select":
            self.expect(inst, ops[0], TypeTag.I1)
            self.expect(inst, ops[1], inst.type)
            self.expect(inst, ops[2], inst.type)
        elif op == "phi":
            arms = inst.phi_arms()
            arm_labels = [arm_label for arm_label, _ in arms]
            if len(set(arm_labels)) != len(arm_labels):
                self.report(inst.entity, "phi-duplicate-label", f"phi repeats a label at {inst.entity}")
            if sorted(set(arm_labels)) != sorted(preds):
                self.report(inst.entity, "phi-incomplete", f"phi incomplete at {inst.entity}")
            for _, value in arms:
                self.expect(inst, value, inst.type)
        elif op == "brcond":
            self.expect(inst, ops[0], TypeTag.I1)
        elif op == "alloca":
            if label != fn.entry.label:
                self.report(inst.entity, "alloca-position", f"alloca outside entry block at {inst.entity}")
            if not isinstance(ops[0], Const) or ops[0].value <= 0:
                self.report(inst.entity, "alloca-size", f"alloca needs a positive cell count at {inst.entity}")
        elif op == "gep":
            self.expect(inst, ops[0], TypeTag.PTR)
            self.expect(inst, ops[1], TypeTag.I64)
        elif op == "load":
            self.expect(inst, ops[0], TypeTag.PTR)
        elif op == "store":
            self.expect(inst, ops[1], TypeTag.PTR)
            value = ops[0]
            if isinstance(value, Local) and self.types.get(value.name) is TypeTag.PTR:
                origin = self.defs.get(value.name)
                if origin is None or origin.opcode != "funcptr":
                    self.report(inst.entity, "store-value", f"only funcptr values may be stored at {inst.entity}")
            else:
                self.expect(inst, value, TypeTag.I64)
        elif op == "call":
            callee = self.module.function(ops[0].name)  # type: ignore[union-attr]
            args = ops[1:]
            if len(args) != len(callee.params):
                self.report(inst.entity, "call-arity", f"@{callee.name} expects {len(callee.params)} arguments at {inst.entity}")
            else:
                for arg, param in zip(args, callee.params):
                    self.expect(inst, arg, param.type)
            if inst.result is not None and callee.return_type is TypeTag.VOID:
                self.report(inst.entity, "call-result", f"void call has a result at {inst.entity}")
        elif op == "icall":
            self.expect(inst, ops[0], TypeTag.PTR, TypeTag.I64)
        elif op == "funcptr":
            if not isinstance(ops[0], FuncRef):
                self.report(inst.entity, "type", f"funcptr needs a function at {inst.entity}")
        elif op == "print":
            self.expect(inst, ops[0], TypeTag.I64, TypeTag.I1)
        elif op == "ret":
            if fn.return_type is TypeTag.VOID:
                if ops:
                    self.report(inst.entity, "ret-type", f"void function returns a value at {inst.entity}")
            elif not ops:
                self.report(inst.entity, "ret-type", f"missing return value at {inst.entity}")
            else:
                self.expect(inst, ops[0], fn.return_type)

    def check_dominance(self, preds: dict[str, list[str]]) -> None:
        fn = self.fn
        dom = compute_dominators(fn)
        where: dict[str, tuple[str, int]] = {}
        for block in fn.blocks:
            for position, inst in enumerate(block.instructions):
                if inst.result is not None:
                    where[inst.result] = (block.label, position)
        for block in fn.blocks:
            for position, inst in enumerate(block.instructions):
                if inst.is_phi:
                    uses = [(arm_label, value) for arm_label, value in inst.phi_arms()]
                    for arm_label, value in uses:
                        if not isinstance(value, Local) or value.name not in where:
                            continue
                        def_block, _ = where[value.name]
                        if not dom.dominates(def_block, arm_label):
                            self.report(inst.entity, "ssa-dominance", f"SSA dominance violated at {inst.entity}")
                    continue
                for name in inst.uses():
                    if name not in where:
                        continue
                    def_block, def_pos = where[name]
                    if def_block == block.label:
                        ok = def_pos < position
                    else:
                        ok = dom.strictly_dominates(def_block, block.label)
                    if not ok:
                        self.report(inst.entity, "ssa-dominance", f"SSA dominance violated at {inst.entity}")


def verify_module(module: ModuleIR) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    seen_globals: set[str] = set()
    for glob in module.globals:
        if glob.name in seen_globals:
            out.append(Diagnostic(None, "duplicate-global", f"duplicate global @{glob.name}"))
        seen_globals.add(glob.name)
    seen_functions: set[str] = set()
    for fn in module.functions:
        if fn.name in seen_functions or fn.name in seen_globals:
            out.append(Diagnostic(fn.entity, "duplicate-function", f"duplicate function @{fn.name}"))
        seen_functions.add(fn.name)
    for fn in module.functions:
        _FunctionChecker(module, fn, out).check()
    return out


def ensure_valid(module: ModuleIR) -> ModuleIR:
    diagnostics = verify_module(module)
    if diagnostics:
        raise VerificationError(diagnostics)
    return module
