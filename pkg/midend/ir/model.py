from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union

from ..errors import UnknownEntityError

I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1

BINARY_OPS = frozenset({"add", "sub", "mul", "sdiv", "srem", "and", "or", "xor", "shl", "lshr"})
COMPARE_OPS = frozenset({"eq", "ne", "slt", "sle", "sgt", "sge"})
TERMINATORS = frozenset({"br", "brcond", "ret"})
OPCODES = BINARY_OPS | COMPARE_OPS | TERMINATORS | frozenset(
    {"select", "phi", "alloca", "gep", "load", "store", "call", "icall", "funcptr", "print"}
)
# Opcodes that always produce a value.
VALUE_OPS = BINARY_OPS | COMPARE_OPS | frozenset({"select", "phi", "alloca", "gep", "load", "funcptr"})


class TypeTag(str, Enum):
    I64 = "i64"
    I1 = "i1"
    PTR = "ptr"
    VOID = "void"

    def __str__(self) -> str:
        return self.value


class EntityKind(str, Enum):
    INSTRUCTION = "instruction"
    BLOCK = "basic-block"
    FUNCTION = "function"
    LOOP = "loop"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True, order=True)
class EntityId:
    kind: EntityKind
    ordinal: int

    def __str__(self) -> str:
        prefix = {
            EntityKind.INSTRUCTION: "instr #",
            EntityKind.BLOCK: "block #",
            EntityKind.FUNCTION: "function #",
            EntityKind.LOOP: "loop L",
        }[self.kind]
        return f"{prefix}{self.ordinal}"


@dataclass(frozen=True, slots=True)
class Local:
    name: str

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True, slots=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True, slots=True)
class GlobalRef:
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True, slots=True)
class FuncRef:
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True, slots=True)
class Label:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[Local, Const, GlobalRef, FuncRef, Label]


def wrap_i64(value: int) -> int:
    value &= (1 << 64) - 1
    return value - (1 << 64) if value >= (1 << 63) else value


@dataclass(slots=True)
class Instruction:
    opcode: str
    operands: list[Operand] = field(default_factory=list)
    result: Optional[str] = None
    type: TypeTag = TypeTag.VOID
    id: int = -1

    @property
    def entity(self) -> EntityId:
        return EntityId(EntityKind.INSTRUCTION, self.id)

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def is_phi(self) -> bool:
        return self.opcode == "phi"

    @property
    def is_call(self) -> bool:
        return self.opcode in ("call", "icall")

    def phi_arms(self) -> list[tuple[str, Operand]]:
        ops = self.operands
        return [(ops[k].name, ops[k + 1]) for k in range(0, len(ops), 2)]  # type: ignore[union-attr]

    def set_phi_arms(self, arms: list[tuple[str, Operand]]) -> None:
        operands: list[Operand] = []
        for label, value in arms:
            operands.extend((Label(label), value))
        self.operands = operands

    def value_operands(self) -> list[Operand]:
        return [op for op in self.operands if not isinstance(op, Label)]

    def uses(self) -> list[str]:
        return [op.name for op in self.operands if isinstance(op, Local)]

    def successors(self) -> list[str]:
        if self.opcode == "br":
            return [self.operands[0].name]  # type: ignore[union-attr]
        if self.opcode == "brcond":
            targets: list[str] = []
            for op in self.operands[1:]:
                if op.name not in targets:  # type: ignore[union-attr]
                    targets.append(op.name)  # type: ignore[union-attr]
            return targets
        return []

    def call_args(self) -> list[Operand]:
        return self.operands[1:] if self.is_call else []

    def pointer_operand(self) -> Optional[Operand]:
        if self.opcode == "load":
            return self.operands[0]
        if self.opcode == "store":
            return self.operands[1]
        return None

    def replace_uses(self, name: str, replacement: Operand) -> None:
        self.operands = [
            replacement if isinstance(op, Local) and op.name == name else op for op in self.operands
        ]

    def retarget(self, old: str, new: str) -> None:
        if self.is_phi:
            self.set_phi_arms([(new if lab == old else lab, val) for lab, val in self.phi_arms()])
        elif self.opcode in ("br", "brcond"):
            self.operands = [
                Label(new) if isinstance(op, Label) and op.name == old else op for op in self.operands
            ]


@dataclass(slots=True)
class BasicBlock:
    label: str
    instructions: list[Instruction] = field(default_factory=list)
    id: int = -1

    @property
    def entity(self) -> EntityId:
        return EntityId(EntityKind.BLOCK, self.id)

    @property
    def terminator(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    def phis(self) -> list[Instruction]:
        return [inst for inst in self.instructions if inst.is_phi]

    def successors(self) -> list[str]:
        term = self.terminator
        return term.successors() if term else []


@dataclass(slots=True)
class Param:
    name: str
    type: TypeTag


@dataclass(slots=True)
class FunctionIR:
    name: str
    params: list[Param] = field(default_factory=list)
    return_type: TypeTag = TypeTag.VOID
    blocks: list[BasicBlock] = field(default_factory=list)
    id: int = -1

    @property
    def entity(self) -> EntityId:
        return EntityId(EntityKind.FUNCTION, self.id)

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock:
        for block in self.blocks:
            if block.label == label:
                return block
        raise UnknownEntityError(f"unknown block {label} in @{self.name}")

    def has_block(self, label: str) -> bool:
        return any(block.label == label for block in self.blocks)

    def instructions(self) -> Iterator[Instruction]:
        for block in self.blocks:
            yield from block.instructions

    def successors(self) -> dict[str, list[str]]:
        known = {block.label for block in self.blocks}
        return {
            block.label: [s for s in block.successors() if s in known] for block in self.blocks
        }

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {block.label: [] for block in self.blocks}
        for label, succs in self.successors().items():
            for succ in succs:
                if label not in preds[succ]:
                    preds[succ].append(label)
        return preds

    def definitions(self) -> dict[str, Instruction]:
        return {inst.result: inst for inst in self.instructions() if inst.result is not None}

    def param_types(self) -> dict[str, TypeTag]:
        return {param.name: param.type for param in self.params}

    def block_of(self) -> dict[int, str]:
        return {inst.id: block.label for block in self.blocks for inst in block.instructions}

    def users(self) -> dict[str, list[Instruction]]:
        users: dict[str, list[Instruction]] = {}
        for inst in self.instructions():
            for name in inst.uses():
                users.setdefault(name, []).append(inst)
        return users

    def fresh_name(self, base: str) -> str:
        taken = set(self.definitions()) | {param.name for param in self.params}
        if base not in taken:
            return base
        counter = 1
        while f"{base}.{counter}" in taken:
            counter += 1
        return f"{base}.{counter}"

    def fresh_label(self, base: str) -> str:
        taken = {block.label for block in self.blocks}
        if base not in taken:
            return base
        counter = 1
        while f"{base}.{counter}" in taken:
            counter += 1
        return f"{base}.{counter}"


@dataclass(slots=True)
class GlobalDef:
    name: str
    cells: int
    init: list[int] = field(default_factory=list)


@dataclass(slots=True)
class Located:
    function: FunctionIR
    block: BasicBlock
    instruction: Instruction


@dataclass(slots=True)
class ModuleIR:
    globals: list[GlobalDef] = field(default_factory=list)
    functions: list[FunctionIR] = field(default_factory=list)
    metadata: list[tuple[str, str]] = field(default_factory=list)

    def function(self, name: str) -> FunctionIR:
        found = self.get_function(name)
        if found is None:
            raise UnknownEntityError(f"unknown function @{name}")
        return found

    def get_function(self, name: str) -> Optional[FunctionIR]:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def get_global(self, name: str) -> Optional[GlobalDef]:
        for glob in self.globals:
            if glob.name == name:
                return glob
        return None

    def instructions(self) -> Iterator[tuple[FunctionIR, BasicBlock, Instruction]]:
        for fn in self.functions:
            for block in fn.blocks:
                for inst in block.instructions:
                    yield fn, block, inst

    def locate(self) -> dict[int, Located]:
        return {inst.id: Located(fn, block, inst) for fn, block, inst in self.instructions()}

    def block_owner(self) -> dict[int, tuple[FunctionIR, BasicBlock]]:
        return {block.id: (fn, block) for fn in self.functions for block in fn.blocks}

    def instruction(self, ordinal: int) -> Located:
        for fn, block, inst in self.instructions():
            if inst.id == ordinal:
                return Located(fn, block, inst)
        raise UnknownEntityError(f"unknown instruction #{ordinal}")

    def shape(self) -> tuple[int, int, int]:
        n_blocks = sum(len(fn.blocks) for fn in self.functions)
        n_instr = sum(len(block.instructions) for fn in self.functions for block in fn.blocks)
        return n_instr, n_blocks, len(self.functions)

    def renumber(self) -> "ModuleIR":
        """Assign entity ordinals by one textual-order traversal."""
        block_ordinal = 0
        instr_ordinal = 0
        for fn_ordinal, fn in enumerate(self.functions):
            fn.id = fn_ordinal
            for block in fn.blocks:
                block.id = block_ordinal
                block_ordinal += 1
                for inst in block.instructions:
                    inst.id = instr_ordinal
                    instr_ordinal += 1
        return self

    def clone(self) -> "ModuleIR":
        return copy.deepcopy(self)

    def metadata_values(self, key: str) -> list[str]:
        return [text for k, text in self.metadata if k == key]

    def without_metadata(self, *keys: str) -> "ModuleIR":
        self.metadata = [(k, text) for k, text in self.metadata if k not in keys]
        return self
