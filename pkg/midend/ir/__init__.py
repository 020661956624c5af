from .dominators import VIRTUAL_EXIT, Direction, DominatorInfo, compute_dominators
from .link import link_modules
from .model import (
    BasicBlock,
    Const,
    EntityId,
    EntityKind,
    FuncRef,
    FunctionIR,
    GlobalDef,
    GlobalRef,
    Instruction,
    Label,
    Local,
    ModuleIR,
    Operand,
    Param,
    TypeTag,
)
from .parser import parse_module, parse_with_lines
from .printer import format_instruction, print_module
from .verify import Diagnostic, ensure_valid, verify_module

__all__ = [
    "VIRTUAL_EXIT",
    "BasicBlock",
    "Const",
    "Diagnostic",
    "Direction",
    "DominatorInfo",
    "EntityId",
    "EntityKind",
    "FuncRef",
    "FunctionIR",
    "GlobalDef",
    "GlobalRef",
    "Instruction",
    "Label",
    "Local",
    "ModuleIR",
    "Operand",
    "Param",
    "TypeTag",
    "compute_dominators",
    "ensure_valid",
    "format_instruction",
    "link_modules",
    "parse_module",
    "parse_with_lines",
    "print_module",
    "verify_module",
]
