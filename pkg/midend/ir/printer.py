from __future__ import annotations

from .model import FunctionIR, GlobalDef, Instruction, ModuleIR


def format_instruction(inst: Instruction) -> str:
    prefix = f"%{inst.result} = " if inst.result is not None else ""
    op = inst.opcode
    if op == "phi":
        arms = ", ".join(f"[{label}: {value}]" for label, value in inst.phi_arms())
        return f"{prefix}phi {arms}"
    if op == "call" or op == "icall":
        args = ", ".join(str(arg) for arg in inst.operands[1:])
        return f"{prefix}{op} {inst.operands[0]}({args})"
    if not inst.operands:
        return f"{prefix}{op}"
    return f"{prefix}{op} " + ", ".join(str(operand) for operand in inst.operands)


def format_global(glob: GlobalDef) -> str:
    text = f"global @{glob.name}: i64[{glob.cells}]"
    if glob.init:
        text += " = [" + ", ".join(str(value) for value in glob.init) + "]"
    return text


def format_function(fn: FunctionIR) -> str:
    params = ", ".join(f"%{param.name}: {param.type}" for param in fn.params)
    lines = [f"func @{fn.name}({params}) -> {fn.return_type} {{"]
    for block in fn.blocks:
        lines.append(f"{block.label}:")
        lines.extend(f"  {format_instruction(inst)}" for inst in block.instructions)
    lines.append("}")
    return "\n".join(lines)


def print_module(module: ModuleIR) -> str:
    """Canonical text: globals, functions in stored order, metadata section last."""
    sections: list[str] = []
    if module.globals:
        sections.append("\n".join(format_global(glob) for glob in module.globals))
    sections.extend(format_function(fn) for fn in module.functions)
    if module.metadata:
        sections.append(
            "\n".join(f"!{key} {text}".rstrip() for key, text in module.metadata)
        )
    if not sections:
        return ""
    return "\n\n".join(sections) + "\n"
