from __future__ import annotations

from ..errors import MidendError
from .model import ModuleIR

# Metadata fields holding entity ordinals, by key and record kind.
_ORDINAL_FIELDS = {
    "instruction": ("instr", [1]),
    "basic-block": ("block", [1]),
    "function": ("func", [1]),
    "loop": ("block", [1]),
    "loop-iterations": ("block", [1]),
    "edge": ("block", [1, 2]),
}


def _rebase_prof(text: str, offsets: dict[str, int]) -> str:
    fields = text.split()
    if not fields or fields[0] not in _ORDINAL_FIELDS:
        return text
    space, positions = _ORDINAL_FIELDS[fields[0]]
    for position in positions:
        fields[position] = str(int(fields[position]) + offsets[space])
    return " ".join(fields)


def _rebase_pdg(text: str, offsets: dict[str, int]) -> str:
    fields = text.split()
    for position in (0, 1):
        fields[position] = str(int(fields[position]) + offsets["instr"])
    return " ".join(fields)


def link_modules(modules: list[ModuleIR]) -> ModuleIR:
    """Concatenate modules, renumber entities and rebase ordinal-carrying metadata."""
    linked = ModuleIR()
    offsets = {"instr": 0, "block": 0, "func": 0}
    shapes_seen = False
    for module in modules:
        for glob in module.globals:
            if linked.get_global(glob.name) is not None or linked.get_function(glob.name):
                raise MidendError(f"duplicate global @{glob.name} while linking")
            linked.globals.append(glob)
        for fn in module.functions:
            if linked.get_function(fn.name) is not None or linked.get_global(fn.name):
                raise MidendError(f"duplicate function @{fn.name} while linking")
            linked.functions.append(fn)
        for key, text in module.metadata:
            if key == "prof":
                if text.startswith("shape "):
                    shapes_seen = True
                    continue
                text = _rebase_prof(text, offsets)
            elif key == "pdg":
                text = _rebase_pdg(text, offsets)
            linked.metadata.append((key, text))
        n_instr, n_blocks, n_funcs = module.shape()
        offsets["instr"] += n_instr
        offsets["block"] += n_blocks
        offsets["func"] += n_funcs
    linked = linked.clone().renumber()
    if shapes_seen:
        n_instr, n_blocks, n_funcs = linked.shape()
        linked.metadata.insert(0, ("prof", f"shape {n_instr} {n_blocks} {n_funcs}"))
    return linked
