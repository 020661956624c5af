from __future__ import annotations

from pathlib import Path

from midend.ir import ModuleIR, parse_module
from midend.loops import LoopStructure, module_loops

CORPUS = Path(__file__).parent / "corpus"
PROGRAMS = sorted(path.stem for path in CORPUS.glob("*.ir"))


def source(name: str) -> str:
    return (CORPUS / f"{name}.ir").read_text(encoding="utf-8")


def load(name: str) -> ModuleIR:
    return parse_module(source(name))


def inputs(name: str) -> list[list[int]]:
    """Argument vectors listed in ``# args:`` comments; a single empty vector when none."""
    found = []
    for line in source(name).splitlines():
        line = line.strip()
        if line.startswith("# args:"):
            found.append([int(value) for value in line[len("# args:") :].split()])
    return found or [[]]


def first_loop(module: ModuleIR, function: str = "main") -> LoopStructure:
    return next(loop for loop in module_loops(module) if loop.function == function)


def loop_with_header(module: ModuleIR, header: str, function: str = "main") -> LoopStructure:
    return next(
        loop for loop in module_loops(module) if loop.function == function and loop.header == header
    )


def random_cfg(rng, size: int) -> str:
    """Single-function module over ``size`` blocks, all reachable, every block able to return.

    A spanning tree from ``b0`` keeps every block reachable; tree leaves return and the
    remaining branch slots get extra edges to any block but the entry, back edges included.
    """
    children: dict[int, list[int]] = {index: [] for index in range(size)}
    for index in range(1, size):
        candidates = [parent for parent in range(index) if len(children[parent]) < 2]
        children[rng.choice(candidates)].append(index)
    lines = ["func @main(%a: i64) -> i64 {"]
    for index in range(size):
        lines.append(f"b{index}:")
        if index == 0:
            lines.append("  %c = slt %a, 5")
        targets = list(children[index])
        spare = [other for other in range(1, size) if other not in targets]
        if len(targets) == 1 and spare and rng.random() < 0.6:
            targets.append(rng.choice(spare))
        if not targets:
            lines.append("  ret 0")
        elif len(targets) == 1:
            lines.append(f"  br b{targets[0]}")
        else:
            lines.append(f"  brcond %c, b{targets[0]}, b{targets[1]}")
    lines.append("}")
    return "\n".join(lines) + "\n"
