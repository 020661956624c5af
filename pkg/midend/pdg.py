"""Program, function and loop dependence graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .alias import TOP, AbstractObject, AliasAnalysis, AliasAnswer, Footprint, ObjectKind
from .ir.dominators import VIRTUAL_EXIT, Direction, compute_dominators
from .ir.model import Const, FunctionIR, GlobalRef, Instruction, Local, ModuleIR, Operand
from .loops import LoopStructure

CONTROL = "control"
DATA = "data"
REGISTER = "register"
MEMORY = "memory"
MAY = "may"
MUST = "must"


class Carried(str, Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    @property
    def bit(self) -> str:
        return {"true": "1", "false": "0", "unknown": "?"}[self.value]


@dataclass(slots=True)
class DependenceEdge:
    src: int
    dst: int
    dep_class: str
    kind: Optional[str] = None
    medium: Optional[str] = None
    certainty: str = MUST
    label: Optional[str] = None
    loop_carried: dict[int, Carried] = field(default_factory=dict)

    @property
    def is_memory(self) -> bool:
        return self.medium == MEMORY

    @property
    def is_register(self) -> bool:
        return self.medium == REGISTER

    @property
    def is_control(self) -> bool:
        return self.dep_class == CONTROL

    def carried(self, loop: int) -> Carried:
        return self.loop_carried.get(loop, Carried.UNKNOWN)

    def copy(self) -> "DependenceEdge":
        return DependenceEdge(
            self.src,
            self.dst,
            self.dep_class,
            self.kind,
            self.medium,
            self.certainty,
            self.label,
            dict(self.loop_carried),
        )

    def __str__(self) -> str:
        if self.is_control:
            return f"#{self.src} -> #{self.dst} control {self.label}"
        return f"#{self.src} -> #{self.dst} {self.kind} {self.medium} {self.certainty}"


@dataclass(slots=True)
class DependenceGraph:
    internal: set[int] = field(default_factory=set)
    external: set[int] = field(default_factory=set)
    edges: list[DependenceEdge] = field(default_factory=list)
    function: Optional[str] = None
    loop: Optional[int] = None

    def incoming(self) -> dict[int, list[DependenceEdge]]:
        found: dict[int, list[DependenceEdge]] = {}
        for edge in self.edges:
            found.setdefault(edge.dst, []).append(edge)
        return found

    def outgoing(self) -> dict[int, list[DependenceEdge]]:
        found: dict[int, list[DependenceEdge]] = {}
        for edge in self.edges:
            found.setdefault(edge.src, []).append(edge)
        return found

    def memory_edges(self) -> list[DependenceEdge]:
        return [edge for edge in self.edges if edge.is_memory]

    def may_memory_count(self) -> int:
        return sum(1 for edge in self.edges if edge.is_memory and edge.certainty == MAY)

    def dump(self) -> list[str]:
        lines = []
        for edge in self.edges:
            text = str(edge)
            if self.loop is not None:
                text += f" carried={edge.carried(self.loop).value}"
            lines.append(text)
        return lines


@dataclass(slots=True)
class ControlDependenceInfo:
    deps: dict[int, set[tuple[int, str]]] = field(default_factory=dict)


def control_dependences(fn: FunctionIR) -> ControlDependenceInfo:
    """Ferrante-style control dependence over the post-dominator tree."""
    pdom = compute_dominators(fn, Direction.POST)
    info = ControlDependenceInfo()
    for block in fn.blocks:
        branch = block.terminator
        if branch is None or branch.opcode != "brcond" or len(branch.successors()) != 2:
            continue
        stop = pdom.idom.get(block.label)
        for label, target in (("true", branch.operands[1]), ("false", branch.operands[2])):
            runner: Optional[str] = target.name  # type: ignore[union-attr]
            if pdom.strictly_dominates(runner, block.label):  # type: ignore[arg-type]
                continue
            while runner is not None and runner != stop and runner != VIRTUAL_EXIT:
                for inst in fn.block(runner).instructions:
                    info.deps.setdefault(inst.id, set()).add((branch.id, label))
                runner = pdom.idom.get(runner)
    return info


_ANY = AbstractObject(ObjectKind.IO, "*", 0)


def _baseline_footprint(inst: Instruction) -> Footprint:
    everything = frozenset({(_ANY, TOP)})
    if inst.opcode == "load":
        return Footprint(reads=everything)
    if inst.opcode in ("store", "print"):
        return Footprint(writes=everything)
    if inst.is_call:
        return Footprint(reads=everything, writes=everything)
    return Footprint()


class _Builder:
    def __init__(self, module: ModuleIR, aa: AliasAnalysis, baseline: bool) -> None:
        self.module = module
        self.aa = aa
        self.baseline = baseline
        self.graph = DependenceGraph()
        self.seen: set[tuple] = set()

    def add(self, edge: DependenceEdge) -> None:
        key = (edge.src, edge.dst, edge.dep_class, edge.kind, edge.medium, edge.label)
        if key not in self.seen:
            self.seen.add(key)
            self.graph.edges.append(edge)

    def register_edges(self) -> None:
        for fn in self.module.functions:
            defs = fn.definitions()
            for inst in fn.instructions():
                for name in dict.fromkeys(inst.uses()):
                    origin = defs.get(name)
                    if origin is not None:
                        self.add(DependenceEdge(origin.id, inst.id, DATA, "RAW", REGISTER, MUST))

    def interprocedural_edges(self) -> None:
        for fn in self.module.functions:
            defs = fn.definitions()
            for inst in fn.instructions():
                if not inst.is_call:
                    continue
                for name in self.aa.callees(inst):
                    callee = self.module.function(name)
                    users = callee.users()
                    for param, arg in zip(callee.params, inst.call_args()):
                        origin = defs.get(arg.name) if isinstance(arg, Local) else None
                        if origin is None:
                            continue
                        for user in users.get(param.name, []):
                            self.add(DependenceEdge(origin.id, user.id, DATA, "RAW", REGISTER, MUST))
                    if inst.result is None:
                        continue
                    for ret in callee.instructions():
                        if ret.opcode == "ret" and ret.operands:
                            self.add(DependenceEdge(ret.id, inst.id, DATA, "RAW", REGISTER, MUST))

    def memory_edges(self) -> None:
        accesses: list[tuple[Instruction, Footprint]] = []
        for _, _, inst in self.module.instructions():
            footprint = _baseline_footprint(inst) if self.baseline else self.aa.footprint(inst)
            if not footprint.empty:
                accesses.append((inst, footprint))
        for a, fa in accesses:
            for b, fb in accesses:
                for kind, first, second in (
                    ("RAW", fa.writes, fb.reads),
                    ("WAW", fa.writes, fb.writes),
                    ("WAR", fa.reads, fb.writes),
                ):
                    if not first or not second:
                        continue
                    if self.baseline:
                        self.add(DependenceEdge(a.id, b.id, DATA, kind, MEMORY, MAY))
                        continue
                    answer = self.aa.compare(first, second, self.aa.common_frame(a, b))
                    if answer is AliasAnswer.NO_ALIAS:
                        continue
                    certainty = MUST if answer is AliasAnswer.MUST_ALIAS else MAY
                    self.add(DependenceEdge(a.id, b.id, DATA, kind, MEMORY, certainty))

    def control_edges(self) -> None:
        for fn in self.module.functions:
            info = control_dependences(fn)
            for inst in fn.instructions():
                for branch, label in sorted(info.deps.get(inst.id, ())):
                    self.add(DependenceEdge(branch, inst.id, CONTROL, label=label))


def build_pdg(
    module: ModuleIR, aa: Optional[AliasAnalysis] = None, *, baseline: bool = False
) -> DependenceGraph:
    """Whole-program PDG; ``baseline`` replaces points-to answers by syntactic conflicts."""
    aa = aa or AliasAnalysis(module)
    builder = _Builder(module, aa, baseline)
    builder.register_edges()
    builder.interprocedural_edges()
    builder.memory_edges()
    builder.control_edges()
    graph = builder.graph
    graph.internal = {inst.id for _, _, inst in module.instructions()}
    graph.edges.sort(key=lambda e: (e.src, e.dst, e.dep_class, e.kind or "", e.label or ""))
    return graph


def _restrict(pdg: DependenceGraph, internal: set[int]) -> DependenceGraph:
    view = DependenceGraph(internal=set(internal))
    for edge in pdg.edges:
        if edge.src in internal or edge.dst in internal:
            view.edges.append(edge.copy())
            for node in (edge.src, edge.dst):
                if node not in internal:
                    view.external.add(node)
    return view


def function_dg(pdg: DependenceGraph, fn: FunctionIR) -> DependenceGraph:
    view = _restrict(pdg, {inst.id for inst in fn.instructions()})
    view.function = fn.name
    return view


# loop-carried refinement


def basic_iv_steps(fn: FunctionIR, loop: LoopStructure) -> dict[str, int]:
    """Header phis advanced by the same nonzero literal on every latch arm."""
    defs = fn.definitions()
    steps: dict[str, int] = {}
    for phi in fn.block(loop.header).phis():
        arms = [value for label, value in phi.phi_arms() if label in loop.latches]
        if not arms or any(arm != arms[0] for arm in arms) or not isinstance(arms[0], Local):
            continue
        update = defs.get(arms[0].name)
        if update is None:
            continue
        step = _literal_step(update, phi.result)  # type: ignore[arg-type]
        if step:
            steps[phi.result] = step  # type: ignore[index]
    return steps


def _literal_step(update: Instruction, phi: str) -> Optional[int]:
    a, b = update.operands[0], update.operands[1] if len(update.operands) > 1 else None
    if update.opcode == "add":
        if a == Local(phi) and isinstance(b, Const):
            return b.value
        if b == Local(phi) and isinstance(a, Const):
            return a.value
    if update.opcode == "sub" and a == Local(phi) and isinstance(b, Const):
        return -b.value
    return None


# linear form: key None = constant term, ("iv", name) = basic IV, ("inv", text) = invariant operand
Affine = dict[Optional[tuple[str, str]], int]


class _AffineForms:
    def __init__(self, fn: FunctionIR, loop: LoopStructure) -> None:
        self.defs = fn.definitions()
        self.block_of = fn.block_of()
        self.loop = loop
        self.ivs = basic_iv_steps(fn, loop)

    def defined_inside(self, name: str) -> bool:
        origin = self.defs.get(name)
        return origin is not None and self.block_of[origin.id] in self.loop.blocks

    def invariant(self, op: Operand) -> bool:
        if isinstance(op, (Const, GlobalRef)):
            return True
        return isinstance(op, Local) and not self.defined_inside(op.name)

    def form(self, op: Operand, depth: int = 0) -> Optional[Affine]:
        if depth > 16:
            return None
        if isinstance(op, Const):
            return {None: op.value}
        if not isinstance(op, Local):
            return None
        if op.name in self.ivs:
            return {("iv", op.name): 1}
        if not self.defined_inside(op.name):
            return {("inv", op.name): 1}
        inst = self.defs[op.name]
        if inst.opcode not in ("add", "sub", "mul", "shl"):
            return None
        left = self.form(inst.operands[0], depth + 1)
        right = self.form(inst.operands[1], depth + 1)
        if left is None or right is None:
            return None
        if inst.opcode == "add":
            return _combine(left, right, 1)
        if inst.opcode == "sub":
            return _combine(left, right, -1)
        if inst.opcode == "shl":
            if set(right) != {None} or not 0 <= right[None] < 63:
                return None
            return _scale(left, 1 << right[None])
        if set(right) == {None}:
            return _scale(left, right[None])
        if set(left) == {None}:
            return _scale(right, left[None])
        return None

    def address(self, inst: Instruction) -> Optional[tuple[str, Affine]]:
        pointer = inst.pointer_operand()
        if not isinstance(pointer, Local):
            return None
        origin = self.defs.get(pointer.name)
        if origin is None or origin.opcode != "gep":
            return None
        base, index = origin.operands
        if not self.invariant(base):
            return None
        form = self.form(index)
        if form is None:
            return None
        iv_terms = [key for key, coeff in form.items() if key is not None and key[0] == "iv" and coeff]
        if len(iv_terms) != 1:
            return None
        return str(base), form


def _combine(left: Affine, right: Affine, sign: int) -> Affine:
    result = dict(left)
    for key, coeff in right.items():
        result[key] = result.get(key, 0) + sign * coeff
    return {key: coeff for key, coeff in result.items() if coeff or key is None}


def _scale(form: Affine, factor: int) -> Affine:
    return {key: coeff * factor for key, coeff in form.items() if coeff * factor or key is None}


def _header_reachable(fn: FunctionIR, loop: LoopStructure, start: str, goal: str) -> bool:
    """Whether ``goal`` is reachable from ``start`` inside the loop without re-entering the header."""
    succs = fn.successors()
    seen = {start}
    work = [start]
    while work:
        node = work.pop()
        for succ in succs[node]:
            if succ == goal:
                return True
            if succ not in loop.blocks or succ == loop.header or succ in seen:
                continue
            seen.add(succ)
            work.append(succ)
    return False


def loop_dg(
    pdg: DependenceGraph, module: ModuleIR, loop: LoopStructure
) -> DependenceGraph:
    """Loop view of the PDG with each edge's loop-carried flag for ``loop`` resolved."""
    fn = module.function(loop.function)
    members = {inst.id: inst for inst in loop.instructions(fn)}
    view = _restrict(pdg, set(members))
    view.function = fn.name
    view.loop = loop.id.ordinal
    block_of = fn.block_of()
    latch_values = {
        phi.id: {value for label, value in phi.phi_arms() if label in loop.latches}
        for phi in fn.block(loop.header).phis()
    }
    forms = _AffineForms(fn, loop)
    for edge in view.edges:
        if edge.src not in members or edge.dst not in members:
            carried = Carried.FALSE
        elif edge.is_register:
            src = members[edge.src]
            arms = latch_values.get(edge.dst, set())
            carried = Carried.TRUE if src.result and Local(src.result) in arms else Carried.FALSE
        elif edge.is_control:
            branch_block = block_of[edge.src]
            dst_block = block_of[edge.dst]
            if dst_block == loop.header or not _header_reachable(fn, loop, branch_block, dst_block):
                carried = Carried.TRUE
            else:
                carried = Carried.FALSE
        else:
            carried = _memory_carried(forms, members[edge.src], members[edge.dst])
        edge.loop_carried[loop.id.ordinal] = carried
    return view


def _memory_carried(forms: _AffineForms, a: Instruction, b: Instruction) -> Carried:
    if a.opcode not in ("load", "store") or b.opcode not in ("load", "store"):
        return Carried.UNKNOWN
    first = forms.address(a)
    second = forms.address(b)
    if first is None or second is None:
        return Carried.UNKNOWN
    if first == second:
        return Carried.FALSE
    return Carried.UNKNOWN


# metadata


def pdg_lines(graph: DependenceGraph) -> list[str]:
    lines = []
    for edge in graph.edges:
        carried = ",".join(
            f"L{loop}:{flag.bit}" for loop, flag in sorted(edge.loop_carried.items())
        )
        lines.append(
            " ".join(
                [
                    str(edge.src),
                    str(edge.dst),
                    edge.dep_class,
                    edge.kind or "-",
                    edge.medium or "-",
                    edge.certainty,
                    carried or "-",
                ]
            )
        )
    return lines


def embed_pdg(module: ModuleIR, graph: DependenceGraph) -> ModuleIR:
    """Replace any ``!pdg`` entries of ``module`` with the edges of ``graph``."""
    embedded = module.clone().without_metadata("pdg")
    embedded.metadata.extend(("pdg", line) for line in pdg_lines(graph))
    return embedded


def read_pdg(module: ModuleIR) -> list[DependenceEdge]:
    bits = {"1": Carried.TRUE, "0": Carried.FALSE, "?": Carried.UNKNOWN}
    edges = []
    for text in module.metadata_values("pdg"):
        src, dst, dep_class, kind, medium, certainty, carried = text.split()
        edge = DependenceEdge(
            int(src),
            int(dst),
            dep_class,
            None if kind == "-" else kind,
            None if medium == "-" else medium,
            certainty,
        )
        if carried != "-":
            for item in carried.split(","):
                loop, _, bit = item.partition(":")
                edge.loop_carried[int(loop[1:])] = bits[bit]
        edges.append(edge)
    return edges


def covers(graph: DependenceGraph, pairs: Iterable[tuple[int, int, str]]) -> list[tuple[int, int, str]]:
    """The (src, dst, kind) memory pairs that ``graph`` has no edge for."""
    present = {(e.src, e.dst, e.kind) for e in graph.edges if e.is_memory}
    return [pair for pair in pairs if pair not in present]
