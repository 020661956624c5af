"""Inclusion-based points-to analysis and the alias / mod-ref query layer."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .config import get_settings
from .graphs import tarjan_sccs
from .ir.model import Const, FuncRef, FunctionIR, GlobalRef, Instruction, Local, ModuleIR, Operand

TOP = None


class ObjectKind(str, Enum):
    ALLOCA = "alloca-site"
    GLOBAL = "global"
    FUNCTION = "function"
    IO = "io"


@dataclass(frozen=True, slots=True, order=True)
class AbstractObject:
    kind: ObjectKind
    site: str
    size: int = 0

    def __str__(self) -> str:
        if self.kind is ObjectKind.ALLOCA:
            return f"alloca#{self.site}"
        if self.kind is ObjectKind.IO:
            return "io"
        return f"@{self.site}"


IO_OBJECT = AbstractObject(ObjectKind.IO, "io", 1)

# (object, constant cell offset or TOP)
Entry = tuple[AbstractObject, Optional[int]]


class AliasAnswer(str, Enum):
    NO_ALIAS = "NoAlias"
    MAY_ALIAS = "MayAlias"
    MUST_ALIAS = "MustAlias"


class ModRef(str, Enum):
    NO_MOD_REF = "NoModRef"
    REF = "Ref"
    MOD = "Mod"
    MOD_REF = "ModRef"


def _entry_sort_key(entry: Entry) -> tuple:
    obj, offset = entry
    return (obj, -1 if offset is TOP else offset)


def format_entries(entries: Iterable[Entry]) -> str:
    parts = [f"{obj}@{'T' if off is TOP else off}" for obj, off in sorted(entries, key=_entry_sort_key)]
    return "{" + ", ".join(parts) + "}"


def normalize(entries: set[Entry], max_offsets: int) -> set[Entry]:
    """Drop constant offsets subsumed by TOP and widen objects with too many offsets."""
    by_object: dict[AbstractObject, set[Optional[int]]] = {}
    for obj, offset in entries:
        by_object.setdefault(obj, set()).add(offset)
    result: set[Entry] = set()
    for obj, offsets in by_object.items():
        if TOP in offsets or len(offsets) > max_offsets:
            result.add((obj, TOP))
        else:
            result.update((obj, offset) for offset in offsets)
    return result


@dataclass(slots=True)
class PointsToResult:
    pts: dict[tuple[str, str], set[Entry]] = field(default_factory=dict)
    contents: dict[AbstractObject, set[AbstractObject]] = field(default_factory=dict)
    call_targets: dict[int, list[str]] = field(default_factory=dict)
    objects: dict[str, AbstractObject] = field(default_factory=dict)

    def of(self, fn: str, op: Operand) -> frozenset[Entry]:
        if isinstance(op, Local):
            return frozenset(self.pts.get((fn, op.name), ()))
        if isinstance(op, GlobalRef):
            return frozenset({(self.objects[f"@{op.name}"], 0)})
        if isinstance(op, FuncRef):
            return frozenset({(self.objects[f"fn@{op.name}"], 0)})
        return frozenset()

    def function_object(self, name: str) -> AbstractObject:
        return self.objects[f"fn@{name}"]

    def dump(self, module: ModuleIR) -> list[str]:
        lines = []
        for fn in module.functions:
            names = [param.name for param in fn.params] + [
                inst.result for inst in fn.instructions() if inst.result is not None
            ]
            for name in names:
                entries = self.pts.get((fn.name, name))
                if entries:
                    lines.append(f"pts %{name} -> {format_entries(entries)}")
        return lines


class _Solver:
    def __init__(self, module: ModuleIR, max_offsets: int) -> None:
        self.module = module
        self.max_offsets = max_offsets
        self.result = PointsToResult()
        for glob in module.globals:
            self.result.objects[f"@{glob.name}"] = AbstractObject(ObjectKind.GLOBAL, glob.name, glob.cells)
        for fn in module.functions:
            self.result.objects[f"fn@{fn.name}"] = AbstractObject(ObjectKind.FUNCTION, fn.name, 0)
        for fn in module.functions:
            for inst in fn.instructions():
                if inst.opcode == "alloca":
                    obj = AbstractObject(ObjectKind.ALLOCA, str(inst.id), inst.operands[0].value)  # type: ignore[union-attr]
                    self.result.objects[f"alloca#{inst.id}"] = obj
        self.returns: dict[str, set[Entry]] = {fn.name: set() for fn in module.functions}
        self.changed = False

    def add(self, key: tuple[str, str], entries: Iterable[Entry]) -> None:
        current = self.result.pts.setdefault(key, set())
        merged = normalize(current | set(entries), self.max_offsets)
        if merged != current:
            self.result.pts[key] = merged
            self.changed = True

    def store_into(self, obj: AbstractObject, functions: set[AbstractObject]) -> None:
        current = self.result.contents.setdefault(obj, set())
        if not functions <= current:
            current |= functions
            self.changed = True

    def bind_call(self, fn: FunctionIR, inst: Instruction, callee: FunctionIR) -> None:
        for param, arg in zip(callee.params, inst.call_args()):
            self.add((callee.name, param.name), self.result.of(fn.name, arg))
        if inst.result is not None:
            self.add((fn.name, inst.result), self.returns[callee.name])

    def visit(self, fn: FunctionIR, inst: Instruction) -> None:
        op = inst.opcode
        res = self.result
        of = lambda operand: res.of(fn.name, operand)  # noqa: E731
        key = (fn.name, inst.result) if inst.result is not None else None
        if op == "alloca":
            self.add(key, {(res.objects[f"alloca#{inst.id}"], 0)})  # type: ignore[arg-type]
        elif op == "funcptr":
            self.add(key, of(inst.operands[0]))  # type: ignore[arg-type]
        elif op == "gep":
            base, delta = inst.operands
            moved: set[Entry] = set()
            for obj, offset in of(base):
                if offset is not TOP and isinstance(delta, Const):
                    moved.add((obj, offset + delta.value))
                else:
                    moved.add((obj, TOP))
            self.add(key, moved)  # type: ignore[arg-type]
        elif op == "phi":
            for _, value in inst.phi_arms():
                self.add(key, of(value))  # type: ignore[arg-type]
        elif op == "select":
            self.add(key, of(inst.operands[1]) | of(inst.operands[2]))  # type: ignore[arg-type]
        elif op == "load":
            loaded: set[Entry] = set()
            for obj, _ in of(inst.operands[0]):
                loaded.update((target, 0) for target in res.contents.get(obj, ()))
            if loaded:
                self.add(key, loaded)  # type: ignore[arg-type]
        elif op == "store":
            functions = {obj for obj, _ in of(inst.operands[0]) if obj.kind is ObjectKind.FUNCTION}
            if functions:
                for obj, _ in of(inst.operands[1]):
                    self.store_into(obj, functions)
        elif op == "ret" and inst.operands:
            returned = of(inst.operands[0])
            if not returned <= self.returns[fn.name]:
                self.returns[fn.name] |= returned
                self.changed = True
        elif op == "call":
            callee = self.module.function(inst.operands[0].name)  # type: ignore[union-attr]
            res.call_targets[inst.id] = [callee.name]
            self.bind_call(fn, inst, callee)
        elif op == "icall":
            n_args = len(inst.call_args())
            targets = sorted(
                obj.site
                for obj, _ in of(inst.operands[0])
                if obj.kind is ObjectKind.FUNCTION
                and len(self.module.function(obj.site).params) == n_args
            )
            if targets != res.call_targets.get(inst.id):
                res.call_targets[inst.id] = targets
                self.changed = True
            for name in targets:
                self.bind_call(fn, inst, self.module.function(name))

    def solve(self) -> PointsToResult:
        self.changed = True
        while self.changed:
            self.changed = False
            for fn in self.module.functions:
                for inst in fn.instructions():
                    self.visit(fn, inst)
        return self.result


def compute_points_to(module: ModuleIR, max_offsets: Optional[int] = None) -> PointsToResult:
    """Least fixpoint of the inclusion constraints, call targets resolved jointly."""
    limit = max_offsets if max_offsets is not None else get_settings().max_offsets
    return _Solver(module, limit).solve()


def overlap(first: Iterable[Entry], second: Iterable[Entry]) -> AliasAnswer:
    a = set(first)
    b = set(second)
    if not a or not b:
        return AliasAnswer.NO_ALIAS
    collide = False
    for obj_a, off_a in a:
        for obj_b, off_b in b:
            if obj_a != obj_b:
                continue
            if off_a is TOP or off_b is TOP or off_a == off_b:
                collide = True
                break
        if collide:
            break
    if not collide:
        return AliasAnswer.NO_ALIAS
    if len(a) == 1 and a == b and next(iter(a))[1] is not TOP:
        return AliasAnswer.MUST_ALIAS
    return AliasAnswer.MAY_ALIAS


@dataclass(frozen=True, slots=True)
class Footprint:
    reads: frozenset[Entry] = frozenset()
    writes: frozenset[Entry] = frozenset()

    @property
    def empty(self) -> bool:
        return not self.reads and not self.writes


class AliasAnalysis:
    """Alias and mod/ref queries over a points-to result."""

    def __init__(self, module: ModuleIR, pts: Optional[PointsToResult] = None) -> None:
        self.module = module
        self.pts = pts or compute_points_to(module)
        self.owner = {inst.id: fn.name for fn, _, inst in module.instructions()}
        self.instr = {inst.id: inst for _, _, inst in module.instructions()}
        self.recursive = self._recursive_functions()
        self.read_summary, self.write_summary = self._summaries()

    def _call_graph(self) -> dict[str, list[str]]:
        graph: dict[str, list[str]] = {fn.name: [] for fn in self.module.functions}
        for site, targets in self.pts.call_targets.items():
            caller = self.owner[site]
            for target in targets:
                if target not in graph[caller]:
                    graph[caller].append(target)
        return graph

    def _recursive_functions(self) -> set[str]:
        graph = self._call_graph()
        found: set[str] = set()
        for scc in tarjan_sccs(graph):
            if len(scc) > 1 or scc[0] in graph[scc[0]]:
                found.update(scc)
        return found

    def _summaries(self) -> tuple[dict[str, set[AbstractObject]], dict[str, set[AbstractObject]]]:
        """Transitive read / write object sets, bottom-up over call-graph SCCs."""
        graph = self._call_graph()
        reads: dict[str, set[AbstractObject]] = {name: set() for name in graph}
        writes: dict[str, set[AbstractObject]] = {name: set() for name in graph}
        for fn in self.module.functions:
            for inst in fn.instructions():
                local = self.local_footprint(fn.name, inst)
                reads[fn.name].update(obj for obj, _ in local.reads)
                writes[fn.name].update(obj for obj, _ in local.writes)
        for scc in tarjan_sccs(graph):
            changed = True
            while changed:
                changed = False
                for name in scc:
                    for callee in graph[name]:
                        if not reads[callee] <= reads[name] or not writes[callee] <= writes[name]:
                            reads[name] |= reads[callee]
                            writes[name] |= writes[callee]
                            changed = True
        return reads, writes

    def local_footprint(self, fn: str, inst: Instruction) -> Footprint:
        if inst.opcode == "load":
            return Footprint(reads=self.pts.of(fn, inst.operands[0]))
        if inst.opcode == "store":
            return Footprint(writes=self.pts.of(fn, inst.operands[1]))
        if inst.opcode == "print":
            return Footprint(writes=frozenset({(IO_OBJECT, 0)}))
        return Footprint()

    def callees(self, inst: Instruction) -> list[str]:
        return self.pts.call_targets.get(inst.id, [])

    def footprint(self, inst: Instruction) -> Footprint:
        if inst.is_call:
            reads: set[Entry] = set()
            writes: set[Entry] = set()
            for callee in self.callees(inst):
                reads.update((obj, TOP) for obj in self.read_summary[callee])
                writes.update((obj, TOP) for obj in self.write_summary[callee])
            return Footprint(frozenset(reads), frozenset(writes))
        return self.local_footprint(self.owner[inst.id], inst)

    def location(self, inst: Instruction) -> frozenset[Entry]:
        footprint = self.footprint(inst)
        return footprint.reads | footprint.writes

    def compare(
        self, first: Iterable[Entry], second: Iterable[Entry], function: Optional[str] = None
    ) -> AliasAnswer:
        """``function`` names the frame issuing both accesses; None when they sit in different ones.

        A stack slot is a single runtime cell only inside one activation of a non-recursive
        owner, so MustAlias on an alloca needs both accesses in that owner.
        """
        answer = overlap(first, second)
        if answer is AliasAnswer.MUST_ALIAS:
            obj, _ = next(iter(first))
            if obj.kind is ObjectKind.ALLOCA:
                owner = self.owner[int(obj.site)]
                if owner in self.recursive or owner != function:
                    return AliasAnswer.MAY_ALIAS
        return answer

    def common_frame(self, a: Instruction, b: Instruction) -> Optional[str]:
        first, second = self.owner[a.id], self.owner[b.id]
        return first if first == second else None

    def alias(self, a: Instruction, b: Instruction) -> AliasAnswer:
        """NoAlias / MayAlias / MustAlias between the locations two accesses touch."""
        return self.compare(self.location(a), self.location(b), self.common_frame(a, b))

    def mod_ref_of_call(self, call: Instruction, access: Instruction) -> ModRef:
        footprint = self.footprint(call)
        location = self.location(access)
        touched = {obj for obj, _ in location}
        mod = any(obj in touched for obj, _ in footprint.writes)
        ref = any(obj in touched for obj, _ in footprint.reads)
        if mod and ref:
            return ModRef.MOD_REF
        if mod:
            return ModRef.MOD
        if ref:
            return ModRef.REF
        return ModRef.NO_MOD_REF

    def may_write(self, inst: Instruction) -> bool:
        return bool(self.footprint(inst).writes)
