"""SCCDAG of a loop dependence graph with Independent / Sequential / Reducible tags."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .graphs import tarjan_sccs
from .ir.model import I64_MAX, I64_MIN, Const, Instruction, Local, ModuleIR, Operand
from .loops import LoopStructure
from .pdg import Carried, DependenceGraph

REDUCTION_OPS = ("add", "mul", "and", "or", "xor")
IDENTITIES = {"add": 0, "mul": 1, "and": -1, "or": 0, "xor": 0, "min": I64_MAX, "max": I64_MIN}
_ORDERING = ("slt", "sle", "sgt", "sge")


class SCCKind(str, Enum):
    INDEPENDENT = "Independent"
    SEQUENTIAL = "Sequential"
    REDUCIBLE = "Reducible"


@dataclass(slots=True)
class ReductionInfo:
    accumulator: int
    update: int
    op: str
    identity: int
    initial: Operand
    compare: Optional[int] = None
    live_outs: list[int] = field(default_factory=list)

    @property
    def members(self) -> set[int]:
        found = {self.accumulator, self.update}
        if self.compare is not None:
            found.add(self.compare)
        return found


@dataclass(slots=True)
class SCC:
    id: int
    members: frozenset[int]
    has_internal_loop_carried: bool = False
    kind: SCCKind = SCCKind.SEQUENTIAL
    reduction: Optional[ReductionInfo] = None

    def __str__(self) -> str:
        return f"SCC#{self.id}"


@dataclass(slots=True)
class SCCDAG:
    sccs: list[SCC] = field(default_factory=list)
    edges: set[tuple[int, int]] = field(default_factory=set)
    loop: Optional[int] = None

    def scc_of(self, node: int) -> SCC:
        for scc in self.sccs:
            if node in scc.members:
                return scc
        raise KeyError(node)

    def is_acyclic(self) -> bool:
        graph: dict[int, list[int]] = {scc.id: [] for scc in self.sccs}
        for a, b in self.edges:
            graph[a].append(b)
        return all(len(component) == 1 for component in tarjan_sccs(graph)) and not any(
            a == b for a, b in self.edges
        )

    def dump(self) -> list[str]:
        lines = []
        for scc in self.sccs:
            members = ",".join(f"#{member}" for member in sorted(scc.members))
            text = f"{scc} {scc.kind.value} {{{members}}}"
            if scc.reduction is not None:
                text += f" reduction={scc.reduction.op} identity={scc.reduction.identity}"
            lines.append(text)
        lines.extend(f"SCC#{a} -> SCC#{b}" for a, b in sorted(self.edges))
        return lines


def _carried(ldg: DependenceGraph, edge) -> bool:
    if ldg.loop is None:
        return False
    return edge.carried(ldg.loop) is not Carried.FALSE


def build_sccdag(ldg: DependenceGraph) -> SCCDAG:
    graph: dict[int, list[int]] = {node: [] for node in sorted(ldg.internal)}
    for edge in ldg.edges:
        if edge.src in ldg.internal and edge.dst in ldg.internal and edge.dst not in graph[edge.src]:
            graph[edge.src].append(edge.dst)
    components = sorted((sorted(c) for c in tarjan_sccs(graph)), key=lambda c: c[0])
    dag = SCCDAG(loop=ldg.loop)
    owner: dict[int, int] = {}
    for ordinal, members in enumerate(components):
        dag.sccs.append(SCC(ordinal, frozenset(members)))
        for member in members:
            owner[member] = ordinal
    for edge in ldg.edges:
        if edge.src not in owner or edge.dst not in owner:
            continue
        a, b = owner[edge.src], owner[edge.dst]
        if a != b:
            dag.edges.add((a, b))
        elif _carried(ldg, edge):
            dag.sccs[a].has_internal_loop_carried = True
    return dag


def _latch_arms(phi: Instruction, loop: LoopStructure) -> tuple[list[Operand], list[Operand]]:
    latch, entry = [], []
    for label, value in phi.phi_arms():
        (latch if label in loop.latches else entry).append(value)
    return latch, entry


def _min_or_max(compare: Instruction, select: Instruction, phi: Local) -> Optional[tuple[str, Operand]]:
    if compare.opcode not in _ORDERING or select.operands[0] != Local(compare.result):  # type: ignore[arg-type]
        return None
    a, b = compare.operands
    if a == phi and b != phi:
        other, phi_first = b, True
    elif b == phi and a != phi:
        other, phi_first = a, False
    else:
        return None
    arms = select.operands[1], select.operands[2]
    if arms == (other, phi):
        phi_taken_first = False
    elif arms == (phi, other):
        phi_taken_first = True
    else:
        return None
    smaller = compare.opcode in ("slt", "sle")
    if phi_first != phi_taken_first:
        smaller = not smaller
    return ("min" if smaller else "max"), other


def detect_reduction(
    scc: SCC, ldg: DependenceGraph, module: ModuleIR, loop: LoopStructure
) -> Optional[ReductionInfo]:
    """Match an accumulator phi updated by a commutative associative op or a min/max select."""
    fn = module.function(loop.function)
    by_id = {inst.id: inst for inst in loop.instructions(fn)}
    members = [by_id[node] for node in sorted(scc.members) if node in by_id]
    if len(members) != len(scc.members) or len(members) not in (2, 3):
        return None
    header_phis = {phi.id for phi in fn.block(loop.header).phis()}
    phis = [inst for inst in members if inst.id in header_phis]
    if len(phis) != 1 or any(inst.is_phi for inst in members if inst is not phis[0]):
        return None
    if any(edge.is_memory for edge in ldg.edges if edge.src in scc.members or edge.dst in scc.members):
        return None
    phi = phis[0]
    acc = Local(phi.result)  # type: ignore[arg-type]
    rest = [inst for inst in members if inst is not phi]
    compare: Optional[Instruction] = None
    if len(rest) == 1:
        update = rest[0]
        if update.opcode not in REDUCTION_OPS:
            return None
        a, b = update.operands
        if a == acc and b != acc:
            other = b
        elif b == acc and a != acc:
            other = a
        else:
            return None
        op = update.opcode
    else:
        selects = [inst for inst in rest if inst.opcode == "select"]
        compares = [inst for inst in rest if inst.opcode != "select"]
        if len(selects) != 1 or len(compares) != 1:
            return None
        update, compare = selects[0], compares[0]
        matched = _min_or_max(compare, update, acc)
        if matched is None:
            return None
        op, other = matched
    if isinstance(other, Local) and other.name in {inst.result for inst in members}:
        return None

    latch, entry = _latch_arms(phi, loop)
    if len(entry) != 1 or not latch or any(arm != Local(update.result) for arm in latch):  # type: ignore[arg-type]
        return None

    allowed_acc_users = {update.id} | ({compare.id} if compare is not None else set())
    inside = set(by_id)
    live_outs: list[int] = []
    users = fn.users()
    for name, allowed in (
        (phi.result, allowed_acc_users),
        (update.result, {phi.id}),
    ):
        for user in users.get(name, []):  # type: ignore[arg-type]
            if user.id in inside:
                if user.id not in allowed:
                    return None
            elif user.id not in live_outs:
                live_outs.append(user.id)
    if compare is not None:
        for user in users.get(compare.result, []):  # type: ignore[arg-type]
            if user.id != update.id:
                return None
    return ReductionInfo(
        accumulator=phi.id,
        update=update.id,
        op=op,
        identity=IDENTITIES[op],
        initial=entry[0],
        compare=compare.id if compare is not None else None,
        live_outs=sorted(live_outs),
    )


def classify_scc(
    scc: SCC, ldg: DependenceGraph, module: ModuleIR, loop: LoopStructure
) -> tuple[SCCKind, Optional[ReductionInfo]]:
    if not scc.has_internal_loop_carried:
        return SCCKind.INDEPENDENT, None
    reduction = detect_reduction(scc, ldg, module, loop)
    if reduction is not None:
        return SCCKind.REDUCIBLE, reduction
    return SCCKind.SEQUENTIAL, None


def augment(dag: SCCDAG, ldg: DependenceGraph, module: ModuleIR, loop: LoopStructure) -> SCCDAG:
    for scc in dag.sccs:
        scc.kind, scc.reduction = classify_scc(scc, ldg, module, loop)
    return dag


def identity_constant(op: str) -> Const:
    return Const(IDENTITIES[op])
