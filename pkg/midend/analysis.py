"""Lazily derived analyses of one module snapshot.

Transformations return new modules; a ``ModuleAnalysis`` is never updated in
place, callers build a fresh one for the transformed module.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

from .alias import AliasAnalysis, PointsToResult, compute_points_to
from .config import get_settings
from .errors import UnknownEntityError
from .induction import GoverningIVInfo, InductionVariable, detect_ivs, dowhile_governing_iv, governing_iv
from .invariants import InvariantSet, invariants_of_loop, naive_invariants_of_loop
from .ir.model import ModuleIR
from .loops import LoopStructure, module_loops
from .pdg import DependenceGraph, build_pdg, loop_dg
from .sccdag import SCCDAG, augment, build_sccdag


@dataclass(slots=True)
class LoopInfo:
    loop: LoopStructure
    ldg: DependenceGraph
    dag: SCCDAG
    invariants: InvariantSet
    naive: InvariantSet
    ivs: list[InductionVariable]
    governing: Optional[tuple[InductionVariable, GoverningIVInfo]]
    dowhile_governing: Optional[tuple[InductionVariable, GoverningIVInfo]]

    @property
    def trip_count(self) -> Optional[int]:
        return self.governing[1].trip_count if self.governing else None


class ModuleAnalysis:
    def __init__(self, module: ModuleIR, max_offsets: Optional[int] = None) -> None:
        self.module = module
        self.max_offsets = max_offsets or get_settings().max_offsets
        self._loops: dict[int, LoopInfo] = {}

    @cached_property
    def pts(self) -> PointsToResult:
        return compute_points_to(self.module, self.max_offsets)

    @cached_property
    def aa(self) -> AliasAnalysis:
        return AliasAnalysis(self.module, self.pts)

    @cached_property
    def pdg(self) -> DependenceGraph:
        return build_pdg(self.module, self.aa)

    @cached_property
    def loops(self) -> list[LoopStructure]:
        return module_loops(self.module)

    def loop(self, ordinal: int) -> LoopStructure:
        for loop in self.loops:
            if loop.id.ordinal == ordinal:
                return loop
        raise UnknownEntityError(f"unknown loop L{ordinal}")

    def info(self, loop: LoopStructure | int) -> LoopInfo:
        if isinstance(loop, int):
            loop = self.loop(loop)
        ordinal = loop.id.ordinal
        if ordinal not in self._loops:
            ldg = loop_dg(self.pdg, self.module, loop)
            dag = augment(build_sccdag(ldg), ldg, self.module, loop)
            invariants = invariants_of_loop(self.module, loop, ldg)
            ivs = detect_ivs(self.module, loop, dag, invariants)
            self._loops[ordinal] = LoopInfo(
                loop=loop,
                ldg=ldg,
                dag=dag,
                invariants=invariants,
                naive=naive_invariants_of_loop(self.module, loop, self.aa),
                ivs=ivs,
                governing=governing_iv(self.module, loop, ivs, invariants),
                dowhile_governing=dowhile_governing_iv(self.module, loop, ivs, invariants),
            )
        return self._loops[ordinal]
