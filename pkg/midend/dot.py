"""Graphviz DOT renderings of dependence graphs, SCCDAGs and call graphs."""

from __future__ import annotations

from .callgraph import MUST as CALL_MUST
from .callgraph import CallGraph
from .ir.model import ModuleIR
from .ir.printer import format_instruction
from .pdg import MAY, DependenceGraph
from .sccdag import SCCDAG, SCCKind

KIND_COLORS = {"RAW": "black", "WAW": "orange", "WAR": "purple"}
SCC_COLORS = {
    SCCKind.INDEPENDENT: "green",
    SCCKind.SEQUENTIAL: "red",
    SCCKind.REDUCIBLE: "blue",
}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _instruction_labels(module: ModuleIR) -> dict[int, str]:
    return {inst.id: f"I{inst.id}: {format_instruction(inst).strip()}" for _, _, inst in module.instructions()}


def _edge_line(edge) -> str:
    if edge.is_control:
        attrs = f"style=dotted, label={_quote(edge.label or '')}"
    else:
        style = "dashed" if edge.certainty == MAY else "solid"
        attrs = f"color={KIND_COLORS.get(edge.kind, 'black')}, style={style}"
        if edge.is_memory:
            attrs += ', label="mem"'
    return f"  I{edge.src} -> I{edge.dst} [{attrs}];"


def pdg_to_dot(module: ModuleIR, graph: DependenceGraph, name: str = "pdg") -> str:
    labels = _instruction_labels(module)
    lines = [f"digraph {name} {{", "  node [shape=box, fontname=monospace];"]
    for node in sorted(graph.internal | graph.external):
        extra = ", style=dashed" if node in graph.external else ""
        lines.append(f"  I{node} [label={_quote(labels.get(node, f'I{node}'))}{extra}];")
    lines.extend(_edge_line(edge) for edge in graph.edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


def sccdag_to_dot(module: ModuleIR, dag: SCCDAG, graph: DependenceGraph) -> str:
    """One cluster per SCC, colored by kind; ``graph`` supplies the edges drawn inside clusters."""
    labels = _instruction_labels(module)
    lines = ["digraph sccdag {", "  compound=true;", "  node [shape=box, fontname=monospace];"]
    for scc in dag.sccs:
        color = SCC_COLORS[scc.kind]
        lines.append(f"  subgraph cluster_scc{scc.id} {{")
        lines.append(f"    label={_quote(f'{scc} {scc.kind.value}')};")
        lines.append(f"    color={color};")
        for member in sorted(scc.members):
            lines.append(f"    I{member} [label={_quote(labels.get(member, f'I{member}'))}];")
        lines.append("  }")
    owner = {member: scc for scc in dag.sccs for member in scc.members}
    for edge in graph.edges:
        if edge.src in owner and edge.dst in owner and owner[edge.src] is owner[edge.dst]:
            lines.append(_edge_line(edge))
    for a, b in sorted(dag.edges):
        tail = min(dag.sccs[a].members)
        head = min(dag.sccs[b].members)
        lines.append(
            f"  I{tail} -> I{head} [ltail=cluster_scc{a}, lhead=cluster_scc{b}, penwidth=2];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def callgraph_to_dot(graph: CallGraph) -> str:
    lines = ["digraph callgraph {", "  node [shape=ellipse];"]
    for node in graph.nodes:
        lines.append(f"  {_quote(node)} [label={_quote('@' + node)}];")
    for edge in graph.edges:
        style = "solid" if edge.certainty == CALL_MUST else "dashed"
        sites = ",".join(f"#{site}" for site in edge.sites)
        lines.append(
            f"  {_quote(edge.caller)} -> {_quote(edge.callee)} [style={style}, label={_quote(sites)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
