from midend.analysis import ModuleAnalysis
from midend.callgraph import build_call_graph
from midend.dot import callgraph_to_dot, pdg_to_dot, sccdag_to_dot
from midend.pdg import build_pdg

from .helpers import first_loop, load


def test_pdg_rendering_has_one_node_per_instruction():
    module = load("diamond")
    graph = build_pdg(module)
    text = pdg_to_dot(module, graph, name="diamond")
    lines = text.splitlines()

    assert lines[0] == "digraph diamond {"
    assert lines[-1] == "}"
    nodes = [line for line in lines if "[label=" in line and "->" not in line]
    assert len(nodes) == module.shape()[0]
    assert any('style=dotted, label="true"' in line for line in lines)
    assert sum("->" in line for line in lines) == len(graph.edges)


def test_sccdag_rendering_clusters_each_component():
    module = load("array_sum")
    info = ModuleAnalysis(module).info(first_loop(module))
    text = sccdag_to_dot(module, info.dag, info.ldg)

    assert text.count("subgraph cluster_scc") == len(info.dag.sccs)
    assert "color=blue;" in text
    assert text.count("ltail=") == len(info.dag.edges)


def test_callgraph_rendering_marks_may_edges():
    graph = build_call_graph(load("icall_table"))
    text = callgraph_to_dot(graph)
    assert '"main" -> "square" [style=dashed' in text
    assert text.count("[label=\"@") == len(graph.nodes)
