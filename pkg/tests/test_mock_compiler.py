import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

import numpy as np
import pytest

from src.benchmarks import load_benchmark
from src.circuit_ir import Barrier, Circuit, Gate, GateKind, Measure, make_gate
from src.mock_compiler import (
    BASIS_KINDS,
    CompileOptions,
    CompiledCircuit,
    CouplingMap,
    DisconnectedMap,
    InvalidLayout,
    Layout,
    Lookahead,
    TooManyVirtualQubits,
    UnexpectedGate,
    cancel_commuting,
    commutes,
    compile_circuit,
    decompose,
    flow_cost,
    fold_phases,
    multi_controlled_phase,
    optimize_deep,
    optimize_virtual,
    place,
    route,
    route_with_barriers,
    translate_basis,
)
from src.simulator import equivalent_modulo_layout, equivalent_up_to_phase, evaluate_classical, sample

ALL_KINDS = [GateKind.X, GateKind.H, GateKind.T, GateKind.S, GateKind.SX, GateKind.CX,
             GateKind.SWAP, GateKind.CCX, GateKind.C3X]
PHASE_HEAVY_KINDS = [GateKind.X, GateKind.H, GateKind.T, GateKind.TDG, GateKind.S, GateKind.RZ,
                     GateKind.CX, GateKind.CX, GateKind.CX]


def random_circuit(rng: np.random.Generator, n: int, n_gates: int, kinds=ALL_KINDS) -> Circuit:
    gates = []
    fitting = [k for k in kinds if k.arity <= n]
    for _ in range(n_gates):
        kind = fitting[int(rng.integers(len(fitting)))]
        qubits = tuple(int(q) for q in rng.choice(n, size=kind.arity, replace=False))
        theta = float(rng.choice([-1.0, 0.5, 1.0]) * np.pi / 4) if kind.is_parametric else None
        gates.append(Gate(kind, qubits, theta))
    return Circuit.from_instructions(n, gates)


def on_edges(c: Circuit, cmap: CouplingMap) -> bool:
    return all(cmap.adjacent(*g.qubits) for g in c.gates if len(g.qubits) == 2)


# Coupling maps and layouts

def test_valencia_shape():
    cmap = CouplingMap.valencia()
    assert cmap.n_physical == 5
    assert cmap.edges == [(0, 1), (1, 2), (1, 3), (3, 4)]
    assert cmap.degree(1) == 3
    assert cmap.shortest_path(0, 4) == [0, 1, 3, 4]


def test_resolve_and_file_map(tmp_path):
    assert CouplingMap.resolve("auto", 4).name == "valencia"
    assert CouplingMap.resolve(None, 8).n_physical == 8
    path = tmp_path / "ring.json"
    path.write_text('{"n": 4, "edges": [[0, 1], [1, 2], [2, 3], [3, 0]]}')
    ring = CouplingMap.resolve(str(path), 4)
    assert ring.edges == [(0, 1), (0, 3), (1, 2), (2, 3)]
    assert CouplingMap.from_dict(ring.to_dict()).edges == ring.edges


def test_invalid_edge_rejected():
    with pytest.raises(ValueError):
        CouplingMap(3, [(0, 3)])


def test_disconnected_map_path():
    cmap = CouplingMap(4, [(0, 1), (2, 3)])
    assert not cmap.is_connected()
    with pytest.raises(DisconnectedMap):
        cmap.shortest_path(0, 3)


def test_layout_permutation_checks():
    with pytest.raises(InvalidLayout):
        Layout((0, 0, 1))
    layout = Layout.from_v2p([2, 0, 1])
    assert layout.p2v == (1, 2, 0)
    assert layout.v2p == (2, 0, 1)
    assert layout.swap_physical(0, 1).p2v == (2, 1, 0)
    assert layout.physical_input("10") == "001"


# Optimization and decomposition

def test_optimize_cancels_pairs_and_merges_rz():
    c = Circuit.from_instructions(2, [
        make_gate("x", 0), make_gate("x", 0),
        make_gate("rz", 1, theta=0.5), make_gate("rz", 1, theta=-0.5),
        make_gate("t", 0), make_gate("tdg", 0),
        make_gate("id", 1),
        make_gate("cx", 0, 1), make_gate("h", 1), make_gate("cx", 0, 1),
    ])
    out = optimize_virtual(c)
    assert out.instructions == (make_gate("cx", 0, 1), make_gate("h", 1), make_gate("cx", 0, 1))


def test_optimize_cascades():
    c = Circuit.from_instructions(1, [make_gate("s", 0), make_gate("x", 0), make_gate("x", 0), make_gate("sdg", 0)])
    assert optimize_virtual(c).gate_count() == 0


def test_optimize_never_crosses_barrier():
    c = Circuit.from_instructions(1, [make_gate("x", 0), Barrier((0,), "j"), make_gate("x", 0)])
    assert optimize_virtual(c) == c


def test_optimize_skips_unrelated_qubits():
    c = Circuit.from_instructions(2, [make_gate("x", 0), make_gate("h", 1), make_gate("x", 0)])
    assert optimize_virtual(c).instructions == (make_gate("h", 1),)


def test_ccx_decomposition_exact():
    c = Circuit.from_instructions(3, [make_gate("ccx", 0, 1, 2)])
    d = decompose(c)
    assert d.count_kind(GateKind.CX) == 6
    assert equivalent_up_to_phase(c, d)


@pytest.mark.parametrize("qubits", [(0, 1, 2, 3), (3, 1, 0, 2), (2, 0, 3, 1)])
def test_c3x_decomposition_exact(qubits):
    c = Circuit.from_instructions(4, [make_gate("c3x", *qubits)])
    d = decompose(c)
    assert d.count_kind(GateKind.CX) == 14
    assert d.count_kind(GateKind.RZ) == 15
    assert equivalent_up_to_phase(c, d, tol=1e-8)


def test_multi_controlled_phase_two_qubits_is_cz():
    cz = Circuit.from_instructions(2, [make_gate("h", 1), make_gate("cx", 0, 1), make_gate("h", 1)])
    phase = Circuit.from_instructions(2, multi_controlled_phase((0, 1), np.pi))
    assert equivalent_up_to_phase(cz, phase)


def test_decompose_swap_to_three_cx():
    d = decompose(Circuit.from_instructions(2, [make_gate("swap", 0, 1)]))
    assert [g.kind for g in d.gates] == [GateKind.CX] * 3


def test_translate_basis_only_basis_kinds():
    c = Circuit.from_instructions(2, [make_gate(k, 0) for k in ("h", "s", "sdg", "t", "tdg", "sxdg")]
                                  + [make_gate("swap", 0, 1)])
    out = translate_basis(c)
    assert all(g.kind in BASIS_KINDS for g in out.gates)
    assert equivalent_up_to_phase(c, out)
    with pytest.raises(UnexpectedGate):
        translate_basis(Circuit.from_instructions(3, [make_gate("ccx", 0, 1, 2)]))


# Placement and routing

def test_place_trivial_and_greedy():
    c = Circuit.from_instructions(3, [make_gate("cx", 2, 0), make_gate("cx", 2, 1)])
    cmap = CouplingMap.valencia()
    assert place(c, cmap, "trivial") == Layout.trivial(5)
    greedy = place(c, cmap, "greedy")
    assert greedy.v2p[2] == 1
    assert sorted(greedy.p2v) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError, match="Available"):
        place(c, cmap, "best")


def test_place_too_many_qubits():
    with pytest.raises(TooManyVirtualQubits):
        place(Circuit(6), CouplingMap.valencia())


def test_route_inserts_swaps_on_edges():
    cmap = CouplingMap.valencia()
    c = Circuit.from_instructions(5, [make_gate("cx", 0, 4)])
    routed, final = route(c, cmap, Layout.trivial(5))
    assert routed.count_kind(GateKind.SWAP) == 2
    assert on_edges(routed, cmap)
    assert final.p2v == (1, 3, 2, 0, 4)
    assert equivalent_modulo_layout(c, routed, Layout.trivial(5).p2v, final.p2v)


def test_route_records_barrier_layouts():
    cmap = CouplingMap.line(3)
    c = Circuit.from_instructions(3, [make_gate("cx", 0, 2), Barrier((0, 1, 2), "j"), make_gate("x", 0)])
    routed, final, layouts = route_with_barriers(c, cmap, Layout.trivial(3))
    assert len(layouts) == 1
    assert layouts[0] == final
    assert routed.barriers[0].tag == "j"


@pytest.mark.parametrize("seed", range(500))
def test_full_pipeline_equivalent_modulo_layout(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    c = random_circuit(rng, n, int(rng.integers(1, 12)))
    cmap = CouplingMap.valencia()
    compiled = compile_circuit(c, cmap)
    assert on_edges(compiled.circuit, cmap)
    assert all(g.kind in BASIS_KINDS for g in compiled.circuit.gates)
    assert equivalent_modulo_layout(c, compiled.circuit, compiled.initial_layout.p2v, compiled.final_layout.p2v)


@pytest.mark.parametrize("seed", range(250))
def test_each_pass_equivalent(seed):
    rng = np.random.default_rng(100 + seed)
    c = random_circuit(rng, int(rng.integers(2, 6)), 10)
    cmap = CouplingMap.valencia()
    optimized = optimize_virtual(c)
    decomposed = decompose(optimized)
    deep = optimize_deep(decomposed)
    assert equivalent_up_to_phase(c, optimized, tol=1e-8)
    assert equivalent_up_to_phase(optimized, decomposed, tol=1e-8)
    assert equivalent_up_to_phase(decomposed, deep, tol=1e-8)
    initial = place(deep, cmap)
    routed, final = route(deep, cmap, initial, Lookahead())
    assert on_edges(routed, cmap)
    assert equivalent_modulo_layout(deep, routed, initial.p2v, final.p2v)
    translated = translate_basis(routed)
    assert equivalent_up_to_phase(routed, translated, tol=1e-8)
    physical = optimize_deep(translated)
    assert equivalent_up_to_phase(translated, physical, tol=1e-8)
    assert on_edges(physical, cmap)


def test_compile_preserves_barriers_and_measures():
    c = Circuit.from_instructions(4, [
        make_gate("ccx", 0, 1, 2), Barrier((0, 1, 2, 3), "j1"), make_gate("cx", 3, 0),
    ]).measure_all()
    compiled = compile_circuit(c, CouplingMap.valencia())
    assert len(compiled.circuit.barriers) == 1
    assert compiled.circuit.barriers[0].tag == "j1"
    assert len(compiled.barrier_layouts) == 1
    assert len(compiled.circuit.measures) == 4
    assert [e.name for e in compiled.pass_log] == [
        "optimize_virtual", "decompose", "optimize_decomposed", "place", "route",
        "translate_basis", "optimize_physical",
    ]


def test_compiled_classical_circuit_keeps_outputs():
    c = Circuit.from_instructions(5, [
        make_gate("c3x", 0, 1, 2, 4), make_gate("cx", 4, 0), make_gate("x", 3), make_gate("ccx", 3, 0, 2),
    ]).measure_all()
    compiled = compile_circuit(c, CouplingMap.valencia())
    bits = "11100"
    physical = compiled.initial_layout.physical_input(bits)
    counts = sample(compiled.circuit, physical, shots=50).counts
    assert counts == {evaluate_classical(c, bits): 50}


def test_compile_initial_layout_is_honored():
    c = Circuit.from_instructions(2, [make_gate("cx", 0, 1)])
    layout = Layout((4, 3, 2, 1, 0))
    compiled = compile_circuit(c, CouplingMap.valencia(), CompileOptions(initial_layout=layout))
    assert compiled.initial_layout == layout


def test_compile_metadata_and_report_roundtrip():
    c = Circuit.from_instructions(3, [make_gate("ccx", 0, 1, 2)]).measure_all()
    compiled = compile_circuit(c, CouplingMap.valencia())
    assert compiled.circuit.metadata["coupling_map"] == "valencia"
    report = compiled.report()
    assert report.cx_count == compiled.cx_count()
    rebuilt = CompiledCircuit.from_report(compiled.circuit, report)
    assert rebuilt.initial_layout == compiled.initial_layout
    assert rebuilt.final_layout == compiled.final_layout
    assert rebuilt.coupling_map.edges == compiled.coupling_map.edges


def test_compile_rejects_oversized_circuit():
    with pytest.raises(TooManyVirtualQubits):
        compile_circuit(Circuit.from_instructions(7, [make_gate("x", 6)]), CouplingMap.valencia())


def test_compile_is_deterministic():
    rng = np.random.default_rng(5)
    c = random_circuit(rng, 5, 15)
    a = compile_circuit(c, CouplingMap.valencia())
    b = compile_circuit(c, CouplingMap.valencia())
    assert a.circuit == b.circuit and a.final_layout == b.final_layout


# Commutation-aware optimization

def test_commutes_only_for_known_pairs():
    cx = make_gate("cx", 0, 1)
    assert commutes(cx, make_gate("t", 0))
    assert commutes(cx, make_gate("x", 1))
    assert commutes(cx, make_gate("cx", 0, 2))
    assert commutes(cx, make_gate("cx", 2, 1))
    assert commutes(make_gate("rz", 0, theta=0.3), make_gate("s", 0))
    assert commutes(cx, make_gate("h", 2))
    assert not commutes(cx, make_gate("cx", 1, 0))
    assert not commutes(cx, make_gate("x", 0))
    assert not commutes(cx, make_gate("t", 1))
    assert not commutes(make_gate("h", 0), make_gate("t", 0))


def test_cancel_commuting_reaches_past_commuting_gates():
    c = Circuit.from_instructions(3, [
        make_gate("cx", 0, 1), make_gate("t", 0), make_gate("cx", 0, 2), make_gate("cx", 0, 1),
        make_gate("x", 2), make_gate("cx", 1, 2), make_gate("x", 2),
    ])
    out = cancel_commuting(c)
    assert out.instructions == (make_gate("t", 0), make_gate("cx", 0, 2), make_gate("cx", 1, 2))
    assert equivalent_up_to_phase(c, out, tol=1e-8)
    assert optimize_virtual(c).gate_count() == 7


def test_cancel_commuting_merges_phase_kinds():
    c = Circuit.from_instructions(2, [make_gate("t", 0), make_gate("cx", 0, 1), make_gate("s", 0)])
    out = cancel_commuting(c)
    merged, cx = out.instructions
    assert merged.kind is GateKind.RZ and merged.theta == pytest.approx(3 * np.pi / 4)
    assert cx == make_gate("cx", 0, 1)
    assert equivalent_up_to_phase(c, out, tol=1e-8)


def test_cancel_commuting_stops_at_barrier():
    c = Circuit.from_instructions(2, [make_gate("cx", 0, 1), Barrier((0, 1), "j"), make_gate("cx", 0, 1)])
    assert cancel_commuting(c) == c
    assert optimize_deep(c) == c


def test_fold_phases_follows_parities_through_cx():
    c = Circuit.from_instructions(2, [
        make_gate("t", 0), make_gate("cx", 0, 1), make_gate("cx", 1, 0), make_gate("cx", 0, 1),
        make_gate("tdg", 1),
    ])
    out = fold_phases(c)
    assert out.instructions == (make_gate("cx", 0, 1), make_gate("cx", 1, 0), make_gate("cx", 0, 1))
    assert equivalent_up_to_phase(c, out, tol=1e-8)


def test_fold_phases_flips_sign_under_x():
    c = Circuit.from_instructions(1, [make_gate("t", 0), make_gate("x", 0), make_gate("t", 0), make_gate("x", 0)])
    out = fold_phases(c)
    assert out.instructions == (make_gate("x", 0), make_gate("x", 0))
    assert equivalent_up_to_phase(c, out, tol=1e-8)


def test_fold_phases_keeps_barrier_sides_apart():
    c = Circuit.from_instructions(2, [make_gate("t", 0), Barrier((1,), "j"), make_gate("t", 0)])
    assert fold_phases(c) == c


@pytest.mark.parametrize("seed", range(60))
def test_deep_optimization_is_equivalent_and_shrinks(seed):
    rng = np.random.default_rng(500 + seed)
    c = random_circuit(rng, int(rng.integers(1, 5)), 30, PHASE_HEAVY_KINDS)
    for rewrite in (cancel_commuting, fold_phases, optimize_deep):
        out = rewrite(c)
        assert out.gate_count() <= c.gate_count()
        assert equivalent_up_to_phase(c, out, tol=1e-8)


@pytest.mark.parametrize("seed", range(40))
def test_optimizers_are_idempotent(seed):
    rng = np.random.default_rng(900 + seed)
    c = random_circuit(rng, 4, 25, PHASE_HEAVY_KINDS + ALL_KINDS)
    once = optimize_virtual(c)
    assert optimize_virtual(once) == once
    deep = optimize_deep(c)
    assert optimize_deep(deep) == deep


# Placement and routing strategies

def test_barenco_c3x_matches_gray_code():
    c = Circuit.from_instructions(4, [make_gate("c3x", 2, 0, 3, 1)])
    barenco = decompose(c, "barenco")
    assert barenco.count_kind(GateKind.CX) == 20
    assert equivalent_up_to_phase(c, barenco, tol=1e-8)
    assert equivalent_up_to_phase(decompose(c), barenco, tol=1e-8)
    with pytest.raises(ValueError, match="Available"):
        decompose(c, "toffoli-chain")


def test_barenco_option_reaches_the_pipeline():
    c = Circuit.from_instructions(4, [make_gate("c3x", 0, 1, 2, 3)]).measure_all()
    gray = compile_circuit(c, CouplingMap.valencia(), CompileOptions(deep_optimization=False))
    barenco = compile_circuit(c, CouplingMap.valencia(), CompileOptions(c3x="barenco", deep_optimization=False))
    assert barenco.pass_log[1].after > gray.pass_log[1].after
    physical = barenco.initial_layout.physical_input("1110")
    assert sample(barenco.circuit, physical, shots=20).counts == {"1111": 20}


def test_flow_placement_improves_on_greedy():
    c = Circuit.from_instructions(5, [make_gate("cx", 0, 1), make_gate("cx", 2, 3), make_gate("cx", 3, 4)] * 2)
    cmap = CouplingMap.valencia()
    greedy, flow = place(c, cmap, "greedy"), place(c, cmap, "flow")
    assert flow_cost(c, cmap, greedy) == 10
    assert flow_cost(c, cmap, flow) == 6
    assert all(cmap.distance(flow.v2p[a], flow.v2p[b]) == 1 for a, b in [(0, 1), (2, 3), (3, 4)])
    assert place(c, cmap) == flow


@pytest.mark.parametrize("seed", range(20))
def test_flow_placement_never_worse_than_greedy(seed):
    rng = np.random.default_rng(300 + seed)
    c = decompose(random_circuit(rng, 5, 12))
    for cmap in (CouplingMap.valencia(), CouplingMap.line(5)):
        assert flow_cost(c, cmap, place(c, cmap, "flow")) <= flow_cost(c, cmap, place(c, cmap, "greedy"))


def test_lookahead_tie_moves_second_operand():
    cmap = CouplingMap.valencia()
    c = Circuit.from_instructions(5, [make_gate("cx", 0, 4)])
    routed, final = route(c, cmap, Layout.trivial(5), Lookahead())
    assert routed.count_kind(GateKind.SWAP) == 2
    assert final.p2v == (0, 4, 2, 1, 3)
    assert equivalent_modulo_layout(c, routed, Layout.trivial(5).p2v, final.p2v)


def test_lookahead_meets_where_the_next_gate_is_cheap():
    cmap = CouplingMap.line(5)
    c = Circuit.from_instructions(5, [make_gate("cx", 0, 4), make_gate("cx", 4, 3), make_gate("cx", 4, 3)])
    plain, _ = route(c, cmap, Layout.trivial(5))
    smart, final = route(c, cmap, Layout.trivial(5), Lookahead())
    assert smart.count_kind(GateKind.SWAP) <= plain.count_kind(GateKind.SWAP)
    assert on_edges(smart, cmap)
    assert equivalent_modulo_layout(c, smart, Layout.trivial(5).p2v, final.p2v)


def test_unknown_routing_lists_available():
    c = Circuit.from_instructions(2, [make_gate("cx", 0, 1)])
    with pytest.raises(ValueError, match="Available"):
        compile_circuit(c, CouplingMap.valencia(), CompileOptions(routing="sabre"))


def test_distance_matrix_and_disconnected_pairs():
    cmap = CouplingMap.valencia()
    assert cmap.distance(0, 4) == 3
    assert cmap.distance(2, 2) == 0
    with pytest.raises(DisconnectedMap):
        CouplingMap(4, [(0, 1), (2, 3)]).distance(0, 2)


def test_deep_optimization_cuts_cx_on_the_adder():
    adder = load_benchmark("adder_1bit").circuit
    cmap = CouplingMap.valencia()
    plain = CompileOptions(placement="greedy", routing="shortest_path", deep_optimization=False)
    assert compile_circuit(adder, cmap).cx_count() < compile_circuit(adder, cmap, plain).cx_count()
