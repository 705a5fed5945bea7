"""
Restore the functionality of a compiled obfuscated circuit.

The inverse of the recorded block is compiled separately and stitched in at the
insertion junction. Layout continuity at the junction comes either from feeding the
boundary layout into the inverse's compilation (FeedLayout) or from a SWAP layer
between the two compiled pieces (SwapLayer).

The inverse is compiled from the mirror image of the decomposed block, so once the
stitched circuit is re-optimized its gates cancel against the block's own wherever
routing left the two sides alike.
"""
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Tuple
import logging

import networkx as nx

from src.circuit_ir import Barrier, Circuit, Gate, GateKind, Instruction, Measure, inverse
from src.mock_compiler import (
    CompileOptions,
    CompiledCircuit,
    CouplingMap,
    DisconnectedMap,
    Layout,
    compile_circuit,
    decompose,
    optimize_deep,
    translate_basis,
)
from src.obfuscator import BarrierSide, Location, ObfuscationRecord
from src.schemas import StitchReport

logger = logging.getLogger(__name__)


class RecordMismatch(ValueError):
    pass


class MissingBarrierTag(ValueError):
    pass


class StitchMode(Enum):
    FEED_LAYOUT = "feed"
    SWAP_LAYER = "swap"

    @classmethod
    def parse(cls, text: str) -> 'StitchMode':
        aliases = {"feed": cls.FEED_LAYOUT, "feedlayout": cls.FEED_LAYOUT,
                   "swap": cls.SWAP_LAYER, "swaplayer": cls.SWAP_LAYER}
        key = text.lower().replace("_", "").replace("-", "")
        if key not in aliases:
            raise ValueError(f"Unknown stitch mode '{text}'. Available: ['feed', 'swap']")
        return aliases[key]


@dataclass
class StitchResult:
    circuit: Circuit
    initial_layout: Layout
    final_layout: Layout
    report: StitchReport


def build_inverse(record: ObfuscationRecord) -> Circuit:
    return inverse(record.block)


def decomposed_inverse(record: ObfuscationRecord, c3x: str = "gray") -> Circuit:
    """Inverse of the decomposed block: the block's expansion mirrored gate by gate."""
    return inverse(decompose(record.block, c3x))


def swap_layer(from_layout: Layout, to_layout: Layout, coupling_map: CouplingMap) -> Circuit:
    """
    SWAP-only circuit on coupling edges that turns from_layout into to_layout.

    Targets are filled leaf by leaf on a BFS spanning tree; each token travels inside
    the part of the tree that is still unfilled, so settled qubits never move again.
    """
    if {from_layout.n_physical, to_layout.n_physical} != {coupling_map.n_physical}:
        raise ValueError("Layouts must cover the whole coupling map")
    if not coupling_map.is_connected():
        raise DisconnectedMap(f"Map '{coupling_map.name}' is not connected")

    tree = nx.bfs_tree(coupling_map.graph, 0).to_undirected()
    current = list(from_layout.p2v)
    remaining = set(range(coupling_map.n_physical))
    swaps: List[Instruction] = []
    while remaining:
        sub = tree.subgraph(remaining)
        target = min(p for p in remaining if sub.degree[p] <= 1)
        wanted = to_layout.p2v[target]
        position = current.index(wanted)
        path = nx.shortest_path(sub, position, target)
        for here, there in zip(path[:-1], path[1:]):
            swaps.append(Gate(GateKind.SWAP, (here, there)))
            current[here], current[there] = current[there], current[here]
        remaining.remove(target)
    return Circuit(coupling_map.n_physical, 0, tuple(swaps), {"name": "swap_layer"})


def apply_swaps(layout: Layout, swaps: Circuit) -> Layout:
    """Layout after the SWAP gates of a swap layer."""
    for gate in swaps.gates:
        layout = layout.swap_physical(*gate.qubits)
    return layout


def _body_and_measures(c: Circuit) -> Tuple[List[Instruction], List[Measure]]:
    body = [i for i in c.instructions if not isinstance(i, Measure)]
    return body, c.measures


def _remap_measures(measures: List[Measure], before: Layout, after: Layout) -> List[Instruction]:
    """Retarget measurements from the layout they were compiled for to a new one."""
    v2p = after.v2p
    return [Measure(v2p[before.p2v[m.qubit]], m.clbit) for m in measures]


def _check_record(compiled_obf: CompiledCircuit, record: ObfuscationRecord) -> None:
    if not record.is_intact():
        raise RecordMismatch("Record digest does not match its contents")
    source = compiled_obf.circuit.metadata.get("source_hash")
    if source is not None and source != record.circuit_hash:
        raise RecordMismatch("Record was made for a different circuit")
    if source is None:
        logger.warning("Compiled circuit carries no source hash; record match not verified")


def _tag_position(compiled_obf: CompiledCircuit, tag: Optional[str]) -> Tuple[int, int]:
    """(instruction index, barrier ordinal) of the tagged barrier."""
    ordinal = 0
    for index, inst in enumerate(compiled_obf.circuit.instructions):
        if isinstance(inst, Barrier):
            if tag is not None and inst.tag == tag:
                return index, ordinal
            ordinal += 1
    raise MissingBarrierTag(f"Barrier tagged '{tag}' not found in the compiled circuit")


def precompile_front_inverse(
    record: ObfuscationRecord,
    coupling_map: CouplingMap,
    options: Optional[CompileOptions] = None,
) -> CompiledCircuit:
    """
    Compile the inverse before the obfuscated circuit goes out.
    Its final layout is meant to be fed as the main compilation's initial layout.
    """
    options = replace(options or CompileOptions(), initial_layout=None)
    return compile_circuit(decomposed_inverse(record, options.c3x), coupling_map, options)


def _inverse_ending_at(
    record: ObfuscationRecord, coupling_map: CouplingMap, end: Layout, options: CompileOptions
) -> Tuple[Circuit, Layout]:
    """
    Compiled inverse that finishes in layout `end`: route the block forward from `end`
    and take the adjoint of the result, which runs from the block's final layout back.
    """
    block = decompose(record.block, options.c3x)
    forward = compile_circuit(block, coupling_map, replace(options, initial_layout=end))
    return translate_basis(inverse(forward.circuit)), forward.final_layout


def stitch(
    compiled_obf: CompiledCircuit,
    record: ObfuscationRecord,
    coupling_map: CouplingMap,
    mode: StitchMode = StitchMode.FEED_LAYOUT,
    reoptimize: bool = True,
    front_inverse: Optional[CompiledCircuit] = None,
    options: Optional[CompileOptions] = None,
) -> StitchResult:
    """
    Concatenate the compiled inverse at the junction of the compiled obfuscated circuit.

    Args:
        compiled_obf: What came back from the untrusted compiler
        record: The secret kept when obfuscating
        coupling_map: Device the circuits were compiled for
        mode: FeedLayout or SwapLayer continuity at the junction
        reoptimize: Run optimize_deep over the stitched result
        front_inverse: Inverse compiled ahead of time (front insertion, FeedLayout)
        options: Compiler settings for the inverse; its layout is always chosen here

    Returns:
        Stitched circuit with its end layouts and a stitch report
    """
    _check_record(compiled_obf, record)
    base = replace(options or CompileOptions(), initial_layout=None)
    inverse_block = decomposed_inverse(record, base.c3x)
    body, measures = _body_and_measures(compiled_obf.circuit)
    initial, final = compiled_obf.initial_layout, compiled_obf.final_layout
    junction_swaps = 0
    note = ""
    trivial = replace(base, placement="trivial")

    if record.location.location is Location.BACK:
        if mode is StitchMode.FEED_LAYOUT:
            inv = compile_circuit(inverse_block, coupling_map, replace(base, initial_layout=final))
            junction: List[Instruction] = []
        else:
            inv = compile_circuit(inverse_block, coupling_map, trivial)
            layer = swap_layer(final, inv.initial_layout, coupling_map)
            junction_swaps = layer.gate_count()
            junction = list(translate_basis(layer).instructions)
        inverse_gates = list(inv.circuit.instructions)
        instructions = body + junction + inverse_gates
        instructions += _remap_measures(measures, final, inv.final_layout)
        new_final = inv.final_layout

    elif record.location.location is Location.FRONT:
        if mode is StitchMode.FEED_LAYOUT:
            if front_inverse is not None and front_inverse.final_layout == initial:
                inverse_gates = list(front_inverse.circuit.instructions)
                new_initial = front_inverse.initial_layout
                note = "inverse compiled first; its final layout fed the main compilation"
            else:
                compiled_inverse, new_initial = _inverse_ending_at(
                    record, coupling_map, initial, base
                )
                inverse_gates = list(compiled_inverse.instructions)
                note = "inverse routed to end in the obfuscated circuit's initial layout"
            junction = []
        else:
            inv = compile_circuit(inverse_block, coupling_map, trivial)
            layer = swap_layer(inv.final_layout, initial, coupling_map)
            junction_swaps = layer.gate_count()
            junction = list(translate_basis(layer).instructions)
            inverse_gates = list(inv.circuit.instructions)
            new_initial = inv.initial_layout
        instructions = inverse_gates + junction + body + list(measures)
        initial = new_initial
        new_final = final

    else:
        index, ordinal = _tag_position(compiled_obf, record.barrier_tag)
        if ordinal >= len(compiled_obf.barrier_layouts):
            raise MissingBarrierTag("Compiled circuit carries no layout for the tagged barrier")
        boundary = compiled_obf.barrier_layouts[ordinal]
        if mode is StitchMode.FEED_LAYOUT:
            fed = replace(base, initial_layout=boundary)
            inv = compile_circuit(inverse_block, coupling_map, fed)
            before = Circuit(coupling_map.n_physical)
        else:
            inv = compile_circuit(inverse_block, coupling_map, trivial)
            before = swap_layer(boundary, inv.initial_layout, coupling_map)
        after = swap_layer(inv.final_layout, boundary, coupling_map)
        junction_swaps = before.gate_count() + after.gate_count()
        segment = (
            list(translate_basis(before).instructions)
            + list(inv.circuit.instructions)
            + list(translate_basis(after).instructions)
        )
        inverse_gates = list(inv.circuit.instructions)
        splice = index if record.location.side is BarrierSide.LEFT else index + 1
        everything = list(compiled_obf.circuit.instructions)
        instructions = everything[:splice] + segment + everything[splice:]
        new_final = final

    restored = compiled_obf.circuit.with_instructions(instructions)
    if reoptimize:
        restored = optimize_deep(restored)
    inverse_count = sum(1 for i in inverse_gates if isinstance(i, Gate))
    report = StitchReport(
        mode=mode.value,
        location=str(record.location),
        junction_swaps=junction_swaps,
        inverse_gate_count=inverse_count,
        gate_count_obfuscated=compiled_obf.circuit.gate_count(),
        gate_count_restored=restored.gate_count(),
        cx_count_obfuscated=compiled_obf.cx_count(),
        cx_count_restored=restored.count_kind(GateKind.CX),
        initial_layout=initial.to_list(),
        final_layout=new_final.to_list(),
        note=note,
    )
    logger.info(
        "Stitched %s inverse (%s): %d -> %d gates, %d junction swaps",
        report.location, mode.value, report.gate_count_obfuscated,
        report.gate_count_restored, junction_swaps,
    )
    return StitchResult(restored, initial, new_final, report)


def deobfuscate(
    compiled_obf: CompiledCircuit,
    record: ObfuscationRecord,
    coupling_map: CouplingMap,
    mode: StitchMode = StitchMode.FEED_LAYOUT,
    reoptimize: bool = True,
) -> Circuit:
    return stitch(compiled_obf, record, coupling_map, mode, reoptimize).circuit
