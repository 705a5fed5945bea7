import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

import logging

import pytest

from src.benchmarks import load_benchmark
from src.circuit_ir import Barrier, Circuit, GateKind, Measure, make_gate
from src.metrics import dfc, tvd
from src.obfuscator import (
    BarrierSide,
    InfeasibleArity,
    InsertionLocation,
    InvalidBlockParams,
    Location,
    ObfuscationRecord,
    QubitMismatch,
    RandomBlockParams,
    generate_block,
    insert,
    obfuscate,
    replay,
    stealth_warnings,
)
from src.simulator import sample


def small_original() -> Circuit:
    return Circuit.from_instructions(
        3, [make_gate("x", 0), make_gate("cx", 0, 1), make_gate("ccx", 0, 1, 2), make_gate("x", 1)]
    ).measure_all()


def test_insertion_location_parse():
    assert InsertionLocation.parse("front") == InsertionLocation.front()
    assert InsertionLocation.parse("middle").side is BarrierSide.LEFT
    assert InsertionLocation.parse("middle-right") == InsertionLocation.middle("right")
    assert str(InsertionLocation.middle("right")) == "middle-right"
    with pytest.raises(ValueError, match="Available"):
        InsertionLocation.parse("side")
    with pytest.raises(ValueError):
        InsertionLocation(Location.BACK, BarrierSide.LEFT)


def test_generate_block_exact_size_and_reproducible():
    params = RandomBlockParams(n_gates=5, seed=42)
    a = generate_block(params, 4)
    b = generate_block(params, 4)
    assert a == b
    assert a.gate_count() == 5
    assert a.n_qubits == 4
    assert all(g.kind in {GateKind.X, GateKind.CX, GateKind.C3X} for g in a.gates)
    assert generate_block(RandomBlockParams(n_gates=5, seed=43), 4) != a


def test_generate_block_respects_pool_and_kinds():
    params = RandomBlockParams(n_gates=20, allowed_kinds=frozenset({GateKind.CX}), qubit_pool=(1, 3), seed=3)
    block = generate_block(params, 5)
    assert all(g.kind is GateKind.CX and set(g.qubits) == {1, 3} for g in block.gates)


def test_refined_block_flips_a_measured_qubit_first():
    for seed in range(30):
        params = RandomBlockParams(n_gates=4, refined=True, seed=seed, measured_qubits=(2, 4))
        block = generate_block(params, 5)
        first = block.gates[0]
        assert first.kind is GateKind.X and first.qubits[0] in (2, 4)
        assert all(first.qubits[0] not in g.qubits for g in block.gates[1:])


def test_block_param_errors():
    with pytest.raises(InvalidBlockParams):
        generate_block(RandomBlockParams(n_gates=0), 3)
    with pytest.raises(InvalidBlockParams):
        generate_block(RandomBlockParams(refined=True), 3)
    with pytest.raises(InfeasibleArity):
        generate_block(RandomBlockParams(allowed_kinds=frozenset({GateKind.C3X})), 3)
    with pytest.raises(InfeasibleArity):
        generate_block(
            RandomBlockParams(n_gates=2, allowed_kinds=frozenset({GateKind.C3X}), refined=True,
                              measured_qubits=(0,)),
            4,
        )


def test_insert_front_and_back():
    original = small_original()
    block = Circuit.from_instructions(3, [make_gate("x", 2)])
    front, record = insert(original, block, InsertionLocation.front())
    assert front.instructions[0] == make_gate("x", 2)
    assert record.insertion_index == 0 and record.barrier_tag is None
    back, record = insert(original, block, InsertionLocation.back())
    assert back.instructions[4] == make_gate("x", 2)
    assert isinstance(back.instructions[5], Measure)
    assert record.insertion_index == 4
    assert back.gate_count() == original.gate_count() + 1


def test_insert_middle_sides():
    original = small_original()
    block = Circuit.from_instructions(3, [make_gate("x", 2)])
    left, record = insert(original, block, InsertionLocation.middle("left"), barrier_tag="jt")
    assert left.instructions[2] == make_gate("x", 2)
    assert left.instructions[3] == Barrier((0, 1, 2), "jt")
    assert record.insertion_index == 2
    right, record = insert(original, block, InsertionLocation.middle("right"), barrier_tag="jt")
    assert right.instructions[2] == Barrier((0, 1, 2), "jt")
    assert right.instructions[3] == make_gate("x", 2)
    assert record.insertion_index == 3


def test_insert_rejects_wide_block():
    with pytest.raises(QubitMismatch):
        insert(small_original(), Circuit.from_instructions(4, [make_gate("x", 3)]), InsertionLocation.back())


def test_record_digest_detects_tampering():
    _, record = obfuscate(small_original(), RandomBlockParams(seed=1), InsertionLocation.back())
    assert record.is_intact()
    payload = record.to_payload()
    payload.insertion_index += 1
    assert not ObfuscationRecord.from_payload(payload).is_intact()


def test_record_payload_roundtrip():
    _, record = obfuscate(small_original(), RandomBlockParams(seed=8), InsertionLocation.middle("right"))
    again = ObfuscationRecord.from_payload(record.to_payload())
    assert again == record
    assert again.digest == record.digest
    assert again.is_intact()


@pytest.mark.parametrize("location", ["front", "middle-left", "middle-right", "back"])
def test_replay_rebuilds_obfuscated(location):
    original = small_original()
    obfuscated, record = obfuscate(original, RandomBlockParams(seed=5), InsertionLocation.parse(location))
    assert replay(original, record) == obfuscated


def test_obfuscated_counter_has_eleven_gates():
    counter = load_benchmark("counter")
    obfuscated, record = obfuscate(counter.circuit, RandomBlockParams(n_gates=3, seed=0), InsertionLocation.middle())
    assert obfuscated.gate_count() == 11
    assert len(obfuscated.barriers) == 1
    assert record.original_gate_count == 8


def test_default_kinds_come_from_original():
    adder = load_benchmark("adder_1bit")
    _, record = obfuscate(adder.circuit, RandomBlockParams(n_gates=6, seed=2), InsertionLocation.back())
    assert record.block.gate_kinds() <= {GateKind.X, GateKind.C3X}


def test_refined_counter_block_fits_four_qubits():
    counter = load_benchmark("counter")
    _, record = obfuscate(counter.circuit, RandomBlockParams(n_gates=3, refined=True, seed=4), InsertionLocation.back())
    assert GateKind.C3X not in record.block.gate_kinds()


@pytest.mark.parametrize("name", ["adder_1bit", "rd73", "sym6"])
def test_refined_fillers_stay_narrow(name):
    bench = load_benchmark(name)
    for seed in range(10):
        _, record = obfuscate(bench.circuit, RandomBlockParams(n_gates=5, refined=True, seed=seed),
                              InsertionLocation.back())
        assert all(g.kind.arity <= 2 for g in record.block.gates)
        assert record.block.gate_kinds() <= bench.circuit.gate_kinds() | {GateKind.X}


def test_refined_adder_block_is_all_x():
    adder = load_benchmark("adder_1bit")
    assert RandomBlockParams(refined=True).resolved_for(adder.circuit).allowed_kinds == {GateKind.X}


@pytest.mark.parametrize("name", ["adder_1bit", "counter", "rd53"])
@pytest.mark.parametrize("seed", range(10))
def test_refined_back_gives_full_corruption(name, seed):
    bench = load_benchmark(name)
    obfuscated, _ = obfuscate(bench.circuit, RandomBlockParams(refined=True, seed=seed), InsertionLocation.back())
    orig = sample(bench.circuit, bench.input, shots=1000)
    obf = sample(obfuscated, bench.input, shots=1000)
    assert dfc(obf, bench.correct_output) == -1.0
    assert tvd(orig, obf) == 2.0


def test_stealth_warnings(caplog):
    original = Circuit.from_instructions(2, [make_gate("cx", 0, 1)]).measure_all()
    block = Circuit.from_instructions(2, [make_gate("x", 0), make_gate("cx", 1, 0)])
    messages = stealth_warnings(original, block, refined=True)
    assert any("absent from the original" in m for m in messages)
    assert any("no X gates" in m or "has none" in m for m in messages)
    with caplog.at_level(logging.WARNING):
        obfuscate(original, RandomBlockParams(refined=True, seed=0), InsertionLocation.back())
    assert "Stealth" in caplog.text


def test_block_may_hold_barriers_but_not_measurements():
    original = small_original()
    fenced = Circuit.from_instructions(3, [make_gate("x", 0), Barrier((0, 1)), make_gate("x", 1)])
    obfuscated, record = insert(original, fenced, InsertionLocation.front())
    assert len(obfuscated.barriers) == 1
    with pytest.raises(ValueError, match="cannot measure"):
        insert(original, Circuit.from_instructions(3, [make_gate("x", 0), Measure(0, 0)]), InsertionLocation.back())
