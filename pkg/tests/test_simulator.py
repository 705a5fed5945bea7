import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

import numpy as np
import pytest

from src.circuit_ir import Circuit, Gate, GateKind, Measure, make_gate
from src.simulator import (
    Distribution,
    InvalidInput,
    InvalidShots,
    NoMeasurement,
    NoiseModel,
    TooManyQubits,
    derive_rng,
    derive_seed,
    equivalent_up_to_phase,
    evaluate_classical,
    exact_distribution,
    run_statevector,
    sample,
    unitary_of,
)

CLASSICAL = [GateKind.X, GateKind.CX, GateKind.SWAP, GateKind.CCX, GateKind.C3X]


def random_classical(rng: np.random.Generator, n: int, n_gates: int) -> Circuit:
    gates = []
    for _ in range(n_gates):
        kinds = [k for k in CLASSICAL if k.arity <= n]
        kind = kinds[int(rng.integers(len(kinds)))]
        qubits = tuple(int(q) for q in rng.choice(n, size=kind.arity, replace=False))
        gates.append(Gate(kind, qubits))
    return Circuit.from_instructions(n, gates)


def test_derive_rng_is_reproducible_and_label_sensitive():
    a = derive_rng(5, "sample", "noise").integers(0, 1 << 30, size=4)
    b = derive_rng(5, "sample", "noise").integers(0, 1 << 30, size=4)
    c = derive_rng(5, "sample", "shots").integers(0, 1 << 30, size=4)
    assert list(a) == list(b)
    assert list(a) != list(c)
    assert derive_seed(1, "x") == derive_seed(1, "x")


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(p1=1.5)
    assert NoiseModel.noiseless().is_noiseless
    assert not NoiseModel().is_noiseless


def test_bit_ordering_little_endian():
    c = Circuit.from_instructions(3, [make_gate("x", 0)])
    probs = run_statevector(c).probabilities()
    assert probs[1] == pytest.approx(1.0)
    out = sample(c.measure_all(), shots=10)
    assert out.counts == {"100": 10}


def test_cx_direction():
    c = Circuit.from_instructions(2, [make_gate("cx", 0, 1)]).measure_all()
    assert sample(c, "10", shots=5).counts == {"11": 5}
    assert sample(c, "01", shots=5).counts == {"01": 5}


def test_hadamard_splits_evenly():
    c = Circuit.from_instructions(1, [make_gate("h", 0)]).measure_all()
    probs = exact_distribution(c)
    assert probs["0"] == pytest.approx(0.5) and probs["1"] == pytest.approx(0.5)
    d = sample(c, shots=4000, seed=3)
    assert d.shots == 4000
    assert 1700 < d.count("0") < 2300


def test_outcome_string_follows_clbits():
    c = Circuit(3, 2, (make_gate("x", 2), Measure(2, 0), Measure(0, 1)))
    assert sample(c, shots=3).counts == {"10": 3}


def test_statevector_norm_preserved():
    rng = np.random.default_rng(11)
    kinds = [GateKind.H, GateKind.T, GateKind.SX, GateKind.CX, GateKind.CCX]
    for _ in range(20):
        gates = []
        for _ in range(15):
            kind = kinds[int(rng.integers(len(kinds)))]
            qubits = tuple(int(q) for q in rng.choice(4, size=kind.arity, replace=False))
            gates.append(Gate(kind, qubits))
        gates.append(Gate(GateKind.RZ, (0,), float(rng.uniform(-3, 3))))
        state = run_statevector(Circuit.from_instructions(4, gates), "1010")
        assert abs(state.norm() - 1.0) < 1e-10


def test_statevector_agrees_with_classical_evaluator():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        n = int(rng.integers(2, 9))
        c = random_classical(rng, n, int(rng.integers(1, 25))).measure_all()
        bits = "".join(str(int(b)) for b in rng.integers(0, 2, size=n))
        expected = evaluate_classical(c, bits)
        assert sample(c, bits, shots=1, seed=trial).counts == {expected: 1}


@pytest.mark.parametrize("seed", range(4))
def test_noiseless_counts_within_four_sigma_of_exact(seed):
    rng = np.random.default_rng(seed)
    kinds = [GateKind.H, GateKind.T, GateKind.SX, GateKind.CX, GateKind.RZ]
    gates = []
    for _ in range(12):
        kind = kinds[int(rng.integers(len(kinds)))]
        qubits = tuple(int(q) for q in rng.choice(3, size=kind.arity, replace=False))
        gates.append(Gate(kind, qubits, float(rng.uniform(0, np.pi)) if kind.is_parametric else None))
    c = Circuit.from_instructions(3, gates).measure_all()
    shots = 10000
    exact = exact_distribution(c)
    counts = sample(c, shots=shots, seed=seed).counts
    assert set(counts) <= set(exact)
    for outcome, p in exact.items():
        sigma = np.sqrt(shots * p * (1 - p))
        assert abs(counts.get(outcome, 0) - shots * p) <= 4 * sigma + 1, outcome


def test_unitary_of_and_phase_equivalence():
    swap = Circuit.from_instructions(2, [make_gate("swap", 0, 1)])
    three_cx = Circuit.from_instructions(
        2, [make_gate("cx", 0, 1), make_gate("cx", 1, 0), make_gate("cx", 0, 1)]
    )
    assert equivalent_up_to_phase(swap, three_cx)
    z_like = Circuit.from_instructions(1, [make_gate("rz", 0, theta=np.pi)])
    s_twice = Circuit.from_instructions(1, [make_gate("s", 0), make_gate("s", 0)])
    assert equivalent_up_to_phase(z_like, s_twice)
    assert not equivalent_up_to_phase(z_like, Circuit.from_instructions(1, [make_gate("x", 0)]))
    u = unitary_of(Circuit.from_instructions(1, [make_gate("x", 0)]))
    assert np.allclose(u, [[0, 1], [1, 0]])


def test_sample_is_seed_deterministic_under_noise():
    c = Circuit.from_instructions(3, [make_gate("ccx", 0, 1, 2), make_gate("x", 0)]).measure_all()
    noise = NoiseModel(0.01, 0.05, 0.02)
    first = sample(c, "110", shots=500, noise=noise, seed=9)
    again = sample(c, "110", shots=500, noise=noise, seed=9)
    assert first == again
    assert sum(first.counts.values()) == 500
    assert first.most_common() == "011"


def test_noise_reduces_correct_share():
    c = Circuit.from_instructions(2, [make_gate("cx", 0, 1)] * 10).measure_all()
    clean = sample(c, "10", shots=1000, seed=1)
    noisy = sample(c, "10", shots=1000, noise=NoiseModel(0.0, 0.05, 0.0), seed=1)
    assert clean.count("10") == 1000
    assert noisy.count("10") < 1000


def test_readout_only_noise_flips_bits():
    c = Circuit.from_instructions(2, []).measure_all()
    d = sample(c, shots=2000, noise=NoiseModel(0.0, 0.0, 0.2), seed=4)
    assert 0 < d.count("00") < 2000
    assert d.count("00") > 1000


def test_sample_errors():
    c = Circuit.from_instructions(1, [make_gate("x", 0)])
    with pytest.raises(NoMeasurement):
        sample(c)
    with pytest.raises(InvalidShots):
        sample(c.measure_all(), shots=0)
    with pytest.raises(InvalidInput):
        sample(c.measure_all(), "01")
    with pytest.raises(TooManyQubits):
        sample(Circuit(21).measure_all([0]))


def test_distribution_helpers():
    d = Distribution({"1": 3, "0": 3, "11": 1})
    assert d.shots == 7
    assert d.most_common() == "0"
    assert d.probability("1") == pytest.approx(3 / 7)
    assert d.outcomes() == ["0", "1", "11"]
    assert list(d.to_dict()) == ["0", "1", "11"]
