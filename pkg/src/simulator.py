"""
Statevector simulator used as the oracle for every other module.

Shots under noise are sampled as stochastic Pauli trajectories:
    - after a 1-qubit gate, X with probability p1 and Z with probability p1, independently
    - after a multi-qubit gate, each participating qubit gets a uniformly chosen X, Y or Z
      with probability p2
    - each readout bit flips with probability p_ro
Shots that draw the same error pattern share one simulated trajectory.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import hashlib
import logging

import numpy as np

from src.circuit_ir import Circuit, Gate, GateKind, Measure, MeasurementPresent, QubitCountMismatch

logger = logging.getLogger(__name__)

MAX_STATEVECTOR_QUBITS = 20
MAX_UNITARY_QUBITS = 10
PRUNE_PROBABILITY = 1e-12

# Amplitude budget per trajectory chunk
_CHUNK_AMPLITUDES = 1 << 21

_PAULIS = {
    1: GateKind.X.matrix(),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.diag([1, -1]).astype(complex),
}


class TooManyQubits(ValueError):
    pass


class NoMeasurement(ValueError):
    pass


class InvalidShots(ValueError):
    pass


class InvalidInput(ValueError):
    pass


class NonClassicalGate(ValueError):
    pass


def derive_rng(seed: int, *labels: str) -> np.random.Generator:
    """
    Independent PCG64 stream for a labeled purpose under one master seed.

    The same (seed, labels) always yields the same stream; different labels yield
    statistically independent streams.
    """
    key = tuple(
        int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:4], "little")
        for label in labels
    )
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *labels: str) -> int:
    """Integer child seed, for records that must store a plain seed."""
    return int(derive_rng(seed, *labels).integers(0, 2**31 - 1))


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.001
    p2: float = 0.01
    p_ro: float = 0.01

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "p_ro"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Noise probability {name}={value} outside [0, 1]")

    @classmethod
    def noiseless(cls) -> 'NoiseModel':
        return cls(0.0, 0.0, 0.0)

    @property
    def is_noiseless(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0 and self.p_ro == 0.0


@dataclass
class StateVector:
    amplitudes: np.ndarray
    n: int

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.probabilities()))


@dataclass
class Distribution:
    """Outcome-string counts over a fixed number of shots."""
    counts: Dict[str, int]
    shots: int = field(default=0)

    def __post_init__(self) -> None:
        if not self.shots:
            self.shots = sum(self.counts.values())

    def count(self, outcome: str) -> int:
        return self.counts.get(outcome, 0)

    def probability(self, outcome: str) -> float:
        return self.count(outcome) / self.shots if self.shots else 0.0

    def most_common(self) -> str:
        """Highest-count outcome, ties broken by the smaller key."""
        return min(self.counts, key=lambda k: (-self.counts[k], k))

    def outcomes(self) -> List[str]:
        return sorted(self.counts)

    def to_dict(self) -> Dict[str, int]:
        return {k: self.counts[k] for k in sorted(self.counts)}


# ---------------------------------------------------------------------------
# State evolution


def _basis_index(bits: str, n: int) -> int:
    if len(bits) != n or any(ch not in "01" for ch in bits):
        raise InvalidInput(f"Input '{bits}' must be a {n}-character 0/1 string")
    return sum(1 << q for q, ch in enumerate(bits) if ch == "1")


def _apply_matrix(states: np.ndarray, matrix: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """
    Apply a k-qubit matrix to a batch of states shaped (batch, 2, ..., 2).
    Axis 1 holds the most significant qubit (n-1), the last axis holds qubit 0.
    """
    k = len(qubits)
    axes = [n - q for q in qubits]
    tensor = matrix.reshape([2] * (2 * k))
    moved = np.tensordot(tensor, states, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(moved, list(range(k)), axes)


def _evolve(states: np.ndarray, c: Circuit) -> np.ndarray:
    n = c.n_qubits
    for gate in c.gates:
        states = _apply_matrix(states, gate.matrix(), gate.qubits, n)
    return states


def _initial_states(indices: Sequence[int], n: int) -> np.ndarray:
    states = np.zeros((len(indices), 2**n), dtype=complex)
    states[np.arange(len(indices)), list(indices)] = 1.0
    return states.reshape([len(indices)] + [2] * n)


def run_statevector(c: Circuit, input_bits: Optional[str] = None) -> StateVector:
    """U_c applied to a basis state. Barriers and measures do not touch the state."""
    n = c.n_qubits
    if n > MAX_STATEVECTOR_QUBITS:
        raise TooManyQubits(f"{n} qubits exceeds the {MAX_STATEVECTOR_QUBITS}-qubit limit")
    index = _basis_index(input_bits if input_bits is not None else "0" * n, n)
    states = _evolve(_initial_states([index], n), c)
    return StateVector(states.reshape(2**n), n)


def unitary_of(c: Circuit) -> np.ndarray:
    """Full 2^n x 2^n unitary; column k is the evolution of basis state k."""
    if c.n_qubits > MAX_UNITARY_QUBITS:
        raise TooManyQubits(f"{c.n_qubits} qubits exceeds the {MAX_UNITARY_QUBITS}-qubit limit")
    if c.measures:
        raise MeasurementPresent("unitary_of needs a measurement-free circuit")
    n = c.n_qubits
    states = _evolve(_initial_states(range(2**n), n), c)
    return states.reshape(2**n, 2**n).T


def _equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    if a.shape != b.shape:
        return False
    pivot = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(b[pivot]) < tol:
        return bool(np.max(np.abs(a)) < tol)
    phase = a[pivot] / b[pivot]
    if abs(abs(phase) - 1.0) > tol:
        return False
    return bool(np.max(np.abs(a - phase * b)) < tol)


def equivalent_up_to_phase(a: Circuit, b: Circuit, tol: float = 1e-9) -> bool:
    if a.n_qubits != b.n_qubits:
        raise QubitCountMismatch(f"{a.n_qubits} vs {b.n_qubits} qubits")
    return _equal_up_to_phase(unitary_of(a), unitary_of(b), tol)


def layout_permutation(p2v: Sequence[int]) -> np.ndarray:
    """Permutation taking a virtual-indexed basis state to its physical-indexed image."""
    n = len(p2v)
    perm = np.zeros((2**n, 2**n))
    for k in range(2**n):
        physical = sum(((k >> v) & 1) << p for p, v in enumerate(p2v))
        perm[physical, k] = 1.0
    return perm


def equivalent_modulo_layout(
    virtual: Circuit,
    physical: Circuit,
    initial_p2v: Sequence[int],
    final_p2v: Sequence[int],
    tol: float = 1e-8,
) -> bool:
    """
    True when physical implements virtual given the layouts at its two ends:
    U_phys . P(initial) = e^{i phi} P(final) . (U_virt (x) I_ancilla).
    """
    extra = physical.n_qubits - virtual.n_qubits
    if extra < 0:
        raise QubitCountMismatch("physical register smaller than virtual register")
    u_virtual = np.kron(np.eye(2**extra), unitary_of(virtual.without_measures()))
    u_physical = unitary_of(physical.without_measures())
    lhs = u_physical @ layout_permutation(initial_p2v)
    rhs = layout_permutation(final_p2v) @ u_virtual
    return _equal_up_to_phase(lhs, rhs, tol)


# ---------------------------------------------------------------------------
# Sampling


def _outcome_map(c: Circuit) -> Tuple[np.ndarray, int]:
    """Outcome index of every basis state, and the number of outcome bits."""
    measures = sorted(c.measures, key=lambda m: m.clbit)
    basis = np.arange(2**c.n_qubits)
    outcome = np.zeros_like(basis)
    for position, m in enumerate(measures):
        outcome |= ((basis >> m.qubit) & 1) << position
    return outcome, len(measures)


def _outcome_key(index: int, width: int) -> str:
    return "".join("1" if (index >> j) & 1 else "0" for j in range(width))


def _outcome_probabilities(states: np.ndarray, outcome: np.ndarray, width: int) -> np.ndarray:
    rows = states.shape[0]
    probs = np.abs(states.reshape(rows, -1)) ** 2
    n_out = 2**width
    flat = (np.arange(rows)[:, None] * n_out + outcome[None, :]).ravel()
    per_row = np.bincount(flat, weights=probs.ravel(), minlength=rows * n_out)
    per_row = per_row.reshape(rows, n_out)
    per_row[per_row < PRUNE_PROBABILITY] = 0.0
    return per_row / per_row.sum(axis=1, keepdims=True)


def _draw_error_patterns(
    gates: List[Gate], shots: int, noise: NoiseModel, rng: np.random.Generator
) -> Dict[Tuple[Tuple[int, int, int], ...], int]:
    """Group shots by the Pauli errors they draw: pattern -> number of shots."""
    events: Dict[int, List[Tuple[int, int, int]]] = defaultdict(list)
    for position, gate in enumerate(gates):
        if len(gate.qubits) == 1:
            q = gate.qubits[0]
            slots = [(q, 1, noise.p1), (q, 3, noise.p1)]
        else:
            slots = [(q, 0, noise.p2) for q in gate.qubits]
        for q, pauli, p in slots:
            if p <= 0.0:
                continue
            hits = int(rng.binomial(shots, p))
            if not hits:
                continue
            chosen = rng.choice(shots, size=hits, replace=False)
            paulis = rng.integers(1, 4, size=hits) if pauli == 0 else np.full(hits, pauli)
            for shot, code in zip(chosen.tolist(), paulis.tolist()):
                events[shot].append((position, q, code))

    patterns: Dict[Tuple[Tuple[int, int, int], ...], int] = defaultdict(int)
    patterns[()] = shots - len(events)
    for shot in sorted(events):
        patterns[tuple(events[shot])] += 1
    if patterns[()] == 0:
        del patterns[()]
    return dict(patterns)


def _simulate_patterns(
    c: Circuit, start: int, patterns: List[Tuple[Tuple[int, int, int], ...]]
) -> np.ndarray:
    n = c.n_qubits
    states = _initial_states([start] * len(patterns), n)
    by_gate: Dict[int, Dict[Tuple[int, int], List[int]]] = defaultdict(lambda: defaultdict(list))
    for row, pattern in enumerate(patterns):
        for position, q, code in pattern:
            by_gate[position][(q, code)].append(row)
    for position, gate in enumerate(c.gates):
        states = _apply_matrix(states, gate.matrix(), gate.qubits, n)
        for (q, code), rows in by_gate.get(position, {}).items():
            states[rows] = _apply_matrix(states[rows], _PAULIS[code], (q,), n)
    return states


def sample(
    c: Circuit,
    input_bits: Optional[str] = None,
    shots: int = 10000,
    noise: Optional[NoiseModel] = None,
    seed: int = 0,
) -> Distribution:
    """
    Measurement counts for c started in a basis state.

    Args:
        c: Circuit with at least one measurement
        input_bits: Basis string, one character per qubit (default all zeros)
        shots: Number of shots, at least 1
        noise: Pauli noise model; None means noiseless
        seed: Master seed; equal seeds give identical counts

    Returns:
        Distribution keyed by outcome strings over the measured clbits
    """
    if not c.measures:
        raise NoMeasurement("Circuit has no measurements to sample")
    if shots < 1:
        raise InvalidShots(f"shots must be >= 1, got {shots}")
    n = c.n_qubits
    if n > MAX_STATEVECTOR_QUBITS:
        raise TooManyQubits(f"{n} qubits exceeds the {MAX_STATEVECTOR_QUBITS}-qubit limit")
    noise = noise or NoiseModel.noiseless()
    start = _basis_index(input_bits if input_bits is not None else "0" * n, n)
    outcome, width = _outcome_map(c)
    n_out = 2**width
    shot_rng = derive_rng(seed, "sample", "shots")

    totals = np.zeros(n_out, dtype=np.int64)
    if noise.p1 == 0.0 and noise.p2 == 0.0:
        states = _evolve(_initial_states([start], n), c)
        probs = _outcome_probabilities(states, outcome, width)[0]
        totals += shot_rng.multinomial(shots, probs)
    else:
        patterns = _draw_error_patterns(c.gates, shots, noise, derive_rng(seed, "sample", "noise"))
        keys = list(patterns)
        chunk = max(1, _CHUNK_AMPLITUDES // 2**n)
        for begin in range(0, len(keys), chunk):
            batch = keys[begin:begin + chunk]
            probs = _outcome_probabilities(_simulate_patterns(c, start, batch), outcome, width)
            for row, pattern in enumerate(batch):
                totals += shot_rng.multinomial(patterns[pattern], probs[row])
        logger.debug("Sampled %d shots over %d distinct error patterns", shots, len(keys))

    if noise.p_ro > 0.0:
        per_shot = np.repeat(np.arange(n_out), totals)
        flips = derive_rng(seed, "sample", "readout").random((shots, width)) < noise.p_ro
        weights = 1 << np.arange(width)
        per_shot = per_shot ^ (flips.astype(np.int64) @ weights)
        totals = np.bincount(per_shot, minlength=n_out)

    counts = {_outcome_key(i, width): int(totals[i]) for i in np.flatnonzero(totals)}
    return Distribution({k: counts[k] for k in sorted(counts)}, shots)


def exact_distribution(c: Circuit, input_bits: Optional[str] = None) -> Dict[str, float]:
    """Noiseless outcome probabilities, zero entries dropped."""
    n = c.n_qubits
    start = _basis_index(input_bits if input_bits is not None else "0" * n, n)
    outcome, width = _outcome_map(c)
    probs = _outcome_probabilities(_evolve(_initial_states([start], n), c), outcome, width)[0]
    return {_outcome_key(int(i), width): float(probs[i]) for i in np.flatnonzero(probs)}


# ---------------------------------------------------------------------------
# Classical evaluator


def evaluate_classical(c: Circuit, input_bits: Optional[str] = None) -> str:
    """
    Bit-vector evaluation of an X/CX/SWAP/CCX/C3X circuit.

    Returns:
        The outcome string over measured clbits, or the full register when the circuit
        has no measurements
    """
    n = c.n_qubits
    bits = [int(ch) for ch in (input_bits if input_bits is not None else "0" * n)]
    if len(bits) != n:
        raise InvalidInput(f"Input must have {n} bits")
    for gate in c.gates:
        if gate.kind is GateKind.SWAP:
            a, b = gate.qubits
            bits[a], bits[b] = bits[b], bits[a]
        elif gate.kind.is_classical:
            *controls, target = gate.qubits
            if all(bits[q] for q in controls):
                bits[target] ^= 1
        else:
            raise NonClassicalGate(f"'{gate.kind.value}' is not a classical reversible gate")
    measures: List[Measure] = sorted(c.measures, key=lambda m: m.clbit)
    if not measures:
        return "".join(str(b) for b in bits)
    return "".join(str(bits[m.qubit]) for m in measures)
