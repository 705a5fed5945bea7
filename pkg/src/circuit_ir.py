"""
Core circuit representation for the qlock toolkit.
Gates, barriers and measurements over a flat qubit register, plus the structural
operations every other module builds on: validation, inversion, concatenation and
the midpoint split used for middle insertion.

Bit ordering, used everywhere in the package:
    - a basis/input string has one character per qubit, index 0 = qubit 0
    - qubit i is bit i of a basis index (little endian)
    - an outcome string has one character per measured clbit, index 0 = lowest clbit
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union
import math

import numpy as np


class MeasurementPresent(ValueError):
    """Raised when an operation needs a measurement-free circuit."""


class QubitCountMismatch(ValueError):
    """Raised when two circuits over different registers are combined."""


class TooFewGates(ValueError):
    """Raised when a circuit is too short to split."""


class CircuitValidationError(ValueError):
    """Raised by check() with every violation found."""

    def __init__(self, violations: List['Violation']) -> None:
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


_SQRT_HALF = 1 / math.sqrt(2)
_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex)

_FIXED_MATRICES: Dict[str, np.ndarray] = {
    "id": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "sx": _SX,
    "sxdg": _SX.conj().T,
    "h": _SQRT_HALF * np.array([[1, 1], [1, -1]], dtype=complex),
    "s": np.diag([1, 1j]).astype(complex),
    "sdg": np.diag([1, -1j]).astype(complex),
    "t": np.diag([1, np.exp(1j * math.pi / 4)]),
    "tdg": np.diag([1, np.exp(-1j * math.pi / 4)]),
    "swap": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}


def _controlled_x(n_controls: int) -> np.ndarray:
    """Multi-controlled X with the controls first and the target last."""
    dim = 2 ** (n_controls + 1)
    matrix = np.eye(dim, dtype=complex)
    matrix[[dim - 2, dim - 1]] = matrix[[dim - 1, dim - 2]]
    return matrix


_FIXED_MATRICES["cx"] = _controlled_x(1)
_FIXED_MATRICES["ccx"] = _controlled_x(2)
_FIXED_MATRICES["c3x"] = _controlled_x(3)


class GateKind(Enum):
    """Gate vocabulary. Values are the textual names used in circuit files."""

    I = "id"
    X = "x"
    SX = "sx"
    SXDG = "sxdg"
    H = "h"
    S = "s"
    SDG = "sdg"
    T = "t"
    TDG = "tdg"
    RZ = "rz"
    CX = "cx"
    SWAP = "swap"
    CCX = "ccx"
    C3X = "c3x"

    @property
    def arity(self) -> int:
        if self in (GateKind.CX, GateKind.SWAP):
            return 2
        if self is GateKind.CCX:
            return 3
        if self is GateKind.C3X:
            return 4
        return 1

    @property
    def is_parametric(self) -> bool:
        return self is GateKind.RZ

    @property
    def adjoint(self) -> 'GateKind':
        """Kind of the inverse gate. RZ negates its angle instead."""
        return _ADJOINT.get(self, self)

    @property
    def is_classical(self) -> bool:
        """True for the kinds that permute basis states."""
        return self in CLASSICAL_KINDS

    def matrix(self, theta: Optional[float] = None) -> np.ndarray:
        """
        Unitary of this kind, dimension 2**arity.

        Args:
            theta: Rotation angle in radians, required for RZ only

        Returns:
            Complex matrix; for multi-qubit kinds the first listed qubit is the
            most significant index of the matrix
        """
        if self is GateKind.RZ:
            if theta is None:
                raise ValueError("rz requires an angle")
            return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
        return _FIXED_MATRICES[self.value]

    @classmethod
    def from_name(cls, name: str) -> 'GateKind':
        for kind in cls:
            if kind.value == name:
                return kind
        available = [kind.value for kind in cls]
        raise ValueError(f"Unknown gate '{name}'. Available: {available}")


_ADJOINT = {
    GateKind.S: GateKind.SDG,
    GateKind.SDG: GateKind.S,
    GateKind.T: GateKind.TDG,
    GateKind.TDG: GateKind.T,
    GateKind.SX: GateKind.SXDG,
    GateKind.SXDG: GateKind.SX,
}

CLASSICAL_KINDS = frozenset(
    {GateKind.X, GateKind.CX, GateKind.SWAP, GateKind.CCX, GateKind.C3X}
)


@dataclass(frozen=True)
class Gate:
    """A gate application. Controls come first, the target last."""
    kind: GateKind
    qubits: Tuple[int, ...]
    theta: Optional[float] = None

    def matrix(self) -> np.ndarray:
        return self.kind.matrix(self.theta)

    def inverse(self) -> 'Gate':
        if self.kind is GateKind.RZ:
            assert self.theta is not None
            return Gate(GateKind.RZ, self.qubits, -self.theta)
        return Gate(self.kind.adjoint, self.qubits)

    def __str__(self) -> str:
        name = self.kind.value
        if self.theta is not None:
            name = f"{name}({self.theta!r})"
        return f"{name} " + ",".join(f"q{q}" for q in self.qubits)


@dataclass(frozen=True)
class Barrier:
    """Compilation fence over a set of qubits, optionally tagged."""
    qubits: Tuple[int, ...]
    tag: Optional[str] = None

    def __str__(self) -> str:
        label = f" [{self.tag}]" if self.tag else ""
        return "barrier " + ",".join(f"q{q}" for q in self.qubits) + label


@dataclass(frozen=True)
class Measure:
    qubit: int
    clbit: int

    def __str__(self) -> str:
        return f"measure q{self.qubit} -> c{self.clbit}"


Instruction = Union[Gate, Barrier, Measure]


def make_gate(name: str, *qubits: int, theta: Optional[float] = None) -> Gate:
    """Shorthand: make_gate("cx", 0, 1)."""
    return Gate(GateKind.from_name(name), tuple(qubits), theta)


@dataclass(frozen=True)
class Circuit:
    """
    Ordered instruction sequence over n_qubits qubits and n_clbits clbits.
    Equality is structural: metadata does not take part in it.
    """
    n_qubits: int
    n_clbits: int = 0
    instructions: Tuple[Instruction, ...] = ()
    metadata: Dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_instructions(
        cls,
        n_qubits: int,
        instructions: List[Instruction],
        n_clbits: Optional[int] = None,
        **metadata: str,
    ) -> 'Circuit':
        """Build a circuit; n_clbits defaults to one past the highest measured clbit."""
        if n_clbits is None:
            clbits = [i.clbit for i in instructions if isinstance(i, Measure)]
            n_clbits = max(clbits) + 1 if clbits else 0
        return cls(n_qubits, n_clbits, tuple(instructions), dict(metadata))

    @property
    def gates(self) -> List[Gate]:
        return [i for i in self.instructions if isinstance(i, Gate)]

    @property
    def measures(self) -> List[Measure]:
        return [i for i in self.instructions if isinstance(i, Measure)]

    @property
    def barriers(self) -> List[Barrier]:
        return [i for i in self.instructions if isinstance(i, Barrier)]

    @property
    def name(self) -> str:
        return self.metadata.get("name", "")

    def gate_count(self) -> int:
        return sum(1 for i in self.instructions if isinstance(i, Gate))

    def gate_kinds(self) -> set[GateKind]:
        return {g.kind for g in self.gates}

    def count_kind(self, kind: GateKind) -> int:
        return sum(1 for g in self.gates if g.kind is kind)

    def measured_qubits(self) -> List[int]:
        return [m.qubit for m in self.measures]

    def is_classical(self) -> bool:
        return all(g.kind.is_classical for g in self.gates)

    def without_measures(self) -> 'Circuit':
        kept = tuple(i for i in self.instructions if not isinstance(i, Measure))
        return replace(self, instructions=kept, metadata=dict(self.metadata))

    def with_instructions(self, instructions: List[Instruction]) -> 'Circuit':
        return replace(self, instructions=tuple(instructions), metadata=dict(self.metadata))

    def with_metadata(self, **metadata: str) -> 'Circuit':
        return replace(self, metadata={**self.metadata, **metadata})

    def measure_all(self, qubits: Optional[List[int]] = None) -> 'Circuit':
        """Append measure q -> c for each listed qubit, clbits numbered from 0."""
        targets = list(range(self.n_qubits)) if qubits is None else list(qubits)
        measures = [Measure(q, c) for c, q in enumerate(targets)]
        return replace(
            self,
            n_clbits=max(self.n_clbits, len(targets)),
            instructions=self.instructions + tuple(measures),
            metadata=dict(self.metadata),
        )

    def __str__(self) -> str:
        header = f"Circuit({self.n_qubits} qubits, {self.n_clbits} clbits)"
        return "\n".join([header] + [f"  {i}" for i in self.instructions])


@dataclass(frozen=True)
class Violation:
    index: int
    message: str

    def __str__(self) -> str:
        return f"{self.message} at instruction {self.index}"


def validate(c: Circuit) -> List[Violation]:
    """
    Collect every structural problem in a circuit.

    Returns:
        Violations in instruction order; an empty list means the circuit is valid
    """
    violations: List[Violation] = []
    measured: Dict[int, int] = {}
    written: set[int] = set()

    def check_qubits(index: int, qubits: Tuple[int, ...]) -> None:
        if len(set(qubits)) != len(qubits):
            violations.append(Violation(index, "duplicate qubit"))
        if any(q < 0 or q >= c.n_qubits for q in qubits):
            violations.append(Violation(index, "qubit index out of range"))

    for index, inst in enumerate(c.instructions):
        if isinstance(inst, Gate):
            if len(inst.qubits) != inst.kind.arity:
                violations.append(Violation(index, f"{inst.kind.value} expects {inst.kind.arity} qubits"))
            check_qubits(index, inst.qubits)
            if inst.kind.is_parametric and inst.theta is None:
                violations.append(Violation(index, "missing rotation angle"))
            if not inst.kind.is_parametric and inst.theta is not None:
                violations.append(Violation(index, f"{inst.kind.value} takes no angle"))
            for q in inst.qubits:
                if q in measured:
                    violations.append(Violation(index, f"gate after measurement of qubit {q}"))
        elif isinstance(inst, Barrier):
            if not inst.qubits:
                violations.append(Violation(index, "empty barrier"))
            check_qubits(index, inst.qubits)
        else:
            check_qubits(index, (inst.qubit,))
            if inst.clbit < 0 or inst.clbit >= c.n_clbits:
                violations.append(Violation(index, "clbit index out of range"))
            if inst.clbit in written:
                violations.append(Violation(index, f"clbit {inst.clbit} written twice"))
            written.add(inst.clbit)
            measured[inst.qubit] = index
    return violations


def check(c: Circuit) -> Circuit:
    """Return c unchanged, or raise CircuitValidationError listing its violations."""
    violations = validate(c)
    if violations:
        raise CircuitValidationError(violations)
    return c


def inverse(c: Circuit) -> Circuit:
    """Adjoint every gate and reverse the order; barriers keep their mirrored position."""
    if c.measures:
        raise MeasurementPresent("Cannot invert a circuit that contains measurements")
    reversed_ops: List[Instruction] = []
    for inst in reversed(c.instructions):
        reversed_ops.append(inst.inverse() if isinstance(inst, Gate) else inst)
    return c.with_instructions(reversed_ops)


def concat(a: Circuit, b: Circuit) -> Circuit:
    """Instructions of a followed by b. Metadata is merged, b wins on conflicts."""
    if a.n_qubits != b.n_qubits:
        raise QubitCountMismatch(f"Cannot concatenate {a.n_qubits}-qubit and {b.n_qubits}-qubit circuits")
    if a.measures:
        raise MeasurementPresent("Left operand of concat must not contain measurements")
    return Circuit(
        n_qubits=a.n_qubits,
        n_clbits=max(a.n_clbits, b.n_clbits),
        instructions=a.instructions + b.instructions,
        metadata={**a.metadata, **b.metadata},
    )


def split_at_midpoint(c: Circuit) -> Tuple[Circuit, Circuit, int]:
    """
    Split after the first floor(gate_count/2) gates.

    Barriers sitting right at the split go to the right half, and so do all
    measurements.

    Returns:
        (left, right, split_index) where split_index is the instruction index at
        which right begins
    """
    total = c.gate_count()
    if total < 2:
        raise TooFewGates(f"Need at least 2 gates to split, circuit has {total}")
    wanted = total // 2
    seen = 0
    split_index = 0
    for index, inst in enumerate(c.instructions):
        if isinstance(inst, Gate):
            seen += 1
            if seen == wanted:
                split_index = index + 1
                break
    left = Circuit(c.n_qubits, 0, c.instructions[:split_index], dict(c.metadata))
    right = Circuit(c.n_qubits, c.n_clbits, c.instructions[split_index:], dict(c.metadata))
    return left, right, split_index
