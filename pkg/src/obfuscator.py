"""
Random reversible block generation and insertion.

The owner of a circuit draws a short random block, inserts it at the front, the middle
or the back, and keeps an ObfuscationRecord describing exactly what was inserted. The
record is the secret needed to undo the damage after compilation.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, List, Optional, Tuple
import hashlib
import json
import logging
import math

import numpy as np

from src.circuit_ir import (
    Barrier,
    Circuit,
    Gate,
    GateKind,
    Instruction,
    Measure,
    split_at_midpoint,
)
from src.qasm_io import circuit_hash, emit, parse
from src.schemas import ObfuscationPayload
from src.simulator import derive_rng, derive_seed

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_KINDS = frozenset({GateKind.X, GateKind.CX, GateKind.C3X})
# widest borrowed kind after the flip in a refined block
REFINED_FILLER_ARITY = 2


class InfeasibleArity(ValueError):
    pass


class QubitMismatch(ValueError):
    pass


class InvalidBlockParams(ValueError):
    pass


class Location(Enum):
    FRONT = "front"
    MIDDLE = "middle"
    BACK = "back"


class BarrierSide(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class InsertionLocation:
    """Where the block goes. Middle insertions also say which side of the marker barrier."""
    location: Location
    side: Optional[BarrierSide] = None

    def __post_init__(self) -> None:
        if self.location is Location.MIDDLE and self.side is None:
            object.__setattr__(self, "side", BarrierSide.LEFT)
        if self.location is not Location.MIDDLE and self.side is not None:
            raise ValueError("Only middle insertion carries a barrier side")

    @classmethod
    def front(cls) -> 'InsertionLocation':
        return cls(Location.FRONT)

    @classmethod
    def back(cls) -> 'InsertionLocation':
        return cls(Location.BACK)

    @classmethod
    def middle(cls, side: str = "left") -> 'InsertionLocation':
        return cls(Location.MIDDLE, BarrierSide(side))

    @classmethod
    def parse(cls, text: str) -> 'InsertionLocation':
        """Accepts front, back, middle, middle-left, middle-right."""
        name, _, side = text.lower().partition("-")
        try:
            location = Location(name)
        except ValueError:
            available = ["front", "middle", "middle-left", "middle-right", "back"]
            raise ValueError(f"Unknown location '{text}'. Available: {available}") from None
        if location is Location.MIDDLE:
            return cls.middle(side or "left")
        if side:
            raise ValueError(f"Location '{name}' takes no side")
        return cls(location)

    def __str__(self) -> str:
        if self.side is not None:
            return f"{self.location.value}-{self.side.value}"
        return self.location.value


@dataclass(frozen=True)
class RandomBlockParams:
    n_gates: int = 3
    allowed_kinds: Optional[FrozenSet[GateKind]] = None
    qubit_pool: Optional[Tuple[int, ...]] = None
    refined: bool = False
    seed: int = 0
    measured_qubits: Tuple[int, ...] = ()

    def resolved_for(self, original: Circuit) -> 'RandomBlockParams':
        """Fill the defaults that depend on the target circuit."""
        kinds = self.allowed_kinds
        pool = self.qubit_pool if self.qubit_pool is not None else tuple(range(original.n_qubits))
        if kinds is None:
            # borrowed kinds must fit beside the refined qubit
            width = len(pool) - 1 if self.refined and self.n_gates > 1 else len(pool)
            fallback = frozenset(k for k in DEFAULT_BLOCK_KINDS if k.arity <= width)
            if self.refined:
                width = min(width, REFINED_FILLER_ARITY)
                fallback = frozenset({GateKind.X})
            kinds = frozenset(k for k in original.gate_kinds() if k.arity <= width)
            kinds = kinds or fallback
        measured = self.measured_qubits or tuple(sorted(set(original.measured_qubits())))
        return RandomBlockParams(self.n_gates, kinds, pool, self.refined, self.seed, measured)

    def validate(self) -> None:
        kinds = self.allowed_kinds if self.allowed_kinds is not None else DEFAULT_BLOCK_KINDS
        pool = self.qubit_pool or ()
        if self.n_gates < 1:
            raise InvalidBlockParams(f"n_gates must be >= 1, got {self.n_gates}")
        if not kinds:
            raise InvalidBlockParams("allowed_kinds must not be empty")
        if self.refined and not self.measured_qubits:
            raise InvalidBlockParams("A refined block needs at least one measured qubit")
        available = len(pool)
        if self.refined and self.n_gates > 1:
            available -= 1
        too_wide = sorted(k.value for k in kinds if k.arity > available)
        if too_wide:
            raise InfeasibleArity(
                f"Kinds {too_wide} need more qubits than the {available} available"
            )


def _random_angle(rng: np.random.Generator) -> float:
    k = int(rng.integers(1, 8))
    return k * math.pi / 4


def generate_block(params: RandomBlockParams, n_qubits: Optional[int] = None) -> Circuit:
    """
    Draw a random block of exactly params.n_gates gates.

    Kinds are drawn uniformly from allowed_kinds and qubit tuples uniformly from the
    pool without repeats inside a gate. A refined block starts with X on one measured
    qubit and keeps every later gate off that qubit.
    """
    pool = params.qubit_pool
    if pool is None:
        if n_qubits is None:
            raise InvalidBlockParams("Give a qubit_pool or n_qubits")
        pool = tuple(range(n_qubits))
    params = RandomBlockParams(
        params.n_gates,
        params.allowed_kinds if params.allowed_kinds is not None else DEFAULT_BLOCK_KINDS,
        tuple(pool),
        params.refined,
        params.seed,
        params.measured_qubits,
    )
    params.validate()
    assert params.allowed_kinds is not None
    width = n_qubits if n_qubits is not None else max(pool + params.measured_qubits) + 1

    rng = derive_rng(params.seed, "block")
    kinds = sorted(params.allowed_kinds, key=lambda k: k.value)
    gates: List[Instruction] = []
    candidates = list(pool)
    if params.refined:
        flipped = int(rng.choice(sorted(params.measured_qubits)))
        gates.append(Gate(GateKind.X, (flipped,)))
        candidates = [q for q in pool if q != flipped]
    while len(gates) < params.n_gates:
        kind = kinds[int(rng.integers(len(kinds)))]
        chosen = rng.choice(candidates, size=kind.arity, replace=False)
        theta = _random_angle(rng) if kind.is_parametric else None
        gates.append(Gate(kind, tuple(int(q) for q in chosen), theta))
    return Circuit(width, 0, tuple(gates), {"name": "random_block"})


@dataclass(frozen=True)
class ObfuscationRecord:
    block: Circuit
    location: InsertionLocation
    insertion_index: int
    barrier_tag: Optional[str]
    seed: int
    original_gate_count: int
    circuit_hash: str = ""
    digest: str = field(default="", compare=False)

    def compute_digest(self) -> str:
        fields = {
            "block": emit(self.block),
            "location": str(self.location),
            "insertion_index": self.insertion_index,
            "barrier_tag": self.barrier_tag,
            "seed": self.seed,
            "original_gate_count": self.original_gate_count,
            "circuit_hash": self.circuit_hash,
        }
        canonical = json.dumps(fields, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def sealed(self) -> 'ObfuscationRecord':
        return ObfuscationRecord(
            self.block, self.location, self.insertion_index, self.barrier_tag,
            self.seed, self.original_gate_count, self.circuit_hash, self.compute_digest(),
        )

    def is_intact(self) -> bool:
        return self.digest == self.compute_digest()

    def to_payload(self) -> ObfuscationPayload:
        return ObfuscationPayload(
            block_qasm=emit(self.block),
            location=self.location.location.value,
            barrier_side=self.location.side.value if self.location.side else None,
            insertion_index=self.insertion_index,
            barrier_tag=self.barrier_tag,
            seed=self.seed,
            original_gate_count=self.original_gate_count,
            circuit_hash=self.circuit_hash,
            digest=self.digest,
        )

    @classmethod
    def from_payload(cls, payload: ObfuscationPayload) -> 'ObfuscationRecord':
        side = BarrierSide(payload.barrier_side) if payload.barrier_side else None
        return cls(
            block=parse(payload.block_qasm),
            location=InsertionLocation(Location(payload.location), side),
            insertion_index=payload.insertion_index,
            barrier_tag=payload.barrier_tag,
            seed=payload.seed,
            original_gate_count=payload.original_gate_count,
            circuit_hash=payload.circuit_hash,
            digest=payload.digest,
        )


def _check_block(original: Circuit, block: Circuit) -> None:
    for inst in block.instructions:
        if isinstance(inst, Measure):
            raise ValueError("A random block cannot measure")
        if any(q >= original.n_qubits for q in inst.qubits):
            raise QubitMismatch(
                f"Block gate {inst} does not fit a {original.n_qubits}-qubit circuit"
            )


def insert(
    original: Circuit,
    block: Circuit,
    location: InsertionLocation,
    barrier_tag: str = "j",
    seed: int = 0,
) -> Tuple[Circuit, ObfuscationRecord]:
    """
    Place block into original.

    Front puts it before everything, back after the last gate but before the
    measurements. Middle splits at the gate midpoint and adds one full-width barrier
    tagged barrier_tag, with the block on the recorded side of it.
    """
    _check_block(original, block)
    body: List[Instruction] = list(block.instructions)
    ops = list(original.instructions)
    tag: Optional[str] = None

    if location.location is Location.FRONT:
        index = 0
        instructions = body + ops
    elif location.location is Location.BACK:
        index = next((i for i, inst in enumerate(ops) if isinstance(inst, Measure)), len(ops))
        instructions = ops[:index] + body + ops[index:]
    else:
        _, _, split = split_at_midpoint(original)
        tag = barrier_tag
        marker: List[Instruction] = [Barrier(tuple(range(original.n_qubits)), tag)]
        if location.side is BarrierSide.RIGHT:
            index = split + 1
            instructions = ops[:split] + marker + body + ops[split:]
        else:
            index = split
            instructions = ops[:split] + body + marker + ops[split:]

    obfuscated = original.with_instructions(instructions)
    record = ObfuscationRecord(
        block=block,
        location=location,
        insertion_index=index,
        barrier_tag=tag,
        seed=seed,
        original_gate_count=original.gate_count(),
        circuit_hash=circuit_hash(obfuscated),
    ).sealed()
    return obfuscated, record


def stealth_warnings(original: Circuit, block: Circuit, refined: bool = False) -> List[str]:
    """Clues the block would leave for someone inspecting the obfuscated circuit."""
    messages = []
    foreign = sorted(k.value for k in block.gate_kinds() - original.gate_kinds())
    if foreign:
        messages.append(f"block uses gate kinds absent from the original: {foreign}")
    if refined and GateKind.X not in original.gate_kinds():
        messages.append("refined block adds an X gate to a circuit that has none")
    return messages


def barrier_tag_for(seed: int) -> str:
    return f"j{derive_seed(seed, 'barrier-tag') & 0xFFFF:04x}"


def obfuscate(
    original: Circuit,
    params: RandomBlockParams,
    location: InsertionLocation,
) -> Tuple[Circuit, ObfuscationRecord]:
    """generate_block followed by insert, with the stealth rule checked."""
    resolved = params.resolved_for(original)
    block = generate_block(resolved, original.n_qubits)
    for message in stealth_warnings(original, block, resolved.refined):
        logger.warning("Stealth: %s", message)
    obfuscated, record = insert(original, block, location, barrier_tag_for(params.seed), params.seed)
    logger.info(
        "Obfuscated '%s': %d-gate block at %s (%d -> %d gates)",
        original.name, block.gate_count(), location,
        original.gate_count(), obfuscated.gate_count(),
    )
    return obfuscated, record


def replay(original: Circuit, record: ObfuscationRecord) -> Circuit:
    """Rebuild the obfuscated circuit from its record."""
    obfuscated, _ = insert(
        original, record.block, record.location, record.barrier_tag or "j", record.seed
    )
    return obfuscated
