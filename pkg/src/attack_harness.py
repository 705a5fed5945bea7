"""
Pruning attack against an obfuscated circuit.

The adversary does not know the block, only that something was inserted. It removes
gates next to the tagged barrier (or next to a circuit edge), simulates every pruned
candidate, and throws away candidates whose output is too close to the obfuscated one.
Ground-truth labels come from a noiseless comparison with the real original and are
never used by the pruning rule itself.
"""
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import List, Optional, Sequence
import csv
import json
import logging
import math
import os

from src.circuit_ir import Barrier, Circuit, Gate, Instruction
from src.metrics import tvd
from src.schemas import AttackReportPayload, CandidatePayload
from src.simulator import NoiseModel, derive_seed, exact_distribution, sample

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
MAX_SUBSET_GATES = 16


class DomainError(ValueError):
    pass


class NoBarrier(ValueError):
    pass


class Scenario(Enum):
    MIDDLE_BARRIER = "middle-barrier"
    UNKNOWN_EDGE = "unknown-edge"
    UNKNOWN_COUNT = "unknown-count"

    @classmethod
    def parse(cls, text: str) -> 'Scenario':
        try:
            return cls(text.lower().replace("_", "-"))
        except ValueError:
            raise ValueError(
                f"Unknown scenario '{text}'. Available: {[s.value for s in cls]}"
            ) from None


@dataclass
class PruneCandidate:
    removed_side: str          # left, right, front, back or subset
    removed_count: int
    pruned: Circuit
    removed_positions: List[int] = field(default_factory=list)
    tvd_vs_obfuscated: Optional[float] = None
    discarded: bool = False
    functionally_correct: Optional[bool] = None

    def to_payload(self) -> CandidatePayload:
        return CandidatePayload(
            removed_side=self.removed_side,
            removed_count=self.removed_count,
            gate_count=self.pruned.gate_count(),
            tvd_vs_obfuscated=self.tvd_vs_obfuscated if self.tvd_vs_obfuscated is not None else float("nan"),
            discarded=self.discarded,
            functionally_correct=bool(self.functionally_correct),
        )


@dataclass
class AttackReport:
    scenario: Scenario
    n_total_gates: int
    threshold: float
    candidates: List[PruneCandidate]
    choices_before: int
    choices_after: int

    @property
    def survivors(self) -> List[PruneCandidate]:
        return [c for c in self.candidates if not c.discarded]

    @property
    def correct_survivors(self) -> int:
        return sum(1 for c in self.survivors if c.functionally_correct)

    def to_payload(self) -> AttackReportPayload:
        return AttackReportPayload(
            scenario=self.scenario.value,
            n_total_gates=self.n_total_gates,
            threshold=self.threshold,
            choices_before=self.choices_before,
            choices_after=self.choices_after,
            candidates=[c.to_payload() for c in self.candidates],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_payload().to_dict(), indent=2) + "\n"  # type: ignore[attr-defined]

    def save_to_file(self, filepath: str) -> None:
        os.makedirs(os.path.dirname(filepath) or ".", exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(self.to_json())


def candidate_count(n: int, scenario: Scenario) -> int:
    """How many circuits the adversary has to consider for n total gates."""
    if scenario is Scenario.MIDDLE_BARRIER:
        if n < 3:
            raise DomainError(f"Middle-barrier pruning needs at least 3 gates, got {n}")
        return n - 2
    if n < 2:
        raise DomainError(f"Pruning needs at least 2 gates, got {n}")
    if scenario is Scenario.UNKNOWN_EDGE:
        return 2 * (n - 1)
    return sum(math.comb(n, k) for k in range(1, n))


def _gate_positions(c: Circuit) -> List[int]:
    return [i for i, inst in enumerate(c.instructions) if isinstance(inst, Gate)]


def _without(c: Circuit, positions: Sequence[int]) -> Circuit:
    dropped = set(positions)
    kept: List[Instruction] = [
        inst for i, inst in enumerate(c.instructions) if i not in dropped
    ]
    return c.with_instructions(kept)


def _tagged_barrier(c: Circuit, tag: Optional[str]) -> int:
    for i, inst in enumerate(c.instructions):
        if isinstance(inst, Barrier) and inst.tag is not None and (tag is None or inst.tag == tag):
            return i
    raise NoBarrier("Circuit has no tagged barrier to prune around")


def enumerate_candidates(
    obf: Circuit, scenario: Scenario, barrier_tag: Optional[str] = None
) -> List[PruneCandidate]:
    """
    Every pruned circuit of the scenario, in a fixed order.

    Middle-barrier removes the k gates closest to the barrier on one side, leaving at
    least one gate there. Unknown-edge does the same from the front and from the back of
    the whole circuit. Unknown-count removes every nonempty proper subset of gates.
    """
    positions = _gate_positions(obf)
    n = len(positions)
    candidates: List[PruneCandidate] = []

    if scenario is Scenario.MIDDLE_BARRIER:
        candidate_count(n, scenario)
        barrier = _tagged_barrier(obf, barrier_tag)
        left = [p for p in positions if p < barrier]
        right = [p for p in positions if p > barrier]
        for k in range(1, len(left)):
            removed = left[-k:]
            candidates.append(PruneCandidate("left", k, _without(obf, removed), removed))
        for k in range(1, len(right)):
            removed = right[:k]
            candidates.append(PruneCandidate("right", k, _without(obf, removed), removed))
    elif scenario is Scenario.UNKNOWN_EDGE:
        candidate_count(n, scenario)
        for k in range(1, n):
            removed = positions[:k]
            candidates.append(PruneCandidate("front", k, _without(obf, removed), removed))
        for k in range(1, n):
            removed = positions[-k:]
            candidates.append(PruneCandidate("back", k, _without(obf, removed), removed))
    else:
        candidate_count(n, scenario)
        if n > MAX_SUBSET_GATES:
            raise DomainError(
                f"Subset enumeration is limited to {MAX_SUBSET_GATES} gates, circuit has {n}"
            )
        for k in range(1, n):
            for subset in combinations(positions, k):
                removed = list(subset)
                candidates.append(PruneCandidate("subset", k, _without(obf, removed), removed))
    return candidates


def matches_original(candidate: PruneCandidate, original: Circuit) -> bool:
    """Same gate sequence as the original, barriers and measurements aside."""
    return candidate.pruned.gates == original.gates


def _same_output(a: Circuit, b: Circuit, input_bits: Optional[str], tol: float = 1e-9) -> bool:
    da, db = exact_distribution(a, input_bits), exact_distribution(b, input_bits)
    keys = set(da) | set(db)
    return all(abs(da.get(k, 0.0) - db.get(k, 0.0)) <= tol for k in keys)


def run_attack(
    obf: Circuit,
    scenario: Scenario = Scenario.MIDDLE_BARRIER,
    input_bits: Optional[str] = None,
    shots: int = 10000,
    noise: Optional[NoiseModel] = None,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    original: Optional[Circuit] = None,
    barrier_tag: Optional[str] = None,
) -> AttackReport:
    """
    Prune, simulate and filter.

    Args:
        obf: The obfuscated circuit, with measurements
        scenario: What the adversary knows about the insertion
        input_bits: Basis input used for every simulation
        shots: Shots per simulation
        noise: Noise model applied to every simulation
        threshold: Candidates with TVD below this are discarded
        seed: Master seed
        original: Ground truth for labelling candidates; unused by the pruning rule

    Returns:
        AttackReport with every candidate scored
    """
    candidates = enumerate_candidates(obf, scenario, barrier_tag)
    reference = sample(obf, input_bits, shots, noise, derive_seed(seed, "attack", "obfuscated"))
    for index, candidate in enumerate(candidates):
        seed_i = derive_seed(seed, "attack", "candidate", str(index))
        observed = sample(candidate.pruned, input_bits, shots, noise, seed_i)
        candidate.tvd_vs_obfuscated = tvd(reference, observed)
        candidate.discarded = candidate.tvd_vs_obfuscated < threshold
        if original is not None:
            candidate.functionally_correct = _same_output(candidate.pruned, original, input_bits)

    n_total = len(_gate_positions(obf))
    report = AttackReport(
        scenario=scenario,
        n_total_gates=n_total,
        threshold=threshold,
        candidates=candidates,
        choices_before=len(candidates),
        choices_after=sum(1 for c in candidates if not c.discarded),
    )
    logger.info(
        "Attack (%s): %d -> %d candidates at threshold %.2f",
        scenario.value, report.choices_before, report.choices_after, threshold,
    )
    return report


def write_attack_csv(report: AttackReport, path: str) -> str:
    """One row per candidate: k, side, tvd, correct, discarded."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "side", "tvd", "correct", "discarded"])
        for c in report.candidates:
            correct = "" if c.functionally_correct is None else (
                "correct" if c.functionally_correct else "incorrect"
            )
            writer.writerow([
                c.removed_count,
                c.removed_side,
                "" if c.tvd_vs_obfuscated is None else repr(c.tvd_vs_obfuscated),
                correct,
                "true" if c.discarded else "false",
            ])
    return path
