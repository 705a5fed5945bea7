"""
Centralized serialized schemas for qlock.
Everything that leaves the process as JSON (sidecar records, compile and stitch
reports, attack reports, experiment rows) is declared here.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from dataclasses_json import dataclass_json

SCHEMA_VERSION = 1
TOOLKIT_VERSION = "qlock-1.0.0"


@dataclass_json
@dataclass
class ObfuscationPayload:
    """Serialized ObfuscationRecord. The block travels as circuit text."""
    block_qasm: str
    location: str                   # "front", "middle" or "back"
    barrier_side: Optional[str]     # "left" or "right", middle only
    insertion_index: int
    barrier_tag: Optional[str]
    seed: int
    original_gate_count: int
    circuit_hash: str               # sha256 of the emitted obfuscated circuit
    digest: str                     # sha256 over all fields above


@dataclass_json
@dataclass
class SidecarRecord:
    """The secret kept by the circuit owner; never sent to the compiler."""
    v: int
    toolkit: str
    record: ObfuscationPayload
    initial_layout: Optional[List[int]] = None
    final_layout: Optional[List[int]] = None
    seeds: Dict[str, int] = field(default_factory=dict)


@dataclass_json
@dataclass
class PassLogEntry:
    name: str
    before: int
    after: int


@dataclass_json
@dataclass
class CompileReport:
    map_name: str
    n_physical: int
    edges: List[List[int]]
    initial_layout: List[int]
    final_layout: List[int]
    barrier_layouts: List[List[int]]
    pass_log: List[PassLogEntry]
    gate_count: int
    cx_count: int
    source_hash: str


@dataclass_json
@dataclass
class StitchReport:
    """What the stitching step did at the junction."""
    mode: str
    location: str
    junction_swaps: int
    inverse_gate_count: int
    gate_count_obfuscated: int
    gate_count_restored: int
    cx_count_obfuscated: int
    cx_count_restored: int
    initial_layout: List[int]
    final_layout: List[int]
    note: str = ""


@dataclass_json
@dataclass
class CandidatePayload:
    removed_side: str
    removed_count: int
    gate_count: int
    tvd_vs_obfuscated: float
    discarded: bool
    functionally_correct: bool


@dataclass_json
@dataclass
class AttackReportPayload:
    scenario: str
    n_total_gates: int
    threshold: float
    choices_before: int
    choices_after: int
    candidates: List[CandidatePayload]


@dataclass_json
@dataclass
class ExperimentRow:
    benchmark: str
    location: str
    refined: bool
    seed: int
    n_block_gates: int
    tvd: float
    dfc: float
    fidelity_orig: Optional[float]
    fidelity_deobf: Optional[float]

    CSV_FIELDS = (
        "benchmark", "location", "refined", "seed", "n_block_gates",
        "tvd", "dfc", "fidelity_orig", "fidelity_deobf",
    )

    def csv_values(self) -> List[str]:
        """Stable text for each CSV column; floats use repr so reruns match byte for byte."""
        def fmt(value: object) -> str:
            if value is None:
                return ""
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, float):
                return repr(value)
            return str(value)

        return [fmt(getattr(self, name)) for name in self.CSV_FIELDS]
