"""
Deterministic stand-in for an untrusted quantum compiler.

Pipeline, in order:
    optimize_virtual -> decompose -> optimize_decomposed -> place -> route
        -> translate_basis -> optimize_physical
The two later optimization passes run optimize_deep, which also cancels across
commuting gates and folds phase rotations; with deep_optimization off the decomposed
pass is skipped and the physical one falls back to optimize_virtual.
Barriers are fences for optimization and survive every stage. Layouts always cover the
whole physical register: physical qubits with no circuit qubit carry ancilla virtual
indices n_virtual..n_physical-1.
"""
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple
import itertools
import json
import logging
import math

import networkx as nx

from src.circuit_ir import Barrier, Circuit, Gate, GateKind, Instruction, Measure
from src.qasm_io import circuit_hash
from src.schemas import CompileReport, PassLogEntry

logger = logging.getLogger(__name__)

VALENCIA_EDGES = [(0, 1), (1, 2), (1, 3), (3, 4)]
BASIS_KINDS = frozenset({GateKind.I, GateKind.RZ, GateKind.SX, GateKind.X, GateKind.CX})


class TooManyVirtualQubits(ValueError):
    pass


class DisconnectedMap(ValueError):
    pass


class UnexpectedGate(ValueError):
    pass


class InvalidLayout(ValueError):
    pass


@dataclass
class CouplingMap:
    """Undirected graph of physical qubit pairs that support 2-qubit gates."""
    n_physical: int
    edges: List[Tuple[int, int]]
    name: str = "custom"
    graph: nx.Graph = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        normalized = sorted({(min(a, b), max(a, b)) for a, b in self.edges})
        for a, b in normalized:
            if a == b or a < 0 or b >= self.n_physical:
                raise ValueError(f"Edge ({a}, {b}) invalid for {self.n_physical} physical qubits")
        self.edges = normalized
        self.graph = nx.Graph()
        self.graph.add_nodes_from(range(self.n_physical))
        self.graph.add_edges_from(normalized)
        self._paths: Dict[Tuple[int, int], List[int]] = {}
        self._distances: Optional[Dict[int, Dict[int, int]]] = None

    @classmethod
    def valencia(cls) -> 'CouplingMap':
        return cls(5, list(VALENCIA_EDGES), "valencia")

    @classmethod
    def line(cls, n: int) -> 'CouplingMap':
        return cls(n, [(i, i + 1) for i in range(n - 1)], f"line{n}")

    @classmethod
    def from_dict(cls, data: Dict[str, object], name: str = "custom") -> 'CouplingMap':
        edges = [(int(a), int(b)) for a, b in data["edges"]]  # type: ignore[attr-defined]
        return cls(int(data["n"]), edges, name)  # type: ignore[call-overload]

    @classmethod
    def from_file(cls, path: str) -> 'CouplingMap':
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f), name=path)

    @classmethod
    def resolve(cls, spec: Optional[str], n_virtual: int) -> 'CouplingMap':
        """
        Map by name or JSON path. "auto" (or None) picks valencia for up to 5 qubits
        and a line of matching size beyond that.
        """
        if spec in (None, "", "auto"):
            return cls.valencia() if n_virtual <= 5 else cls.line(n_virtual)
        if spec == "valencia":
            return cls.valencia()
        if spec == "line":
            return cls.line(max(n_virtual, 2))
        return cls.from_file(spec)

    def to_dict(self) -> Dict[str, object]:
        return {"n": self.n_physical, "edges": [list(e) for e in self.edges]}

    def is_connected(self) -> bool:
        return self.n_physical <= 1 or nx.is_connected(self.graph)

    def adjacent(self, a: int, b: int) -> bool:
        return bool(self.graph.has_edge(a, b))

    def degree(self, p: int) -> int:
        return int(self.graph.degree[p])

    def shortest_path(self, a: int, b: int) -> List[int]:
        """Shortest path, ties broken by the lexicographically smallest node sequence."""
        key = (a, b)
        if key not in self._paths:
            try:
                self._paths[key] = min(nx.all_shortest_paths(self.graph, a, b))
            except nx.NetworkXNoPath:
                raise DisconnectedMap(
                    f"No path between physical qubits {a} and {b} in map '{self.name}'"
                ) from None
        return self._paths[key]

    def distances(self) -> Dict[int, Dict[int, int]]:
        """Hop counts between every pair of connected physical qubits."""
        if self._distances is None:
            self._distances = dict(nx.all_pairs_shortest_path_length(self.graph))
        return self._distances

    def distance(self, a: int, b: int) -> int:
        try:
            return self.distances()[a][b]
        except KeyError:
            raise DisconnectedMap(
                f"No path between physical qubits {a} and {b} in map '{self.name}'"
            ) from None


@dataclass(frozen=True)
class Layout:
    """Physical -> virtual bijection over the whole physical register."""
    p2v: Tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.p2v) != list(range(len(self.p2v))):
            raise InvalidLayout(f"Layout {list(self.p2v)} is not a permutation")

    @classmethod
    def trivial(cls, n_physical: int) -> 'Layout':
        return cls(tuple(range(n_physical)))

    @classmethod
    def from_v2p(cls, v2p: Sequence[int]) -> 'Layout':
        p2v = [0] * len(v2p)
        for v, p in enumerate(v2p):
            p2v[p] = v
        return cls(tuple(p2v))

    @property
    def v2p(self) -> Tuple[int, ...]:
        v2p = [0] * len(self.p2v)
        for p, v in enumerate(self.p2v):
            v2p[v] = p
        return tuple(v2p)

    @property
    def n_physical(self) -> int:
        return len(self.p2v)

    def swap_physical(self, a: int, b: int) -> 'Layout':
        p2v = list(self.p2v)
        p2v[a], p2v[b] = p2v[b], p2v[a]
        return Layout(tuple(p2v))

    def physical_input(self, bits: str) -> str:
        """Spread a virtual input string over the physical register; ancillas read 0."""
        return "".join(
            bits[v] if v < len(bits) else "0" for v in self.p2v
        )

    def to_list(self) -> List[int]:
        return list(self.p2v)


@dataclass
class CompiledCircuit:
    circuit: Circuit
    initial_layout: Layout
    final_layout: Layout
    pass_log: List[PassLogEntry]
    coupling_map: CouplingMap
    barrier_layouts: List[Layout] = field(default_factory=list)

    def cx_count(self) -> int:
        return self.circuit.count_kind(GateKind.CX)

    def report(self) -> CompileReport:
        return CompileReport(
            map_name=self.coupling_map.name,
            n_physical=self.coupling_map.n_physical,
            edges=[list(e) for e in self.coupling_map.edges],
            initial_layout=self.initial_layout.to_list(),
            final_layout=self.final_layout.to_list(),
            barrier_layouts=[layout.to_list() for layout in self.barrier_layouts],
            pass_log=list(self.pass_log),
            gate_count=self.circuit.gate_count(),
            cx_count=self.cx_count(),
            source_hash=self.circuit.metadata.get("source_hash", ""),
        )

    @classmethod
    def from_report(cls, circuit: Circuit, report: CompileReport) -> 'CompiledCircuit':
        coupling_map = CouplingMap(
            report.n_physical, [(a, b) for a, b in report.edges], report.map_name
        )
        return cls(
            circuit=circuit,
            initial_layout=Layout(tuple(report.initial_layout)),
            final_layout=Layout(tuple(report.final_layout)),
            pass_log=list(report.pass_log),
            coupling_map=coupling_map,
            barrier_layouts=[Layout(tuple(b)) for b in report.barrier_layouts],
        )


ROUTINGS = ["lookahead", "shortest_path"]


@dataclass(frozen=True)
class Lookahead:
    """Scoring window for the lookahead router: upcoming 2-qubit gates, geometrically decayed."""
    window: int = 12
    decay: float = 0.8

    def cost(
        self, v2p: Sequence[int], upcoming: Sequence[Gate], coupling_map: CouplingMap
    ) -> float:
        total, weight = 0.0, 1.0
        for gate in upcoming[: self.window]:
            a, b = gate.qubits
            total += weight * (coupling_map.distance(v2p[a], v2p[b]) - 1)
            weight *= self.decay
        return total


@dataclass
class CompileOptions:
    placement: str = "flow"                  # "flow", "greedy" or "trivial"
    initial_layout: Optional[Layout] = None  # skips placement when given
    routing: str = "lookahead"               # "lookahead" or "shortest_path"
    lookahead: Lookahead = field(default_factory=Lookahead)
    c3x: str = "gray"                        # "gray" or "barenco"
    deep_optimization: bool = True           # optimize_deep after decompose and routing
    physical_optimization: bool = True

    def router(self) -> Optional[Lookahead]:
        if self.routing not in ROUTINGS:
            raise ValueError(f"Unknown routing '{self.routing}'. Available: {ROUTINGS}")
        return self.lookahead if self.routing == "lookahead" else None


# ---------------------------------------------------------------------------
# Optimization


def _touches(inst: Instruction) -> Tuple[int, ...]:
    if isinstance(inst, Measure):
        return (inst.qubit,)
    return inst.qubits


def _normalize_angle(theta: float) -> float:
    return math.remainder(theta, 2 * math.pi)


def _combine(first: Gate, second: Gate) -> Tuple[bool, Optional[Gate]]:
    """(combined?, replacement). A None replacement means both gates vanish."""
    if first.qubits != second.qubits:
        return False, None
    if first.kind is GateKind.RZ and second.kind is GateKind.RZ:
        assert first.theta is not None and second.theta is not None
        theta = _normalize_angle(first.theta + second.theta)
        if abs(theta) < 1e-12:
            return True, None
        return True, Gate(GateKind.RZ, first.qubits, theta)
    if second == first.inverse():
        return True, None
    return False, None


def optimize_virtual(c: Circuit) -> Circuit:
    """
    Cancel adjacent inverse pairs and merge RZ runs until nothing changes.
    Identity gates are dropped. Nothing cancels across a barrier or measurement
    touching any of the involved qubits.
    """
    current = list(c.instructions)
    changed = True
    while changed:
        changed = False
        out: List[Instruction] = []
        for inst in current:
            if isinstance(inst, Gate) and inst.kind is GateKind.I:
                changed = True
                continue
            if isinstance(inst, Gate):
                qubits = set(inst.qubits)
                j = len(out) - 1
                while j >= 0 and not qubits & set(_touches(out[j])):
                    j -= 1
                if j >= 0 and isinstance(out[j], Gate):
                    previous = out[j]
                    assert isinstance(previous, Gate)
                    merged, replacement = _combine(previous, inst)
                    if merged:
                        changed = True
                        if replacement is None:
                            del out[j]
                        else:
                            out[j] = replacement
                        continue
            out.append(inst)
        current = out
    return c.with_instructions(current)


PHASE_ANGLES = {
    GateKind.T: math.pi / 4,
    GateKind.TDG: -math.pi / 4,
    GateKind.S: math.pi / 2,
    GateKind.SDG: -math.pi / 2,
}


def _is_phase(gate: Gate) -> bool:
    return gate.kind is GateKind.RZ or gate.kind in PHASE_ANGLES


def _phase_angle(gate: Gate) -> float:
    if gate.kind is GateKind.RZ:
        assert gate.theta is not None
        return gate.theta
    return PHASE_ANGLES[gate.kind]


def _slides_through_cx(cx: Gate, gate: Gate) -> bool:
    control, target = cx.qubits
    if _is_phase(gate):
        return gate.qubits[0] == control
    return gate.kind is GateKind.X and gate.qubits[0] == target


def commutes(a: Gate, b: Gate) -> bool:
    """
    Conservative commutation test: True only for pairs known to commute.

    Disjoint gates, CX pairs that share no control-target crossing, phase gates on a CX
    control, X on a CX target and any two phase gates.
    """
    if not set(a.qubits) & set(b.qubits):
        return True
    if a.kind is GateKind.CX and b.kind is GateKind.CX:
        return a.qubits[0] != b.qubits[1] and b.qubits[0] != a.qubits[1]
    if a.kind is GateKind.CX and len(b.qubits) == 1:
        return _slides_through_cx(a, b)
    if b.kind is GateKind.CX and len(a.qubits) == 1:
        return _slides_through_cx(b, a)
    return _is_phase(a) and _is_phase(b)


def _merge(first: Gate, second: Gate) -> Tuple[bool, Optional[Gate]]:
    """_combine, with every phase gate read as an RZ."""
    if first.qubits != second.qubits:
        return False, None
    if _is_phase(first) and _is_phase(second):
        theta = _normalize_angle(_phase_angle(first) + _phase_angle(second))
        if abs(theta) < 1e-12:
            return True, None
        return True, Gate(GateKind.RZ, first.qubits, theta)
    return _combine(first, second)


def _is_noop(gate: Gate) -> bool:
    if gate.kind is GateKind.I:
        return True
    return gate.kind is GateKind.RZ and abs(_normalize_angle(gate.theta or 0.0)) < 1e-12


def _absorb(out: List[Instruction], gate: Gate) -> bool:
    """Merge gate into the latest earlier gate it reaches by commuting past the rest."""
    qubits = set(gate.qubits)
    for j in range(len(out) - 1, -1, -1):
        other = out[j]
        if not isinstance(other, Gate):
            if qubits & set(_touches(other)):
                return False
            continue
        merged, replacement = _merge(other, gate)
        if merged:
            if replacement is None:
                del out[j]
            else:
                out[j] = replacement
            return True
        if not commutes(other, gate):
            return False
    return False


def cancel_commuting(c: Circuit) -> Circuit:
    """
    optimize_virtual that also looks past gates commuting with the candidate.
    Phase gates of any kind merge into one RZ; barriers and measurements still fence.
    """
    current = list(c.instructions)
    changed = True
    while changed:
        changed = False
        out: List[Instruction] = []
        for inst in current:
            if isinstance(inst, Gate) and (_is_noop(inst) or _absorb(out, inst)):
                changed = True
                continue
            out.append(inst)
        current = out
    return c.with_instructions(current)


Parity = Tuple[FrozenSet[int], int]


def fold_phases(c: Circuit) -> Circuit:
    """
    Merge phase gates that act on the same affine parity of path variables.

    Each wire carries a parity of path variables plus a constant bit. X flips the
    constant, CX adds the control parity into the target and SWAP exchanges wires.
    Any other gate, barrier or measurement starts a fresh variable. The rotations of
    one parity are summed into an RZ at the first member's position; nothing merges
    across a barrier.
    """
    fresh = itertools.count()
    wires: List[Parity] = [(frozenset({next(fresh)}), 0) for _ in range(c.n_qubits)]
    groups: Dict[Tuple[int, FrozenSet[int]], List[Tuple[int, int, Gate]]] = {}
    epoch = 0
    for index, inst in enumerate(c.instructions):
        if isinstance(inst, Gate) and _is_phase(inst):
            variables, flipped = wires[inst.qubits[0]]
            sign = -1 if flipped else 1
            groups.setdefault((epoch, variables), []).append((index, sign, inst))
        elif isinstance(inst, Gate) and inst.kind is GateKind.X:
            variables, flipped = wires[inst.qubits[0]]
            wires[inst.qubits[0]] = (variables, flipped ^ 1)
        elif isinstance(inst, Gate) and inst.kind is GateKind.CX:
            control, target = inst.qubits
            wires[target] = (
                wires[target][0] ^ wires[control][0],
                wires[target][1] ^ wires[control][1],
            )
        elif isinstance(inst, Gate) and inst.kind is GateKind.SWAP:
            a, b = inst.qubits
            wires[a], wires[b] = wires[b], wires[a]
        else:
            if isinstance(inst, Barrier):
                epoch += 1
            for q in _touches(inst):
                wires[q] = (frozenset({next(fresh)}), 0)

    replaced: Dict[int, Optional[Gate]] = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        first, first_sign, anchor = members[0]
        total = sum(sign * _phase_angle(gate) for _, sign, gate in members)
        theta = _normalize_angle(first_sign * total)
        replaced[first] = Gate(GateKind.RZ, anchor.qubits, theta) if abs(theta) >= 1e-12 else None
        for index, _, _ in members[1:]:
            replaced[index] = None
    if not replaced:
        return c
    out: List[Instruction] = []
    for index, inst in enumerate(c.instructions):
        if index not in replaced:
            out.append(inst)
            continue
        replacement = replaced[index]
        if replacement is not None:
            out.append(replacement)
    return c.with_instructions(out)


def optimize_deep(c: Circuit) -> Circuit:
    """cancel_commuting and fold_phases, alternated until the gate count stops falling."""
    current = cancel_commuting(c)
    while True:
        candidate = cancel_commuting(fold_phases(current))
        if candidate.gate_count() >= current.gate_count():
            return current
        current = candidate


# ---------------------------------------------------------------------------
# Decomposition


def _ccx(a: int, b: int, t: int) -> List[Gate]:
    """Textbook Toffoli: 6 CX with H/T/Tdg, exact."""
    H, T, TDG, CX = GateKind.H, GateKind.T, GateKind.TDG, GateKind.CX
    return [
        Gate(H, (t,)), Gate(CX, (b, t)), Gate(TDG, (t,)), Gate(CX, (a, t)),
        Gate(T, (t,)), Gate(CX, (b, t)), Gate(TDG, (t,)), Gate(CX, (a, t)),
        Gate(T, (b,)), Gate(T, (t,)), Gate(H, (t,)), Gate(CX, (a, b)),
        Gate(T, (a,)), Gate(TDG, (b,)), Gate(CX, (a, b)),
    ]


def multi_controlled_phase(qubits: Sequence[int], theta: float) -> List[Gate]:
    """
    exp(i*theta*x_0*x_1*...*x_{k-1}) up to global phase, ancilla-free.

    The product of k bits expands into parities of every nonempty subset with weight
    (-1)^(|S|-1) / 2^(k-1). Each subset's parity is accumulated onto its highest qubit
    by walking the lower qubits in Gray-code order, so consecutive subsets differ by
    one CX; each parity gets one RZ.
    """
    k = len(qubits)
    scale = theta / 2 ** (k - 1)
    gates: List[Gate] = []
    for top in range(k):
        acc = qubits[top]
        lower = qubits[:top]
        previous = 0
        for step in range(2**top):
            gray = step ^ (step >> 1)
            if step:
                changed = (gray ^ previous).bit_length() - 1
                gates.append(Gate(GateKind.CX, (lower[changed], acc)))
            previous = gray
            size = bin(gray).count("1") + 1
            sign = 1.0 if size % 2 else -1.0
            gates.append(Gate(GateKind.RZ, (acc,), sign * scale))
        if top:
            gates.append(Gate(GateKind.CX, (lower[previous.bit_length() - 1], acc)))
    return gates


def _c3x_gray(a: int, b: int, c: int, t: int) -> List[Gate]:
    """C3X as H . C3Z . H on the target; 14 CX and 15 RZ."""
    return (
        [Gate(GateKind.H, (t,))]
        + multi_controlled_phase((a, b, c, t), math.pi)
        + [Gate(GateKind.H, (t,))]
    )


def _c3x_barenco(a: int, b: int, c: int, t: int) -> List[Gate]:
    """
    C3X from seven controlled fourth roots of X, ancilla-free; 20 CX.

    The controls are walked in Gray-code order so each root is controlled by one
    parity of (a, b, c), with signs that sum to 4*a*b*c.
    """
    quarter = math.pi / 4
    controlled_roots: List[Tuple[List[Tuple[int, int]], int, float]] = [
        ([], a, quarter),
        ([(a, b)], b, -quarter),
        ([(a, b)], b, quarter),
        ([(b, c)], c, -quarter),
        ([(a, c)], c, quarter),
        ([(b, c)], c, -quarter),
        ([(a, c)], c, quarter),
    ]
    gates: List[Gate] = [Gate(GateKind.H, (t,))]
    for moves, control, theta in controlled_roots:
        gates.extend(Gate(GateKind.CX, move) for move in moves)
        gates.extend(multi_controlled_phase((control, t), theta))
    gates.append(Gate(GateKind.H, (t,)))
    return gates


C3X_DECOMPOSITIONS = {"gray": _c3x_gray, "barenco": _c3x_barenco}


def _swap(a: int, b: int) -> List[Gate]:
    return [Gate(GateKind.CX, (a, b)), Gate(GateKind.CX, (b, a)), Gate(GateKind.CX, (a, b))]


def decompose(c: Circuit, c3x: str = "gray") -> Circuit:
    """
    Rewrite CCX, C3X and SWAP so that only 1-qubit kinds and CX remain.
    c3x picks the C3X construction: "gray" (14 CX) or "barenco" (20 CX).
    """
    if c3x not in C3X_DECOMPOSITIONS:
        available = sorted(C3X_DECOMPOSITIONS)
        raise ValueError(f"Unknown C3X decomposition '{c3x}'. Available: {available}")
    expand_c3x = C3X_DECOMPOSITIONS[c3x]
    out: List[Instruction] = []
    for inst in c.instructions:
        if isinstance(inst, Gate) and inst.kind is GateKind.CCX:
            out.extend(_ccx(*inst.qubits))
        elif isinstance(inst, Gate) and inst.kind is GateKind.C3X:
            out.extend(expand_c3x(*inst.qubits))
        elif isinstance(inst, Gate) and inst.kind is GateKind.SWAP:
            out.extend(_swap(*inst.qubits))
        else:
            out.append(inst)
    return c.with_instructions(out)


# ---------------------------------------------------------------------------
# Placement and routing


PLACEMENTS = ["flow", "greedy", "trivial"]


def _greedy_layout(c: Circuit, coupling_map: CouplingMap) -> Layout:
    n_virtual, n_physical = c.n_qubits, coupling_map.n_physical
    weight = [0] * n_virtual
    for gate in c.gates:
        if len(gate.qubits) > 1:
            for q in gate.qubits:
                weight[q] += 1
    virtual_order = sorted(range(n_virtual), key=lambda v: (-weight[v], v))
    physical_order = sorted(range(n_physical), key=lambda p: (-coupling_map.degree(p), p))
    v2p = [0] * n_physical
    for v, p in zip(virtual_order, physical_order):
        v2p[v] = p
    for ancilla, p in zip(range(n_virtual, n_physical), physical_order[n_virtual:]):
        v2p[ancilla] = p
    return Layout.from_v2p(v2p)


def interaction_counts(c: Circuit) -> Counter[Tuple[int, int]]:
    """Number of 2-qubit gates between each unordered pair of virtual qubits."""
    return Counter(
        (min(g.qubits), max(g.qubits)) for g in c.gates if len(g.qubits) == 2
    )


def flow_cost(c: Circuit, coupling_map: CouplingMap, layout: Layout) -> int:
    """Interaction counts weighted by the physical distance of each pair under layout."""
    return _flow_cost(interaction_counts(c), coupling_map, layout.p2v)


def _flow_cost(
    counts: Counter[Tuple[int, int]], coupling_map: CouplingMap, p2v: Sequence[int]
) -> int:
    v2p = [0] * len(p2v)
    for p, v in enumerate(p2v):
        v2p[v] = p
    distances = coupling_map.distances()
    unreachable = coupling_map.n_physical
    return sum(
        n * distances[v2p[a]].get(v2p[b], unreachable) for (a, b), n in counts.items()
    )


def _flow_layout(c: Circuit, coupling_map: CouplingMap) -> Layout:
    """Greedy layout improved by the best pairwise physical exchange until none helps."""
    counts = interaction_counts(c)
    p2v = list(_greedy_layout(c, coupling_map).p2v)
    best = _flow_cost(counts, coupling_map, p2v)
    while True:
        best_pair: Optional[Tuple[int, int]] = None
        for i, j in itertools.combinations(range(coupling_map.n_physical), 2):
            p2v[i], p2v[j] = p2v[j], p2v[i]
            cost = _flow_cost(counts, coupling_map, p2v)
            p2v[i], p2v[j] = p2v[j], p2v[i]
            if cost < best:
                best, best_pair = cost, (i, j)
        if best_pair is None:
            return Layout(tuple(p2v))
        i, j = best_pair
        p2v[i], p2v[j] = p2v[j], p2v[i]


def place(c: Circuit, coupling_map: CouplingMap, strategy: str = "flow") -> Layout:
    """
    Initial layout.

    "trivial" maps virtual i to physical i. "greedy" ranks virtual qubits by how many
    multi-qubit gates touch them and physical qubits by graph degree (ties by lower
    index) and pairs the two rankings. "flow" starts from the greedy layout and keeps
    exchanging the pair of physical qubits that most lowers flow_cost.
    """
    n_virtual, n_physical = c.n_qubits, coupling_map.n_physical
    if n_virtual > n_physical:
        raise TooManyVirtualQubits(
            f"Circuit needs {n_virtual} qubits, map '{coupling_map.name}' has {n_physical}"
        )
    if strategy == "trivial":
        return Layout.trivial(n_physical)
    if strategy == "greedy":
        return _greedy_layout(c, coupling_map)
    if strategy == "flow":
        return _flow_layout(c, coupling_map)
    raise ValueError(f"Unknown placement '{strategy}'. Available: {PLACEMENTS}")


def _check_layout(layout: Layout, coupling_map: CouplingMap) -> None:
    if layout.n_physical != coupling_map.n_physical:
        raise InvalidLayout(
            f"Layout covers {layout.n_physical} qubits, map has {coupling_map.n_physical}"
        )


def _split_swaps(path: Sequence[int], split: int) -> List[Tuple[int, int]]:
    """SWAPs that bring the two ends of path onto path[split] and path[split + 1]."""
    forward = list(zip(path[:split], path[1 : split + 1]))
    backward = [(path[i], path[i - 1]) for i in range(len(path) - 1, split + 1, -1)]
    return forward + backward


def _choose_swaps(
    layout: Layout,
    path: Sequence[int],
    upcoming: Sequence[Gate],
    coupling_map: CouplingMap,
    lookahead: Optional[Lookahead],
) -> List[Tuple[int, int]]:
    if lookahead is None:
        return _split_swaps(path, len(path) - 2)
    best: List[Tuple[int, int]] = []
    best_cost = math.inf
    for split in range(len(path) - 1):
        swaps = _split_swaps(path, split)
        trial = layout
        for a, b in swaps:
            trial = trial.swap_physical(a, b)
        cost = lookahead.cost(trial.v2p, upcoming, coupling_map)
        if cost < best_cost - 1e-12:
            best, best_cost = swaps, cost
    return best


def route_with_barriers(
    c: Circuit,
    coupling_map: CouplingMap,
    initial: Layout,
    lookahead: Optional[Lookahead] = None,
) -> Tuple[Circuit, Layout, List[Layout]]:
    """route() that also reports the layout in force at every barrier."""
    _check_layout(initial, coupling_map)
    if c.n_qubits > coupling_map.n_physical:
        raise TooManyVirtualQubits(f"{c.n_qubits} virtual qubits on {coupling_map.n_physical}")
    two_qubit = [g for g in c.gates if len(g.qubits) == 2]
    seen_two_qubit = 0
    layout = initial
    out: List[Instruction] = []
    barrier_layouts: List[Layout] = []
    for inst in c.instructions:
        v2p = layout.v2p
        if isinstance(inst, Barrier):
            out.append(Barrier(tuple(v2p[q] for q in inst.qubits), inst.tag))
            barrier_layouts.append(layout)
        elif isinstance(inst, Measure):
            out.append(Measure(v2p[inst.qubit], inst.clbit))
        elif len(inst.qubits) == 1:
            out.append(Gate(inst.kind, (v2p[inst.qubits[0]],), inst.theta))
        elif len(inst.qubits) == 2:
            seen_two_qubit += 1
            pa, pb = v2p[inst.qubits[0]], v2p[inst.qubits[1]]
            if not coupling_map.adjacent(pa, pb):
                path = coupling_map.shortest_path(pa, pb)
                upcoming = two_qubit[seen_two_qubit:]
                for here, there in _choose_swaps(layout, path, upcoming, coupling_map, lookahead):
                    out.append(Gate(GateKind.SWAP, (here, there)))
                    layout = layout.swap_physical(here, there)
                v2p = layout.v2p
                pa, pb = v2p[inst.qubits[0]], v2p[inst.qubits[1]]
            out.append(Gate(inst.kind, (pa, pb), inst.theta))
        else:
            raise UnexpectedGate(f"route expects at most 2-qubit gates, got {inst.kind.value}")
    routed = Circuit(coupling_map.n_physical, c.n_clbits, tuple(out), dict(c.metadata))
    return routed, layout, barrier_layouts


def route(
    c: Circuit,
    coupling_map: CouplingMap,
    initial: Layout,
    lookahead: Optional[Lookahead] = None,
) -> Tuple[Circuit, Layout]:
    """
    Insert SWAPs so every 2-qubit gate lands on an edge.

    Without lookahead the first operand walks toward the second along the shortest
    path. With it, every meeting point on that path is tried and the one leaving the
    next window of 2-qubit gates closest together wins; ties go to the point nearest
    the first operand. The
    final layout is the initial one composed with every inserted SWAP.
    """
    routed, final, _ = route_with_barriers(c, coupling_map, initial, lookahead)
    return routed, final


def translate_basis(c: Circuit) -> Circuit:
    """Rewrite 1-qubit gates into {I, RZ, SX, X}; SWAP becomes 3 CX; CX is untouched."""
    half_pi = math.pi / 2
    out: List[Instruction] = []
    for inst in c.instructions:
        if not isinstance(inst, Gate) or inst.kind in BASIS_KINDS:
            out.append(inst)
            continue
        kind, qubits = inst.kind, inst.qubits
        if kind in PHASE_ANGLES:
            out.append(Gate(GateKind.RZ, qubits, PHASE_ANGLES[kind]))
        elif kind is GateKind.H:
            out.extend([
                Gate(GateKind.RZ, qubits, half_pi),
                Gate(GateKind.SX, qubits),
                Gate(GateKind.RZ, qubits, half_pi),
            ])
        elif kind is GateKind.SXDG:
            out.extend([
                Gate(GateKind.RZ, qubits, math.pi),
                Gate(GateKind.SX, qubits),
                Gate(GateKind.RZ, qubits, math.pi),
            ])
        elif kind is GateKind.SWAP:
            out.extend(_swap(*qubits))
        else:
            raise UnexpectedGate(f"Cannot translate '{kind.value}' into the basis; decompose first")
    return c.with_instructions(out)


def compile_circuit(
    c: Circuit, coupling_map: CouplingMap, options: Optional[CompileOptions] = None
) -> CompiledCircuit:
    """Run the whole pipeline and log gate counts per pass."""
    options = options or CompileOptions()
    pass_log: List[PassLogEntry] = []

    def log(name: str, before: Circuit, after: Circuit) -> None:
        pass_log.append(PassLogEntry(name, before.gate_count(), after.gate_count()))
        logger.debug("%s: %d -> %d gates", name, before.gate_count(), after.gate_count())

    optimized = optimize_virtual(c)
    log("optimize_virtual", c, optimized)
    router = options.router()
    decomposed = decompose(optimized, options.c3x)
    log("decompose", optimized, decomposed)
    if options.deep_optimization:
        expanded, decomposed = decomposed, optimize_deep(decomposed)
        log("optimize_decomposed", expanded, decomposed)
    if options.initial_layout is not None:
        initial = options.initial_layout
        if c.n_qubits > coupling_map.n_physical:
            raise TooManyVirtualQubits(f"{c.n_qubits} virtual qubits on {coupling_map.n_physical}")
    else:
        initial = place(decomposed, coupling_map, options.placement)
    pass_log.append(PassLogEntry("place", decomposed.gate_count(), decomposed.gate_count()))
    routed, final, barrier_layouts = route_with_barriers(decomposed, coupling_map, initial, router)
    log("route", decomposed, routed)
    translated = translate_basis(routed)
    log("translate_basis", routed, translated)
    result = translated
    if options.physical_optimization:
        physical_pass = optimize_deep if options.deep_optimization else optimize_virtual
        result = physical_pass(translated)
        log("optimize_physical", translated, result)

    result = result.with_metadata(source_hash=circuit_hash(c), coupling_map=coupling_map.name)
    logger.info(
        "Compiled %d-gate circuit to %d gates on '%s'",
        c.gate_count(), result.gate_count(), coupling_map.name,
    )
    return CompiledCircuit(result, initial, final, pass_log, coupling_map, barrier_layouts)
