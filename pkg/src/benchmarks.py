"""
Benchmark registry and the experiment grid.

Benchmarks are loaded from data/templates/benchmarks.json, so new circuits are added by
editing that file only. Each one is checked at load: its stored correct output must be
what a noiseless run of the circuit produces.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import csv
import hashlib
import json
import logging
import os

from dataclasses_json import dataclass_json

from src.circuit_ir import Circuit
from src.deobfuscator import StitchMode, stitch
from src.metrics import Summary, best_seed, dfc, fidelity, summarize, true_output, tvd
from src.mock_compiler import CompileOptions, CouplingMap, compile_circuit
from src.obfuscator import InsertionLocation, RandomBlockParams, obfuscate
from src.qasm_io import circuit_hash, parse
from src.schemas import ExperimentRow
from src.simulator import NoiseModel, derive_seed, evaluate_classical, sample

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "data", "templates", "benchmarks.json",
)


class UnknownBenchmark(ValueError):
    pass


class BenchmarkOutputMismatch(ValueError):
    pass


@dataclass
class Benchmark:
    """A classical-reversible circuit with one known input and its expected outcome."""
    name: str
    circuit: Circuit
    input: str
    correct_output: str
    description: str = ""
    source: str = ""

    def validate(self) -> None:
        if len(self.input) != self.circuit.n_qubits:
            raise ValueError(
                f"Benchmark '{self.name}' input has {len(self.input)} bits, "
                f"circuit has {self.circuit.n_qubits} qubits"
            )
        if not self.circuit.is_classical():
            raise ValueError(f"Benchmark '{self.name}' is not classical-reversible")
        produced = evaluate_classical(self.circuit, self.input)
        if produced != self.correct_output:
            raise BenchmarkOutputMismatch(
                f"Benchmark '{self.name}' produces '{produced}', "
                f"registry says '{self.correct_output}'"
            )

    @property
    def fingerprint(self) -> str:
        return circuit_hash(self.circuit)


class BenchmarkManager:
    """Loads every benchmark from the JSON template registry."""

    def __init__(self, template_file: str = DEFAULT_TEMPLATE) -> None:
        self.template_file = template_file
        self.benchmarks: Dict[str, Benchmark] = {}
        self.metadata: Dict[str, Any] = {}
        self._load_benchmarks_from_json()

    def _load_benchmarks_from_json(self) -> None:
        if not os.path.exists(self.template_file):
            raise FileNotFoundError(f"Benchmark registry not found: {self.template_file}")
        with open(self.template_file, "r", encoding="utf-8") as f:
            data = json.load(f)
        self.metadata = data.get("metadata", {})
        for key, entry in data.get("benchmarks", {}).items():
            benchmark = Benchmark(
                name=entry.get("name", key),
                circuit=parse("\n".join(entry["qasm"])).with_metadata(name=key),
                input=entry["input"],
                correct_output=entry["correct_output"],
                description=entry.get("description", ""),
                source=entry.get("source", ""),
            )
            benchmark.validate()
            self.benchmarks[key] = benchmark
        logger.debug("Loaded %d benchmarks from %s", len(self.benchmarks), self.template_file)

    def get_available_benchmarks(self) -> List[str]:
        return list(self.benchmarks.keys())

    def get_benchmark(self, name: str) -> Benchmark:
        if name not in self.benchmarks:
            available = self.get_available_benchmarks()
            raise UnknownBenchmark(f"Benchmark '{name}' not found. Available: {available}")
        return self.benchmarks[name]

    def registry_digest(self) -> str:
        """sha256 over every benchmark's name and circuit hash, in name order."""
        h = hashlib.sha256()
        for name in sorted(self.benchmarks):
            h.update(f"{name}:{self.benchmarks[name].fingerprint}\n".encode("utf-8"))
        return h.hexdigest()


_MANAGERS: Dict[str, BenchmarkManager] = {}


def load_benchmark(name: str, template_file: str = DEFAULT_TEMPLATE) -> Benchmark:
    if template_file not in _MANAGERS:
        _MANAGERS[template_file] = BenchmarkManager(template_file)
    return _MANAGERS[template_file].get_benchmark(name)


# ---------------------------------------------------------------------------
# Experiments


@dataclass_json
@dataclass
class ExperimentSpec:
    benchmarks: List[str] = field(default_factory=lambda: ["adder_1bit"])
    locations: List[str] = field(default_factory=lambda: ["front", "middle", "back"])
    refined: List[bool] = field(default_factory=lambda: [False, True])
    n_block_gates: int = 3
    n_seeds: int = 10
    master_seed: int = 0
    shots: int = 10000
    p1: float = 0.001
    p2: float = 0.01
    p_ro: float = 0.01
    coupling_map: str = "auto"
    placement: str = "flow"
    routing: str = "lookahead"
    c3x: str = "gray"
    stitch_mode: str = "feed"
    compute_fidelity: bool = True
    template_file: str = DEFAULT_TEMPLATE

    @classmethod
    def from_file(cls, path: str) -> 'ExperimentSpec':
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))  # type: ignore[attr-defined, no-any-return]

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.p1, self.p2, self.p_ro)

    @property
    def compile_options(self) -> CompileOptions:
        return CompileOptions(placement=self.placement, routing=self.routing, c3x=self.c3x)

    def seeds(self) -> List[int]:
        return [derive_seed(self.master_seed, "experiment", str(i)) for i in range(self.n_seeds)]

    def grid(self) -> List[Tuple[str, str, bool, int]]:
        """(benchmark, location, refined, seed) in the order rows are written."""
        seeds = self.seeds()
        return [
            (name, location, refined, seed)
            for name in self.benchmarks
            for location in self.locations
            for refined in self.refined
            for seed in seeds
        ]


@dataclass
class ExperimentResult:
    rows: List[ExperimentRow]
    summary: Dict[str, Any]


def run_point(spec: ExperimentSpec, name: str, location: str, refined: bool, seed: int) -> ExperimentRow:
    """
    One grid point.

    The obfuscated circuit is compiled and run under noise from its initial layout;
    TVD and DFC compare that run with the true output. With compute_fidelity the
    compiled original and the restored circuit are run as well.
    """
    bench = load_benchmark(name, spec.template_file)
    noise = spec.noise
    params = RandomBlockParams(n_gates=spec.n_block_gates, refined=refined, seed=seed)
    obfuscated, record = obfuscate(bench.circuit, params, InsertionLocation.parse(location))
    coupling_map = CouplingMap.resolve(spec.coupling_map, bench.circuit.n_qubits)
    options = spec.compile_options
    compiled_obf = compile_circuit(obfuscated, coupling_map, options)
    obf_dist = sample(
        compiled_obf.circuit, compiled_obf.initial_layout.physical_input(bench.input),
        spec.shots, noise, derive_seed(seed, "obfuscated"),
    )

    fidelity_orig: Optional[float] = None
    fidelity_deobf: Optional[float] = None
    if spec.compute_fidelity:
        compiled_orig = compile_circuit(bench.circuit, coupling_map, options)
        mode = StitchMode.parse(spec.stitch_mode)
        restored = stitch(compiled_obf, record, coupling_map, mode, options=options)
        run_orig = sample(
            compiled_orig.circuit, compiled_orig.initial_layout.physical_input(bench.input),
            spec.shots, noise, derive_seed(seed, "compiled-original"),
        )
        run_deobf = sample(
            restored.circuit, restored.initial_layout.physical_input(bench.input),
            spec.shots, noise, derive_seed(seed, "restored"),
        )
        fidelity_orig = fidelity(run_orig, bench.correct_output)
        fidelity_deobf = fidelity(run_deobf, bench.correct_output)

    return ExperimentRow(
        benchmark=name,
        location=location,
        refined=refined,
        seed=seed,
        n_block_gates=record.block.gate_count(),
        tvd=tvd(true_output(bench.correct_output, spec.shots), obf_dist),
        dfc=dfc(obf_dist, bench.correct_output),
        fidelity_orig=fidelity_orig,
        fidelity_deobf=fidelity_deobf,
    )


def _run_point_args(args: Tuple[ExperimentSpec, str, str, bool, int]) -> ExperimentRow:
    return run_point(*args)


def summarize_rows(rows: List[ExperimentRow]) -> Dict[str, Any]:
    """Box-plot statistics per benchmark, location and refinement."""
    groups: Dict[Tuple[str, str, bool], List[ExperimentRow]] = {}
    for row in rows:
        groups.setdefault((row.benchmark, row.location, row.refined), []).append(row)

    cells = []
    for (name, location, refined), members in groups.items():
        best = best_seed(members)
        fid_orig = [r.fidelity_orig for r in members if r.fidelity_orig is not None]
        fid_deobf = [r.fidelity_deobf for r in members if r.fidelity_deobf is not None]
        cells.append({
            "benchmark": name,
            "location": location,
            "refined": refined,
            "tvd": _summary_dict(summarize([r.tvd for r in members])),
            "dfc": _summary_dict(summarize([r.dfc for r in members])),
            "fidelity_orig": _summary_dict(summarize(fid_orig)),
            "fidelity_deobf": _summary_dict(summarize(fid_deobf)),
            "best_seed": best.seed if best else None,
        })
    return {"rows": len(rows), "cells": cells}


def _summary_dict(summary: Summary) -> Dict[str, Any]:
    return summary.to_dict()  # type: ignore[attr-defined, no-any-return]


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """
    Run the whole grid.

    Grid points are independent; with jobs > 1 they run on a process pool and the rows
    still come back in grid order.
    """
    for name in spec.benchmarks:
        load_benchmark(name, spec.template_file)
    points = [(spec, *point) for point in spec.grid()]
    logger.info("Running %d grid points on %d worker(s)", len(points), jobs)
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point_args, points))
    else:
        rows = [_run_point_args(p) for p in points]
    return ExperimentResult(rows, summarize_rows(rows))


def write_results(result: ExperimentResult, output_dir: str) -> Tuple[str, str]:
    """results.csv plus summary.json; identical results give identical bytes."""
    os.makedirs(output_dir, exist_ok=True)
    csv_path = os.path.join(output_dir, "results.csv")
    summary_path = os.path.join(output_dir, "summary.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ExperimentRow.CSV_FIELDS)
        for row in result.rows:
            writer.writerow(row.csv_values())
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(result.summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, summary_path
