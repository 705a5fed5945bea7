"""
qlock command line.

    obfuscate   insert a random block, write the obfuscated circuit and its secret record
    compile     run the mock compiler on a circuit
    deobfuscate stitch the compiled inverse back in
    simulate    sample a circuit
    metrics     TVD / DFC / fidelity between count files
    attack      pruning attack on an obfuscated circuit
    bench       run the benchmark experiment grid

Exit codes: 0 success, 2 invalid input, 3 internal error.
"""
from dataclasses import replace
import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.attack_harness import Scenario, run_attack, write_attack_csv
from src.benchmarks import DEFAULT_TEMPLATE, BenchmarkManager, ExperimentSpec, run_experiment, write_results
from src.config import Config, load_config, setup_logging
from src.deobfuscator import StitchMode, stitch
from src.metrics import dfc, fidelity, tvd, counts_from_dict
from src.mock_compiler import (
    C3X_DECOMPOSITIONS,
    PLACEMENTS,
    ROUTINGS,
    CompiledCircuit,
    CouplingMap,
    Layout,
    compile_circuit,
)
from src.obfuscator import InsertionLocation, ObfuscationRecord, RandomBlockParams, obfuscate, stealth_warnings
from src.qasm_io import load_record, read_circuit, save_record, write_circuit
from src.schemas import SCHEMA_VERSION, TOOLKIT_VERSION, CompileReport, SidecarRecord
from src.simulator import Distribution, NoiseModel, sample

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 2, 3


def _write_json(payload: Dict[str, Any], path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _read_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not hold a JSON object")
    return data


def _noise(args: argparse.Namespace, config: Config) -> NoiseModel:
    return NoiseModel.noiseless() if getattr(args, "noiseless", False) else config.noise


def _default_out(path: str, suffix: str) -> str:
    stem = os.path.splitext(path)[0]
    return f"{stem}{suffix}"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_obfuscate(args: argparse.Namespace, config: Config) -> int:
    original = read_circuit(args.input)
    params = RandomBlockParams(n_gates=config.n_gates, refined=config.refined, seed=config.seed)
    location = InsertionLocation.parse(config.location)
    obfuscated, record = obfuscate(original, params, location)
    out = args.out or _default_out(args.input, ".obf.qasm")
    record_path = args.record or _default_out(args.input, ".record.json")
    write_circuit(obfuscated, out)
    save_record(
        SidecarRecord(SCHEMA_VERSION, TOOLKIT_VERSION, record.to_payload(), seeds={"block": config.seed}),
        record_path,
    )
    print(f"✓ Inserted {record.block.gate_count()}-gate block at {location}")
    for message in stealth_warnings(original, record.block, config.refined):
        print(f"⚠ {message}")
    print(f"✓ Obfuscated circuit: {out}")
    print(f"✓ Secret record (keep private): {record_path}")
    return EXIT_OK


def cmd_compile(args: argparse.Namespace, config: Config) -> int:
    circuit = read_circuit(args.input)
    coupling_map = CouplingMap.resolve(config.coupling_map, circuit.n_qubits)
    options = config.compile_options
    if args.trivial_layout:
        options = replace(options, placement="trivial")
    compiled = compile_circuit(circuit, coupling_map, options)
    out = args.out or _default_out(args.input, ".compiled.qasm")
    report_path = args.report or _default_out(out, ".report.json")
    write_circuit(compiled.circuit, out)
    _write_json(compiled.report().to_dict(), report_path)  # type: ignore[attr-defined]
    print(f"✓ Compiled on '{coupling_map.name}': {circuit.gate_count()} -> "
          f"{compiled.circuit.gate_count()} gates, {compiled.cx_count()} CX")
    print(f"✓ Initial layout {compiled.initial_layout.to_list()}, "
          f"final layout {compiled.final_layout.to_list()}")
    print(f"✓ Compiled circuit: {out}")
    print(f"✓ Compile report: {report_path}")
    return EXIT_OK


def cmd_deobfuscate(args: argparse.Namespace, config: Config) -> int:
    circuit = read_circuit(args.compiled)
    sidecar = load_record(args.record)
    record = ObfuscationRecord.from_payload(sidecar.record)
    report = CompileReport.from_dict(_read_json(args.compile_report))  # type: ignore[attr-defined]
    compiled = CompiledCircuit.from_report(circuit, report)
    mode = StitchMode.parse(args.mode or config.stitch_mode)
    result = stitch(compiled, record, compiled.coupling_map, mode, reoptimize=args.reoptimize,
                    options=config.compile_options)
    out = args.out or _default_out(args.compiled, ".restored.qasm")
    report_path = args.report or _default_out(out, ".report.json")
    write_circuit(result.circuit, out)
    _write_json(result.report.to_dict(), report_path)  # type: ignore[attr-defined]
    print(f"✓ Restored with {mode.value} stitching: {result.report.gate_count_obfuscated} -> "
          f"{result.report.gate_count_restored} gates, {result.report.junction_swaps} junction swaps")
    print(f"✓ Restored circuit: {out}")
    print(f"✓ Stitch report: {report_path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: Config) -> int:
    circuit = read_circuit(args.input)
    bits = args.bits
    if args.layout_report:
        layout = Layout(tuple(_read_json(args.layout_report)["initial_layout"]))
        bits = layout.physical_input(bits or "0" * circuit.n_qubits)
    dist = sample(circuit, bits, config.shots, _noise(args, config), config.seed)
    payload = {"shots": dist.shots, "counts": dist.to_dict()}
    if args.out:
        _write_json(payload, args.out)
        print(f"✓ Counts: {args.out}")
    print(json.dumps(dist.to_dict(), sort_keys=True))
    return EXIT_OK


def _load_counts(path: str) -> Distribution:
    data = _read_json(path)
    counts = data.get("counts", data)
    return counts_from_dict(counts, data.get("shots") if "counts" in data else None)


def cmd_metrics(args: argparse.Namespace, config: Config) -> int:
    obf = _load_counts(args.obf)
    results: Dict[str, float] = {}
    if args.orig:
        results["tvd"] = tvd(_load_counts(args.orig), obf)
    if args.correct is not None:
        results["dfc"] = dfc(obf, args.correct)
        results["fidelity"] = fidelity(obf, args.correct)
    if not results:
        raise ValueError("Give --orig for TVD and/or --correct for DFC and fidelity")
    for name, value in results.items():
        print(f"✓ {name}: {value:+.4f}" if name == "dfc" else f"✓ {name}: {value:.4f}")
    if args.out:
        _write_json(results, args.out)
    return EXIT_OK


def cmd_attack(args: argparse.Namespace, config: Config) -> int:
    obf = read_circuit(args.input)
    original = read_circuit(args.original) if args.original else None
    scenario = Scenario.parse(config.scenario)
    report = run_attack(
        obf, scenario, args.bits, config.shots, _noise(args, config),
        config.threshold, config.seed, original,
    )
    out_dir = args.out_dir or config.output_dir
    json_path = os.path.join(out_dir, "attack.json")
    csv_path = os.path.join(out_dir, "attack.csv")
    report.save_to_file(json_path)
    write_attack_csv(report, csv_path)
    print(f"✓ Scenario {scenario.value}: {report.choices_before} candidates, "
          f"{report.choices_after} left at threshold {report.threshold}")
    if original is not None:
        print(f"✓ Functionally correct candidates still standing: {report.correct_survivors}")
    print(f"✓ Attack report: {json_path}")
    print(f"✓ Attack table: {csv_path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    template = config.benchmarks_file or DEFAULT_TEMPLATE
    if args.list:
        manager = BenchmarkManager(template)
        for name in manager.get_available_benchmarks():
            bench = manager.get_benchmark(name)
            print(f"  {name}: {bench.circuit.n_qubits} qubits, "
                  f"{bench.circuit.gate_count()} gates. {bench.description}")
        return EXIT_OK

    if args.spec:
        spec = ExperimentSpec.from_file(args.spec)
    else:
        spec = ExperimentSpec(
            benchmarks=args.benchmarks.split(",") if args.benchmarks else
            BenchmarkManager(template).get_available_benchmarks(),
            locations=args.locations.split(","),
            refined=[False, True] if args.refined == "both" else [args.refined == "yes"],
            n_block_gates=config.n_gates,
            n_seeds=config.n_seeds,
            master_seed=config.seed,
            shots=config.shots,
            p1=config.p1, p2=config.p2, p_ro=config.p_ro,
            coupling_map=config.coupling_map,
            placement=config.placement,
            routing=config.routing,
            c3x=config.c3x,
            stitch_mode=config.stitch_mode,
            compute_fidelity=not args.no_fidelity,
            template_file=template,
        )
    result = run_experiment(spec, jobs=config.jobs)
    csv_path, summary_path = write_results(result, args.out_dir or config.output_dir)
    print(f"✓ {len(result.rows)} rows from {len(spec.benchmarks)} benchmark(s)")
    print(f"✓ Results: {csv_path}")
    print(f"✓ Summary: {summary_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlock", description="Quantum circuit obfuscation toolkit")
    parser.add_argument("--config", help="YAML config (default: QLOCK_CONFIG or config/default_config.yaml)")
    parser.add_argument("--seed", type=int, help="master seed (default: QLOCK_SEED or config)")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("obfuscate", help="insert a random block")
    p.add_argument("input", help="original circuit")
    p.add_argument("--location", help="front, middle, middle-left, middle-right or back")
    p.add_argument("--n-gates", dest="n_gates", type=int, help="block size (default 3)")
    p.add_argument("--refined", action="store_true", default=None, help="refined block")
    p.add_argument("--out", help="obfuscated circuit path")
    p.add_argument("--record", help="sidecar record path")
    p.set_defaults(handler=cmd_obfuscate)

    p = sub.add_parser("compile", help="run the mock compiler")
    p.add_argument("input")
    p.add_argument("--map", dest="coupling_map", help="auto, valencia, line or a JSON file")
    p.add_argument("--trivial-layout", action="store_true", help="virtual i on physical i")
    p.add_argument("--placement", choices=PLACEMENTS)
    p.add_argument("--routing", choices=ROUTINGS)
    p.add_argument("--c3x", choices=sorted(C3X_DECOMPOSITIONS), help="C3X decomposition")
    p.add_argument("--out")
    p.add_argument("--report", help="compile report path")
    p.set_defaults(handler=cmd_compile)

    p = sub.add_parser("deobfuscate", help="stitch the compiled inverse back in")
    p.add_argument("compiled", help="compiled obfuscated circuit")
    p.add_argument("record", help="sidecar record")
    p.add_argument("--compile-report", required=True, help="report written by `compile`")
    p.add_argument("--mode", choices=["feed", "swap"], help="junction stitching mode")
    p.add_argument("--no-reoptimize", dest="reoptimize", action="store_false",
                   help="keep the stitched circuit as concatenated")
    p.add_argument("--out")
    p.add_argument("--report", help="stitch report path")
    p.set_defaults(handler=cmd_deobfuscate)

    p = sub.add_parser("simulate", help="sample a circuit")
    p.add_argument("input")
    p.add_argument("--input-bits", dest="bits", help="basis input, qubit 0 first")
    p.add_argument("--layout-report", help="compile/stitch report; maps --input-bits onto physical qubits")
    p.add_argument("--shots", type=int)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--out", help="counts JSON path")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("metrics", help="TVD, DFC and fidelity from count files")
    p.add_argument("obf", help="counts of the circuit under test")
    p.add_argument("--orig", help="reference counts for TVD")
    p.add_argument("--correct", help="correct outcome for DFC and fidelity")
    p.add_argument("--out", help="metrics JSON path")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("attack", help="pruning attack")
    p.add_argument("input", help="obfuscated circuit")
    p.add_argument("--original", help="true original, only used to label candidates")
    p.add_argument("--scenario", help="middle-barrier, unknown-edge or unknown-count")
    p.add_argument("--threshold", type=float)
    p.add_argument("--input-bits", dest="bits")
    p.add_argument("--shots", type=int)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("bench", help="benchmark experiment grid")
    p.add_argument("--list", action="store_true", help="list bundled benchmarks")
    p.add_argument("--spec", help="experiment spec JSON; flags below are ignored when given")
    p.add_argument("--benchmarks", help="comma separated names (default: all)")
    p.add_argument("--locations", default="front,middle,back")
    p.add_argument("--refined", choices=["yes", "no", "both"], default="both")
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--n-gates", dest="n_gates", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-fidelity", action="store_true", help="skip compile and restore")
    p.add_argument("--out-dir")
    p.set_defaults(handler=cmd_bench)
    return parser


_OVERRIDES = (
    "seed", "shots", "n_seeds", "jobs", "coupling_map", "placement", "routing", "c3x",
    "n_gates", "location", "refined", "threshold", "scenario", "log_level",
)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        overrides = {name: getattr(args, name, None) for name in _OVERRIDES}
        if args.command == "bench":
            overrides["refined"] = None
        config = config.with_overrides(**overrides).validate()
        setup_logging(config)
        return int(args.handler(args, config))
    except (ValueError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        print(f"Internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
