"""
Run configuration.

Defaults come from config/default_config.yaml. QLOCK_CONFIG points at another YAML file
and QLOCK_SEED supplies the master seed when no flag does. Command-line flags are
applied on top by the entry point.
"""
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional
import logging
import os

import yaml
from dotenv import load_dotenv

from src.attack_harness import Scenario
from src.mock_compiler import C3X_DECOMPOSITIONS, PLACEMENTS, ROUTINGS, CompileOptions
from src.obfuscator import InsertionLocation
from src.simulator import NoiseModel

DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config", "default_config.yaml"
)
KNOWN_MAPS = ("auto", "valencia", "line")


class ConfigError(ValueError):
    def __init__(self, problems: List[str]) -> None:
        self.problems = problems
        super().__init__("Invalid configuration: " + "; ".join(problems))


@dataclass
class Config:
    seed: int = 0
    shots: int = 10000
    n_seeds: int = 10
    jobs: int = 1
    p1: float = 0.001
    p2: float = 0.01
    p_ro: float = 0.01
    coupling_map: str = "auto"
    placement: str = "flow"
    routing: str = "lookahead"
    c3x: str = "gray"
    n_gates: int = 3
    location: str = "back"
    refined: bool = False
    stitch_mode: str = "feed"
    threshold: float = 0.5
    scenario: str = "middle-barrier"
    output_dir: str = "data/generated"
    benchmarks_file: Optional[str] = None
    log_level: str = "INFO"
    log_file: Optional[str] = None
    source: str = field(default="defaults", compare=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: str = "dict") -> 'Config':
        """Read the sectioned YAML layout; missing keys keep their defaults."""
        def section(name: str) -> Dict[str, Any]:
            value = data.get(name) or {}
            return value if isinstance(value, dict) else {}

        experiment, noise = section("experiment"), section("noise")
        compiler, obfuscation = section("compiler"), section("obfuscation")
        attack, paths, log = section("attack"), section("paths"), section("logging")
        base = cls()
        return cls(
            seed=int(experiment.get("seed", base.seed)),
            shots=int(experiment.get("shots", base.shots)),
            n_seeds=int(experiment.get("n_seeds", base.n_seeds)),
            jobs=int(experiment.get("jobs", base.jobs)),
            p1=float(noise.get("p1", base.p1)),
            p2=float(noise.get("p2", base.p2)),
            p_ro=float(noise.get("p_ro", base.p_ro)),
            coupling_map=str(compiler.get("coupling_map", base.coupling_map)),
            placement=str(compiler.get("placement", base.placement)),
            routing=str(compiler.get("routing", base.routing)),
            c3x=str(compiler.get("c3x", base.c3x)),
            n_gates=int(obfuscation.get("n_gates", base.n_gates)),
            location=str(obfuscation.get("location", base.location)),
            refined=bool(obfuscation.get("refined", base.refined)),
            stitch_mode=str(obfuscation.get("stitch_mode", base.stitch_mode)),
            threshold=float(attack.get("threshold", base.threshold)),
            scenario=str(attack.get("scenario", base.scenario)),
            output_dir=str(paths.get("output_dir", base.output_dir)),
            benchmarks_file=paths.get("benchmarks_file", base.benchmarks_file),
            log_level=str(log.get("level", base.log_level)),
            log_file=log.get("log_file", base.log_file),
            source=source,
        )

    def with_overrides(self, **overrides: Any) -> 'Config':
        """Apply flag values; None means the flag was not given."""
        names = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise ConfigError([f"unknown setting '{name}'" for name in unknown])
        given = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **given)

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.p1, self.p2, self.p_ro)

    @property
    def compile_options(self) -> CompileOptions:
        return CompileOptions(placement=self.placement, routing=self.routing, c3x=self.c3x)

    def validate(self) -> 'Config':
        problems = []
        for name in ("p1", "p2", "p_ro"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                problems.append(f"noise {name}={value} outside [0, 1]")
        if self.shots < 1:
            problems.append(f"shots={self.shots} must be >= 1")
        if self.n_seeds < 0:
            problems.append(f"n_seeds={self.n_seeds} must be >= 0")
        if self.jobs < 1:
            problems.append(f"jobs={self.jobs} must be >= 1")
        if self.n_gates < 1:
            problems.append(f"n_gates={self.n_gates} must be >= 1")
        if self.threshold < 0:
            problems.append(f"threshold={self.threshold} must be >= 0")
        if self.placement not in PLACEMENTS:
            problems.append(f"placement '{self.placement}' not in {PLACEMENTS}")
        if self.routing not in ROUTINGS:
            problems.append(f"routing '{self.routing}' not in {ROUTINGS}")
        if self.c3x not in C3X_DECOMPOSITIONS:
            problems.append(f"c3x '{self.c3x}' not in {sorted(C3X_DECOMPOSITIONS)}")
        if self.stitch_mode not in ("feed", "swap"):
            problems.append(f"stitch_mode '{self.stitch_mode}' not in ['feed', 'swap']")
        if self.coupling_map not in KNOWN_MAPS and not os.path.exists(self.coupling_map):
            problems.append(
                f"coupling_map '{self.coupling_map}' is neither {list(KNOWN_MAPS)} nor a file"
            )
        try:
            InsertionLocation.parse(self.location)
        except ValueError as exc:
            problems.append(str(exc))
        try:
            Scenario.parse(self.scenario)
        except ValueError as exc:
            problems.append(str(exc))
        if self.log_level.upper() not in logging.getLevelNamesMapping():
            problems.append(f"logging level '{self.log_level}' is not a logging level")
        if problems:
            raise ConfigError(problems)
        return self


def load_config(path: Optional[str] = None) -> Config:
    """
    Load the YAML config and apply the environment.

    Args:
        path: YAML file; falls back to QLOCK_CONFIG, then the bundled default

    Returns:
        Config with QLOCK_SEED applied when set
    """
    load_dotenv()
    path = path or os.getenv("QLOCK_CONFIG") or DEFAULT_CONFIG_PATH
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path} does not hold a mapping"])
    config = Config.from_dict(data, source=path)

    env_seed = os.getenv("QLOCK_SEED")
    if env_seed:
        try:
            config = replace(config, seed=int(env_seed))
        except ValueError:
            raise ConfigError([f"QLOCK_SEED='{env_seed}' is not an integer"]) from None
    return config


def setup_logging(config: Config) -> None:
    """Root logger level from the config, plus a file handler when log_file is set."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if config.log_file:
        os.makedirs(os.path.dirname(config.log_file) or ".", exist_ok=True)
        handlers.append(logging.FileHandler(config.log_file, encoding="utf-8"))
    logging.basicConfig(
        level=config.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )
