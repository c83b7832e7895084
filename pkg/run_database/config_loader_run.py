import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from kinetics.size_distribution import InitialDataSpec, SimulationConfig, parse_initial_spec
from utils.errors import ConfigValidationError

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "equilibrium", "hj", "verify", "bench")
DEFAULT_CONFIG = "config_run.yaml"


@dataclass(frozen=True)
class RunInfo:
    name: str = "default"
    description: str = ""


@dataclass(frozen=True)
class SimulationBlock:
    mass: float = 0.3
    init: str = "monodisperse:1"
    n: int = 512
    t_end: float = 20.0
    rtol: float = 1e-10
    atol: float = 1e-12
    mode: str = "auto"
    output_stride: int = 10
    output_dt: Optional[float] = 0.25
    k_export: int = 32
    gel_threshold: float = 0.01

    def __post_init__(self):
        _require(self.mass >= 0.0, "simulation.mass", f"must be nonnegative, got {self.mass}")
        _require(self.k_export >= 1, "simulation.k_export", f"must be positive, got {self.k_export}")
        _require(0.0 < self.gel_threshold < 1.0, "simulation.gel_threshold",
                 f"must lie in (0, 1), got {self.gel_threshold}")
        _wrap("simulation", self.initial_spec)
        _wrap("simulation", lambda: self.simulation_config())

    def initial_spec(self) -> InitialDataSpec:
        return parse_initial_spec(self.init, self.mass)

    def simulation_config(self, workers: Optional[int] = None) -> SimulationConfig:
        return SimulationConfig(
                truncation_n=self.n,
                t_end=self.t_end,
                output_stride=self.output_stride,
                abs_tol=self.atol,
                rel_tol=self.rtol,
                convolution_mode=self.mode,
                output_dt=self.output_dt,
                workers=workers,
        )


@dataclass(frozen=True)
class HJBlock:
    mass: float = 0.3
    init: str = "monodisperse:1"
    n: int = 512
    form: str = "z"
    grid_dz: float = 1e-3
    x_max: float = 15.0
    cutoff_n: int = 10_000
    eps: float = 0.0
    cfl: float = 0.9
    t_final: float = 1.0
    snapshots: int = 10

    def __post_init__(self):
        _require(self.form in ("z", "x"), "hj.form", f"must be z or x, got '{self.form}'")
        _require(self.mass >= 0.0, "hj.mass", f"must be nonnegative, got {self.mass}")
        _require(self.n >= 2, "hj.n", f"must be at least 2, got {self.n}")
        _require(self.grid_dz > 0.0, "hj.grid_dz", f"must be positive, got {self.grid_dz}")
        if self.form == "z":
            _require(self.grid_dz < 0.5, "hj.grid_dz", f"must be below 1/2 on the z grid, got {self.grid_dz}")
        _require(self.x_max > 2.0 * self.grid_dz, "hj.x_max", f"must exceed two grid steps, got {self.x_max}")
        _require(self.cutoff_n >= 1, "hj.cutoff_n", f"must be a positive integer, got {self.cutoff_n}")
        _require(self.eps >= 0.0, "hj.eps", f"must be nonnegative, got {self.eps}")
        _require(0.0 < self.cfl < 1.0, "hj.cfl", f"must lie in (0, 1), got {self.cfl}")
        _require(self.t_final > 0.0, "hj.t_final", f"must be positive, got {self.t_final}")
        _require(self.snapshots >= 1, "hj.snapshots", f"must be positive, got {self.snapshots}")
        _wrap("hj", self.initial_spec)

    def initial_spec(self) -> InitialDataSpec:
        return parse_initial_spec(self.init, self.mass)

    def snapshot_times(self) -> List[float]:
        step = self.t_final / self.snapshots
        return [step * i for i in range(1, self.snapshots)]


@dataclass(frozen=True)
class EquilibriumBlock:
    mass: float = 0.3
    length: int = 2048
    method: str = "auto"

    def __post_init__(self):
        _require(self.mass > 0.0, "equilibrium.mass", f"must be positive, got {self.mass}")
        _require(self.length >= 1, "equilibrium.length", f"must be at least 1, got {self.length}")
        _require(self.method in ("direct", "fft", "auto"), "equilibrium.method",
                 f"must be direct, fft or auto, got '{self.method}'")


@dataclass(frozen=True)
class VerifyBlock:
    suite: str = "all"
    quick: bool = False

    def __post_init__(self):
        valid = ("rhs", "equilibrium", "dynamics", "transform", "hj", "lemma", "all")
        _require(self.suite in valid, "verify.suite", f"must be one of {', '.join(valid)}, got '{self.suite}'")


@dataclass(frozen=True)
class BenchBlock:
    sizes: Tuple[int, ...] = (1024, 4096, 16384)
    modes: Tuple[str, ...] = ("direct", "fft")
    repetitions: int = 5
    seed: int = 12345

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "modes", tuple(str(m) for m in self.modes))
        _require(len(self.sizes) > 0, "bench.sizes", "must name at least one size")
        _require(all(s >= 2 for s in self.sizes), "bench.sizes", f"must all be at least 2, got {list(self.sizes)}")
        _require(len(self.modes) > 0 and all(m in ("direct", "fft") for m in self.modes), "bench.modes",
                 f"must be a nonempty subset of direct, fft, got {list(self.modes)}")
        _require(self.repetitions >= 5, "bench.repetitions", f"must be at least 5, got {self.repetitions}")


@dataclass(frozen=True)
class OutputBlock:
    out_dir: str = "runs/latest"
    threads: Optional[int] = None

    def __post_init__(self):
        _require(bool(self.out_dir), "output.out_dir", "must not be empty")
        _require(self.threads is None or self.threads >= 1, "output.threads",
                 f"must be a positive integer, got {self.threads}")


@dataclass(frozen=True)
class RunConfig:
    command: str
    run_info: RunInfo = field(default_factory=RunInfo)
    simulation: SimulationBlock = field(default_factory=SimulationBlock)
    hj: HJBlock = field(default_factory=HJBlock)
    equilibrium: EquilibriumBlock = field(default_factory=EquilibriumBlock)
    verify: VerifyBlock = field(default_factory=VerifyBlock)
    bench: BenchBlock = field(default_factory=BenchBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def __post_init__(self):
        _require(self.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}, got '{self.command}'")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


BLOCKS = {
        "run_info"    : RunInfo,
        "simulation"  : SimulationBlock,
        "hj"          : HJBlock,
        "equilibrium" : EquilibriumBlock,
        "verify"      : VerifyBlock,
        "bench"       : BenchBlock,
        "output"      : OutputBlock,
}


def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigValidationError(f"Invalid {key}: {message}")


def _wrap(block: str, build):
    try:
        build()
    except ConfigValidationError:
        raise
    except ValueError as e:
        raise ConfigValidationError(f"Invalid {block} block: {e}") from e


OPTIONAL_FIELDS = {"output_dt": 0.0, "threads": 0}     # fields defaulting to None, with their value type


def _coerce(value: Any, default: Any, key: str) -> Any:
    """Cast a YAML scalar to the type of the field default (PyYAML reads 1e-10 as a string)."""
    if value is None:
        return None
    if default is None:
        default = OPTIONAL_FIELDS.get(key.rsplit(".", 1)[-1])
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError(f"expected true or false, got {value!r}")
            return value
        if isinstance(value, bool):
            raise TypeError(f"expected a number or string, got {value!r}")
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise TypeError(f"expected an integer, got {value!r}")
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, str):
            return str(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError(f"expected a list, got {value!r}")
            return tuple(value)
    except (TypeError, ValueError) as e:
        raise ConfigValidationError(f"Invalid {key}: {e}") from e
    return value


def _build_block(cls, data: Mapping[str, Any], block: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigValidationError(f"Invalid {block}: expected a mapping, got {type(data).__name__}")

    known   = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigValidationError(f"Unknown keys in {block}: {', '.join(map(str, unknown))}")

    defaults = cls()
    kwargs   = {key: _coerce(value, getattr(defaults, key), f"{block}.{key}") for key, value in data.items()}
    return cls(**kwargs)


def resolve_config_path(config_path: str) -> str:
    """Relative paths resolve against this module's directory first, then the working directory."""
    if os.path.isabs(config_path):
        candidates = [config_path]
    else:
        module_dir = os.path.dirname(os.path.abspath(__file__))
        candidates = [os.path.join(module_dir, config_path), os.path.abspath(config_path)]

    for candidate in candidates:
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"Configuration file not found at {' or '.join(candidates)}")


def apply_overrides(data: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Set dotted keys such as 'simulation.mass'; None values leave the file value alone."""
    merged = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in data.items()}
    for dotted, value in overrides.items():
        if value is None:
            continue
        if "." not in dotted:
            merged[dotted] = value
            continue
        block, key = dotted.split(".", 1)
        section = merged.get(block)
        merged[block] = dict(section) if isinstance(section, Mapping) else {}
        merged[block][key] = value
    return merged


def build_run_config(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigValidationError(f"Configuration must be a mapping, got {type(data).__name__}")

    unknown = sorted(set(data) - set(BLOCKS) - {"command"})
    if unknown:
        raise ConfigValidationError(f"Unknown top-level keys: {', '.join(map(str, unknown))}")

    blocks = {name: _build_block(cls, data.get(name), name) for name, cls in BLOCKS.items()}
    return RunConfig(command=str(data.get("command", "simulate")), **blocks)


def load_config(config_path: Optional[str] = DEFAULT_CONFIG,
                overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Load, override and validate a run configuration (YAML, or JSON as a YAML subset)."""
    data: Dict[str, Any] = {}
    if config_path is not None:
        path = resolve_config_path(config_path)
        with open(path, "r") as file:
            try:
                data = yaml.safe_load(file) or {}
            except yaml.YAMLError as e:
                raise ConfigValidationError(f"Configuration file {path} is not valid YAML/JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigValidationError(f"Configuration file {path} must hold a mapping")
        logger.debug("loaded configuration from %s", path)

    config = build_run_config(apply_overrides(data, overrides or {}))
    logger.debug("resolved configuration for command %s", config.command)
    return config
