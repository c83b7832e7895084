import argparse
import logging
import sys
from typing import Dict, List, Optional

from rich.console import Console
from rich.logging import RichHandler

from run_database.config_loader_run import DEFAULT_CONFIG, load_config
from run_managers.run_manager import RunManager
from ui import report_tables
from utils.errors import ConfigValidationError, NumericalFailure

logger = logging.getLogger("coagfrag")

EXIT_OK         = 0
EXIT_VERIFY     = 1   # verify ran and at least one check failed
EXIT_VALIDATION = 2
EXIT_NUMERICAL  = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML or JSON run configuration")
    common.add_argument("--out-dir", default=None)
    common.add_argument("--threads", type=int, default=None, help="scipy.fft workers")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--quiet", action="store_true", help="no summary tables on stdout")
    common.add_argument("--mass", type=float, default=None)

    parser = argparse.ArgumentParser(prog="coagfrag", description="Critical coagulation-fragmentation laboratory")
    sub    = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="integrate the truncated system")
    simulate.add_argument("--init", default=None, help="monodisperse:<j0> | geometric:<q> | explicit:<v1>,<v2>,...")
    simulate.add_argument("--n", type=int, default=None)
    simulate.add_argument("--t-end", type=float, default=None)
    simulate.add_argument("--rtol", type=float, default=None)
    simulate.add_argument("--atol", type=float, default=None)
    simulate.add_argument("--mode", choices=["direct", "fft", "auto"], default=None)
    simulate.add_argument("--output-dt", type=float, default=None)
    simulate.add_argument("--output-stride", type=int, default=None)
    simulate.add_argument("--k-export", type=int, default=None)

    equilibrium = sub.add_parser("equilibrium", parents=[common], help="stationary table and existence verdict")
    equilibrium.add_argument("--length", type=int, default=None)

    hj = sub.add_parser("hj", parents=[common], help="evolve a transform with the HJ solver")
    hj.add_argument("--init", default=None)
    hj.add_argument("--n", type=int, default=None)
    hj.add_argument("--form", choices=["z", "x"], default=None)
    hj.add_argument("--grid-dz", type=float, default=None)
    hj.add_argument("--cutoff-n", type=int, default=None)
    hj.add_argument("--eps", type=float, default=None)
    hj.add_argument("--t-final", type=float, default=None)

    verify = sub.add_parser("verify", parents=[common], help="run verification suites")
    verify.add_argument("--suite", default=None)
    verify.add_argument("--quick", action="store_true", default=None)

    bench = sub.add_parser("bench", parents=[common], help="time direct against FFT right-hand sides")
    bench.add_argument("--sizes", type=int, nargs="+", default=None)
    bench.add_argument("--repetitions", type=int, default=None)
    bench.add_argument("--mode", choices=["direct", "fft", "auto"], default=None,
                       help="time one mode only; auto times both")

    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, object]:
    """Flags given on the command line, as dotted config keys."""
    overrides: Dict[str, object] = {
            "command"        : args.command,
            "output.out_dir" : args.out_dir,
            "output.threads" : args.threads,
    }
    block = {"simulate": "simulation"}.get(args.command, args.command)

    if args.command in ("simulate", "hj", "equilibrium"):
        overrides[f"{block}.mass"] = args.mass
    if args.command in ("simulate", "hj"):
        overrides[f"{block}.init"] = args.init
        overrides[f"{block}.n"]    = args.n

    if args.command == "simulate":
        overrides.update({
                "simulation.t_end"         : args.t_end,
                "simulation.rtol"          : args.rtol,
                "simulation.atol"          : args.atol,
                "simulation.mode"          : args.mode,
                "simulation.output_dt"     : args.output_dt,
                "simulation.output_stride" : args.output_stride,
                "simulation.k_export"      : args.k_export,
        })
    elif args.command == "equilibrium":
        overrides["equilibrium.length"] = args.length
    elif args.command == "hj":
        overrides.update({
                "hj.form"     : args.form,
                "hj.grid_dz"  : args.grid_dz,
                "hj.cutoff_n" : args.cutoff_n,
                "hj.eps"      : args.eps,
                "hj.t_final"  : args.t_final,
        })
    elif args.command == "verify":
        overrides["verify.suite"] = args.suite
        overrides["verify.quick"] = args.quick
    elif args.command == "bench":
        overrides["bench.sizes"]       = args.sizes
        overrides["bench.repetitions"] = args.repetitions
        if args.mode in ("direct", "fft"):
            overrides["bench.modes"] = [args.mode]
    return overrides


def setup_logging(level: str):
    logging.basicConfig(
            level=level,
            format="%(message)s",
            datefmt="[%X]",
            handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
            force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    console = Console(quiet=args.quiet)

    try:
        config = load_config(args.config or DEFAULT_CONFIG, collect_overrides(args))
    except (ConfigValidationError, ValueError, FileNotFoundError) as e:
        logger.error("configuration: %s", e)
        return EXIT_VALIDATION

    report_tables.display_config_summary(config, console)
    manager = RunManager.get_instance(config)

    try:
        result = manager.run()
    except (NumericalFailure, ArithmeticError) as e:
        logger.error("%s failed: %s", config.command, e)
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error("%s rejected its input: %s", config.command, e)
        return EXIT_VALIDATION

    display = {
            "simulate"    : report_tables.display_simulation,
            "equilibrium" : report_tables.display_equilibrium,
            "hj"          : report_tables.display_hj,
            "verify"      : report_tables.display_verify,
            "bench"       : report_tables.display_bench,
    }
    display[config.command](result, console)

    if config.command == "verify" and not result.passed:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
