"""Command routing, exit statuses, run configuration files and manifests."""
from datetime import datetime, timezone
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence
import argparse
import logging
import secrets

from config import TOOL_VERSION, get_settings, read_config_file
from errors import DataError
from schemas import MaxFeaturesMode, PollutantKind, RunManifest

logger = logging.getLogger(__name__)


class ExitStatus(IntEnum):
    OK = 0
    USAGE = 1
    DATA = 2


class CommandError(Exception):
    """Raised by commands and the parser; `detail` is printed to stderr"""

    def __init__(self, status_code: ExitStatus, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise CommandError(ExitStatus.USAGE, f"{self.prog}: {message}")


class Option(NamedTuple):
    flags: tuple
    kwargs: dict


def option(*flags, **kwargs) -> Option:
    return Option(flags, kwargs)


class CommandResult(NamedTuple):
    """What a command hands back for the manifest and the summary line"""
    outputs: List[Path]
    summary: str
    inputs: Dict[str, List[str]] = {}


class Command(NamedTuple):
    name: str
    help: str
    handler: Callable[[argparse.Namespace], CommandResult]
    options: List[Option]
    parents: List[Callable[[], argparse.ArgumentParser]]


class CommandRouter:
    """Collects subcommands; main.py includes every router into one parser"""

    def __init__(self):
        self.commands: List[Command] = []

    def command(self, name: str, help: str, options: Sequence[Option] = (),
                parents: Sequence[Callable[[], argparse.ArgumentParser]] = ()):
        def register(handler):
            self.commands.append(Command(name, help, handler, list(options), list(parents)))
            return handler
        return register


# Argument types
def pollutant_arg(value: str) -> PollutantKind:
    try:
        return PollutantKind(value.strip().upper().replace(".", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown pollutant {value!r}; choose from {', '.join(p.value for p in PollutantKind)}"
        )


def max_features_arg(value: str) -> MaxFeaturesMode:
    try:
        return MaxFeaturesMode.parse(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"max features must be all, sqrt, log2 or auto, got {value!r}")


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}")
    return number


def fraction_arg(value: str) -> float:
    number = float(value)
    if not 0.0 <= number <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value!r}")
    return number


def common_options() -> argparse.ArgumentParser:
    """Options every subcommand accepts"""
    settings = get_settings()
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="flat `key = value` file with flag defaults")
    parent.add_argument("--seed", type=int, default=settings.seed,
                        help="seed for every random choice; picked and recorded when omitted")
    parent.add_argument("--threads", type=positive_int, default=settings.threads,
                        help="worker threads (AIRQ_THREADS); 1 is the reference for exact comparisons")
    parent.add_argument("--log-level", default=settings.log_level,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    return parent


def forest_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--n-estimators", type=positive_int, default=300, help="trees per forest (default 300)")
    parent.add_argument("--max-features", type=max_features_arg, default=None,
                        help="features tried per split: all, sqrt or log2 ('auto' means all); "
                             "default sqrt, all for O3")
    parent.add_argument("--min-samples-split", type=int, default=2)
    parent.add_argument("--min-samples-leaf", type=positive_int, default=1)
    return parent


# Run configuration files
def _config_value(action: argparse.Action, raw: str):
    if action.nargs == 0:
        text = raw.strip().lower()
        if text not in ("true", "false", "yes", "no", "1", "0"):
            raise CommandError(ExitStatus.USAGE, f"config key {action.dest}: expected true or false, got {raw!r}")
        return text in ("true", "yes", "1")
    if action.nargs in ("+", "*") or isinstance(action.nargs, int):
        items = raw.split()
        return [action.type(item) if action.type else item for item in items]
    return raw


def apply_config_file(parser: argparse.ArgumentParser, path: str):
    """File values become parser defaults; flags given on the command line still win"""
    try:
        values = read_config_file(path)
    except DataError as exc:
        raise CommandError(ExitStatus.USAGE, str(exc))

    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise CommandError(ExitStatus.USAGE, f"{path}: unknown config keys: {', '.join(unknown)}")

    defaults = {}
    for key, raw in values.items():
        action = actions[key]
        defaults[key] = _config_value(action, raw)
        # A value from the file satisfies a required flag
        action.required = False
    parser.set_defaults(**defaults)
    logger.debug("Applied %d config values from %s", len(defaults), path)


def resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        logger.info("No --seed given; using %d", args.seed)
    if args.seed < 0:
        raise CommandError(ExitStatus.USAGE, f"--seed must be non-negative, got {args.seed}")
    return args.seed


def resolve_max_features(args: argparse.Namespace, pollutant: Optional[PollutantKind]) -> MaxFeaturesMode:
    if getattr(args, "max_features", None) is not None:
        return args.max_features
    if pollutant is not None:
        return pollutant.default_max_features
    return MaxFeaturesMode.sqrt


# Manifests
def manifest_path(output: Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def _jsonable(value: Any):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return str(value)


def write_manifest(subcommand: str, args: argparse.Namespace, result: CommandResult,
                   started_at: datetime) -> Optional[Path]:
    if not result.outputs:
        return None
    skip = {"handler", "command", "config"}
    config = {key: _jsonable(value) for key, value in sorted(vars(args).items()) if key not in skip}
    manifest = RunManifest(
        subcommand=subcommand,
        inputs=result.inputs,
        outputs=[str(p) for p in result.outputs],
        seed=getattr(args, "seed", None),
        config=config,
        tool_version=TOOL_VERSION,
        started_at=started_at,
        finished_at=datetime.now(timezone.utc),
    )
    path = manifest_path(result.outputs[0])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path
