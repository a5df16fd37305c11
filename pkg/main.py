from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple
import argparse
import logging
import sys

from pydantic import ValidationError

from cli import ArgumentParser, CommandError, ExitStatus, apply_config_file, common_options, write_manifest
from config import TOOL_VERSION
from errors import AirQualityError

# Import command modules
from commands import forests, maps, swaths, synthetic, tables

logger = logging.getLogger(__name__)

ROUTERS = [swaths.router, tables.router, forests.router, maps.router, synthetic.router]

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> Tuple[ArgumentParser, Dict[str, ArgumentParser]]:
    parser = ArgumentParser(
        prog="airq",
        description="Ground-level air quality from satellite columns, meteorology and land cover "
                    "with a random forest",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    subparsers.required = True

    commands = {}
    for router in ROUTERS:
        for command in router.commands:
            sub = subparsers.add_parser(
                command.name,
                help=command.help,
                description=command.help,
                parents=[common_options()] + [make() for make in command.parents],
                formatter_class=argparse.ArgumentDefaultsHelpFormatter,
            )
            for opt in command.options:
                sub.add_argument(*opt.flags, **opt.kwargs)
            sub.set_defaults(handler=command.handler)
            commands[command.name] = sub
    return parser, commands


def configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT,
                        stream=sys.stderr, force=True)


def _config_path(argv: List[str]) -> Optional[str]:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def _subcommand(argv: List[str], commands: Dict[str, ArgumentParser]) -> Optional[str]:
    for token in argv:
        if not token.startswith("-"):
            return token if token in commands else None
    return None


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit status"""
    argv = list(sys.argv[1:] if argv is None else argv)
    started_at = datetime.now(timezone.utc)
    try:
        parser, commands = build_parser()
        name = _subcommand(argv, commands)
        config_path = _config_path(argv)
        if name and config_path:
            apply_config_file(commands[name], config_path)
        args = parser.parse_args(argv)
        configure_logging(args.log_level)

        result = args.handler(args)
        manifest = write_manifest(args.command, args, result, started_at)
        if manifest is not None:
            logger.info("Manifest written to %s", manifest)
        print(result.summary)
        return int(ExitStatus.OK)
    except CommandError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return int(exc.status_code)
    except ValidationError as exc:
        error = exc.errors()[0]
        where = ".".join(str(part) for part in error["loc"])
        print(f"error: invalid {exc.title}{' ' + where if where else ''}: {error['msg']}", file=sys.stderr)
        return int(ExitStatus.DATA)
    except AirQualityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitStatus.DATA)
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return int(ExitStatus.DATA)
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(run())
