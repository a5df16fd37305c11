from pathlib import Path
import logging

from cli import CommandError, CommandResult, CommandRouter, ExitStatus, fraction_arg, option, pollutant_arg
from interchange import read_spec, read_swath, write_grid_field
from regrid import bin_swath
from schemas import PollutantKind

logger = logging.getLogger(__name__)

router = CommandRouter()


def field_path(out_dir: Path, swath: Path) -> Path:
    return out_dir / f"{swath.stem}.field.csv"


@router.command(
    "regrid",
    help="bin swath CSVs onto the satellite grid, one grid field per overpass",
    options=[
        option("swaths", nargs="+", help="swath CSV files (lat,lon,value,qa,time_unix)"),
        option("--spec", required=True, help="grid spec file of the study area"),
        option("--pollutant", type=pollutant_arg, default=PollutantKind.NO2),
        option("--qa", type=fraction_arg, default=None,
               help="minimum qa value; default 0.75, 0.8 for aerosol index products"),
        option("--cell", type=float, default=None, help="cell size in degrees (default: the spec's, 0.03)"),
        option("--out", default="fields", help="output directory"),
    ],
)
def regrid_command(args) -> CommandResult:
    """Bin every swath file into a grid field"""
    spec = read_spec(args.spec)
    if args.cell is not None:
        if args.cell <= 0:
            raise CommandError(ExitStatus.USAGE, f"--cell must be positive, got {args.cell}")
        if args.cell != spec.cell_size:
            spec = spec.with_cell_size(args.cell)
    qa = args.qa if args.qa is not None else args.pollutant.default_qa_threshold
    args.qa = qa

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    swaths = [Path(p) for p in args.swaths]
    stems = [p.stem for p in swaths]
    if len(set(stems)) != len(stems):
        raise CommandError(ExitStatus.USAGE, "swath file names must be unique")

    written = []
    filled = 0
    for swath in swaths:
        field = bin_swath(read_swath(swath), spec, qa, args.pollutant.satellite_variable, args.threads)
        written.append(write_grid_field(field, field_path(out_dir, swath)))
        filled += field.n_filled
        logger.info("Regridded %s: %d cells filled", swath.name, field.n_filled)

    return CommandResult(
        outputs=[out_dir] + written,
        summary=f"regridded {len(written)} swaths into {out_dir} ({filled} filled cells, qa >= {qa})",
        inputs={"spec": [str(args.spec)], "swaths": [str(p) for p in swaths]},
    )
