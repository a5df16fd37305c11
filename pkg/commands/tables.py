from pathlib import Path
from typing import List

from cli import CommandError, CommandResult, CommandRouter, ExitStatus, option, pollutant_arg, positive_int
from dataset import build_table, write_table
from interchange import read_grid_field, read_landcover, read_meteo, read_station_series, read_stations
from join import DEFAULT_MAX_GAP

router = CommandRouter()


def expand_fields(paths: List[str]) -> List[Path]:
    """Field files, with directories expanded to their *.field.csv files"""
    found = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            found.extend(sorted(path.glob("*.field.csv")))
        else:
            found.append(path)
    if not found:
        raise CommandError(ExitStatus.USAGE, "no grid field files given")
    return found


@router.command(
    "build-dataset",
    help="join stations, grid fields, meteorology and land cover into a feature table",
    options=[
        option("--pollutant", type=pollutant_arg, required=True),
        option("--stations", required=True, help="station metadata CSV"),
        option("--series", required=True, help="station observation CSV (interval-start labelled)"),
        option("--fields", nargs="+", required=True, help="grid field files or directories of them"),
        option("--meteo", required=True, help="directory of hourly meteo grids"),
        option("--landcover", required=True, help="land cover CSV with its .spec sidecar"),
        option("--max-gap", type=positive_int, default=DEFAULT_MAX_GAP,
               help="largest gap in seconds bridged when interpolating observations"),
        option("--out", required=True, help="feature table CSV"),
    ],
)
def build_dataset_command(args) -> CommandResult:
    stations = read_stations(args.stations)
    series = read_station_series(args.series, stations)
    field_paths = expand_fields(args.fields)
    fields = [read_grid_field(p) for p in field_paths]
    meteo = read_meteo(args.meteo)
    lc = read_landcover(args.landcover)

    table = build_table(series, fields, meteo, lc, args.pollutant, max_gap=args.max_gap, threads=args.threads)
    out = write_table(table, args.out)
    return CommandResult(
        outputs=[out],
        summary=f"wrote {len(table)} {args.pollutant.value} rows to {out}",
        inputs={
            "stations": [str(args.stations)],
            "series": [str(args.series)],
            "fields": [str(p) for p in field_paths],
            "meteo": [str(args.meteo)],
            "landcover": [str(args.landcover)],
        },
    )
