from pathlib import Path

from cli import CommandError, CommandResult, CommandRouter, ExitStatus, option
from commands.tables import expand_fields
from errors import GridMismatchError
from forest import load_model
from interchange import read_elevation, read_grid_field, read_landcover, read_meteo, read_predictions, read_spec, write_predictions
from mapping import annual_mean, build_prediction_grid, monthly_stats, predict_grid, write_ascii_grid, write_monthly_stats
from schemas import StationType

router = CommandRouter()


@router.command(
    "predict-grid",
    help="predict every grid cell of every overpass with a trained model",
    options=[
        option("--model", required=True, help="model file from `train`"),
        option("--fields", nargs="+", required=True, help="grid field files or directories of them"),
        option("--meteo", required=True, help="directory of hourly meteo grids"),
        option("--landcover", required=True, help="land cover CSV with its .spec sidecar"),
        option("--elevation", required=True, help="elevation CSV (row,col,altitude_m) with its .spec sidecar"),
        option("--station-type", type=int, choices=[1, 2, 3], default=int(StationType.background),
               help="station type code given to every cell (default 3, background)"),
        option("--out", required=True, help="predictions CSV"),
    ],
)
def predict_grid_command(args) -> CommandResult:
    model = load_model(args.model)
    field_paths = expand_fields(args.fields)
    fields = [read_grid_field(p) for p in field_paths]
    spec = fields[0].spec
    if any(f.spec != spec for f in fields):
        raise GridMismatchError("grid fields disagree on the grid spec")

    grid = build_prediction_grid(spec, read_landcover(args.landcover), read_elevation(args.elevation),
                                 StationType(args.station_type))
    predictions = predict_grid(model, grid, fields, read_meteo(args.meteo), args.threads)
    out = write_predictions(predictions, args.out)
    return CommandResult(
        outputs=[out],
        summary=f"wrote {len(predictions)} cell predictions over {len(fields)} overpasses to {out}",
        inputs={
            "model": [str(args.model)],
            "fields": [str(p) for p in field_paths],
            "meteo": [str(args.meteo)],
            "landcover": [str(args.landcover)],
            "elevation": [str(args.elevation)],
        },
    )


@router.command(
    "aggregate",
    help="annual-mean raster (ESRI ASCII) and monthly box-plot statistics of grid predictions",
    options=[
        option("--predictions", required=True, help="predictions CSV from `predict-grid`"),
        option("--spec", required=True, help="grid spec of the predictions"),
        option("--annual", help="output .asc raster of the per-cell mean"),
        option("--monthly", help="output CSV of monthly statistics"),
    ],
)
def aggregate_command(args) -> CommandResult:
    if not args.annual and not args.monthly:
        raise CommandError(ExitStatus.USAGE, "give --annual, --monthly or both")
    predictions = read_predictions(args.predictions)
    spec = read_spec(args.spec)

    outputs, parts = [], []
    if args.annual:
        raster = annual_mean(predictions, spec)
        outputs.append(write_ascii_grid(raster, args.annual))
        parts.append(f"annual mean in {args.annual}")
    if args.monthly:
        stats = monthly_stats(predictions)
        outputs.append(write_monthly_stats(stats, args.monthly))
        parts.append(f"{len(stats)} months in {args.monthly}")

    return CommandResult(
        outputs=[Path(p) for p in outputs],
        summary="; ".join(parts),
        inputs={"predictions": [str(args.predictions)], "spec": [str(args.spec)]},
    )
