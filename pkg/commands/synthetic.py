from pathlib import Path

from cli import CommandResult, CommandRouter, option, positive_int, resolve_seed
from dataset import write_table
from interchange import write_stations
from seed_data import SUITES, make_suite, write_pipeline

router = CommandRouter()


@router.command(
    "synth",
    help="generate a synthetic suite: feature tables (smooth, station-effects, importance, noise) "
         "or raw pipeline inputs (pipeline)",
    options=[
        option("--suite", required=True, choices=SUITES),
        option("--out", required=True, help="output directory"),
        option("--rows", type=positive_int, default=None, help="table rows (table suites)"),
        option("--stations", type=positive_int, default=None, help="number of stations"),
        option("--noise", type=float, default=0.5, help="noise standard deviation (smooth suites)"),
        option("--year", type=int, default=2019),
        option("--overpasses", type=positive_int, default=30, help="overpasses (pipeline suite)"),
        option("--spacing-days", type=positive_int, default=2, help="days between overpasses (pipeline suite)"),
    ],
)
def synth_command(args) -> CommandResult:
    seed = resolve_seed(args)
    out = Path(args.out)

    if args.suite == "pipeline":
        extra = {} if args.stations is None else {"n_stations": args.stations}
        paths = write_pipeline(out, seed=seed, n_overpasses=args.overpasses, spacing_days=args.spacing_days,
                               year=args.year, **extra)
        return CommandResult(
            outputs=[out] + list(paths.values()),
            summary=f"wrote pipeline inputs ({args.overpasses} overpasses) to {out}",
        )

    suite = make_suite(args.suite, args.rows, args.stations, seed=seed, year=args.year, noise=args.noise)
    table_path = write_table(suite.table, out / "table.csv")
    stations_path = write_stations(suite.stations, out / "stations.csv")
    return CommandResult(
        outputs=[table_path, stations_path],
        summary=f"wrote {len(suite.table)} {args.suite} rows and {len(suite.stations)} stations to {out}",
    )
