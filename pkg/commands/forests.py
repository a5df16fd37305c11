from pathlib import Path

from pydantic import ValidationError

from cli import (
    CommandError,
    CommandResult,
    CommandRouter,
    ExitStatus,
    forest_options,
    max_features_arg,
    option,
    pollutant_arg,
    positive_int,
    resolve_max_features,
    resolve_seed,
)
from dataset import read_table
from evaluation import (
    DEFAULT_FOLDS,
    SWEEP_ESTIMATORS,
    SWEEP_FOLDS,
    SWEEP_MODES,
    TEST_FRACTION,
    hyperparameter_sweep,
    method_b_report,
    run_method_a,
    run_method_b,
    run_method_c,
    train_test_split,
    write_importance,
    write_method_report,
    write_sweep,
)
from forest import fit, importance_report, save_model
from interchange import read_stations
from schemas import ForestConfig

router = CommandRouter()

DATA_OPTIONS = [
    option("--data", required=True, help="feature table CSV"),
    option("--pollutant", type=pollutant_arg, default=None,
           help="pollutant of the table; picks the max-features default"),
]


def forest_config(args) -> ForestConfig:
    try:
        return ForestConfig(
            n_estimators=args.n_estimators,
            max_features_mode=resolve_max_features(args, args.pollutant),
            min_samples_split=args.min_samples_split,
            min_samples_leaf=args.min_samples_leaf,
            seed=resolve_seed(args),
        )
    except ValidationError as exc:
        raise CommandError(ExitStatus.USAGE, f"invalid forest options: {exc.errors()[0]['msg']}")


def _mean(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


@router.command(
    "tune",
    help="sweep n_estimators 50..500 against max features all/sqrt/log2 with 3-fold CV",
    options=DATA_OPTIONS + [
        option("--estimators", type=positive_int, nargs="+", default=list(SWEEP_ESTIMATORS)),
        option("--modes", type=max_features_arg, nargs="+", default=list(SWEEP_MODES)),
        option("--folds", type=positive_int, default=SWEEP_FOLDS),
        option("--out", default="sweep.csv", help="sweep CSV"),
    ],
)
def tune_command(args) -> CommandResult:
    table = read_table(args.data, args.pollutant)
    result = hyperparameter_sweep(table, resolve_seed(args), args.estimators, args.modes, args.folds, args.threads)
    out = write_sweep(result, args.out)
    best = result.best()
    return CommandResult(
        outputs=[out],
        summary=f"wrote {len(result.entries)} sweep entries to {out}; lowest mse "
                f"{best.mean_mse:.4f} at {best.n_estimators} trees, {best.max_features.value}",
        inputs={"data": [str(args.data)]},
    )


@router.command(
    "train",
    help="fit a random forest on a feature table (defaults: 300 trees, sqrt; all for O3)",
    options=DATA_OPTIONS + [option("--out", required=True, help="model file")],
    parents=[forest_options],
)
def train_command(args) -> CommandResult:
    table = read_table(args.data, args.pollutant)
    config = forest_config(args)
    model = fit(table, config, args.threads)
    out = save_model(model, args.out)
    return CommandResult(
        outputs=[out],
        summary=f"trained {config.n_estimators} trees ({config.max_features_mode.value}) "
                f"on {len(table)} rows; model in {out}",
        inputs={"data": [str(args.data)]},
    )


@router.command(
    "evaluate",
    help="method a: random k-fold; b: train on one year, test on another; c: station-blocked k-fold",
    options=DATA_OPTIONS + [
        option("--method", required=True, type=str.lower, choices=["a", "b", "c"]),
        option("--test-data", help="feature table of the held-out year (method b)"),
        option("--stations", help="station metadata CSV (method c)"),
        option("--k", type=positive_int, default=DEFAULT_FOLDS, help="folds for methods a and c"),
        option("--out", default=None, help="report CSV (default: method_<m>.csv)"),
    ],
    parents=[forest_options],
)
def evaluate_command(args) -> CommandResult:
    table = read_table(args.data, args.pollutant)
    config = forest_config(args)
    inputs = {"data": [str(args.data)]}

    if args.method == "a":
        report = run_method_a(table, config, args.k, args.threads)
    elif args.method == "b":
        if not args.test_data:
            raise CommandError(ExitStatus.USAGE, "method b needs --test-data")
        test = read_table(args.test_data, args.pollutant)
        inputs["test_data"] = [str(args.test_data)]
        report = method_b_report(run_method_b(table, test, config, args.threads), len(table))
    else:
        if not args.stations:
            raise CommandError(ExitStatus.USAGE, "method c needs --stations")
        stations = read_stations(args.stations)
        inputs["stations"] = [str(args.stations)]
        report = run_method_c(table, stations, config, args.k, args.threads)

    if args.out is None:
        args.out = f"method_{args.method}.csv"
    out = write_method_report(report, args.out)
    return CommandResult(
        outputs=[out],
        summary=f"method {args.method}: mean r2 {_mean(report.mean_r2)}, rmse {report.mean_rmse:.4f}, "
                f"bias {report.mean_bias:.4f} over {len(report.folds)} folds; report in {out}",
        inputs=inputs,
    )


@router.command(
    "importance",
    help="Gini and permutation importance from an 80/20 hold-out split",
    options=DATA_OPTIONS + [
        option("--repeats", type=positive_int, default=10, help="shuffles per feature"),
        option("--test-fraction", type=float, default=TEST_FRACTION),
        option("--out", required=True, help="importance CSV"),
    ],
    parents=[forest_options],
)
def importance_command(args) -> CommandResult:
    table = read_table(args.data, args.pollutant)
    config = forest_config(args)
    train_idx, test_idx = train_test_split(len(table), config.seed, args.test_fraction)
    model = fit(table.take(train_idx), config, args.threads)
    report = importance_report(model, table.take(test_idx), args.repeats, config.seed, args.threads)
    out = write_importance(report, args.out)
    top = report.ranked("gini")[0]
    return CommandResult(
        outputs=[out],
        summary=f"wrote importance of {len(report.features)} features to {out}; "
                f"top by gini: {top.feature} ({top.gini:.3f})",
        inputs={"data": [str(Path(args.data))]},
    )
