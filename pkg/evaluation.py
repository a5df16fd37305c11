"""Fold construction, the three evaluation protocols and the parameter sweep.

Method A holds out random rows, Method B holds out a whole year and Method C
holds out whole stations. Metrics are averaged over folds, not pooled.
"""
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union
import logging
import time

import numpy as np
import pandas as pd

from dataset import FeatureTable
from errors import DataError
from forest import fit, predict
from interchange import write_csv
from metrics import partial_metrics
from schemas import (
    FoldAssignment,
    FoldReport,
    ForestConfig,
    ImportanceReport,
    MaxFeaturesMode,
    MethodReport,
    MetricsReport,
    StationMeta,
    SweepEntry,
    SweepResult,
)

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 10
SWEEP_FOLDS = 3
SWEEP_ESTIMATORS = tuple(range(50, 501, 50))
SWEEP_MODES = (MaxFeaturesMode.all, MaxFeaturesMode.sqrt, MaxFeaturesMode.log2)
TEST_FRACTION = 0.2

_QUANT_MAX = (1 << 16) - 1


# Fold construction
def _check_k(k: int, n: int, what: str):
    if k < 1:
        raise DataError(f"k must be at least 1, got {k}")
    if k > n:
        raise DataError(f"cannot make {k} folds from {n} {what}")


def kfold_random(n: int, k: int, seed: int) -> FoldAssignment:
    """Seeded shuffle of 0..n-1 cut into k contiguous folds"""
    _check_k(k, n, "rows")
    order = np.random.default_rng(seed).permutation(n)
    return FoldAssignment(folds=[[int(i) for i in chunk] for chunk in np.array_split(order, k)])


def _part1by1(n: int) -> int:
    # Spread the low 16 bits so a second coordinate can interleave
    n &= 0x0000FFFF
    n = (n ^ (n << 8)) & 0x00FF00FF
    n = (n ^ (n << 4)) & 0x0F0F0F0F
    n = (n ^ (n << 2)) & 0x33333333
    return (n ^ (n << 1)) & 0x55555555


def morton_code(x: int, y: int) -> int:
    """Z-order code of two 16-bit integers, x on the even bits"""
    return _part1by1(x) | (_part1by1(y) << 1)


def _quantize(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros(values.size, dtype=np.int64)
    return np.round((values - lo) / (hi - lo) * _QUANT_MAX).astype(np.int64)


def station_folds(stations: Sequence[StationMeta], k: int, seed: int) -> FoldAssignment:
    """Spatially spread station folds.

    Stations are ordered along a Z-order curve over their bounding box (ties
    by station_id) and dealt round-robin; the seed rotates the starting fold.
    """
    _check_k(k, len(stations), "stations")
    lats = np.array([s.location.latitude for s in stations], dtype=np.float64)
    lons = np.array([s.location.longitude for s in stations], dtype=np.float64)
    codes = [morton_code(int(x), int(y)) for x, y in zip(_quantize(lons), _quantize(lats))]
    ordered = sorted(zip(codes, [s.station_id for s in stations]))

    folds: List[List[str]] = [[] for _ in range(k)]
    offset = int(seed) % k
    for i, (_, station_id) in enumerate(ordered):
        folds[(i + offset) % k].append(station_id)
    return FoldAssignment(folds=folds)


def train_test_split(n: int, seed: int, test_fraction: float = TEST_FRACTION) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded random hold-out; both index arrays ascending"""
    if n < 2:
        raise DataError("a hold-out split needs at least two rows")
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n_test = min(max(1, int(round(n * test_fraction))), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(fold)]).generate_state(1, np.uint64)[0])


# Protocols
def _evaluate_fold(table: FeatureTable, train_idx: np.ndarray, test_idx: np.ndarray,
                   config: ForestConfig, fold: int, threads: int) -> FoldReport:
    train, test = table.take(train_idx), table.take(test_idx)
    fold_config = config.model_copy(update={"seed": fold_seed(config.seed, fold)})
    model = fit(train, fold_config, threads)
    metrics = partial_metrics(test.targets, predict(model, test, threads))
    flagged = metrics.r2 is None
    if flagged:
        logger.warning("Fold %d: test targets have zero variance, r2 excluded from the mean", fold)
    else:
        logger.debug("Fold %d: r2=%.4f rmse=%.4f bias=%.4f", fold, metrics.r2, metrics.rmse, metrics.bias)
    return FoldReport(fold=fold, n_train=len(train), n_test=len(test), metrics=metrics, flagged=flagged)


def summarize(method: str, folds: List[FoldReport]) -> MethodReport:
    """Mean of per-fold metrics; flagged folds do not enter the mean r2"""
    r2 = [f.metrics.r2 for f in folds if not f.flagged]
    return MethodReport(
        method=method,
        folds=folds,
        mean_r2=float(np.mean(r2)) if r2 else None,
        mean_rmse=float(np.mean([f.metrics.rmse for f in folds])),
        mean_bias=float(np.mean([f.metrics.bias for f in folds])),
    )


def _require_targets(table: FeatureTable, role: str):
    if len(table) == 0:
        raise DataError(f"{role} table is empty")
    if not table.has_targets:
        raise DataError(f"{role} table has rows without targets")


def _run_folds(method: str, table: FeatureTable, assignment: List[np.ndarray],
               config: ForestConfig, threads: int) -> MethodReport:
    n = len(table)
    reports = []
    for fold, test_idx in enumerate(assignment):
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        reports.append(_evaluate_fold(table, np.nonzero(train_mask)[0], np.sort(test_idx), config, fold, threads))
    report = summarize(method, reports)
    logger.info("Method %s over %d folds: mean r2=%s rmse=%.4f bias=%.4f", method, len(reports),
                "n/a" if report.mean_r2 is None else f"{report.mean_r2:.4f}", report.mean_rmse, report.mean_bias)
    return report


def run_method_a(table: FeatureTable, config: ForestConfig, k: int = DEFAULT_FOLDS, threads: int = 1) -> MethodReport:
    """Random k-fold cross-validation over rows"""
    _require_targets(table, "training")
    folds = kfold_random(len(table), k, config.seed)
    return _run_folds("a", table, [np.asarray(f, dtype=np.int64) for f in folds.folds], config, threads)


def run_method_b(train_table: FeatureTable, test_table: FeatureTable, config: ForestConfig,
                 threads: int = 1) -> MetricsReport:
    """Fit on one year, evaluate on another"""
    _require_targets(train_table, "training")
    _require_targets(test_table, "test")
    if train_table.pollutant and test_table.pollutant and train_table.pollutant != test_table.pollutant:
        raise DataError(
            f"pollutant mismatch: training {train_table.pollutant.value}, test {test_table.pollutant.value}"
        )
    shared = set(train_table.frame["year"].astype(int)) & set(test_table.frame["year"].astype(int))
    if shared:
        raise DataError(f"training and test tables share years: {sorted(shared)}")

    model = fit(train_table, config, threads)
    metrics = partial_metrics(test_table.targets, predict(model, test_table, threads))
    logger.info("Method b: %d training rows, %d test rows, rmse=%.4f bias=%.4f",
                len(train_table), len(test_table), metrics.rmse, metrics.bias)
    return metrics


def method_b_report(metrics: MetricsReport, n_train: int) -> MethodReport:
    fold = FoldReport(fold=0, n_train=n_train, n_test=metrics.n, metrics=metrics, flagged=metrics.r2 is None)
    return summarize("b", [fold])


def run_method_c(table: FeatureTable, stations: Sequence[StationMeta], config: ForestConfig,
                 k: int = DEFAULT_FOLDS, threads: int = 1) -> MethodReport:
    """Station-blocked k-fold: every row of a test station is held out"""
    _require_targets(table, "training")
    known = {s.station_id for s in stations}
    ids = table.station_ids
    unknown = sorted(set(ids) - known)
    if unknown:
        raise DataError(f"table rows reference unknown stations: {', '.join(unknown[:5])}")

    present = set(ids)
    used = [s for s in stations if s.station_id in present]
    if len(used) < len(stations):
        logger.warning("Method c: %d stations have no rows and are left out of the folds",
                       len(stations) - len(used))

    folds = station_folds(used, k, config.seed)
    assignment = [np.nonzero(np.isin(ids, members))[0] for members in folds.folds]
    return _run_folds("c", table, assignment, config, threads)


def hyperparameter_sweep(
    table: FeatureTable,
    seed: int,
    estimators: Iterable[int] = SWEEP_ESTIMATORS,
    modes: Iterable[MaxFeaturesMode] = SWEEP_MODES,
    k: int = SWEEP_FOLDS,
    threads: int = 1,
) -> SweepResult:
    """Mean k-fold MSE and wall-clock seconds per (n_estimators, mode) pair.

    All pairs share one fold assignment. Entries run one after another so
    timings are not skewed by each other.
    """
    _require_targets(table, "training")
    folds = kfold_random(len(table), k, seed)
    splits = []
    for members in folds.folds:
        test_idx = np.sort(np.asarray(members, dtype=np.int64))
        train_mask = np.ones(len(table), dtype=bool)
        train_mask[test_idx] = False
        splits.append((table.take(np.nonzero(train_mask)[0]), table.take(test_idx)))

    entries = []
    for mode in modes:
        for n_estimators in estimators:
            config = ForestConfig(n_estimators=n_estimators, max_features_mode=mode, seed=seed)
            started = time.perf_counter()
            errors = []
            for train, test in splits:
                model = fit(train, config, threads)
                residual = predict(model, test, threads) - test.targets
                errors.append(float(np.mean(residual ** 2)))
            seconds = max(time.perf_counter() - started, 1e-9)
            entry = SweepEntry(n_estimators=n_estimators, max_features=mode,
                               mean_mse=float(np.mean(errors)), seconds=seconds)
            logger.info("Sweep %s x %d: mse=%.4f in %.2fs", mode.value, n_estimators, entry.mean_mse, seconds)
            entries.append(entry)
    return SweepResult(entries=entries)


# Report files
def _fmt(value: Optional[float]) -> str:
    return "" if value is None else format(value, ".17g")


def write_method_report(report: MethodReport, path: Union[str, Path]) -> Path:
    """`fold,r2,rmse,bias`, one row per fold and a closing `mean` row"""
    rows = [
        {"fold": str(f.fold), "r2": _fmt(f.metrics.r2), "rmse": _fmt(f.metrics.rmse), "bias": _fmt(f.metrics.bias)}
        for f in report.folds
    ]
    rows.append({"fold": "mean", "r2": _fmt(report.mean_r2), "rmse": _fmt(report.mean_rmse),
                 "bias": _fmt(report.mean_bias)})
    return write_csv(pd.DataFrame(rows, columns=["fold", "r2", "rmse", "bias"]), path)


def write_sweep(result: SweepResult, path: Union[str, Path]) -> Path:
    frame = pd.DataFrame(
        [{"n_estimators": e.n_estimators, "max_features": e.max_features.value,
          "mean_mse": e.mean_mse, "seconds": e.seconds} for e in result.entries],
        columns=["n_estimators", "max_features", "mean_mse", "seconds"],
    )
    return write_csv(frame, path)


def write_importance(report: ImportanceReport, path: Union[str, Path]) -> Path:
    frame = pd.DataFrame(
        [{"feature": f.feature, "gini": _fmt(f.gini), "permutation_mean": _fmt(f.permutation_mean),
          "permutation_std": _fmt(f.permutation_std)} for f in report.features],
        columns=["feature", "gini", "permutation_mean", "permutation_std"],
    )
    return write_csv(frame, path)
