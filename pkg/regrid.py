"""Level-2 swath samples to level-3 grid cells.

Point binning: every accepted sample lands in the half-open cell containing its
centre coordinate. Per-cell sums are accumulated in input order within each
partition, and partitions are merged in partition order, so a fixed worker
count always reproduces the same bits.
"""
from typing import Optional, Tuple
import logging

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from errors import DataError
from interchange import SWATH_COLUMNS
from models import GridField
from schemas import GeoPoint, GridSpec

logger = logging.getLogger(__name__)

# Edge coordinates closer than this (in cell units) snap to the edge
_EDGE_SNAP = 1e-9


def _floor_index(offset: np.ndarray, cell_size: float) -> np.ndarray:
    scaled = offset / cell_size
    nearest = np.round(scaled)
    scaled = np.where(np.abs(scaled - nearest) < _EDGE_SNAP, nearest, scaled)
    return np.floor(scaled).astype(np.int64)


def cell_indices(lats, lons, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized cell lookup; returns rows, cols and an in-bounds mask"""
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    rows = _floor_index(lats - spec.lat_min, spec.cell_size)
    cols = _floor_index(lons - spec.lon_min, spec.cell_size)
    inside = (rows >= 0) & (rows < spec.n_rows) & (cols >= 0) & (cols < spec.n_cols)
    return rows, cols, inside


def cell_index(p: GeoPoint, spec: GridSpec) -> Optional[Tuple[int, int]]:
    """Row/col of the cell containing a point, or None outside the grid"""
    rows, cols, inside = cell_indices([p.latitude], [p.longitude], spec)
    if not inside[0]:
        return None
    return int(rows[0]), int(cols[0])


def _accumulate(flat: np.ndarray, values: np.ndarray, n_cells: int):
    # bincount sums weights sequentially in input order
    sums = np.bincount(flat, weights=values, minlength=n_cells)
    counts = np.bincount(flat, minlength=n_cells)
    return sums, counts


def bin_swath(
    samples: pd.DataFrame,
    spec: GridSpec,
    qa_threshold: float,
    variable: str = "",
    threads: int = 1,
) -> GridField:
    """Average accepted samples (qa >= threshold, inside the grid) per cell.

    `samples` has the swath columns lat, lon, value, qa, time_unix. With
    `threads` > 1 the samples are cut into that many contiguous partitions.
    """
    if not 0.0 <= qa_threshold <= 1.0:
        raise DataError(f"qa threshold must lie in [0, 1], got {qa_threshold}")

    missing = [c for c in SWATH_COLUMNS if c not in samples.columns]
    if missing:
        raise DataError(f"swath samples lack columns: {', '.join(missing)}")

    values = samples["value"].to_numpy(dtype=np.float64)
    qa = samples["qa"].to_numpy(dtype=np.float64)
    times = samples["time_unix"].to_numpy(dtype=np.int64)
    if not np.all(np.isfinite(values)):
        raise DataError("swath values must be finite")
    if np.any((qa < 0) | (qa > 1)) or not np.all(np.isfinite(qa)):
        raise DataError("swath qa values must lie in [0, 1]")

    rows, cols, inside = cell_indices(samples["lat"].to_numpy(), samples["lon"].to_numpy(), spec)
    accepted = inside & (qa >= qa_threshold)
    flat = (rows * spec.n_cols + cols)[accepted]
    kept = values[accepted]

    # Contiguous partitions merged in partition order
    n_parts = max(1, min(int(threads), flat.size))
    bounds = np.linspace(0, flat.size, n_parts + 1).astype(np.int64)
    parts = Parallel(n_jobs=n_parts, prefer="threads")(
        delayed(_accumulate)(flat[lo:hi], kept[lo:hi], spec.n_cells)
        for lo, hi in zip(bounds[:-1], bounds[1:])
    )
    sums = np.zeros(spec.n_cells)
    counts = np.zeros(spec.n_cells, dtype=np.int64)
    for part_sums, part_counts in parts:
        sums += part_sums
        counts += part_counts

    mean = np.full(spec.n_cells, np.nan)
    filled = counts > 0
    mean[filled] = sums[filled] / counts[filled]

    # Median time of accepted samples, falling back to all samples
    overpass_time = None
    reference = times[accepted] if accepted.any() else times
    if reference.size:
        overpass_time = int(np.floor(np.median(reference)))

    logger.debug(
        "Binned %d of %d samples into %d cells (qa >= %.2f)",
        int(accepted.sum()), len(samples), int(filled.sum()), qa_threshold,
    )

    return GridField(
        spec=spec,
        mean=mean.reshape(spec.n_rows, spec.n_cols),
        count=counts.reshape(spec.n_rows, spec.n_cols),
        overpass_time=overpass_time,
        variable=variable,
    )
