"""Coefficient of determination, root mean squared error and bias."""
import numpy as np
from pydantic import ValidationError

from errors import DataError, UndefinedMetricError
from schemas import MetricsInput, MetricsReport


def _as_input(observations, predictions) -> MetricsInput:
    if isinstance(observations, MetricsInput):
        return observations
    try:
        return MetricsInput(observations=observations, predictions=predictions)
    except ValidationError as exc:
        raise DataError(f"invalid metrics input: {exc.errors()[0]['msg']}")


def _error_terms(data: MetricsInput):
    residual = data.predictions - data.observations
    rmse = float(np.sqrt(np.mean(residual ** 2)))
    bias = float(np.mean(residual))
    return residual, rmse, bias


def compute_metrics(observations, predictions=None) -> MetricsReport:
    """R2 = 1 - SSres/SStot, rmse, bias = mean(p - o).

    Accepts a MetricsInput or the two arrays. Raises UndefinedMetricError
    when R2 is undefined (fewer than two observations or zero variance).
    """
    data = _as_input(observations, predictions)
    residual, rmse, bias = _error_terms(data)
    if data.n < 2:
        raise UndefinedMetricError("r2 needs at least two observations")

    if np.ptp(data.observations) == 0:
        raise UndefinedMetricError("r2 is undefined: observations have zero variance")
    deviation = data.observations - data.mean_observation
    ss_tot = float(np.dot(deviation, deviation))
    ss_res = float(np.dot(residual, residual))
    return MetricsReport(r2=1.0 - ss_res / ss_tot, rmse=rmse, bias=bias, n=data.n)


def partial_metrics(observations, predictions=None) -> MetricsReport:
    """Like compute_metrics, but r2 is None where it is undefined"""
    try:
        return compute_metrics(observations, predictions)
    except UndefinedMetricError:
        data = _as_input(observations, predictions)
        _, rmse, bias = _error_terms(data)
        return MetricsReport(r2=None, rmse=rmse, bias=bias, n=data.n)
