"""Pointwise and lag-windowed Pearson correlation between country series.

Zero-variance series have no defined correlation; those entries are NaN
(the package-wide "Undefined" sentinel) and are preserved as such in every
export, never coerced to 0.
"""

import math
from dataclasses import dataclass

import numpy as np

from .analytics import TimeSeriesPanel
from .errors import InsufficientData, ThreatflowError

UNDEFINED = math.nan


def is_undefined(value: float) -> bool:
    return math.isnan(value)


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient; NaN when either side has
    zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ThreatflowError(f"series length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise InsufficientData("pearson needs at least 2 points")
    xm = x - x.mean()
    ym = y - y.mean()
    sx = float(xm @ xm)
    sy = float(ym @ ym)
    # constant series leave only cancellation residue after centering;
    # treat variance at rounding-noise scale as zero
    tiny_x = (1e-12 * float(np.abs(x).max(initial=0.0))) ** 2 * x.size
    tiny_y = (1e-12 * float(np.abs(y).max(initial=0.0))) ** 2 * y.size
    if sx <= tiny_x or sy <= tiny_y:
        return UNDEFINED
    return float((xm @ ym) / math.sqrt(sx * sy))


def _lag_order(max_lag: int):
    """Lags by preference: |lag| ascending, negative before positive."""
    yield 0
    for magnitude in range(1, max_lag + 1):
        yield -magnitude
        yield magnitude


def pearson_at_lag(x, y, lag: int) -> float:
    """Pearson correlation of the overlap after shifting y by exactly
    ``lag`` (positive lag: y follows x)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ThreatflowError("series length mismatch")
    n = x.size
    if n - abs(lag) < 2:
        raise InsufficientData(f"series of length {n} too short for lag {lag}")
    if lag >= 0:
        return pearson(x[: n - lag], y[lag:])
    return pearson(x[-lag:], y[: n + lag])


def lagged_correlation(x, y, max_lag: int) -> tuple[float, int]:
    """Best-|r| Pearson correlation over lags in [-max_lag, +max_lag].

    Positive lag means y follows x: at lag L the overlap pairs x[t] with
    y[t+L].  Ties prefer the smaller |lag|, then the negative one.  Returns
    (NaN, 0) when every lag is undefined.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if max_lag < 0:
        raise ThreatflowError("max_lag must be >= 0")
    if x.shape != y.shape:
        raise ThreatflowError("series length mismatch")
    n = x.size
    if n <= max_lag + 2:
        raise InsufficientData(
            f"series of length {n} too short for max_lag {max_lag}"
        )
    best_r, best_lag = UNDEFINED, 0
    for lag in _lag_order(max_lag):
        r = pearson_at_lag(x, y, lag)
        if is_undefined(r):
            continue
        if is_undefined(best_r) or abs(r) > abs(best_r):
            best_r, best_lag = r, lag
    return best_r, best_lag


@dataclass(frozen=True)
class CorrelationMatrix:
    countries: tuple[str, ...]
    r: np.ndarray  # NaN marks undefined entries
    best_lag: np.ndarray | None  # int lags, lagged mode only

    def __post_init__(self):
        n = len(self.countries)
        if self.r.shape != (n, n):
            raise ThreatflowError("matrix shape must match the country list")
        finite = self.r[~np.isnan(self.r)]
        if finite.size and np.abs(finite).max() > 1 + 1e-12:
            raise ThreatflowError("|r| must not exceed 1")


def correlation_heatmap(
    panel: TimeSeriesPanel,
    mode: str = "pointwise",
    max_lag: int = 7,
    fixed_lag: int | None = None,
) -> CorrelationMatrix:
    """All-pairs correlation of the panel's country series.

    pointwise: signed lag-0 Pearson r (symmetric).  lagged: |best r| over
    the +-max_lag window plus the winning lag per ordered pair; passing
    ``fixed_lag`` skips the search and correlates at exactly that shift.
    """
    if mode not in ("pointwise", "lagged"):
        raise ThreatflowError(f"unknown mode {mode!r}")
    n = len(panel.countries)
    if n < 2:
        raise InsufficientData("panel needs at least 2 countries")
    bins = panel.values.shape[1]
    span = abs(fixed_lag) if fixed_lag is not None else max_lag
    needed = span + 3 if mode == "lagged" else 3
    if bins < needed:
        raise InsufficientData(f"panel needs >= {needed} bins, has {bins}")

    series = panel.values.astype(np.float64)
    r = np.full((n, n), UNDEFINED)
    lags = np.zeros((n, n), dtype=np.int64) if mode == "lagged" else None
    for i in range(n):
        for j in range(n):
            if j < i:
                continue
            if mode == "pointwise":
                value = pearson(series[i], series[j])
                r[i, j] = value
                r[j, i] = value
            else:
                if fixed_lag is not None:
                    value, lag = pearson_at_lag(series[i], series[j], fixed_lag), fixed_lag
                else:
                    value, lag = lagged_correlation(series[i], series[j], max_lag)
                r[i, j] = abs(value) if not is_undefined(value) else value
                r[j, i] = r[i, j]
                lags[i, j] = lag
                lags[j, i] = -lag
    return CorrelationMatrix(countries=panel.countries, r=r, best_lag=lags)


def matrix_to_json(matrix: CorrelationMatrix) -> dict:
    """JSON-ready dict; NaN becomes null."""
    def cell(value: float):
        return None if is_undefined(value) else value

    payload = {
        "countries": list(matrix.countries),
        "r": [[cell(float(v)) for v in row] for row in matrix.r],
    }
    if matrix.best_lag is not None:
        payload["best_lag"] = [[int(v) for v in row] for row in matrix.best_lag]
    return payload


def matrix_to_csv(matrix: CorrelationMatrix) -> str:
    """Country-labeled CSV; undefined cells are left empty."""
    lines = ["," + ",".join(matrix.countries)]
    for i, country in enumerate(matrix.countries):
        cells = [
            "" if is_undefined(float(v)) else f"{float(v):.6f}" for v in matrix.r[i]
        ]
        lines.append(country + "," + ",".join(cells))
    return "\n".join(lines) + "\n"
