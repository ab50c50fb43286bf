"""Per-country incident-rate forecasting with autoregressive models.

AR(p) is fitted by ordinary least squares on lagged values; ARMA(p,q) by
the Hannan-Rissanen two-stage regression (long-AR residuals stand in for
the unobserved innovations); ARIMA(p,d,q) differences d times and fits
ARMA on the result.  Rolling one-step forecasts reuse the fitted
coefficients over a growing history without refitting.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, InsufficientData, ThreatflowError

UNDEFINED = math.nan

RIDGE_JITTER = 1e-8
KINDS = ("AR", "ARMA", "ARIMA")

# Validation R^2 values this close count as tied in grid_search; the tie
# then goes to the configuration with fewer parameters.  One-step R^2
# differences below 1% of variance are sampling noise at desk-scale
# validation windows, and breaking them by raw argmax just rewards
# overfitting the validation suffix.
R2_TIE_TOL = 0.01


@dataclass(frozen=True)
class ForecastModel:
    kind: str
    p: int
    d: int
    q: int
    phi: tuple[float, ...]
    theta: tuple[float, ...]
    intercept: float
    window: int  # training-window length the model was fitted on

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ThreatflowError(f"kind must be one of {KINDS}")
        if len(self.phi) != self.p or len(self.theta) != self.q:
            raise ThreatflowError("coefficient lengths must match declared orders")
        if self.window < 10 * self.p:
            raise ThreatflowError("training window must be >= 10*p")

    @property
    def n_params(self) -> int:
        return self.p + self.d + self.q


def _ols(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Normal equations with a small ridge on the diagonal for conditioning."""
    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += RIDGE_JITTER
    try:
        return np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular regression system: {exc}") from None


def _lagged_design(x: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    rows = len(x) - p
    design = np.empty((rows, p + 1))
    design[:, 0] = 1.0
    for lag in range(1, p + 1):
        design[:, lag] = x[p - lag : len(x) - lag]
    return design, x[p:]


def fit_ar(series, p: int) -> ForecastModel:
    """Least-squares AR(p): regress x_t on (1, x_{t-1}, ..., x_{t-p})."""
    x = np.asarray(series, dtype=np.float64)
    if p < 1:
        raise ThreatflowError("p must be >= 1")
    if len(x) < 10 * p:
        raise InsufficientData(f"AR({p}) needs at least {10 * p} points, got {len(x)}")
    design, target = _lagged_design(x, p)
    beta = _ols(design, target)
    return ForecastModel(
        kind="AR",
        p=p,
        d=0,
        q=0,
        phi=tuple(float(b) for b in beta[1:]),
        theta=(),
        intercept=float(beta[0]),
        window=len(x),
    )


def fit_arma(series, p: int, q: int) -> ForecastModel:
    """Hannan-Rissanen ARMA(p,q) fit.

    Stage 1 fits a long AR of order min(20, n // 10) and keeps its
    residuals as innovation estimates; stage 2 regresses x_t on p value
    lags and q residual lags.  q = 0 reduces to fit_ar exactly.
    """
    x = np.asarray(series, dtype=np.float64)
    if p < 1 or q < 0:
        raise ThreatflowError("need p >= 1 and q >= 0")
    if q == 0:
        return fit_ar(x, p)
    if len(x) < 10 * (p + q):
        raise InsufficientData(
            f"ARMA({p},{q}) needs at least {10 * (p + q)} points, got {len(x)}"
        )
    long_order = min(20, len(x) // 10)
    long_model = fit_ar(x, long_order)
    design, target = _lagged_design(x, long_order)
    residuals = np.zeros(len(x))
    residuals[long_order:] = target - design @ np.array(
        (long_model.intercept, *long_model.phi)
    )

    start = max(p, long_order + q)
    rows = len(x) - start
    design2 = np.empty((rows, 1 + p + q))
    design2[:, 0] = 1.0
    for lag in range(1, p + 1):
        design2[:, lag] = x[start - lag : len(x) - lag]
    for lag in range(1, q + 1):
        design2[:, p + lag] = residuals[start - lag : len(x) - lag]
    beta = _ols(design2, x[start:])
    return ForecastModel(
        kind="ARMA",
        p=p,
        d=0,
        q=q,
        phi=tuple(float(b) for b in beta[1 : p + 1]),
        theta=tuple(float(b) for b in beta[p + 1 :]),
        intercept=float(beta[0]),
        window=len(x),
    )


def fit_arima(series, p: int, d: int, q: int) -> ForecastModel:
    """Difference ``series`` d times, fit ARMA(p,q) on the result."""
    x = np.asarray(series, dtype=np.float64)
    if d < 0:
        raise ThreatflowError("d must be >= 0")
    if len(x) < 10 * (p + q) + d:
        raise InsufficientData(
            f"ARIMA({p},{d},{q}) needs at least {10 * (p + q) + d} points"
        )
    z = np.diff(x, n=d) if d else x
    inner = fit_arma(z, p, q)
    if d == 0:
        return inner
    return ForecastModel(
        kind="ARIMA",
        p=p,
        d=d,
        q=q,
        phi=inner.phi,
        theta=inner.theta,
        intercept=inner.intercept,
        window=len(x),
    )


def _innovation_predictions(model: ForecastModel, z: np.ndarray) -> np.ndarray:
    """One-step predictions of the (already differenced) series z.

    Entries before index max(p, 1) carry NaN: not enough lags.  Residuals
    feeding the MA terms come from the same causal recursion, zero before
    it starts.
    """
    p, q = model.p, model.q
    phi = np.asarray(model.phi)
    theta = np.asarray(model.theta)
    m = len(z)
    zhat = np.full(m, np.nan)
    residuals = np.zeros(m)
    for t in range(p, m):
        value = model.intercept
        for i in range(p):
            value += phi[i] * z[t - 1 - i]
        for j in range(min(q, t)):
            value += theta[j] * residuals[t - 1 - j]
        zhat[t] = value
        residuals[t] = z[t] - value
    return zhat


def one_step_predictions(model: ForecastModel, series) -> np.ndarray:
    """Rolling one-step-ahead forecasts of ``series`` under fixed coefficients.

    Position t holds the forecast of series[t] given series[:t]; warmup
    positions (fewer than d + p observations) are NaN.  Differencing is
    undone by adding back the last value of every lower difference level.
    """
    x = np.asarray(series, dtype=np.float64)
    d = model.d
    if len(x) <= d + model.p:
        raise InsufficientData("series too short for one-step predictions")
    diffs = [x]
    for _ in range(d):
        diffs.append(np.diff(diffs[-1]))
    zhat = _innovation_predictions(model, diffs[d])
    preds = np.full(len(x), np.nan)
    for s in range(d + model.p, len(x)):
        value = zhat[s - d]
        if np.isnan(value):
            continue
        for level in range(d):
            value += diffs[level][s - 1 - level]
        preds[s] = value
    return preds


def forecast_next(model: ForecastModel, series) -> float:
    """Forecast the value following the given history."""
    x = np.asarray(series, dtype=np.float64)
    extended = np.append(x, 0.0)  # placeholder; its prediction is causal
    return float(one_step_predictions(model, extended)[-1])


def evaluate(predictions, actuals) -> tuple[float, float]:
    """(RMSE, R^2) of predictions against actuals; R^2 is NaN when the
    actuals have zero variance."""
    pred = np.asarray(predictions, dtype=np.float64)
    act = np.asarray(actuals, dtype=np.float64)
    if pred.shape != act.shape:
        raise ThreatflowError("predictions and actuals must have equal length")
    if pred.size < 1:
        raise ThreatflowError("need at least one prediction")
    sse = float(((pred - act) ** 2).sum())
    rmse = math.sqrt(sse / pred.size)
    sst = float(((act - act.mean()) ** 2).sum())
    if sst == 0.0:
        return rmse, UNDEFINED
    return rmse, 1.0 - sse / sst


@dataclass(frozen=True)
class ForecastReport:
    country: str
    model: ForecastModel
    rmse: float
    r2: float
    predictions: tuple[float, ...]  # aligned to the held-out suffix

    def to_json(self) -> dict:
        return {
            "country": self.country,
            "kind": self.model.kind,
            "p": self.model.p,
            "d": self.model.d,
            "q": self.model.q,
            "window": self.model.window,
            "phi": list(self.model.phi),
            "theta": list(self.model.theta),
            "intercept": self.model.intercept,
            "rmse": self.rmse,
            "r2": None if math.isnan(self.r2) else self.r2,
            "predictions": list(self.predictions),
        }


def _window_grid(p: int, q: int, d: int, train_len: int) -> list[int]:
    smallest = max(10 * p, 10 * (p + q) + d)
    if train_len < smallest:
        return []
    sizes = []
    n = 10 * p
    while n < train_len:
        if n >= smallest:
            sizes.append(n)
        n = round(n * 1.5)
    sizes.append(train_len)
    return sorted(set(sizes))


def _config_grid(kinds, p_range: tuple[int, int], train_len: int):
    p_lo, p_hi = p_range
    for kind in KINDS:
        if kind not in kinds:
            continue
        qs = (0,) if kind == "AR" else (0, 1, 2)
        ds = (0, 1) if kind == "ARIMA" else (0,)
        for p in range(p_lo, p_hi + 1):
            for d in ds:
                for q in qs:
                    for window in _window_grid(p, q, d, train_len):
                        yield kind, p, d, q, window


def grid_search(
    series,
    kinds=("AR", "ARMA", "ARIMA"),
    p_range: tuple[int, int] = (1, 10),
    holdout_fraction: float = 0.3,
    country: str = "",
    log1p: bool = False,
) -> ForecastReport:
    """Pick the model with the best validation R^2 over the standard grid.

    The series splits into a 70% training prefix and a 30% validation
    suffix.  Each configuration fits once on the trailing window of the
    training prefix and rolls one-step forecasts (fixed coefficients)
    across the validation suffix.  R^2 values within R2_TIE_TOL of the
    best count as tied; ties prefer fewer parameters, then the smaller
    window.  Fitting is deterministic arithmetic, so identical input
    selects an identical configuration.

    With ``log1p`` the models fit log(1+x); forecasts are mapped back to
    the count scale before scoring, so reports stay comparable.
    """
    raw = np.asarray(series, dtype=np.float64)
    if len(raw) < 50:
        raise InsufficientData("grid_search needs a series of length >= 50")
    unknown = set(kinds) - set(KINDS)
    if unknown:
        raise ThreatflowError(f"unknown model kinds: {sorted(unknown)}")
    if log1p and (raw < -1).any():
        raise ThreatflowError("log1p transform needs values >= -1")
    x = np.log1p(raw) if log1p else raw
    train_len = int(len(x) * (1.0 - holdout_fraction))
    validation = raw[train_len:]

    candidates = []
    failures = []
    with np.errstate(over="ignore", invalid="ignore"):
        for kind, p, d, q, window in _config_grid(kinds, p_range, train_len):
            train = x[train_len - window : train_len]
            try:
                if kind == "AR":
                    model = fit_ar(train, p)
                elif kind == "ARMA":
                    model = fit_arma(train, p, q)
                else:
                    model = fit_arima(train, p, d, q)
                preds = one_step_predictions(model, x)[train_len:]
                if np.isnan(preds).any():
                    raise FitError("validation window overlaps the warmup region")
                if log1p:
                    preds = np.expm1(preds)
                rmse, r2 = evaluate(preds, validation)
            except (FitError, InsufficientData) as exc:
                failures.append(f"{kind}(p={p},d={d},q={q},N={window}): {exc}")
                continue
            candidates.append((model, rmse, r2, preds))
    if not candidates:
        raise FitError(
            "every grid configuration failed to fit:\n" + "\n".join(failures)
        )

    defined = [c for c in candidates if math.isfinite(c[2])]
    if defined:
        best_r2 = max(c[2] for c in defined)
        pool = [c for c in defined if c[2] >= best_r2 - R2_TIE_TOL]
    else:
        pool = candidates

    def sort_key(entry):
        model, _rmse, _r2, _preds = entry
        return (
            model.n_params,
            model.window,
            KINDS.index(model.kind),
            model.p,
            model.d,
            model.q,
        )

    model, rmse, r2, preds = min(pool, key=sort_key)
    return ForecastReport(
        country=country,
        model=model,
        rmse=rmse,
        r2=r2,
        predictions=tuple(float(v) for v in preds),
    )
