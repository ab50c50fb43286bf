"""Synthetic corpus generation from a known transition matrix.

Used to validate the estimation pipeline: incidents are grown by Markov
steps of a ground-truth row-stochastic matrix, giving corpora whose
co-occurrence statistics are known in closed form.

Randomness is NumPy PCG64 throughout.  Every incident draws from its own
substream, seeded SeedSequence(entropy=seed, spawn_key=(1, incident_index)),
so generation is reproducible and order-independent; the daily intensity
series uses spawn_key=(0,).
"""

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ThreatflowError
from .model import Corpus, ThreatEvent

MAX_TARGETS = 5


@dataclass(frozen=True)
class SynthSpec:
    countries: tuple[str, ...]
    p_star: np.ndarray  # row-stochastic ground truth
    incidents: int
    date_from: dt.date
    date_to: dt.date
    seed: int
    seasonal_profile: tuple[float, ...] | None = None  # 12 per-month multipliers
    ar_phi: float | None = None  # AR(1) coefficient for daily log-intensity
    labels: tuple[str, ...] = ()  # round-robin group labels

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(
            self, "p_star", np.asarray(self.p_star, dtype=np.float64)
        )
        n = len(self.countries)
        if self.p_star.shape != (n, n):
            raise ThreatflowError("p_star shape must match the country list")
        if (self.p_star < 0).any():
            raise ThreatflowError("p_star entries must be non-negative")
        if np.abs(self.p_star.sum(axis=1) - 1.0).max() > 1e-12:
            raise ThreatflowError("p_star rows must sum to 1 within 1e-12")
        if self.incidents < 1:
            raise ThreatflowError("incidents must be >= 1")
        if self.date_from > self.date_to:
            raise ThreatflowError("empty date range")
        if self.seasonal_profile is not None and len(self.seasonal_profile) != 12:
            raise ThreatflowError("seasonal_profile needs 12 multipliers")


def stationary_distribution(p: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix by power iteration.

    Iterates the half-lazy chain (I + P)/2, which shares P's stationary
    distribution but also converges on periodic chains like [[0,1],[1,0]].
    """
    n = p.shape[0]
    pi = np.full(n, 1.0 / n)
    lazy = 0.5 * (np.eye(n) + p)
    for _ in range(100_000):
        nxt = pi @ lazy
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise ThreatflowError("power iteration did not converge")


def _incident_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, index)))


def _daily_weights(spec: SynthSpec) -> np.ndarray:
    days = (spec.date_to - spec.date_from).days + 1
    dates = [spec.date_from + dt.timedelta(days=i) for i in range(days)]
    weights = np.ones(days)
    if spec.ar_phi is not None:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(0,)))
        z = np.empty(days)
        z[0] = rng.normal()
        for i in range(1, days):
            z[i] = spec.ar_phi * z[i - 1] + rng.normal()
        weights *= np.exp(z)
    if spec.seasonal_profile is not None:
        profile = np.asarray(spec.seasonal_profile)
        weights *= profile[[d.month - 1 for d in dates]]
    return weights / weights.sum()


def generate(spec: SynthSpec) -> Corpus:
    """Deterministic synthetic corpus driven by spec.p_star.

    Each incident: target-set size ~ Geometric(0.5) capped at 5; seed
    country from the stationary distribution; each further target is one
    Markov step of p_star from the previous one (revisits collapse, so the
    realized set can be smaller).  Dates follow the daily intensity model;
    labels go round-robin into tags and malware_families.
    """
    pi = stationary_distribution(spec.p_star)
    day_weights = _daily_weights(spec)
    days = len(day_weights)
    n = len(spec.countries)

    events = []
    for i in range(spec.incidents):
        rng = _incident_rng(spec.seed, i)
        size = min(int(rng.geometric(0.5)), MAX_TARGETS)
        current = int(rng.choice(n, p=pi))
        targets = [current]
        for _ in range(size - 1):
            current = int(rng.choice(n, p=spec.p_star[current]))
            if current not in targets:
                targets.append(current)
        day = int(rng.choice(days, p=day_weights))
        date = spec.date_from + dt.timedelta(days=day)
        names = tuple(spec.countries[t] for t in targets)
        label = spec.labels[i % len(spec.labels)] if spec.labels else None
        events.append(
            ThreatEvent(
                id=f"synth-{i:06d}",
                created_at=date,
                title=f"synthetic incident {i}",
                countries=names,
                raw_country_strings=names,
                malware_families=(label,) if label else (),
                tags=(label,) if label else (),
            )
        )
    return Corpus.from_events(events, provenance=f"synth(seed={spec.seed})")


def generate_ar_series(
    phi: float, n: int, seed: int, sigma: float = 1.0, intercept: float = 0.0
) -> np.ndarray:
    """AR(1) series x_t = intercept + phi*x_{t-1} + N(0, sigma^2) noise."""
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = intercept + rng.normal(scale=sigma)
    for t in range(1, n):
        x[t] = intercept + phi * x[t - 1] + rng.normal(scale=sigma)
    return x


def generate_arma_series(
    phi: float, theta: float, n: int, seed: int, sigma: float = 1.0
) -> np.ndarray:
    """ARMA(1,1) series x_t = phi*x_{t-1} + e_t + theta*e_{t-1}."""
    rng = np.random.default_rng(seed)
    e = rng.normal(scale=sigma, size=n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t] + theta * e[t - 1]
    return x


def load_synth_spec(path: str | Path) -> SynthSpec:
    """Read a SynthSpec from its JSON file format.

    Keys: countries, p_star, incidents, date_from, date_to, seed and the
    optional seasonal_profile, ar_phi, labels.
    """
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return SynthSpec(
            countries=tuple(data["countries"]),
            p_star=np.asarray(data["p_star"], dtype=np.float64),
            incidents=int(data["incidents"]),
            date_from=dt.date.fromisoformat(data["date_from"]),
            date_to=dt.date.fromisoformat(data["date_to"]),
            seed=int(data["seed"]),
            seasonal_profile=(
                tuple(data["seasonal_profile"]) if data.get("seasonal_profile") else None
            ),
            ar_phi=data.get("ar_phi"),
            labels=tuple(data.get("labels") or ()),
        )
    except KeyError as exc:
        raise ThreatflowError(f"synth spec missing key {exc}") from None
