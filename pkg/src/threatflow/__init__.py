"""Spatio-temporal analytics for crowd-sourced cyber-threat event feeds.

Pipeline: ingest pulse-style records, normalize country names against a
gazetteer, then derive rankings, time-series panels, attack-propagation
transition graphs, country clusters, lagged correlation structure and
incident-rate forecasts.
"""

__version__ = "0.1.0"

from .model import Corpus, EventFilter, ThreatEvent, filter_events, load_corpus, save_corpus

__all__ = [
    "__version__",
    "Corpus",
    "EventFilter",
    "ThreatEvent",
    "filter_events",
    "load_corpus",
    "save_corpus",
]
