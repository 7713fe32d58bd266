"""marketpulse: longitudinal app-market analytics.

Ingests time-series snapshots of app metadata, reviews and ranked
top-k lists, diffs them into event timelines, and computes market
statistics, list dynamics, and fraud/malware indicators. A seeded
synthetic market generator provides ground truth for every pipeline.
"""

from .model import (
    AppSnapshot,
    AttributeKind,
    DownloadBucket,
    ListType,
    PopularityClass,
    ReviewRecord,
    TopKObservation,
)
from .store import AppSeries, DatasetManifest, RankedListSeries, SnapStore, TimeWindow

__version__ = "0.1.0"

__all__ = [
    "AppSnapshot",
    "AppSeries",
    "AttributeKind",
    "DatasetManifest",
    "DownloadBucket",
    "ListType",
    "PopularityClass",
    "RankedListSeries",
    "ReviewRecord",
    "SnapStore",
    "TimeWindow",
    "TopKObservation",
    "__version__",
]
