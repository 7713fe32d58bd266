"""Shared fixtures and record factories."""

from __future__ import annotations

import datetime as dt

import pytest

from marketpulse.model import (
    AppSnapshot,
    DownloadBucket,
    ListType,
    ReviewRecord,
    TopKObservation,
    date_to_epoch,
)
from marketpulse.store import DatasetManifest, SnapStore

DAY0 = dt.date(2012, 4, 1)


def make_snapshot(
    app: str = "com.example.app",
    day: dt.date = DAY0,
    hour: int = 12,
    **overrides,
) -> AppSnapshot:
    fields = dict(
        app=app,
        fetch_time=date_to_epoch(day) + hour * 3600,
        title="Example App",
        developer="Example Dev",
        category="Tools",
        price_cents=0,
        free=True,
        downloads=DownloadBucket(1_000, 5_000),
        rating_avg=4.2,
        rating_count=120,
        version="1.0.0",
        last_updated=day - dt.timedelta(days=30),
        size_bytes=1_800_000,
        permissions=frozenset({"INTERNET", "VIBRATE"}),
    )
    fields.update(overrides)
    if "price_cents" in overrides and "free" not in overrides:
        fields["free"] = fields["price_cents"] == 0
    return AppSnapshot(**fields)


def make_review(
    app: str = "com.example.app",
    review_id: str = "r1",
    rating: int = 5,
    day: dt.date = DAY0,
    **overrides,
) -> ReviewRecord:
    fields = dict(
        app=app,
        review_id=review_id,
        reviewer_id="u1",
        date=day,
        rating=rating,
        title="nice",
        text="works great",
    )
    fields.update(overrides)
    return ReviewRecord(**fields)


def make_topk(
    ranking,
    hour: int = 0,
    list_type: ListType = ListType.FREE,
    day: dt.date = DAY0,
) -> TopKObservation:
    return TopKObservation(
        list_type=list_type,
        fetch_time=date_to_epoch(day) + hour * 3600,
        ranking=tuple(ranking),
    )


@pytest.fixture
def manifest() -> DatasetManifest:
    return DatasetManifest(
        name="test-dataset",
        currency="USD",
        observation_start=DAY0,
        observation_end=DAY0 + dt.timedelta(days=59),
        snapshot_cadence_hint="daily",
    )


@pytest.fixture
def store(tmp_path, manifest) -> SnapStore:
    return SnapStore.create(tmp_path / "store", manifest)
