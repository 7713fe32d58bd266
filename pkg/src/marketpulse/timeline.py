"""Diff snapshot series into per-day change events and review timelines.

Change events are keyed by (day, app): the event day is the UTC date of
the later snapshot, and when several snapshots fall on one day only the
last one counts, so each day yields at most one event per attribute.
Update days (last_updated transitions) are tracked separately from
version-string changes, which can move independently.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import InvalidInputError, InvalidPairError
from .model import AppSnapshot, AttributeKind, ReviewRecord, epoch_to_date
from .store import AppSeries


@dataclass(frozen=True)
class ChangeEvent:
    """One attribute change of one app on one UTC day.

    ``old``/``new`` hold the attribute values (ints, strings, download
    buckets, or permission frozensets depending on ``kind``).
    """

    app: str
    day: dt.date
    kind: AttributeKind
    old: Any
    new: Any

    @property
    def added_permissions(self) -> frozenset[str]:
        if self.kind in (AttributeKind.PERMISSIONS_UP, AttributeKind.PERMISSIONS_DOWN):
            return frozenset(self.new) - frozenset(self.old)
        return frozenset()

    @property
    def removed_permissions(self) -> frozenset[str]:
        if self.kind in (AttributeKind.PERMISSIONS_UP, AttributeKind.PERMISSIONS_DOWN):
            return frozenset(self.old) - frozenset(self.new)
        return frozenset()


@dataclass(frozen=True)
class AppTimeline:
    """Ordered change events plus update days for one app."""

    app: str
    events: tuple[ChangeEvent, ...]
    update_days: tuple[dt.date, ...]

    def events_on(self, day: dt.date) -> tuple[ChangeEvent, ...]:
        return tuple(e for e in self.events if e.day == day)


@dataclass(frozen=True)
class DayReviewCounts:
    day: dt.date
    positive: int
    negative: int
    neutral: int


@dataclass(frozen=True)
class ReviewTimeline:
    """Per-day review polarity counts; days without reviews are implicit zeros."""

    app: str
    days: tuple[DayReviewCounts, ...]


@dataclass(frozen=True)
class PolarityThresholds:
    """Rating cutoffs: >= positive_min is positive, <= negative_max negative."""

    positive_min: int = 4
    negative_max: int = 2

    def __post_init__(self):
        if self.negative_max >= self.positive_min:
            raise InvalidInputError("negative_max must be below positive_min")


def diff_snapshots(prev: AppSnapshot, next: AppSnapshot) -> list[ChangeEvent]:
    """Typed change events between two snapshots of the same app.

    Only upward moves of the monotone counters (downloads bucket, rating
    count) are classified; a decrease has no attribute kind and emits
    nothing. Permission changes are classified by total count, carrying
    the old and new permission sets; a same-count swap emits nothing.
    """
    if prev.app != next.app:
        raise InvalidPairError(f"app mismatch: {prev.app!r} vs {next.app!r}")
    if prev.fetch_time >= next.fetch_time:
        raise InvalidPairError("snapshots must be strictly increasing in fetch_time")
    day = epoch_to_date(next.fetch_time)
    events = []

    def emit(kind: AttributeKind, old, new):
        events.append(ChangeEvent(app=next.app, day=day, kind=kind, old=old, new=new))

    if next.price_cents != prev.price_cents:
        kind = (
            AttributeKind.PRICE_UP
            if next.price_cents > prev.price_cents
            else AttributeKind.PRICE_DOWN
        )
        emit(kind, prev.price_cents, next.price_cents)
    if next.downloads.lo > prev.downloads.lo:
        emit(AttributeKind.DOWNLOADS_UP, prev.downloads, next.downloads)
    if next.rating_count > prev.rating_count:
        emit(AttributeKind.REVIEW_COUNT_UP, prev.rating_count, next.rating_count)
    if next.version != prev.version:
        emit(AttributeKind.VERSION_UP, prev.version, next.version)
    if len(next.permissions) != len(prev.permissions):
        kind = (
            AttributeKind.PERMISSIONS_UP
            if len(next.permissions) > len(prev.permissions)
            else AttributeKind.PERMISSIONS_DOWN
        )
        emit(kind, prev.permissions, next.permissions)
    if next.category != prev.category:
        emit(AttributeKind.CATEGORY_CHANGE, prev.category, next.category)
    return events


def build_app_timeline(series: AppSeries) -> AppTimeline:
    """Fold an app's snapshot series into its change-event timeline.

    Days with several snapshots count first-vs-last: each day is
    represented by its last snapshot, and the very first day's opening
    snapshot anchors the sequence so a change within that day is still
    one event. An update day is a day on which the observed last_updated
    value changed.
    """
    if not series.snapshots:
        return AppTimeline(app=series.app, events=(), update_days=())
    daily: list[AppSnapshot] = []
    for snap in series.snapshots:
        day = epoch_to_date(snap.fetch_time)
        if daily and epoch_to_date(daily[-1].fetch_time) == day:
            daily[-1] = snap
        else:
            daily.append(snap)
    first = series.snapshots[0]
    if daily[0] is not first:
        daily.insert(0, first)
    events: list[ChangeEvent] = []
    update_days: list[dt.date] = []
    for prev, cur in zip(daily, daily[1:]):
        events.extend(diff_snapshots(prev, cur))
        if cur.last_updated != prev.last_updated:
            update_days.append(epoch_to_date(cur.fetch_time))
    return AppTimeline(
        app=series.app, events=tuple(events), update_days=tuple(update_days)
    )


def apply_events(snapshot: AppSnapshot, events: Iterable[ChangeEvent]) -> dict:
    """Replay ``events`` over a snapshot's tracked fields.

    Returns the resulting field dict {price_cents, downloads, rating_count,
    version, permissions, category}; used to check that a timeline folds
    back to the final observed state.
    """
    state = {
        "price_cents": snapshot.price_cents,
        "downloads": snapshot.downloads,
        "rating_count": snapshot.rating_count,
        "version": snapshot.version,
        "permissions": snapshot.permissions,
        "category": snapshot.category,
    }
    field_of = {
        AttributeKind.PRICE_UP: "price_cents",
        AttributeKind.PRICE_DOWN: "price_cents",
        AttributeKind.DOWNLOADS_UP: "downloads",
        AttributeKind.REVIEW_COUNT_UP: "rating_count",
        AttributeKind.VERSION_UP: "version",
        AttributeKind.PERMISSIONS_UP: "permissions",
        AttributeKind.PERMISSIONS_DOWN: "permissions",
        AttributeKind.CATEGORY_CHANGE: "category",
    }
    for event in events:
        state[field_of[event.kind]] = event.new
    return state


def tracked_fields(snapshot: AppSnapshot) -> dict:
    """The field dict ``apply_events`` reproduces."""
    return apply_events(snapshot, ())


def build_review_timeline(
    reviews: Sequence[ReviewRecord],
    polarity: PolarityThresholds = PolarityThresholds(),
    app: str | None = None,
) -> ReviewTimeline:
    """Per-day positive/negative/neutral counts for one app's reviews."""
    if app is None:
        app = reviews[0].app if reviews else ""
    counts: dict[dt.date, list[int]] = {}
    for review in reviews:
        if review.app != app:
            raise InvalidInputError(
                f"mixed app ids in review timeline: {review.app!r} vs {app!r}"
            )
        bucket = counts.setdefault(review.date, [0, 0, 0])
        if review.rating >= polarity.positive_min:
            bucket[0] += 1
        elif review.rating <= polarity.negative_max:
            bucket[1] += 1
        else:
            bucket[2] += 1
    days = tuple(
        DayReviewCounts(day, pos, neg, neu)
        for day, (pos, neg, neu) in sorted(counts.items())
    )
    return ReviewTimeline(app=app, days=days)


def format_event_value(value: Any) -> str:
    """Render an event's old/new value for CSV export."""
    if isinstance(value, frozenset):
        return ";".join(sorted(value))
    if hasattr(value, "lo") and hasattr(value, "hi"):
        return f"{value.lo}-{value.hi}"
    return str(value)


def timeline_csv_rows(timeline: AppTimeline) -> list[tuple[str, str, str, str, str]]:
    """Rows (app, day, kind, old, new) for the timeline CSV export."""
    return [
        (
            event.app,
            event.day.isoformat(),
            event.kind.value,
            format_event_value(event.old),
            format_event_value(event.new),
        )
        for event in timeline.events
    ]
