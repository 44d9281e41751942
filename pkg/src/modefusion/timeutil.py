"""Clock and calendar helpers.

All epochs are UTC seconds. A service day's midnight is the UTC midnight of
its date; timetable times are seconds since that midnight and may exceed
86400 for after-midnight runs.
"""

from __future__ import annotations

import datetime as dt

DAY_S = 86_400

_WORKING_WEEKDAYS = (1, 2, 3)  # Tue, Wed, Thu


def midnight_epoch(day: dt.date) -> int:
    return int(dt.datetime(day.year, day.month, day.day, tzinfo=dt.timezone.utc).timestamp())


def epoch_date(epoch: float) -> dt.date:
    return dt.datetime.fromtimestamp(epoch, tz=dt.timezone.utc).date()


def seconds_of_day(epoch: float) -> float:
    day = epoch_date(epoch)
    return epoch - midnight_epoch(day)


def parse_gtfs_time(text: str) -> int:
    """HH:MM:SS with HH possibly >= 24; returns seconds since service midnight."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"bad time {text!r}")
    h, m, s = (int(p) for p in parts)
    if m < 0 or m > 59 or s < 0 or s > 59 or h < 0:
        raise ValueError(f"bad time {text!r}")
    return h * 3600 + m * 60 + s


def format_gtfs_time(seconds: int) -> str:
    if seconds < 0:
        raise ValueError("negative time")
    h, rem = divmod(int(seconds), 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{s:02d}"


def parse_date(text: str) -> dt.date:
    """Accepts YYYY-MM-DD or the compact YYYYMMDD."""
    text = text.strip()
    if "-" in text:
        return dt.date.fromisoformat(text)
    return dt.datetime.strptime(text, "%Y%m%d").date()


def preceding_working_day(day: dt.date) -> dt.date:
    """Most recent Tue/Wed/Thu strictly before `day`."""
    d = day - dt.timedelta(days=1)
    while d.weekday() not in _WORKING_WEEKDAYS:
        d -= dt.timedelta(days=1)
    return d
