"""Calendar helpers that stay valid far beyond ``datetime.MAXYEAR``.

Emercoin names can be registered for thousands of years, so expiry points
are routinely past year 9999. These helpers use integer arithmetic on the
proleptic Gregorian calendar instead of ``datetime``.
"""

from __future__ import annotations

SECONDS_PER_DAY = 86400


def civil_from_days(days: int) -> tuple[int, int, int]:
    """Return (year, month, day) for a count of days since 1970-01-01."""
    z = days + 719468
    era = z // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + 3 if mp < 10 else mp - 9
    return (y + 1 if m <= 2 else y), m, d


def year_of(unix_seconds: int) -> int:
    return civil_from_days(unix_seconds // SECONDS_PER_DAY)[0]


def month_bucket(unix_seconds: int) -> str:
    """UTC calendar month as ``YYYY-MM``."""
    y, m, _ = civil_from_days(unix_seconds // SECONDS_PER_DAY)
    return f"{y:04d}-{m:02d}"


def iso_date(unix_seconds: int) -> str:
    y, m, d = civil_from_days(unix_seconds // SECONDS_PER_DAY)
    return f"{y:04d}-{m:02d}-{d:02d}"
