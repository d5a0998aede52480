"""Date canonicalization shared by response parsing and evaluation.

Accepted forms (month names may be abbreviated, days may carry st/nd/rd/th):
``March 24, 2024``, ``24 March 2024``, ``the 24th day of March, 2024``,
``2024-03-24`` and month-first ``03/24/2024``. Everything else is rejected.
"""

from __future__ import annotations

import datetime as dt
import re
from typing import Optional

_MONTHS = {
    "jan": 1, "feb": 2, "mar": 3, "apr": 4, "may": 5, "jun": 6,
    "jul": 7, "aug": 8, "sep": 9, "sept": 9, "oct": 10, "nov": 11, "dec": 12,
}
_MONTH_RE = (r"(?P<month>jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?"
             r"|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\.?")
_DAY_RE = r"(?P<day>\d{1,2})(?:st|nd|rd|th)?"
_YEAR_RE = r"(?P<year>\d{4})"

_PATTERNS = [
    re.compile(r"^" + _YEAR_RE + r"-(?P<mnum>\d{1,2})-(?P<day>\d{1,2})$"),
    re.compile(r"^(?P<mnum>\d{1,2})/(?P<day>\d{1,2})/" + _YEAR_RE + r"$"),
    re.compile(r"^" + _MONTH_RE + r"\s+" + _DAY_RE + r",?\s+" + _YEAR_RE + r"$"),
    re.compile(r"^(?:the\s+)?" + _DAY_RE + r"\s+(?:day\s+of\s+)?" + _MONTH_RE + r",?\s+" + _YEAR_RE + r"$"),
]


def parse_date(value) -> Optional[dt.date]:
    if isinstance(value, dt.date):
        return value
    if not isinstance(value, str):
        return None
    text = " ".join(value.strip().casefold().split())
    for pat in _PATTERNS:
        m = pat.match(text)
        if not m:
            continue
        groups = m.groupdict()
        if groups.get("mnum"):
            month = int(groups["mnum"])
        else:
            name = groups["month"]
            month = _MONTHS.get(name[:4] if name.startswith("sept") else name[:3])
        try:
            return dt.date(int(groups["year"]), month, int(groups["day"]))
        except (TypeError, ValueError):
            return None
    return None


def canonical_date(value) -> Optional[str]:
    """ISO-8601 calendar date for any accepted form, else None."""
    d = parse_date(value)
    return d.isoformat() if d else None
