"""Presence questionnaire scoring: per-subscale mean and SD.

Input is a CSV with columns ``subject_id, subscale, item, rating``: three
five-item subscales (self, vehicle, environment) rated 1-5.  M pools all
ratings of a subscale across subjects; SD is the sample standard
deviation (n-1 denominator).  Both conventions are choices and are
documented here because they move the third decimal.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

SUBSCALES = ("self", "vehicle", "environment")
ITEMS_PER_SUBSCALE = 5


class ResponsesError(ValueError):
    pass


@dataclass(frozen=True)
class SubscaleScore:
    mean: float
    sd: float
    item_means: dict[int, float]  # item (1..5) -> mean rating


@dataclass(frozen=True)
class PresenceReport:
    n_subjects: int
    subscales: dict[str, SubscaleScore]

    def render(self) -> str:
        lines = [f"n = {self.n_subjects} subjects"]
        for name in SUBSCALES:
            score = self.subscales[name]
            lines.append(f"{name}-presence {format_m_sd(score.mean, score.sd)}")
            for item in sorted(score.item_means):
                lines.append(f"  item {item}: {score.item_means[item]:.2f}")
        return "\n".join(lines)


def format_m_sd(mean: float, sd: float) -> str:
    return f"(M={mean:.2f}, SD={sd:.3f})"


def score_presence(text: str) -> PresenceReport:
    """Parse and score a responses CSV; raises ResponsesError on bad data."""
    reader = csv.DictReader(io.StringIO(text))
    required = {"subject_id", "subscale", "item", "rating"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise ResponsesError(
            f"CSV must have columns {sorted(required)}, "
            f"got {reader.fieldnames}"
        )
    ratings: dict[tuple[str, str, int], int] = {}
    for row_no, row in enumerate(reader, start=2):
        subject = row["subject_id"].strip()
        subscale = row["subscale"].strip()
        if subscale not in SUBSCALES:
            raise ResponsesError(
                f"row {row_no}: unknown subscale '{subscale}'"
            )
        try:
            item = int(row["item"])
            rating = int(row["rating"])
        except (TypeError, ValueError) as exc:
            raise ResponsesError(f"row {row_no}: non-integer item or rating") \
                from exc
        if not 1 <= item <= ITEMS_PER_SUBSCALE:
            raise ResponsesError(f"row {row_no}: item {item} outside 1..5")
        if not 1 <= rating <= 5:
            raise ResponsesError(f"row {row_no}: rating {rating} outside 1..5")
        key = (subject, subscale, item)
        if key in ratings:
            raise ResponsesError(
                f"row {row_no}: duplicate response for subject '{subject}', "
                f"{subscale} item {item}"
            )
        ratings[key] = rating
    if not ratings:
        raise ResponsesError("no responses found")
    subjects = sorted({k[0] for k in ratings})
    for subject in subjects:
        for subscale in SUBSCALES:
            for item in range(1, ITEMS_PER_SUBSCALE + 1):
                if (subject, subscale, item) not in ratings:
                    raise ResponsesError(
                        f"subject '{subject}' is missing {subscale} item {item}"
                    )
    subscales = {}
    for subscale in SUBSCALES:
        values = [r for (s, sc, i), r in ratings.items() if sc == subscale]
        item_means = {}
        for item in range(1, ITEMS_PER_SUBSCALE + 1):
            per_item = [r for (s, sc, i), r in ratings.items()
                        if sc == subscale and i == item]
            item_means[item] = _mean(per_item)
        subscales[subscale] = SubscaleScore(
            mean=_mean(values), sd=_sample_sd(values), item_means=item_means
        )
    return PresenceReport(n_subjects=len(subjects), subscales=subscales)


def _mean(values) -> float:
    return sum(values) / len(values)


def _sample_sd(values) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (n - 1))
