"""Scoring a presence questionnaire.

Builds a synthetic response sheet for six subjects (three five-item
subscales, 1-5 ratings), scores it, and prints the per-subscale means and
sample standard deviations in the standard reporting format.
"""

import random

from hilsim.presence import format_m_sd, score_presence

rng = random.Random(2022)
rows = ["subject_id,subscale,item,rating"]
# Subjects tend to rate the environment higher than the vehicle here, so
# the subscale ordering in the output is easy to eyeball.
bias = {"self": 4, "vehicle": 3, "environment": 5}
for subject in range(1, 7):
    for subscale in ("self", "vehicle", "environment"):
        for item in range(1, 6):
            rating = max(1, min(5, bias[subscale] + rng.choice((-1, 0, 0, 1))))
            rows.append(f"subject{subject},{subscale},{item},{rating}")

report = score_presence("\n".join(rows) + "\n")
print(f"{report.n_subjects} subjects, 15 items each")
for name in ("self", "vehicle", "environment"):
    score = report.subscales[name]
    print(f"  {name:12s} {format_m_sd(score.mean, score.sd)}")
    items = "  ".join(f"{i}:{m:.2f}" for i, m in sorted(score.item_means.items()))
    print(f"               per item  {items}")
