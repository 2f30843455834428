"""Reproduce the happiness statistics from the published per-city counts.

Run from the repository root:  python3 demos/table1_statistics.py
Writes demos/out/happiness.svg and prints the text summary.
"""

from pathlib import Path

from streetpulse.census import CityEmotionCounts, export_csv, import_csv
from streetpulse.stats import (
    chi_square_homogeneity,
    overlap_matrix,
    proportion_ci,
    render_report,
    two_proportion_z,
)

# Table I as printed: Anger, Disgust, Surprise, Fear, Happy. Sad and Neutral
# were never detected, so they are zero for every city.
table = {
    "Barcelona": (2, 0, 90, 203, 5),
    "Istanbul": (1, 1, 64, 227, 7),
    "Kiev": (2, 0, 79, 215, 4),
    "London": (1, 0, 115, 182, 2),
    "New York": (1, 0, 61, 230, 8),
    "Paris": (2, 0, 31, 267, 0),
    "Tokyo": (3, 0, 32, 260, 5),
    "Copenhagen": (1, 0, 69, 227, 3),
}
cities = [
    CityEmotionCounts.of(name, dict(zip(("Anger", "Disgust", "Surprise", "Fear", "Happy"), row)))
    for name, row in table.items()
]

# every city has 300 classified faces
print([c.faces_processed for c in cities])

# the census CSV is the hand-off format between the pipeline and the statistics
csv_text = export_csv(cities)
print(csv_text.splitlines()[:8])
assert import_csv(csv_text) == cities

# happiness proportion per city, with both interval methods
for c in cities:
    wald = proportion_ci(c.happy, 300, method="wald")
    wilson = proportion_ci(c.happy, 300, method="wilson")
    print(f"{c.city:<11} {c.happy}/300  wald [{wald.lower:.4f}, {wald.upper:.4f}]  wilson [{wilson.lower:.4f}, {wilson.upper:.4f}]")

# Paris has zero happy faces: Wald collapses to [0, 0], Wilson does not
print(proportion_ci(0, 300, method="wald"), proportion_ci(0, 300))

# The omnibus test over all eight cities finds no significant difference.
res = chi_square_homogeneity([(c.happy, 300) for c in cities])
print(f"chi2 = {res.statistic:.3f}, df = {res.degrees_of_freedom}, critical = {res.critical_value:.4f}, reject = {res.reject}")

# A single pairwise test reads differently, which is why the report shows both.
pair = two_proportion_z(8, 300, 0, 300)
print(f"New York vs Paris: z = {pair.z:.3f}, significant = {pair.significant}")

# which pairs of Wilson intervals overlap (1) and which are disjoint (0)
m = overlap_matrix([proportion_ci(c.happy, 300) for c in cities])
print(m.astype(int))

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)
svg, summary = render_report(cities)
(out / "happiness.svg").write_text(svg)
print(summary)
