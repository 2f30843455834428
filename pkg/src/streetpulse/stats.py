"""Happiness proportions, their confidence intervals and homogeneity tests.

Significance is decided against embedded critical values rather than
p-values. The tables are checked against scipy in the test suite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

# two-sided standard-normal quantiles by confidence level
Z_TABLE = {
    0.80: 1.281552,
    0.90: 1.644854,
    0.95: 1.959964,
    0.98: 2.326348,
    0.99: 2.575829,
}

# upper 5% points of the chi-square distribution, df 1..20
CHI2_CRITICAL_05 = {
    1: 3.841459,
    2: 5.991465,
    3: 7.814728,
    4: 9.487729,
    5: 11.070498,
    6: 12.591587,
    7: 14.067140,
    8: 15.507313,
    9: 16.918978,
    10: 18.307038,
    11: 19.675138,
    12: 21.026070,
    13: 22.362032,
    14: 23.684791,
    15: 24.995790,
    16: 26.296228,
    17: 27.587112,
    18: 28.869299,
    19: 30.143527,
    20: 31.410433,
}

METHODS = ("wilson", "wald")
DEFAULT_METHOD = "wilson"
DEFAULT_LEVEL = 0.95
ALPHA = 0.05


@dataclass(frozen=True)
class ProportionEstimate:
    successes: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.successes <= self.trials:
            raise ValueError(f"successes {self.successes} outside [0, {self.trials}]")

    @property
    def point(self) -> float:
        return self.successes / self.trials


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def overlaps(self, other: "ConfidenceInterval") -> bool:
        return max(self.lower, other.lower) <= min(self.upper, other.upper)


@dataclass(frozen=True)
class ZTestResult:
    z: float
    critical_value: float
    significant: bool


@dataclass(frozen=True)
class HomogeneityResult:
    statistic: float
    degrees_of_freedom: int
    critical_value: float
    reject: bool


def z_value(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    for known, z in Z_TABLE.items():
        if math.isclose(level, known, abs_tol=1e-12):
            return z
    raise ValueError(f"no embedded z value for level {level}; available: {sorted(Z_TABLE)}")


def proportion_ci(successes: int, trials: int, level: float = DEFAULT_LEVEL, method: str = DEFAULT_METHOD) -> ConfidenceInterval:
    """Wald or Wilson interval for a binomial proportion."""
    est = ProportionEstimate(successes, trials)
    z = z_value(level)
    n, k, p = trials, successes, est.point
    if method == "wald":
        half = z * math.sqrt(p * (1 - p) / n)
        return ConfidenceInterval(max(0.0, p - half), min(1.0, p + half), level, method)
    if method == "wilson":
        z2 = z * z
        denom = 1 + z2 / n
        center = (p + z2 / (2 * n)) / denom
        half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
        # closed forms at the boundaries, where the general one only
        # reaches 0 or 1 up to rounding
        lower = 0.0 if k == 0 else center - half
        upper = 1.0 if k == n else center + half
        return ConfidenceInterval(lower, upper, level, method)
    raise ValueError(f"unknown interval method {method!r}; choose from {METHODS}")


def two_proportion_z(k1: int, n1: int, k2: int, n2: int, critical_value: float = Z_TABLE[0.95]) -> ZTestResult:
    """Pooled two-proportion z test, two-sided."""
    a, b = ProportionEstimate(k1, n1), ProportionEstimate(k2, n2)
    pooled = (k1 + k2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        z = 0.0
    else:
        z = (a.point - b.point) / math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    return ZTestResult(z, critical_value, abs(z) > critical_value)


def chi_square_homogeneity(counts: Sequence[tuple[int, int]]) -> HomogeneityResult:
    """Chi-square test on the 2 x C table of (successes, failures) per group."""
    if len(counts) < 2:
        raise ValueError("homogeneity test needs at least two groups")
    est = [ProportionEstimate(int(k), int(n)) for k, n in counts]
    total_k = sum(e.successes for e in est)
    total_n = sum(e.trials for e in est)
    pooled = total_k / total_n
    if pooled in (0.0, 1.0):
        raise ValueError("degenerate table: an expected cell count is zero")
    statistic = 0.0
    for e in est:
        for observed, expected in (
            (e.successes, e.trials * pooled),
            (e.trials - e.successes, e.trials * (1 - pooled)),
        ):
            statistic += (observed - expected) ** 2 / expected
    df = len(est) - 1
    if df not in CHI2_CRITICAL_05:
        raise ValueError(f"no embedded critical value for {df} degrees of freedom")
    critical = CHI2_CRITICAL_05[df]
    return HomogeneityResult(statistic, df, critical, statistic > critical)


def overlap_matrix(intervals: Sequence[ConfidenceInterval]) -> np.ndarray:
    """``m[i, j]`` is True when closed intervals i and j share a point."""
    if len({(ci.level, ci.method) for ci in intervals}) > 1:
        raise ValueError("intervals must share level and method")
    n = len(intervals)
    m = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            m[i, j] = intervals[i].overlaps(intervals[j])
    return m


# ---------------------------------------------------------------------------
# report


@dataclass
class CityHappiness:
    city: str
    happy: int
    faces: int
    interval: ConfidenceInterval | None

    @property
    def point(self) -> float | None:
        return self.happy / self.faces if self.faces else None


def happiness(results, level: float = DEFAULT_LEVEL, method: str = DEFAULT_METHOD) -> list[CityHappiness]:
    rows = []
    for r in results:
        happy = int(r.counts["Happy"])
        ci = proportion_ci(happy, r.faces_processed, level, method) if r.faces_processed else None
        rows.append(CityHappiness(r.city, happy, r.faces_processed, ci))
    return rows


def summarize(results, method: str = DEFAULT_METHOD, level: float = DEFAULT_LEVEL) -> str:
    """Plain-text per-city table, omnibus verdict and pairwise z tests."""
    rows = happiness(results, level, method)
    if not rows:
        raise ValueError("no cities to summarize")
    pct = f"{round(level * 100):d}%"
    width = max(len(r.city) for r in rows)
    lines = [f"happiness proportion by city ({method} {pct} interval)"]
    for r in rows:
        if r.interval is None:
            lines.append(f"{r.city:<{width}}  {r.happy}/{r.faces}  no faces classified")
            continue
        lines.append(
            f"{r.city:<{width}}  {r.happy}/{r.faces}  p={r.point:.6f}  "
            f"CI [{r.interval.lower:.6f}, {r.interval.upper:.6f}]"
        )
    valid = [r for r in rows if r.faces]
    if len(valid) < 2:
        lines.append("omnibus chi-square test skipped: need at least two cities with classified faces")
        return "\n".join(lines) + "\n"
    try:
        res = chi_square_homogeneity([(r.happy, r.faces) for r in valid])
    except ValueError as exc:
        lines.append(f"omnibus chi-square test skipped: {exc}")
    else:
        lines.append(
            f"omnibus chi-square homogeneity: statistic {res.statistic:.4f}, df {res.degrees_of_freedom}, "
            f"critical {res.critical_value:.4f} at {ALPHA}"
        )
        verdict = "reject" if res.reject else "fail to reject"
        lines.append(f"verdict: {verdict} homogeneity at {ALPHA}")
    lines.append(f"pairwise two-proportion z tests (pooled; |z| > {Z_TABLE[0.95]} is significant; not used for the verdict)")
    for a, b in itertools.combinations(valid, 2):
        t = two_proportion_z(a.happy, a.faces, b.happy, b.faces)
        flag = "significant" if t.significant else "not significant"
        lines.append(f"  {a.city} vs {b.city}: z = {t.z:+.4f} {flag}")
    return "\n".join(lines) + "\n"


def render_svg(results, method: str = DEFAULT_METHOD, level: float = DEFAULT_LEVEL) -> str:
    """SVG chart with one point and error bar per city."""
    rows = happiness(results, level, method)
    if not rows:
        raise ValueError("no cities to plot")
    width, height = 80 + 70 * len(rows), 360
    left, right, top, bottom = 70, 20, 40, 70
    plot_h = height - top - bottom
    uppers = [r.interval.upper for r in rows if r.interval is not None]
    y_max = max(0.05, math.ceil(max(uppers, default=0.0) * 1.1 * 100) / 100)

    def ypos(v: float) -> float:
        return top + plot_h * (1 - v / y_max)

    pct = f"{round(level * 100):d}%"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
        f"Happiness proportion by city ({pct} {escape(method)} interval)</text>",
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{width - right}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for i in range(6):
        v = y_max * i / 5
        y = ypos(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{v:.3f}</text>')
    out.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">Happiness proportion</text>'
    )
    out.append(f'<text x="{(left + width - right) / 2:.1f}" y="{height - 10}" text-anchor="middle">City</text>')
    step = (width - left - right) / len(rows)
    for i, r in enumerate(rows):
        x = left + step * (i + 0.5)
        out.append(f'<text x="{x:.2f}" y="{top + plot_h + 18}" text-anchor="middle">{escape(r.city)}</text>')
        if r.interval is None:
            continue
        lo, hi, p = ypos(r.interval.lower), ypos(r.interval.upper), ypos(r.point)
        out.append(f'<g class="errorbar" data-city={quoteattr(r.city)}>')
        out.append(f'<line x1="{x:.2f}" y1="{hi:.2f}" x2="{x:.2f}" y2="{lo:.2f}" stroke="steelblue" stroke-width="2"/>')
        out.append(f'<line x1="{x - 8:.2f}" y1="{hi:.2f}" x2="{x + 8:.2f}" y2="{hi:.2f}" stroke="steelblue" stroke-width="2"/>')
        out.append(f'<line x1="{x - 8:.2f}" y1="{lo:.2f}" x2="{x + 8:.2f}" y2="{lo:.2f}" stroke="steelblue" stroke-width="2"/>')
        out.append(f'<circle cx="{x:.2f}" cy="{p:.2f}" r="4" fill="darkred"/>')
        out.append(
            f"<title>{escape(r.city)}: {r.happy}/{r.faces}, "
            f"[{r.interval.lower:.4f}, {r.interval.upper:.4f}]</title>"
        )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(results, method: str = DEFAULT_METHOD, level: float = DEFAULT_LEVEL) -> tuple[str, str]:
    """Return ``(svg, summary)`` for a sequence of per-city counts."""
    results = list(results)
    if not results:
        raise ValueError("report needs at least one city")
    return render_svg(results, method, level), summarize(results, method, level)
