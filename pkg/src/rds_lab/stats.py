"""Distributional summaries of replicate estimates.

Moments, Gaussian kernel density estimates, normal Q-Q data, the
Kolmogorov-Smirnov distance to a fitted normal, mode finding, and the
mixture-separation diagnostic that compares per-seed-class means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as spstats

KDE_GRID_SIZE = 512


class StatsError(ValueError):
    pass


def _clean(values):
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise StatsError("need at least one value")
    if not np.all(np.isfinite(values)):
        raise StatsError("values must be finite")
    return values


def silverman_bandwidth(values):
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), the usual normal reference rule."""
    values = _clean(values)
    n = values.size
    sd = values.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    spread_candidates = [s for s in (sd, iqr / 1.34) if s > 0]
    if not spread_candidates:
        raise StatsError(
            "degenerate input: all values identical, no bandwidth exists"
        )
    return 0.9 * min(spread_candidates) * n ** (-0.2)


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        density = np.array(self.density, dtype=float)
        if grid.shape != density.shape:
            raise StatsError("grid and density must align")
        grid.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))

    def to_csv(self):
        lines = ["x,density"]
        for x, d in zip(self.grid, self.density):
            lines.append(f"{float(x)!r},{float(d)!r}")
        return "\n".join(lines) + "\n"


def kde(values, bandwidth=None):
    """Gaussian-kernel density on a 512-point grid spanning the data
    plus three bandwidths on each side."""
    values = _clean(values)
    if np.unique(values).size < 2:
        raise StatsError(
            "degenerate input: need at least 2 distinct values for a density"
        )
    h = float(bandwidth) if bandwidth is not None else silverman_bandwidth(values)
    if h <= 0:
        raise StatsError("bandwidth must be positive")
    grid = np.linspace(values.min() - 3 * h, values.max() + 3 * h, KDE_GRID_SIZE)
    z = (grid[:, None] - values[None, :]) / h
    density = np.exp(-0.5 * z**2).sum(axis=1) / (values.size * h * np.sqrt(2 * np.pi))
    return DensityCurve(grid=grid, density=density, bandwidth=h)


def curve_modes(curve):
    """Grid points that are strict local maxima of the density."""
    d = curve.density
    interior = (d[1:-1] > d[:-2]) & (d[1:-1] > d[2:])
    return curve.grid[1:-1][interior]


def qq_normal(values):
    """Normal Q-Q pairs: standard-normal quantiles at (i - 0.5)/n against
    the sorted values standardized by their own mean and sd."""
    values = _clean(values)
    n = values.size
    if n < 2:
        raise StatsError("need at least 2 values for Q-Q data")
    sd = values.std(ddof=1)
    if sd == 0:
        raise StatsError("degenerate input: zero variance")
    empirical = np.sort((values - values.mean()) / sd)
    theoretical = spstats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return theoretical, empirical


def qq_to_csv(theoretical, empirical):
    lines = ["theoretical,empirical"]
    for t, e in zip(theoretical, empirical):
        lines.append(f"{float(t)!r},{float(e)!r}")
    return "\n".join(lines) + "\n"


def ks_to_fitted_normal(values):
    """Kolmogorov-Smirnov distance between the empirical CDF and the
    normal fitted by moments. A zero-spread sample sits distance 0.5 from
    the point-mass limit of the fit."""
    values = _clean(values)
    n = values.size
    sd = values.std(ddof=1) if n > 1 else 0.0
    if sd == 0:
        return 0.5
    z = np.sort((values - values.mean()) / sd)
    cdf = spstats.norm.cdf(z)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def log_slope(x, y):
    """Least-squares slope of log(y) against x; y must be positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.shape[0] < 2:
        raise StatsError("log regression needs at least 2 aligned points")
    if np.any(y <= 0):
        raise StatsError("log regression needs positive values")
    slope, _ = np.polyfit(x, np.log(y), 1)
    return float(slope)


@dataclass(frozen=True)
class SeparationReport:
    """Largest standardized gap between per-class means."""

    class_means: dict
    class_counts: dict
    z_statistic: float
    separated: bool
    classes_compared: tuple


def mixture_separation(values_by_class, z_threshold=3.0):
    """Compare per-class means pairwise; the report carries the largest
    |mean difference| / pooled standard error, declared separated when it
    exceeds the threshold."""
    if len(values_by_class) < 2:
        raise StatsError("need at least 2 seed classes to compare")
    cleaned = {key: _clean(vals) for key, vals in values_by_class.items()}
    for key, vals in cleaned.items():
        if vals.size < 2:
            raise StatsError(f"class {key!r} needs at least 2 values")
    keys = sorted(cleaned, key=str)
    best_z = -np.inf
    best_pair = (keys[0], keys[1])
    for a_idx in range(len(keys)):
        for b_idx in range(a_idx + 1, len(keys)):
            a, b = cleaned[keys[a_idx]], cleaned[keys[b_idx]]
            se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
            if se == 0:
                z = np.inf if a.mean() != b.mean() else 0.0
            else:
                z = abs(a.mean() - b.mean()) / se
            if z > best_z:
                best_z = z
                best_pair = (keys[a_idx], keys[b_idx])
    return SeparationReport(
        class_means={k: float(v.mean()) for k, v in cleaned.items()},
        class_counts={k: int(v.size) for k, v in cleaned.items()},
        z_statistic=float(best_z),
        separated=bool(best_z > z_threshold),
        classes_compared=best_pair,
    )


@dataclass(frozen=True)
class DistributionSummary:
    mean: float
    variance: float
    ks_fitted_normal: float
    mode_locations: tuple
    curve: DensityCurve | None
    qq: tuple | None


def summarize(values):
    """One-stop summary; density and Q-Q parts are omitted when the input
    is too degenerate to support them."""
    values = _clean(values)
    mean = float(values.mean())
    variance = float(values.var(ddof=1)) if values.size > 1 else 0.0
    ks = ks_to_fitted_normal(values)
    try:
        curve = kde(values)
        modes = tuple(float(x) for x in curve_modes(curve))
    except StatsError:
        curve = None
        modes = ()
    try:
        qq = qq_normal(values)
    except StatsError:
        qq = None
    return DistributionSummary(
        mean=mean,
        variance=variance,
        ks_fitted_normal=ks,
        mode_locations=modes,
        curve=curve,
        qq=qq,
    )
