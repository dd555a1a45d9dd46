"""Characterization of an incumbent fixed-station database."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidQuery
from .report import EmpiricalCdf, Histogram, cdf, histogram, percentile
from .scenario import FS_GAIN_SANITY_DBI, FsRecord

log = logging.getLogger(__name__)

HEIGHT_BIN_M = 5.0
TILT_BIN_DEG = 2.0
GAIN_BIN_DB = 1.0
BEAMWIDTH_BIN_DEG = 0.1


@dataclass(frozen=True)
class RadialDensityCurve:
    center: tuple[float, float]
    radii_km: np.ndarray
    counts: np.ndarray
    densities: np.ndarray


def _rx_xy(stations) -> np.ndarray:
    return np.array([s.rx_pos for s in stations], dtype=float).reshape(-1, 2)


def density_vs_radius(stations, center, radii_km) -> RadialDensityCurve:
    """Stations per km^2 inside closed disks of growing radius around ``center``."""
    r = np.asarray(radii_km, dtype=float)
    if r.size == 0:
        raise InvalidQuery("radii list is empty")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise InvalidQuery("radii must be positive and strictly increasing")
    d_km = np.hypot(*(_rx_xy(stations) - np.asarray(center, dtype=float)).T) / 1000.0
    counts = np.array([np.count_nonzero(d_km <= ri + 1e-12) for ri in r])
    return RadialDensityCurve((float(center[0]), float(center[1])), r, counts, counts / (math.pi * r ** 2))


@dataclass(frozen=True)
class HeightStats:
    mean: float
    median: float
    p5: float
    p95: float
    cdf: EmpiricalCdf
    pdf: Histogram


def height_stats(stations, bin_m: float = HEIGHT_BIN_M) -> HeightStats:
    h = np.array([s.rx_height for s in stations], dtype=float)
    if h.size == 0:
        raise InvalidQuery("no stations")
    return HeightStats(float(h.mean()), percentile(h, 50), percentile(h, 5), percentile(h, 95), cdf(h),
                       histogram(h, bin_m))


def tilt_gain_beamwidth_histograms(stations) -> dict[str, Histogram]:
    if not stations:
        raise InvalidQuery("no stations")
    gains = np.array([s.max_gain_dbi for s in stations])
    lo, hi = FS_GAIN_SANITY_DBI
    bad = [s.id for s in stations if not lo <= s.max_gain_dbi <= hi]
    if bad:
        log.warning("%d station(s) with gain outside [%g, %g] dBi: %s", len(bad), lo, hi, ", ".join(bad[:10]))
    return {
        "tilt": histogram([s.tilt_deg for s in stations], TILT_BIN_DEG),
        "gain": histogram(gains, GAIN_BIN_DB),
        "beamwidth": histogram([s.beamwidth_deg for s in stations], BEAMWIDTH_BIN_DEG),
    }


def gain_outliers(stations) -> list[str]:
    lo, hi = FS_GAIN_SANITY_DBI
    return [s.id for s in stations if not lo <= s.max_gain_dbi <= hi]


def tilt_mass_within(stations, lo: float = -10.0, hi: float = 10.0) -> float:
    t = np.array([s.tilt_deg for s in stations], dtype=float)
    if t.size == 0:
        raise InvalidQuery("no stations")
    return float(np.count_nonzero((t >= lo) & (t <= hi)) / t.size)


@dataclass(frozen=True)
class HeightVsTilt:
    edges: np.ndarray
    counts: np.ndarray
    mean_height: np.ndarray
    correlation: float


def height_vs_tilt(stations, bin_deg: float = TILT_BIN_DEG) -> HeightVsTilt:
    """Mean station height per tilt bin; empty bins are NaN."""
    if not stations:
        raise InvalidQuery("no stations")
    t = np.array([s.tilt_deg for s in stations], dtype=float)
    h = np.array([s.rx_height for s in stations], dtype=float)
    hist = histogram(t, bin_deg)
    idx = np.floor((t - hist.edges[0]) / bin_deg + 1e-9).astype(int)
    sums = np.bincount(idx, weights=h, minlength=len(hist.counts))
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(hist.counts > 0, sums / hist.counts, np.nan)
    corr = float(np.corrcoef(t, h)[0, 1]) if t.size > 1 and t.std() > 0 and h.std() > 0 else math.nan
    return HeightVsTilt(hist.edges, hist.counts, mean, corr)


def link_pair_counts(rows: Sequence[FsRecord]) -> dict[str, int]:
    """Registered links versus distinct coordinate pairs (direction ignored)."""
    return {"links": len(rows), "pairs": len({r.pair_key(ordered=False) for r in rows})}


# --- CLI helper -------------------------------------------------------------


def _write_hist(path: Path, hist: Histogram, label: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{label}_lo", f"{label}_hi", "count", "mass"])
        for lo, hi, c, m in zip(hist.edges[:-1], hist.edges[1:], hist.counts, hist.mass):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(m))])


def write_analysis(rows, stations, out_dir, center=(0.0, 0.0), radii_km=(1, 2, 5, 10, 20)) -> str:
    """Write one CSV per statistic and return the summary text."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lp = link_pair_counts(rows)
    dens = density_vs_radius(stations, center, radii_km)
    hs = height_stats(stations)
    hists = tilt_gain_beamwidth_histograms(stations)
    hvt = height_vs_tilt(stations)

    with open(out / "density_vs_radius.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius_km", "count", "density_per_km2"])
        for r, c, d in zip(dens.radii_km, dens.counts, dens.densities):
            w.writerow([repr(float(r)), int(c), repr(float(d))])
    with open(out / "height_cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["height_m", "cdf"])
        for v, p in zip(hs.cdf.values, hs.cdf.probs):
            w.writerow([repr(float(v)), repr(float(p))])
    _write_hist(out / "height_pdf.csv", hs.pdf, "height_m")
    _write_hist(out / "tilt_hist.csv", hists["tilt"], "tilt_deg")
    _write_hist(out / "gain_hist.csv", hists["gain"], "gain_dbi")
    _write_hist(out / "beamwidth_hist.csv", hists["beamwidth"], "beamwidth_deg")
    with open(out / "height_vs_tilt.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tilt_lo", "tilt_hi", "count", "mean_height_m"])
        for lo, hi, c, m in zip(hvt.edges[:-1], hvt.edges[1:], hvt.counts, hvt.mean_height):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), "" if math.isnan(m) else repr(float(m))])
    with open(out / "link_pair_counts.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["links", "pairs"])
        w.writerow([lp["links"], lp["pairs"]])

    lines = [
        f"links: {lp['links']}",
        f"pairs: {lp['pairs']}",
        f"stations (victim receivers): {len(stations)}",
        f"height mean/median/p5/p95 (m): {hs.mean:.2f} / {hs.median:.2f} / {hs.p5:.2f} / {hs.p95:.2f}",
        f"tilt mass within [-10, 10] deg: {tilt_mass_within(stations):.4f}",
        f"gain outliers outside {FS_GAIN_SANITY_DBI}: {len(gain_outliers(stations))}",
        f"height-tilt correlation: {hvt.correlation:.4f}",
    ]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    return text
