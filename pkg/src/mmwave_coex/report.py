"""Empirical statistics and the plain-CSV output set of a run."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidQuery

INR_PROTECTION_DB = -6.0
# A 95th-percentile INR below the threshold allows at most 5% exceedance.
DEFAULT_MAX_EXCEEDANCE = 0.05


@dataclass(frozen=True)
class EmpiricalCdf:
    values: np.ndarray
    probs: np.ndarray

    def __call__(self, x):
        """P(X <= x)."""
        return np.searchsorted(self.values, x, side="right") / len(self.values)


def cdf(samples) -> EmpiricalCdf:
    v = np.sort(np.asarray(samples, dtype=float).ravel())
    if v.size == 0:
        raise InvalidQuery("cdf of an empty sample")
    return EmpiricalCdf(v, np.arange(1, v.size + 1) / v.size)


def percentile(samples, q: float) -> float:
    """Nearest-rank percentile: the smallest value with at least q% of samples at or below it."""
    v = np.sort(np.asarray(samples, dtype=float).ravel())
    if v.size == 0:
        raise InvalidQuery("percentile of an empty sample")
    if not 0 <= q <= 100:
        raise InvalidQuery(f"q={q} outside [0, 100]")
    rank = max(1, math.ceil(q / 100.0 * v.size - 1e-9))
    return float(v[rank - 1])


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else self.counts.astype(float)


def histogram(samples, width: float, anchor: float = 0.0) -> Histogram:
    """Fixed-width bins aligned to ``anchor``; bins are [lo, hi)."""
    v = np.asarray(samples, dtype=float).ravel()
    if v.size == 0:
        raise InvalidQuery("histogram of an empty sample")
    if width <= 0:
        raise InvalidQuery("bin width must be positive")
    # The small slack keeps values like 0.3 with width 0.1 out of the bin below.
    lo = anchor + width * math.floor((v.min() - anchor) / width + 1e-9)
    idx = np.floor((v - lo) / width + 1e-9).astype(int)
    n = int(idx.max()) + 1
    edges = lo + width * np.arange(n + 1)
    return Histogram(edges, np.bincount(idx, minlength=n))


@dataclass(frozen=True)
class ProtectionResult:
    fs_id: str
    n: int
    exceedances: int
    exceedance: float
    p95_db: float
    passed: bool


def inr_protection_report(samples_by_fs: dict, threshold_db: float = INR_PROTECTION_DB,
                          max_exceedance: float = DEFAULT_MAX_EXCEEDANCE) -> list[ProtectionResult]:
    """Per-FS exceedance probability P(INR >= threshold).

    Censored (-inf) samples count toward n but never exceed. A station
    passes when its exceedance probability is at most ``max_exceedance``.
    """
    out = []
    for fid, s in samples_by_fs.items():
        s = np.asarray(getattr(s, "samples", s), dtype=float)
        n = s.size
        if n == 0:
            raise InvalidQuery(f"no samples for {fid}")
        k = int(np.count_nonzero(s >= threshold_db))
        fin = s[np.isfinite(s)]
        p95 = percentile(fin, 95) if fin.size else -math.inf
        out.append(ProtectionResult(str(fid), n, k, k / n, p95, k / n <= max_exceedance))
    return out


# --- output files -----------------------------------------------------------


def _f(x) -> str:
    return repr(float(x))


def write_inr_samples(path, sets: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fs_id", "trial", "inr_db"])
        for fid, s in sets.items():
            for t, v in enumerate(s.samples):
                w.writerow([fid, t, _f(v)])


def read_inr_samples(path) -> dict[str, np.ndarray]:
    out: dict[str, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["fs_id"], []).append((int(row["trial"]), float(row["inr_db"])))
    return {k: np.array([v for _, v in sorted(rows)]) for k, rows in out.items()}


def write_run_outputs(result, out_dir, extra_meta: dict | None = None, association_dump: bool = False) -> list[Path]:
    """Write inr_samples.csv, ue_snr.csv, beam_usage.csv, run_metadata.json (and DL/association files)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "inr_samples.csv"]
    write_inr_samples(files[0], result.inr)
    if result.dl_inr is not None:
        files.append(out / "dl_inr_samples.csv")
        write_inr_samples(files[-1], result.dl_inr)

    files.append(out / "ue_snr.csv")
    with open(files[-1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "snr_db"])
        for t, v in zip(result.snr_trial, result.snr_db):
            w.writerow([int(t), _f(v)])

    files.append(out / "beam_usage.csv")
    with open(files[-1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", "count"])
        for kind in sorted(result.beam_usage):
            for i, c in enumerate(result.beam_usage[kind]):
                w.writerow([kind, i, int(c)])

    if association_dump and result.associations:
        files.append(out / "association.csv")
        with open(files[-1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "ue_id", "gnb_id", "sector", "gnb_beam", "ue_panel", "ue_beam", "rsrp_dbm", "snr_db"])
            for t, _, a in result.associations:
                for link in a.links():
                    w.writerow([t, link.ue_id, link.gnb_id, link.sector, link.gnb_beam, link.ue_panel,
                                link.ue_beam, _f(link.rsrp_dbm), _f(link.dl_snr_db)])

    meta = {
        "config_hash": result.config_hash,
        "seed": result.seed,
        "trials": result.trials,
        "censored": {fid: s.censored for fid, s in result.inr.items()},
        "unserved_ue_samples": result.n_unserved,
        "clamped_links": result.clamped_links,
    }
    if result.exclusion is not None:
        meta["excluded_beams"] = result.exclusion.n_excluded_beams
    meta.update(extra_meta or {})
    files.append(out / "run_metadata.json")
    files[-1].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return files


def operating_point(result) -> dict:
    """Median / cell-edge (5th percentile) DL SNR and the worst per-FS 95th-percentile INR."""
    snr = result.snr_db[np.isfinite(result.snr_db)]
    return {
        "median_snr_db": percentile(snr, 50) if snr.size else math.nan,
        "cell_edge_snr_db": percentile(snr, 5) if snr.size else math.nan,
        "inr_p95_db": result.p95(),
    }
