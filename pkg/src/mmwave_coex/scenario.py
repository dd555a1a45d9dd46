"""World construction: fixed stations, buildings, gNB grid and UE drops."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .antenna import GNB_ARRAY, UE_ARRAY, ArrayConfig, Codebook, FsAntennaMask, default_fs_mask, make_codebook
from .channel import ChannelParams
from .errors import (
    DegenerateGeometry,
    EmptyDatabase,
    EmptyDeployment,
    InvalidConfig,
    RegionMostlyIndoor,
)
from .geom import Building, is_simple_polygon, points_in_polygon, polygon_area
from .mitigation import MitigationPolicy

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
FS_HEADER = [
    "id", "rx_lat", "rx_lon", "rx_height_m", "tx_lat", "tx_lon", "tx_height_m",
    "gain_dbi", "beamwidth_deg", "tilt_deg", "noise_figure_db", "channel_ghz",
]
DEFAULT_FS_NOISE_FIGURE_DB = 7.0
FCC_MAX_BEAMWIDTH_DEG = 1.2
FS_GAIN_SANITY_DBI = (30.0, 60.0)
MAX_INDOOR_REJECTION = 0.99


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular projection about ``(lat0, lon0)``; x east, y north in meters."""

    lat0: float
    lon0: float

    def to_local(self, lat, lon):
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        x = np.radians(lon - self.lon0) * EARTH_RADIUS_M * math.cos(math.radians(self.lat0))
        y = np.radians(lat - self.lat0) * EARTH_RADIUS_M
        return x, y

    def to_geodetic(self, x, y):
        lat = self.lat0 + np.degrees(np.asarray(y, dtype=float) / EARTH_RADIUS_M)
        lon = self.lon0 + np.degrees(np.asarray(x, dtype=float) / (EARTH_RADIUS_M * math.cos(math.radians(self.lat0))))
        return lat, lon

    def as_dict(self) -> dict:
        return {"kind": "equirectangular", "lat0": self.lat0, "lon0": self.lon0, "earth_radius_m": EARTH_RADIUS_M}


@dataclass(frozen=True, eq=False)
class FixedStation:
    """Victim FS receiver. The paired transmitter position fixes the boresight."""

    id: str
    rx_pos: tuple[float, float]
    rx_height: float
    tx_pos: tuple[float, float]
    tx_height: float
    tilt_deg: float = 0.0
    max_gain_dbi: float = 50.0
    beamwidth_deg: float = 1.0
    noise_figure_db: float = DEFAULT_FS_NOISE_FIGURE_DB
    mask: FsAntennaMask = field(default_factory=default_fs_mask)
    link_count: int = 1
    channels_ghz: tuple[float, ...] = ()

    def __post_init__(self):
        if tuple(self.rx_pos) == tuple(self.tx_pos):
            raise DegenerateGeometry(f"fixed station {self.id}: rx and tx coincide")
        object.__setattr__(self, "rx_pos", (float(self.rx_pos[0]), float(self.rx_pos[1])))
        object.__setattr__(self, "tx_pos", (float(self.tx_pos[0]), float(self.tx_pos[1])))

    @property
    def boresight(self) -> np.ndarray:
        d = np.subtract(self.tx_pos, self.rx_pos)
        return d / np.hypot(*d)

    @property
    def boresight_az_deg(self) -> float:
        d = np.subtract(self.tx_pos, self.rx_pos)
        return math.degrees(math.atan2(d[1], d[0]))

    @property
    def point(self) -> np.ndarray:
        return np.array([self.rx_pos[0], self.rx_pos[1], self.rx_height])


@dataclass(frozen=True, eq=False)
class GnbSite:
    id: int
    pos: tuple[float, float]
    height: float = 6.0
    orientation_deg: float = 0.0
    array: ArrayConfig = GNB_ARRAY
    grid_index: int = 0

    @property
    def sector_boresights_deg(self) -> np.ndarray:
        return self.orientation_deg + np.array([0.0, 90.0, 180.0, 270.0])

    @property
    def codebook(self) -> Codebook:
        return make_codebook(self.array)

    @property
    def point(self) -> np.ndarray:
        return np.array([self.pos[0], self.pos[1], self.height])


@dataclass(frozen=True)
class UeDrop:
    id: int
    pos: tuple[float, float]
    panel_az_deg: float
    height: float = 1.5
    tilt_deg: float = 6.0

    @property
    def panel_azimuths_deg(self) -> tuple[float, float]:
        return (self.panel_az_deg, self.panel_az_deg + 180.0)


@dataclass(frozen=True)
class DeploymentConfig:
    """Deployment region (local meters) and network/UE density settings."""

    region: tuple[tuple[float, float], ...]
    isd_m: float = 200.0
    ue_count: int | None = None
    ue_density_per_km2: float | None = None
    traffic_load: float = 0.25
    multiplexed_ues_per_site: int | None = None
    corner_snap: bool = False
    corner_offset_m: float = 3.0
    site_orientation_deg: float = 0.0
    gnb_height_m: float = 6.0
    ue_height_m: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "region", tuple((float(x), float(y)) for x, y in self.region))
        if len(self.region) < 3 or polygon_area(self.region) <= 0:
            raise InvalidConfig("deployment region must be a polygon with positive area")
        if self.isd_m <= 0:
            raise InvalidConfig("isd_m must be > 0")
        if not 0 < self.traffic_load <= 1:
            raise InvalidConfig("traffic_load must be in (0, 1]")
        if self.multiplexed_ues_per_site is not None and self.multiplexed_ues_per_site < 1:
            raise InvalidConfig("multiplexed_ues_per_site must be >= 1")
        if self.ue_count is not None and self.ue_count < 0:
            raise InvalidConfig("ue_count must be >= 0")

    @property
    def ues_per_site(self) -> int:
        """Active UEs per site and slot; a 4-sector site at load L serves ceil(4 L)."""
        if self.multiplexed_ues_per_site is not None:
            return self.multiplexed_ues_per_site
        return max(1, math.ceil(4 * self.traffic_load - 1e-9))

    @property
    def area_m2(self) -> float:
        return polygon_area(self.region)

    def n_ues(self) -> int:
        if self.ue_count is not None:
            return self.ue_count
        if self.ue_density_per_km2 is not None:
            return int(round(self.ue_density_per_km2 * self.area_m2 / 1e6))
        raise InvalidConfig("set ue_count or ue_density_per_km2")

    @classmethod
    def square(cls, side_m: float, origin=(0.0, 0.0), **kw) -> "DeploymentConfig":
        x0, y0 = origin
        return cls(region=((x0, y0), (x0 + side_m, y0), (x0 + side_m, y0 + side_m), (x0, y0 + side_m)), **kw)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable simulation world shared read-only by all trials.

    ``ue_model`` is ``"associated"`` (beam association against the gNBs),
    ``"random"`` (random pointing model, gNBs only set the activity count)
    or ``"fixed"`` (the explicit transmit states in ``fixed_ues``).
    """

    stations: tuple[FixedStation, ...]
    deployment: DeploymentConfig
    gnbs: tuple[GnbSite, ...] = ()
    buildings: tuple[Building, ...] = ()
    channel: ChannelParams = ChannelParams()
    gnb_array: ArrayConfig = GNB_ARRAY
    ue_array: ArrayConfig = UE_ARRAY
    policy: MitigationPolicy = MitigationPolicy()
    seed: int = 0
    ue_model: str = "associated"
    random_d0_m: float = 10.0
    fixed_ues: tuple = ()
    downlink: bool = False
    interference_cutoff_m: float | None = None
    projection: LocalProjection | None = None

    def __post_init__(self):
        for name in ("stations", "gnbs", "buildings", "fixed_ues"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.ue_model not in ("associated", "random", "fixed"):
            raise InvalidConfig(f"unknown ue_model {self.ue_model!r}")
        if self.ue_model == "fixed" and not self.fixed_ues:
            raise InvalidConfig("ue_model 'fixed' needs fixed_ues")
        if self.ue_model == "associated" and not self.gnbs:
            raise InvalidConfig("ue_model 'associated' needs at least one gNB")
        if self.ue_model != "associated" and self.policy.needs_association:
            raise InvalidConfig(f"policy {self.policy.kind!r} needs ue_model 'associated'")
        if len({s.id for s in self.stations}) != len(self.stations):
            raise InvalidConfig("fixed station ids must be unique")


# --- fixed-station database -------------------------------------------------


@dataclass
class FsRecord:
    id: str
    rx_lat: float
    rx_lon: float
    rx_height_m: float
    tx_lat: float
    tx_lon: float
    tx_height_m: float
    gain_dbi: float
    beamwidth_deg: float
    tilt_deg: float
    noise_figure_db: float | None
    channel_ghz: float | None

    def pair_key(self, ordered: bool = True):
        a = (round(self.rx_lat, 7), round(self.rx_lon, 7), round(self.rx_height_m, 2))
        b = (round(self.tx_lat, 7), round(self.tx_lon, 7), round(self.tx_height_m, 2))
        return (a, b) if ordered else tuple(sorted((a, b)))


def _opt_float(v):
    v = (v or "").strip()
    return float(v) if v else None


def read_fs_rows(path, strict: bool = False) -> list[FsRecord]:
    """Parse the normalized FS CSV. Malformed rows are logged and skipped."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise InvalidConfig(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = FsRecord(
                    id=row["id"].strip() or f"row{lineno}",
                    rx_lat=float(row["rx_lat"]), rx_lon=float(row["rx_lon"]),
                    rx_height_m=float(row["rx_height_m"]),
                    tx_lat=float(row["tx_lat"]), tx_lon=float(row["tx_lon"]),
                    tx_height_m=float(row["tx_height_m"]),
                    gain_dbi=float(row["gain_dbi"]), beamwidth_deg=float(row["beamwidth_deg"]),
                    tilt_deg=float(row["tilt_deg"]),
                    noise_figure_db=_opt_float(row["noise_figure_db"]),
                    channel_ghz=_opt_float(row["channel_ghz"]),
                )
                vals = [rec.rx_lat, rec.rx_lon, rec.rx_height_m, rec.tx_lat, rec.tx_lon, rec.tx_height_m]
                if not all(math.isfinite(v) for v in vals):
                    raise ValueError("non-finite coordinate")
                if rec.rx_height_m < 0 or rec.tx_height_m < 0:
                    raise ValueError("negative height")
                if (rec.rx_lat, rec.rx_lon) == (rec.tx_lat, rec.tx_lon):
                    raise ValueError("rx and tx coordinates coincide")
            except (TypeError, ValueError) as exc:
                if strict:
                    raise InvalidConfig(f"{path}:{lineno}: {exc}") from exc
                log.warning("%s:%d: skipping malformed row (%s)", path, lineno, exc)
                continue
            out.append(rec)
    return out


def centroid_projection(records: Sequence[FsRecord]) -> LocalProjection:
    if not records:
        raise EmptyDatabase("no fixed-station records")
    lats = [r.rx_lat for r in records] + [r.tx_lat for r in records]
    lons = [r.rx_lon for r in records] + [r.tx_lon for r in records]
    return LocalProjection(float(np.mean(lats)), float(np.mean(lons)))


def stations_from_records(records, projection: LocalProjection, mask: FsAntennaMask | None = None) -> list[FixedStation]:
    """Collapse records with identical (rx, tx) coordinates into one station each."""
    mask = mask or default_fs_mask()
    groups: dict = {}
    for rec in records:
        groups.setdefault(rec.pair_key(), []).append(rec)
    out = []
    for recs in groups.values():
        r = recs[0]
        nf = r.noise_figure_db
        if nf is None:
            log.warning("station %s: no noise figure, using %.1f dB", r.id, DEFAULT_FS_NOISE_FIGURE_DB)
            nf = DEFAULT_FS_NOISE_FIGURE_DB
        if r.beamwidth_deg > FCC_MAX_BEAMWIDTH_DEG:
            log.warning("station %s: beamwidth %.2f deg exceeds the %.1f deg FCC bound",
                        r.id, r.beamwidth_deg, FCC_MAX_BEAMWIDTH_DEG)
        lo, hi = FS_GAIN_SANITY_DBI
        if not lo <= r.gain_dbi <= hi:
            log.warning("station %s: gain %.1f dBi outside [%g, %g]", r.id, r.gain_dbi, lo, hi)
        rx = projection.to_local(r.rx_lat, r.rx_lon)
        tx = projection.to_local(r.tx_lat, r.tx_lon)
        out.append(FixedStation(
            id=r.id, rx_pos=(float(rx[0]), float(rx[1])), rx_height=r.rx_height_m,
            tx_pos=(float(tx[0]), float(tx[1])), tx_height=r.tx_height_m,
            tilt_deg=r.tilt_deg, max_gain_dbi=r.gain_dbi, beamwidth_deg=r.beamwidth_deg,
            noise_figure_db=nf, mask=mask, link_count=len(recs),
            channels_ghz=tuple(x.channel_ghz for x in recs if x.channel_ghz is not None),
        ))
    return out


def load_fs_database(path, projection: LocalProjection | None = None, mask: FsAntennaMask | None = None,
                     strict: bool = False) -> list[FixedStation]:
    records = read_fs_rows(path, strict=strict)
    if not records:
        raise EmptyDatabase(f"{path}: no usable fixed-station rows")
    projection = projection or centroid_projection(records)
    return stations_from_records(records, projection, mask)


def save_fs_database(stations: Sequence[FixedStation], path, projection: LocalProjection) -> None:
    """Write stations back to the normalized CSV, one row per registered link."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FS_HEADER)
        for s in stations:
            rx_lat, rx_lon = projection.to_geodetic(*s.rx_pos)
            tx_lat, tx_lon = projection.to_geodetic(*s.tx_pos)
            chans = list(s.channels_ghz) + [None] * (s.link_count - len(s.channels_ghz))
            for k in range(s.link_count):
                w.writerow([
                    s.id if k == 0 else f"{s.id}#{k}",
                    repr(float(rx_lat)), repr(float(rx_lon)), repr(s.rx_height),
                    repr(float(tx_lat)), repr(float(tx_lon)), repr(s.tx_height),
                    repr(s.max_gain_dbi), repr(s.beamwidth_deg), repr(s.tilt_deg),
                    repr(s.noise_figure_db), "" if chans[k] is None else repr(chans[k]),
                ])


# --- buildings --------------------------------------------------------------


def _clean_ring(coords) -> list[tuple[float, float]]:
    ring = [(float(c[0]), float(c[1])) for c in coords]
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring.pop()
    out = []
    for v in ring:
        if not out or out[-1] != v:
            out.append(v)
    if len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def load_buildings(path, projection: LocalProjection | None = None, strict: bool = False) -> list[Building]:
    """Read a GeoJSON FeatureCollection of Polygons with a numeric ``height_m``.

    With a projection, coordinates are (lon, lat); without one they are
    taken as local meters. Invalid features are logged and skipped.
    """
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        return []
    doc = json.loads(text)
    out = []
    for i, feat in enumerate(doc.get("features", [])):
        fid = str(feat.get("id", (feat.get("properties") or {}).get("id", i)))
        try:
            geom = feat.get("geometry") or {}
            if geom.get("type") != "Polygon":
                raise ValueError(f"unsupported geometry {geom.get('type')!r}")
            props = feat.get("properties") or {}
            if "height_m" not in props:
                raise ValueError("missing height_m")
            height = float(props["height_m"])
            ring = _clean_ring(geom["coordinates"][0])
            if projection is not None:
                lon, lat = np.array(ring).T
                x, y = projection.to_local(lat, lon)
                ring = list(zip(x.tolist(), y.tolist()))
            if len(ring) < 3:
                raise ValueError("fewer than 3 distinct vertices")
            if not is_simple_polygon(ring):
                raise ValueError("self-intersecting or degenerate ring")
            out.append(Building(np.array(ring), height, id=fid))
        except (ValueError, TypeError, KeyError, IndexError, DegenerateGeometry) as exc:
            if strict:
                raise InvalidConfig(f"building {fid}: {exc}") from exc
            log.warning("building %s rejected: %s", fid, exc)
    return out


def inside_any_building(points, buildings: Sequence[Building]) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts), dtype=bool)
    for b in buildings:
        xmin, ymin, xmax, ymax = b.bbox
        cand = (~out) & (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
        if cand.any():
            out[cand] = b.contains(pts[cand])
    return out


# --- gNB deployment ---------------------------------------------------------


def street_corner_candidates(buildings: Sequence[Building], offset_m: float = 3.0) -> np.ndarray:
    """Convex footprint vertices pushed outward by ``offset_m`` (mitred)."""
    pts = []
    for b in buildings:
        fp = b.footprint
        x, y = fp[:, 0], fp[:, 1]
        ccw = float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) > 0
        n = len(fp)
        for i in range(n):
            prev, cur, nxt = fp[i - 1], fp[i], fp[(i + 1) % n]
            e1, e2 = cur - prev, nxt - cur
            cross = e1[0] * e2[1] - e1[1] * e2[0]
            if (cross > 0) != ccw or cross == 0:
                continue
            # Outward normals of the two edges meeting at ``cur``.
            n1 = np.array([e1[1], -e1[0]]) / np.hypot(*e1)
            n2 = np.array([e2[1], -e2[0]]) / np.hypot(*e2)
            if not ccw:
                n1, n2 = -n1, -n2
            pts.append(cur + offset_m * (n1 + n2) / (1.0 + float(n1 @ n2)))
    return np.array(pts).reshape(-1, 2)


def grid_points(cfg: DeploymentConfig) -> np.ndarray:
    """Cell-centred square grid with pitch ``isd_m`` over the region bounding box."""
    reg = np.array(cfg.region)
    (xmin, ymin), (xmax, ymax) = reg.min(axis=0), reg.max(axis=0)
    nx = int(math.floor((xmax - xmin) / cfg.isd_m + 1e-9))
    ny = int(math.floor((ymax - ymin) / cfg.isd_m + 1e-9))
    if nx == 0 or ny == 0:
        return np.empty((0, 2))
    x0 = xmin + ((xmax - xmin) - nx * cfg.isd_m) / 2 + cfg.isd_m / 2
    y0 = ymin + ((ymax - ymin) - ny * cfg.isd_m) / 2 + cfg.isd_m / 2
    xs = x0 + cfg.isd_m * np.arange(nx)
    ys = y0 + cfg.isd_m * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[points_in_polygon(pts, reg)]


def deploy_gnbs(cfg: DeploymentConfig, buildings: Sequence[Building] = (),
                array: ArrayConfig = GNB_ARRAY) -> list[GnbSite]:
    """Grid deployment, optionally snapped to the nearest free street corner.

    Sites are processed in grid order; a corner already claimed by a
    lower-index site is not reassigned and the later site keeps its grid
    position. Sites that end up inside a footprint are dropped.
    """
    grid = grid_points(cfg)
    if len(grid) == 0:
        raise EmptyDeployment(f"region too small for a {cfg.isd_m} m grid")
    final = grid.copy()
    if cfg.corner_snap and buildings:
        corners = street_corner_candidates(buildings, cfg.corner_offset_m)
        if len(corners):
            corners = corners[~inside_any_building(corners, buildings)]
        taken: set[int] = set()
        for g, p in enumerate(grid):
            if not len(corners):
                break
            d = np.hypot(*(corners - p).T)
            k = int(np.argmin(d))
            if d[k] > cfg.isd_m / 2 or k in taken:
                continue
            taken.add(k)
            final[g] = corners[k]
    indoor = inside_any_building(final, buildings) if buildings else np.zeros(len(final), bool)
    sites = []
    seen = set()
    for g, p in enumerate(final):
        key = (round(p[0], 6), round(p[1], 6))
        if indoor[g]:
            log.warning("grid site %d at (%.1f, %.1f) lies inside a building; dropped", g, *p)
            continue
        if key in seen:
            log.warning("grid site %d duplicates an occupied position; dropped", g)
            continue
        seen.add(key)
        sites.append(GnbSite(id=len(sites), pos=(float(p[0]), float(p[1])), height=cfg.gnb_height_m,
                             orientation_deg=cfg.site_orientation_deg, array=array, grid_index=g))
    if not sites:
        raise EmptyDeployment("every grid site fell inside a building")
    return sites


# --- UE drops ---------------------------------------------------------------


def drop_ue_arrays(cfg: DeploymentConfig, buildings: Sequence[Building], rng: np.random.Generator,
                   n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Uniform outdoor positions (n, 2) and first-panel azimuths (n,)."""
    n = cfg.n_ues() if n is None else n
    reg = np.array(cfg.region)
    lo, hi = reg.min(axis=0), reg.max(axis=0)
    accepted = []
    got = in_region = 0
    batch = max(64, 2 * n)
    while got < n:
        cand = rng.uniform(lo, hi, size=(batch, 2))
        cand = cand[points_in_polygon(cand, reg)]
        in_region += len(cand)
        if buildings and len(cand):
            cand = cand[~inside_any_building(cand, buildings)]
        accepted.append(cand)
        got += len(cand)
        if in_region >= 1000 and got < (1 - MAX_INDOOR_REJECTION) * in_region:
            raise RegionMostlyIndoor(f"{in_region - got} of {in_region} candidate UE positions were indoors")
        if in_region == 0 and batch > 1e6:
            raise DegenerateGeometry("region has no sampleable area")
        batch = min(batch * 2, 1 << 20) if not len(cand) else batch
    pos = np.concatenate(accepted)[:n] if accepted else np.empty((0, 2))
    panel = rng.uniform(0.0, 180.0, size=n)
    return pos, panel


def drop_ues(cfg: DeploymentConfig, buildings: Sequence[Building], rng: np.random.Generator,
             n: int | None = None, tilt_deg: float = UE_ARRAY.mech_tilt_deg) -> list[UeDrop]:
    pos, panel = drop_ue_arrays(cfg, buildings, rng, n)
    return [UeDrop(i, (float(p[0]), float(p[1])), float(a), cfg.ue_height_m, tilt_deg)
            for i, (p, a) in enumerate(zip(pos, panel))]
