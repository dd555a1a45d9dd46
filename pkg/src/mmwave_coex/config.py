"""Run configuration: one YAML/JSON tree mapped onto dataclasses.

Top-level keys::

    fs_database: path to the normalized FS CSV (relative to the config file)
    fs_mask: optional mask CSV (off_axis_deg,suppression_db)
    buildings: optional GeoJSON path
    buildings_crs: geodetic | local          (default geodetic)
    origin: {lat, lon}                        (default: FS centroid)
    deployment: region (local m), isd_m, ue_count | ue_density_per_km2,
                traffic_load, multiplexed_ues_per_site, corner_snap,
                corner_offset_m, site_orientation_deg, gnb_height_m, ue_height_m
    channel: fc_ghz, sigma_los_db, sigma_nlos_db, bandwidth_hz,
             noise_psd_dbm_hz, los_mode, ue_noise_figure_db
    gnb_array / ue_array: ArrayConfig fields plus optional max_eirp_dbm
    mitigation: kind, basis, psi_deg, radius_m, p_lo_eirp_dbm, p_up_eirp_dbm
    simulation: trials, seed, ue_model, d0_m, downlink,
                interference_cutoff_m, association_dump, fixed_ues

Unknown keys anywhere raise :class:`InvalidConfig`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .antenna import GNB_ARRAY, UE_ARRAY, ArrayConfig, default_fs_mask, load_fs_mask
from .channel import ChannelParams
from .errors import InvalidConfig
from .interference import UeTxState
from .mitigation import MitigationPolicy
from .scenario import (
    DeploymentConfig,
    LocalProjection,
    Scenario,
    centroid_projection,
    deploy_gnbs,
    load_buildings,
    read_fs_rows,
    stations_from_records,
)

TOP_KEYS = {"fs_database", "fs_mask", "buildings", "buildings_crs", "origin", "deployment", "channel",
            "gnb_array", "ue_array", "mitigation", "simulation"}


@dataclass
class SimulationSettings:
    trials: int = 1000
    seed: int = 0
    ue_model: str = "associated"
    d0_m: float = 10.0
    downlink: bool = False
    interference_cutoff_m: float | None = None
    association_dump: bool = False
    fixed_ues: list = field(default_factory=list)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    simulation: SimulationSettings

    @property
    def trials(self) -> int:
        return self.simulation.trials


def _check_keys(data: Any, allowed, where: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"{where}: expected a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise InvalidConfig(f"{where}: unknown key(s) {sorted(unknown)}")
    return data


def _build(cls, data, where: str, extra=()):
    names = {f.name for f in fields(cls) if f.init}
    data = _check_keys(data, names | set(extra), where)
    try:
        return cls(**{k: v for k, v in data.items() if k in names})
    except TypeError as exc:
        raise InvalidConfig(f"{where}: {exc}") from exc


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise InvalidConfig(f"config file {p} not found")
    try:
        text = p.read_text()
        raw = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"{p}: cannot parse ({exc})") from exc
    raw = _check_keys(raw, TOP_KEYS, "config")
    if "fs_database" not in raw:
        raise InvalidConfig("config: fs_database is required")
    sim = _build(SimulationSettings, raw.get("simulation"), "simulation")
    return RunConfig(raw, p.parent, sim)


def _array(data, default: ArrayConfig, where: str) -> ArrayConfig:
    data = dict(_check_keys(data, {f.name for f in fields(ArrayConfig)} | {"max_eirp_dbm"}, where))
    target = data.pop("max_eirp_dbm", None)
    try:
        cfg = replace(default, **data)
    except TypeError as exc:
        raise InvalidConfig(f"{where}: {exc}") from exc
    return cfg.with_max_eirp(float(target)) if target is not None else cfg


def _fixed_ue(d: dict, ue_array: ArrayConfig) -> UeTxState:
    d = _check_keys(d, {"x", "y", "height", "panel_az_deg", "panel_el_deg", "beam_az_deg", "beam_el_deg",
                        "power_dbm"}, "simulation.fixed_ues[]")
    try:
        panel_el = d.get("panel_el_deg", ue_array.mech_tilt_deg)
        return UeTxState((float(d["x"]), float(d["y"])), float(d.get("height", 1.5)), float(d["panel_az_deg"]),
                         float(panel_el), float(d.get("beam_az_deg", d["panel_az_deg"])),
                         float(d.get("beam_el_deg", panel_el)), d.get("power_dbm"), source="fixed")
    except KeyError as exc:
        raise InvalidConfig(f"simulation.fixed_ues[]: missing {exc}") from exc


def _resolve(cfg: RunConfig, key: str) -> Path | None:
    v = cfg.raw.get(key)
    if v is None:
        return None
    p = Path(v)
    return p if p.is_absolute() else cfg.base_dir / p


def build_scenario(cfg: RunConfig, *, seed: int | None = None, fc_ghz: float | None = None,
                   ue_model: str | None = None, policy: MitigationPolicy | None = None,
                   multiplexed_ues_per_site: int | None = None) -> Scenario:
    """Load every input named by ``cfg`` and assemble the immutable scenario."""
    raw = cfg.raw
    sim = cfg.simulation
    mask_path = _resolve(cfg, "fs_mask")
    mask = load_fs_mask(mask_path) if mask_path else default_fs_mask()
    records = read_fs_rows(_resolve(cfg, "fs_database"))
    origin = _check_keys(raw.get("origin"), {"lat", "lon"}, "origin")
    projection = LocalProjection(float(origin["lat"]), float(origin["lon"])) if origin else centroid_projection(records)
    stations = stations_from_records(records, projection, mask)

    crs = raw.get("buildings_crs", "geodetic")
    if crs not in ("geodetic", "local"):
        raise InvalidConfig("buildings_crs must be 'geodetic' or 'local'")
    b_path = _resolve(cfg, "buildings")
    buildings = load_buildings(b_path, projection if crs == "geodetic" else None) if b_path else []

    dep_raw = dict(_check_keys(raw.get("deployment"), {f.name for f in fields(DeploymentConfig)}, "deployment"))
    if multiplexed_ues_per_site is not None:
        dep_raw["multiplexed_ues_per_site"] = multiplexed_ues_per_site
    if "region" not in dep_raw:
        isd = float(dep_raw.get("isd_m", 200.0))
        xs = [s.rx_pos[0] for s in stations]
        ys = [s.rx_pos[1] for s in stations]
        x0, x1, y0, y1 = min(xs) - isd, max(xs) + isd, min(ys) - isd, max(ys) + isd
        dep_raw["region"] = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    if dep_raw.get("ue_count") is None and dep_raw.get("ue_density_per_km2") is None and sim.ue_model != "fixed":
        raise InvalidConfig("deployment: set ue_count or ue_density_per_km2")
    deployment = _build(DeploymentConfig, dep_raw, "deployment")

    channel = _build(ChannelParams, raw.get("channel"), "channel")
    if fc_ghz is not None:
        channel = replace(channel, fc_ghz=float(fc_ghz))
    gnb_array = _array(raw.get("gnb_array"), GNB_ARRAY, "gnb_array")
    ue_array = _array(raw.get("ue_array"), UE_ARRAY, "ue_array")
    if policy is None:
        policy = _build(MitigationPolicy, raw.get("mitigation"), "mitigation")
    model = ue_model or sim.ue_model
    gnbs = deploy_gnbs(deployment, buildings, gnb_array) if model != "fixed" else []
    fixed = [_fixed_ue(d, ue_array) for d in (sim.fixed_ues or [])]

    return Scenario(
        stations=stations, deployment=deployment, gnbs=gnbs, buildings=buildings, channel=channel,
        gnb_array=gnb_array, ue_array=ue_array, policy=policy, seed=int(sim.seed if seed is None else seed),
        ue_model=model, random_d0_m=float(sim.d0_m), fixed_ues=fixed, downlink=bool(sim.downlink),
        interference_cutoff_m=sim.interference_cutoff_m, projection=projection,
    )


def policy_from_cli(base: MitigationPolicy, name: str | None, psi: float | None) -> MitigationPolicy:
    """Policy override from ``--policy`` (``kind`` or ``kind:basis``) and ``--psi``."""
    kw = {}
    if name:
        kind, _, basis = name.partition(":")
        kw["kind"] = kind
        if basis:
            kw["basis"] = basis
    if psi is not None:
        kw["psi_deg"] = float(psi)
    return dataclasses.replace(base, **kw) if kw else base


def scenario_policy(cfg: RunConfig) -> MitigationPolicy:
    return _build(MitigationPolicy, cfg.raw.get("mitigation"), "mitigation")


__all__ = ["RunConfig", "SimulationSettings", "load_config", "build_scenario", "policy_from_cli",
           "scenario_policy"]
