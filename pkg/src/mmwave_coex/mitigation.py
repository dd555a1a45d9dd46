"""Passive mitigation: angular (sector/beam) exclusion, spatial exclusion and
binary UL power control.

Angles follow the usual convention: ``u`` is the sector or beam pointing
direction at the gNB, ``u_g->f`` points from the gNB to the FS receiver and
``u_f->ftx`` is the FS boresight. A sector/beam is switched off on the
location basis when ``angle(-u, u_g->f) <= psi``; the orientation basis
additionally requires ``angle(u, u_f->ftx) <= psi``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyNetworkWarning, InvalidConfig
from .geom import azimuth_difference, azimuth_of

log = logging.getLogger(__name__)

KINDS = ("none", "sector", "beam", "spatial", "power_control")
BASES = ("location", "orientation")


@dataclass(frozen=True)
class MitigationPolicy:
    """Mitigation settings.

    ``p_lo_eirp_dbm``/``p_up_eirp_dbm`` are UE boresight EIRPs for quiet and
    regular beams; ``None`` for ``p_up`` means the UE array's own maximum
    and ``None`` for ``p_lo`` means 10 dB below ``p_up``.
    """

    kind: str = "none"
    basis: str = "location"
    psi_deg: float = 0.0
    radius_m: float = 0.0
    p_lo_eirp_dbm: float | None = None
    p_up_eirp_dbm: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if self.basis not in BASES:
            raise InvalidConfig(f"unknown policy basis {self.basis!r}")
        if not 0.0 <= self.psi_deg <= 180.0:
            raise InvalidConfig(f"psi_deg={self.psi_deg} outside [0, 180]")
        if self.radius_m < 0:
            raise InvalidConfig("radius_m must be >= 0")
        if self.kind == "spatial" and self.radius_m <= 0:
            log.warning("spatial policy with radius 0 excludes nothing")
        lo, up = self.p_lo_eirp_dbm, self.p_up_eirp_dbm
        if lo is not None and up is not None and lo > up:
            raise InvalidConfig("p_lo_eirp_dbm must not exceed p_up_eirp_dbm")

    @property
    def needs_association(self) -> bool:
        return self.kind != "none"

    def power_levels(self, ue_max_eirp_dbm: float) -> tuple[float, float]:
        up = ue_max_eirp_dbm if self.p_up_eirp_dbm is None else self.p_up_eirp_dbm
        lo = up - 10.0 if self.p_lo_eirp_dbm is None else self.p_lo_eirp_dbm
        if lo > up:
            raise InvalidConfig("resolved P_lo exceeds P_up")
        return lo, up


def _dir_az(u):
    """Accept a 2D unit vector (..., 2) and return its azimuth in degrees."""
    return azimuth_of(np.asarray(u, dtype=float))


def _gnb_to_fs_az(gnb_pos, fs):
    d = np.asarray(fs.rx_pos, dtype=float) - np.asarray(gnb_pos, dtype=float)[..., :2]
    return azimuth_of(d)


def angular_exclusion(dir_az_deg, gnb_pos, fs, psi_deg: float, basis: str = "location"):
    """Exclusion flags for pointing azimuths at gNBs against one FS (vectorized).

    ``psi_deg == 0`` never excludes, so a zero threshold is the null policy.
    """
    if psi_deg <= 0:
        return np.zeros(np.broadcast_shapes(np.shape(dir_az_deg), np.shape(gnb_pos)[:-1]), dtype=bool)
    dir_az = np.asarray(dir_az_deg, dtype=float)
    out = azimuth_difference(dir_az + 180.0, _gnb_to_fs_az(gnb_pos, fs)) <= psi_deg
    if basis == "orientation":
        out = out & (azimuth_difference(dir_az, fs.boresight_az_deg) <= psi_deg)
    return np.asarray(out)


def _criterion(u, gnb_pos, fs, psi, basis) -> bool:
    return bool(angular_exclusion(_dir_az(u), gnb_pos, fs, psi, basis))


def sector_excluded(sector_u, gnb_pos, fs, policy: MitigationPolicy) -> bool:
    """Sector switch-off test for a sector boresight unit vector."""
    return _criterion(sector_u, gnb_pos, fs, policy.psi_deg, policy.basis)


def beam_excluded(beam_u, gnb_pos, fs, policy: MitigationPolicy) -> bool:
    """Beam switch-off test; only the azimuth of the beam direction is used."""
    return _criterion(beam_u, gnb_pos, fs, policy.psi_deg, policy.basis)


def spatially_excluded(gnb_pos, fs, radius_m: float) -> bool:
    d = np.hypot(*(np.asarray(gnb_pos, dtype=float)[:2] - np.asarray(fs.rx_pos, dtype=float)))
    return bool(d < radius_m)


def beam_is_quiet(beam_u, gnb_pos, stations, psi_deg: float) -> bool:
    return any(_criterion(beam_u, gnb_pos, fs, psi_deg, "location") for fs in stations)


def ul_power_for_beam(beam_u, gnb_pos, stations, policy: MitigationPolicy, ue_max_eirp_dbm: float) -> float:
    """UE EIRP (dBm) for a UE served on ``beam_u``: P_lo if the beam faces any FS."""
    lo, up = policy.power_levels(ue_max_eirp_dbm)
    return lo if beam_is_quiet(beam_u, gnb_pos, stations, policy.psi_deg) else up


@dataclass(frozen=True)
class ExclusionTable:
    """Static per-scenario decisions, indexed (gnb, sector, az_beam)."""

    site_off: np.ndarray
    sector_off: np.ndarray
    beam_off: np.ndarray
    beam_quiet: np.ndarray

    @property
    def available(self) -> np.ndarray:
        return ~(self.beam_off | self.sector_off[:, :, None] | self.site_off[:, None, None])

    @property
    def n_excluded_beams(self) -> int:
        return int(np.count_nonzero(~self.available))


def apply_policy(gnbs, stations, policy: MitigationPolicy, az_steer_deg) -> ExclusionTable:
    """Precompute which sites, sectors and azimuth beams are off or quiet.

    Decisions are any-victim: a sector/beam is off if the test holds for at
    least one FS.
    """
    az_steer = np.asarray(az_steer_deg, dtype=float)
    n_g, n_a = len(gnbs), len(az_steer)
    site_off = np.zeros(n_g, dtype=bool)
    sector_off = np.zeros((n_g, 4), dtype=bool)
    beam_off = np.zeros((n_g, 4, n_a), dtype=bool)
    beam_quiet = np.zeros((n_g, 4, n_a), dtype=bool)
    if n_g == 0 or policy.kind == "none":
        return ExclusionTable(site_off, sector_off, beam_off, beam_quiet)
    pos = np.array([g.pos for g in gnbs], dtype=float)
    sector_az = np.array([g.sector_boresights_deg for g in gnbs])
    beam_az = sector_az[:, :, None] + az_steer[None, None, :]
    for fs in stations:
        if policy.kind == "spatial":
            site_off |= np.hypot(*(pos - np.asarray(fs.rx_pos)).T) < policy.radius_m
        elif policy.kind == "sector":
            sector_off |= angular_exclusion(sector_az, pos[:, None, :], fs, policy.psi_deg, policy.basis)
        elif policy.kind == "beam":
            beam_off |= angular_exclusion(beam_az, pos[:, None, None, :], fs, policy.psi_deg, policy.basis)
        elif policy.kind == "power_control":
            beam_quiet |= angular_exclusion(beam_az, pos[:, None, None, :], fs, policy.psi_deg, "location")
    table = ExclusionTable(site_off, sector_off, beam_off, beam_quiet)
    if not table.available.any():
        warnings.warn("mitigation policy switched off every beam in the network", EmptyNetworkWarning, stacklevel=2)
    return table
