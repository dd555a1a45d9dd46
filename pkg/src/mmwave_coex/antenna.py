"""Antenna patterns: parabolic element/beam attenuation, beam codebooks,
the fixed-station regulatory mask and directional EIRP/gain evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry, InvalidPattern
from .geom import azimuth_difference, azimuth_of, fs_elevation_off_axis

# Beam 3 dB width of an N-element uniform array, degrees.
BEAMWIDTH_CONSTANT_DEG = 102.0
# Codebook steering span around boresight, degrees.
STEERING_HALF_SPAN_DEG = 51.0


def parabolic_attenuation(off_axis_deg, bw_deg):
    """12 (theta / bw)^2 in dB. Uncapped; callers apply front-to-back limits."""
    if np.any(np.asarray(bw_deg) <= 0):
        raise InvalidPattern(f"beamwidth must be positive, got {bw_deg}")
    out = 12.0 * (np.asarray(off_axis_deg, dtype=float) / bw_deg) ** 2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ArrayConfig:
    """Planar array of ``n_h x n_v`` (x2 if dual polarized) elements.

    ``eirp_calibration_db`` is added to every radiated power so the boresight
    EIRP can be pinned to a target (see :meth:`with_max_eirp`).
    """

    n_h: int
    n_v: int
    elem_power_dbm: float
    mech_tilt_deg: float
    dual_polarized: bool = True
    elem_gain_dbi: float = 5.0
    elem_bw_az: float = 65.0
    elem_bw_el: float = 65.0
    ftbr_db: float = 30.0
    eirp_calibration_db: float = 0.0

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise InvalidPattern("array dimensions must be >= 1")
        for bw in (self.elem_bw_az, self.elem_bw_el):
            if not 0 < bw <= 180:
                raise InvalidPattern(f"element beamwidth {bw} outside (0, 180]")
        if self.ftbr_db <= 0:
            raise InvalidPattern("front-to-back ratio must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_h * self.n_v * (2 if self.dual_polarized else 1)

    @property
    def array_gain_db(self) -> float:
        return 10.0 * math.log10(self.n_elements)

    @property
    def beam_bw_az(self) -> float:
        return BEAMWIDTH_CONSTANT_DEG / self.n_h

    @property
    def beam_bw_el(self) -> float:
        return BEAMWIDTH_CONSTANT_DEG / self.n_v

    @property
    def max_eirp_dbm(self) -> float:
        return self.elem_power_dbm + self.array_gain_db + self.elem_gain_dbi + self.eirp_calibration_db

    def with_max_eirp(self, eirp_dbm: float) -> "ArrayConfig":
        uncal = self.max_eirp_dbm - self.eirp_calibration_db
        return replace(self, eirp_calibration_db=eirp_dbm - uncal)

    def element_power_for_eirp(self, eirp_dbm: float) -> float:
        """Per-element power that yields ``eirp_dbm`` at beam/panel boresight."""
        return self.elem_power_dbm + (eirp_dbm - self.max_eirp_dbm)


GNB_ARRAY = ArrayConfig(n_h=16, n_v=8, elem_power_dbm=7.0, mech_tilt_deg=-6.0)
UE_ARRAY = ArrayConfig(n_h=4, n_v=4, elem_power_dbm=1.0, mech_tilt_deg=6.0)


@dataclass(frozen=True)
class Beam:
    index: int
    az_idx: int
    el_idx: int
    az_deg: float
    el_deg: float
    bw_az: float
    bw_el: float


@dataclass(frozen=True)
class Codebook:
    """Product grid of azimuth x elevation steering directions.

    Steering angles are relative to the panel boresight; beam ``index`` is
    ``az_idx * len(el_steer) + el_idx``.
    """

    az_steer: np.ndarray
    el_steer: np.ndarray
    bw_az: float
    bw_el: float

    def __len__(self):
        return len(self.az_steer) * len(self.el_steer)

    def split(self, index: int) -> tuple[int, int]:
        return divmod(int(index), len(self.el_steer))

    def beam(self, index: int) -> Beam:
        if not 0 <= index < len(self):
            raise IndexError(f"beam index {index} outside codebook of {len(self)}")
        ia, ie = self.split(index)
        return Beam(int(index), ia, ie, float(self.az_steer[ia]), float(self.el_steer[ie]), self.bw_az, self.bw_el)

    @property
    def beams(self) -> list[Beam]:
        return [self.beam(i) for i in range(len(self))]


def _steering_grid(n_beams: int) -> np.ndarray:
    step = 2 * STEERING_HALF_SPAN_DEG / n_beams
    return -STEERING_HALF_SPAN_DEG + step * (np.arange(n_beams) + 0.5)


def make_codebook(cfg: ArrayConfig) -> Codebook:
    az = _steering_grid(2 * cfg.n_h)
    el = _steering_grid(2 * cfg.n_v)
    az.setflags(write=False)
    el.setflags(write=False)
    return Codebook(az, el, cfg.beam_bw_az, cfg.beam_bw_el)


def array_gain(cfg: ArrayConfig, theta_beam, phi_beam, theta_str, phi_str):
    """Directional array gain (dBi) from beam and panel off-axis angles."""
    beam_att = parabolic_attenuation(theta_beam, cfg.beam_bw_az) + parabolic_attenuation(phi_beam, cfg.beam_bw_el)
    elem_att = np.minimum(
        parabolic_attenuation(theta_str, cfg.elem_bw_az) + parabolic_attenuation(phi_str, cfg.elem_bw_el),
        cfg.ftbr_db,
    )
    out = cfg.array_gain_db + cfg.elem_gain_dbi - beam_att - elem_att
    return float(out) if np.ndim(out) == 0 else out


def _direction(tx_pos, target):
    tx = np.asarray(tx_pos, dtype=float)
    tg = np.asarray(target, dtype=float)
    d = tg[..., :2] - tx[..., :2]
    d2d = np.hypot(d[..., 0], d[..., 1])
    if np.any(d2d == 0):
        raise DegenerateGeometry("transmitter and target coincide in the ground plane")
    az = azimuth_of(d)
    el = np.degrees(np.arctan((tg[..., 2] - tx[..., 2]) / d2d))
    return az, el


def radiated_power_toward(cfg: ArrayConfig, panel, beam, tx_pos, target, power_override_dbm=None):
    """EIRP (dBm) from a transmitter toward ``target``.

    ``panel`` and ``beam`` are ``(azimuth_deg, elevation_deg)`` pointing
    directions in absolute terms (mechanical tilt already included).
    ``tx_pos``/``target`` are (x, y, z); arrays of shape (..., 3) broadcast.
    ``power_override_dbm`` replaces the per-element power.
    """
    az, el = _direction(tx_pos, target)
    gain = array_gain(
        cfg,
        azimuth_difference(az, beam[0]),
        el - beam[1],
        azimuth_difference(az, panel[0]),
        el - panel[1],
    )
    power = cfg.elem_power_dbm if power_override_dbm is None else power_override_dbm
    return power + gain + cfg.eirp_calibration_db


@dataclass(frozen=True)
class FsAntennaMask:
    """Minimum radiation suppression (dB) versus off-axis angle."""

    angles_deg: np.ndarray
    suppression_db: np.ndarray
    ftbr_db: float = 55.0

    def __post_init__(self):
        a = np.asarray(self.angles_deg, dtype=float)
        s = np.asarray(self.suppression_db, dtype=float)
        if a.size == 0 or a.shape != s.shape:
            raise InvalidPattern("mask needs matching, non-empty angle/suppression lists")
        if np.any(np.diff(a) <= 0):
            raise InvalidPattern("mask angles must be strictly increasing")
        if np.any(np.diff(s) < 0):
            raise InvalidPattern("mask suppression must be non-decreasing")
        object.__setattr__(self, "angles_deg", a)
        object.__setattr__(self, "suppression_db", np.minimum(s, self.ftbr_db))


def load_fs_mask(path, ftbr_db: float = 55.0) -> FsAntennaMask:
    """Read a ``off_axis_deg,suppression_db`` CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"off_axis_deg", "suppression_db"}:
            raise InvalidPattern(f"{path}: expected header off_axis_deg,suppression_db")
        rows = [(float(r["off_axis_deg"]), float(r["suppression_db"])) for r in reader]
    if not rows:
        raise InvalidPattern(f"{path}: empty mask")
    a, s = zip(*rows)
    return FsAntennaMask(np.array(a), np.array(s), ftbr_db)


def default_fs_mask(ftbr_db: float = 55.0) -> FsAntennaMask:
    """Part 101 category-A co-polar mask for 71-76 / 81-86 GHz antennas."""
    ref = resources.files("mmwave_coex") / "data" / "fcc_part101_70_80ghz_mask.csv"
    with resources.as_file(ref) as p:
        return load_fs_mask(Path(p), ftbr_db)


def fs_mask_attenuation(mask: FsAntennaMask, off_axis_deg):
    """Linear interpolation of the mask, clamped to [0, ftbr]."""
    if mask is None or len(mask.angles_deg) == 0:
        raise InvalidPattern("empty mask")
    x = np.abs(np.asarray(off_axis_deg, dtype=float))
    out = np.clip(np.interp(x, mask.angles_deg, mask.suppression_db), 0.0, mask.ftbr_db)
    return float(out) if np.ndim(out) == 0 else out


def fs_gain_toward(fs, src):
    """FS receive gain (dBi) toward a source at (x, y, z); vectorized over sources."""
    src = np.asarray(src, dtype=float)
    rx = np.asarray(fs.rx_pos, dtype=float)
    d = src[..., :2] - rx
    d2d = np.hypot(d[..., 0], d[..., 1])
    if np.any(d2d == 0):
        raise DegenerateGeometry(f"source coincides with fixed station {fs.id}")
    theta = azimuth_difference(azimuth_of(d), fs.boresight_az_deg)
    phi = fs_elevation_off_axis(fs.rx_height, src[..., 2], d2d, fs.tilt_deg)
    att = np.minimum(
        fs_mask_attenuation(fs.mask, theta) + fs_mask_attenuation(fs.mask, phi),
        fs.mask.ftbr_db,
    )
    out = fs.max_gain_dbi - att
    return float(out) if np.ndim(out) == 0 else out
