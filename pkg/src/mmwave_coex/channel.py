"""3GPP UMi street-canyon path loss, LOS selection and log-normal shadowing."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .geom import blocked_mask

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
# 3GPP TR 38.901 Table 7.4.1-1, UMi street canyon.
UMI_LOS_CONST = 32.4
UMI_LOS_SLOPE_NEAR = 21.0
UMI_LOS_SLOPE_FAR = 40.0
UMI_LOS_BP_CORR = 9.5
UMI_NLOS_SLOPE = 35.3
UMI_NLOS_CONST = 22.4
UMI_NLOS_FREQ = 21.3
UMI_NLOS_HUT = 0.3
EFFECTIVE_ENV_HEIGHT = 1.0
# TR 38.901 Table 7.4.2-1 UMi LOS probability distances.
LOS_D1 = 18.0
LOS_D2 = 36.0
MIN_DISTANCE_M = 1.0

_clamp_lock = threading.Lock()
_clamp_count = 0


def clamped_link_count() -> int:
    """Links shorter than 1 m that were clamped since import (diagnostic)."""
    return _clamp_count


@dataclass(frozen=True)
class ChannelParams:
    fc_ghz: float = 73.5
    sigma_los_db: float = 4.0
    sigma_nlos_db: float = 7.82
    bandwidth_hz: float = 1e9
    noise_psd_dbm_hz: float = -174.0
    los_mode: str = "geometric"
    ue_noise_figure_db: float = 9.0

    def __post_init__(self):
        if not 0.5 <= self.fc_ghz <= 100:
            raise InvalidConfig(f"fc_ghz={self.fc_ghz} outside UMi validity [0.5, 100]")
        if self.sigma_los_db < 0 or self.sigma_nlos_db < 0:
            raise InvalidConfig("shadowing sigmas must be >= 0")
        if self.bandwidth_hz <= 0:
            raise InvalidConfig("bandwidth must be positive")
        if self.los_mode not in ("geometric", "statistical"):
            raise InvalidConfig(f"unknown los_mode {self.los_mode!r}")

    @property
    def noise_power_dbm(self) -> float:
        """Thermal noise N0*B in dBm, without receiver noise figure."""
        return self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)

    def sigma(self, blocked):
        return np.where(blocked, self.sigma_nlos_db, self.sigma_los_db)


@dataclass(frozen=True)
class LinkState:
    blocked: bool
    d_2d: float
    d_3d: float
    h_tx: float
    h_rx: float
    shadow_db: float = 0.0

    @classmethod
    def between(cls, p_tx, p_rx, blocked=False, shadow_db=0.0) -> "LinkState":
        d2 = math.hypot(p_rx[0] - p_tx[0], p_rx[1] - p_tx[1])
        return cls(bool(blocked), d2, math.hypot(d2, p_rx[2] - p_tx[2]), float(p_tx[2]), float(p_rx[2]), float(shadow_db))


def los_probability(d_2d):
    d = np.asarray(d_2d, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        near = np.minimum(LOS_D1 / d, 1.0)
    e = np.exp(-d / LOS_D2)
    out = np.where(d <= LOS_D1, 1.0, near * (1.0 - e) + e)
    return float(out) if np.ndim(out) == 0 else out


def _clamp(d_3d):
    global _clamp_count
    d = np.asarray(d_3d, dtype=float)
    short = d < MIN_DISTANCE_M
    if np.any(short):
        n = int(np.count_nonzero(short))
        with _clamp_lock:
            _clamp_count += n
        log.debug("clamped %d link(s) shorter than %.1f m", n, MIN_DISTANCE_M)
        d = np.maximum(d, MIN_DISTANCE_M)
    return d


def breakpoint_distance(fc_ghz, h_tx, h_rx):
    """d_BP = 4 h'_BS h'_UT f_c / c with 1 m effective environment height."""
    h1 = np.maximum(np.asarray(h_tx, dtype=float) - EFFECTIVE_ENV_HEIGHT, 0.0)
    h2 = np.maximum(np.asarray(h_rx, dtype=float) - EFFECTIVE_ENV_HEIGHT, 0.0)
    return 4.0 * h1 * h2 * fc_ghz * 1e9 / SPEED_OF_LIGHT


def _los(d, fc_ghz, h_tx, h_rx):
    d_bp = breakpoint_distance(fc_ghz, h_tx, h_rx)
    near = UMI_LOS_CONST + UMI_LOS_SLOPE_NEAR * np.log10(d) + 20.0 * math.log10(fc_ghz)
    dh = np.asarray(h_tx, dtype=float) - h_rx
    with np.errstate(divide="ignore"):
        far = (UMI_LOS_CONST + UMI_LOS_SLOPE_FAR * np.log10(d) + 20.0 * math.log10(fc_ghz)
               - UMI_LOS_BP_CORR * np.log10(d_bp ** 2 + dh ** 2))
    # Heights at or below the 1 m environment height have no breakpoint.
    return np.where((d <= d_bp) | (d_bp <= 0), near, far)


def _nlos(d, fc_ghz, h_ut, h_bs):
    nlos = (UMI_NLOS_SLOPE * np.log10(d) + UMI_NLOS_CONST + UMI_NLOS_FREQ * math.log10(fc_ghz)
            - UMI_NLOS_HUT * (np.asarray(h_ut, dtype=float) - 1.5))
    return np.maximum(_los(d, fc_ghz, h_bs, h_ut), nlos)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def path_loss_los(d_3d, fc_ghz, h_tx, h_rx):
    """UMi street-canyon LOS loss (dual slope around the breakpoint distance)."""
    return _scalar(_los(_clamp(d_3d), fc_ghz, h_tx, h_rx))


def path_loss_nlos(d_3d, fc_ghz, h_ut, h_bs=None):
    """NLOS UMi loss, floored by the LOS loss. ``h_bs`` defaults to ``h_ut``."""
    h_bs = h_ut if h_bs is None else h_bs
    return _scalar(_nlos(_clamp(d_3d), fc_ghz, h_ut, h_bs))


def path_loss_db(blocked, d_3d, fc_ghz, h_tx, h_rx):
    """LOS or NLOS loss per link, without shadowing. The lower endpoint is the UT."""
    h_tx = np.asarray(h_tx, dtype=float)
    h_rx = np.asarray(h_rx, dtype=float)
    d = _clamp(d_3d)
    los = _los(d, fc_ghz, h_tx, h_rx)
    nlos = _nlos(d, fc_ghz, np.minimum(h_tx, h_rx), np.maximum(h_tx, h_rx))
    return _scalar(np.where(blocked, nlos, los))


def total_path_loss(link: LinkState, params: ChannelParams) -> float:
    return path_loss_db(link.blocked, link.d_3d, params.fc_ghz, link.h_tx, link.h_rx) + link.shadow_db


def determine_los(p_tx, p_rx, buildings, params: ChannelParams, rng=None):
    """Blockage indicator(s) for one link or an (N, 3) batch of links.

    Geometric mode tests the building layout; statistical mode draws
    blockage with probability 1 - P_LOS(d_2d).
    """
    tx = np.atleast_2d(np.asarray(p_tx, dtype=float))
    rx = np.atleast_2d(np.asarray(p_rx, dtype=float))
    if params.los_mode == "geometric":
        out = blocked_mask(tx, rx, buildings)
    else:
        if rng is None:
            raise InvalidConfig("statistical LOS mode needs an RNG")
        d2d = np.hypot(*(rx[:, :2] - tx[:, :2]).T)
        out = rng.random(len(d2d)) >= los_probability(d2d)
    return bool(out[0]) if np.ndim(p_tx) == 1 else out


def sample_shadowing(rng, blocked, params: ChannelParams, size=None):
    """Zero-mean normal shadowing in dB with sigma chosen by blockage state."""
    sigma = params.sigma(blocked)
    if size is None:
        size = np.shape(sigma)
    z = rng.standard_normal(size)
    out = sigma * z
    return float(out) if np.ndim(out) == 0 else out
