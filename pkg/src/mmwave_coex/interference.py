"""UL (and optional DL) interference into fixed stations and the Monte Carlo driver."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, is_dataclass

import numpy as np

from . import channel as chan
from .antenna import ArrayConfig, fs_gain_toward, make_codebook, radiated_power_toward
from .assoc import Association, associate, beam_usage_histograms
from .channel import ChannelParams, los_probability, path_loss_db
from .errors import InvalidConfig
from .geom import blocked_mask
from .mitigation import ExclusionTable, apply_policy
from .rng import substream
from .scenario import Scenario, drop_ue_arrays

log = logging.getLogger(__name__)

THREADS_ENV = "MMWAVE_COEX_THREADS"


@dataclass(frozen=True)
class UeTxState:
    """Transmit state of one active UE.

    Pointing directions are absolute (azimuth ccw from +x, elevation above
    the horizon) with the mechanical tilt already included. ``power_dbm`` is
    the per-element power; ``None`` uses the array default.
    """

    pos: tuple[float, float]
    height: float
    panel_az_deg: float
    panel_el_deg: float
    beam_az_deg: float
    beam_el_deg: float
    power_dbm: float | None = None
    source: str = "associated"

    @property
    def point(self) -> np.ndarray:
        return np.array([self.pos[0], self.pos[1], self.height])


@dataclass
class UeBatch:
    """Column form of a list of :class:`UeTxState` used inside trials."""

    xyz: np.ndarray
    panel_az: np.ndarray
    panel_el: np.ndarray
    beam_az: np.ndarray
    beam_el: np.ndarray
    power_dbm: np.ndarray

    def __len__(self):
        return len(self.xyz)

    @classmethod
    def from_states(cls, states, ue_array: ArrayConfig) -> "UeBatch":
        if not states:
            z = np.empty(0)
            return cls(np.empty((0, 3)), z, z, z, z, z)
        return cls(
            np.array([s.point for s in states]),
            np.array([s.panel_az_deg for s in states]), np.array([s.panel_el_deg for s in states]),
            np.array([s.beam_az_deg for s in states]), np.array([s.beam_el_deg for s in states]),
            np.array([ue_array.elem_power_dbm if s.power_dbm is None else s.power_dbm for s in states]),
        )


def noise_floor_dbm(fs, channel: ChannelParams) -> float:
    """FS receiver noise: N0*B plus the FS noise figure."""
    return channel.noise_power_dbm + fs.noise_figure_db


def _interference_dbm(batch: UeBatch, fs, ue_array: ArrayConfig, channel: ChannelParams, blocked, shadow_db):
    if len(batch) == 0:
        return np.empty(0)
    target = fs.point
    eirp = radiated_power_toward(ue_array, (batch.panel_az, batch.panel_el), (batch.beam_az, batch.beam_el),
                                 batch.xyz, target, power_override_dbm=batch.power_dbm)
    g = fs_gain_toward(fs, batch.xyz)
    d3 = np.linalg.norm(batch.xyz - target, axis=1)
    pl = path_loss_db(blocked, d3, channel.fc_ghz, batch.xyz[:, 2], target[2])
    return np.atleast_1d(eirp + g - pl - shadow_db)


def ue_interference_to_fs(ue: UeTxState, fs, ue_array: ArrayConfig, channel: ChannelParams,
                          blocked: bool = False, shadow_db: float = 0.0) -> float:
    """Received interference (dBm) at ``fs`` from one UE: EIRP + FS gain - path loss."""
    batch = UeBatch.from_states([ue], ue_array)
    return float(_interference_dbm(batch, fs, ue_array, channel, np.array([blocked]), np.array([shadow_db]))[0])


def inr_from_interference(i_dbm, fs, channel: ChannelParams) -> float:
    """Aggregate INR (dB) from per-interferer powers; no interferers gives -inf."""
    i = np.asarray(i_dbm, dtype=float).ravel()
    if i.size == 0:
        return -math.inf
    total = float(np.sum(np.power(10.0, i / 10.0)))
    if total == 0.0:
        return -math.inf
    return 10.0 * math.log10(total) - noise_floor_dbm(fs, channel)


def aggregate_inr(fs, active_ues, ue_array: ArrayConfig, channel: ChannelParams,
                  blocked=None, shadow_db=None) -> float:
    """INR at ``fs`` from a list of :class:`UeTxState` with given link states."""
    batch = UeBatch.from_states(list(active_ues), ue_array)
    n = len(batch)
    blocked = np.zeros(n, bool) if blocked is None else np.asarray(blocked, bool)
    shadow_db = np.zeros(n) if shadow_db is None else np.asarray(shadow_db, float)
    return inr_from_interference(_interference_dbm(batch, fs, ue_array, channel, blocked, shadow_db), fs, channel)


def random_ue_direction(rng: np.random.Generator, h_g: float, h_ue: float, isd: float, d0: float = 10.0,
                        size=None):
    """Random-model pointing: azimuth ~ U(0, 360), elevation toward a gNB at d ~ U(d0, isd/2)."""
    if not isd / 2 > d0 or d0 <= 0:
        raise InvalidConfig(f"random UE model needs 0 < d0 < isd/2 (d0={d0}, isd={isd})")
    az = rng.uniform(0.0, 360.0, size=size)
    d = rng.uniform(d0, isd / 2, size=size)
    el = np.degrees(np.arctan((h_g - h_ue) / d))
    return az, el


def dl_gnb_interference_to_fs(gnb_xyz, sector_az, beam_az, beam_el, fs, gnb_array: ArrayConfig,
                              channel: ChannelParams, blocked=False, shadow_db=0.0):
    """Interference (dBm) at ``fs`` from gNB beams; vectorized over beams.

    ``beam_az``/``beam_el`` are absolute, with the gNB tilt included.
    """
    gnb_xyz = np.asarray(gnb_xyz, dtype=float)
    target = fs.point
    eirp = radiated_power_toward(gnb_array, (sector_az, gnb_array.mech_tilt_deg), (beam_az, beam_el), gnb_xyz, target)
    g = fs_gain_toward(fs, gnb_xyz)
    d3 = np.linalg.norm(gnb_xyz - target, axis=-1)
    pl = path_loss_db(blocked, d3, channel.fc_ghz, gnb_xyz[..., 2], target[2])
    out = eirp + g - pl - shadow_db
    return float(out) if np.ndim(out) == 0 else out


# --- Monte Carlo ------------------------------------------------------------


@dataclass
class InrSampleSet:
    """INR samples (dB) of one FS, one per trial; ``-inf`` marks a censored trial."""

    fs_id: str
    samples: np.ndarray
    seed: int = 0
    config_hash: str = ""

    @property
    def finite(self) -> np.ndarray:
        return self.samples[np.isfinite(self.samples)]

    @property
    def censored(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.samples)))


@dataclass
class TrialResult:
    trial: int
    inr: np.ndarray
    dl_inr: np.ndarray | None
    snr: np.ndarray
    beam_usage: dict
    n_unserved: int
    association: Association | None = None
    ue_pos: np.ndarray | None = None


@dataclass
class SimulationResult:
    inr: dict[str, InrSampleSet]
    dl_inr: dict[str, InrSampleSet] | None
    snr_db: np.ndarray
    snr_trial: np.ndarray
    beam_usage: dict[str, np.ndarray]
    n_unserved: int
    seed: int
    trials: int
    config_hash: str
    exclusion: ExclusionTable | None = None
    associations: list = field(default_factory=list)
    clamped_links: int = 0

    def p95(self, fs_id: str | None = None) -> float:
        from .report import percentile

        ids = [fs_id] if fs_id is not None else list(self.inr)
        return max(percentile(self.inr[i].finite, 95) if len(self.inr[i].finite) else -math.inf for i in ids)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if is_dataclass(o):
        return {k: _jsonable(v) for k, v in vars(o).items()}
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    return o


def scenario_hash(scenario: Scenario) -> str:
    """Stable digest of everything that determines the simulated numbers."""
    doc = _jsonable(scenario)
    blob = json.dumps(doc, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _link_states(rng_los, rng_shadow, tx, rx, buildings, params: ChannelParams):
    """Blockage and shadowing for a grid of links. Draws are made for every
    link regardless of mode so that streams stay aligned across settings."""
    shape = tx.shape[:-1]
    u = rng_los.random(shape)
    z = rng_shadow.standard_normal(shape)
    if params.los_mode == "geometric":
        blocked = blocked_mask(tx.reshape(-1, 3), rx.reshape(-1, 3), buildings).reshape(shape) if buildings \
            else np.zeros(shape, dtype=bool)
    else:
        blocked = u >= los_probability(np.hypot(rx[..., 0] - tx[..., 0], rx[..., 1] - tx[..., 1]))
    return blocked, params.sigma(blocked) * z


def _select_active(assoc_gnb, n_gnb: int, k: int, keys):
    """Per site, the ``k`` associated UEs with the smallest activity keys."""
    active = np.zeros(len(assoc_gnb), dtype=bool)
    order = np.lexsort((keys, assoc_gnb))
    g_sorted = assoc_gnb[order]
    starts = np.searchsorted(g_sorted, np.arange(n_gnb))
    rank = np.arange(len(order)) - starts[np.clip(g_sorted, 0, None)]
    take = (g_sorted >= 0) & (rank < k)
    active[order[take]] = True
    return active


class _Runner:
    def __init__(self, scenario: Scenario, keep_association: bool):
        self.sc = scenario
        self.keep = keep_association
        self.ue_arr = scenario.ue_array
        self.gnb_arr = scenario.gnb_array
        self.gnbs = list(scenario.gnbs)
        for g in self.gnbs:
            if g.array != self.gnb_arr:
                raise InvalidConfig("all gNB sites must share the scenario gNB array")
        self.gcb = make_codebook(self.gnb_arr)
        self.ucb = make_codebook(self.ue_arr)
        self.excl = apply_policy(self.gnbs, scenario.stations, scenario.policy, self.gcb.az_steer)
        self.available = self.excl.available
        if scenario.policy.kind == "power_control":
            lo, up = scenario.policy.power_levels(self.ue_arr.max_eirp_dbm)
            self.p_lo = self.ue_arr.element_power_for_eirp(lo)
            self.p_up = self.ue_arr.element_power_for_eirp(up)
        self.gxyz = np.array([g.point for g in self.gnbs]).reshape(-1, 3)
        self.fxyz = np.array([f.point for f in scenario.stations]).reshape(-1, 3)
        if scenario.ue_model == "random":
            random_ue_direction(np.random.default_rng(0), scenario.deployment.gnb_height_m,
                                scenario.deployment.ue_height_m, scenario.deployment.isd_m, scenario.random_d0_m)
        if scenario.ue_model == "fixed":
            self.fixed = UeBatch.from_states(list(scenario.fixed_ues), self.ue_arr)

    def _stream(self, trial, purpose):
        return substream(self.sc.seed, trial, purpose)

    def _fs_inr(self, trial, batch: UeBatch, ue_ids, n_pop: int):
        """INR per FS for the active UEs; link draws are indexed by UE id."""
        sc = self.sc
        n_f = len(sc.stations)
        out = np.full(n_f, -np.inf)
        if len(batch) == 0 or n_f == 0:
            return out
        tx = np.broadcast_to(batch.xyz[:, None, :], (len(batch), n_f, 3))
        rx = np.broadcast_to(self.fxyz[None, :, :], (len(batch), n_f, 3))
        # Draw for the full UE population so that the draws of UE i do not
        # depend on which other UEs happen to be active.
        u = self._stream(trial, "los_fs").random((n_pop, n_f))[ue_ids]
        z = self._stream(trial, "shadow_fs").standard_normal((n_pop, n_f))[ue_ids]
        if sc.channel.los_mode == "geometric":
            blocked = (blocked_mask(tx.reshape(-1, 3), rx.reshape(-1, 3), sc.buildings).reshape(len(batch), n_f)
                       if sc.buildings else np.zeros((len(batch), n_f), dtype=bool))
        else:
            blocked = u >= los_probability(np.hypot(rx[..., 0] - tx[..., 0], rx[..., 1] - tx[..., 1]))
        shadow = sc.channel.sigma(blocked) * z
        cutoff = sc.interference_cutoff_m
        for j, fs in enumerate(sc.stations):
            sel = slice(None)
            if cutoff is not None:
                sel = np.hypot(*(batch.xyz[:, :2] - self.fxyz[j, :2]).T) <= cutoff
            sub = UeBatch(batch.xyz[sel], batch.panel_az[sel], batch.panel_el[sel], batch.beam_az[sel],
                          batch.beam_el[sel], batch.power_dbm[sel])
            i = _interference_dbm(sub, fs, self.ue_arr, sc.channel, blocked[sel, j], shadow[sel, j])
            out[j] = inr_from_interference(i, fs, sc.channel)
        return out

    def _dl_inr(self, trial, assoc: Association, active):
        sc = self.sc
        n_f = len(sc.stations)
        n_g = len(self.gnbs)
        out = np.full(n_f, -np.inf)
        tx = np.broadcast_to(self.gxyz[:, None, :], (n_g, n_f, 3))
        rx = np.broadcast_to(self.fxyz[None, :, :], (n_g, n_f, 3))
        blocked, shadow = _link_states(self._stream(trial, "los_dl"), self._stream(trial, "shadow_dl"),
                                       tx, rx, sc.buildings, sc.channel)
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            return out
        g = assoc.gnb[idx]
        sec_az = np.array([self.gnbs[k].sector_boresights_deg[s] for k, s in zip(g, assoc.sector[idx])])
        b_az = sec_az + self.gcb.az_steer[assoc.gnb_az[idx]]
        b_el = self.gnb_arr.mech_tilt_deg + self.gcb.el_steer[assoc.gnb_el[idx]]
        for j, fs in enumerate(sc.stations):
            i = dl_gnb_interference_to_fs(self.gxyz[g], sec_az, b_az, b_el, fs, self.gnb_arr, sc.channel,
                                          blocked[g, j], shadow[g, j])
            out[j] = inr_from_interference(np.atleast_1d(i), fs, sc.channel)
        return out

    def trial(self, t: int) -> TrialResult:
        sc = self.sc
        dep = sc.deployment
        empty_usage = {}
        if sc.ue_model == "fixed":
            ids = np.arange(len(self.fixed))
            inr = self._fs_inr(t, self.fixed, ids, len(ids))
            return TrialResult(t, inr, None, np.empty(0), empty_usage, 0)

        pos, panel = drop_ue_arrays(dep, sc.buildings, self._stream(t, "drop"))
        n = len(pos)
        keys = self._stream(t, "activity").random(n)
        k = dep.ues_per_site

        if sc.ue_model == "random":
            n_active = min(n, k * len(self.gnbs))
            active_ids = np.sort(np.argsort(keys, kind="stable")[:n_active])
            az, el = random_ue_direction(self._stream(t, "orient"), dep.gnb_height_m, dep.ue_height_m,
                                         dep.isd_m, sc.random_d0_m, size=n)
            az, el = az[active_ids], el[active_ids]
            xyz = np.column_stack([pos[active_ids], np.full(len(active_ids), dep.ue_height_m)])
            batch = UeBatch(xyz, az, el, az, el, np.full(len(active_ids), self.ue_arr.elem_power_dbm))
            inr = self._fs_inr(t, batch, active_ids, n)
            return TrialResult(t, inr, None, np.empty(0), empty_usage, 0)

        # Associated model: frozen gNB-UE link states for the beam sweep.
        uxyz = np.column_stack([pos, np.full(n, dep.ue_height_m)])
        tx = np.broadcast_to(self.gxyz[:, None, :], (len(self.gnbs), n, 3))
        rx = np.broadcast_to(uxyz[None, :, :], (len(self.gnbs), n, 3))
        blocked, shadow = _link_states(self._stream(t, "los_assoc"), self._stream(t, "shadow_assoc"),
                                       tx, rx, sc.buildings, sc.channel)
        assoc = associate(self.gnbs, pos, panel, dep.ue_height_m, self.ue_arr, sc.channel, blocked, shadow,
                          self.available)
        active = _select_active(assoc.gnb, len(self.gnbs), k, keys)
        ids = np.flatnonzero(active)
        p_az = panel[ids] + 180.0 * assoc.ue_panel[ids]
        tilt = self.ue_arr.mech_tilt_deg
        power = np.full(len(ids), self.ue_arr.elem_power_dbm)
        if sc.policy.kind == "power_control":
            quiet = self.excl.beam_quiet[assoc.gnb[ids], assoc.sector[ids], assoc.gnb_az[ids]]
            power = np.where(quiet, self.p_lo, self.p_up)
        batch = UeBatch(uxyz[ids], p_az, np.full(len(ids), tilt), p_az + self.ucb.az_steer[assoc.ue_az[ids]],
                        tilt + self.ucb.el_steer[assoc.ue_el[ids]], power)
        inr = self._fs_inr(t, batch, ids, n)
        dl = self._dl_inr(t, assoc, active) if sc.downlink else None
        usage = beam_usage_histograms(assoc, self.gnb_arr, self.ue_arr)
        return TrialResult(t, inr, dl, assoc.snr_db[assoc.served], usage, int(np.count_nonzero(~assoc.served)),
                           assoc if self.keep else None, pos if self.keep else None)


def worker_count(default: int | None = None) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise InvalidConfig(f"{THREADS_ENV}={raw!r} is not an integer") from exc
        return max(1, n)
    return default or 1


def run_monte_carlo(scenario: Scenario, trials: int, threads: int | None = None,
                    keep_association: bool = False) -> SimulationResult:
    """Run ``trials`` independent spatial realizations of ``scenario``.

    Each trial draws from its own substreams, so results do not depend on
    the number of worker threads or on scheduling order.
    """
    if trials < 1:
        raise InvalidConfig("trials must be >= 1")
    runner = _Runner(scenario, keep_association)
    clamps0 = chan.clamped_link_count()
    n_threads = threads if threads is not None else worker_count()
    if n_threads > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            results = list(ex.map(runner.trial, range(trials)))
    else:
        results = [runner.trial(t) for t in range(trials)]

    chash = scenario_hash(scenario)
    ids = [fs.id for fs in scenario.stations]
    inr_mat = np.array([r.inr for r in results]).reshape(trials, len(ids))
    inr = {fid: InrSampleSet(fid, inr_mat[:, j].copy(), scenario.seed, chash) for j, fid in enumerate(ids)}
    dl = None
    if scenario.downlink and scenario.ue_model == "associated":
        dl_mat = np.array([r.dl_inr for r in results]).reshape(trials, len(ids))
        dl = {fid: InrSampleSet(fid, dl_mat[:, j].copy(), scenario.seed, chash) for j, fid in enumerate(ids)}
    usage: dict[str, np.ndarray] = {}
    for r in results:
        for key, cnt in r.beam_usage.items():
            usage[key] = usage.get(key, 0) + cnt
    snr = np.concatenate([r.snr for r in results]) if results else np.empty(0)
    snr_trial = np.concatenate([np.full(len(r.snr), r.trial) for r in results]) if results else np.empty(0, int)
    return SimulationResult(
        inr=inr, dl_inr=dl, snr_db=snr, snr_trial=snr_trial.astype(int), beam_usage=usage,
        n_unserved=sum(r.n_unserved for r in results), seed=scenario.seed, trials=trials, config_hash=chash,
        exclusion=runner.excl,
        associations=[(r.trial, r.ue_pos, r.association) for r in results] if keep_association else [],
        clamped_links=chan.clamped_link_count() - clamps0,
    )
