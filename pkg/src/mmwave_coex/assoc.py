"""Max-RSRP user and beam association with DL SNR reporting.

The sweep is exhaustive in effect but evaluated in factorized form: the
gNB term of the received power depends on (gnb, sector, az beam, el beam)
only through separable attenuations, and the UE term does not depend on
the gNB sector, so each beam dimension can be minimized independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .antenna import ArrayConfig, make_codebook, parabolic_attenuation, radiated_power_toward
from .channel import ChannelParams, path_loss_db

TIE_TOL_DB = 1e-9
CHUNK = 256


@dataclass(frozen=True)
class ServingLink:
    ue_id: int
    gnb_id: int
    sector: int
    gnb_beam: int
    ue_panel: int
    ue_beam: int
    rsrp_dbm: float
    dl_snr_db: float


@dataclass
class Association:
    """Per-UE association arrays; ``gnb == -1`` marks an unserved UE."""

    gnb: np.ndarray
    sector: np.ndarray
    gnb_az: np.ndarray
    gnb_el: np.ndarray
    ue_panel: np.ndarray
    ue_az: np.ndarray
    ue_el: np.ndarray
    rsrp_dbm: np.ndarray
    snr_db: np.ndarray
    n_gnb_el: int
    n_ue_el: int

    @property
    def served(self) -> np.ndarray:
        return self.gnb >= 0

    @property
    def gnb_beam(self) -> np.ndarray:
        return np.where(self.served, self.gnb_az * self.n_gnb_el + self.gnb_el, -1)

    @property
    def ue_beam(self) -> np.ndarray:
        return np.where(self.served, self.ue_az * self.n_ue_el + self.ue_el, -1)

    def links(self) -> list[ServingLink]:
        gb, ub = self.gnb_beam, self.ue_beam
        return [
            ServingLink(i, int(self.gnb[i]), int(self.sector[i]), int(gb[i]), int(self.ue_panel[i]),
                        int(ub[i]), float(self.rsrp_dbm[i]), float(self.snr_db[i]))
            for i in np.flatnonzero(self.served)
        ]


def dl_snr(rsrp_dbm, channel: ChannelParams):
    """SNR at the UE: RSRP minus thermal noise over the band and the UE noise figure."""
    return np.asarray(rsrp_dbm) - (channel.noise_power_dbm + channel.ue_noise_figure_db)


def ue_rx_gain(ue_array: ArrayConfig, panel_az, beam, ue_pos, target):
    """UE receive gain (dBi) toward ``target``, the transmit pattern used reciprocally."""
    tilt = ue_array.mech_tilt_deg
    return radiated_power_toward(ue_array, (panel_az, tilt), (panel_az + beam[0], tilt + beam[1]),
                                 ue_pos, target, power_override_dbm=0.0) - ue_array.eirp_calibration_db


def dl_received_power(gnb, sector: int, gnb_beam: int, ue_pos, ue_panel_az: float, ue_panel: int, ue_beam: int,
                      channel: ChannelParams, ue_array: ArrayConfig, blocked: bool = False, shadow_db: float = 0.0):
    """Received reference-signal power (dBm) for one (gNB beam, UE beam) pair.

    ``ue_pos`` is (x, y, h); ``ue_panel_az`` is the first panel azimuth and
    ``ue_panel`` selects it (0) or the back panel (1).
    """
    gcb, ucb = make_codebook(gnb.array), make_codebook(ue_array)
    ga, ge = gcb.split(gnb_beam)
    ua, ue = ucb.split(ue_beam)
    s_az = float(gnb.sector_boresights_deg[sector])
    tilt = gnb.array.mech_tilt_deg
    tx = gnb.point
    rx = np.asarray(ue_pos, dtype=float)
    eirp = radiated_power_toward(gnb.array, (s_az, tilt), (s_az + gcb.az_steer[ga], tilt + gcb.el_steer[ge]), tx, rx)
    p_az = ue_panel_az + 180.0 * ue_panel
    g_ue = ue_rx_gain(ue_array, p_az, (ucb.az_steer[ua], ucb.el_steer[ue]), rx, tx)
    d3 = float(np.linalg.norm(rx - tx))
    pl = path_loss_db(blocked, d3, channel.fc_ghz, tx[2], rx[2])
    return float(eirp + g_ue - pl - shadow_db)


def _fold(x):
    """|x| folded into [0, 180] for |x| < 540; cheaper than a modulo on big arrays."""
    d = np.abs(x)
    return np.where(d > 180.0, 360.0 - d, d)


def _first_best(x, axis):
    """Index of the first maximum along ``axis``; values within TIE_TOL_DB tie."""
    best = np.max(x, axis=axis, keepdims=True)
    return np.argmax(x >= best - TIE_TOL_DB, axis=axis)


def associate(gnbs, ue_pos, ue_panel_az, ue_height: float, ue_array: ArrayConfig, channel: ChannelParams,
              blocked, shadow_db, available=None) -> Association:
    """Associate every UE with its max-RSRP (gnb, sector, beam, panel, beam).

    ``blocked``/``shadow_db`` are (n_gnb, n_ue) link states, frozen for the
    sweep. ``available`` is an optional (n_gnb, 4, n_az) mask of gNB azimuth
    beams left on by the mitigation policy. Ties resolve to the lowest
    (gnb, sector, beam, panel, beam) index.
    """
    ue_pos = np.asarray(ue_pos, dtype=float).reshape(-1, 2)
    n_ue, n_g = len(ue_pos), len(gnbs)
    garr = gnbs[0].array if n_g else None
    gcb, ucb = (make_codebook(garr) if n_g else None), make_codebook(ue_array)
    out = Association(
        gnb=np.full(n_ue, -1), sector=np.full(n_ue, -1), gnb_az=np.full(n_ue, -1), gnb_el=np.full(n_ue, -1),
        ue_panel=np.full(n_ue, -1), ue_az=np.full(n_ue, -1), ue_el=np.full(n_ue, -1),
        rsrp_dbm=np.full(n_ue, -np.inf), snr_db=np.full(n_ue, -np.inf),
        n_gnb_el=len(gcb.el_steer) if gcb else 1, n_ue_el=len(ucb.el_steer),
    )
    if n_ue == 0 or n_g == 0:
        return out
    gpos = np.array([g.pos for g in gnbs], dtype=float)
    gh = np.array([g.height for g in gnbs], dtype=float)
    sec_az = np.array([g.sector_boresights_deg for g in gnbs])
    if available is None:
        available = np.ones((n_g, 4, len(gcb.az_steer)), dtype=bool)
    blocked = np.asarray(blocked, dtype=bool)
    shadow_db = np.asarray(shadow_db, dtype=float)
    g_tilt, u_tilt = garr.mech_tilt_deg, ue_array.mech_tilt_deg
    g_base = garr.elem_power_dbm + garr.array_gain_db + garr.elem_gain_dbi + garr.eirp_calibration_db
    u_base = ue_array.array_gain_db + ue_array.elem_gain_dbi

    for lo in range(0, n_ue, CHUNK):
        sl = slice(lo, min(lo + CHUNK, n_ue))
        pos = ue_pos[sl]
        d = pos[None, :, :] - gpos[:, None, :]
        d2 = np.hypot(d[..., 0], d[..., 1])
        d2 = np.maximum(d2, 1e-9)
        az_gu = np.degrees(np.arctan2(d[..., 1], d[..., 0]))
        el_gu = np.degrees(np.arctan((ue_height - gh[:, None]) / d2))

        # gNB side, shape (G, 4, U).
        # Signed azimuth of the UE relative to each sector boresight, in (-180, 180].
        rel = (az_gu[:, None, :] - sec_az[:, :, None] + 180.0) % 360.0 - 180.0
        th_str = np.abs(rel)
        elem = np.minimum(parabolic_attenuation(th_str, garr.elem_bw_az)
                          + parabolic_attenuation(el_gu - g_tilt, garr.elem_bw_el)[:, None, :], garr.ftbr_db)
        att_az = parabolic_attenuation(_fold(rel[:, :, None, :] - gcb.az_steer[None, None, :, None]),
                                       garr.beam_bw_az)
        att_az = np.where(available[..., None], att_az, np.inf)
        ia = _first_best(-att_az, axis=2)
        best_az = np.take_along_axis(att_az, ia[:, :, None, :], axis=2)[:, :, 0, :]
        att_el = parabolic_attenuation(el_gu[:, None, :] - (g_tilt + gcb.el_steer)[None, :, None], garr.beam_bw_el)
        ie = _first_best(-att_el, axis=1)
        best_el = np.take_along_axis(att_el, ie[:, None, :], axis=1)[:, 0, :]
        g_term = g_base - best_az - best_el[:, None, :] - elem

        # UE side, shape (G, U, panel).
        az_ug = az_gu + 180.0
        el_ug = -el_gu
        panel_az = ue_panel_az[sl][None, :, None] + np.array([0.0, 180.0])
        u_rel = (az_ug[..., None] - panel_az + 180.0) % 360.0 - 180.0
        u_elem = np.minimum(parabolic_attenuation(np.abs(u_rel), ue_array.elem_bw_az)
                            + parabolic_attenuation(el_ug - u_tilt, ue_array.elem_bw_el)[..., None], ue_array.ftbr_db)
        u_att_az = parabolic_attenuation(
            _fold(u_rel[..., None] - ucb.az_steer), ue_array.beam_bw_az)
        u_ia = _first_best(-u_att_az, axis=3)
        u_best_az = np.take_along_axis(u_att_az, u_ia[..., None], axis=3)[..., 0]
        u_att_el = parabolic_attenuation(el_ug[..., None] - (u_tilt + ucb.el_steer), ue_array.beam_bw_el)
        u_ie = _first_best(-u_att_el, axis=2)
        u_best_el = np.take_along_axis(u_att_el, u_ie[..., None], axis=2)[..., 0]
        u_per_panel = u_base - u_best_az - u_best_el[..., None] - u_elem
        ip = _first_best(u_per_panel, axis=2)
        u_term = np.take_along_axis(u_per_panel, ip[..., None], axis=2)[..., 0]

        d3 = np.hypot(d2, ue_height - gh[:, None])
        pl = path_loss_db(blocked[:, sl], d3, channel.fc_ghz, gh[:, None], ue_height) + shadow_db[:, sl]
        total = g_term + (u_term - pl)[:, None, :]
        flat = total.reshape(n_g * 4, -1)
        k = _first_best(flat, axis=0)
        val = flat[k, np.arange(len(k))]
        g_idx, s_idx = np.divmod(k, 4)
        cols = np.arange(len(k))
        ok = np.isfinite(val)
        out.gnb[sl] = np.where(ok, g_idx, -1)
        out.sector[sl] = np.where(ok, s_idx, -1)
        out.gnb_az[sl] = np.where(ok, ia[g_idx, s_idx, cols], -1)
        out.gnb_el[sl] = np.where(ok, ie[g_idx, cols], -1)
        out.ue_panel[sl] = np.where(ok, ip[g_idx, cols], -1)
        out.ue_az[sl] = np.where(ok, u_ia[g_idx, cols, ip[g_idx, cols]], -1)
        out.ue_el[sl] = np.where(ok, u_ie[g_idx, cols], -1)
        out.rsrp_dbm[sl] = val
    out.snr_db = np.where(out.served, dl_snr(out.rsrp_dbm, channel), -np.inf)
    return out


def associate_all(scenario, ue_pos, ue_panel_az, blocked, shadow_db, available=None) -> list[ServingLink]:
    """List-of-links form of :func:`associate` for a built scenario."""
    res = associate(scenario.gnbs, ue_pos, np.asarray(ue_panel_az, dtype=float), scenario.deployment.ue_height_m,
                    scenario.ue_array, scenario.channel, blocked, shadow_db, available)
    return res.links()


def beam_usage_histograms(assoc: Association, gnb_array: ArrayConfig, ue_array: ArrayConfig,
                          mask=None) -> dict[str, np.ndarray]:
    """Counts of used gNB az/el beams, sectors and UE az/el beams over served UEs."""
    sel = assoc.served if mask is None else (assoc.served & mask)
    gcb, ucb = make_codebook(gnb_array), make_codebook(ue_array)
    return {
        "gnb_az": np.bincount(assoc.gnb_az[sel], minlength=len(gcb.az_steer)),
        "gnb_el": np.bincount(assoc.gnb_el[sel], minlength=len(gcb.el_steer)),
        "sector": np.bincount(assoc.sector[sel], minlength=4),
        "ue_az": np.bincount(assoc.ue_az[sel], minlength=len(ucb.az_steer)),
        "ue_el": np.bincount(assoc.ue_el[sel], minlength=len(ucb.el_steer)),
    }
