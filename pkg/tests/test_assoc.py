import math
from dataclasses import replace

import numpy as np
import pytest

from mmwave_coex import GNB_ARRAY, UE_ARRAY, ChannelParams, GnbSite
from mmwave_coex.assoc import associate, beam_usage_histograms, dl_received_power, dl_snr

from oracles import umi_los_db, umi_nlos_db


def wrap(a):
    return np.abs((a + 180.0) % 360.0 - 180.0)


def brute_force_rsrp(gnbs, ue_xyz, panel_az, blocked, shadow, fc=73.5):
    """Every (gnb, sector, az, el, panel, az, el) combination, written out directly.

    Returns an array of shape (G, 4, 32, 16, 2, 8, 8).
    """
    g_az = -51 + 102 / 32 * (np.arange(32) + 0.5)
    g_el = -51 + 102 / 16 * (np.arange(16) + 0.5)
    u_st = -51 + 102 / 8 * (np.arange(8) + 0.5)
    out = []
    for gi, g in enumerate(gnbs):
        dx, dy = ue_xyz[0] - g.pos[0], ue_xyz[1] - g.pos[1]
        d2 = math.hypot(dx, dy)
        az = math.degrees(math.atan2(dy, dx))
        el = math.degrees(math.atan((ue_xyz[2] - g.height) / d2))
        sec = (g.orientation_deg + np.array([0.0, 90.0, 180.0, 270.0]))[:, None, None]
        # gNB: 16x8x2 elements, 7 dBm, 5 dBi, 65 deg elements, 30 dB FTBR, -6 deg tilt.
        beam = 12 * (wrap(az - sec - g_az[None, :, None]) / 6.375) ** 2 + 12 * ((el - (-6 + g_el[None, None, :])) / 12.75) ** 2
        elem = np.minimum(12 * (wrap(az - sec) / 65) ** 2 + 12 * ((el + 6) / 65) ** 2, 30)
        eirp = 7 + 10 * math.log10(256) + 5 - beam - elem  # (4, 32, 16)
        # UE: 4x4x2 elements, receive pattern toward the gNB, +6 deg tilt.
        az_u, el_u = az + 180.0, -el
        pan = (panel_az + np.array([0.0, 180.0]))[:, None, None]
        ubeam = 12 * (wrap(az_u - pan - u_st[None, :, None]) / 25.5) ** 2 + 12 * ((el_u - (6 + u_st[None, None, :])) / 25.5) ** 2
        uelem = np.minimum(12 * (wrap(az_u - pan) / 65) ** 2 + 12 * ((el_u - 6) / 65) ** 2, 30)
        gue = 10 * math.log10(32) + 5 - ubeam - uelem  # (2, 8, 8)
        d3 = math.hypot(d2, ue_xyz[2] - g.height)
        pl = (umi_nlos_db if blocked[gi] else umi_los_db)(d3, fc, g.height, ue_xyz[2]) + shadow[gi]
        out.append(eirp[:, :, :, None, None, None] + gue[None, None, None] - pl)
    return np.array(out)


@pytest.fixture
def micro():
    gnbs = [GnbSite(0, (0.0, 0.0)), GnbSite(1, (180.0, 40.0), orientation_deg=20.0)]
    ues = np.array([[60.0, 25.0], [150.0, -70.0], [-40.0, 90.0]])
    panel = np.array([10.0, 95.0, 170.0])
    blocked = np.array([[False, True, False], [True, False, False]])
    shadow = np.array([[1.3, -2.0, 0.4], [-3.1, 0.7, 2.2]])
    return gnbs, ues, panel, blocked, shadow


def test_matches_exhaustive_oracle(micro):
    gnbs, ues, panel, blocked, shadow = micro
    res = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    for u in range(3):
        full = brute_force_rsrp(gnbs, (*ues[u], 1.5), panel[u], blocked[:, u], shadow[:, u])
        best = np.unravel_index(np.argmax(full), full.shape)
        assert res.rsrp_dbm[u] == pytest.approx(full.max(), abs=1e-9)
        g, s, ga, ge, p, ua, ue = best
        assert (res.gnb[u], res.sector[u], res.gnb_az[u], res.gnb_el[u], res.ue_panel[u], res.ue_az[u],
                res.ue_el[u]) == (g, s, ga, ge, p, ua, ue)
        # The per-link evaluator agrees with the oracle at the chosen tuple.
        direct = dl_received_power(gnbs[g], s, ga * 16 + ge, (*ues[u], 1.5), panel[u], p, ua * 8 + ue,
                                   ChannelParams(), UE_ARRAY, bool(blocked[g, u]), shadow[g, u])
        assert direct == pytest.approx(full.max(), abs=1e-9)


def test_no_tuple_beats_the_choice(micro):
    gnbs, ues, panel, blocked, shadow = micro
    res = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    rng = np.random.default_rng(0)
    for u in range(3):
        for _ in range(200):
            g, s, gb, p, ub = rng.integers(2), rng.integers(4), rng.integers(512), rng.integers(2), rng.integers(64)
            alt = dl_received_power(gnbs[g], s, gb, (*ues[u], 1.5), panel[u], p, ub, ChannelParams(), UE_ARRAY,
                                    bool(blocked[g, u]), shadow[g, u])
            assert alt <= res.rsrp_dbm[u] + 1e-9


def test_single_gnb_boresight():
    g = GnbSite(0, (0.0, 0.0))
    res = associate([g], np.array([[100.0, 0.0]]), np.array([0.0]), 1.5, UE_ARRAY, ChannelParams(),
                    np.zeros((1, 1), bool), np.zeros((1, 1)))
    assert res.gnb[0] == 0 and res.sector[0] == 0
    # Panel 0 faces east (away from the gNB), so the back panel serves.
    assert res.ue_panel[0] == 1
    # The two azimuth beams adjacent to boresight tie; the lower index wins.
    assert res.gnb_az[0] == 15


def test_equidistant_tie_goes_to_lower_id():
    gnbs = [GnbSite(0, (-100.0, 0.0)), GnbSite(1, (100.0, 0.0))]
    res = associate(gnbs, np.array([[0.0, 0.0]]), np.array([90.0]), 1.5, UE_ARRAY, ChannelParams(),
                    np.zeros((2, 1), bool), np.zeros((2, 1)))
    assert res.gnb[0] == 0


def test_back_panel_penalty():
    g = GnbSite(0, (0.0, 0.0))
    kw = dict(gnb=g, sector=0, gnb_beam=15 * 16 + 8, ue_pos=(100.0, 0.0, 1.5), ue_panel_az=180.0, ue_beam=3 * 8 + 4,
              channel=ChannelParams(), ue_array=UE_ARRAY)
    front = dl_received_power(ue_panel=0, **kw)
    back = dl_received_power(ue_panel=1, **kw)
    assert front - back > 25.0


def test_blocked_link_uses_nlos():
    g = GnbSite(0, (0.0, 0.0))
    kw = dict(gnb=g, sector=0, gnb_beam=0, ue_pos=(100.0, 0.0, 1.5), ue_panel_az=180.0, ue_panel=0, ue_beam=0,
              channel=ChannelParams(), ue_array=UE_ARRAY)
    d3 = math.hypot(100, 4.5)
    diff = dl_received_power(**kw) - dl_received_power(blocked=True, **kw)
    assert diff == pytest.approx(umi_nlos_db(d3, 73.5, 6, 1.5) - umi_los_db(d3, 73.5, 6, 1.5), abs=1e-9)


def test_unavailable_beams_are_skipped(micro):
    gnbs, ues, panel, blocked, shadow = micro
    avail = np.ones((2, 4, 32), bool)
    base = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    avail[base.gnb[0], base.sector[0], base.gnb_az[0]] = False
    res = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow, avail)
    assert (res.gnb[0], res.sector[0], res.gnb_az[0]) != (base.gnb[0], base.sector[0], base.gnb_az[0])
    assert res.rsrp_dbm[0] < base.rsrp_dbm[0]
    none = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow, np.zeros((2, 4, 32), bool))
    assert not none.served.any() and np.all(np.isneginf(none.snr_db))


class TestSnr:
    def test_example(self):
        assert dl_snr(-75.0, ChannelParams()) == pytest.approx(0.0)

    def test_half_bandwidth(self):
        a = dl_snr(-70.0, ChannelParams())
        b = dl_snr(-70.0, ChannelParams(bandwidth_hz=0.5e9))
        assert b - a == pytest.approx(10 * math.log10(2), abs=1e-12)

    def test_radial_monotone(self):
        g = GnbSite(0, (0.0, 0.0))
        xs = np.arange(20.0, 600.0, 20.0)
        ues = np.column_stack([xs, np.full(xs.size, 3.0)])
        res = associate([g], ues, np.full(xs.size, 45.0), 1.5, UE_ARRAY, ChannelParams(),
                        np.zeros((1, xs.size), bool), np.zeros((1, xs.size)))
        assert np.all(np.diff(res.snr_db) < 0)


def test_calibration_shift_keeps_argmax(micro):
    gnbs, ues, panel, blocked, shadow = micro
    hot = [replace(g, array=GNB_ARRAY.with_max_eirp(57.0)) for g in gnbs]
    a = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    b = associate(hot, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    assert a.gnb_beam.tolist() == b.gnb_beam.tolist() and a.ue_beam.tolist() == b.ue_beam.tolist()
    assert np.allclose(b.rsrp_dbm - a.rsrp_dbm, 57.0 - GNB_ARRAY.max_eirp_dbm)


def test_chunked_equals_single(micro, monkeypatch):
    import mmwave_coex.assoc as A

    gnbs = [GnbSite(i, (x, y)) for i, (x, y) in enumerate([(0, 0), (200, 0), (0, 200), (200, 200)])]
    rng = np.random.default_rng(5)
    n = 40
    ues = rng.uniform(-50, 250, (n, 2))
    panel = rng.uniform(0, 180, n)
    blocked = rng.random((4, n)) < 0.3
    shadow = rng.normal(0, 4, (4, n))
    a = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    monkeypatch.setattr(A, "CHUNK", 7)
    b = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    assert np.array_equal(a.rsrp_dbm, b.rsrp_dbm) and np.array_equal(a.gnb_beam, b.gnb_beam)


def test_beam_usage(micro):
    gnbs, ues, panel, blocked, shadow = micro
    res = associate(gnbs, ues, panel, 1.5, UE_ARRAY, ChannelParams(), blocked, shadow)
    h = beam_usage_histograms(res, GNB_ARRAY, UE_ARRAY)
    assert {k: len(v) for k, v in h.items()} == {"gnb_az": 32, "gnb_el": 16, "sector": 4, "ue_az": 8, "ue_el": 8}
    assert all(v.sum() == 3 for v in h.values())
    assert len(res.links()) == 3


def test_beam_usage_symmetry():
    """Uniform UEs around a lone site use the four sectors about equally."""
    g = GnbSite(0, (0.0, 0.0))
    rng = np.random.default_rng(11)
    n = 4000
    r = np.sqrt(rng.uniform(20**2, 300**2, n))
    a = rng.uniform(0, 2 * np.pi, n)
    ues = np.column_stack([r * np.cos(a), r * np.sin(a)])
    res = associate([g], ues, rng.uniform(0, 180, n), 1.5, UE_ARRAY, ChannelParams(),
                    np.zeros((1, n), bool), np.zeros((1, n)))
    sectors = beam_usage_histograms(res, GNB_ARRAY, UE_ARRAY)["sector"]
    assert sectors.sum() == n
    assert np.all(np.abs(sectors / n - 0.25) < 0.03)
