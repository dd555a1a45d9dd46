import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwave_coex import InvalidQuery
from mmwave_coex.fsdb_analysis import (
    density_vs_radius,
    gain_outliers,
    height_stats,
    height_vs_tilt,
    link_pair_counts,
    tilt_gain_beamwidth_histograms,
    tilt_mass_within,
    write_analysis,
)
from mmwave_coex.scenario import FsRecord, LocalProjection, stations_from_records

from scenes import make_fs


def rec(i, rx, tx, h=(30.0, 30.0)):
    return FsRecord(f"r{i}", rx[0], rx[1], h[0], tx[0], tx[1], h[1], 50.0, 0.8, 0.0, 7.0, 73.5)


def table_fixture():
    """1743 registered links over 512 distinct coordinate pairs, some filed in both directions."""
    rows = []
    for p in range(512):
        a = (41.8 + 0.001 * p, -87.6)
        b = (41.8 + 0.001 * p, -87.5)
        n = 4 if p < 207 else 3
        for k in range(n):
            rows.append(rec(len(rows), a, b) if k % 2 == 0 else rec(len(rows), b, a, (30.0, 30.0)))
    return rows


class TestLinkPairs:
    def test_small(self):
        a, b, c = (41.0, -87.0), (41.0, -87.1), (41.1, -87.0)
        assert link_pair_counts([rec(0, a, b), rec(1, a, b), rec(2, a, c)]) == {"links": 3, "pairs": 2}

    def test_all_unique(self):
        rows = [rec(i, (41.0 + i, -87.0), (41.0 + i, -87.1)) for i in range(5)]
        assert link_pair_counts(rows) == {"links": 5, "pairs": 5}

    def test_table_fixture(self):
        rows = table_fixture()
        assert link_pair_counts(rows) == {"links": 1743, "pairs": 512}

    def test_direction_ignored_for_pairs_but_not_victims(self):
        a, b = (41.0, -87.0), (41.0, -87.1)
        rows = [rec(0, a, b), rec(1, b, a)]
        assert link_pair_counts(rows)["pairs"] == 1
        assert len(stations_from_records(rows, LocalProjection(41.0, -87.05))) == 2


class TestDensity:
    def stations(self):
        return [make_fs(x, 0.0, fid=str(x)) for x in (0.0, 500.0, 1000.0, 1500.0, 3000.0)]

    def test_closed_disk_and_density(self):
        c = density_vs_radius(self.stations(), (0.0, 0.0), [1.0, 2.0, 3.0])
        assert c.counts.tolist() == [3, 4, 5]
        np.testing.assert_allclose(c.densities, np.array([3, 4, 5]) / (math.pi * np.array([1, 4, 9])))

    def test_all_inside_smallest(self):
        c = density_vs_radius(self.stations()[:1], (0.0, 0.0), [1.0, 2.0, 4.0])
        assert c.counts.tolist() == [1, 1, 1]
        np.testing.assert_allclose(c.densities * np.array([1, 4, 16]), c.densities[0])

    @pytest.mark.parametrize("radii", [[], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
    def test_invalid_radii(self, radii):
        with pytest.raises(InvalidQuery):
            density_vs_radius(self.stations(), (0.0, 0.0), radii)

    @given(st.lists(st.tuples(st.floats(-5e3, 5e3), st.floats(-5e3, 5e3)), min_size=1, max_size=40))
    def test_nested_counts_match_brute_force(self, pts):
        st_ = [make_fs(x, y, fid=str(i)) for i, (x, y) in enumerate(pts)]
        radii = [0.5, 1.0, 2.0, 4.0, 8.0]
        c = density_vs_radius(st_, (0.0, 0.0), radii)
        brute = [sum(1 for x, y in pts if math.hypot(x, y) / 1000 <= r + 1e-12) for r in radii]
        assert c.counts.tolist() == brute
        assert np.all(np.diff(c.counts) >= 0)


class TestHeights:
    def test_single(self):
        s = height_stats([make_fs(h=10.0)])
        assert (s.mean, s.median, s.p5, s.p95) == (10.0, 10.0, 10.0, 10.0)

    def test_three(self):
        s = height_stats([make_fs(h=h, fid=str(h)) for h in (10.0, 20.0, 30.0)])
        assert s.median == 20.0 and s.mean == 20.0
        assert s.pdf.edges.tolist() == [10, 15, 20, 25, 30, 35] and s.pdf.counts.tolist() == [1, 0, 1, 0, 1]

    def test_skewed_fixture(self):
        # 100 stations: 4 below 12 m, the rest 12-120 m with a long upper tail.
        hs = [5.0, 8.0, 10.0, 11.0] + list(np.round(np.geomspace(12, 120, 96), 2))
        s = height_stats([make_fs(h=h, fid=str(i)) for i, h in enumerate(hs)])
        assert s.p5 >= 12.0 and s.mean > s.median

    def test_empty(self):
        with pytest.raises(InvalidQuery):
            height_stats([])


class TestTiltGainBeamwidth:
    def test_all_zero_tilt(self):
        h = tilt_gain_beamwidth_histograms([make_fs(tilt=0.0, fid=str(i)) for i in range(4)])
        assert h["tilt"].counts.tolist() == [4]

    def test_tilt_mass_fixture(self):
        tilts = [0.0] * 93 + [-15.0, -20.0, 12.0, 11.0, 30.0, -11.0, 14.0]
        st_ = [make_fs(tilt=t, fid=str(i)) for i, t in enumerate(tilts)]
        assert tilt_mass_within(st_) == pytest.approx(0.93)
        assert tilt_gain_beamwidth_histograms(st_)["tilt"].counts.sum() == 100

    def test_gain_outliers(self, caplog):
        st_ = [make_fs(gain=g, fid=f"g{g}") for g in (25.0, 45.0, 61.0)]
        assert gain_outliers(st_) == ["g25.0", "g61.0"]
        tilt_gain_beamwidth_histograms(st_)
        assert "outside" in caplog.text

    def test_beamwidth_bins(self):
        from mmwave_coex import FixedStation

        st_ = [FixedStation(str(i), (0, 0), 30, (1, 0), 30, beamwidth_deg=b) for i, b in enumerate([0.3, 0.35, 0.8, 1.2])]
        h = tilt_gain_beamwidth_histograms(st_)["beamwidth"]
        assert h.edges[0] == pytest.approx(0.3) and h.counts.tolist() == [2, 0, 0, 0, 0, 1, 0, 0, 0, 1]


class TestHeightVsTilt:
    def test_negative_correlation(self):
        # Higher stations point further down.
        st_ = [make_fs(h=h, tilt=-h / 5, fid=str(h)) for h in (10.0, 20.0, 40.0, 80.0)]
        hvt = height_vs_tilt(st_)
        assert hvt.correlation < -0.99
        filled = ~np.isnan(hvt.mean_height)
        assert hvt.counts[filled].sum() == 4 and sorted(hvt.mean_height[filled]) == [10, 20, 40, 80]


def test_write_analysis(tmp_path):
    rows = table_fixture()[:40]
    stations = stations_from_records(rows, LocalProjection(41.81, -87.55))
    text = write_analysis(rows, stations, tmp_path, (0.0, 0.0), [1, 5, 20])
    assert "links: 40" in text and "pairs: 10" in text
    for name in ("density_vs_radius.csv", "height_cdf.csv", "height_pdf.csv", "tilt_hist.csv", "gain_hist.csv",
                 "beamwidth_hist.csv", "height_vs_tilt.csv", "link_pair_counts.csv", "summary.txt"):
        assert (tmp_path / name).is_file()
    assert (tmp_path / "link_pair_counts.csv").read_text().splitlines() == ["links,pairs", "40,10"]
