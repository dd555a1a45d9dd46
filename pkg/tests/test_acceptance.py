"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import functools
import math
import time

import numpy as np
import pytest

from mmwave_coex import (
    GNB_ARRAY,
    UE_ARRAY,
    Building,
    ChannelParams,
    DeploymentConfig,
    GnbSite,
    MitigationPolicy,
    Scenario,
    UeTxState,
    make_codebook,
    run_monte_carlo,
)
from mmwave_coex.antenna import parabolic_attenuation
from mmwave_coex.channel import los_probability
from mmwave_coex.fsdb_analysis import height_stats, link_pair_counts
from mmwave_coex.geom import blockage_height_at, is_link_blocked
from mmwave_coex.interference import aggregate_inr, ue_interference_to_fs
from mmwave_coex.mitigation import apply_policy
from mmwave_coex.report import histogram, inr_protection_report, percentile, write_run_outputs

from oracles import ambiguous_for_sampling, nearest_rank, random_convex_footprint, ray_sample_blocked
from scenes import make_fs, open_space_scene

TRIALS = 1000
PSIS = (0.0, 22.5, 45.0, 90.0)


@pytest.fixture
def verdict(capsys):
    def emit(n: int, label: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {label}  {detail}")
        assert ok, f"criterion {n} failed: {detail}"

    return emit


@functools.lru_cache(maxsize=None)
def scene_run(kind="none", psi=0.0, k=None, p_lo=None, p_up=None):
    policy = MitigationPolicy(kind, psi_deg=psi, p_lo_eirp_dbm=p_lo, p_up_eirp_dbm=p_up)
    t0 = time.perf_counter()
    res = run_monte_carlo(open_space_scene(policy=policy, k=k), TRIALS)
    return res, time.perf_counter() - t0


def test_c01_formula_oracles(verdict):
    rng = np.random.default_rng(101)
    bws = rng.uniform(0.5, 180.0, 20)
    pat = max(abs(parabolic_attenuation(bw / 2, bw) - 3.0) for bw in bws)
    plos_near = max(abs(los_probability(d) - 1.0) for d in np.linspace(0, 18, 50))
    plos_36 = abs(los_probability(36.0) - 0.6839)
    d_fs = rng.uniform(1, 1000, 1000)
    d_bl = d_fs * rng.uniform(1e-6, 1, 1000)
    h_f, h_ue = rng.uniform(0, 100, 1000), rng.uniform(0, 100, 1000)
    interp = np.array([np.interp(b, [0.0, f], [0.0, hf - hu]) for b, f, hf, hu in zip(d_bl, d_fs, h_f, h_ue)])
    got = np.array([blockage_height_at(*args) for args in zip(d_bl, d_fs, h_f, h_ue)])
    blk = np.max(np.abs(got - interp))
    ok = pat <= 1e-9 and plos_near <= 1e-4 and plos_36 <= 1e-4 and blk <= 1e-9
    verdict(1, "formula oracles", ok, f"pattern err {pat:.1e}, P_LOS err {max(plos_near, plos_36):.1e}, h~ err {blk:.1e}")


def test_c02_single_link_end_to_end(verdict):
    d2 = math.sqrt(100.0**2 - 28.5**2)
    el = math.degrees(math.atan(28.5 / d2))
    fs = make_fs(d2, 0.0, 30.0, az=0.0, gain=50.0, nf=7.0)
    ue = UeTxState((0.0, 0.0), 1.5, 0.0, el, 0.0, el, source="fixed")
    sc = Scenario(stations=[fs], deployment=DeploymentConfig.square(1000.0),
                  channel=ChannelParams(sigma_los_db=0.0, sigma_nlos_db=0.0), ue_model="fixed", fixed_ues=[ue])
    t0 = time.perf_counter()
    inr = run_monte_carlo(sc, 1).inr["fs"].samples[0]
    dt = time.perf_counter() - t0
    # Spreadsheet-style chain: 1 + 10log10(32) + 5 = 21.05 dBm EIRP, -5 dBi FS gain,
    # 32.4 + 21*2 + 20log10(73.5) = 111.73 dB path loss, -84 + 7 = -77 dBm noise.
    verdict(2, "single-link INR", abs(inr - (-18.68)) <= 0.01 and dt < 1.0, f"INR {inr:.4f} dB in {dt:.3f} s")


def test_c03_aggregation_identity(verdict):
    rng = np.random.default_rng(303)
    fs = make_fs(0.0, 0.0, 25.0, az=30.0, tilt=-2.0)
    flat = ChannelParams(sigma_los_db=0.0, sigma_nlos_db=0.0)
    ues = [UeTxState(tuple(rng.uniform(-500, 500, 2)), 1.5, float(rng.uniform(0, 360)), 6.0,
                     float(rng.uniform(0, 360)), float(rng.uniform(-45, 57))) for _ in range(1000)]
    blocked = rng.random(1000) < 0.5
    shadow = rng.normal(0, 6, 1000)
    lin = math.fsum(10 ** (ue_interference_to_fs(u, fs, UE_ARRAY, flat, b, s) / 10)
                    for u, b, s in zip(ues, blocked, shadow))
    got = 10 ** ((aggregate_inr(fs, ues, UE_ARRAY, flat, blocked, shadow) + flat.noise_power_dbm + 7.0) / 10)
    rel = abs(got - lin) / lin
    one = aggregate_inr(fs, ues[:1], UE_ARRAY, flat)
    two = aggregate_inr(fs, ues[:1] * 2, UE_ARRAY, flat)
    ok = rel <= 1e-12 and abs((two - one) - 3.01) <= 0.01
    verdict(3, "aggregation identity", ok, f"rel err {rel:.1e}, doubling +{two - one:.4f} dB")


def test_c04_blockage_oracle(verdict):
    rng = np.random.default_rng(404)
    checked = bad = skipped = 0
    for _ in range(200):
        fps, hs = [], []
        while len(fps) < rng.integers(1, 21):
            fp = random_convex_footprint(rng, rng.uniform(-150, 150, 2), rng.uniform(5, 30))
            if fp is not None:
                fps.append(fp)
                hs.append(float(rng.uniform(3, 50)))
        blds = [Building(f, h) for f, h in zip(fps, hs)]
        for _ in range(10):
            tx = np.r_[rng.uniform(-200, 200, 2), 1.5]
            rx = np.r_[rng.uniform(-200, 200, 2), rng.uniform(5, 60)]
            if ambiguous_for_sampling(tx, rx, fps, hs):
                skipped += 1
                continue
            checked += 1
            bad += is_link_blocked(tx, rx, blds)[0] != ray_sample_blocked(tx, rx, fps, hs, n=1000)
    verdict(4, "blockage vs ray sampling", bad == 0 and checked >= 1900,
            f"{bad} disagreements over {checked} links in 200 scenes ({skipped} grazing links skipped)")


def test_c05_mitigation_monotonicity(verdict):
    p95 = []
    secs = 0.0
    for psi in PSIS:
        res, dt = scene_run("beam", psi) if psi > 0 else scene_run()
        p95.append(res.p95())
        secs += dt
    ok = all(b <= a for a, b in zip(p95, p95[1:])) and secs / len(PSIS) < 300
    verdict(5, "p95 INR non-increasing in psi", ok,
            "p95 " + ", ".join(f"{p:.2f}" for p in p95) + f" dB; {secs / len(PSIS):.1f} s per run")


@pytest.mark.filterwarnings("ignore::mmwave_coex.EmptyNetworkWarning")
def test_c06_orientation_nested_in_location(verdict):
    rng = np.random.default_rng(606)
    az = make_codebook(GNB_ARRAY).az_steer
    violations = nonempty = 0
    for _ in range(100):
        gnbs = [GnbSite(i, tuple(rng.uniform(-1000, 1000, 2)), orientation_deg=float(rng.uniform(0, 90)))
                for i in range(int(rng.integers(1, 10)))]
        stations = [make_fs(*rng.uniform(-1000, 1000, 2), rng.uniform(10, 60), az=float(rng.uniform(0, 360)),
                            fid=str(j)) for j in range(int(rng.integers(1, 4)))]
        psi = float(rng.uniform(0, 180))
        for kind in ("sector", "beam"):
            loc = ~apply_policy(gnbs, stations, MitigationPolicy(kind, "location", psi), az).available
            ori = ~apply_policy(gnbs, stations, MitigationPolicy(kind, "orientation", psi), az).available
            violations += int(np.count_nonzero(ori & ~loc))
            nonempty += int(ori.any())
    verdict(6, "orientation set within location set", violations == 0 and nonempty > 0,
            f"{violations} violations; {nonempty} non-empty orientation sets")


def test_c07_power_control(verdict):
    base, _ = scene_run()
    lines, ok = [], True
    for psi in PSIS[1:]:
        res, _ = scene_run("power_control", psi, p_lo=33.0, p_up=43.0)
        quiet = bool(res.exclusion.beam_quiet.any())
        same_snr = res.snr_db.tobytes() == base.snr_db.tobytes()
        lower = res.p95() < base.p95()
        ok &= quiet and same_snr and lower
        lines.append(f"psi {psi:g}: SNR identical={same_snr}, p95 {base.p95():.2f} -> {res.p95():.2f}")
    verdict(7, "power control keeps SNR, lowers p95", ok, "; ".join(lines))


def test_c08_frequency_ordering(verdict):
    los_only = dict(los_mode="geometric", sigma_los_db=0.0, sigma_nlos_db=0.0)
    med = {}
    for fc in (73.5, 83.5):
        sc = open_space_scene()
        sc = Scenario(**{**vars(sc), "channel": ChannelParams(fc_ghz=fc, **los_only)})
        med[fc] = percentile(run_monte_carlo(sc, 200).inr["fs34"].finite, 50)
    diff = med[73.5] - med[83.5]
    verdict(8, "83.5 GHz median below 73.5 GHz", abs(diff - 1.11) <= 0.2,
            f"difference {diff:.4f} dB (20log10(83.5/73.5) = {20 * math.log10(83.5 / 73.5):.4f})")


def test_c09_multiplexing(verdict):
    p95 = [scene_run(k=k)[0].p95() if k > 1 else scene_run()[0].p95() for k in (1, 2, 3, 4)]
    ok = all(b >= a for a, b in zip(p95, p95[1:]))
    verdict(9, "p95 INR non-decreasing in K", ok, "p95 " + ", ".join(f"{p:.2f}" for p in p95) + " dB")


def test_c10_determinism(verdict, tmp_path):
    sc = open_space_scene(policy=MitigationPolicy("power_control", psi_deg=45.0))
    blobs = {}
    for n in (1, 4, 8):
        out = tmp_path / f"t{n}"
        files = write_run_outputs(run_monte_carlo(sc, 60, threads=n, keep_association=True), out,
                                  association_dump=True)
        blobs[n] = {f.name: f.read_bytes() for f in files}
    same = blobs[1] == blobs[4] == blobs[8]
    verdict(10, "bitwise-identical outputs for 1/4/8 threads", same, f"{len(blobs[1])} files compared")


def test_c11_fsdb_and_report_fixtures(verdict):
    from test_fsdb_analysis import table_fixture

    lp = link_pair_counts(table_fixture())
    vals = list(np.random.default_rng(11).normal(30, 15, 333))
    pct_ok = all(percentile(vals, q) == nearest_rank(vals, q) for q in (0, 5, 50, 95, 100))
    hs = height_stats([make_fs(h=h, fid=str(i)) for i, h in enumerate([3.0, 12.0, 14.0, 27.0, 61.0])])
    h = histogram([0.2, 0.4, 1.5, 2.0, 2.9, 7.1, 7.9, 8.0], 1.0)
    hist_ok = h.counts.tolist() == [2, 1, 2, 0, 0, 0, 0, 2, 1] and h.mass.tolist() == [0.25, 0.125, 0.25, 0, 0, 0, 0, 0.25, 0.125]
    stats_ok = (hs.median, hs.p5, hs.p95, hs.mean) == (14.0, 3.0, 61.0, 23.4)
    # 20 samples with exactly one at the -6 dB threshold: exceedance 1/20.
    prot = inr_protection_report({"fs": [-6.0] + [-10.0 - i for i in range(19)]})[0]
    prot_ok = prot.exceedances == 1 and prot.exceedance == 0.05 and prot.passed
    prot_fail = not inr_protection_report({"fs": [-6.0, -5.0] + [-10.0] * 18})[0].passed
    ok = lp == {"links": 1743, "pairs": 512} and pct_ok and hist_ok and stats_ok and prot_ok and prot_fail
    verdict(11, "fsdb and report fixtures", ok,
            f"links/pairs {lp['links']}/{lp['pairs']}, exceedance {prot.exceedance}, percentiles {pct_ok}, "
            f"histogram {hist_ok}, heights {stats_ok}")
