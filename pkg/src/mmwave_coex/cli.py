"""Command-line entry point: run, analyze-fsdb, compare-mitigation, validate-scenario.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .errors import CoexError, EmptyDatabase, EmptyDeployment, InvalidConfig, InvalidPattern

log = logging.getLogger("mmwave_coex")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
CONFIG_ERRORS = (InvalidConfig, InvalidPattern, EmptyDatabase, EmptyDeployment, FileNotFoundError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _common(p: argparse.ArgumentParser, out=True):
    p.add_argument("--config", required=True, help="YAML or JSON run configuration")
    if out:
        p.add_argument("--out", required=True, help="output directory")


def _sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides config)")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--freq", type=float, choices=[73.5, 83.5], help="carrier frequency in GHz")
    p.add_argument("--ue-model", choices=["associated", "random", "fixed"])
    p.add_argument("--policy", help="mitigation kind, optionally kind:basis (e.g. beam:orientation)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mmwave-coex", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run the Monte Carlo simulation")
    _common(p)
    _sim_flags(p)
    p.add_argument("--psi", type=float, help="angular threshold in degrees (overrides config)")

    p = sub.add_parser("compare-mitigation", help="sweep the angular threshold and emit the operating curve")
    _common(p)
    _sim_flags(p)
    p.add_argument("--psi-list", default="0,22.5,45,90", help="comma-separated thresholds in degrees")

    p = sub.add_parser("analyze-fsdb", help="characterize a fixed-station database")
    p.add_argument("--fsdb", required=True, help="normalized FS CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--radii-km", default="1,2,5,10,20")
    p.add_argument("--center-lat", type=float)
    p.add_argument("--center-lon", type=float)

    p = sub.add_parser("validate-scenario", help="load and check all inputs without simulating")
    _common(p, out=False)
    return ap


def _scenario(args, psi=None):
    from .config import build_scenario, load_config, policy_from_cli, scenario_policy

    cfg = load_config(args.config)
    policy = policy_from_cli(scenario_policy(cfg), args.policy, psi)
    sc = build_scenario(cfg, seed=args.seed, fc_ghz=args.freq, ue_model=args.ue_model, policy=policy)
    trials = args.trials if args.trials is not None else cfg.trials
    if trials < 1:
        raise InvalidConfig("trials must be >= 1")
    return cfg, sc, trials


def cmd_run(args) -> int:
    from .interference import run_monte_carlo
    from .report import inr_protection_report, write_run_outputs

    cfg, sc, trials = _scenario(args, args.psi)
    res = run_monte_carlo(sc, trials, keep_association=cfg.simulation.association_dump)
    meta = {"projection": sc.projection.as_dict() if sc.projection else None, "fc_ghz": sc.channel.fc_ghz,
            "ue_model": sc.ue_model, "policy": vars(sc.policy)}
    write_run_outputs(res, args.out, meta, association_dump=cfg.simulation.association_dump)
    with open(Path(args.out) / "protection_report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fs_id", "n", "exceedances", "exceedance", "p95_inr_db", "pass"])
        for r in inr_protection_report(res.inr):
            w.writerow([r.fs_id, r.n, r.exceedances, repr(r.exceedance), repr(r.p95_db), int(r.passed)])
    log.info("wrote %d trials for %d station(s) to %s", trials, len(sc.stations), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    from .interference import run_monte_carlo
    from .report import operating_point

    try:
        psis = [float(x) for x in args.psi_list.split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidConfig(f"--psi-list: {exc}") from exc
    if not psis:
        raise InvalidConfig("--psi-list is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for psi in psis:
        _, sc, trials = _scenario(args, psi)
        op = operating_point(run_monte_carlo(sc, trials))
        rows.append([repr(psi), repr(op["median_snr_db"]), repr(op["cell_edge_snr_db"]), repr(op["inr_p95_db"])])
    with open(out / "operating_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["psi_deg", "median_snr_db", "cell_edge_snr_db", "inr_p95_db"])
        w.writerows(rows)
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .fsdb_analysis import write_analysis
    from .scenario import LocalProjection, centroid_projection, read_fs_rows, stations_from_records

    rows = read_fs_rows(args.fsdb)
    proj = centroid_projection(rows)
    stations = stations_from_records(rows, proj)
    center = (0.0, 0.0)
    if args.center_lat is not None and args.center_lon is not None:
        x, y = proj.to_local(args.center_lat, args.center_lon)
        center = (float(x), float(y))
    try:
        radii = [float(r) for r in args.radii_km.split(",")]
    except ValueError as exc:
        raise InvalidConfig(f"--radii-km: {exc}") from exc
    sys.stdout.write(write_analysis(rows, stations, args.out, center, radii))
    return EXIT_OK


def cmd_validate(args) -> int:
    from .config import build_scenario, load_config

    cfg = load_config(args.config)
    sc = build_scenario(cfg)
    if sc.ue_model != "fixed":
        sc.deployment.n_ues()
    print(f"ok: {len(sc.stations)} station(s), {len(sc.buildings)} building(s), {len(sc.gnbs)} gNB site(s)")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare-mitigation": cmd_compare, "analyze-fsdb": cmd_analyze,
            "validate-scenario": cmd_validate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError:
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except CONFIG_ERRORS as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (CoexError, OSError, ValueError, ArithmeticError) as exc:
        log.error("runtime error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
