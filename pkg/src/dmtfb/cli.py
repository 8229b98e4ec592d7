"""Command-line front end: ``dmtfb tradeoff | simulate | verify``.

Exit codes: 0 success, 1 verification failure, 2 invalid config,
3 unreliable simulation.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path


from . import analytic as an
from . import sim
from .records import (
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    curve_csv,
    simulation_csv,
)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_UNRELIABLE = 0, 1, 2, 3

HEL_CUT_SYSTEMS = ((1, 1, 1), (2, 2, 1), (3, 4, 1), (3, 4, 2))

log = logging.getLogger("dmtfb")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file; flags override it")
    common.add_argument("--m", type=int, help="transmit antennas per user")
    common.add_argument("--n", type=int, help="receive antennas")
    common.add_argument("--users", type=int, help="number of users L")
    common.add_argument("--k-levels", dest="k_levels", help="feedback index counts, e.g. 1,2,4")
    common.add_argument("--y", help="feedback error exponent, or 'inf' for error-free feedback")
    common.add_argument("--r", help="multiplexing gains, one per user, comma separated")
    common.add_argument("--sweep", type=int, help="user (1-based) whose gain is swept")
    common.add_argument("--snr-db", dest="snr_db", help="SNR grid in dB, comma separated")
    common.add_argument("--trials", type=int)
    common.add_argument("--cal-trials", dest="cal_trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output base path (writes <out>.csv / <out>.json)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dmtfb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("tradeoff", parents=[common], help="emit achievable DMT curves")
    t.add_argument("--resolution", type=int, default=300)
    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo outage vs SNR")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--floor", type=int, default=sim.OUTAGE_FLOOR,
                   help="minimum outage events for a reliable point")
    v = sub.add_parser("verify", parents=[common], help="check closed-form identities")
    v.add_argument("--grid-points", dest="grid_points", type=int, default=1000)
    return p


_FLAG_PARSERS = {
    "k_levels": lambda s: tuple(int(v) for v in s.split(",")),
    "y": lambda s: math.inf if s.strip().lower() in ("inf", "+inf") else float(s),
    "r": lambda s: tuple(float(v) for v in s.split(",")),
    "snr_db": lambda s: tuple(float(v) for v in s.split(",")),
}


def load_config(args) -> ExperimentConfig:
    overrides = {}
    for key in ("m", "n", "users", "k_levels", "y", "r", "sweep", "snr_db", "trials",
                "cal_trials", "seed", "out", "format"):
        val = getattr(args, key, None)
        if val is None:
            continue
        if key in _FLAG_PARSERS:
            try:
                val = _FLAG_PARSERS[key](val)
            except ValueError as exc:
                raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from exc
        overrides[key] = val
    text = Path(args.config).read_text() if args.config else ""
    return ExperimentConfig.from_text(text, **overrides)


def _write(exp: ExperimentConfig, csv_text: str | None, record: ResultRecord):
    if exp.out is None:
        sys.stdout.write(csv_text if exp.format == "csv" and csv_text else record.to_json())
        return
    base = Path(exp.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    if exp.format == "csv" and csv_text is not None:
        base.with_suffix(".csv").write_text(csv_text)
    base.with_suffix(".json").write_text(record.to_json())


# -- tradeoff -------------------------------------------------------------------


def cmd_tradeoff(args) -> int:
    exp = load_config(args)
    base = exp.point()
    index = (exp.sweep or 1) - 1
    axis = an.SweepAxis(index, base.r)
    curves, series = [], []
    for K in exp.k_levels:
        cfg = exp.system(K)
        curve = an.sample_curve(cfg, axis, args.resolution)
        curves.append(curve)
        series.append({
            "K": K,
            "axis": axis.describe(),
            "sweep_limit": an.sweep_limit(cfg, axis),
            "breakpoints": curve.breakpoints,
            "d_at_start": curve.samples[0][1],
            "samples": [list(s) for s in curve.samples],
        })
    record = ResultRecord(exp, {"kind": "achievable", "series": series})
    _write(exp, curve_csv(curves), record)
    return EXIT_OK


# -- simulate -------------------------------------------------------------------


def run_summary(run: sim.OutageRun) -> dict:
    return {
        "seed": run.seed,
        "slope": run.slope,
        "slope_stderr": run.slope_stderr,
        "flagged": run.flagged,
        "points": [
            {
                "snr_db": e.snr_db, "trials": e.trials, "outages": e.outages,
                "probability": e.probability, "ci95": list(e.ci95),
                "reliable": e.reliable, "epsilon": e.epsilon, "bound": e.bound,
                "levels": e.schedule.levels, "level_exponents": e.schedule.exponents,
                "analytic_exponents": e.schedule.analytic_exponents,
                "level_outage_probs": e.level_probabilities, "notes": e.notes,
            }
            for e in run.estimates
        ],
    }


def cmd_simulate(args) -> int:
    exp = load_config(args)
    if len(exp.k_levels) != 1:
        raise ConfigError("simulate takes a single --k-levels value")
    if exp.r is None:
        raise ConfigError("simulate needs --r")
    cfg = exp.system()
    r = an.check_feasible(cfg, exp.r)
    run = sim.run_outage(cfg, r, exp.snr_db, exp.trials, exp.cal_trials, exp.seed,
                         floor=args.floor, workers=args.workers)
    analytic = {"kind": "achievable", "d_opt": an.d_opt(cfg, r), "r": list(r.r)}
    record = ResultRecord(exp, analytic, run_summary(run))
    _write(exp, simulation_csv(run), record)
    if run.flagged:
        log.warning("simulation flagged: unreliable points or no slope")
        return EXIT_UNRELIABLE
    return EXIT_OK


# -- verify ---------------------------------------------------------------------


def closed_form_checks(ms, ns, Ks):
    out = []
    for m in ms:
        for n in ns:
            for K in Ks:
                out.extend(an.verify_closed_forms(an.SystemConfig(m, n, 1, K, m * n)))
    return out


def hel_cut_checks(systems=HEL_CUT_SYSTEMS, points=1000, jmax=6):
    """``(name, system, failures, total)`` for the two grid identities."""
    rows = []
    for m, n, L in systems:
        cfg = an.SystemConfig(m, n, L, 1, m * n)
        grid = an.feasible_grid(cfg, points)
        hel_fail, cut_fail = [], []
        for r in grid:
            if not an.hel_holds(cfg, r):
                hel_fail.append(r.r)
            for j in range(1, jmax + 1):
                a = an.d_opt_piecewise_ymn(cfg, r, j)
                b = an.d_opt(cfg.with_(K=j), r)
                if abs(a - b) > an.TOL:
                    cut_fail.append((r.r, j, a, b))
        rows.append(("hel", (m, n, L), hel_fail, len(grid)))
        rows.append(("cut", (m, n, L), cut_fail, len(grid) * jmax))
    return rows


def cmd_verify(args) -> int:
    exp = None
    if any(getattr(args, k) is not None for k in ("config", "m", "n", "k_levels")):
        exp = load_config(args)
    ms = [exp.m] if exp and (args.m or args.config) else range(1, 5)
    ns = [exp.n] if exp and (args.n or args.config) else range(1, 5)
    Ks = exp.k_levels if exp and (args.k_levels or args.config) else range(1, 7)

    ok = True
    print(f"{'identity':<14} {'m':>2} {'n':>2} {'K':>2} {'expected':>14} {'computed':>14}  status")
    for c in closed_form_checks(ms, ns, Ks):
        exp_s = "-" if c.expected is None else f"{c.expected:.6g}"
        got_s = "-" if c.computed is None else f"{c.computed:.6g}"
        print(f"{c.name:<14} {c.m:>2} {c.n:>2} {c.K:>2} {exp_s:>14} {got_s:>14}  {c.status}")
        ok &= c.passed
    for name, system, failures, total in hel_cut_checks(points=args.grid_points):
        status = "pass" if not failures else "fail"
        print(f"{name:<14} (m,n,L)={system}: {total - len(failures)}/{total}  {status}")
        for f in failures[:5]:
            print(f"    failing: {f}")
        ok &= not failures
    print("ALL PASS" if ok else "FAILURES")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"tradeoff": cmd_tradeoff, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, an.InfeasibleRateError, ValueError, OSError) as exc:
        print(f"dmtfb {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
