"""Command-line interface.

    quietclock simulate --model clock --periods 100000000 --p 0.01 --w 0.001 --delta 1e-5 --seed 42
    quietclock compare runs/<run_id>/psd.csv --delta 1e-5 --p 0.01 --w 0.001
    quietclock sweep --config base.json --grid p=0.005,0.01,0.02 --workers 2

Exit codes: 0 success, 1 comparison FAIL, 2 configuration error, 3 runtime error.
Output directory: ``--out``, else ``$QUIETCLOCK_OUT``, else ``./runs``.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

from .artifacts import ArtifactFormatError, fmt, read_psd, write_table
from .model import ClockParams
from .runner import (
    MODEL_KEYS,
    REQUIRED_KEYS,
    ConfigError,
    RunConfig,
    load_config,
    run_single,
    run_sweep,
)
from .spectral import analytic_psd, band_compare, fit_corner

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
ENV_OUT = "QUIETCLOCK_OUT"
PARAM_FLAGS = {"delta": "--delta", "p": "--p", "w": "--w", "damping": "--damping", "e0": "--e0",
               "mark": "--mark", "quantum": "--quantum"}


def _csv_ints(text):
    return tuple(int(float(x)) for x in text.split(",") if x)


def _add_run_flags(ap):
    ap.add_argument("--config", type=Path, help="JSON run config; flags override its values")
    ap.add_argument("--model", choices=("clock", "poisson", "laser"))
    ap.add_argument("--periods", type=lambda s: int(float(s)), help="number of periods N")
    ap.add_argument("--p", type=float, help="event probability per period")
    ap.add_argument("--w", type=float, help="molecule-to-bob weight ratio")
    ap.add_argument("--delta", type=float, help="input energy per period (J)")
    ap.add_argument("--quantum", type=float, help="laser-analog event energy (J)")
    ap.add_argument("--mark", type=float, help="Poisson reference event energy (J)")
    ap.add_argument("--e0", type=float, help="initial clock energy (J); default delta/(p*w)")
    ap.add_argument("--damping", choices=("linearized", "exact"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--burn-in", type=int, dest="burn_in")
    ap.add_argument("--segment-len", type=int, dest="segment_len", help="PSD segment length (power of two)")
    ap.add_argument("--lowfreq-segment-len", type=int, dest="lowfreq_segment_len")
    ap.add_argument("--window", choices=("rectangular", "hann"))
    ap.add_argument("--bins-per-decade", type=int, dest="bins_per_decade",
                    help="log-bin the psd file (0 writes raw bins)")
    ap.add_argument("--outputs", type=lambda s: tuple(x for x in s.split(",") if x),
                    help="comma list of psd,summary,events,ledger")
    ap.add_argument("--fano-windows", type=_csv_ints, dest="fano_windows")
    ap.add_argument("--out", type=Path, help="output directory")


def _auto_segment_len(n):
    if n < 128:
        return None
    return min(2**20, 1 << int(math.log2(n // 64)))


def build_config(args) -> RunConfig:
    doc = load_config(args.config) if args.config else {}
    doc.pop("sweep", None)
    if args.model:
        doc["model"] = args.model
    if args.periods is not None:
        doc["periods"] = args.periods
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.burn_in is not None:
        doc["burn_in"] = args.burn_in
    if args.outputs is not None:
        doc["outputs"] = list(args.outputs)
    if args.fano_windows is not None:
        doc["fano_windows"] = list(args.fano_windows)
    if "model" not in doc:
        raise ConfigError("missing required flag --model")
    if "periods" not in doc:
        raise ConfigError("missing required flag --periods")
    model = doc["model"]
    if model not in MODEL_KEYS:
        raise ConfigError(f"unknown model {model!r}")
    params = dict(doc.get("params", {}))
    for key in MODEL_KEYS[model]:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    missing = [PARAM_FLAGS[k] for k in REQUIRED_KEYS[model] if params.get(k) is None]
    if missing:
        raise ConfigError(f"model {model} requires flag(s): {', '.join(missing)}")
    doc["params"] = params

    n = int(doc["periods"])
    psd = doc.get("psd", {}) if "psd" in doc else {}
    if psd is not None:
        psd = dict(psd)
        for key in ("segment_len", "lowfreq_segment_len", "window", "bins_per_decade"):
            val = getattr(args, key, None)
            if val is not None:
                psd[key] = val
        if "segment_len" not in psd:
            auto = _auto_segment_len(n)
            if auto is None:
                psd = None
            else:
                psd["segment_len"] = auto
    doc["psd"] = psd
    if psd is None and "outputs" not in doc:
        doc["outputs"] = ["summary"]
    return RunConfig.from_dict(doc)


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(ENV_OUT, "runs"))


def _print_summary(res, out=None):
    out = out or sys.stdout
    s = res.summary
    led = s["ledger"]
    print(f"run_id            {res.run_id}", file=out)
    print(f"periods           {s['config']['periods']}", file=out)
    print(f"events            {s['events']['count']}  (rate {s['events']['rate']:.6g} per period)", file=out)
    print(f"ledger            input {led['input_total']:.10g} J = dissipated {led['dissipated_total']:.10g} J"
          f" + stored {led['stored_delta']:.6g} J  (rel. residual {led['relative_residual']:.2e})", file=out)
    if "mean_energy" in s:
        print(f"mean energy       {s['mean_energy']:.6g} J  (expected {s['mean_energy_expected']:.6g} J)", file=out)
    if "interevent" in s:
        ie = s["interevent"]
        print(f"inter-event gap   mean {ie['mean_gap']:.6g}  var {ie['var_gap']:.6g}", file=out)
    if "gap_mark_correlation" in s:
        print(f"gap-mark corr.    {s['gap_mark_correlation']:.4f}", file=out)
    if s["fano"]:
        print("fano table        window  mean_count  var_count  fano", file=out)
        for row in s["fano"]:
            print(f"                  {row['window']:>6d}  {row['mean_count']:10.4f}  "
                  f"{row['var_count']:9.4f}  {row['fano']:.4f}", file=out)
    if "psd" in s:
        ps = s["psd"]
        print(f"psd               M={ps['segment_len']} segments={ps['segments']} window={ps['window']}", file=out)
        if ps.get("plateau_estimate") is not None:
            print(f"  plateau [1,pi]  {ps['plateau_estimate']:.6g}  (expected {ps['plateau_expected']:.6g})", file=out)
        lb = ps["lowest_band"]
        print(f"  lowest band     omega {lb['omega']:.4g}: {lb['s_est']:.6g}", file=out)
        if ps.get("fit_corner") is not None:
            print(f"  corner fit      {ps['fit_corner']:.4g} rad/period  (p*w = {ps['corner_expected']:.4g})",
                  file=out)
    for kind, path in res.paths.items():
        print(f"wrote {kind:<12s} {path}", file=out)


def cmd_simulate(args) -> int:
    config = build_config(args)
    config.validate()
    res = run_single(config, _out_dir(args))
    _print_summary(res)
    return EXIT_OK


def compare_table(omega, s_est, s_ref, tolerance=0.10, bins_per_decade=10, lo=0.0, hi=math.inf):
    bands = band_compare(omega, s_est, s_ref, bins_per_decade, lo, hi)
    if not bands:
        raise ArtifactFormatError("no rows in the requested frequency range")
    rows = []
    for b in bands:
        dev = abs(b.ratio - 1.0)
        rows.append({"f": b.omega / (2 * math.pi), "omega": b.omega, "n_bins": b.n_bins,
                     "s_est": b.s_est, "s_ref": b.s_ref, "ratio": b.ratio,
                     "ok": bool(dev <= tolerance)})
    return rows


def cmd_compare(args) -> int:
    tab = read_psd(args.psd_file)
    given = [args.delta, args.p, args.w]
    if any(v is not None for v in given) and not all(v is not None for v in given):
        raise ConfigError("compare needs all of --delta, --p, --w (or none to use the s_analytic column)")
    try:
        params = ClockParams(args.delta, args.p, args.w) if args.delta is not None else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ref = analytic_psd(params, tab.omega) if params else tab.s_analytic
    est = tab.s_analytic if args.estimate_column == "s_analytic" else tab.s_est
    rows = compare_table(tab.omega, est, ref, args.tolerance, args.bins_per_decade,
                         args.omega_min, args.omega_max)
    print(f"{'f=omega/2pi':>12s} {'omega':>12s} {'bins':>5s} {'s_est':>12s} {'s_ref':>12s} {'ratio':>8s}")
    for r in rows:
        flag = "" if r["ok"] else "  <-- out of tolerance"
        print(f"{r['f']:12.5g} {r['omega']:12.5g} {r['n_bins']:5d} {r['s_est']:12.5g} "
              f"{r['s_ref']:12.5g} {r['ratio']:8.4f}{flag}")
    max_dev = max(abs(r["ratio"] - 1.0) for r in rows)
    passed = all(r["ok"] for r in rows)
    print(f"max deviation {max_dev:.4f} (tolerance {args.tolerance:.4f})")
    sel = (tab.omega >= args.omega_min) & (tab.omega <= args.omega_max) & (est > 0)
    if sel.sum() >= 3:
        try:
            _, c_fit = fit_corner(tab.omega[sel], est[sel])
            line = f"fitted corner {c_fit:.5g} rad/period"
            if params is not None:
                c_exp = params.p * params.w
                line += f" vs p*w = {c_exp:.5g} (shift x{c_fit / c_exp:.3f})"
            print(line)
        except (ValueError, RuntimeError):
            pass
    if args.report:
        write_table(args.report, rows, ["f", "omega", "n_bins", "s_est", "s_ref", "ratio", "ok"])
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


def _parse_grid_item(item):
    key, sep, vals = item.partition("=")
    if not sep or not vals:
        raise ConfigError(f"bad --grid item {item!r}; expected key=v1,v2,...")
    return key, [float(v) for v in vals.split(",")]


def cmd_sweep(args) -> int:
    doc = load_config(args.config) if args.config else {}
    sweep = doc.get("sweep", {})
    grid = dict(sweep.get("grid", {}))
    for item in args.grid or []:
        k, v = _parse_grid_item(item)
        grid[k] = v
    if not grid:
        raise ConfigError("sweep grid is empty; give --grid key=v1,v2 or a config 'sweep.grid'")
    workers = args.workers if args.workers is not None else int(sweep.get("workers", 1))
    # Grid keys stand in for the per-model flags when checking required parameters.
    for key in grid:
        if key in PARAM_FLAGS and getattr(args, key, None) is None and key not in doc.get("params", {}):
            setattr(args, key, grid[key][0])
    base = build_config(args)
    report = run_sweep(base, grid, workers, _out_dir(args))
    cols = ("cell", "status", "grid", "mean_energy", "event_rate", "plateau_estimate", "fit_corner",
            "corner_expected", "error")
    print(",".join(cols))
    for r in report.rows:
        print(",".join(fmt(r.get(c)) for c in cols))
    if report.table_path:
        print(f"wrote sweep table {report.table_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quietclock", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one seeded simulation and write artifacts")
    _add_run_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="compare a psd file with the analytic clock spectrum")
    cmp_.add_argument("psd_file", type=Path)
    cmp_.add_argument("--delta", type=float)
    cmp_.add_argument("--p", type=float)
    cmp_.add_argument("--w", type=float)
    cmp_.add_argument("--tolerance", type=float, default=0.10, help="max |ratio-1| per band (default 0.10)")
    cmp_.add_argument("--bins-per-decade", type=int, default=10)
    cmp_.add_argument("--omega-min", type=float, default=0.0)
    cmp_.add_argument("--omega-max", type=float, default=math.inf)
    cmp_.add_argument("--estimate-column", choices=("s_est", "s_analytic"), default="s_est")
    cmp_.add_argument("--report", type=Path, help="also write the band table as CSV")
    cmp_.set_defaults(func=cmd_compare)

    sw = sub.add_parser("sweep", help="run a parameter grid")
    _add_run_flags(sw)
    sw.add_argument("--grid", action="append", help="key=v1,v2,... (repeatable)")
    sw.add_argument("--workers", type=int)
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ArtifactFormatError) as exc:
        print(f"quietclock {args.command}: error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigError):
            ap.print_usage(sys.stderr)
        return EXIT_CONFIG
    except (OSError, MemoryError, RuntimeError, ValueError) as exc:
        print(f"quietclock {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
