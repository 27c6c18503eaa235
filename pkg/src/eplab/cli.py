"""Command-line front end: ``eplab run | verify | sweep``.

Exit codes: 0 success, 1 configuration or usage error, 2 blow-up,
3 any other solver failure (``verify`` returns 1 when a check fails).
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .background import Variant
from .diagnostics import (
    CSV_COLUMNS, NORM_NAMES, DECAY_NORMS, DiagnosticsRecord, fit_decay_rate, fit_norms,
    ion_constants, ion_run_checks, momentum_check, series,
)
from .exceptions import BlowUp, ConfigError, EPLabError, InsufficientData
from .phaseplane import (
    LemmaConstants, PhaseState, combined_y, cross_X, integrate, linear_decay_rate,
    lyapunov_L, verify_lemma,
)

log = logging.getLogger("eplab")

EXIT_OK, EXIT_USAGE, EXIT_BLOWUP, EXIT_SOLVER = 0, 1, 2, 3
SWEEP_PARAMS = ("nu", "r1", "amplitude", "cbar")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path, write):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_timeseries(path, records):
    def write(fh):
        wr = csv.writer(fh)
        wr.writerow(CSV_COLUMNS)
        for rec in records:
            wr.writerow([repr(float(v)) for v in rec.row()])

    _atomic_write(path, write)


def write_json(path, data):
    _atomic_write(path, lambda fh: fh.write(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _check(passed, margin, detail=""):
    return {"pass": bool(passed), "margin": margin, "detail": detail}


def predicted_rates(cfg, B=1.0):
    """``(linearised amplitude rate, proof lower-bound rate)`` for a prescribed background."""
    b = cfg["background"]
    nu, cbar = cfg["nu"], b["cbar"]
    kind = Variant(b["kind"])
    r1 = b["envelope"]["r1"] if kind is Variant.EXPONENTIAL_DECAY else None
    if kind is Variant.GENERAL_DECAY:
        return None, None
    lin = linear_decay_rate(nu, cbar)
    if r1 is not None:
        lin = min(lin, r1)
    lemma = LemmaConstants.from_params(nu, cbar, max(B, 1e-12), r1)
    return lin, lemma.r2_pred


def pde_summary(cfg, records, status, blowup_time=None):
    """Summary dict for a PDE run (prescribed or Boltzmann background)."""
    floor = cfg["fit"]["floor"]
    ion = cfg["background"]["kind"] == "boltzmann"
    fits = fit_norms(records, NORM_NAMES if ion else DECAY_NORMS, floor)
    t = series(records, "t")
    constants = {
        "rho_minus": float(np.min(series(records, "rho_min"))),
        "rho_plus": float(np.max(series(records, "rho_max"))),
        "M": float(np.max(series(records, "sup_dx_u"))),
        "max_energy_dissipation_residual": float(np.max(series(records, "energy_dissipation_residual"))),
    }
    checks = {}
    neutral = float(np.max(series(records, "neutrality_residual")))
    checks["neutrality"] = _check(neutral <= 1e-10, 1e-10 - neutral)
    if cfg["solver"] == "lagrangian" and len(records) > 1:
        dev = momentum_check(t, series(records, "momentum"), cfg["nu"]).max_deviation
        checks["momentum_law"] = _check(dev <= 1e-6, 1e-6 - dev, f"max |m - m0 exp(-nu t)| = {dev:.3e}")
    if ion:
        if constants["rho_minus"] <= 1.0 and len(records) > 1:
            ic = ion_constants(cfg["nu"], constants["rho_minus"], constants["rho_plus"], constants["M"], records[0].E)
            constants.update(ic.to_dict())
            for c in ion_run_checks(records, ic):
                checks[c.name] = _check(c.passed, c.margin, c.detail)
            target = 0.5 * ic.rate_pred
        else:
            target = None
    else:
        # |s| <= 1/rho_minus and |w| <= M/rho_minus along every characteristic
        B = max(1.0, constants["M"]) / max(constants["rho_minus"], 1e-300)
        lin, lemma_rate = predicted_rates(cfg, B)
        lemma = LemmaConstants.from_params(cfg["nu"], cfg["background"]["cbar"], B)
        constants.update({"nu": lemma.nu, "cbar": lemma.cbar, "B": lemma.B, "lam": lemma.lam, "N": lemma.N,
                          "r2_pred": lemma_rate, "linear_rate": lin})
        target = lemma_rate
    if target is not None and status == "completed":
        for name, fit in fits.items():
            if fit["r"] is None:
                # a decayed series passes; a too-short one confirms nothing
                checks[f"rate_{name}"] = _check(fit["flag"] == "below floor", None, fit["flag"])
            else:
                checks[f"rate_{name}"] = _check(fit["r"] >= 0.95 * target, fit["r"] - 0.95 * target,
                                                f"fitted {fit['r']:.4g} vs predicted lower bound {target:.4g}")
    return {
        "scenario": "pde",
        "solver": cfg["solver"],
        "background": cfg["background"]["kind"],
        "status": status,
        "blowup_time": blowup_time,
        "constants": constants,
        "fits": fits,
        "checks": checks,
        "final_time": float(t[-1]) if t.size else 0.0,
    }


def phase_records(traj, constants, every):
    """Timeseries rows for a phase-plane run: ``E`` holds L and ``C_cross`` holds X."""
    out = []
    L = lyapunov_L(traj.w, traj.s, constants.cbar)
    X = cross_X(traj.w, traj.s, constants.cbar)
    y = L + constants.lam * X
    for i in range(0, len(traj), every):
        sup = {name: 0.0 for name in NORM_NAMES}
        sup["rho_minus_cbar"] = abs(1.0 / traj.s[i] - constants.cbar)
        sup["dx_u"] = abs(traj.w[i] / traj.s[i])
        out.append(DiagnosticsRecord(
            t=float(traj.t[i]), sup_norms=sup, E=float(L[i]), C_cross=float(X[i]), momentum=0.0,
            neutrality_residual=0.0, energy_dissipation_residual=0.0, y_sup=float(y[i]),
            rho_min=1.0 / traj.s[i], rho_max=1.0 / traj.s[i],
        ))
    return out


def run_phaseplane(cfg, outdir):
    bg = cfgmod.build_background(cfg)
    pp = cfg["phaseplane"]
    cbar = bg.cbar
    s0 = 1.0 / cbar if pp["s0"] is None else pp["s0"]
    x0 = pp["x"]
    c_plus = bg.bounds()[1]
    r1 = cfg["background"]["envelope"]["r1"] if bg.variant is Variant.EXPONENTIAL_DECAY else None
    try:
        traj = integrate(PhaseState(pp["w0"], s0), lambda t: bg(t, x0), cfg["nu"], cfg["dt"], cfg["T"],
                         c_plus=c_plus)
    except BlowUp as exc:
        write_json(outdir / "summary.json", {
            "scenario": "phaseplane", "status": "blowup", "blowup_time": exc.t_star,
            "constants": {"nu": cfg["nu"], "cbar": cbar}, "fits": {}, "checks": {},
        })
        log.warning("%s", exc)
        return EXIT_BLOWUP
    B = float(max(np.max(np.abs(traj.s)), np.max(np.abs(traj.w))))
    const = LemmaConstants.from_params(cfg["nu"], cbar, max(B, 1e-12), r1)
    traj.write_csv(outdir / "trajectory.csv", const)
    write_timeseries(outdir / "timeseries.csv", phase_records(traj, const, cfg["diag_every"]))
    checks, fits = {}, {}
    if bg.variant is not Variant.GENERAL_DECAY:
        rep = verify_lemma(traj, const, envelope=r1)
        checks["gronwall"] = _check(rep.gronwall_ok, rep.gronwall_margin)
        checks["comparability"] = _check(rep.comparability_ok, None)
        if rep.fitted_rate is None:
            checks["rate"] = _check(True, None, "below floor")
        else:
            checks["rate"] = _check(rep.rate_ok, rep.fitted_rate - 0.95 * const.r2_pred, "; ".join(rep.flags))
    y = combined_y(traj.w, traj.s, const)
    try:
        f = fit_decay_rate(traj.t, np.sqrt(np.maximum(y, 0.0)), floor=cfg["fit"]["floor"])
        fits["sqrt_y"] = f.to_dict()
    except InsufficientData:
        fits["sqrt_y"] = {"C": None, "r": None, "quality": None, "flag": "below floor"}
    write_json(outdir / "summary.json", {
        "scenario": "phaseplane", "status": "completed", "blowup_time": None,
        "constants": const.to_dict(), "fits": fits, "checks": checks,
    })
    return EXIT_OK


def execute(cfg, outdir):
    """Run a normalised config, write artifacts into ``outdir`` and return ``(code, summary)``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg["scenario"] == "phaseplane":
        code = run_phaseplane(cfg, outdir)
        return code, json.loads((outdir / "summary.json").read_text(encoding="utf-8"))
    if cfg["solver"] == "lagrangian":
        from .lagrangian import solver_from_config
    else:
        from .eulerian import solver_from_config
    solver = solver_from_config(cfg)
    rho0, u0 = cfgmod.initial_fields(cfg)
    code, status, t_star = EXIT_OK, "completed", None
    try:
        solver.fit(rho0, u0)
        records = solver.records_
    except BlowUp as exc:
        code, status, t_star = EXIT_BLOWUP, "blowup", exc.t_star
        records = getattr(exc, "records", [])
        log.warning("%s", exc)
    except EPLabError as exc:
        code, status = EXIT_SOLVER, "failed"
        records = getattr(exc, "records", [])
        log.error("solver failure: %s", exc)
    write_timeseries(outdir / "timeseries.csv", records)
    if records:
        summary = pde_summary(cfg, records, status, t_star)
    else:
        summary = {"scenario": "pde", "status": status, "blowup_time": t_star,
                   "constants": {}, "fits": {}, "checks": {}}
    write_json(outdir / "summary.json", summary)
    return code, summary


def cmd_run(config_path, output_dir):
    try:
        cfg = cfgmod.load(config_path)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code, summary = execute(cfg, output_dir)
    print(f"{summary['status']}: wrote {output_dir}")
    if summary.get("blowup_time") is not None:
        print(f"blow-up at t* = {summary['blowup_time']:.6g}")
    return code


def cmd_verify(suite_name, json_path=None):
    from . import verify

    if suite_name not in verify.SUITE_NAMES:
        print(f"error: unknown suite {suite_name!r}; choose from {', '.join(verify.SUITE_NAMES)}", file=sys.stderr)
        return EXIT_USAGE
    results = []
    for check in verify.suite_checks(suite_name):
        res = check()
        print(res.line(), flush=True)
        results.append(res)
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed")
    if json_path:
        payload = {"suite": suite_name, "passed": ok, "results": [r.to_dict() for r in results]}
        if json_path == "-":
            print(json.dumps(_jsonable(payload), indent=2))
        else:
            write_json(json_path, payload)
    return EXIT_OK if ok else EXIT_USAGE


def _sweep_one(args):
    cfg, param, value, outdir = args
    row = {"param": param, "value": value, "status": "failed", "blowup_time": None, "error": ""}
    try:
        c = cfgmod.set_param(cfg, param, value)
        code, summary = execute(c, outdir)
        row["status"] = summary.get("status", "failed")
        row["blowup_time"] = summary.get("blowup_time")
        for name, fit in summary.get("fits", {}).items():
            row[f"rate_{name}"] = fit.get("r")
        if c["scenario"] == "pde" and c["background"]["kind"] != "boltzmann":
            lin, lemma = predicted_rates(c, summary["constants"].get("B", 1.0) if summary.get("constants") else 1.0)
            row["predicted_linear"], row["predicted_lemma"] = lin, lemma
        elif summary.get("constants", {}).get("rate_pred") is not None:
            row["predicted_lemma"] = 0.5 * summary["constants"]["rate_pred"]
    except (ConfigError, EPLabError, ValueError) as exc:
        row["error"] = str(exc)
    return row


def cmd_sweep(config_path, param, values, output_dir, jobs=1):
    try:
        cfg = cfgmod.load(config_path)
        if param not in SWEEP_PARAMS:
            raise ConfigError(f"--param must be one of {', '.join(SWEEP_PARAMS)}; got {param!r}")
        vals = [float(v) for v in values.split(",") if v.strip()] if values else []
        if not vals:
            raise ConfigError("--values must list at least one number")
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: bad --values: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, param, v, out / f"run_{i:03d}") for i, v in enumerate(vals)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    rate_cols = sorted({k for r in rows for k in r if k.startswith("rate_")})
    cols = ["param", "value", "status", "blowup_time"] + rate_cols + ["predicted_linear", "predicted_lemma", "error"]

    def write(fh):
        wr = csv.writer(fh)
        wr.writerow(cols)
        for r in rows:
            wr.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r.get(c), float) else r[c])
                         for c in cols])

    _atomic_write(out / "rates.csv", write)
    for r in rows:
        print(f"{param}={r['value']:g}: {r['status']}" + (f" ({r['error']})" if r["error"] else ""))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="eplab", description="Damped Euler-Poisson decay experiments")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs in a sweep")
    p.add_argument("--seed", type=int, default=None, help="reserved; the solvers are deterministic")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config")
    r.add_argument("-o", "--output", required=True)
    v = sub.add_parser("verify", help="run a built-in acceptance suite")
    v.add_argument("suite")
    v.add_argument("--json", default=None, help="write machine-readable results here ('-' for stdout)")
    s = sub.add_parser("sweep", help="run one scenario per parameter value")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True)
    s.add_argument("-o", "--output", required=True)
    return p


def _configure_logging():
    level = os.environ.get("EPLAB_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.output)
    if args.command == "verify":
        return cmd_verify(args.suite, args.json)
    return cmd_sweep(args.config, args.param, args.values, args.output, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
