"""Command-line experiment runner.

Subcommands: simulate, kernel-check, envelope-check, front-fit, report.
Exit status: 0 when every verdict passes, 2 on a verdict failure, 1 on an
execution error (bad config, solver failure, missing files).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from fracfkpp import envelopes, fronts, kernels, semigroup, solver
from fracfkpp.fields import GridSpec, format_float, read_snapshot, write_snapshot

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "main"]

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2

DATUM_KINDS = ("CanonicalDecaying", "CanonicalMonotone", "TruncatedPower", "Heaviside", "FromFile")


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)
        self.line = line


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _fmt_floats(values):
    return ", ".join(format_float(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation study.  ``to_text`` and ``parse_config`` are inverses."""

    name: str = "experiment"
    alpha: float = 0.5
    nonlinearity: str = "logistic"
    rate: float = 1.0
    datum: str = "CanonicalDecaying"
    a0: float = 1.0
    r0: float = 1.0
    datum_path: str = ""
    half_width: float = 1024.0
    num_points: int = 16384
    dt: float = 0.01
    t_end: float = 1.0
    snapshot_every: float = 0.1
    save_times: tuple = ()
    levels: tuple = (0.1, 0.5, 0.9)
    side: str = "auto"
    window: tuple = ()
    tail_fraction: float = 0.6
    clearance: float = 50.0
    tolerance: float = 0.05
    expected: Optional[float] = None
    output: str = ""

    # -- derived objects --------------------------------------------------
    @property
    def grid(self):
        return GridSpec(self.half_width, self.num_points)

    @property
    def schedule(self):
        return solver.EvolveSchedule.every(self.dt, self.t_end, self.snapshot_every) \
            if self.t_end > 0 else solver.EvolveSchedule(self.dt, 0.0, (0.0,))

    @property
    def reaction(self):
        if self.nonlinearity == "logistic":
            return solver.KppNonlinearity.logistic()
        return solver.KppNonlinearity.scaled_logistic(self.rate)

    @property
    def policy(self):
        return fronts.FitPolicy(self.tail_fraction, self.clearance)

    def fit_side(self):
        if self.side != "auto":
            return self.side
        return "left" if self.datum in ("CanonicalMonotone", "Heaviside") else "right"

    def expected_rate(self):
        if self.expected is not None:
            return self.expected
        fp0 = self.reaction.fprime0
        if self.datum in ("CanonicalMonotone", "Heaviside"):
            return fronts.sigma_double_star(self.alpha, fp0)
        if self.datum in ("CanonicalDecaying", "TruncatedPower"):
            return fronts.sigma_star(self.alpha, fp0)
        return None

    def initial_field(self, base_dir=Path(".")):
        g = self.grid
        if self.datum == "CanonicalDecaying":
            return semigroup.canonical_decaying_datum(self.alpha, g)
        if self.datum == "CanonicalMonotone":
            return semigroup.canonical_monotone_datum(self.alpha, g)
        if self.datum == "TruncatedPower":
            return semigroup.truncated_power_datum(self.alpha, self.a0, self.r0, g)
        if self.datum == "Heaviside":
            return semigroup.heaviside_datum(g)
        u, _ = read_snapshot(Path(base_dir) / self.datum_path)
        if u.grid != g:
            raise ConfigError(f"snapshot {self.datum_path} grid does not match [grid]")
        return u

    # -- serialization ------------------------------------------------------
    def to_text(self):
        lines = [
            "[experiment]",
            f"name = {self.name}",
        ]
        if self.output:
            lines.append(f"output = {self.output}")
        lines += ["", "[model]", f"alpha = {format_float(self.alpha)}",
                  f"nonlinearity = {self.nonlinearity}", f"rate = {format_float(self.rate)}",
                  "", "[datum]", f"kind = {self.datum}",
                  f"a0 = {format_float(self.a0)}", f"r0 = {format_float(self.r0)}"]
        if self.datum_path:
            lines.append(f"path = {self.datum_path}")
        lines += ["", "[grid]", f"half_width = {format_float(self.half_width)}",
                  f"num_points = {self.num_points}",
                  "", "[schedule]", f"dt = {format_float(self.dt)}",
                  f"t_end = {format_float(self.t_end)}",
                  f"snapshot_every = {format_float(self.snapshot_every)}"]
        if self.save_times:
            lines.append(f"save_times = {_fmt_floats(self.save_times)}")
        lines += ["", "[fronts]", f"levels = {_fmt_floats(self.levels)}", f"side = {self.side}"]
        if self.window:
            lines.append(f"window = {_fmt_floats(self.window)}")
        lines += [f"tail_fraction = {format_float(self.tail_fraction)}",
                  f"clearance = {format_float(self.clearance)}",
                  f"tolerance = {format_float(self.tolerance)}"]
        if self.expected is not None:
            lines.append(f"expected = {format_float(self.expected)}")
        return "\n".join(lines) + "\n"


# (section, key) -> (field name, converter)
_SCHEMA = {
    ("experiment", "name"): ("name", str),
    ("experiment", "output"): ("output", str),
    ("model", "alpha"): ("alpha", float),
    ("model", "nonlinearity"): ("nonlinearity", str),
    ("model", "rate"): ("rate", float),
    ("datum", "kind"): ("datum", str),
    ("datum", "a0"): ("a0", float),
    ("datum", "r0"): ("r0", float),
    ("datum", "path"): ("datum_path", str),
    ("grid", "half_width"): ("half_width", float),
    ("grid", "num_points"): ("num_points", int),
    ("schedule", "dt"): ("dt", float),
    ("schedule", "t_end"): ("t_end", float),
    ("schedule", "snapshot_every"): ("snapshot_every", float),
    ("schedule", "save_times"): ("save_times", _floats),
    ("fronts", "levels"): ("levels", _floats),
    ("fronts", "side"): ("side", str),
    ("fronts", "window"): ("window", _floats),
    ("fronts", "tail_fraction"): ("tail_fraction", float),
    ("fronts", "clearance"): ("clearance", float),
    ("fronts", "tolerance"): ("tolerance", float),
    ("fronts", "expected"): ("expected", float),
}


def _line_index(text):
    """(section, key) -> 1-based line number, by a light scan of the source."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            index[(section, None)] = no
        elif line and line[0] not in "#;" and section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    index[(section, line.split(sep, 1)[0].strip().lower())] = no
                    break
    return index


def parse_config(text, path="<config>", check_files=True, base_dir=None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", path, line) from None
    except configparser.Error as exc:
        raise ConfigError(exc.message, path, getattr(exc, "lineno", None)) from None
    lines = _line_index(text)
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            line = lines.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown key '{key}' in section [{section}]", path, line)
            name, conv = spec
            try:
                values[name] = conv(raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for '{key}'", path, line) from None
    cfg = ExperimentConfig(**values)

    def fail(msg, section, key):
        raise ConfigError(msg, path, lines.get((section, key), lines.get((section, None))))

    if not 0.0 < cfg.alpha <= 1.0:
        fail("alpha must lie in (0, 1]", "model", "alpha")
    if cfg.nonlinearity not in ("logistic", "scaled_logistic"):
        fail("nonlinearity must be 'logistic' or 'scaled_logistic'", "model", "nonlinearity")
    if cfg.datum not in DATUM_KINDS:
        fail(f"datum kind must be one of {', '.join(DATUM_KINDS)}", "datum", "kind")
    if cfg.datum == "FromFile":
        if not cfg.datum_path:
            fail("FromFile needs 'path'", "datum", "kind")
        full = Path(base_dir or ".") / cfg.datum_path
        if check_files and not full.is_file():
            fail(f"datum file {cfg.datum_path} does not exist", "datum", "path")
    if any(not 0.0 < lv < 1.0 for lv in cfg.levels) or not cfg.levels:
        fail("levels must lie in (0, 1)", "fronts", "levels")
    if cfg.side not in ("auto", "left", "right"):
        fail("side must be auto, left or right", "fronts", "side")
    if cfg.window and len(cfg.window) != 2:
        fail("window needs two times", "fronts", "window")
    try:
        cfg.grid
    except ValueError as exc:
        fail(str(exc), "grid", "num_points")
    try:
        sched = cfg.schedule
        sched.validate_for(cfg.reaction)
    except ValueError as exc:
        fail(str(exc), "schedule", "dt")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config file not found", path)
    return parse_config(path.read_text(), path, base_dir=path.parent)


# ---------------------------------------------------------------------------

def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(x):
    """JSON-friendly float: non-finite values become None."""
    return None if x is None or not math.isfinite(x) else float(x)


def _trace_name(level):
    return f"trace_lambda_{float(level)!r}.csv"


def run_simulation(cfg: ExperimentConfig, out_dir, base_dir=Path(".")):
    """Run one configured study and write all artifacts; returns the report dict."""
    out = Path(out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_text())
    timings = {}
    start = time.perf_counter()
    u0 = cfg.initial_field(base_dir)
    timings["datum_seconds"] = time.perf_counter() - start

    tracker = fronts.FrontTracker(cfg.levels)
    save_steps = {int(round(t / cfg.dt)) for t in cfg.save_times}
    written = []

    def observer(u):
        tracker(u)
        if int(round(u.time_stamp / cfg.dt)) in save_steps:
            name = f"snapshots/snapshot_t{u.time_stamp:010.4f}.csv"
            write_snapshot(u, out / name, cfg.alpha)
            written.append({"t": u.time_stamp, "path": name})

    start = time.perf_counter()
    traj = solver.evolve(u0, cfg.schedule, cfg.alpha, cfg.reaction, observer=observer,
                         keep_snapshots=False)
    timings["evolve_seconds"] = time.perf_counter() - start

    side = cfg.fit_side()
    expected = cfg.expected_rate()
    levels = []
    for lv, trace in tracker.traces.items():
        fronts.write_trace(trace, out / _trace_name(lv))
        entry = {"level": lv, "side": side, "trace": _trace_name(lv), "estimate": None,
                 "verdict": None, "note": ""}
        if cfg.t_end > 0:
            try:
                est = fronts.fit_exponential_rate(trace, side, cfg.window or None, cfg.policy)
                entry["estimate"] = est.to_dict()
                if expected is not None:
                    entry["verdict"] = fronts.theorem_verdict(
                        est, expected, cfg.tolerance, f"lambda={format_float(lv)}").to_dict()
                if expected is not None:
                    diag = fronts.heuristic_prefactor_diagnostic(trace, expected, cfg.alpha, side)
                    sel = (diag.times >= est.window[0]) & (diag.times <= est.window[1])
                    entry["prefactor"] = {"t": diag.times[sel], "x_exp": diag.plain[sel],
                                          "x_exp_tpow": diag.heuristic[sel]}
            except fronts.FitError as exc:
                entry["note"] = str(exc)
                if expected is not None:
                    entry["verdict"] = {"label": f"lambda={format_float(lv)}", "passed": False,
                                        "slope": None, "expected": expected,
                                        "tol": cfg.tolerance}
        else:
            xl, xr = fronts.extract_level_sets(u0, lv)
            entry["initial_crossings"] = [xl, xr]
            entry["note"] = "zero-length schedule: initial state only"
        levels.append(entry)

    report = {
        "config": cfg.to_text(),
        "alpha": cfg.alpha,
        "expected_rate": expected,
        "expected_label": ("sigma_double_star" if cfg.datum in ("CanonicalMonotone", "Heaviside")
                           else "sigma_star"),
        "fit_side": side,
        "levels": levels,
        "initial": {"min": float(u0.values.min()), "max": float(u0.values.max()),
                    "tail_left": u0.left_tail.describe(), "tail_right": u0.right_tail.describe()},
        "clamp": {"max_overshoot": traj.max_overshoot, "steps": traj.steps},
        "all_passed": all(e["verdict"]["passed"] for e in levels if e["verdict"] is not None),
    }
    _dump_json(report, out / "report.json")
    manifest = {
        "snapshots": written,
        "schedule": {"dt": cfg.dt, "t_end": cfg.t_end, "snapshot_every": cfg.snapshot_every},
        "nonlinearity": cfg.reaction.describe() if cfg.nonlinearity == "logistic"
        else {"kind": "Custom", "rate": cfg.rate},
        "alpha": cfg.alpha,
        "clamp": {"max_overshoot": traj.max_overshoot, "range_limits": list(solver.RANGE_LIMITS)},
    }
    _dump_json(manifest, out / "manifest.json")
    # wall-clock figures vary between runs, so they live outside the deterministic files
    _dump_json(timings, out / "timings.json")
    return report


REQUIRED_RUN_FILES = ("report.json", "config.ini")


def summarize_run(run_dir):
    """Summary table plus machine JSON; raises FileNotFoundError listing missing files."""
    run = Path(run_dir)
    missing = [name for name in REQUIRED_RUN_FILES if not (run / name).is_file()]
    if missing:
        raise FileNotFoundError("missing run artifacts: " + ", ".join(missing))
    report = json.loads((run / "report.json").read_text())
    warnings, rows = [], []
    for entry in report["levels"]:
        trace_path = run / entry["trace"]
        if not trace_path.is_file():
            warnings.append(f"trace file {entry['trace']} missing; level skipped")
            continue
        est = entry.get("estimate")
        verdict = entry.get("verdict")
        if est is None:
            warnings.append(f"level {entry['level']}: no rate estimate ({entry.get('note', '')})")
        rows.append({
            "level": entry["level"],
            "slope": est["slope"] if est else None,
            "expected": report.get("expected_rate"),
            "verdict": None if verdict is None else ("PASS" if verdict["passed"] else "FAIL"),
            "prefactor": entry.get("prefactor"),
        })
    lines = [f"{'level':>8} {'slope':>10} {'expected':>10} verdict"]
    for r in rows:
        slope = "-" if r["slope"] is None else f"{r['slope']:.4f}"
        exp = "-" if r["expected"] is None else f"{r['expected']:.4f}"
        lines.append(f"{r['level']:>8g} {slope:>10} {exp:>10} {r['verdict'] or '-'}")
    for r in rows:
        pf = r["prefactor"]
        if pf:
            plain, heur = pf["x_exp"], pf["x_exp_tpow"]
            lines.append(f"level {r['level']:g}: x e^(-sigma t) in [{min(plain):.4g}, {max(plain):.4g}],"
                         f" with t-power in [{min(heur):.4g}, {max(heur):.4g}]")
    lines += [f"warning: {w}" for w in warnings]
    summary = {"rows": rows, "warnings": warnings, "all_passed": report.get("all_passed")}
    return "\n".join(lines) + "\n", summary


# ---------------------------------------------------------------------------
# kernel-check

_KERNEL_X = tuple(np.concatenate(([0.0], np.geomspace(0.1, 100.0, 13))))


def kernel_suite(alpha, refine=2, regression=None):
    """Normalization, symmetry, scale invariance, Chapman-Kolmogorov and comparability."""
    spec = kernels.KernelSpec.for_alpha(alpha)
    results = []

    def record(name, value, limit, passed=None, **extra):
        ok = bool(value <= limit) if passed is None else bool(passed)
        results.append({"suite": name, "value": _clean(value), "limit": limit, "passed": ok, **extra})

    norm = max(kernels.normalization_error(spec, t) for t in (0.5, 1.0, 2.0))
    record("normalization", norm, 1e-6)
    x = np.array(_KERNEL_X)
    sym = max(float(np.max(np.abs(kernels.eval_stable_kernel(spec, t, x)
                                  - kernels.eval_stable_kernel(spec, t, -x)))) for t in (0.5, 1.0, 2.0))
    record("symmetry", sym, 1e-10)
    scale = 0.0
    for t in (0.5, 2.0, 5.0):
        s = t ** (0.5 / alpha)
        direct = kernels.eval_stable_kernel(spec, t, x)
        scaled = kernels.eval_stable_kernel(spec, 1.0, x / s) / s
        scale = max(scale, float(np.max(np.abs(direct - scaled))))
    record("scale_invariance", scale, 1e-8)
    if spec.strategy is kernels.Strategy.FOURIER:
        ck, ck_lim = kernels.chapman_kolmogorov_residual(spec, 0.5, 1.5, 2.0), 1e-5
    elif alpha == 1.0:
        ck, ck_lim = kernels.chapman_kolmogorov_residual(spec, 1.0, 1.0, 0.0), 1e-8
    else:
        ck, ck_lim = kernels.chapman_kolmogorov_residual(spec, 1.0, 1.0, 0.0), 1e-6
    record("chapman_kolmogorov", ck, ck_lim)
    coarse = kernels.verify_p3(spec, kernels.default_probes())
    fine = kernels.verify_p3(spec, kernels.default_probes(n_t=9 * refine - (refine - 1),
                                                           n_x=25 * refine - (refine - 1)))
    if alpha == 1.0:
        # the Gaussian has no power-law lower envelope, so only p <= B q is meaningful
        drift = abs(fine.max_upper_ratio / coarse.max_upper_ratio - 1.0)
        record("comparability_upper", drift, 0.05, measured_upper=coarse.max_upper_ratio,
               refined_upper=fine.max_upper_ratio)
    else:
        drift = abs(fine.measured_B / coarse.measured_B - 1.0)
        record("comparability_B", drift, 0.05,
               passed=math.isfinite(fine.measured_B) and drift <= 0.05,
               measured_B=coarse.measured_B, refined_B=fine.measured_B)
    if regression is not None and math.isfinite(regression.get("measured_B") or math.nan):
        rel = abs(coarse.measured_B / regression["measured_B"] - 1.0)
        record("regression_B", rel, 1e-6)
    tails = None
    if alpha < 1.0:
        tails = [float(v) for v in kernels.tail_limit_sequence(spec)]
    return results, {"measured_B": _clean(coarse.measured_B), "tail_sequence": tails}


# ---------------------------------------------------------------------------

def _threads(args):
    n = args.threads
    if n is None and os.environ.get("FKPP_THREADS"):
        try:
            n = int(os.environ["FKPP_THREADS"])
        except ValueError:
            raise ConfigError("FKPP_THREADS must be an integer") from None
    if n is not None:
        if n < 1:
            raise ConfigError("--threads must be positive")
        semigroup.set_default_workers(n)


def cmd_simulate(args):
    if not args.config:
        raise ConfigError("simulate needs --config PATH")
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output or f"runs/{cfg.name}")
    report = run_simulation(cfg, out, Path(args.config).parent)
    text, _ = summarize_run(out)
    print(text, end="")
    print(f"expected rate: {report['expected_rate']}  ({report['expected_label']})")
    if args.strict and not report["all_passed"]:
        return EXIT_VERDICT
    return EXIT_OK


def cmd_kernel_check(args):
    out = Path(args.out) if args.out else None
    regression = None
    reg_path = out / f"kernel_regression_alpha_{args.alpha!r}.json" if out else None
    if reg_path is not None and reg_path.is_file():
        regression = json.loads(reg_path.read_text())
    results, constants = kernel_suite(args.alpha, args.refine, regression)
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        value = "n/a" if r["value"] is None else f"{r['value']:.3e}"
        print(f"{status} {r['suite']}: {value} (limit {r['limit']:g})")
    if constants["measured_B"] is None:
        print("measured B = inf (no two-sided power-law bound)")
    else:
        print(f"measured B = {constants['measured_B']:.10g}")
    if constants["tail_sequence"]:
        print("tail limit sequence:", ", ".join(f"{v:.6g}" for v in constants["tail_sequence"]))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _dump_json({"alpha": args.alpha, "results": results, **constants},
                   out / f"kernel_check_alpha_{args.alpha!r}.json")
        if regression is None and constants["measured_B"] is not None:
            _dump_json({"measured_B": constants["measured_B"]}, reg_path)
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_VERDICT


def cmd_envelope_check(args):
    reports = []
    if args.a is not None:
        env = envelopes.ExplicitEnvelope(args.a, args.b0, args.role)
        reports.append(envelopes.verify_envelope_numerically(env))
    else:
        for env in (envelopes.ExplicitEnvelope(1.0, 2.0, "Super"),
                    envelopes.ExplicitEnvelope(0.4, 2.0, "Sub")):
            reports.append(envelopes.verify_envelope_numerically(env))
    payload = {"envelopes": [json.loads(r.to_json()) for r in reports]}
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.envelope['role']} a={r.envelope['a']:g} b0={r.envelope['b0']:g}: "
              f"worst deviation {r.worst_deviation:.3e} at {r.worst_probe} (tol {r.tolerance:.1e})")
    if args.sigma is not None:
        f = solver.KppNonlinearity.logistic()
        c_meas = envelopes.schedule_lower_constant(args.alpha)
        sched = envelopes.compute_expr_schedule(args.alpha, f, args.sigma, c_meas)
        state = envelopes.iterate_expr_envelope(envelopes.initial_state(sched, 1.0), 2)
        payload["schedule"] = state.to_dict()
        print(f"schedule: t0={sched.t0:g} eps0={sched.eps0:.6g} delta={sched.delta:.6g} "
              f"markers={', '.join(f'{m:.6g}' for m in state.markers)}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _dump_json(payload, Path(args.out) / "envelope_report.json")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERDICT


def cmd_front_fit(args):
    trace = fronts.read_trace(args.trace)
    window = tuple(args.window) if args.window else None
    est = fronts.fit_exponential_rate(trace, args.side, window)
    payload = {"estimate": est.to_dict()}
    line = f"slope {est.slope:.6f} over [{est.window[0]:g}, {est.window[1]:g}] ({est.sample_count} samples)"
    code = EXIT_OK
    if args.expected is not None:
        verdict = fronts.theorem_verdict(est, args.expected, args.tol)
        payload["verdict"] = verdict.to_dict()
        line += f"; expected {args.expected:g} +- {args.tol:g}: {'PASS' if verdict.passed else 'FAIL'}"
        code = EXIT_OK if verdict.passed else EXIT_VERDICT
    print(line)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _dump_json(payload, Path(args.out) / f"fit_{Path(args.trace).stem}.json")
    return code


def cmd_report(args):
    run = Path(args.run_dir)
    text, summary = summarize_run(run)
    print(text, end="")
    target = Path(args.out) if args.out else run
    target.mkdir(parents=True, exist_ok=True)
    (target / "summary.txt").write_text(text)
    _dump_json(summary, target / "summary.json")
    return EXIT_OK if summary.get("all_passed", True) else EXIT_VERDICT


def build_parser():
    p = argparse.ArgumentParser(prog="fracfkpp", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="FFT worker threads (falls back to FKPP_THREADS)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--strict", action="store_true", help="exit 2 on any failed verdict")
    common.add_argument("--config", default=None, help="experiment config file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a configured experiment")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("kernel-check", parents=[common], help="kernel property suites")
    k.add_argument("--alpha", type=float, default=0.5)
    k.add_argument("--refine", type=int, default=2, help="probe refinement factor for B")
    k.set_defaults(func=cmd_kernel_check)

    e = sub.add_parser("envelope-check", parents=[common], help="explicit envelope residuals")
    e.add_argument("--a", type=float, default=None)
    e.add_argument("--b0", type=float, default=2.0)
    e.add_argument("--role", choices=("Sub", "Super"), default="Super")
    e.add_argument("--sigma", type=float, default=None, help="also build the iteration schedule")
    e.add_argument("--alpha", type=float, default=0.5, help="alpha for the schedule")
    e.set_defaults(func=cmd_envelope_check)

    f = sub.add_parser("front-fit", parents=[common], help="fit a rate to a trace CSV")
    f.add_argument("trace")
    f.add_argument("--side", choices=("left", "right"), default="right")
    f.add_argument("--window", type=float, nargs=2, default=None)
    f.add_argument("--expected", type=float, default=None)
    f.add_argument("--tol", type=float, default=0.05)
    f.set_defaults(func=cmd_front_fit)

    r = sub.add_parser("report", parents=[common], help="summarize a finished run")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _threads(args)
        return args.func(args)
    except (ConfigError, FileNotFoundError, fronts.FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except solver.StepError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
