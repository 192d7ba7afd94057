"""Scenario runner.

Verbs: run, sweep, list, describe, selftest.  A scenario is either a
catalog id or an INI config file (schema pi-scenario-ini/1) declaring an
inline system; runs emit a trajectory CSV plus a JSON summary, written
atomically so concurrent sweeps never interleave.  Identical inputs
produce byte-identical outputs; wall-clock timing is reported only when
asked for, to keep reruns comparable.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import json
import math
import os
import sys
import time

import numpy as np

from . import catalog, expr as E, manifold as M, psf as P, sim, synth
from .catalog import CatalogEntry
from .sysmodel import ControlAffineSystem, DuplicateVariable, SymbolMismatch

SCHEMA = "pi-scenario-ini/1"

CONFIG_SECTIONS = {
    "scenario", "system", "params", "manifold", "rates", "initial",
    "integrator", "controller", "plant", "output",
}

SYNTH_ERRORS = (
    synth.UnactuatedManifold,
    synth.NonpositiveRate,
    synth.CrossTermMismatch,
    P.ZeroGain,
    P.ConnectionSingular,
    M.DegenerateMetric,
    M.NonIntegrableConnection,
)


class CliError(Exception):
    """Carries the exit code the verb should finish with."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# scenario loading


def _parse_pairs(items, what: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise CliError(2, f"{what} expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise CliError(2, f"{what} {name.strip()!r}: bad number "
                           f"{value!r}") from None
    return out


def _parse_x0(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise CliError(2, f"bad initial condition {text!r}") from None


def _split_exprs(text: str) -> list[str]:
    parts = [p.strip() for p in text.split(";")]
    if any(not p for p in parts):
        raise CliError(2, f"empty expression in {text!r}")
    return parts


def _config_floats(section) -> dict[str, float]:
    out = {}
    for name, value in section.items():
        try:
            out[name] = float(value)
        except ValueError:
            raise CliError(2, f"bad number for {name!r}: {value!r}") from None
    return out


def _build_catalog_entry(eid: str, overrides: dict[str, float]):
    try:
        return catalog.build(eid, **overrides)
    except SYNTH_ERRORS as err:
        raise CliError(3, f"synthesis failed: {err}") from err
    except catalog.UnknownId:
        known = ", ".join(catalog.list())
        raise CliError(2, f"unknown scenario {eid!r} (known: {known})") \
            from None
    except ValueError as err:
        raise CliError(2, str(err)) from None


def _inline_entry(cfg: configparser.ConfigParser, name: str) -> CatalogEntry:
    if not cfg.has_section("manifold"):
        raise CliError(2, "inline system needs a [manifold] section")
    params = _config_floats(cfg["params"]) if cfg.has_section("params") \
        else {}
    rates = _config_floats(cfg["rates"]) if cfg.has_section("rates") else {}
    sysc = cfg["system"]
    state = tuple(s.strip() for s in sysc.get("state", "").split(",")
                  if s.strip())
    if not state:
        raise CliError(2, "[system] state must list the state names")
    time_symbol = sysc.get("time", "").strip() or None
    try:
        f = tuple(E.parse(p) for p in _split_exprs(sysc.get("f", "")))
        g = tuple(E.parse(p) for p in _split_exprs(sysc.get("g", "")))
        system = ControlAffineSystem(state, f=f, g=g, params=params,
                                     time_symbol=time_symbol)
    except (E.SyntaxError, SymbolMismatch, DuplicateVariable,
            ValueError) as err:
        raise CliError(2, f"bad inline system: {err}") from None

    man = cfg["manifold"]
    has_phi, has_psi1 = man.get("phi"), man.get("psi1")
    if bool(has_phi) == bool(has_psi1):
        raise CliError(2, "[manifold] needs exactly one of phi or psi1")
    if "alpha" not in rates:
        raise CliError(2, "[rates] must set alpha")
    try:
        if has_phi:
            phi = E.parse(has_phi)
            system.check_expr(phi)
            law = synth.synthesize(system, phi, rates["alpha"])
            components = (phi,)
            route = "direct"
        else:
            psi1 = E.parse(has_psi1)
            system.check_expr(psi1)
            if "alpha_1" in rates:
                raise CliError(2, "alpha_1 is part of the psi1 choice;"
                               " give alpha_2, ..., alpha")
            stages = sorted((k for k in rates if k.startswith("alpha_")
                             and k.split("_", 1)[1].isdigit()),
                            key=lambda k: int(k.split("_", 1)[1]))
            seq = tuple(rates[k] for k in stages) + (rates["alpha"],)
            cs = synth.synthesize_cascade(system, psi1, seq)
            law = cs.law
            components = cs.manifolds
            route = "cascade"
    except CliError:
        raise
    except (E.SyntaxError, SymbolMismatch) as err:
        raise CliError(2, f"bad manifold: {err}") from None
    except SYNTH_ERRORS as err:
        raise CliError(3, f"synthesis failed: {err}") from err
    except ValueError as err:
        raise CliError(3, f"synthesis failed: {err}") from err

    x0s = ()
    if cfg.has_section("initial") and cfg["initial"].get("x0"):
        x0 = _parse_x0(cfg["initial"]["x0"])
        if len(x0) != len(state):
            raise CliError(2, f"x0 has {len(x0)} entries for "
                           f"{len(state)} states")
        x0s = (x0,)
    if not x0s:
        raise CliError(2, "[initial] x0 is required for inline systems")
    return CatalogEntry(
        id=name,
        title=f"inline system from config ({name})",
        behavior="GAS-to-origin",
        route=route,
        system=system,
        components=components,
        phi=components[-1],
        law=law,
        alphas=dict(rates),
        rate=rates["alpha"],
        x0s=x0s,
    )


def _load_config(path: str) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.optionxform = str
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except OSError as err:
        raise CliError(2, f"cannot read config: {err}") from None
    except configparser.Error as err:
        raise CliError(2, f"config parse error: {err}") from None
    unknown = set(cfg.sections()) - CONFIG_SECTIONS
    if unknown:
        raise CliError(2, f"unknown config section(s): "
                       f"{', '.join(sorted(unknown))}")
    declared = cfg.get("scenario", "schema", fallback=SCHEMA)
    if declared != SCHEMA:
        raise CliError(2, f"unsupported schema {declared!r} "
                       f"(expected {SCHEMA})")
    return cfg


class Scenario:
    """A resolved scenario: entry plus run settings from config/flags."""

    def __init__(self, entry, x0, dt, t_end, method, controller, plant,
                 out_dir, stem):
        self.entry = entry
        self.x0 = x0
        self.dt = dt
        self.t_end = t_end
        self.method = method
        self.controller = controller
        self.plant = plant
        self.out_dir = out_dir
        self.stem = stem


def _resolve(args, overrides=None) -> Scenario:
    cfg = None
    if os.path.exists(args.scenario) or args.scenario.endswith(".ini"):
        cfg = _load_config(args.scenario)

    merged = dict(overrides or {})
    ctrl = {}
    plant = {}
    dt, t_end, method = 1e-3, 20.0, "rk4"
    out_dir = stem = None

    if cfg is not None:
        if cfg.has_section("rates"):
            merged.update(_config_floats(cfg["rates"]))
        if cfg.has_section("controller"):
            ctrl.update(_config_floats(cfg["controller"]))
        if cfg.has_section("plant"):
            plant.update(_config_floats(cfg["plant"]))
        if cfg.has_section("integrator"):
            integ = cfg["integrator"]
            try:
                dt = integ.getfloat("dt", dt)
                t_end = integ.getfloat("t_end", t_end)
            except ValueError as err:
                raise CliError(2, f"bad integrator setting: {err}") \
                    from None
            method = integ.get("method", method)
        if cfg.has_section("output"):
            out_dir = cfg["output"].get("dir") or None
            stem = cfg["output"].get("stem") or None

        eid = cfg.get("scenario", "id", fallback="").strip()
        if eid and cfg.has_section("system"):
            raise CliError(2, "config gives both a scenario id and an "
                           "inline [system]")
        if eid:
            if cfg.has_section("params"):
                merged.update(_config_floats(cfg["params"]))
            entry = _build_catalog_entry(eid, merged)
            x0 = entry.x0s[0]
            if cfg.has_section("initial") and cfg["initial"].get("x0"):
                x0 = _parse_x0(cfg["initial"]["x0"])
        else:
            if not cfg.has_section("system"):
                raise CliError(2, "config needs scenario id or [system]")
            if overrides:
                raise CliError(2, "build overrides need a catalog scenario"
                               " (inline systems take rates from [rates])")
            name = cfg.get("scenario", "name", fallback="").strip() \
                or os.path.splitext(os.path.basename(args.scenario))[0]
            entry = _inline_entry(cfg, name)
            x0 = entry.x0s[0]
    else:
        entry = _build_catalog_entry(args.scenario, merged)
        x0 = entry.x0s[0]

    if getattr(args, "x0", None):
        x0 = _parse_x0(args.x0)
    if len(x0) != entry.system.dim:
        raise CliError(2, f"x0 has {len(x0)} entries for "
                       f"{entry.system.dim} states")
    ctrl.update(_parse_pairs(getattr(args, "controller", None),
                             "--controller"))
    plant.update(_parse_pairs(getattr(args, "plant", None), "--plant"))
    unknown = (set(ctrl) | set(plant)) - set(entry.system.params)
    if unknown:
        known = ", ".join(sorted(entry.system.params)) or "none"
        raise CliError(2, f"unknown parameter(s): {', '.join(sorted(unknown))} "
                       f"(this system has: {known})")

    if getattr(args, "dt", None) is not None:
        dt = args.dt
    if getattr(args, "t_end", None) is not None:
        t_end = args.t_end
    if getattr(args, "method", None) is not None:
        method = args.method
    if method not in ("rk4", "rk45"):
        raise CliError(2, f"unknown method {method!r}")
    if dt <= 0 or t_end <= 0:
        raise CliError(2, "dt and t_end must be positive")

    if getattr(args, "out", None):
        out_dir = args.out
    if out_dir is None:
        out_dir = os.environ.get("PANDI_OUT") or "."
    if getattr(args, "stem", None):
        stem = args.stem
    if stem is None:
        stem = entry.id
    return Scenario(entry, tuple(float(v) for v in x0), dt, t_end, method,
                    ctrl, plant, out_dir, stem)


# ---------------------------------------------------------------------------
# running and reporting


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, tr, state) -> None:
    phis = sorted((n for n in tr.observables if n.startswith("phi_")),
                  key=lambda n: int(n.split("_")[1]))
    names = ["t", *state, "u", *phis, "S"]
    cols = [tr.t] + [tr.x[:, i] for i in range(len(state))] \
        + [tr.observables[n] for n in ("u", *phis, "S")]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join("%.17g" % v for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _fit(t, series, expected):
    try:
        rep = sim.fit_exponential(t, np.abs(series), expected_rate=expected)
    except sim.InsufficientData:
        return {"expected": expected, "fitted": None, "max_rel_dev": None,
                "passed": None}
    return {"expected": expected, "fitted": float(rep.rate),
            "max_rel_dev": float(rep.max_rel_dev),
            "passed": bool(rep.passed)}


def _phi_series(entry, tr):
    table = {k: E.Const(v) for k, v in entry.system.params.items()}
    fn = sim.compile_scalar(E.subst(entry.phi, table), entry.system.state,
                            entry.system.time_symbol)
    return np.array([fn(t, row) for t, row in zip(tr.t, tr.x)])


def _decay_flag(entry, tr, mismatch: bool):
    if mismatch:
        return None
    phi = _phi_series(entry, tr)
    s = tr.column("S")
    try:
        dev = max(sim.decay_deviation(tr.t, phi, entry.rate / 2.0),
                  sim.decay_deviation(tr.t, s, entry.rate))
    except sim.InsufficientData:
        return None
    return bool(dev <= 1e-5)


def _equivalence_flag(entry):
    if entry.reference is None:
        return None
    names = set(entry.system.state) | set(entry.system.params)
    if entry.system.time_symbol:
        names.add(entry.system.time_symbol)
    dev = E.max_deviation(entry.law.u, entry.reference, sorted(names),
                          n=300, seed=0, box=entry.sample_box,
                          boxes=entry.sample_boxes or None,
                          avoid=entry.avoid + (entry.law.guard,))
    return bool(dev <= 1e-9)


def _invariance_flag(entry):
    try:
        x0 = catalog.on_manifold(entry)
    except (ValueError, ArithmeticError):
        return None
    env = dict(entry.system.params)
    env.update(zip(entry.system.state, x0))
    if entry.system.time_symbol:
        env[entry.system.time_symbol] = 0.0
    try:
        res = M.invariance_residual(entry.system, entry.law,
                                    M.ImplicitManifold((entry.phi,)), env)
    except (M.NotOnManifold, ArithmeticError):
        return None
    return bool(res <= 1e-9)


def _settling(entry, tr):
    if entry.behavior == "periodic-orbit" or tr.reason != "completed":
        return None
    if entry.behavior == "tracking":
        value = sim.settling_time(tr.t, tr.x, lambda row: [row[0]], 1e-2)
    else:
        target = entry.equilibrium or tuple([0.0] * entry.system.dim)
        value = sim.settling_time(tr.t, tr.x, target, 1e-3)
    return None if value is None else float(value)


def _orbit(entry, tr):
    if entry.behavior != "periodic-orbit" or tr.reason != "completed":
        return None
    rep = sim.detect_orbit(tr.t, tr.x[:, 0])
    if rep is None:
        return None
    return {"period": float(rep.period), "amplitude": float(rep.amplitude),
            "drift": float(rep.drift), "cycles": int(rep.cycles)}


def _robustness_flag(entry, tr):
    if tr.reason != "completed":
        return False
    if entry.behavior == "tracking":
        half = tr.t >= 0.5 * tr.t[-1]
        return bool(np.max(np.abs(tr.x[half, 0])) <= 1e-2)
    target = np.asarray(entry.equilibrium
                        or [0.0] * entry.system.dim, dtype=float)
    return bool(np.linalg.norm(tr.x[-1] - target) <= 1e-2)


def execute(sc: Scenario, timing: bool = False) -> tuple[dict, int]:
    """Run one scenario, write CSV + JSON, return (summary, exit code)."""
    started = time.perf_counter()
    tr = sim.simulate_closed_loop(
        sc.entry.system, sc.entry.law, sc.x0, phi=sc.entry.phi,
        components=sc.entry.components, t_end=sc.t_end, dt=sc.dt,
        method=sc.method, plant_params=sc.plant or None,
        controller_params=sc.controller or None)
    elapsed = time.perf_counter() - started

    mismatch = bool(sc.controller or sc.plant)
    checks = {
        "decay-pass": _decay_flag(sc.entry, tr, mismatch),
        "law-equivalence-pass": _equivalence_flag(sc.entry),
        "invariance-pass": _invariance_flag(sc.entry),
    }
    if mismatch:
        checks["robustness-pass"] = _robustness_flag(sc.entry, tr)

    phi = _phi_series(sc.entry, tr)
    summary = {
        "schema": SCHEMA,
        "scenario": sc.entry.id,
        "alphas": {k: float(v) for k, v in sc.entry.alphas.items()},
        "x0": [float(v) for v in sc.x0],
        "controller": {k: float(v) for k, v in sorted(sc.controller.items())},
        "plant": {k: float(v) for k, v in sorted(sc.plant.items())},
        "integrator": {"dt": sc.dt, "t_end": sc.t_end, "method": sc.method},
        "termination": tr.reason,
        "rates": {"phi": _fit(tr.t, phi, sc.entry.rate / 2.0),
                  "S": _fit(tr.t, tr.column("S"), sc.entry.rate)},
        "settling_time": _settling(sc.entry, tr),
        "orbit": _orbit(sc.entry, tr),
        "checks": checks,
        "wall_clock_s": round(elapsed, 3) if timing else None,
    }

    os.makedirs(sc.out_dir, exist_ok=True)
    base = os.path.join(sc.out_dir, sc.stem)
    _write_csv(base + ".csv", tr, sc.entry.system.state)
    _atomic_write(base + ".json",
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary, (0 if tr.reason == "completed" else 4)


# ---------------------------------------------------------------------------
# verbs


def _cmd_run(args) -> int:
    sc = _resolve(args, _parse_pairs(args.set, "--set"))
    summary, code = execute(sc, timing=args.timing)
    print(f"{sc.entry.id}: {summary['termination']}"
          f" -> {os.path.join(sc.out_dir, sc.stem)}.csv")
    if code:
        print(f"run ended early: {summary['termination']}",
              file=sys.stderr)
    return code


def _cmd_sweep(args) -> int:
    values = [v for v in (args.values or "").split(",") if v.strip()]
    if not values:
        raise CliError(2, "sweep needs a nonempty --values list")
    try:
        floats = [float(v) for v in values]
    except ValueError:
        raise CliError(2, f"bad sweep value in {args.values!r}") from None

    base = _parse_pairs(args.set, "--set")
    scenarios = []
    base_stem = None
    for v in floats:
        merged = dict(base)
        merged[args.param] = v
        sc = _resolve(args, merged)
        base_stem = sc.stem
        sc.stem = f"{sc.stem}-{args.param}-{v:g}"
        scenarios.append((v, sc))

    results = [None] * len(scenarios)
    workers = min(len(scenarios), os.cpu_count() or 1)
    with concurrent.futures.ThreadPoolExecutor(workers) as pool:
        futures = {pool.submit(execute, sc, args.timing): k
                   for k, (_, sc) in enumerate(scenarios)}
        for fut in concurrent.futures.as_completed(futures):
            results[futures[fut]] = fut.result()

    index = {
        "schema": SCHEMA,
        "scenario": scenarios[0][1].entry.id,
        "param": args.param,
        "values": floats,
        "runs": [summary for summary, _ in results],
    }
    out_dir = scenarios[0][1].out_dir
    path = os.path.join(out_dir, f"{base_stem}-sweep.json")
    _atomic_write(path, json.dumps(index, indent=2, sort_keys=True) + "\n")

    for (v, sc), (summary, _) in zip(scenarios, results):
        line = f"{args.param}={v:g}: {summary['termination']}"
        if summary["settling_time"] is not None:
            line += f", settles at t={summary['settling_time']:.3f}"
        if summary["orbit"] is not None:
            orb = summary["orbit"]
            line += (f", orbit period {orb['period']:.3f} amplitude "
                     f"{orb['amplitude']:.3f}")
        print(line)
    print(f"sweep index -> {path}")
    return max(code for _, code in results)


def _cmd_list(_args) -> int:
    for eid in catalog.list():
        print(f"{eid:24} {catalog.get(eid).title}")
    return 0


def _cmd_describe(args) -> int:
    try:
        e = catalog.get(args.id)
    except catalog.UnknownId:
        raise CliError(2, f"unknown scenario {args.id!r}") from None
    print(f"{e.id} - {e.title}")
    print(f"  behavior: {e.behavior}")
    print(f"  route: {e.route}")
    print(f"  state: {', '.join(e.system.state)}")
    print(f"  drift f: {' ; '.join(str(x) for x in e.system.f)}")
    print(f"  input g: {' ; '.join(str(x) for x in e.system.g)}")
    if e.system.time_symbol:
        print(f"  time symbol: {e.system.time_symbol}")
    constants = {**e.extras, **e.system.params}
    if constants:
        pairs = ", ".join(f"{k} = {v:g}"
                          for k, v in sorted(constants.items()))
        print(f"  params: {pairs}")
    pairs = ", ".join(f"{k} = {v:g}" for k, v in e.alphas.items())
    print(f"  rates: {pairs} (phi decays at {e.rate / 2:g})")
    print(f"  manifold: {' ; '.join(str(c) for c in e.components)}")
    print(f"  law: u = {e.law.u}")
    for x0 in e.x0s:
        print(f"  x0: ({', '.join('%g' % v for v in x0)})")
    if e.equilibrium is not None:
        print(f"  equilibrium: "
              f"({', '.join('%g' % v for v in e.equilibrium)})")
    if e.notes:
        print(f"  notes: {e.notes}")
    return 0


def _cmd_selftest(_args) -> int:
    from . import accept

    results = accept.run_all(echo=print)
    return 0 if all(c.passed for c in results) else 1


def _add_run_flags(sub) -> None:
    sub.add_argument("--x0", help="initial condition, comma separated")
    sub.add_argument("--set", action="append", metavar="NAME=VALUE",
                     help="override a rate or plant parameter at build"
                     " time (repeatable)")
    sub.add_argument("--controller", action="append", metavar="NAME=VALUE",
                     help="controller-side parameter override"
                     " (robustness runs)")
    sub.add_argument("--plant", action="append", metavar="NAME=VALUE",
                     help="plant-side parameter override")
    sub.add_argument("--dt", type=float, help="integrator step")
    sub.add_argument("--t-end", dest="t_end", type=float,
                     help="simulation horizon")
    sub.add_argument("--method", choices=("rk4", "rk45"))
    sub.add_argument("--out", help="output directory (default: "
                     "$PANDI_OUT or the working directory)")
    sub.add_argument("--stem", help="output file stem")
    sub.add_argument("--timing", action="store_true",
                     help="record wall-clock time in the summary")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pandi",
        description="Synthesize and simulate passivity-and-immersion"
        " feedback laws.")
    subs = parser.add_subparsers(dest="verb", required=True)

    p_run = subs.add_parser("run", help="run one scenario")
    p_run.add_argument("scenario", help="catalog id or INI config path")
    _add_run_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = subs.add_parser("sweep", help="run a scenario over a"
                              " parameter grid")
    p_sweep.add_argument("scenario", help="catalog id or INI config path")
    p_sweep.add_argument("--param", required=True,
                         help="override name to sweep")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    _add_run_flags(p_sweep)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_list = subs.add_parser("list", help="list catalog scenarios")
    p_list.set_defaults(fn=_cmd_list)

    p_desc = subs.add_parser("describe", help="show one scenario")
    p_desc.add_argument("id")
    p_desc.set_defaults(fn=_cmd_describe)

    p_self = subs.add_parser("selftest", help="run the acceptance suite")
    p_self.set_defaults(fn=_cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as err:
        print(f"pandi: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    raise SystemExit(main())
