"""Release acceptance suite.

Nine numbered checks covering law equivalence, the exact-decay
invariants, figure-level convergence, robustness to controller-side
parameter error, the triangular normal form, the geometry of the
metric, known singular and non-integrable cases, the orbital scenario,
and numerics hygiene.  `run_all` executes them in order and is shared
by the pytest wrapper and the `selftest` CLI verb.
"""
from __future__ import annotations

import filecmp
import math
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import catalog, expr as E, manifold as M, psf as P, sim, synth
from .sysmodel import ControlAffineSystem, ControlLaw

EQUIVALENCE_IDS = (
    "ex1",
    "w3",
    "w2-alt",
    "maglev",
    "ccm-3rd-order",
    "slotine-reg",
    "slotine-track",
    "ff-simple",
    "iwp-orbital",
)

THETA_SETS = (
    ("zero", (0.0, 0.0, 0.0, 0.0)),
    ("negative", (-2.0, -3.0, -4.0, -6.0)),
    ("positive", (1.0, 2.0, 3.0, 4.0)),
)

# tracking robustness needs stiffer rates than the nominal figure; the
# stage gain and the decay rate are the advertised flexible variables
TRACK_ROBUST_RATES = {"alpha_1": 600.0, "alpha": 600.0}

ON_MANIFOLD_PROBES = {"dc-motor": (0.5, 0.3, -0.2)}


@dataclass(frozen=True)
class Check:
    number: int
    label: str
    passed: bool
    detail: str

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} ({self.label}): {verdict} - {self.detail}"


_RUNS: dict = {}


def _entry_symbols(e) -> tuple[str, ...]:
    names = set(e.system.state) | set(e.system.params)
    if e.system.time_symbol:
        names.add(e.system.time_symbol)
    return tuple(sorted(names))


def _closed_loop(e, x0, t_end, controller=None):
    key = (e.id, tuple(sorted(e.alphas.items())), tuple(x0), t_end,
           None if controller is None else tuple(sorted(controller.items())))
    if key not in _RUNS:
        _RUNS[key] = sim.simulate_closed_loop(
            e.system, e.law, x0, phi=e.phi, components=e.components,
            t_end=t_end, dt=1e-3, controller_params=controller)
    return _RUNS[key]


def _phi_series(e, tr) -> np.ndarray:
    table = {k: E.Const(v) for k, v in e.system.params.items()}
    fn = sim.compile_scalar(E.subst(e.phi, table), e.system.state,
                            e.system.time_symbol)
    return np.array([fn(t, row) for t, row in zip(tr.t, tr.x)])


def _decay_ic(e):
    """First stock initial condition that starts off the manifold."""
    env = dict(e.system.params)
    if e.system.time_symbol:
        env[e.system.time_symbol] = 0.0
    for x0 in e.x0s:
        env.update(zip(e.system.state, x0))
        if abs(e.phi.eval(env)) >= 1e-3:
            return x0
    return e.x0s[0]


def criterion_1() -> Check:
    worst = ("", 0.0)
    printed_dev = None
    for eid in EQUIVALENCE_IDS:
        e = catalog.get(eid)
        kw = dict(n=1000, seed=0, box=e.sample_box,
                  boxes=e.sample_boxes or None,
                  avoid=e.avoid + (e.law.guard,))
        dev = E.max_deviation(e.law.u, e.reference, _entry_symbols(e), **kw)
        if dev > worst[1]:
            worst = (eid, dev)
        if eid == "ccm-3rd-order":
            printed_dev = E.max_deviation(
                e.law.u, e.variants["published-as-printed-law"],
                _entry_symbols(e), **kw)
    passed = worst[1] <= 1e-9
    detail = (f"worst rel dev {worst[1]:.2e} ({worst[0]}) over 1000 points; "
              f"ccm as-printed law deviates {printed_dev:.2e}")
    return Check(1, "law equivalence", passed, detail)


def criterion_2() -> Check:
    worst = ("", 0.0)
    for eid in catalog.list():
        e = catalog.get(eid)
        tr = _closed_loop(e, _decay_ic(e), 10.0)
        phi = _phi_series(e, tr)
        s = tr.column("S")
        dev = max(sim.decay_deviation(tr.t, phi, e.rate / 2.0),
                  sim.decay_deviation(tr.t, s, e.rate))
        if dev > worst[1]:
            worst = (eid, dev)
    passed = worst[1] <= 1e-5
    detail = (f"worst decay deviation {worst[1]:.2e} ({worst[0]}) "
              f"across {len(catalog.list())} loops")
    return Check(2, "exact decay", passed, detail)


def _final_norm(e, x0, t_end=20.0) -> float:
    tr = _closed_loop(e, x0, t_end)
    if tr.reason != "completed":
        return math.inf
    return float(np.linalg.norm(tr.x[-1]))


def _final_zeta_norm(e, x0, t_end=20.0) -> float:
    tr = _closed_loop(e, x0, t_end)
    if tr.reason != "completed":
        return math.inf
    table = {k: E.Const(v) for k, v in e.system.params.items()}
    vals = [sim.compile_scalar(E.subst(z, table), e.system.state)(
        tr.t[-1], tr.x[-1]) for z in e.zeta]
    return math.sqrt(sum(v * v for v in vals))


def criterion_3() -> Check:
    parts = []
    ok = True

    e = catalog.get("w2-case1")
    norms = [_final_norm(e, x0) for x0 in e.x0s[:3]]
    ok &= len(norms) == 3 and max(norms) <= 1e-3
    parts.append(f"w2-case1 max|x(20)|={max(norms):.1e}/3 starts")

    e = catalog.get("integrator-chain")
    norms = [_final_norm(e, x0) for x0 in e.x0s[:3]]
    ok &= len(norms) == 3 and max(norms) <= 1e-3
    parts.append(f"chain {max(norms):.1e}/3 starts")

    e = catalog.get("ccm-3rd-order")
    norms = [_final_norm(e, x0) for x0 in ((0.5, 0.5, 0.5), (9.0, 9.0, 9.0))]
    ok &= max(norms) <= 1e-3
    parts.append(f"ccm {max(norms):.1e}")

    e = catalog.get("slotine-reg")
    n = _final_norm(e, (0.5, -0.5, -0.2))
    ok &= n <= 1e-3
    parts.append(f"slotine-reg {n:.1e}")

    for eid in ("maglev", "dc-motor"):
        e = catalog.get(eid)
        z = max(_final_zeta_norm(e, x0) for x0 in e.x0s)
        ok &= z <= 1e-3
        parts.append(f"{eid} |zeta(20)|={z:.1e}")

    return Check(3, "figure reproduction", ok, "; ".join(parts))


def criterion_4() -> Check:
    names = ("theta_a", "theta_b", "theta_c", "theta_d")
    ok = True
    parts = []

    reg = catalog.get("slotine-reg")
    worst = 0.0
    for _, values in THETA_SETS:
        tr = _closed_loop(reg, reg.x0s[0], 20.0,
                          controller=dict(zip(names, values)))
        n = (math.inf if tr.reason != "completed"
             else float(np.linalg.norm(tr.x[-1])))
        worst = max(worst, n)
    ok &= worst <= 1e-2
    parts.append(f"regulation worst |x(20)|={worst:.1e}")

    trk = catalog.build("slotine-track", **TRACK_ROBUST_RATES)
    worst = 0.0
    for _, values in THETA_SETS:
        tr = _closed_loop(trk, trk.x0s[0], 20.0,
                          controller=dict(zip(names, values)))
        if tr.reason != "completed":
            worst = math.inf
            continue
        late = np.abs(tr.column("e1")[tr.t >= 10.0])
        worst = max(worst, float(late.max()))
    ok &= worst <= 1e-2
    parts.append(
        f"tracking worst |e1| after t=10 is {worst:.1e} at alpha_1="
        f"{trk.alphas['alpha_1']:g}, alpha={trk.alphas['alpha']:g}")

    return Check(4, "controller-parameter robustness", ok, "; ".join(parts))


def criterion_5() -> Check:
    worst = 0.0
    weakest_mutated = math.inf
    for eid in ("integrator-chain", "maglev", "dc-motor"):
        e = catalog.get(eid)
        s = P.synthesize_psf(e.psf)
        boxes = e.sample_boxes or None
        worst = max(worst, P.verify_triangular(s, n_points=100, seed=0,
                                               boxes=boxes))
        bad = P.mutated(s, 1, E.parse("0.01*x1^2"))
        weakest_mutated = min(
            weakest_mutated,
            P.verify_triangular(bad, n_points=100, seed=0, boxes=boxes))
    passed = worst <= 1e-9 and weakest_mutated > 1e-3
    detail = (f"worst residual {worst:.2e} at 100 points; weakest mutated "
              f"residual {weakest_mutated:.2e}")
    return Check(5, "triangular normal form", passed, detail)


def criterion_6() -> Check:
    state = ("x1", "x2", "x3")
    # unit slope in the last state keeps every split well defined
    pool = [E.parse(text) for text in (
        "x3 + x1^2",
        "x3 + x1*x2",
        "x3 - sin(x1) + 0.5*x2^2",
        "x3 + tanh(x2) - x1",
        "x3 + x1^2*x2 - 2*x2",
    )]
    rng = np.random.default_rng(7)
    worst_cross = 0.0
    worst_sym = 0.0
    worst_rank = 0.0
    for k in range(500):
        metric = M.pr_metric(pool[k % len(pool)], state)
        env = dict(zip(state, (float(v) for v in
                               rng.uniform(-2.0, 2.0, size=3))))
        m = np.asarray(metric.sample(env), dtype=float)
        worst_sym = max(worst_sym, float(np.max(np.abs(m - m.T))))
        sv = metric.singular_values(env)
        worst_rank = max(worst_rank, sv[1] / max(1.0, sv[0]))
        w = [float(v) for v in rng.uniform(-3.0, 3.0, size=3)]
        h, v = M.split_tangent(metric, w, env)
        worst_cross = max(worst_cross, abs(M.metric_inner(metric, h, v,
                                                          env)))
    geometry_ok = (worst_cross <= 1e-10 and worst_sym <= 1e-12
                   and worst_rank <= 1e-10)

    worst_phi = ("", 0.0)
    for eid in catalog.list():
        e = catalog.get(eid)
        x0 = catalog.on_manifold(e, ON_MANIFOLD_PROBES.get(eid))
        tr = _closed_loop(e, x0, 10.0)
        drift = float(np.max(np.abs(_phi_series(e, tr))))
        if drift > worst_phi[1]:
            worst_phi = (eid, drift)
    invariance_ok = worst_phi[1] <= 1e-6

    detail = (f"orthogonality <= {worst_cross:.1e} on 500 draws, rank-1 "
              f"ratio <= {worst_rank:.1e}; on-manifold drift "
              f"{worst_phi[1]:.2e} ({worst_phi[0]})")
    return Check(6, "metric geometry and invariance", geometry_ok
                 and invariance_ok, detail)


def criterion_7() -> Check:
    e = catalog.get("w2-case2")
    tr = _closed_loop(e, e.x0s[0], 25.0)
    singular_ok = (tr.reason == "singularity"
                   and abs(float(tr.x[-1][0])) <= 1e-3)

    coupled = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(E.parse("x2 + x3^2"), E.sym("x3"), E.Const(0.0)),
        g=(E.sym("x2"), E.parse("-x3^2"), E.Const(1.0)),
    )
    inner = E.parse("-x3 - (x2 + x3 + (1/3)*x3^3)*(1 + x3^2)")
    try:
        synth.forwarding_cross_term(coupled, inner)
        raised = None
    except M.NonIntegrableConnection as err:
        raised = (err.i, err.j)
    integrable_ok = raised == (2, 3)

    detail = (f"w2-case2 stopped with reason {tr.reason!r} at "
              f"t={tr.t[-1]:.2f}, |x1|={abs(float(tr.x[-1][0])):.1e}; "
              f"all-rows-actuated forwarding raised "
              f"NonIntegrableConnection{raised}")
    return Check(7, "singular and non-integrable cases", singular_ok
                 and integrable_ok, detail)


def criterion_8() -> Check:
    e = catalog.get("iwp-orbital")
    tr = _closed_loop(e, e.x0s[0], 100.0)
    phi = np.abs(_phi_series(e, tr))
    rep = sim.fit_exponential(tr.t, phi, expected_rate=e.rate / 2.0,
                              rate_tol=0.02)
    orbit = sim.detect_orbit(tr.t, tr.column("x1"))
    orbit_ok = (orbit is not None and orbit.amplitude > 0.0
                and orbit.drift <= 0.01)

    a_t = e.extras["a_target"]
    pend = ControlAffineSystem(
        ("q", "v"),
        f=(E.parse("v"), E.parse("-a_t*sin(q)")),
        g=(E.Const(0.0), E.Const(0.0)),
        params={"a_t": a_t},
    )
    trp = sim.simulate_closed_loop(pend, ControlLaw(E.Const(0.0)),
                                   (2.6, 0.3), t_end=100.0, dt=1e-3,
                                   method="rk45")
    q, v = trp.column("q"), trp.column("v")
    energy = 0.5 * v ** 2 - a_t * np.cos(q)
    drift = float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))

    passed = bool(rep.passed) and orbit_ok and drift <= 1e-6
    if orbit is None:
        orbit_text = "no orbit detected"
    else:
        orbit_text = (f"orbit period {orbit.period:.3f}, amplitude "
                      f"{orbit.amplitude:.3f}, drift {orbit.drift:.1e}/period")
    detail = (f"phi rate {rep.rate:.4f} vs {e.rate / 2:g}; {orbit_text}; "
              f"pendulum energy drift {drift:.2e} over 100 s")
    return Check(8, "orbital scenario", passed, detail)


def _fd_gradient_worst() -> float:
    symbols = ("x1", "x2", "x3")
    pool = [E.parse(text) for text in (
        "x1^2*x2 - x3",
        "sin(x1)*cos(x2) + x3",
        "tanh(x1*x2) + x3^2",
        "exp(0.3*x1) - x2*x3",
        "x1*x2*x3",
        "cos(x1^2) + sin(x2*x3)",
        "x1^3 - 2*x2^2 + 0.5*x3",
        "tanh(x1)*sin(x2)*x3",
        "exp(-x1^2)*x2",
        "x1/(2 + x2^2)",
    )]
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(1000):
        e = pool[k % len(pool)]
        grads = E.grad(e, symbols)
        point = dict(zip(symbols, rng.uniform(-2.0, 2.0, size=3)))
        for name, ge in zip(symbols, grads):
            h = 1e-6 * (1.0 + abs(point[name]))
            hi = dict(point, **{name: point[name] + h})
            lo = dict(point, **{name: point[name] - h})
            fd = (e.eval(hi) - e.eval(lo)) / (2.0 * h)
            g = ge.eval(point)
            worst = max(worst, abs(fd - g) / (1.0 + abs(g)))
    return worst


def _rk4_order_ratio() -> float:
    def field(t, x):
        return [math.sin(x[0]) - x[0] ** 3 + math.cos(t)]

    def final(dt):
        return float(sim.integrate(field, (0.3,), t_end=2.0, dt=dt).x[-1, 0])

    ref = final(1e-5)
    return abs(final(4e-2) - ref) / abs(final(2e-2) - ref)


def _cli_rerun_identical() -> bool:
    with tempfile.TemporaryDirectory() as td:
        dirs = (os.path.join(td, "a"), os.path.join(td, "b"))
        for d in dirs:
            proc = subprocess.run(
                [sys.executable, "-m", "pandi", "run", "ex1",
                 "--x0", "1,1", "--out", d],
                capture_output=True, text=True)
            if proc.returncode != 0:
                return False
        return all(
            filecmp.cmp(os.path.join(dirs[0], name),
                        os.path.join(dirs[1], name), shallow=False)
            for name in ("ex1.csv", "ex1.json"))


def criterion_9() -> Check:
    fd_worst = _fd_gradient_worst()
    ratio = _rk4_order_ratio()
    identical = _cli_rerun_identical()
    passed = fd_worst <= 1e-5 and 12.0 <= ratio <= 20.0 and identical
    detail = (f"FD gradient worst {fd_worst:.2e} over 1000 cases; RK4 "
              f"error ratio {ratio:.1f}; CLI reruns byte-identical: "
              f"{identical}")
    return Check(9, "numerics hygiene", passed, detail)


CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
)


def run_all(echo=None) -> list[Check]:
    """Run the nine checks in order, optionally echoing one line each."""
    results = []
    for fn in CRITERIA:
        check = fn()
        results.append(check)
        if echo is not None:
            echo(check.line())
    return results
