"""Closed-loop simulation and trajectory diagnostics.

Fixed-step classical RK4 is the reference integrator (dt = 1e-3 unless a
scenario overrides it); an embedded Dormand-Prince 4(5) pair provides the
adaptive method.  A run terminates with one of four reasons:

    completed     the horizon was reached
    singularity   a singular guard dropped below 1e-9 in magnitude
    domain-error  the right-hand side left its domain (log, sqrt, division)
    divergence    a state left the +-1e9 box or stopped being finite

Partial trajectories up to the offending step are always returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as E
from .expr import Expr
from .sysmodel import ControlAffineSystem, ControlLaw

DIVERGENCE_BOUND = 1e9
GUARD_TOL = 1e-9

REASONS = ("completed", "singularity", "domain-error", "divergence")

_DOMAIN_ERRORS = (ZeroDivisionError, ValueError, OverflowError, E.DomainError)


class InsufficientData(ValueError):
    """Too few usable samples to fit or measure anything."""


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    columns: tuple[str, ...]
    observables: dict[str, np.ndarray]
    reason: str

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        if name in self.columns:
            return self.x[:, self.columns.index(name)]
        return self.observables[name]


def _rk4_step(field, t, x, dt):
    k1 = field(t, x)
    x2 = [xi + 0.5 * dt * ki for xi, ki in zip(x, k1)]
    k2 = field(t + 0.5 * dt, x2)
    x3 = [xi + 0.5 * dt * ki for xi, ki in zip(x, k2)]
    k3 = field(t + 0.5 * dt, x3)
    x4 = [xi + dt * ki for xi, ki in zip(x, k3)]
    k4 = field(t + dt, x4)
    return [
        xi + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    ]


# Dormand-Prince 4(5) coefficients
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def _dp_step(field, t, x, dt):
    ks = []
    for stage in range(7):
        xs = list(x)
        for j, a in enumerate(_DP_A[stage]):
            if a != 0.0:
                xs = [xi + dt * a * kj for xi, kj in zip(xs, ks[j])]
        ks.append(field(t + _DP_C[stage] * dt, xs))
    x5 = [xi + dt * sum(b * k[i] for b, k in zip(_DP_B5, ks))
          for i, xi in enumerate(x)]
    x4 = [xi + dt * sum(b * k[i] for b, k in zip(_DP_B4, ks))
          for i, xi in enumerate(x)]
    err = [a - b for a, b in zip(x5, x4)]
    return x5, err


def integrate(
    field: Callable[[float, Sequence[float]], Sequence[float]],
    x0: Sequence[float],
    t_end: float,
    dt: float = 1e-3,
    method: str = "rk4",
    t0: float = 0.0,
    columns: Sequence[str] | None = None,
    observables: Mapping[str, Callable[[float, Sequence[float]], float]] | None = None,
    guards: Sequence[Callable[[float, Sequence[float]], float]] = (),
    abstol: float = 1e-9,
    reltol: float = 1e-8,
) -> Trajectory:
    """Integrate x_dot = field(t, x) and record states plus observables.

    rk4 records on the uniform grid t0 + k dt; rk45 records at every
    accepted step.  Observables are scalar callables evaluated at each
    recorded point; guards terminate the run with reason "singularity"
    when their magnitude drops below 1e-9.
    """
    if method not in ("rk4", "rk45"):
        raise ValueError(f"unknown method {method!r}")
    n = len(x0)
    columns = tuple(columns) if columns is not None else tuple(
        f"x{i + 1}" for i in range(n))
    obs = dict(observables or {})

    ts: list[float] = []
    rows: list[list[float]] = []
    obs_rows: dict[str, list[float]] = {k: [] for k in obs}
    reason = "completed"

    def record(t, x) -> str | None:
        # returns a termination reason detected at this point, else None
        if any(not math.isfinite(v) or abs(v) > DIVERGENCE_BOUND for v in x):
            return "divergence"
        vals = {}
        try:
            for k, fn in obs.items():
                vals[k] = fn(t, x)
            gvals = [gfn(t, x) for gfn in guards]
        except _DOMAIN_ERRORS:
            return "domain-error"
        ts.append(t)
        rows.append(list(x))
        for k, v in vals.items():
            obs_rows[k].append(v)
        for gv in gvals:
            if abs(gv) < GUARD_TOL:
                return "singularity"
        return None

    t = float(t0)
    x = [float(v) for v in x0]
    stop = record(t, x)
    if stop is None and method == "rk4":
        steps = int(round((t_end - t0) / dt))
        for k in range(1, steps + 1):
            try:
                x = _rk4_step(field, t, x, dt)
            except _DOMAIN_ERRORS:
                reason = "domain-error"
                break
            t = t0 + k * dt
            stop = record(t, x)
            if stop is not None:
                break
    elif stop is None:
        h = dt
        while t < t_end - 1e-12:
            h = min(h, t_end - t)
            try:
                x_new, err = _dp_step(field, t, x, h)
            except _DOMAIN_ERRORS:
                reason = "domain-error"
                break
            scale = [abstol + reltol * max(abs(a), abs(b))
                     for a, b in zip(x, x_new)]
            norm = math.sqrt(
                sum((e / s) ** 2 for e, s in zip(err, scale)) / len(x))
            if norm <= 1.0:
                t = t + h
                x = x_new
                stop = record(t, x)
                if stop is not None:
                    break
            factor = 0.9 * (norm ** -0.2) if norm > 0 else 5.0
            h *= min(5.0, max(0.2, factor))
            if h < 1e-12:
                reason = "domain-error"
                break
    if stop is not None:
        reason = stop

    return Trajectory(
        t=np.array(ts),
        x=np.array(rows) if rows else np.zeros((0, n)),
        columns=columns,
        observables={k: np.array(v) for k, v in obs_rows.items()},
        reason=reason,
    )


def compile_rhs(exprs: Sequence[Expr], state: Sequence[str],
                time_symbol: str | None = None):
    """Compile a vector of expressions into a field(t, x) callable."""
    order = ([time_symbol] if time_symbol else []) + list(state)
    fns = [E.compile_fn(e, order) for e in exprs]
    if time_symbol:
        return lambda t, x: [f(t, *x) for f in fns]
    return lambda t, x: [f(*x) for f in fns]


def compile_scalar(e: Expr, state: Sequence[str], time_symbol: str | None = None):
    order = ([time_symbol] if time_symbol else []) + list(state)
    f = E.compile_fn(e, order)
    if time_symbol:
        return lambda t, x: f(t, *x)
    return lambda t, x: f(*x)


def simulate_closed_loop(
    sys: ControlAffineSystem,
    law: ControlLaw,
    x0: Sequence[float],
    phi: Expr | None = None,
    components: Sequence[Expr] = (),
    t_end: float = 20.0,
    dt: float = 1e-3,
    method: str = "rk4",
    t0: float = 0.0,
    plant_params: Mapping[str, float] | None = None,
    controller_params: Mapping[str, float] | None = None,
) -> Trajectory:
    """Simulate x_dot = f + g u(x) recording u, the manifold components
    phi_1..phi_k, and the storage S = phi^2/2 of the combined manifold.

    Parameters bind late: the plant uses the system's nominal values
    overridden by plant_params, the controller (u, guard, phi columns) uses
    the nominal values overridden by controller_params, so a mismatch
    exercises robustness.
    """
    plant = dict(sys.params)
    plant.update(plant_params or {})
    ctrl = dict(sys.params)
    ctrl.update(controller_params or {})
    p_tab = {k: E.Const(v) for k, v in plant.items()}
    c_tab = {k: E.Const(v) for k, v in ctrl.items()}

    u_expr = E.subst(law.u, c_tab)
    guard_expr = E.subst(law.guard, c_tab)
    field_exprs = [
        E.simplify(E.add(E.subst(fi, p_tab), E.mul(E.subst(gi, p_tab), u_expr)))
        for fi, gi in zip(sys.f, sys.g)
    ]
    tsym = sys.time_symbol
    field = compile_rhs(field_exprs, sys.state, tsym)

    observables: dict[str, Callable] = {"u": compile_scalar(u_expr, sys.state, tsym)}
    comps = list(components)
    if not comps and phi is not None:
        comps = [phi]
    for i, comp in enumerate(comps, start=1):
        observables[f"phi_{i}"] = compile_scalar(
            E.subst(E._wrap(comp), c_tab), sys.state, tsym)
    if phi is not None:
        s_expr = E.mul(0.5, E.pow_(E.subst(E._wrap(phi), c_tab), 2))
        observables["S"] = compile_scalar(s_expr, sys.state, tsym)
    guards = [compile_scalar(guard_expr, sys.state, tsym)]

    return integrate(
        field, x0, t_end=t_end, dt=dt, method=method, t0=t0,
        columns=sys.state, observables=observables, guards=guards,
    )


@dataclass(frozen=True)
class DecayReport:
    rate: float
    amplitude: float
    max_rel_dev: float
    n_points: int
    expected_rate: float | None = None
    passed: bool | None = None


def fit_exponential(
    t: np.ndarray,
    series: np.ndarray,
    expected_rate: float | None = None,
    rate_tol: float = 0.02,
    floor: float = 1e-12,
) -> DecayReport:
    """Least-squares exponential fit on the log of a positive series.

    Samples at or below `floor` are dropped; fewer than 10 usable samples
    raises InsufficientData.
    """
    t = np.asarray(t, dtype=float)
    series = np.asarray(series, dtype=float)
    mask = series > floor
    if int(mask.sum()) < 10:
        raise InsufficientData(f"only {int(mask.sum())} usable samples")
    tt = t[mask]
    yy = np.log(series[mask])
    slope, intercept = np.polyfit(tt, yy, 1)
    rate = -float(slope)
    amplitude = float(np.exp(intercept))
    model = amplitude * np.exp(-rate * tt)
    max_rel = float(np.max(np.abs(series[mask] - model) / np.maximum(series[mask], floor)))
    passed = None
    if expected_rate is not None:
        passed = abs(rate - expected_rate) <= rate_tol * abs(expected_rate)
    return DecayReport(
        rate=rate, amplitude=amplitude, max_rel_dev=max_rel,
        n_points=int(mask.sum()), expected_rate=expected_rate, passed=passed,
    )


def decay_deviation(t: np.ndarray, series: np.ndarray, rate: float) -> float:
    """Largest |series - series[0] exp(-rate (t - t0))| relative to |series[0]|."""
    t = np.asarray(t, dtype=float)
    series = np.asarray(series, dtype=float)
    if len(series) < 2:
        raise InsufficientData("need at least two samples")
    s0 = series[0]
    if abs(s0) < 1e-12:
        raise InsufficientData("series starts at zero, nothing to compare")
    model = s0 * np.exp(-rate * (t - t[0]))
    return float(np.max(np.abs(series - model)) / abs(s0))


def settling_time(
    t: np.ndarray,
    x: np.ndarray,
    target,
    tol: float,
) -> float | None:
    """First time from which the distance to target stays within tol.

    target is a point, or a callable mapping a state row to a residual
    vector whose norm is measured instead.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if callable(target):
        dist = np.array([np.linalg.norm(np.asarray(target(row), dtype=float))
                         for row in x])
    else:
        goal = np.asarray(target, dtype=float)
        dist = np.linalg.norm(x - goal[None, :], axis=1)
    inside = dist <= tol
    if not inside[-1]:
        return None
    # walk back to the start of the final inside stretch
    idx = len(inside) - 1
    while idx > 0 and inside[idx - 1]:
        idx -= 1
    return float(t[idx])


@dataclass(frozen=True)
class OrbitReport:
    period: float
    amplitude: float
    drift: float
    cycles: int


def detect_orbit(
    t: np.ndarray,
    series: np.ndarray,
    transient: float = 0.3,
    min_cycles: int = 3,
) -> OrbitReport | None:
    """Detect a sustained oscillation in a scalar series.

    The first `transient` fraction of the record is skipped, the mean of the
    remainder removed, and upward zero crossings located by interpolation.
    Returns None when fewer than min_cycles full cycles are present.
    """
    t = np.asarray(t, dtype=float)
    series = np.asarray(series, dtype=float)
    start = int(len(t) * transient)
    tt = t[start:]
    yy = series[start:] - float(np.mean(series[start:]))
    if len(tt) < 10:
        return None
    crossings = []
    for k in range(len(yy) - 1):
        if yy[k] < 0.0 <= yy[k + 1]:
            frac = -yy[k] / (yy[k + 1] - yy[k])
            crossings.append(tt[k] + frac * (tt[k + 1] - tt[k]))
    if len(crossings) < min_cycles + 1:
        return None
    periods = np.diff(crossings)
    amplitudes = []
    for a, b in zip(crossings[:-1], crossings[1:]):
        seg = yy[(tt >= a) & (tt < b)]
        if len(seg):
            amplitudes.append(0.5 * (float(np.max(seg)) - float(np.min(seg))))
    if len(amplitudes) < min_cycles:
        return None
    drift = 0.0
    for a, b in zip(amplitudes[:-1], amplitudes[1:]):
        if a > 0:
            drift = max(drift, abs(b - a) / a)
    return OrbitReport(
        period=float(np.mean(periods)),
        amplitude=float(np.mean(amplitudes)),
        drift=drift,
        cycles=len(periods),
    )
