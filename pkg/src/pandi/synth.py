"""Passive output, storage, and the synthesis formula.

The central operation is synthesize(): given a system, a combined manifold
function Phi and a decay rate alpha > 0, it returns the feedback

    u = -(grad(Phi).f + dPhi/dt + (alpha/2) Phi) / (grad(Phi).g)

which enforces d/dt Phi = -(alpha/2) Phi along the closed loop, hence
S = Phi^2 / 2 decays exactly at rate alpha.  Everything else here prepares
or specialises that formula: lift() chains manifolds through unactuated
stages, synthesize_feedforward() builds the cascade manifold x1 - mu(x2),
and forwarding_cross_term() rejects interconnections whose cross term
cannot split into per-variable pieces.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import expr as E
from .expr import Expr
from .manifold import NonIntegrableConnection, integrability_check
from .sysmodel import ControlAffineSystem, ControlLaw, SingularityHit  # noqa: F401

ZERO_SAMPLES = 100
ZERO_TOL = 1e-9


class UnactuatedManifold(ValueError):
    """grad(Phi).g is identically zero, the manifold cannot be driven."""


class NonpositiveRate(ValueError):
    """Decay rates must be strictly positive."""


class CrossTermMismatch(ValueError):
    """The supplied mu does not satisfy f1 = (dmu/dx2) f2."""

    def __init__(self, residual: float, witness: Mapping[str, float]):
        super().__init__(residual)
        self.residual = residual
        self.witness = dict(witness)

    def __str__(self) -> str:
        return f"cross-term residual {self.residual:.3e} at {self.witness}"


@dataclass(frozen=True)
class PassiveOutput:
    y: Expr
    y1: Expr
    y2: Expr


@dataclass(frozen=True)
class StorageFunction:
    S: Expr
    y: Expr
    alpha: float


@dataclass(frozen=True)
class CrossTermReport:
    passed: bool
    max_residual: float
    witness: dict | None


@dataclass(frozen=True)
class CascadeSynthesis:
    manifolds: tuple[Expr, ...]
    law: ControlLaw


def passive_output(phi: Expr, state: Sequence[str]) -> PassiveOutput:
    """Split the output y = Phi into the primitive of the vertical motion
    (the last state) plus the connection potential q(x)."""
    result = integrability_check(phi, state)
    return PassiveOutput(y=E._wrap(phi), y1=E.sym(state[-1]), y2=result.q)


def storage(y: Expr, alpha: float) -> StorageFunction:
    if alpha <= 0:
        raise NonpositiveRate(f"alpha = {alpha}")
    return StorageFunction(S=E.mul(0.5, E.pow_(y, 2)), y=E._wrap(y), alpha=float(alpha))


def _sample_env(sys: ControlAffineSystem, rng: random.Random,
                extra_symbols=()) -> dict[str, float]:
    env = {s: rng.uniform(-2.0, 2.0) for s in sys.state}
    env.update(sys.params)
    if sys.time_symbol:
        env[sys.time_symbol] = rng.uniform(0.0, 10.0)
    for s in extra_symbols:
        env.setdefault(s, rng.uniform(-2.0, 2.0))
    return env


def _identically_zero(sys: ControlAffineSystem, e: Expr, seed: int = 0) -> bool:
    if E.is_zero(e):
        return True
    rng = random.Random(seed)
    extra = e.free_symbols()
    for _ in range(ZERO_SAMPLES):
        env = _sample_env(sys, rng, extra)
        try:
            if abs(e.eval(env)) >= ZERO_TOL:
                return False
        except E.DomainError:
            continue
    return True


def directional_derivative(sys: ControlAffineSystem, phi: Expr) -> tuple[Expr, Expr]:
    """grad(Phi) contracted with f and with g; the time partial is folded
    into the drift part."""
    phi = E._wrap(phi)
    along_f = E.add(*(E.mul(phi.diff(s), fi) for s, fi in zip(sys.state, sys.f)))
    if sys.time_symbol and sys.time_symbol in phi.free_symbols():
        along_f = E.add(along_f, phi.diff(sys.time_symbol))
    along_g = E.add(*(E.mul(phi.diff(s), gi) for s, gi in zip(sys.state, sys.g)))
    return E.simplify(along_f), E.simplify(along_g)


def synthesize(sys: ControlAffineSystem, phi: Expr, alpha: float,
               tag: str = "generic-PI") -> ControlLaw:
    """The closed-form stabilising feedback for the manifold function Phi."""
    if alpha <= 0:
        raise NonpositiveRate(f"alpha = {alpha}")
    phi = E._wrap(phi)
    sys.check_expr(phi, "manifold function")
    along_f, along_g = directional_derivative(sys, phi)
    if _identically_zero(sys, along_g):
        raise UnactuatedManifold(
            "grad(Phi).g vanishes identically; the manifold is not actuated"
        )
    numer = E.add(along_f, E.mul(0.5 * float(alpha), phi))
    u = E.simplify(E.div(E.neg(numer), along_g))
    return ControlLaw(u, guard=along_g, tag=tag)


def lift(sys: ControlAffineSystem, psi: Expr, rate: float) -> Expr:
    """Next cascade manifold: the drift derivative of psi plus (rate/2) psi.

    Only valid while psi is unactuated (grad(psi).g identically zero), so the
    derivative is input-free.
    """
    if rate <= 0:
        raise NonpositiveRate(f"rate = {rate}")
    psi = E._wrap(psi)
    sys.check_expr(psi, "manifold component")
    along_f, along_g = directional_derivative(sys, psi)
    if not _identically_zero(sys, along_g):
        raise ValueError("psi is already actuated; lift applies to input-free stages")
    return E.simplify(E.add(along_f, E.mul(0.5 * float(rate), psi)))


def synthesize_cascade(sys: ControlAffineSystem, psi1: Expr,
                       rates: Sequence[float]) -> CascadeSynthesis:
    """Chain lift() through unactuated stages, then synthesise on the last.

    rates[:-1] drive the intermediate manifolds, rates[-1] the final law.
    """
    if not rates:
        raise ValueError("need at least one rate")
    manifolds = [E._wrap(psi1)]
    for r in rates[:-1]:
        manifolds.append(lift(sys, manifolds[-1], r))
    law = synthesize(sys, manifolds[-1], rates[-1])
    return CascadeSynthesis(manifolds=tuple(manifolds), law=law)


def verify_cross_term(
    f1: Expr,
    f2: Expr,
    mu: Expr,
    var: str,
    n_points: int = 100,
    tol: float = 1e-9,
    seed: int = 0,
) -> CrossTermReport:
    """Check the scalar cascade condition f1 = (dmu/dvar) f2."""
    residual = E.simplify(E.add(E._wrap(f1), E.neg(E.mul(E._wrap(mu).diff(var), f2))))
    if E.is_zero(residual):
        return CrossTermReport(passed=True, max_residual=0.0, witness=None)
    rng = random.Random(seed)
    syms = sorted(residual.free_symbols())
    worst = 0.0
    witness = None
    for _ in range(n_points):
        env = {s: rng.uniform(-2.0, 2.0) for s in syms}
        try:
            v = abs(residual.eval(env))
        except E.DomainError:
            continue
        if v > worst:
            worst = v
            witness = env
    if worst <= tol:
        return CrossTermReport(passed=True, max_residual=worst, witness=None)
    return CrossTermReport(passed=False, max_residual=worst, witness=witness)


def synthesize_feedforward(sys: ControlAffineSystem, mu: Expr,
                           alpha: float) -> ControlLaw:
    """Cascade synthesis on the manifold x1 = mu(x2) for two-state systems."""
    if sys.dim != 2:
        raise ValueError("the cascade template has two states")
    mu = E._wrap(mu)
    x1, x2 = sys.state
    report = verify_cross_term(sys.f[0], sys.f[1], mu, x2)
    if not report.passed:
        raise CrossTermMismatch(report.max_residual, report.witness or {})
    # the input must reach the off-manifold coordinate
    channel = E.simplify(E.add(E.mul(mu.diff(x2), sys.g[1]), E.neg(sys.g[0])))
    if _identically_zero(sys, channel):
        raise UnactuatedManifold("mu' g2 - g1 vanishes identically")
    phi = E.add(E.sym(x1), E.neg(mu))
    law = synthesize(sys, phi, alpha, tag="feedforward")
    return ControlLaw(law.u, guard=law.guard, tag="feedforward")


def forwarding_cross_term(
    sys: ControlAffineSystem,
    inner_law: Expr,
    top: int = 0,
) -> dict[str, Expr]:
    """Split the inner-loop-substituted top-row flow into per-variable parts.

    With the lower subsystem already closed by inner_law, the top row sees
    F = f_top + g_top * inner_law.  A cascade manifold x_top = mu needs F to
    split as a sum of single-variable pieces so each can be integrated
    against its own flow.  A summand of the expanded F whose free symbols
    contain two or more lower states has no such split; that is reported as
    NonIntegrableConnection over the first offending state pair.

    Returns the per-variable buckets {state name: partial flow} on success
    (a "const" bucket collects state-free terms).
    """
    inner_law = E._wrap(inner_law)
    lower = [s for i, s in enumerate(sys.state) if i != top]
    flow = E.expand(E.simplify(E.add(sys.f[top], E.mul(sys.g[top], inner_law))))
    buckets: dict[str, Expr] = {}
    for term in E.sum_terms(flow):
        involved = sorted(set(term.free_symbols()) & set(lower),
                          key=list(sys.state).index)
        if len(involved) >= 2:
            i = list(sys.state).index(involved[0]) + 1
            j = list(sys.state).index(involved[1]) + 1
            raise NonIntegrableConnection(i, j)
        key = involved[0] if involved else "const"
        buckets[key] = E.add(buckets[key], term) if key in buckets else term
    return buckets
