"""Implicit manifolds, the induced rank-one metric, tangent splitting and
connection integrability."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import expr as E
from .expr import Expr
from .sysmodel import ControlAffineSystem, ControlLaw, closed_loop

ON_MANIFOLD_TOL = 1e-9
DEGENERATE_TOL = 1e-12


class NotOnManifold(ValueError):
    def __init__(self, index: int, value: float):
        super().__init__(index, value)
        self.index = index
        self.value = value

    def __str__(self) -> str:
        return f"component {self.index} is {self.value:.3e} at the given point"


class DegenerateMetric(ArithmeticError):
    """The lambda-lambda metric entry vanished, the splitting is undefined."""


class NonIntegrableConnection(Exception):
    """Cross partials of a connection row disagree, no potential q exists."""

    def __init__(self, i: int, j: int, residual: float = float("nan")):
        super().__init__(i, j)
        self.i = i
        self.j = j
        self.residual = residual

    def __str__(self) -> str:
        return f"connection row is not integrable in the ({self.i}, {self.j}) pair"


@dataclass(frozen=True)
class ImplicitManifold:
    """Zero set of one or more scalar components Psi_i(x) = 0."""

    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(E._wrap(c) for c in self.components))
        if not self.components:
            raise ValueError("need at least one component")


def graph_component(last_state: str, phi_of_rest: Expr) -> Expr:
    """The component lambda - phi(x) describing lambda as a graph over x."""
    return E.add(E.sym(last_state), E.neg(phi_of_rest))


def combine(manifold: ImplicitManifold | Sequence[Expr],
            coefficients: Sequence[float] | None = None) -> Expr:
    """Linear combination of components; unit coefficients by default."""
    comps = manifold.components if isinstance(manifold, ImplicitManifold) else tuple(
        E._wrap(c) for c in manifold)
    if coefficients is None:
        coefficients = [1.0] * len(comps)
    if len(coefficients) != len(comps):
        raise ValueError("one coefficient per component")
    return E.add(*(E.mul(float(c), comp) for c, comp in zip(coefficients, comps)))


class PRMetric:
    """Rank-one pseudo-Riemannian metric R = grad(Phi)^T grad(Phi)."""

    def __init__(self, phi: Expr, state: Sequence[str]):
        self.phi = E._wrap(phi)
        self.state = tuple(state)
        self.gradient = E.grad(self.phi, self.state)
        self.entries = tuple(
            tuple(E.simplify(E.mul(gi, gj)) for gj in self.gradient)
            for gi in self.gradient
        )

    @property
    def dim(self) -> int:
        return len(self.state)

    def sample(self, env: Mapping[str, float]):
        import numpy as np

        return np.array([[e.eval(env) for e in row] for row in self.entries])

    def singular_values(self, env: Mapping[str, float]):
        import numpy as np

        return np.linalg.svd(self.sample(env), compute_uv=False)


def pr_metric(phi: Expr, state: Sequence[str]) -> PRMetric:
    return PRMetric(phi, state)


def split_tangent(metric: PRMetric, w: Sequence[float], env: Mapping[str, float]):
    """Split a tangent vector into horizontal and vertical parts at a point.

    Returns (H, V) with H + V = w, H carrying the x-motion with the induced
    lambda-motion, V purely along the last coordinate.
    """
    n = metric.dim
    if len(w) != n:
        raise ValueError(f"tangent vector must have {n} components")
    m_nn = metric.entries[n - 1][n - 1].eval(env)
    if abs(m_nn) < DEGENERATE_TOL:
        raise DegenerateMetric(f"m_nn = {m_nn:.3e}")
    c = [metric.entries[n - 1][j].eval(env) / m_nn for j in range(n - 1)]
    coupled = sum(cj * wj for cj, wj in zip(c, w[: n - 1]))
    H = tuple(list(w[: n - 1]) + [-coupled])
    V = tuple([0.0] * (n - 1) + [w[n - 1] + coupled])
    return H, V


def metric_inner(metric: PRMetric, a: Sequence[float], b: Sequence[float],
                 env: Mapping[str, float]) -> float:
    R = metric.sample(env)
    total = 0.0
    for i in range(metric.dim):
        for j in range(metric.dim):
            total += a[i] * R[i][j] * b[j]
    return float(total)


def invariance_residual(
    sys: ControlAffineSystem,
    law: ControlLaw,
    manifold: ImplicitManifold,
    env: Mapping[str, float],
) -> float:
    """Largest |d/dt Psi_i| along the closed loop at an on-manifold point.

    The point must satisfy |Psi_i| <= 1e-9 for every component, otherwise
    NotOnManifold is raised.
    """
    for idx, comp in enumerate(manifold.components):
        v = comp.eval(env)
        if abs(v) > ON_MANIFOLD_TOL:
            raise NotOnManifold(idx + 1, v)
    field = closed_loop(sys, law)
    xdot = [fe.eval(env) for fe in field]
    worst = 0.0
    for comp in manifold.components:
        rate = sum(comp.diff(s).eval(env) * xd for s, xd in zip(sys.state, xdot))
        if sys.time_symbol and sys.time_symbol in comp.free_symbols():
            rate += comp.diff(sys.time_symbol).eval(env)
        worst = max(worst, abs(rate))
    return worst


@dataclass(frozen=True)
class IntegrabilityResult:
    q: Expr
    connection: tuple[Expr, ...]


def connection_integrable(
    row: Sequence[Expr],
    variables: Sequence[str],
    state: Sequence[str] | None = None,
    n_points: int = 100,
    tol: float = 1e-8,
    seed: int = 0,
) -> None:
    """Check that a connection row is a gradient in the given variables.

    Cross partials are compared symbolically first, then at sample points.
    On failure raises NonIntegrableConnection with 1-based indices of the
    offending variable pair, resolved against `state` when provided.
    """
    import random

    row = [E._wrap(r) for r in row]
    if len(row) != len(variables):
        raise ValueError("one row entry per variable")

    def index_of(k: int) -> int:
        if state is not None:
            return list(state).index(variables[k]) + 1
        return k + 1

    rng = random.Random(seed)
    syms = sorted(set().union(*(r.free_symbols() for r in row)) | set(variables))
    for a in range(len(row)):
        for b in range(a + 1, len(row)):
            diff_ab = E.simplify(
                E.add(row[a].diff(variables[b]), E.neg(row[b].diff(variables[a])))
            )
            if E.is_zero(diff_ab):
                continue
            worst = 0.0
            for _ in range(n_points):
                env = {s: rng.uniform(-2.0, 2.0) for s in syms}
                try:
                    worst = max(worst, abs(diff_ab.eval(env)))
                except E.DomainError:
                    continue
            if worst > tol:
                raise NonIntegrableConnection(index_of(a), index_of(b), worst)


def integrability_check(phi: Expr, state: Sequence[str]) -> IntegrabilityResult:
    """Split Phi = lambda + q(x) along the last state.

    Requires the coefficient of the last state in grad(Phi) to be the
    constant 1 (the fixed orientation); the connection row is then the
    remaining gradient, which is integrable with potential q = Phi - lambda.
    The cross-partial check still runs as a guard against malformed input.
    """
    phi = E._wrap(phi)
    state = tuple(state)
    lam = state[-1]
    dlam = E.simplify(phi.diff(lam))
    if not (isinstance(dlam, E.Const) and abs(dlam.value - 1.0) <= 1e-12):
        raise ValueError(
            f"coefficient of {lam} in the gradient must be the constant 1, "
            f"got {E.to_text(dlam)}"
        )
    connection = tuple(E.simplify(phi.diff(s)) for s in state[:-1])
    connection_integrable(connection, state[:-1], state=state)
    q = E.simplify(E.add(phi, E.neg(E.sym(lam))))
    return IntegrabilityResult(q=q, connection=connection)
