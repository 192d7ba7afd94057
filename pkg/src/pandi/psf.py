"""Strict-feedback (lower-triangular) synthesis by manifold recursion, and
the nontriangular variant that absorbs the x2 coupling into a scaled
manifold.

The strict-feedback plant is

    x_m_dot = gamma_m(x_1..x_m) + theta_m x_{m+1}     m < n
    x_n_dot = gamma_n(x) + lam(x) u

Each stage m treats x_{m+1} as a virtual input for the off-manifold
coordinate zeta_m = x_m - phi_{m-1} and asks for zeta_m_dot =
-(alpha_m/2) zeta_m, which yields the recursion

    b_m   = (alpha_m/2)(x_m - phi_{m-1}) - sum_i dphi_{m-1}/dx_i Omega_i
    phi_m = -(gamma_m + b_m)/theta_m

with phi_0 = 0, Omega_i the input-free rows, and finally
u = -(gamma_n + b_n)/lam.  Every stage is the generic synthesis formula
applied to its own manifold; step_as_generic() rebuilds a stage that way
so the agreement can be asserted.  In the transformed coordinates the
closed loop is exactly triangular,

    zeta_m_dot = -(alpha_m/2) zeta_m + theta_m zeta_{m+1}
    zeta_n_dot = -(alpha_n/2) zeta_n

which verify_triangular() checks numerically.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from . import expr as E
from .expr import Expr
from .sysmodel import ControlAffineSystem, ControlLaw, SingularityHit
from .synth import NonpositiveRate, synthesize


class ZeroGain(ValueError):
    """Interconnection gains theta_m must be nonzero."""


class LambdaVanishes(SingularityHit):
    """The input coefficient lam(x) vanished at a runtime point."""


class ConnectionSingular(ValueError):
    """1 - L_g2 sigma1 comes within the safety margin of zero on the
    sampled domain."""


CONNECTION_MARGIN = 0.05


class _PsfLaw(ControlLaw):
    # same contract as ControlLaw, but the singular cause has a name
    def evaluate(self, env):
        try:
            return super().evaluate(env)
        except LambdaVanishes:
            raise
        except SingularityHit as err:
            raise LambdaVanishes(err.point, err.guard_value) from None


class PsfSystem:
    """Strict-feedback plant data.

    gammas[m] may depend on x_1..x_{m+1} only (checked by free-symbol scan);
    thetas are the nonzero interconnection gains; lam multiplies the input
    in the last row; alphas are the per-stage decay rates.
    """

    def __init__(
        self,
        state: Sequence[str],
        gammas: Sequence[Expr],
        thetas: Sequence[float],
        lam: Expr,
        alphas: Sequence[float],
        params: Mapping[str, float] | None = None,
    ):
        self.state = tuple(state)
        n = len(self.state)
        if n < 2:
            raise ValueError("strict-feedback form needs at least two states")
        if len(gammas) != n:
            raise ValueError(f"need {n} gamma terms")
        if len(thetas) != n - 1:
            raise ValueError(f"need {n - 1} interconnection gains")
        if len(alphas) != n:
            raise ValueError(f"need {n} decay rates")
        self.params = {k: float(v) for k, v in (params or {}).items()}
        self.gammas = tuple(E._wrap(g) for g in gammas)
        self.thetas = tuple(float(t) for t in thetas)
        self.lam = E._wrap(lam)
        self.alphas = tuple(float(a) for a in alphas)
        for m, th in enumerate(self.thetas, start=1):
            if th == 0.0:
                raise ZeroGain(f"theta_{m} is zero")
        for a in self.alphas:
            if a <= 0.0:
                raise NonpositiveRate(f"alpha = {a}")
        allowed_params = set(self.params)
        for m, gam in enumerate(self.gammas, start=1):
            ok = set(self.state[:m]) | allowed_params
            extra = gam.free_symbols() - ok
            if extra:
                raise ValueError(
                    f"gamma_{m} may depend on {sorted(ok)} only, found {sorted(extra)}"
                )
        extra = self.lam.free_symbols() - (set(self.state) | allowed_params)
        if extra:
            raise ValueError(f"lam uses undeclared symbols {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.state)

    def input_free_rows(self) -> tuple[Expr, ...]:
        """The first n-1 closed rows Omega_i = gamma_i + theta_i x_{i+1}."""
        return tuple(
            E.simplify(E.add(self.gammas[i], E.mul(self.thetas[i], E.sym(self.state[i + 1]))))
            for i in range(self.dim - 1)
        )

    def to_affine(self) -> ControlAffineSystem:
        f = list(self.input_free_rows()) + [self.gammas[-1]]
        g = [E.Const(0.0)] * (self.dim - 1) + [self.lam]
        return ControlAffineSystem(self.state, f, g, params=self.params)


@dataclass(frozen=True)
class PsfSynthesis:
    system: PsfSystem
    bs: tuple[Expr, ...]
    phis: tuple[Expr, ...]  # phi_0 = 0 up to phi_{n-1}
    law: ControlLaw


def synthesize_psf(p: PsfSystem) -> PsfSynthesis:
    n = p.dim
    omega = p.input_free_rows()
    phis: list[Expr] = [E.Const(0.0)]
    bs: list[Expr] = []
    for m in range(1, n + 1):
        x_m = E.sym(p.state[m - 1])
        phi_prev = phis[m - 1]
        zeta = E.add(x_m, E.neg(phi_prev))
        drag = E.add(
            *(E.mul(phi_prev.diff(p.state[i]), omega[i]) for i in range(m - 1))
        )
        b_m = E.simplify(E.add(E.mul(0.5 * p.alphas[m - 1], zeta), E.neg(drag)))
        bs.append(b_m)
        if m < n:
            phi_m = E.simplify(
                E.div(E.neg(E.add(p.gammas[m - 1], b_m)), p.thetas[m - 1])
            )
            phis.append(phi_m)
    u = E.simplify(E.div(E.neg(E.add(p.gammas[n - 1], bs[-1])), p.lam))
    law = _PsfLaw(u, guard=p.lam, tag="psf")
    return PsfSynthesis(system=p, bs=tuple(bs), phis=tuple(phis), law=law)


def coordinate_transform(
    s: PsfSynthesis | Sequence[str],
    manifolds: Sequence[Expr] | None = None,
) -> tuple[Expr, ...]:
    """zeta_m = x_m - phi_{m-1} for m = 1..n.

    Accepts either a PsfSynthesis, or a state-name sequence together with
    the n-1 stage manifolds (zeta_1 is then the first state itself, since
    phi_0 = 0, and each manifold already is x_{m+1} - phi_m).
    """
    if manifolds is not None:
        state = tuple(s)
        if len(manifolds) != len(state) - 1:
            raise ValueError(
                f"need {len(state) - 1} manifolds for {len(state)} states"
            )
        return (E.sym(state[0]),) + tuple(E.simplify(E._wrap(m)) for m in manifolds)
    return tuple(
        E.simplify(E.add(E.sym(name), E.neg(s.phis[m])))
        for m, name in enumerate(s.system.state)
    )


def step_as_generic(p: PsfSystem, m: int) -> ControlLaw:
    """Stage m rebuilt as the generic synthesis on its own manifold.

    The subsystem keeps rows 1..m with the next coordinate (or u for m = n)
    as the input; the manifold is x_m - phi_{m-1} at rate alpha_m.
    """
    if not 1 <= m <= p.dim:
        raise ValueError(f"stage {m} out of range")
    s = synthesize_psf(p)
    omega = p.input_free_rows()
    sub_state = p.state[:m]
    f = [omega[i] for i in range(m - 1)] + [p.gammas[m - 1]]
    g = [E.Const(0.0)] * (m - 1) + [p.lam if m == p.dim else E.Const(p.thetas[m - 1])]
    sub = ControlAffineSystem(sub_state, f, g, params=p.params)
    manifold = E.add(E.sym(p.state[m - 1]), E.neg(s.phis[m - 1]))
    return synthesize(sub, manifold, p.alphas[m - 1])


def closed_loop_rows(s: PsfSynthesis) -> tuple[Expr, ...]:
    p = s.system
    rows = list(p.input_free_rows())
    rows.append(E.simplify(E.add(p.gammas[-1], E.mul(p.lam, s.law.u))))
    return tuple(rows)


def verify_triangular(
    s: PsfSynthesis,
    n_points: int = 100,
    seed: int = 0,
    box: tuple[float, float] = (-2.0, 2.0),
    boxes: Mapping[str, tuple[float, float]] | None = None,
) -> float:
    """Largest deviation of the transformed closed loop from the triangular
    normal form over random points.  boxes overrides the sampling interval
    per state (needed when lam or a gamma has a restricted domain)."""
    p = s.system
    n = p.dim
    rng = random.Random(seed)
    zetas = coordinate_transform(s)
    rows = closed_loop_rows(s)
    worst = 0.0
    accepted = 0
    attempts = 0
    while accepted < n_points:
        attempts += 1
        if attempts > 60 * n_points:
            raise RuntimeError("could not sample enough admissible points")
        env = dict(p.params)
        for name in p.state:
            lo, hi = (boxes or {}).get(name, box)
            env[name] = rng.uniform(lo, hi)
        try:
            if abs(p.lam.eval(env)) < 1e-6:
                continue
            xdot = [r.eval(env) for r in rows]
            zeta_v = [z.eval(env) for z in zetas]
            zdot = []
            for m in range(n):
                val = xdot[m]
                val -= sum(
                    s.phis[m].diff(p.state[i]).eval(env) * xdot[i] for i in range(m)
                )
                zdot.append(val)
        except E.DomainError:
            continue
        for m in range(n):
            want = -0.5 * p.alphas[m] * zeta_v[m]
            if m < n - 1:
                want += p.thetas[m] * zeta_v[m + 1]
            worst = max(worst, abs(zdot[m] - want))
        accepted += 1
    return worst


def mutated(s: PsfSynthesis, stage: int, bump: Expr) -> PsfSynthesis:
    """A copy of the synthesis with phi_stage perturbed, for negative tests."""
    phis = list(s.phis)
    phis[stage] = E.add(phis[stage], bump)
    return replace(s, phis=tuple(phis))


@dataclass(frozen=True)
class NontriangularSynthesis:
    system: ControlAffineSystem
    psi1: Expr
    psi2: Expr
    scale: Expr  # M(z)
    sigma2: Expr
    law: ControlLaw


def synthesize_nontriangular(
    z_state: Sequence[str],
    f: Sequence[Expr],
    g1: Sequence[Expr],
    g2: Sequence[Expr],
    sigma1: Expr,
    alphas: tuple[float, float],
    x_names: tuple[str, str] = ("x1", "x2"),
    params: Mapping[str, float] | None = None,
    n_points: int = 200,
    seed: int = 0,
) -> NontriangularSynthesis:
    """Synthesis for z_dot = f(z) + g1(z) x1 + g2(z) x2, x1_dot = x2,
    x2_dot = u with a caller-supplied first-stage target x1 = sigma1(z).

    The x2 coupling enters the first off-manifold derivative, so the second
    manifold is rescaled by M = 1/(1 - L_g2 sigma1); the scale must keep a
    CONNECTION_MARGIN distance from its pole at every sampled point of the
    box (else ConnectionSingular).
    """
    a1, a2 = alphas
    if a1 <= 0 or a2 <= 0:
        raise NonpositiveRate(f"alphas = {alphas}")
    z_state = tuple(z_state)
    x1n, x2n = x_names
    sigma1 = E._wrap(sigma1)
    f = [E._wrap(e) for e in f]
    g1 = [E._wrap(e) for e in g1]
    g2 = [E._wrap(e) for e in g2]
    lg2 = E.simplify(E.add(*(E.mul(sigma1.diff(z), e) for z, e in zip(z_state, g2))))
    den = E.simplify(E.add(1.0, E.neg(lg2)))
    rng = random.Random(seed)
    params = {k: float(v) for k, v in (params or {}).items()}
    for _ in range(n_points):
        env = dict(params)
        env.update({z: rng.uniform(-2.0, 2.0) for z in z_state})
        try:
            if abs(den.eval(env)) < CONNECTION_MARGIN:
                raise ConnectionSingular(
                    f"1 - L_g2 sigma1 = {den.eval(env):.3e} near {env}"
                )
        except E.DomainError:
            continue
    scale = E.div(1.0, den)
    lf = E.add(*(E.mul(sigma1.diff(z), e) for z, e in zip(z_state, f)))
    lg1 = E.add(*(E.mul(sigma1.diff(z), e) for z, e in zip(z_state, g1)))
    x1 = E.sym(x1n)
    x2 = E.sym(x2n)
    psi1 = E.simplify(E.add(x1, E.neg(sigma1)))
    sigma2 = E.simplify(
        E.mul(scale, E.add(lf, E.mul(x1, lg1), E.mul(-0.5 * a1, psi1)))
    )
    psi2 = E.simplify(E.mul(scale, E.add(x2, E.neg(sigma2))))
    state = list(z_state) + [x1n, x2n]
    full_f = [
        E.simplify(E.add(fi, E.mul(g1i, x1), E.mul(g2i, x2)))
        for fi, g1i, g2i in zip(f, g1, g2)
    ] + [x2, E.Const(0.0)]
    full_g = [E.Const(0.0)] * len(z_state) + [E.Const(0.0), E.Const(1.0)]
    system = ControlAffineSystem(state, full_f, full_g, params=params)
    inner = synthesize(system, psi2, a2, tag="nontriangular")
    law = ControlLaw(inner.u, guard=den, tag="nontriangular")
    return NontriangularSynthesis(
        system=system, psi1=psi1, psi2=psi2, scale=scale, sigma2=sigma2, law=law
    )
