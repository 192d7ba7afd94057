"""Registry of worked systems wired as ready-to-run scenarios.

Each entry bundles a plant, the manifold data behind its feedback, the
rates and initial conditions used for the stock runs, and, where a closed
form exists, an independently transcribed reference law that the fresh
synthesis has to reproduce pointwise.  Entries are built on demand so the
rates and parameters can be overridden for sweeps; `get` caches the stock
build of each id.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

from . import expr as E
from . import psf as P
from . import synth
from .expr import Expr, parse
from .sysmodel import ControlAffineSystem, ControlLaw

BEHAVIOR_TAGS = (
    "GES-to-origin",
    "GAS-to-origin",
    "zeta-decay-to-named-equilibrium",
    "tracking",
    "periodic-orbit",
    "known-singularity",
)


class UnknownId(KeyError):
    """No catalog entry is registered under the requested id."""


@dataclass(frozen=True)
class CatalogEntry:
    """One ready-to-run scenario.

    components are the stage manifolds reported alongside a trajectory
    (phi is always the last stage, the one whose decay the law enforces).
    reference, when present, is a transcription of the published closed
    form; variants holds secondary closed forms under descriptive labels
    (labels ending in "-law" are feedbacks, the rest are alternate
    manifold shapes kept for comparison runs).
    """

    id: str
    title: str
    behavior: str
    route: str
    system: ControlAffineSystem
    components: tuple[Expr, ...]
    phi: Expr
    law: ControlLaw
    alphas: dict[str, float]
    rate: float
    x0s: tuple[tuple[float, ...], ...]
    reference: Expr | None = None
    variants: dict[str, Expr] = field(default_factory=dict)
    psf: P.PsfSystem | None = None
    zeta: tuple[Expr, ...] | None = None
    equilibrium: tuple[float, ...] | None = None
    sample_box: tuple[float, float] = (-2.0, 2.0)
    sample_boxes: dict[str, tuple[float, float]] = field(default_factory=dict)
    avoid: tuple[Expr, ...] = ()
    extras: dict[str, float] = field(default_factory=dict)
    notes: str = ""


def _law(text: str, **binds: float) -> Expr:
    """Parse a law template and bind the named rate constants."""
    table = {k: E.Const(float(v)) for k, v in binds.items()}
    return E.simplify(E.subst(parse(text), table))


def _take(ov: dict, key: str, default: float) -> float:
    return float(ov.pop(key, default))


def _reject_leftovers(entry_id: str, ov: dict) -> None:
    if ov:
        names = ", ".join(sorted(ov))
        raise ValueError(f"{entry_id}: unknown override(s) {names}")


def _zero() -> Expr:
    return E.Const(0.0)


def _one() -> Expr:
    return E.Const(1.0)


def _psf_pieces(p: P.PsfSystem):
    """Synthesize a strict-feedback entry and unpack the shared fields."""
    s = P.synthesize_psf(p)
    zeta = P.coordinate_transform(s)
    components = zeta[1:]
    return s.law, components, components[-1], zeta


# ---------------------------------------------------------------------------
# builders, one per id, in registry order


def _ex1(ov: dict) -> CatalogEntry:
    a = _take(ov, "alpha", 12.0)
    theta = _take(ov, "theta_a", 1.0)
    _reject_leftovers("ex1", ov)
    sys = ControlAffineSystem(
        ("x1", "x2"),
        f=(parse("-x1 + theta_a*x1^3*x2"), _zero()),
        g=(_zero(), _one()),
        params={"theta_a": theta},
    )
    phi = parse("x2 + x1^2")
    law = synth.synthesize(sys, phi, a)
    ref = _law("-0.5*(a - 4)*x1^2 - 0.5*a*x2 - 2*theta_a*x1^4*x2", a=a)
    return CatalogEntry(
        id="ex1",
        title="Planar system with a cubic cross coupling",
        behavior="GES-to-origin",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((1.0, 1.0), (-1.0, 0.5), (0.5, -2.0)),
        reference=ref,
        notes="The reference closed form doubles as the horizontal-"
        "contraction law it was matched against.",
    )


def _w2_plant() -> ControlAffineSystem:
    return ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(parse("-x1 + x1^2 + x1*x2"), parse("x3"), _zero()),
        g=(_zero(), _zero(), _one()),
    )


def _w2_case1(ov: dict) -> CatalogEntry:
    a1 = _take(ov, "alpha_1", 2.0)
    a2 = _take(ov, "alpha_2", 8.0)
    a = _take(ov, "alpha", 12.0)
    _reject_leftovers("w2-case1", ov)
    sys = _w2_plant()
    psi1 = E.add(E.sym("x2"), E.mul(0.5 * a1, E.sym("x1")))
    cs = synth.synthesize_cascade(sys, psi1, rates=(a2, a))
    zeta = P.coordinate_transform(sys.state, cs.manifolds)
    ref = None
    if a1 == 2.0:
        # printed form fixes the first-stage slope at one
        ref = _law(
            "-((-x1 + x1^2 + x1*x2)*(-1 + 2*x1 + x2 + a2/2)"
            " + x3*(x1 + a2/2)"
            " + (a/2)*(x3 - x1 + x1^2 + x1*x2 + (a2/2)*(x1 + x2)))",
            a2=a2,
            a=a,
        )
    return CatalogEntry(
        id="w2-case1",
        title="Triangular academic example, first-order stage targets",
        behavior="GAS-to-origin",
        route="cascade",
        system=sys,
        components=cs.manifolds,
        phi=cs.manifolds[-1],
        law=cs.law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha": a},
        rate=a,
        x0s=((1.0, 0.5, 0.0), (-0.5, 1.0, 1.0), (0.5, -1.0, 2.0)),
        reference=ref,
        zeta=zeta,
        equilibrium=(0.0, 0.0, 0.0),
        notes="alpha_1 enters through the slope of the first stage"
        " manifold; the transform zeta closes the loop in triangular"
        " form with rates (1, alpha_2/2, alpha/2).",
    )


def _w2_case2(ov: dict) -> CatalogEntry:
    a1 = _take(ov, "alpha_1", 2.0)
    a2 = _take(ov, "alpha_2", 8.0)
    a = _take(ov, "alpha", 12.0)
    _reject_leftovers("w2-case2", ov)
    sys = _w2_plant()
    # x1 * (x2 + (a1/2) x1): scaling the stage by x1 buys a linear
    # transformed loop at the price of a singular line
    psi1 = E.mul(E.sym("x1"), E.add(E.sym("x2"), E.mul(0.5 * a1, E.sym("x1"))))
    cs = synth.synthesize_cascade(sys, psi1, rates=(a2, a))
    zeta = P.coordinate_transform(sys.state, cs.manifolds)
    return CatalogEntry(
        id="w2-case2",
        title="Triangular academic example, singular stage choice",
        behavior="known-singularity",
        route="cascade",
        system=sys,
        components=cs.manifolds,
        phi=cs.manifolds[-1],
        law=cs.law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha": a},
        rate=a,
        x0s=((0.05, 0.5, 0.0),),
        zeta=zeta,
        avoid=(E.sym("x1"),),
        notes="The input channel of the second stage carries a factor"
        " x1, so the law blows up on the plane x1 = 0; runs that cross"
        " it stop with a singularity report.",
    )


def _w2_alt(ov: dict) -> CatalogEntry:
    a2 = _take(ov, "alpha_2", 20.0)
    a = _take(ov, "alpha", 10.0)
    _reject_leftovers("w2-alt", ov)
    sys = _w2_plant()
    comp1 = parse("x2 + x1")
    comp2 = E.simplify(E.add(E.sym("x3"), E.mul(0.5 * a2, E.sym("x2"))))
    phi = E.simplify(E.add(comp1, comp2))
    law = synth.synthesize(sys, phi, a)
    ref = _law(
        "x1 - x1^2 - x1*x2 - (1 + a2/2)*x3"
        " - (a/2)*(x1 + (1 + a2/2)*x2 + x3)",
        a2=a2,
        a=a,
    )
    return CatalogEntry(
        id="w2-alt",
        title="Triangular academic example, second-order target",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(comp1, comp2),
        phi=phi,
        law=law,
        alphas={"alpha_2": a2, "alpha": a},
        rate=a,
        x0s=((0.5, 0.5, -1.0), (-1.0, 1.0, 2.0)),
        reference=ref,
        equilibrium=(0.0, 0.0, 0.0),
        notes="Both stage manifolds are combined by addition before a"
        " single direct synthesis, so no stage is singular anywhere."
        " The top row grows like x1*(x1 + x2 - 1), so starts with"
        " x1 + x2 well above one escape; the listed points sit inside"
        " the basin.",
    )


def _w2_offmanifold(ov: dict) -> CatalogEntry:
    a = _take(ov, "alpha", 10.0)
    _reject_leftovers("w2-offmanifold-coords", ov)
    sys = ControlAffineSystem(
        ("x1", "psi1", "psi2"),
        f=(
            parse("-x1 + x1*psi1"),
            parse("x1*psi1 - psi1 + psi2"),
            parse("psi2 - psi1 + x1"),
        ),
        g=(_zero(), _zero(), _one()),
    )
    phi = parse("psi2 + x1*psi1")
    law = synth.synthesize(sys, phi, a)
    ref = _law(
        "-(psi2 - psi1 + x1 - 2*x1*psi1 + x1*psi1^2 + x1^2*psi1"
        " + x1*psi2 + (a/2)*(psi2 + x1*psi1))",
        a=a,
    )
    printed = _law(
        "-(psi2 - psi1 - 2*x1*psi1 + x1*psi1^2 + x1^2*psi1"
        " + x1*psi2 + (a/2)*(psi2 + x1*psi1))",
        a=a,
    )
    return CatalogEntry(
        id="w2-offmanifold-coords",
        title="Academic example closed in off-manifold coordinates",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((1.0, 0.5, -0.5), (-0.6, 0.8, 0.3)),
        reference=ref,
        variants={"published-as-printed-law": printed},
        equilibrium=(0.0, 0.0, 0.0),
        notes="The as-printed variant drops the bare x1 term that the"
        " last drift row feeds into the derivative of psi2 + x1*psi1.",
    )


def _w3(ov: dict) -> CatalogEntry:
    a = _take(ov, "alpha", 12.0)
    _reject_leftovers("w3", ov)
    sys = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(parse("-x1 + x1^2 + x1*x2 + x1*x3"), parse("x3"), parse("-x3")),
        g=(_zero(), _zero(), _one()),
    )
    phi = parse("x1 + x2 + x3")
    law = synth.synthesize(sys, phi, a)
    ref = _law("x1 - x1^2 - x1*x2 - x1*x3 - (a/2)*(x1 + x2 + x3)", a=a)
    printed = _law(
        "x3 - (a/2)*(x1 + x3 + x2) + x1 - x1^2 - x1*x2 - x1*x3", a=a
    )
    return CatalogEntry(
        id="w3",
        title="Unstructured third-order system",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((0.5, 0.5, 0.5), (-0.5, 1.0, 0.0)),
        reference=ref,
        variants={"published-as-printed-law": printed},
        equilibrium=(0.0, 0.0, 0.0),
        notes="The as-printed law carries a stray leading x3 that the"
        " damped last row already cancels; the corrected form agrees"
        " with the horizontal-contraction twin at alpha = 2.",
    )


def _integrator_chain(ov: dict) -> CatalogEntry:
    a1 = _take(ov, "alpha_1", 12.0)
    a2 = _take(ov, "alpha_2", 12.0)
    a3 = _take(ov, "alpha_3", 4.0)
    _reject_leftovers("integrator-chain", ov)
    p = P.PsfSystem(
        ("x1", "x2", "x3"),
        gammas=(parse("-x1^3"), _zero(), _zero()),
        thetas=(1.0, 1.0),
        lam=_one(),
        alphas=(a1, a2, a3),
    )
    law, components, phi, zeta = _psf_pieces(p)
    ref = _law(
        "-((a3/2)*(x3 + (a1/2 - 3*x1^2)*(-x1^3 + x2)"
        "   + (a2/2)*(x2 - x1^3 + (a1/2)*x1))"
        " + (a1/2 - 3*x1^2)*(-3*x1^2*(-x1^3 + x2) + x3)"
        " + (-x1^3 + x2)*(-6*x1*(-x1^3 + x2))"
        " + (a2/2)*(x3 + (a1/2 - 3*x1^2)*(-x1^3 + x2)))",
        a1=a1,
        a2=a2,
        a3=a3,
    )
    return CatalogEntry(
        id="integrator-chain",
        title="Cubic node behind a chain of two integrators",
        behavior="GES-to-origin",
        route="psf",
        system=p.to_affine(),
        components=components,
        phi=phi,
        law=law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha_3": a3},
        rate=a3,
        x0s=((1.0, -1.0, 0.5), (-2.0, 1.0, 0.0), (0.5, 0.5, -0.5)),
        reference=ref,
        psf=p,
        zeta=zeta,
        equilibrium=(0.0, 0.0, 0.0),
    )


def _maglev(ov: dict) -> CatalogEntry:
    m_b = _take(ov, "m_b", 3.0)
    grav = _take(ov, "g", 9.81)
    r_c = _take(ov, "R_c", 10.0)
    c_c = _take(ov, "c_c", 2.0)
    a1 = _take(ov, "alpha_1", 2.0)
    a2 = _take(ov, "alpha_2", 2.0)
    a3 = _take(ov, "alpha_3", 2.0)
    _reject_leftovers("maglev", ov)
    p = P.PsfSystem(
        ("x1", "x2", "x3"),
        gammas=(
            _zero(),
            E.Const(-m_b * grav),
            E.mul(-2.0 * r_c / c_c, parse("(1 - x1)*x3")),
        ),
        thetas=(1.0 / m_b, 1.0 / (2.0 * c_c)),
        lam=parse("2*sqrt(x3)"),
        alphas=(a1, a2, a3),
    )
    law, components, phi, zeta = _psf_pieces(p)
    ref = None
    if (a1, a2, a3) == (2.0, 2.0, 2.0):
        # printed form has the unit half-rates folded into the gains
        ref = _law(
            "(-1/(2*sqrt(x3)))*("
            "(-(2*R_c/c_c))*(1 - x1)*x3"
            " + 2*c_c*x2 + 4*c_c*(x3/(2*c_c) - m_b*g)"
            " + (x3 - 2*c_c*m_b*g + 2*c_c*x2 + 2*c_c*(x2 + m_b*x1)))",
            R_c=r_c,
            c_c=c_c,
            m_b=m_b,
            g=grav,
        )
    hover = 2.0 * c_c * m_b * grav
    return CatalogEntry(
        id="maglev",
        title="Magnetic levitation rig in strict-feedback form",
        behavior="zeta-decay-to-named-equilibrium",
        route="psf",
        system=p.to_affine(),
        components=components,
        phi=phi,
        law=law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha_3": a3},
        rate=a3,
        x0s=((0.2, 0.5, 100.0), (-0.1, -0.3, 130.0)),
        reference=ref,
        psf=p,
        zeta=zeta,
        equilibrium=(0.0, 0.0, hover),
        sample_boxes={"x3": (0.2, 3.0)},
        extras={"m_b": m_b, "g": grav, "R_c": r_c, "c_c": c_c},
        notes="The flux state x3 must stay positive (the input gain is"
        " 2*sqrt(x3)); the stages settle onto the hover point rather"
        " than the origin, so convergence is judged in zeta.",
    )


def _dc_motor(ov: dict) -> CatalogEntry:
    th_a = _take(ov, "theta_a", 35.5391)
    th_b = _take(ov, "theta_b", 0.2821)
    th_c = _take(ov, "theta_c", 2.3112)
    th_d = _take(ov, "theta_d", 3110.0)
    a1 = _take(ov, "alpha_1", 2.0)
    a2 = _take(ov, "alpha_2", 2.0)
    a3 = _take(ov, "alpha_3", 2.0)
    _reject_leftovers("dc-motor", ov)
    p = P.PsfSystem(
        ("x1", "x2", "x3"),
        gammas=(
            _zero(),
            parse("-theta_a*sin(x1) - theta_b*x2"),
            parse("-theta_c*x2 - theta_d*x3"),
        ),
        thetas=(1.0, 1.0),
        lam=_one(),
        alphas=(a1, a2, a3),
        params={
            "theta_a": th_a,
            "theta_b": th_b,
            "theta_c": th_c,
            "theta_d": th_d,
        },
    )
    law, components, phi, zeta = _psf_pieces(p)
    ref = _law(
        "-(-theta_c*x2 - theta_d*x3"
        " + (a3/2)*(x3 - theta_a*sin(x1) - theta_b*x2 + (a1/2)*x2"
        "   + (a2/2)*(x2 + (a1/2)*x1))"
        " + x2*(-theta_a*cos(x1) + (a1*a2)/4)"
        " + (x3 - theta_a*sin(x1) - theta_b*x2)*(-theta_b + a1/2 + a2/2))",
        a1=a1,
        a2=a2,
        a3=a3,
    )
    return CatalogEntry(
        id="dc-motor",
        title="DC motor driving a manipulator arm",
        behavior="GES-to-origin",
        route="psf",
        system=p.to_affine(),
        components=components,
        phi=phi,
        law=law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha_3": a3},
        rate=a3,
        x0s=((0.5, 0.0, 0.0), (1.0, -0.5, 2.0)),
        reference=ref,
        psf=p,
        zeta=zeta,
        equilibrium=(0.0, 0.0, 0.0),
    )


def _ccm(ov: dict) -> CatalogEntry:
    a1 = _take(ov, "alpha_1", 2.0)
    a2 = _take(ov, "alpha_2", 10.0)
    a = _take(ov, "alpha", 20.0)
    _reject_leftovers("ccm-3rd-order", ov)
    sys = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(
            parse("-x1 + x3"),
            parse("x1^2 - x2 - 2*x1*x3 + x3"),
            parse("-x2"),
        ),
        g=(_zero(), _zero(), _one()),
    )
    comp1 = E.simplify(E.add(E.mul(a1, E.sym("x1")), E.sym("x3")))
    comp2 = E.simplify(E.add(E.sym("x2"), E.neg(E.mul(a2, E.sym("x3")))))
    phi = E.simplify(E.add(comp1, comp2))
    law = synth.synthesize(sys, phi, a)
    ref = _law(
        "(-1/(1 - a2))*(a1*(-x1 + x3) + (x1^2 - x2 - 2*x1*x3 + x3)"
        " + (1 - a2)*(-x2) + (a/2)*(a1*x1 + x2 + (1 - a2)*x3))",
        a1=a1,
        a2=a2,
        a=a,
    )
    printed = _law(
        "(-1/(1 - a2))*(a1*(-x1 + x3) + (x1^2 - x2 - 2*x1*x3 + x3)"
        " - x2 + (a/2)*(a1*x1 + x2 + (1 - a2)*x3))",
        a1=a1,
        a2=a2,
        a=a,
    )
    return CatalogEntry(
        id="ccm-3rd-order",
        title="Third-order system outside the feedback-linearizable class",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(comp1, comp2),
        phi=phi,
        law=law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha": a},
        rate=a,
        x0s=((0.5, 0.5, 0.5), (9.0, 9.0, 9.0)),
        reference=ref,
        variants={"published-as-printed-law": printed},
        equilibrium=(0.0, 0.0, 0.0),
        notes="The as-printed law writes the last drift row with a bare"
        " -x2 where the chain rule yields (1 - alpha_2)*(-x2); the"
        " difference is reported, not silently resolved.",
    )


def _slotine_plant(th: Mapping[str, float]) -> ControlAffineSystem:
    return ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(
            parse("x3 - theta_a*x1"),
            parse("-theta_b*x1^2 - x2"),
            parse("tanh(x2) - theta_c*x3 - theta_d*x1^2"),
        ),
        g=(_zero(), _zero(), _one()),
        params=dict(th),
    )


_SLOTINE_NOMINAL = {
    "theta_a": -0.3,
    "theta_b": -0.8,
    "theta_c": -0.25,
    "theta_d": -0.75,
}


def _slotine_reg(ov: dict) -> CatalogEntry:
    a1 = _take(ov, "alpha_1", 10.0)
    a2 = _take(ov, "alpha_2", 0.1)
    a = _take(ov, "alpha", 20.0)
    th = {k: _take(ov, k, v) for k, v in _SLOTINE_NOMINAL.items()}
    _reject_leftovers("slotine-reg", ov)
    sys = _slotine_plant(th)
    comp1 = E.simplify(E.add(E.mul(a1, E.sym("x1")), E.sym("x3")))
    comp2 = E.simplify(
        E.add(E.pow_(E.sym("x1"), 2), E.neg(E.mul(a2, E.sym("x2"))))
    )
    phi = E.simplify(E.add(comp1, comp2))
    law = synth.synthesize(sys, phi, a)
    ref = _law(
        "-(tanh(x2) - theta_c*x3 - theta_d*x1^2"
        " + (a1 + 2*x1)*(x3 - theta_a*x1) - a2*(-theta_b*x1^2 - x2)"
        " + (a/2)*(a1*x1 + x3 + x1^2 - a2*x2))",
        a1=a1,
        a2=a2,
        a=a,
    )
    return CatalogEntry(
        id="slotine-reg",
        title="Regulation for a plant outside strict-feedback form",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(comp1, comp2),
        phi=phi,
        law=law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha": a},
        rate=a,
        x0s=((0.5, -0.5, -0.2),),
        reference=ref,
        equilibrium=(0.0, 0.0, 0.0),
        notes="The manifold combination is parameter-free, so the same"
        " feedback keeps working with the controller's theta values"
        " detuned or zeroed while the plant stays nominal.",
    )


def _slotine_track(ov: dict) -> CatalogEntry:
    a1 = _take(ov, "alpha_1", 200.0)
    a2 = _take(ov, "alpha_2", 0.1)
    a = _take(ov, "alpha", 2.0)
    th = {k: _take(ov, k, v) for k, v in _SLOTINE_NOMINAL.items()}
    ref_text = str(ov.pop("x1d", "0.5*sin(0.5*t)"))
    _reject_leftovers("slotine-track", ov)
    r = E.simplify(parse(ref_text))
    rd = E.simplify(E.grad(r, ("t",))[0])
    rdd = E.simplify(E.grad(rd, ("t",))[0])
    binds = {"r_": r, "rd_": rd, "rdd_": rdd}

    def fill(text: str) -> Expr:
        return E.simplify(E.subst(parse(text), binds))

    sys = ControlAffineSystem(
        ("e1", "x2", "x3"),
        f=(
            fill("x3 - theta_a*(e1 + r_) - rd_"),
            fill("-theta_b*(e1 + r_)^2 - x2"),
            fill("tanh(x2) - theta_c*x3 - theta_d*(e1 + r_)^2"),
        ),
        g=(_zero(), _zero(), _one()),
        params=dict(th),
        time_symbol="t",
    )
    phi = fill(
        "x3 - theta_a*r_ - rd_ + {a1}*e1 + (e1 + r_)^2 - {a2}*x2".format(
            a1=a1, a2=a2
        )
    )
    law = synth.synthesize(sys, phi, a)
    ref = E.simplify(
        E.subst(
            parse(
                "-((a1 + 2*(e1 + r_))*(x3 - theta_a*(e1 + r_) - rd_)"
                " + a2*(theta_b*(e1 + r_)^2 + x2)"
                " + tanh(x2) - theta_c*x3 - theta_d*(e1 + r_)^2"
                " - theta_a*rd_ - rdd_ + 2*(e1 + r_)*rd_"
                " + (a/2)*(x3 - theta_a*r_ - rd_ + a1*e1"
                "   + (e1 + r_)^2 - a2*x2))"
            ),
            {**binds, "a1": E.Const(a1), "a2": E.Const(a2), "a": E.Const(a)},
        )
    )
    return CatalogEntry(
        id="slotine-track",
        title="Tracking variant of the regulation example",
        behavior="tracking",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha_1": a1, "alpha_2": a2, "alpha": a},
        rate=a,
        x0s=((0.5, -0.5, -0.2),),
        reference=ref,
        extras={"alpha_1": a1},
        notes="States are the tracking error e1 and the two inner"
        " states; the manifold and law pick up the reference signal"
        " and its first two derivatives, so both depend on time."
        " The published closed form misplaces a bracket and drops the"
        " time-derivative terms, so the stored reference is the"
        " re-derivation from the same manifold.",
    )


def _ff_simple(ov: dict) -> CatalogEntry:
    a = _take(ov, "alpha", 4.0)
    _reject_leftovers("ff-simple", ov)
    sys = ControlAffineSystem(
        ("x1", "x2"),
        f=(parse("x2^3"), parse("-x2^3")),
        g=(_zero(), parse("1 + x2^2")),
    )
    mu = parse("-x2")
    law = synth.synthesize_feedforward(sys, mu, a)
    phi = E.simplify(E.add(E.sym("x1"), E.neg(mu)))
    ref = _law("-((a/2)*(x1 + x2))/(1 + x2^2)", a=a)
    return CatalogEntry(
        id="ff-simple",
        title="Feedforward system with a cubic top integrator",
        behavior="zeta-decay-to-named-equilibrium",
        route="feedforward",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((1.0, -0.5), (0.5, 1.0)),
        reference=ref,
        variants={"lower-manifold": mu},
        zeta=(phi,),
        equilibrium=(0.0, 0.0),
        extras={"x_norm_bound_20": 0.3},
        notes="x1 + x2 decays exactly, but on the manifold x2 obeys"
        " x2' = -x2^3, a center direction: the origin is reached only"
        " asymptotically, so the 20 s state norm is checked against a"
        " recorded envelope instead of a small tolerance.",
    )


def _ff_sepulchre(ov: dict) -> CatalogEntry:
    a = _take(ov, "alpha", 2.0)
    _reject_leftovers("ff-sepulchre", ov)
    sys = ControlAffineSystem(
        ("x1", "x2"),
        f=(parse("x2"), _zero()),
        g=(parse("-x2^2"), _one()),
    )
    phi = parse("x1 + x2 + (1/3)*x2^3")
    law = synth.synthesize(sys, phi, a)
    ref = _law("-(x2 + (a/2)*(x1 + x2 + (1/3)*x2^3))", a=a)
    composite = _law("-2*x2 - (x1 + x2 + (1/3)*x2^3)")
    return CatalogEntry(
        id="ff-sepulchre",
        title="Strict-feedforward system with control in both rows",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((1.0, 0.5), (-0.5, -1.0)),
        reference=ref,
        variants={
            "composite-law": composite,
            "uncorrected-manifold": parse("x1 + x2 + x2^3"),
        },
        equilibrium=(0.0, 0.0),
        notes="The input feeds both rows, so the lower-manifold route"
        " does not apply and the corrected manifold goes straight to"
        " the direct synthesis (the gradient-input product is exactly"
        " one).  The composite variant stacks an extra -x2 on top and"
        " does not satisfy the exact-decay identity; the uncorrected"
        " manifold is kept for comparison runs only.",
    )


def _interlaced(ov: dict) -> CatalogEntry:
    a = _take(ov, "alpha", 4.0)
    _reject_leftovers("interlaced", ov)
    sys = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(parse("x2 + x2*x3"), parse("x3 + x2^2"), parse("x1*x2*x3")),
        g=(_zero(), _zero(), _one()),
    )
    phi = parse(
        "x3 + x2 + x2^2"
        " + (1 - x2^2)*(x1 + x2 - (1/2)*x2^2 - (1/3)*x2^3)"
    )
    law = synth.synthesize(sys, phi, a)
    ref = _law(
        "-(x1*x2*x3) - ((x3 + x2^2) + 2*x2*(x3 + x2^2)"
        " + ((x2 + x2*x3) + (1 - x2 - x2^2)*(x3 + x2^2))*(1 - x2^2)"
        " + (x1 + x2 - (1/2)*x2^2 - (1/3)*x2^3)*(-2*x2*(x3 + x2^2))"
        " + (a/2)*(x3 + x2 + x2^2"
        "   + (1 - x2^2)*(x1 + x2 - (1/2)*x2^2 - (1/3)*x2^3)))",
        a=a,
    )
    return CatalogEntry(
        id="interlaced",
        title="Third-order interlaced system",
        behavior="GAS-to-origin",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((0.5, 0.5, 0.0), (-0.4, 0.3, 0.2)),
        reference=ref,
        equilibrium=(0.0, 0.0, 0.0),
        notes="Neither triangular shape fits (x2*x3 above, x1*x2*x3 and"
        " x2^2 below), so the manifold blends a middle-row virtual law"
        " with one forwarding step before the direct synthesis.",
    )


def _iwp(ov: dict) -> CatalogEntry:
    k = _take(ov, "k", 0.5)
    b = _take(ov, "b", 1.0)
    th_m = _take(ov, "theta_m", 9.81)
    a = _take(ov, "alpha", 10.0)
    _reject_leftovers("iwp-orbital", ov)
    sys = ControlAffineSystem(
        ("x1", "x2", "x3", "x4"),
        f=(parse("x3"), parse("x4"), parse("theta_m*sin(x1)"), _zero()),
        g=(_zero(), _zero(), E.Const(-b), _one()),
        params={"theta_m": th_m},
    )
    phi = E.simplify(
        E.add(
            E.sym("x2"),
            E.mul(-k, E.sym("x1")),
            E.sym("x4"),
            E.mul(-k, E.sym("x3")),
        )
    )
    law = synth.synthesize(sys, phi, a)
    ref = _law(
        "(-1/(1 + k_*b_))*(x4 - k_*x3 - k_*theta_m*sin(x1)"
        " + (a/2)*(x2 - k_*x1 + x4 - k_*x3))",
        k_=k,
        b_=b,
        a=a,
    )
    return CatalogEntry(
        id="iwp-orbital",
        title="Inertia wheel pendulum, orbital stabilization",
        behavior="periodic-orbit",
        route="direct",
        system=sys,
        components=(phi,),
        phi=phi,
        law=law,
        alphas={"alpha": a},
        rate=a,
        x0s=((2.6, 1.0, 0.3, 0.0),),
        reference=ref,
        extras={"k": k, "b": b, "a_target": th_m / (1.0 + k * b)},
        notes="On the manifold the link obeys an undamped pendulum, so"
        " trajectories settle onto a periodic orbit instead of a"
        " point; a_target is the pendulum constant of the reduced"
        " motion and never enters the feedback.",
    )


_BUILDERS: dict[str, Callable[[dict], CatalogEntry]] = {
    "ex1": _ex1,
    "w2-case1": _w2_case1,
    "w2-case2": _w2_case2,
    "w2-alt": _w2_alt,
    "w2-offmanifold-coords": _w2_offmanifold,
    "w3": _w3,
    "integrator-chain": _integrator_chain,
    "maglev": _maglev,
    "dc-motor": _dc_motor,
    "ccm-3rd-order": _ccm,
    "slotine-reg": _slotine_reg,
    "slotine-track": _slotine_track,
    "ff-simple": _ff_simple,
    "ff-sepulchre": _ff_sepulchre,
    "interlaced": _interlaced,
    "iwp-orbital": _iwp,
}


def build(entry_id: str, **overrides: float) -> CatalogEntry:
    """Build an entry, optionally overriding rates or parameters.

    Overrides use the names shown in the entry's alphas and extras
    (e.g. alpha, alpha_2, theta_a, k); unknown names raise ValueError.
    Reference laws whose printed form hardwires a stock rate are
    dropped when that rate is overridden.
    """
    try:
        builder = _BUILDERS[entry_id]
    except KeyError:
        raise UnknownId(entry_id) from None
    return builder(dict(overrides))


@lru_cache(maxsize=None)
def get(entry_id: str) -> CatalogEntry:
    """The stock build of the entry (cached; treat it as read-only)."""
    return build(entry_id)


def list() -> tuple[str, ...]:
    """All entry ids in registry order."""
    return tuple(_BUILDERS)


def on_manifold(
    entry: CatalogEntry,
    x0: Sequence[float] | None = None,
    tol: float = 1e-12,
) -> tuple[float, ...]:
    """Project an initial condition onto Phi = 0.

    One-coordinate Newton iteration holding the rest of the point fixed.
    Candidate coordinates are tried in order of decreasing gradient
    magnitude at the start (later states first on ties); a coordinate
    whose fiber misses the manifold, or whose root lands on the entry's
    declared singular set, is abandoned for the next one.
    Parameters are bound to their stock values and time to zero.
    """
    start = [float(v) for v in (entry.x0s[0] if x0 is None else x0)]
    state = entry.system.state
    grads = E.grad(entry.phi, state)

    def env(x) -> dict[str, float]:
        e = dict(entry.system.params)
        e.update(zip(state, x))
        if entry.system.time_symbol:
            e[entry.system.time_symbol] = 0.0
        return e

    slopes = [abs(g.eval(env(start))) for g in grads]
    order = sorted((j for j in range(len(state)) if slopes[j] > 0.0),
                   key=lambda j: (-slopes[j], -j))
    if not order:
        raise ValueError("the manifold gradient vanishes at the point")
    # the registry list() shadows the builtin here
    for coord in order:
        x = start.copy()
        for _ in range(80):
            val = entry.phi.eval(env(x))
            if abs(val) <= tol:
                if any(abs(a.eval(env(x))) < 1e-6 for a in entry.avoid):
                    break
                return tuple(x)
            slope = grads[coord].eval(env(x))
            if slope == 0.0:
                break
            x[coord] -= val / slope
    raise ValueError("projection onto the manifold did not converge")
