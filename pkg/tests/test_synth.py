"""The synthesis formula and its cascade and feedforward specialisations.

The load-bearing property: along f + g*u the manifold function satisfies
d/dt Phi = -(alpha/2) Phi identically, so the checks below compare the
symbolic derivative of Phi under the closed loop against that target.
"""

import pytest

from pandi import expr as E
from pandi import manifold as M
from pandi import synth
from pandi.sysmodel import ControlAffineSystem, ControlLaw


def decay_residual(sys, phi, law, alpha):
    """grad(Phi).(f + g u) + dPhi/dt + (alpha/2) Phi, identically zero
    when the law enforces the exact decay."""
    along = E.add(*(E.mul(phi.diff(s), E.add(fe, E.mul(ge, law.u)))
                    for s, fe, ge in zip(sys.state, sys.f, sys.g)))
    if sys.time_symbol and sys.time_symbol in phi.free_symbols():
        along = E.add(along, phi.diff(sys.time_symbol))
    return E.add(along, E.mul(0.5 * alpha, phi))


def sample_symbols(sys, *exprs):
    names = set(sys.state) | set(sys.params)
    if sys.time_symbol:
        names.add(sys.time_symbol)
    for e in exprs:
        names |= e.free_symbols()
    return sorted(names)


def test_law_enforces_exact_decay():
    sys = ControlAffineSystem(
        ("x1", "x2"),
        f=(E.parse("-x1 + theta_a*x1^3*x2"), E.Const(0.0)),
        g=(E.Const(0.0), E.Const(1.0)),
        params={"theta_a": 1.0},
    )
    phi = E.parse("x2 + x1^2")
    law = synth.synthesize(sys, phi, 12.0)
    res = decay_residual(sys, phi, law, 12.0)
    assert E.equivalent(res, E.Const(0.0), sample_symbols(sys, law.u),
                        avoid=(law.guard,))
    assert law.guard == E.Const(1.0) or E.equivalent(
        law.guard, E.Const(1.0), sample_symbols(sys))


def test_law_enforces_decay_with_state_dependent_gain():
    sys = ControlAffineSystem(
        ("x1", "x2"),
        f=(E.parse("x2"), E.Const(0.0)),
        g=(E.parse("-x2^2"), E.Const(1.0)),
    )
    phi = E.parse("x1 + x2 + (1/3)*x2^3")
    law = synth.synthesize(sys, phi, 2.0)
    res = decay_residual(sys, phi, law, 2.0)
    assert E.equivalent(res, E.Const(0.0), sample_symbols(sys, law.u),
                        avoid=(law.guard,))


def test_law_enforces_decay_time_varying():
    sys = ControlAffineSystem(
        ("x1",), f=(E.Const(0.0),), g=(E.Const(1.0),), time_symbol="t")
    phi = E.parse("x1 - sin(t)")
    law = synth.synthesize(sys, phi, 6.0)
    res = decay_residual(sys, phi, law, 6.0)
    assert E.equivalent(res, E.Const(0.0), sample_symbols(sys, law.u))


def test_storage_and_passive_output():
    y = E.parse("x2 + x1^2")
    st = synth.storage(y, 3.0)
    assert E.equivalent(st.S, E.parse("0.5*(x2 + x1^2)^2"), ("x1", "x2"))
    assert st.alpha == 3.0
    with pytest.raises(synth.NonpositiveRate):
        synth.storage(y, 0.0)
    po = synth.passive_output(y, ("x1", "x2"))
    assert po.y1 == E.sym("x2")
    assert E.equivalent(po.y2, E.parse("x1^2"), ("x1",))
    with pytest.raises(ValueError):
        synth.passive_output(E.parse("2*x2 + x1"), ("x1", "x2"))


def test_rejects_nonpositive_rate_and_unactuated_manifold():
    sys = ControlAffineSystem(
        ("x1", "x2"), f=(E.parse("-x1"), E.parse("-x2")),
        g=(E.Const(0.0), E.Const(1.0)))
    with pytest.raises(synth.NonpositiveRate):
        synth.synthesize(sys, E.parse("x1 + x2"), -1.0)
    with pytest.raises(synth.UnactuatedManifold):
        synth.synthesize(sys, E.sym("x1"), 2.0)


def test_guard_is_the_input_direction():
    sys = ControlAffineSystem(
        ("x1", "x2"), f=(E.parse("x2"), E.Const(0.0)),
        g=(E.Const(0.0), E.parse("x1")))
    law = synth.synthesize(sys, E.parse("x2 + x1^2"), 2.0)
    assert E.equivalent(law.guard, E.sym("x1"), ("x1", "x2"))
    with pytest.raises(synth.SingularityHit):
        law.evaluate({"x1": 0.0, "x2": 1.0})


def test_lift_steps_through_unactuated_stages():
    sys = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(E.parse("-x1 + x1^2 + x1*x2"), E.parse("x3"), E.Const(0.0)),
        g=(E.Const(0.0), E.Const(0.0), E.Const(1.0)),
    )
    psi1 = E.parse("x2 + x1")
    lifted = synth.lift(sys, psi1, 8.0)
    want = E.parse("x3 + (-x1 + x1^2 + x1*x2) + 4*(x2 + x1)")
    assert E.equivalent(lifted, want, sys.state)
    with pytest.raises(ValueError):
        synth.lift(sys, lifted, 8.0)  # already actuated
    with pytest.raises(synth.NonpositiveRate):
        synth.lift(sys, psi1, 0.0)


def test_cascade_matches_direct_synthesis_on_last_stage():
    sys = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(E.parse("-x1 + x1^2 + x1*x2"), E.parse("x3"), E.Const(0.0)),
        g=(E.Const(0.0), E.Const(0.0), E.Const(1.0)),
    )
    cs = synth.synthesize_cascade(sys, E.parse("x2 + x1"), rates=(8.0, 12.0))
    assert len(cs.manifolds) == 2
    direct = synth.synthesize(sys, cs.manifolds[-1], 12.0)
    assert E.equivalent(cs.law.u, direct.u, sys.state)
    res = decay_residual(sys, cs.manifolds[-1], cs.law, 12.0)
    assert E.equivalent(res, E.Const(0.0), sample_symbols(sys, cs.law.u))
    with pytest.raises(ValueError):
        synth.synthesize_cascade(sys, E.parse("x2 + x1"), rates=())


def test_cross_term_condition():
    ok = synth.verify_cross_term(E.parse("x2^3"), E.parse("-x2^3"),
                                 E.parse("-x2"), "x2")
    assert ok.passed and ok.max_residual <= 1e-9
    bad = synth.verify_cross_term(E.parse("x2^3"), E.parse("-x2^3"),
                                  E.parse("-0.9*x2"), "x2")
    assert not bad.passed
    assert bad.max_residual > 1e-3
    assert bad.witness is not None and "x2" in bad.witness


def test_feedforward_route():
    sys = ControlAffineSystem(
        ("x1", "x2"),
        f=(E.parse("x2^3"), E.parse("-x2^3")),
        g=(E.Const(0.0), E.parse("1 + x2^2")),
    )
    law = synth.synthesize_feedforward(sys, E.parse("-x2"), 4.0)
    assert law.tag == "feedforward"
    want = E.parse("-(2*(x1 + x2))/(1 + x2^2)")
    assert E.equivalent(law.u, want, sys.state)
    with pytest.raises(synth.CrossTermMismatch):
        synth.synthesize_feedforward(sys, E.parse("-0.5*x2"), 4.0)
    three = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(E.sym("x2"), E.sym("x3"), E.Const(0.0)),
        g=(E.Const(0.0), E.Const(0.0), E.Const(1.0)))
    with pytest.raises(ValueError):
        synth.synthesize_feedforward(three, E.parse("-x2"), 4.0)
    # input cancels along the manifold: mu' g2 = g1
    blocked = ControlAffineSystem(
        ("x1", "x2"),
        f=(E.parse("x2^3"), E.parse("-x2^3")),
        g=(E.parse("-(1 + x2^2)"), E.parse("1 + x2^2")),
    )
    with pytest.raises(synth.UnactuatedManifold):
        synth.synthesize_feedforward(blocked, E.parse("-x2"), 4.0)


def test_forwarding_cross_term_splits_or_rejects():
    splittable = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(E.parse("1 + x2 + x3^2"), E.sym("x3"), E.Const(0.0)),
        g=(E.Const(0.0), E.Const(0.0), E.Const(1.0)),
    )
    buckets = synth.forwarding_cross_term(splittable, E.Const(0.0))
    assert set(buckets) == {"const", "x2", "x3"}
    assert E.equivalent(buckets["x3"], E.parse("x3^2"), ("x3",))
    # an input reaching every row couples the lower states inseparably
    coupled = ControlAffineSystem(
        ("x1", "x2", "x3"),
        f=(E.parse("x2 + x3^2"), E.sym("x3"), E.Const(0.0)),
        g=(E.sym("x2"), E.parse("-x3^2"), E.Const(1.0)),
    )
    inner = E.parse("-x3 - (x2 + x3 + (1/3)*x3^3)*(1 + x3^2)")
    with pytest.raises(M.NonIntegrableConnection) as err:
        synth.forwarding_cross_term(coupled, inner)
    assert (err.value.i, err.value.j) == (2, 3)
