"""Strict-feedback recursion, the triangular transform, and the
nontriangular variant."""

import math

import numpy as np
import pytest

from pandi import expr as E
from pandi import psf as P
from pandi import sim
from pandi.sysmodel import SingularityHit


def chain():
    # cubic integrator chain
    return P.PsfSystem(
        ("x1", "x2", "x3"),
        gammas=(E.parse("-x1^3"), E.Const(0.0), E.Const(0.0)),
        thetas=(1.0, 1.0),
        lam=E.Const(1.0),
        alphas=(12.0, 12.0, 4.0),
    )


def test_plant_validation():
    with pytest.raises(ValueError):
        P.PsfSystem(("x1",), gammas=(E.Const(0.0),), thetas=(), lam=E.Const(1.0),
                    alphas=(1.0,))
    with pytest.raises(P.ZeroGain):
        P.PsfSystem(("x1", "x2"), gammas=(E.Const(0.0), E.Const(0.0)),
                    thetas=(0.0,), lam=E.Const(1.0), alphas=(1.0, 1.0))
    with pytest.raises(P.NonpositiveRate):
        P.PsfSystem(("x1", "x2"), gammas=(E.Const(0.0), E.Const(0.0)),
                    thetas=(1.0,), lam=E.Const(1.0), alphas=(1.0, -1.0))
    # gamma_m may reach x_1..x_m only
    with pytest.raises(ValueError):
        P.PsfSystem(("x1", "x2"), gammas=(E.sym("x2"), E.Const(0.0)),
                    thetas=(1.0,), lam=E.Const(1.0), alphas=(1.0, 1.0))
    with pytest.raises(ValueError):
        P.PsfSystem(("x1", "x2"), gammas=(E.Const(0.0), E.Const(0.0)),
                    thetas=(1.0,), lam=E.parse("2*sqrt(zz)"), alphas=(1.0, 1.0))


def test_recursion_shapes():
    s = P.synthesize_psf(chain())
    assert len(s.bs) == 3
    assert len(s.phis) == 3
    assert s.phis[0] == E.Const(0.0)
    assert s.law.tag == "psf"
    zeta = P.coordinate_transform(s)
    assert len(zeta) == 3
    assert zeta[0] == E.sym("x1")


def test_each_stage_is_the_generic_synthesis():
    p = chain()
    s = P.synthesize_psf(p)
    for m in (1, 2):
        virtual = P.step_as_generic(p, m)
        assert E.equivalent(virtual.u, s.phis[m], p.state)
    last = P.step_as_generic(p, 3)
    assert E.equivalent(last.u, s.law.u, p.state)
    with pytest.raises(ValueError):
        P.step_as_generic(p, 4)


def test_transform_overloads_agree():
    p = chain()
    s = P.synthesize_psf(p)
    zeta = P.coordinate_transform(s)
    manifolds = tuple(
        E.add(E.sym(p.state[m + 1]), E.neg(s.phis[m + 1])) for m in range(2))
    again = P.coordinate_transform(p.state, manifolds)
    for a, b in zip(zeta, again):
        assert E.equivalent(a, b, p.state)
    with pytest.raises(ValueError):
        P.coordinate_transform(p.state, manifolds[:1])


def test_triangular_residual_and_mutation():
    s = P.synthesize_psf(chain())
    assert P.verify_triangular(s, n_points=100, seed=3) <= 1e-9
    bumped = P.mutated(s, 1, E.parse("0.01*x1^2"))
    assert P.verify_triangular(bumped, n_points=100, seed=3) > 1e-3


def test_closed_loop_zeta_decay():
    p = chain()
    s = P.synthesize_psf(p)
    sys = p.to_affine()
    zeta = P.coordinate_transform(s)
    tr = sim.simulate_closed_loop(sys, s.law, (1.0, -1.0, 0.5),
                                  phi=zeta[-1], components=zeta[1:],
                                  t_end=20.0, dt=1e-3)
    assert tr.reason == "completed"
    # the last coordinate decays exactly at alpha_n / 2
    z3 = tr.column("phi_2")
    assert sim.decay_deviation(tr.t, z3, p.alphas[-1] / 2.0) <= 1e-8
    fns = [sim.compile_scalar(z, sys.state) for z in zeta]
    znorm = np.array([
        math.sqrt(sum(fn(t, row) ** 2 for fn in fns))
        for t, row in zip(tr.t, tr.x)
    ])
    assert znorm[-1] <= 1e-6
    # transient overshoot settles into monotone decay
    tail = znorm[tr.t >= 2.0]
    assert np.all(np.diff(tail) <= 1e-12)


def test_lambda_guard_has_a_name():
    p = P.PsfSystem(
        ("x1", "x2"),
        gammas=(E.Const(0.0), E.Const(0.0)),
        thetas=(1.0,),
        lam=E.parse("2*sqrt(x2)"),
        alphas=(2.0, 2.0),
    )
    s = P.synthesize_psf(p)
    with pytest.raises(P.LambdaVanishes) as err:
        s.law.evaluate({"x1": 1.0, "x2": 0.0})
    assert isinstance(err.value, SingularityHit)


def test_nontriangular_scale_and_decay():
    nt = P.synthesize_nontriangular(
        ("z",),
        f=(E.parse("-z^3"),),
        g1=(E.Const(1.0),),
        g2=(E.Const(0.0),),
        sigma1=E.parse("-z"),
        alphas=(2.0, 4.0),
    )
    assert E.equivalent(nt.scale, E.Const(1.0), ("z",))
    sys = nt.system
    along = E.add(*(E.mul(nt.psi2.diff(s), E.add(fe, E.mul(ge, nt.law.u)))
                    for s, fe, ge in zip(sys.state, sys.f, sys.g)))
    res = E.add(along, E.mul(2.0, nt.psi2))
    assert E.equivalent(res, E.Const(0.0), sys.state)


def test_nontriangular_rejects_singular_scale():
    with pytest.raises(P.ConnectionSingular):
        P.synthesize_nontriangular(
            ("z",),
            f=(E.parse("-z"),),
            g1=(E.Const(0.0),),
            g2=(E.Const(1.0),),
            sigma1=E.parse("0.5*z^2"),  # 1 - z crosses zero inside the box
            alphas=(2.0, 4.0),
        )
