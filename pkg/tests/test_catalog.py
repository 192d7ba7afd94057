"""Catalog integrity: registry behaviour, reference laws, stock runs."""

import math

import numpy as np
import pytest

from pandi import catalog, expr as E, sim

ALL_IDS = (
    "ex1",
    "w2-case1",
    "w2-case2",
    "w2-alt",
    "w2-offmanifold-coords",
    "w3",
    "integrator-chain",
    "maglev",
    "dc-motor",
    "ccm-3rd-order",
    "slotine-reg",
    "slotine-track",
    "ff-simple",
    "ff-sepulchre",
    "interlaced",
    "iwp-orbital",
)

# ids whose closed loop settles to the origin in the plain state norm
CONVERGES_TO_ORIGIN = {
    "ex1": 1e-3,
    "w2-case1": 1e-3,
    "w2-alt": 1e-3,
    "w2-offmanifold-coords": 1e-3,
    "w3": 1e-3,
    "integrator-chain": 1e-3,
    "ccm-3rd-order": 1e-3,
    "slotine-reg": 1e-3,
    "ff-sepulchre": 1e-3,
    "interlaced": 1e-3,
}


def entry_symbols(e):
    names = set(e.system.state) | set(e.system.params)
    if e.system.time_symbol:
        names.add(e.system.time_symbol)
    return sorted(names)


def run(e, x0, t_end=20.0, **kw):
    return sim.simulate_closed_loop(e.system, e.law, x0, phi=e.phi,
                                    components=e.components, t_end=t_end,
                                    dt=1e-3, **kw)


def test_registry_listing_and_lookup():
    ids = catalog.list()
    assert isinstance(ids, tuple)
    assert ids == ALL_IDS
    assert len(ids) >= 14
    with pytest.raises(catalog.UnknownId):
        catalog.build("nope")
    with pytest.raises(catalog.UnknownId):
        catalog.get("")


def test_get_caches_build_does_not():
    assert catalog.get("ex1") is catalog.get("ex1")
    assert catalog.build("ex1") is not catalog.build("ex1")


def test_overrides_checked_and_applied():
    stock = catalog.get("ex1")
    fast = catalog.build("ex1", alpha=20.0)
    assert fast.rate == 20.0
    assert not E.equivalent(fast.law.u, stock.law.u, entry_symbols(stock))
    with pytest.raises(ValueError) as err:
        catalog.build("ex1", alph=20.0)
    assert "alph" in str(err.value)


def test_entry_invariants():
    for eid in catalog.list():
        e = catalog.get(eid)
        assert e.id == eid
        assert e.behavior in catalog.BEHAVIOR_TAGS
        assert e.route in ("direct", "cascade", "psf", "feedforward")
        assert e.components
        assert e.x0s
        assert e.rate > 0
        assert e.alphas
        assert e.title
        if e.route == "psf":
            assert e.psf is not None
            assert e.zeta is not None
        state_dim = e.system.dim
        for x0 in e.x0s:
            assert len(x0) == state_dim


def test_references_match_fresh_synthesis():
    # the stored closed forms were transcribed independently of the
    # synthesis path, so pointwise agreement is a real check
    for eid in catalog.list():
        e = catalog.get(eid)
        if e.reference is None:
            assert eid == "w2-case2"
            continue
        dev = E.max_deviation(
            e.law.u, e.reference, entry_symbols(e), n=300, seed=17,
            box=e.sample_box, boxes=e.sample_boxes or None,
            avoid=e.avoid + (e.law.guard,),
        )
        assert dev <= 1e-9, (eid, dev)


def test_law_variants_differ_from_the_synthesis():
    for eid, label in (
        ("ccm-3rd-order", "published-as-printed-law"),
        ("w2-offmanifold-coords", "published-as-printed-law"),
        ("w3", "published-as-printed-law"),
        ("ff-sepulchre", "composite-law"),
    ):
        e = catalog.get(eid)
        printed = e.variants[label]
        dev = E.max_deviation(
            e.law.u, printed, entry_symbols(e), n=300, seed=17,
            box=e.sample_box, boxes=e.sample_boxes or None,
            avoid=e.avoid + (e.law.guard,),
        )
        assert dev > 1e-3, (eid, dev)


def test_w3_matches_companion_law_at_alpha_two():
    e = catalog.build("w3", alpha=2.0)
    companion = E.parse("-x2 - x1*x2 - x1*x3 - x3 - x1^2")
    assert E.equivalent(e.law.u, companion, entry_symbols(e), n=500, seed=9)


def test_stock_runs_converge():
    for eid, tol in CONVERGES_TO_ORIGIN.items():
        e = catalog.get(eid)
        for x0 in e.x0s:
            tr = run(e, x0)
            assert tr.reason == "completed", (eid, x0, tr.reason)
            assert float(np.linalg.norm(tr.x[-1])) <= tol, (eid, x0)


def test_zeta_entries_settle_in_transformed_coordinates():
    for eid in ("maglev", "dc-motor"):
        e = catalog.get(eid)
        tab = {k: E.Const(v) for k, v in e.system.params.items()}
        fns = [sim.compile_scalar(E.subst(z, tab), e.system.state)
               for z in e.zeta]
        for x0 in e.x0s:
            tr = run(e, x0)
            assert tr.reason == "completed", (eid, x0, tr.reason)
            final = [fn(tr.t[-1], tr.x[-1]) for fn in fns]
            assert math.sqrt(sum(v * v for v in final)) <= 1e-3, (eid, x0)


def test_equilibria_are_stationary():
    for eid in catalog.list():
        e = catalog.get(eid)
        if e.equilibrium is None:
            continue
        env = dict(e.system.params)
        env.update(zip(e.system.state, e.equilibrium))
        if e.system.time_symbol:
            env[e.system.time_symbol] = 0.0
        u = e.law.u.eval(env)
        for fe, ge in zip(e.system.f, e.system.g):
            assert abs(fe.eval(env) + ge.eval(env) * u) <= 1e-6, eid


def test_singularity_entry_terminates_on_guard():
    e = catalog.get("w2-case2")
    tr = run(e, e.x0s[0], t_end=25.0)
    assert tr.reason == "singularity"
    assert 17.0 <= tr.t[-1] <= 19.0
    env = dict(e.system.params)
    env.update(zip(e.system.state, tr.x[-1]))
    assert abs(e.law.guard.eval(env)) < 1e-9


def test_tracking_entry_follows_the_reference():
    e = catalog.get("slotine-track")
    tr = run(e, e.x0s[0])
    assert tr.reason == "completed"
    late = np.abs(tr.column("e1")[tr.t >= 10.0])
    assert late.max() <= 1e-2


def test_orbit_entry_oscillates():
    e = catalog.get("iwp-orbital")
    tr = run(e, e.x0s[0], t_end=40.0)
    assert tr.reason == "completed"
    rep = sim.detect_orbit(tr.t, tr.column("x1"))
    assert rep is not None
    assert rep.amplitude > 0.1
    assert rep.drift <= 0.01


def test_ff_simple_stays_bounded():
    e = catalog.get("ff-simple")
    bound = e.extras["x_norm_bound_20"]
    for x0 in e.x0s:
        tr = run(e, x0)
        assert tr.reason == "completed"
        assert float(np.linalg.norm(tr.x[-1])) <= bound


def test_on_manifold_projection():
    probes = {"dc-motor": (0.5, 0.3, -0.2)}
    for eid in catalog.list():
        e = catalog.get(eid)
        x0 = catalog.on_manifold(e, probes.get(eid))
        env = dict(e.system.params)
        env.update(zip(e.system.state, x0))
        if e.system.time_symbol:
            env[e.system.time_symbol] = 0.0
        assert abs(e.phi.eval(env)) <= 1e-12, eid
        for a in e.avoid:
            assert abs(a.eval(env)) >= 1e-6, eid


def test_projection_moves_a_blocked_coordinate():
    # the x1 fiber of ex1 misses the manifold from this start, the
    # projection has to fall back to the x2 fiber
    e = catalog.get("ex1")
    x0 = catalog.on_manifold(e, (1.0, 1.0))
    assert x0 == pytest.approx((1.0, -1.0))
