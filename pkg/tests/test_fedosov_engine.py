import random
import sys
from pathlib import Path

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from cotstar import geometry as geo
from cotstar import gweyl_core as g
from cotstar.fedosov_engine import (MODES, ClassicalFedosov, FedosovSession, exp_ad, phase,
                                    times_i_over_lambda)
from cotstar.jets import EXACT, JetError

sys.path.insert(0, str(Path(__file__).parent))
import oracles as O  # noqa: E402

FLAT1 = geo.flat_connection(1)


@pytest.fixture(scope="module")
def s2():
    return geo.sphere_stereographic(9)


@pytest.fixture(scope="module")
def sessions(s2):
    return {m: FedosovSession(s2, mode=m, lambda_order=3, deg_cap=10) for m in MODES}


def probe(ch):
    return g.build(ch, [(0, [1, 0, 1, 0], (), [1, 0, 0, 0], 1), (0, [0, 2, 0, 1], (2,), [0, 1, 1, 0], mpq(2, 3)),
                        (1, [1, 0, 0, 0], (0,), [0, 0, 0, 1], -1)])


# ---------------------------------------------------------------- flat

def test_flat_r_vanishes():
    for m in MODES:
        assert FedosovSession(FLAT1, mode=m, lambda_order=3).r.is_zero()


def test_flat_taylor_is_plain_taylor_series():
    S = FedosovSession(FLAT1, mode="weyl", lambda_order=3)
    ch = S.chart
    f = phase(ch, {(0, (2, 1)): 1})
    want = g.build(ch, [(0, [a, b], (), [2 - a, 1 - b], [1, 2, 1][a] * 1) for a in range(3) for b in range(2)])
    assert S.taylor(f, 3) == want


def test_flat_moyal_example():
    S = FedosovSession(FLAT1, mode="weyl", lambda_order=4)
    ch = S.chart
    f, h = phase(ch, {(0, (1, 2)): 1}), phase(ch, {(0, (2, 1)): 1})
    want = O.moyal(O.monomial((1,), (2,)), O.monomial((2,), (1,)), 1, 4)
    assert O.from_element(S.star(f, h)) == want


def test_flat_standard_example():
    S = FedosovSession(FLAT1, mode="standard", lambda_order=3)
    ch = S.chart
    got = S.star(phase(ch, {(0, (0, 2)): 1}), phase(ch, {(0, (2, 0)): 1}))
    # p^2 *_S q^2 = p^2 q^2 + 4 (lambda/i) p q + 2 (lambda/i)^2
    assert got == phase(ch, {(0, (2, 2)): 1, (1, (1, 1)): (0, -4), (2, (0, 0)): -2})


def test_modes_validated():
    with pytest.raises(ValueError):
        FedosovSession(FLAT1, mode="bogus")


def test_strict_jet_rule():
    c = geo.sphere_stereographic(6)
    with pytest.raises(JetError):
        FedosovSession(c, mode="weyl", lambda_order=2)
    FedosovSession(c, mode="weyl", lambda_order=2, strict=False)


def test_taylor_rejects_fibre_input():
    S = FedosovSession(FLAT1, mode="weyl", lambda_order=1)
    with pytest.raises(ValueError):
        S.taylor(g.y(S.chart, 0))


# ---------------------------------------------------------------- r on S^2

def test_r_invariants(sessions):
    for mode in ("weyl", "standard"):
        r = sessions[mode].r
        assert g.delta_inv(r).is_zero()
        assert g.homogeneity(r) == r
        assert g.lambda_free(r)
        assert all(g.i_a(r, 2 + i).is_zero() for i in range(2))
    assert sessions["standard"].r == sessions["weyl"].r
    assert sessions["prime"].r == g.s_fib(sessions["weyl"].r, sessions["weyl"].lift.hor)


def test_r_lowest_term(sessions):
    S = sessions["weyl"]
    assert S.solve_r()[3] == g.delta_inv(S.lift.r_element())


def test_r_defining_equation(sessions):
    S = sessions["weyl"]
    r = S.r
    rhs = S.lift.r_element() + geo.nabla(r, S.lift.table) + times_i_over_lambda(g.weyl_mul(r, r))
    d = g.delta(r) - rhs
    assert all(k > S.cap - 1 for k in d.degs())


@pytest.mark.parametrize("mode", MODES)
def test_D_squared_vanishes(sessions, mode):
    S = sessions[mode]
    DDa = S.D(S.D(probe(S.chart)))
    assert DDa.is_zero()


def test_prime_derivation_is_conjugate(sessions):
    SP, SF = sessions["prime"], sessions["weyl"]
    a = probe(SP.chart)
    lhs = SP.D(a)
    rhs = geo.s_fib(SF.D(geo.s_fib(a, SP.lift, inverse=True)), SP.lift)
    assert lhs == rhs


@pytest.mark.parametrize("mode", MODES)
def test_taylor_is_flat_and_sections(sessions, mode):
    S = sessions[mode]
    f = phase(S.chart, {(0, (1, 0, 0, 1)): 1, (0, (0, 0, 1, 0)): 2})
    t = S.taylor(f, 6)
    assert g.sigma(t) == f
    Dt = S.D(t)
    assert all(d >= 6 for d in Dt.degs())


# ---------------------------------------------------------------- products on S^2

@pytest.fixture(scope="module")
def s2_star():
    c = geo.sphere_stereographic(9)
    return {m: FedosovSession(c, mode=m, lambda_order=3) for m in MODES}


mono = st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2), st.integers(0, 2))


def ph(ch, ms):
    return phase(ch, {(0, e): i + 1 for i, e in enumerate(ms)})


@settings(max_examples=5)
@given(st.lists(mono, min_size=1, max_size=2), st.lists(mono, min_size=1, max_size=2),
       st.lists(mono, min_size=1, max_size=2))
def test_associativity_s2(s2_star, a, b, c):
    for mode, S in s2_star.items():
        f, h, k = ph(S.chart, a), ph(S.chart, b), ph(S.chart, c)
        assert S.star(S.star(f, h), k) == S.star(f, S.star(h, k)), mode


def test_standard_ordered_type(s2_star):
    ch = s2_star["weyl"].chart
    chi = phase(ch, {(0, (1, 1, 0, 0)): 1, (0, (0, 2, 0, 0)): 3})
    f = phase(ch, {(0, (1, 0, 0, 1)): 1, (0, (0, 0, 1, 0)): 2})
    for mode in ("standard", "prime"):
        assert s2_star[mode].star(chi, f) == g.mu(chi, f)
    assert s2_star["weyl"].star(chi, f) != g.mu(chi, f)     # Weyl ordering is not standard ordering


def test_homogeneity_of_products(s2_star):
    ch = s2_star["weyl"].chart
    f = phase(ch, {(0, (1, 0, 0, 1)): 1, (0, (0, 0, 1, 0)): 2})
    h = phase(ch, {(0, (0, 1, 1, 1)): 1})
    for S in s2_star.values():
        H = g.homogeneity
        assert H(S.star(f, h)) == S.star(H(f), h) + S.star(f, H(h))


def test_weyl_type_conjugation(s2_star):
    S = s2_star["weyl"]
    ch = S.chart
    f = phase(ch, {(0, (1, 0, 0, 1)): 1, (0, (0, 0, 1, 0)): (0, 2)})
    h = phase(ch, {(0, (0, 1, 1, 1)): 1})
    assert g.conj(S.star(f, h)) == S.star(g.conj(h), g.conj(f))


def test_commutator_is_poisson_to_first_order(s2_star):
    S = s2_star["weyl"]
    ch = S.chart
    f = phase(ch, {(0, (1, 0, 0, 1)): 1})
    h = phase(ch, {(0, (0, 1, 1, 0)): 1})
    com = S.star(f, h) - S.star(h, f)
    # {q1 p2, q2 p1} = q2 p2 - q1 p1
    pb = phase(ch, {(0, (1, 0, 1, 0)): -1, (0, (0, 1, 0, 1)): 1})
    assert com.select(lambda l, s, A: l == 1) == g.times_lambda(pb, 1, (0, 1))
    assert com.select(lambda l, s, A: l in (0, 2)).is_zero()


# ---------------------------------------------------------------- classical theory

@pytest.fixture(scope="module")
def classical():
    return ClassicalFedosov(geo.sphere_stereographic(9), sym_cap=7)


def test_classical_rho(classical):
    C = classical
    Q = C.Q
    a = g.build(Q, [(0, [1, 1], (), [1, 0], 1), (0, [0, 2], (1,), [0, 1], 2)])
    assert C.D0(C.D0(a)).is_zero()
    assert all(v.is_zero() for v in (C.D0_vec(C.rho()) - C.RQ).comps.values())


def test_classical_rho_is_restriction_of_r(classical):
    C = classical
    SF = FedosovSession(geo.sphere_stereographic(9), mode="weyl", lambda_order=3, deg_cap=8)
    rho = C.rho()
    for k in range(2):
        x = g.restrict_zero_section(g.i_s(SF.r, 2 + k), C.Q)
        assert x == rho.comps.get(k, g.zero(C.Q))


def test_classical_taylor_two_ways(classical):
    C = classical
    Q = C.Q
    X = g.WeylElement(Q, {(0, 0, 0): {Q.pack((1, 1)): (mpq(1), mpq(0)), Q.pack((0, 2)): (mpq(2), mpq(0))}})
    te, tr = C.taylor_exp(X, 6), C.taylor_rec(X, 6)
    assert te == tr
    assert C.D0(te).is_zero()


def test_classical_flat_taylor():
    C = ClassicalFedosov(geo.flat_connection(1), sym_cap=4)
    Q = C.Q
    f = g.WeylElement(Q, {(0, 0, 0): {Q.pack((2,)): (mpq(1), mpq(0))}})
    assert C.taylor_exp(f, 4) == g.build(Q, [(0, [0], (), [2], 1), (0, [1], (), [1], 2), (0, [2], (), [0], 1)])
    assert C.rho().is_zero()


def test_hodge_and_h(classical):
    C = classical
    Q = C.Q
    b = g.build(Q, [(0, [1, 0], (1,), [1, 0], 1), (0, [0, 0], (0,), [0, 1], 3), (0, [2, 1], (0, 1), [0, 0], 1)])
    assert C.D0(C.d0_inv(b)) + C.d0_inv(C.D0(b)) == b
    h = C.solve_h(None)
    assert g.conj(h) == h
    assert g.sigma(h).is_zero()
    assert C.D0(h) == C.h_source(None)


def test_flat_d0_inverse_example():
    C = ClassicalFedosov(geo.flat_connection(1), sym_cap=4)
    a = g.eta(C.Q, 0)
    assert C.d0_inv(a) == -g.delta_inv(a)
    assert C.d0_inv(a) == g.y(C.Q, 0, -1)


@pytest.mark.parametrize("make", [lambda: geo.sphere_stereographic(9),
                                  lambda: geo.random_connection(2, 9, random.Random(3), maxdeg=2)])
def test_pullbacks_and_conjugation(make):
    c = make()
    cd = geo.curvature(c)
    SP = FedosovSession(c, mode="prime", lambda_order=3, deg_cap=8)
    SS = FedosovSession(c, mode="standard", lambda_order=3, deg_cap=8)
    SF = FedosovSession(c, mode="weyl", lambda_order=3, deg_cap=8)
    C = SS.classical
    h = C.solve_h(cd.alpha, alpha_jet=cd.alpha_jet)
    assert C.D0(h) == C.h_source(cd.alpha, alpha_jet=cd.alpha_jet)
    ch = SS.chart
    ph_ = g.pullback(h, ch)
    a = g.build(ch, [(0, [1, 0, 1, 0], (), [1, 0, 0, 0], 1), (0, [0, 1, 0, 1], (2,), [0, 1, 1, 0], mpq(2, 3)),
                     (0, [0, 0, 1, 1], (), [0, 0, 0, 0], 1)])
    lhs = exp_ad(ph_, SP.D(exp_ad(-ph_, a, SS.product, 7)), SS.product, 7)
    assert lhs == SS.D(a).truncate(7)
    b = g.build(C.Q, [(0, [1, 1], (1,), [1, 0], 1), (0, [2, 0], (), [0, 1], 1)])
    for S in (SP, SS):
        assert S.D(g.pullback(b, ch)) == g.pullback(C.D0(b), ch)
    chi = g.WeylElement(C.Q, {(0, 0, 0): {C.Q.pack((1, 2)): (mpq(1), mpq(0))}})
    for S in (SP, SS, SF):
        assert S.taylor(g.pullback(chi, ch), 6) == g.pullback(C.taylor_exp(chi, 6), ch)


def poisson(f, h):
    n = f.chart.nq
    out = []
    for i in range(n):
        out.append(g.mu(g.diff_coeffs(f, i), g.diff_coeffs(h, n + i)))
        out.append(-g.mu(g.diff_coeffs(f, n + i), g.diff_coeffs(h, i)))
    return g.add_all(f.chart, out)


@pytest.mark.parametrize("mode", ["weyl", "standard"])
def test_classical_taylor_intertwines_brackets(mode):
    S = FedosovSession(geo.sphere_stereographic(9), mode=mode, lambda_order=3)
    ch = S.chart
    f = phase(ch, {(0, (1, 0, 1, 0)): 1, (0, (0, 1, 0, 0)): 2})
    h = phase(ch, {(0, (0, 1, 0, 2)): 1, (0, (1, 1, 0, 0)): 1})
    cl = lambda a: a.select(lambda l, s, A: l == 0)
    tf, th = cl(S.taylor(f, 6)), cl(S.taylor(h, 6))
    if mode == "weyl":
        lhs = g.fib_poisson(tf, th).truncate(4)
        assert not poisson(f, h).is_zero()
        assert lhs == cl(S.taylor(poisson(f, h), 4))
    assert g.sigma(tf) == f


def test_exact_profile_on_polynomial_input():
    S = FedosovSession(FLAT1, mode="standard", lambda_order=2)
    f = phase(S.chart, {(0, (1, 1)): 1})
    assert S.star(f, f).prof(4) == EXACT
