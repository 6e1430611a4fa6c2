from gmpy2 import mpq
from hypothesis import given
from hypothesis import strategies as st

from cotstar import gweyl_core as g
from cotstar.jets import Chart

CH = Chart(1, 1)        # T*R: base (q, p), fibre (y^q, y^p)
CH2 = Chart(2, 2)
I = (0, 1)


def el(entries, ch=CH):
    return g.build(ch, entries)


coef = st.tuples(st.integers(-3, 3), st.integers(-2, 2)).filter(lambda c: c != (0, 0))


@st.composite
def elements(draw, forms=True, lam=1):
    n = draw(st.integers(1, 3))
    out = []
    for _ in range(n):
        l = draw(st.integers(0, lam))
        s = [draw(st.integers(0, 2)) for _ in range(2)]
        A = tuple(draw(st.sets(st.integers(0, 1), max_size=2))) if forms else ()
        m = [draw(st.integers(0, 2)) for _ in range(2)]
        out.append((l, s, A, m, draw(coef)))
    return el(out)


# ---------------------------------------------------------------- examples

def test_delta_inverse_example():
    a = el([(0, [0, 1], (0,), [0, 0], 1)])          # y^p (x) eta^q
    assert g.delta_inv(a) == el([(0, [1, 1], (), [0, 0], mpq(1, 2))])


def test_weyl_product_examples():
    yq, yp = g.y(CH, 0), g.y(CH, 1)
    qp = el([(0, [1, 1], (), [0, 0], 1)])
    assert g.weyl_mul(yq, yp) == qp + el([(1, [0, 0], (), [0, 0], (0, mpq(1, 2)))])
    assert g.weyl_mul(yp, yq) == qp + el([(1, [0, 0], (), [0, 0], (0, mpq(-1, 2)))])
    assert g.super_commutator(yq, yp, g.weyl_mul) == el([(1, [0, 0], (), [0, 0], I)])


def test_standard_product_example():
    yq, yp = g.y(CH, 0), g.y(CH, 1)
    want = el([(0, [1, 1], (), [0, 0], 1), (1, [0, 0], (), [0, 0], (0, -1))])   # + lambda/i
    assert g.std_mul(yp, yq) == want
    assert g.std_mul(yq, yp) == el([(0, [1, 1], (), [0, 0], 1)])


def test_s_fib_examples():
    yq, yp = g.y(CH, 0), g.y(CH, 1)
    qp = el([(0, [1, 1], (), [0, 0], 1)])
    assert g.s_fib(qp) == qp + el([(1, [0, 0], (), [0, 0], (0, mpq(-1, 2)))])   # + lambda/2i
    assert g.s_fib(g.weyl_mul(yq, yp)) == g.std_mul(g.s_fib(yq), g.s_fib(yp))


def test_fibre_poisson_example():
    assert g.fib_poisson(g.y(CH, 0), g.y(CH, 1)) == g.const(CH, 1)


def test_fibre_degree_is_not_a_derivation_of_weyl_product():
    yq, yp = g.y(CH, 0), g.y(CH, 1)

    def deg_s(a):
        return g.WeylElement(CH, {k: {m: (c[0] * CH.deg(k[1]), c[1] * CH.deg(k[1]))
                                      for m, c in p.items()} for k, p in a.terms.items()})
    lhs = deg_s(g.weyl_mul(yq, yp))
    rhs = g.weyl_mul(deg_s(yq), yp) + g.weyl_mul(yq, deg_s(yp))
    assert not (lhs - rhs).is_zero()
    assert g.mu(deg_s(yq), yp) + g.mu(yq, deg_s(yp)) == deg_s(g.mu(yq, yp))


def test_generators_and_sigma():
    a = el([(0, [0, 0], (), [1, 0], 2), (0, [1, 0], (), [0, 0], 1), (0, [0, 0], (1,), [0, 0], 1)])
    assert g.sigma(a) == el([(0, [0, 0], (), [1, 0], 2)])
    assert g.lambda_free(a)
    assert not g.lambda_free(a + g.lam(CH))


def test_wedge_sign():
    a = el([(0, [0, 0], (1, 0), [0, 0], 1)])
    b = el([(0, [0, 0], (0, 1), [0, 0], -1)])
    assert a == b
    assert el([(0, [0, 0], (1, 1), [0, 0], 1)]).is_zero()


def test_deg_profile_truncation():
    a = el([(0, [2, 0], (), [0, 0], 1), (1, [1, 0], (), [0, 0], 1)])
    t = a.truncate(2)
    assert t == el([(0, [2, 0], (), [0, 0], 1)])
    assert sorted(a.degs()) == [2, 3]


# ---------------------------------------------------------------- properties

@given(elements())
def test_delta_squares_to_zero(a):
    assert g.delta(g.delta(a)).is_zero()
    assert g.delta_star(g.delta_star(a)).is_zero()
    assert g.delta_inv(g.delta_inv(a)).is_zero()


@given(elements())
def test_hodge_decomposition(a):
    assert g.delta(g.delta_inv(a)) + g.delta_inv(g.delta(a)) + g.sigma(a) == a


@given(elements(), elements(), elements())
def test_weyl_product_associative(a, b, c):
    assert g.weyl_mul(g.weyl_mul(a, b), c) == g.weyl_mul(a, g.weyl_mul(b, c))


@given(elements(), elements(), elements())
def test_standard_product_associative(a, b, c):
    assert g.std_mul(g.std_mul(a, b), c) == g.std_mul(a, g.std_mul(b, c))


@given(elements(), elements())
def test_homogeneity_derivation(a, b):
    H = g.homogeneity
    for mul in (g.weyl_mul, g.std_mul):
        assert H(mul(a, b)) == mul(H(a), b) + mul(a, H(b))


@given(elements(forms=False), elements())
def test_delta_derivation_on_even_left_factor(a, b):
    for mul in (g.weyl_mul, g.std_mul):
        assert g.delta(mul(a, b)) == mul(g.delta(a), b) + mul(a, g.delta(b))


@given(elements(), elements())
def test_s_fib_intertwines(a, b):
    assert g.s_fib(g.weyl_mul(a, b)) == g.std_mul(g.s_fib(a), g.s_fib(b))
    assert g.s_fib(g.s_fib(a), inverse=True) == a


@given(elements(forms=False), elements(forms=False))
def test_conj_reverses_weyl_product(a, b):
    assert g.conj(g.weyl_mul(a, b)) == g.weyl_mul(g.conj(b), g.conj(a))


@given(elements(forms=False, lam=0), elements(forms=False, lam=0))
def test_commutator_leading_term_is_poisson(a, b):
    com = g.super_commutator(a, b, g.weyl_mul)
    first = com.select(lambda l, s, A: l == 1)
    assert first == g.times_lambda(g.fib_poisson(a, b), 1, I)
    assert com.select(lambda l, s, A: l == 0).is_zero()


@given(elements(), elements())
def test_products_deform_mu(a, b):
    for mul in (g.weyl_mul, g.std_mul):
        lead = mul(a, b) - g.times_lambda(g.div_lambda(mul(a, b) - g.mu(a, b)), 1)
        assert lead == g.mu(a, b)


@given(elements())
def test_weyl_mul_on_two_dimensional_base(a):
    b = el([(0, [1, 0, 0, 1], (), [0, 1, 0, 0], 1)], CH2)
    c = el([(0, [0, 1, 1, 0], (2,), [0, 0, 0, 0], 1), (0, [0, 0, 0, 1], (), [1, 0, 0, 0], 2)], CH2)
    lhs = g.weyl_mul(g.weyl_mul(b, c), b)
    assert lhs == g.weyl_mul(b, g.weyl_mul(c, b))
