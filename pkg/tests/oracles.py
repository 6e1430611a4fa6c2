"""Independent reference formulas, written without the package's poly code.

Polynomials here are dicts {(l, q exps, p exps): Fraction complex pair}.
"""
from fractions import Fraction
from itertools import product
from math import comb, factorial

I_POW = [(1, 0), (0, 1), (-1, 0), (0, -1)]


def cm(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def cadd(d, k, v):
    old = d.get(k, (Fraction(0), Fraction(0)))
    s = (old[0] + v[0], old[1] + v[1])
    if s == (0, 0):
        d.pop(k, None)
    else:
        d[k] = s


def from_element(f):
    """Package phase function -> oracle dict."""
    ch = f.chart
    n = ch.nq
    out = {}
    for (l, s, A), p in f.terms.items():
        assert s == 0 and A == 0
        for m, v in p.items():
            e = ch.exps(m)
            cadd(out, (l, tuple(e[:n]), tuple(e[n:])), (Fraction(int(v[0].numerator), int(v[0].denominator)),
                                                       Fraction(int(v[1].numerator), int(v[1].denominator))))
    return out


def monomial(q, p, c=(1, 0), l=0):
    return {(l, tuple(q), tuple(p)): (Fraction(c[0]), Fraction(c[1]))}


def _d(e, a):
    """Coefficient and exponent of d^a x^e."""
    c = 1
    out = []
    for x, y in zip(e, a):
        if y > x:
            return 0, None
        c *= factorial(x) // factorial(x - y)
        out.append(x - y)
    return c, tuple(out)


def _multi(n, r):
    return [a for a in product(range(r + 1), repeat=n) if sum(a) == r]


def moyal(f, g, n, order):
    """exp((i lambda/2)(d_q (x) d_p - d_p (x) d_q)) through lambda^order."""
    out = {}
    for r in range(order + 1):
        # (A - B)^r with A = dq_i (x) dp_i, B = dp_i (x) dq_i, summed over i
        for k in range(r + 1):
            sign = (-1) ** (r - k)
            binom = comb(r, k)
            for a in _multi(n, k):          # A^k: f gets dq^a, g gets dp^a (multinomial)
                ma = factorial(k)
                for x in a:
                    ma //= factorial(x)
                for b in _multi(n, r - k):  # B^(r-k): f gets dp^b, g gets dq^b
                    mb = factorial(r - k)
                    for x in b:
                        mb //= factorial(x)
                    w = Fraction(sign * binom * ma * mb, factorial(r) * 2 ** r)
                    coef = cm((w, 0), I_POW[r % 4])
                    for (l1, q1, p1), c1 in f.items():
                        cq, nq1 = _d(q1, a)
                        cp, np1 = _d(p1, b)
                        if not cq or not cp:
                            continue
                        for (l2, q2, p2), c2 in g.items():
                            dq, nq2 = _d(q2, b)
                            dp, np2 = _d(p2, a)
                            if not dq or not dp:
                                continue
                            if l1 + l2 + r > order:
                                continue
                            v = cm(cm(c1, c2), coef)
                            v = (v[0] * cq * cp * dq * dp, v[1] * cq * cp * dq * dp)
                            key = (l1 + l2 + r, tuple(x + y for x, y in zip(nq1, nq2)),
                                   tuple(x + y for x, y in zip(np1, np2)))
                            cadd(out, key, v)
    return out


def standard(f, g, n, order):
    """sum_r (lambda/i)^r / r! d_p^r f d_q^r g (multi-index form)."""
    out = {}
    for r in range(order + 1):
        coef_i = I_POW[(-r) % 4]
        for a in _multi(n, r):
            af = 1
            for x in a:
                af *= factorial(x)
            w = cm((Fraction(1, af), 0), coef_i)
            for (l1, q1, p1), c1 in f.items():
                cp, np1 = _d(p1, a)
                if not cp:
                    continue
                for (l2, q2, p2), c2 in g.items():
                    cq, nq2 = _d(q2, a)
                    if not cq or l1 + l2 + r > order:
                        continue
                    v = cm(cm(c1, c2), w)
                    v = (v[0] * cp * cq, v[1] * cp * cq)
                    cadd(out, (l1 + l2 + r, tuple(x + y for x, y in zip(q1, nq2)),
                               tuple(x + y for x, y in zip(np1, p2))), v)
    return out
