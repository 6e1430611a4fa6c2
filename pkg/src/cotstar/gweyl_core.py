"""The formally graded algebra W x Lambda over one chart.

An element is a finite sum of terms  lambda^l * y^s * eta^A * f(q, p)  where
y^s is a symmetric monomial in the fibre generators y^a = dx^a (symmetric
slot), eta^A an ordered wedge of eta^a = dx^a (antisymmetric slot) and f a
base function jet.  Keys are ``(l, s, A)`` with ``s`` a packed exponent and
``A`` a bitmask; values are polys (see :mod:`cotstar.jets`).

Total degree Deg = deg_s + 2 l is tracked per component together with its
jet validity, so truncations stay lossless on every retained degree.
"""
from itertools import product as iproduct
from math import comb, factorial

from gmpy2 import mpq

from .jets import (EXACT, BITS, MASK, Profile, product_profile, padd_into, pmul, pdiff,
                   ptrunc, pconj)
from .scalar import Q0, Q1, cpair, cmul, ipow, is_zero, render


def popcount(x):
    return bin(x).count("1")


def wedge_sign(A, B):
    """Sign of eta^A ^ eta^B relative to the sorted order, 0 if they overlap."""
    if A & B:
        return 0
    s = 0
    b = B
    while b:
        low = b & -b
        s += popcount(A & ~((low << 1) - 1))
        b ^= low
    return -1 if s & 1 else 1


def left_sign(i, A):
    """Sign of eta^i ^ eta^A, 0 if i in A."""
    if A >> i & 1:
        return 0
    return -1 if popcount(A & ((1 << i) - 1)) & 1 else 1


class WeylElement:
    """Sparse element of W x Lambda with a per-degree validity profile."""

    __slots__ = ("chart", "terms", "prof", "_degs")

    def __init__(self, chart, terms=None, prof=None, normalize=True):
        self.chart = chart
        self.prof = prof if prof is not None else Profile()
        self._degs = None
        if terms is None:
            terms = {}
        if normalize:
            terms = self._normalized(terms)
        self.terms = terms

    def _normalized(self, terms):
        out = {}
        ch = self.chart
        prof = self.prof
        for key, poly in terms.items():
            if not poly:
                continue
            d = ch.deg(key[1]) + 2 * key[0]
            j = prof(d)
            if j < 0:
                continue
            if j < EXACT:
                poly = ptrunc(ch, poly, j)
                if not poly:
                    continue
            out[key] = poly
        return out

    # -- grading
    def Deg(self, key):
        return self.chart.deg(key[1]) + 2 * key[0]

    def degs(self):
        if self._degs is None:
            ch = self.chart
            self._degs = frozenset(ch.deg(k[1]) + 2 * k[0] for k in self.terms)
        return self._degs

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"WeylElement({self.chart}, {len(self.terms)} terms, {self.prof})"

    def __eq__(self, other):
        if not isinstance(other, WeylElement):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    # -- arithmetic
    def __add__(self, o):
        return add(self, o)

    def __sub__(self, o):
        return add(self, o, -1)

    def __neg__(self):
        return scale(self, -1)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def with_profile(self, prof):
        return WeylElement(self.chart, self.terms, self.prof.min(prof))

    def truncate(self, kmax):
        """Drop (and mark unknown) all components of total degree > kmax."""
        return WeylElement(self.chart, self.terms, self.prof.truncate(kmax))

    def component(self, d):
        ch = self.chart
        return WeylElement(ch, {k: v for k, v in self.terms.items()
                                if ch.deg(k[1]) + 2 * k[0] == d},
                           Profile([EXACT] * d + [self.prof(d)], EXACT), normalize=False)

    def select(self, pred):
        """Sub-element of the terms whose key satisfies pred(l, s, A)."""
        return WeylElement(self.chart, {k: v for k, v in self.terms.items() if pred(*k)},
                           self.prof, normalize=False)

    def max_lambda(self):
        return max((k[0] for k in self.terms), default=0)

    def coeff(self, l=0, s=0, A=0):
        return self.terms.get((l, s, A), {})

    def describe(self):
        """Human-readable listing (deterministic order)."""
        ch = self.chart
        lines = []
        for key in sorted(self.terms):
            l, s, A = key
            for m in sorted(self.terms[key]):
                c = self.terms[key][m]
                lines.append(f"lambda^{l} y{list(ch.exps(s))} eta{bits(A)} "
                             f"x{list(ch.exps(m))}: {render(c)}")
        return "\n".join(lines)


def bits(A):
    out = []
    i = 0
    while A:
        if A & 1:
            out.append(i)
        A >>= 1
        i += 1
    return out


# ---------------------------------------------------------------- constructors

def zero(chart, prof=None):
    return WeylElement(chart, {}, prof)


def const(chart, c=1):
    c = cpair(c)
    return WeylElement(chart, {} if is_zero(c) else {(0, 0, 0): {0: c}})


def from_poly(chart, poly, l=0, s=0, A=0, jet=EXACT):
    return WeylElement(chart, {(l, s, A): dict(poly)}, Profile.uniform(jet))


def y(chart, a, c=1):
    """Symmetric fibre generator y^a."""
    return WeylElement(chart, {(0, chart.unit[a], 0): {0: cpair(c)}})


def eta(chart, a, c=1):
    """Antisymmetric generator eta^a = 1 x dx^a."""
    return WeylElement(chart, {(0, 0, 1 << a): {0: cpair(c)}})


def x(chart, a, c=1):
    """Base coordinate function x^a (q's first, then p's)."""
    return WeylElement(chart, {(0, 0, 0): {chart.unit[a]: cpair(c)}})


def lam(chart, k=1):
    return WeylElement(chart, {(k, 0, 0): {0: (Q1, Q0)}})


def build(chart, entries, jet=EXACT):
    """Build from an iterable of (l, s_exps, A_indices, base_exps, coeff)."""
    terms = {}
    for l, s, A, m, c in entries:
        mask = 0
        sign = 1
        for a in A:
            if mask >> a & 1:
                sign = 0
                break
            # append on the right: count generators greater than a already present
            if popcount(mask >> (a + 1)) & 1:
                sign = -sign
            mask |= 1 << a
        if sign == 0:
            continue
        key = (l, chart.pack(s), mask)
        c = cpair(c)
        if sign < 0:
            c = (-c[0], -c[1])
        padd_into(terms.setdefault(key, {}), {chart.pack(m): c})
    return WeylElement(chart, terms, Profile.uniform(jet))


# ---------------------------------------------------------------- linear ops

def _acc(out, key, poly, c=None):
    d = out.get(key)
    if d is None:
        d = out[key] = {}
    padd_into(d, poly, c)


def add(a, b, sign=1):
    _same(a, b)
    terms = {k: dict(v) for k, v in a.terms.items()}
    c = None if sign == 1 else cpair(sign)
    for k, v in b.terms.items():
        _acc(terms, k, v, c)
    return WeylElement(a.chart, terms, a.prof.min(b.prof))


def add_all(chart, elems, prof=None):
    terms = {}
    p = prof if prof is not None else Profile()
    for e in elems:
        p = p.min(e.prof)
        for k, v in e.terms.items():
            _acc(terms, k, v)
    return WeylElement(chart, terms, p)


def scale(a, c):
    c = cpair(c)
    if is_zero(c):
        return WeylElement(a.chart, {}, a.prof)
    return WeylElement(a.chart, {k: {m: cmul(v, c) for m, v in p.items()}
                                 for k, p in a.terms.items()}, a.prof, normalize=False)


def times_lambda(a, k=1, c=None):
    """Multiply by c * lambda^k."""
    terms = {(l + k, s, A): p for (l, s, A), p in a.terms.items()}
    e = WeylElement(a.chart, terms, a.prof.shift(2 * k), normalize=False)
    return e if c is None else scale(e, c)


def div_lambda(a, k=1):
    """Divide by lambda^k; the element must not contain lower lambda powers."""
    terms = {}
    for (l, s, A), p in a.terms.items():
        if l < k:
            raise ArithmeticError("division by lambda of an element with a lambda^0 part")
        terms[(l - k, s, A)] = p
    return WeylElement(a.chart, terms, a.prof.shift(-2 * k), normalize=False)


def conj(a):
    """Complex conjugation (lambda is real)."""
    return WeylElement(a.chart, {k: pconj(p) for k, p in a.terms.items()}, a.prof,
                       normalize=False)


def _same(a, b):
    if a.chart != b.chart:
        raise ValueError(f"chart mismatch: {a.chart} vs {b.chart}")


def deg_a_parity(A):
    return popcount(A) & 1


def split_parity(a):
    ev = a.select(lambda l, s, A: not deg_a_parity(A))
    od = a.select(lambda l, s, A: deg_a_parity(A))
    return ev, od


def sigma(a):
    """Projection to symmetric and antisymmetric degree zero."""
    return a.select(lambda l, s, A: s == 0 and A == 0)


def lambda_free(a):
    return all(k[0] == 0 for k in a.terms)


# ---------------------------------------------------------------- delta calculus

def delta(a):
    """delta = eta^i i_s(d_i): lowers Deg by one."""
    ch = a.chart
    out = {}
    for (l, s, A), p in a.terms.items():
        for j in range(ch.nvars):
            e = (s >> (BITS * j)) & MASK
            if not e:
                continue
            sg = left_sign(j, A)
            if not sg:
                continue
            _acc(out, (l, s - ch.unit[j], A | (1 << j)), p, (mpq(sg * e), Q0))
    return WeylElement(ch, out, a.prof.shift(-1))


def delta_star(a):
    """delta* = y^i i_a(d_i): raises Deg by one."""
    ch = a.chart
    out = {}
    for (l, s, A), p in a.terms.items():
        for j in range(ch.nvars):
            if not A >> j & 1:
                continue
            A2 = A & ~(1 << j)
            sg = -1 if popcount(A2 & ((1 << j) - 1)) & 1 else 1
            _acc(out, (l, s + ch.unit[j], A2), p, (mpq(sg), Q0))
    return WeylElement(ch, out, a.prof.shift(1))


def delta_inv(a):
    """delta^{-1}: delta* divided by (deg_s + deg_a), zero on the (0, 0) part."""
    ch = a.chart
    out = {}
    for (l, s, A), p in a.terms.items():
        kl = ch.deg(s) + popcount(A)
        if kl == 0:
            continue
        for j in range(ch.nvars):
            if not A >> j & 1:
                continue
            A2 = A & ~(1 << j)
            sg = -1 if popcount(A2 & ((1 << j) - 1)) & 1 else 1
            _acc(out, (l, s + ch.unit[j], A2), p, (mpq(sg, kl), Q0))
    return WeylElement(ch, out, a.prof.shift(1))


def i_s(a, j):
    """Symmetric insertion of d/dx^j (lowers deg_s by one)."""
    ch = a.chart
    out = {}
    for (l, s, A), p in a.terms.items():
        e = (s >> (BITS * j)) & MASK
        if e:
            _acc(out, (l, s - ch.unit[j], A), p, (mpq(e), Q0))
    return WeylElement(ch, out, a.prof.shift(-1))


def i_a(a, j):
    """Antisymmetric insertion of d/dx^j (a superderivation from the left)."""
    ch = a.chart
    out = {}
    for (l, s, A), p in a.terms.items():
        if A >> j & 1:
            A2 = A & ~(1 << j)
            sg = -1 if popcount(A2 & ((1 << j) - 1)) & 1 else 1
            _acc(out, (l, s, A2), p, (mpq(sg), Q0))
    return WeylElement(ch, out, a.prof)


def left_eta(a, j):
    """(1 x dx^j) . a"""
    ch = a.chart
    out = {}
    for (l, s, A), p in a.terms.items():
        sg = left_sign(j, A)
        if sg:
            _acc(out, (l, s, A | (1 << j)), p, (mpq(sg), Q0))
    return WeylElement(ch, out, a.prof)


def left_y(a, j):
    ch = a.chart
    return WeylElement(ch, {(l, s + ch.unit[j], A): p for (l, s, A), p in a.terms.items()},
                       a.prof.shift(1), normalize=False)


def coef_mul(a, poly, jet=EXACT):
    """Multiply every coefficient by a base function of validity ``jet``."""
    ch = a.chart
    prof = a.prof.cap_nonempty(a.degs(), jet)
    out = {}
    for key, p in a.terms.items():
        j = prof(a.Deg(key))
        r = pmul(ch, p, poly, j)
        if r:
            out[key] = r
    return WeylElement(ch, out, prof)


def diff_coeffs(a, v):
    """Partial derivative of the base coefficients in coordinate v."""
    ch = a.chart
    out = {}
    for key, p in a.terms.items():
        r = pdiff(ch, p, v)
        if r:
            out[key] = r
    prof = a.prof.lower(1) if ch.is_q(v) else a.prof
    return WeylElement(ch, out, prof)


# ---------------------------------------------------------------- products

def mu(a, b):
    """Pointwise product: symmetric on y, wedge on eta."""
    _same(a, b)
    ch = a.chart
    prof = product_profile(a.prof, a.degs(), b.prof, b.degs())
    out = {}
    bl = [(k, ch.deg(k[1]) + 2 * k[0], p) for k, p in b.terms.items()]
    for (l, s, A), pa in a.terms.items():
        da = ch.deg(s) + 2 * l
        for (l2, t, B), db, pb in bl:
            j = prof(da + db)
            if j < 0:
                continue
            sg = wedge_sign(A, B)
            if not sg:
                continue
            r = pmul(ch, pa, pb, j)
            if r:
                _acc(out, (l + l2, s + t, A | B), r, None if sg > 0 else (mpq(-1), Q0))
    return WeylElement(ch, out, prof)


def _ff(a, u):
    r = 1
    for t in range(u):
        r *= a - t
    return r


class _WeylTable:
    """Cache of fibre Weyl products of symmetric monomials on one chart."""

    def __init__(self, chart):
        if chart.nq != chart.np:
            raise ValueError("the Weyl product needs a cotangent chart (nq == np)")
        self.chart = chart
        self.n = chart.nq
        self.cache = {}

    def get(self, s, t):
        key = (s, t)
        r = self.cache.get(key)
        if r is not None:
            return r
        ch, n = self.chart, self.n
        opts = [(0, 0, mpq(1))]  # (lambda power, packed reduction, rational)
        for i in range(n):
            aq, ap = ch.exp(s, i), ch.exp(s, n + i)
            bq, bp = ch.exp(t, i), ch.exp(t, n + i)
            red = ch.unit[i] + ch.unit[n + i]
            local = []
            for u in range(min(aq, bp) + 1):
                cu = mpq(_ff(aq, u) * _ff(bp, u), factorial(u))
                for v in range(min(ap, bq) + 1):
                    c = cu * mpq(_ff(ap, v) * _ff(bq, v), factorial(v))
                    if v & 1:
                        c = -c
                    local.append((u + v, (u + v) * red, c))
            opts = [(l1 + l2, r1 + r2, c1 * c2) for l1, r1, c1 in opts for l2, r2, c2 in local]
        r = []
        for lp, red, c in opts:
            c = c / (2 ** lp)
            r.append((lp, s + t - red, cmul(ipow(lp), (c, Q0))))
        self.cache[key] = r
        return r


_tables = {}


def _weyl_table(chart):
    t = _tables.get(chart)
    if t is None:
        t = _tables[chart] = _WeylTable(chart)
    return t


def weyl_mul(a, b):
    """Fibrewise Weyl product exp((i lambda/2) Lambda^{kl} i_s(d_k) x i_s(d_l))."""
    _same(a, b)
    ch = a.chart
    tab = _weyl_table(ch)
    prof = product_profile(a.prof, a.degs(), b.prof, b.degs())
    out = {}
    bl = [(k, ch.deg(k[1]) + 2 * k[0], p) for k, p in b.terms.items()]
    for (l, s, A), pa in a.terms.items():
        da = ch.deg(s) + 2 * l
        for (l2, t, B), db, pb in bl:
            j = prof(da + db)
            if j < 0:
                continue
            sg = wedge_sign(A, B)
            if not sg:
                continue
            r = pmul(ch, pa, pb, j)
            if not r:
                continue
            AB = A | B
            for lp, u, c in tab.get(s, t):
                if sg < 0:
                    c = (-c[0], -c[1])
                _acc(out, (l + l2 + lp, u, AB), r, c)
    return WeylElement(ch, out, prof)


class HorizontalLift:
    """Coefficients G_k^r = Gamma^l_{kr} p_l of the horizontal lift
    d^h_{q^k} = d_{q^k} + G_k^r d_{p_r}, with their jet validity."""

    def __init__(self, chart, G=None, jet=EXACT):
        self.chart = chart
        self.G = G or {}  # k -> list of (r, poly)
        self.jet = jet

    @property
    def flat(self):
        return not any(self.G.values())


def hor_deriv(a, k, hor=None):
    """Fibre insertion i_s(d^h_{q^k}) with base-function coefficients."""
    ch = a.chart
    n = ch.nq
    r0 = i_s(a, k)
    if hor is None or not hor.G.get(k):
        return r0
    parts = [r0]
    for r, g in hor.G[k]:
        parts.append(coef_mul(i_s(a, n + r), g, hor.jet))
    return add_all(ch, parts)


def std_mul(a, b, hor=None):
    """Fibrewise standard-ordered product exp((lambda/i) i_s(d_{p_k}) x i_s(d^h_{q^k}))."""
    _same(a, b)
    ch = a.chart
    n = ch.nq
    if ch.np != n:
        raise ValueError("the standard product needs a cotangent chart")
    bj = b
    if hor is not None and not hor.flat:
        bj = WeylElement(ch, b.terms, b.prof.cap_nonempty(b.degs(), hor.jet), normalize=False)
    prof = product_profile(a.prof, a.degs(), bj.prof, bj.degs())
    dcache = {(0,) * n: b}

    def D(alpha):
        r = dcache.get(alpha)
        if r is None:
            k = max(i for i in range(n) if alpha[i])
            prev = list(alpha)
            prev[k] -= 1
            r = hor_deriv(D(tuple(prev)), k, hor)
            dcache[alpha] = r
        return r

    out = {}
    for (l, s, A), pa in a.terms.items():
        ep = [ch.exp(s, n + k) for k in range(n)]
        for alpha in iproduct(*[range(e + 1) for e in ep]):
            na = sum(alpha)
            db_ = D(alpha)
            if not db_.terms:
                continue
            c = mpq(1)
            red = 0
            for k in range(n):
                if alpha[k]:
                    c *= comb(ep[k], alpha[k])
                    red += alpha[k] * ch.unit[n + k]
            cc = cmul(ipow(-na), (c, Q0))
            s2 = s - red
            ds2 = ch.deg(s2) + 2 * (l + na)
            for (l2, t, B), pb in db_.terms.items():
                dd = ds2 + ch.deg(t) + 2 * l2
                j = prof(dd)
                if j < 0:
                    continue
                sg = wedge_sign(A, B)
                if not sg:
                    continue
                rr = pmul(ch, pa, pb, j)
                if rr:
                    _acc(out, (l + l2 + na, s2 + t, A | B), rr, cc if sg > 0 else (-cc[0], -cc[1]))
    return WeylElement(ch, out, prof)


def super_commutator(a, b, product):
    """[a, b] = a o b - (-1)^{deg_a a deg_a b} b o a for a given product function."""
    ae, ao = split_parity(a)
    be, bo = split_parity(b)
    parts = []
    for x_, px in ((ae, 0), (ao, 1)):
        if not x_.terms:
            continue
        for y_, py in ((be, 0), (bo, 1)):
            if not y_.terms:
                continue
            xy = product(x_, y_)
            yx = product(y_, x_)
            parts.append(add(xy, yx, 1 if px and py else -1))
    if not parts:
        return WeylElement(a.chart, {}, product_profile(a.prof, a.degs(), b.prof, b.degs()))
    return add_all(a.chart, parts)


def fib_poisson(a, b):
    """Fibrewise Poisson bracket: the lambda^1 part of [a, b]_W divided by i lambda."""
    c = super_commutator(a, b, weyl_mul)
    one = c.select(lambda l, s, A: l == 1)
    return scale(div_lambda(one), (Q0, -Q1))


# ---------------------------------------------------------------- H and S

def homogeneity(a):
    """H = L_xi + lambda d/d lambda: momentum degree + p-type generators + l."""
    ch = a.chart
    n = ch.nq
    pmask_s = [(BITS * (n + k)) for k in range(ch.np)]
    amask = ((1 << ch.np) - 1) << n
    out = {}
    for (l, s, A), p in a.terms.items():
        w = l + popcount(A & amask) + sum((s >> sh) & MASK for sh in pmask_s)
        r = {}
        for m, c in p.items():
            ww = w + ch.pdeg(m)
            if ww:
                r[m] = (c[0] * ww, c[1] * ww)
        if r:
            out[(l, s, A)] = r
    return WeylElement(ch, out, a.prof, normalize=False)


def weight_of(chart, l, s, A, m):
    n = chart.nq
    amask = ((1 << chart.np) - 1) << n
    return l + popcount(A & amask) + sum(chart.exp(s, n + k) for k in range(chart.np)) + chart.pdeg(m)


def delta_fib(a, hor=None):
    """Delta_fib = sum_k i_s(d_{p_k}) i_s(d^h_{q^k})."""
    ch = a.chart
    n = ch.nq
    parts = [i_s(hor_deriv(a, k, hor), n + k) for k in range(n)]
    return add_all(ch, parts, a.prof.shift(-2))


def s_fib(a, hor=None, inverse=False):
    """S = exp((lambda/2i) Delta_fib), or its inverse."""
    c = (Q0, mpq(1, 2) if inverse else mpq(-1, 2))  # lambda/(2i) = -i lambda/2
    total = a
    term = a
    m = 0
    while True:
        m += 1
        term = times_lambda(delta_fib(term, hor), 1, cmul(c, (mpq(1, m), Q0)))
        if not term.terms:
            break
        total = total + term
    return total


def sigma_weyl(a, b):
    """sigma(a o_W b) without forming the full product."""
    _same(a, b)
    ch = a.chart
    n = ch.nq
    prof = product_profile(a.prof, a.degs(), b.prof, b.degs())
    qmask = sum(MASK << (BITS * i) for i in range(n))
    sh = BITS * n
    index = {}
    for (l2, t, B), pb in b.terms.items():
        if not B:
            index.setdefault(t, []).append((l2, pb))
    out = {}
    for (l, s, A), pa in a.terms.items():
        if A:
            continue
        t = ((s & qmask) << sh) | (s >> sh)
        hits = index.get(t)
        if not hits:
            continue
        c = mpq(1)
        for i in range(n):
            u, v = ch.exp(s, i), ch.exp(s, n + i)
            c *= factorial(u) * factorial(v)
            if v & 1:
                c = -c
        k = ch.deg(s)
        c = cmul(ipow(k), (c / (2 ** k), Q0))
        for l2, pb in hits:
            lam = l + l2 + k
            j = prof(2 * lam)
            if j < 0:
                continue
            r = pmul(ch, pa, pb, j)
            if r:
                _acc(out, (lam, 0, 0), r, c)
    return WeylElement(ch, out, prof)


def sigma_std(a, b, hor=None):
    """sigma(a o_S b) without forming the full product."""
    _same(a, b)
    ch = a.chart
    n = ch.nq
    bj = b
    if hor is not None and not hor.flat:
        bj = WeylElement(ch, b.terms, b.prof.cap_nonempty(b.degs(), hor.jet), normalize=False)
    prof = product_profile(a.prof, a.degs(), bj.prof, bj.degs())
    pmask = 0
    for i in range(n):
        pmask |= MASK << (BITS * (n + i))
    by_deg = {}

    def by_deg_filter(d):
        e = by_deg.get(d)
        if e is None:
            e = b.select(lambda l, s, A: not A and ch.deg(s) == d)
            by_deg[d] = e
        return e

    dcache = {}

    def D_from(alpha, total):
        # D^alpha applied to the part of b with symmetric degree ``total``
        key = (alpha, total)
        r = dcache.get(key)
        if r is None:
            if not any(alpha):
                r = by_deg_filter(total)
            else:
                k = max(i for i in range(n) if alpha[i])
                prev = list(alpha)
                prev[k] -= 1
                r = hor_deriv(D_from(tuple(prev), total), k, hor)
            dcache[key] = r
        return r

    out = {}
    for (l, s, A), pa in a.terms.items():
        if A or (s & ~pmask):
            continue
        alpha = tuple(ch.exp(s, n + k) for k in range(n))
        na = sum(alpha)
        db_ = D_from(alpha, na)
        cc = ipow(-na)
        for (l2, t, B), pb in db_.terms.items():
            if t or B:
                continue
            lam = l + l2 + na
            j = prof(2 * lam)
            if j < 0:
                continue
            r = pmul(ch, pa, pb, j)
            if r:
                _acc(out, (lam, 0, 0), r, cc)
    return WeylElement(ch, out, prof)


def pullback(a, target):
    """pi^*: reinterpret an element on the base chart Q as one on T*Q."""
    if a.chart.np != 0 or target.nq != a.chart.nq:
        raise ValueError("pullback needs a base chart matching the target")
    return WeylElement(target, a.terms, a.prof, normalize=False)


def restrict_zero_section(a, base):
    """i^*: drop momentum-type generators and set p = 0."""
    ch = a.chart
    n = ch.nq
    qmask = sum(MASK << (BITS * i) for i in range(n))
    amask = (1 << n) - 1
    out = {}
    for (l, s, A), p in a.terms.items():
        if (s & ~qmask) or (A & ~amask):
            continue
        r = {m: c for m, c in p.items() if not (m & ~qmask)}
        if r:
            out[(l, s, A)] = r
    return WeylElement(base, out, a.prof, normalize=False)


class VecElement:
    """Vector-valued element sum_k comps[k] x d_k (k a base coordinate index)."""

    __slots__ = ("chart", "comps")

    def __init__(self, chart, comps=None):
        self.chart = chart
        # empty components are kept: their profiles still carry validity
        self.comps = dict(comps or {})

    def is_zero(self):
        return all(not v.terms for v in self.comps.values())

    def __sub__(self, o):
        keys = set(self.comps) | set(o.comps)
        z = zero(self.chart)
        return VecElement(self.chart, {k: self.comps.get(k, z) - o.comps.get(k, z) for k in keys})

    def __add__(self, o):
        keys = set(self.comps) | set(o.comps)
        z = zero(self.chart)
        return VecElement(self.chart, {k: self.comps.get(k, z) + o.comps.get(k, z) for k in keys})

    def conj(self):
        return VecElement(self.chart, {k: conj(v) for k, v in self.comps.items()})

    def map(self, f):
        return VecElement(self.chart, {k: f(v) for k, v in self.comps.items()})


def i_s_vec(v, a):
    """Symmetric substitution: insert the vector part into a, form part multiplied from the left."""
    parts = [mu(c, i_s(a, k)) for k, c in v.comps.items()]
    return add_all(a.chart, parts, a.prof if not parts else None)


def trace_op(v):
    """tr = i_s(d_k) contracted with the vector slot d_k."""
    if not isinstance(v, VecElement):
        raise TypeError("trace needs a vector-valued element")
    parts = [i_s(c, k) for k, c in v.comps.items()]
    return add_all(v.chart, parts)
