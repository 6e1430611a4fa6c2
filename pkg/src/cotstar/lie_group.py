"""The standard-ordered and Gutt star products on T*G.

Functions on T*G are written in invariant momenta P_i = alpha(X_i).  Two
function classes are supported:

* :class:`ExpLin`, left-invariant: poly(P, lambda) * exp(<v, P>);
* :class:`LieFunction`, polynomial in P with base jets in exponential
  coordinates x, where Y_i acts through the left-invariant frame.

The invariant operators M_r^inv come from the BCH series:
e_U * e_V = e_{U+V} sum_r (lambda/i)^r c_r(U, V, P), and c_r(U, V, P) is
the symbol table of M_r^inv (the coefficient of U^a V^b multiplies
Z^a f Z^b g).  An independent check builds the same series in the
universal enveloping algebra and symmetrizes back.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import permutations, product as iproduct
from math import comb, factorial

from gmpy2 import mpq

from . import gweyl_core as g
from .geometry import ConnectionData, curvature
from .gweyl_core import WeylElement
from .jets import EXACT, Chart, padd_into, pdiff, pmul, pmul_var, ptrunc
from .scalar import Q0, Q1, cmul, cpair, ipow, is_zero

ONE = (Q1, Q0)


def bernoulli(r):
    """B_r with the x/(e^x - 1) convention (B_1 = -1/2)."""
    B = [Fraction(1)]
    for m in range(1, r + 1):
        B.append(-sum(comb(m + 1, j) * B[j] for j in range(m)) / Fraction(m + 1))
    return mpq(B[r].numerator, B[r].denominator)


# ---------------------------------------------------------------- Lie algebras

@dataclass
class LieAlgebraData:
    """[X_i, X_j] = C^k_ij X_k; C maps (k, i, j) -> scalar."""

    n: int
    C: dict
    name: str = "custom"

    def __post_init__(self):
        full = {}
        for (k, i, j), c in self.C.items():
            c = cpair(c)
            if is_zero(c):
                continue
            if i == j:
                raise ValueError(f"structure constant C^{k}_{i}{j} must vanish")
            o = self.C.get((k, j, i))
            if o is not None and cpair(o) != (-c[0], -c[1]):
                raise ValueError(f"structure constants not antisymmetric at {(k, i, j)}")
            full[(k, i, j)] = c
            full[(k, j, i)] = (-c[0], -c[1])
        self.C = full
        bad = self.jacobi_violation()
        if bad is not None:
            raise ValueError(f"Jacobi identity fails for the triple {bad}")

    def c(self, k, i, j):
        return self.C.get((k, i, j))

    def jacobi_violation(self):
        n = self.n
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    for l in range(n):
                        acc = (Q0, Q0)
                        for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
                            for m in range(n):
                                x, y = self.c(m, a, b), self.c(l, m, c)
                                if x and y:
                                    t = cmul(x, y)
                                    acc = (acc[0] + t[0], acc[1] + t[1])
                        if not is_zero(acc):
                            return (i, j, k)
        return None

    def trace_form(self):
        """c_i = C^l_{li}; zero exactly for unimodular algebras."""
        out = []
        for i in range(self.n):
            acc = (Q0, Q0)
            for l in range(self.n):
                x = self.c(l, l, i)
                if x:
                    acc = (acc[0] + x[0], acc[1] + x[1])
            out.append(acc)
        return out

    @property
    def unimodular(self):
        return all(is_zero(c) for c in self.trace_form())

    def bracket(self, a, b, chart, jet=EXACT):
        """[a, b] for vectors of polys on ``chart``."""
        out = [dict() for _ in range(self.n)]
        for (k, i, j), c in self.C.items():
            if a[i] and b[j]:
                padd_into(out[k], pmul(chart, a[i], b[j], jet), c)
        return out


def abelian(n):
    return LieAlgebraData(n, {}, f"abelian R^{n}")


def heisenberg():
    return LieAlgebraData(3, {(2, 0, 1): 1}, "heisenberg")


def sl2():
    # basis H, E, F
    return LieAlgebraData(3, {(1, 0, 1): 2, (2, 0, 2): -2, (0, 1, 2): 1}, "sl2")


def so3():
    return LieAlgebraData(3, {(2, 0, 1): 1, (0, 1, 2): 1, (1, 2, 0): 1}, "so3")


def aff1():
    """ax + b algebra [X_1, X_2] = X_2 (not unimodular)."""
    return LieAlgebraData(2, {(1, 0, 1): 1}, "aff1")


BUILTIN_ALGEBRAS = {"abelian": lambda: abelian(2), "heisenberg": heisenberg, "sl2": sl2,
                    "so3": so3, "aff1": aff1}


def builtin_algebra(name):
    try:
        return BUILTIN_ALGEBRAS[name]()
    except KeyError:
        raise ValueError(f"unknown Lie algebra {name!r}") from None


# ---------------------------------------------------------------- vectors

SCALAR_CHART = Chart(0, 0)


def numeric_vector(v):
    """Scalars -> constant polys on the zero-variable chart."""
    return [{} if is_zero(cpair(x)) else {0: cpair(x)} for x in v]


def vector_values(v):
    return [p.get(0, (Q0, Q0)) for p in v]


def _vadd(a, b, c=None):
    return [padd_into(dict(x), y, c) for x, y in zip(a, b)]


def _vscale(a, c):
    return [{m: cmul(v, c) for m, v in x.items()} for x in a]


# ---------------------------------------------------------------- BCH

def _compositions(total, parts):
    """Sequences (r_1, s_1, .., r_m, s_m) with r_i + s_i >= 1 summing to total."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for r in range(total + 1):
        for s in range(total - r + 1):
            if r + s == 0:
                continue
            for rest in _compositions(total - r - s, parts - 1):
                yield (r, s) + rest


def _nested(alg, word, a, b, chart, jet, cache):
    """Right-nested bracket [w_1, [w_2, .. w_N]] of letters 'a'/'b'."""
    hit = cache.get(word)
    if hit is not None:
        return hit
    x = a if word[0] == "a" else b
    if len(word) == 1:
        r = x
    else:
        r = alg.bracket(x, _nested(alg, word[1:], a, b, chart, jet, cache), chart, jet)
    cache[word] = r
    return r


def bch_components(alg, a, b, order, chart=None, jet=EXACT):
    """{N: H_N(a, b)}, the bracket-length-N parts of log(e^a e^b), by Dynkin's formula."""
    if order < 1:
        raise ValueError("BCH order must be >= 1")
    if chart is None:
        chart = SCALAR_CHART
        a, b = numeric_vector(a), numeric_vector(b)
    cache = {}
    out = {}
    for N in range(1, order + 1):
        acc = [dict() for _ in range(alg.n)]
        for m in range(1, N + 1):
            for comp in _compositions(N, m):
                denom = m * N
                word = ""
                for i in range(m):
                    r, s = comp[2 * i], comp[2 * i + 1]
                    denom *= factorial(r) * factorial(s)
                    word += "a" * r + "b" * s
                if len(word) > 1 and word[-1] == word[-2]:
                    continue
                c = mpq((-1) ** (m - 1), denom)
                acc = _vadd(acc, _nested(alg, word, a, b, chart, jet, cache), (c, Q0))
        out[N] = acc
    return out


def bch(alg, a, b, order, chart=None, jet=EXACT):
    comps = bch_components(alg, a, b, order, chart, jet)
    total = [dict() for _ in range(alg.n)]
    for v in comps.values():
        total = _vadd(total, v)
    return total


def bch_tensor_log(alg, a, b, order, chart=None, jet=EXACT):
    """Oracle: log(exp(a) exp(b)) in the truncated free algebra on two letters,
    turned into brackets by the Specht-Wever map."""
    if chart is None:
        chart = SCALAR_CHART
        a, b = numeric_vector(a), numeric_vector(b)

    def mul(x, y):
        out = {}
        for w1, c1 in x.items():
            for w2, c2 in y.items():
                if len(w1) + len(w2) <= order:
                    out[w1 + w2] = out.get(w1 + w2, 0) + c1 * c2
        return {w: c for w, c in out.items() if c}

    def exp_letter(l):
        return {l * j: Fraction(1, factorial(j)) for j in range(order + 1)}

    X = mul(exp_letter("a"), exp_letter("b"))
    X.pop("", None)
    log = {}
    power = {"": Fraction(1)}
    for m in range(1, order + 1):
        power = mul(power, X)
        for w, c in power.items():
            log[w] = log.get(w, 0) + Fraction((-1) ** (m - 1), m) * c
    cache = {}
    out = {N: [dict() for _ in range(alg.n)] for N in range(1, order + 1)}
    for w, c in log.items():
        if not c:
            continue
        N = len(w)
        q = c / N
        out[N] = _vadd(out[N], _nested(alg, w, a, b, chart, jet, cache),
                       (mpq(q.numerator, q.denominator), Q0))
    return out


# ---------------------------------------------------------------- enveloping algebra

class Enveloping:
    """U(g) in the PBW basis of sorted words, coefficients polys on a chart."""

    def __init__(self, alg, chart=SCALAR_CHART):
        self.alg = alg
        self.chart = chart
        self._pbw = {}

    def normal(self, word):
        """A word rewritten in sorted words: {sorted word: rational}."""
        hit = self._pbw.get(word)
        if hit is not None:
            return hit
        for i in range(len(word) - 1):
            if word[i] > word[i + 1]:
                x, y = word[i], word[i + 1]
                out = dict(self.normal(word[:i] + (y, x) + word[i + 2:]))
                for k in range(self.alg.n):
                    c = self.alg.c(k, x, y)
                    if c:
                        for w, v in self.normal(word[:i] + (k,) + word[i + 2:]).items():
                            out[w] = _cadd(out.get(w), cmul(c, v))
                out = {w: v for w, v in out.items() if not is_zero(v)}
                break
        else:
            out = {word: ONE}
        self._pbw[word] = out
        return out

    def reduce(self, elem):
        """{word: poly} -> same element in the PBW basis."""
        out = {}
        for w, p in elem.items():
            for s, c in self.normal(w).items():
                padd_into(out.setdefault(s, {}), p, c)
        return {w: p for w, p in out.items() if p}

    def symmetrized(self, sword):
        """Average over orderings of a sorted word, in the PBW basis."""
        perms = set(permutations(sword))
        w = (mpq(1, len(perms)), Q0)
        out = {}
        for p in perms:
            for s, c in self.normal(p).items():
                out[s] = _cadd(out.get(s), cmul(c, w))
        return {s: c for s, c in out.items() if not is_zero(c)}

    def symbol(self, elem):
        """Write a PBW element as sum_m c_m sym(m); returns {sorted word: poly}."""
        rest = {w: dict(p) for w, p in elem.items() if p}
        out = {}
        while rest:
            top = max(len(w) for w in rest)
            for s in [w for w in rest if len(w) == top]:
                p = rest.get(s)
                if not p:
                    continue
                p = dict(p)
                out[s] = p
                for t, c in self.symmetrized(s).items():
                    padd_into(rest.setdefault(t, {}), p, (-c[0], -c[1]))
            rest = {w: p for w, p in rest.items() if p}
        return out


def _cadd(a, b):
    if a is None:
        return b
    return (a[0] + b[0], a[1] + b[1])


# ---------------------------------------------------------------- M_r^inv tables

class GuttTables:
    """Symbol tables c_r(U, V, P) of M_r^inv for one algebra, r <= order.

    Polys live on Chart(2n, n): U in slots 0..n-1, V in n..2n-1, P in the
    momentum slots.
    """

    def __init__(self, alg, order):
        self.alg = alg
        self.order = order
        n = alg.n
        self.chart = Chart(2 * n, n)
        ch = self.chart
        U = [{ch.unit[i]: ONE} for i in range(n)]
        V = [{ch.unit[n + i]: ONE} for i in range(n)]
        self.H = bch_components(alg, U, V, order + 1, ch)
        # L = sum_{m >= 2} eps^{m-1} <H_m, P>
        L = {}
        for m in range(2, order + 2):
            acc = {}
            for i, p in enumerate(self.H[m]):
                if p:
                    padd_into(acc, pmul_var(ch, p, 2 * n + i))
            if acc:
                L[m - 1] = acc
        # exp(L) as a series in eps
        c = {0: {0: ONE}}
        term = {0: {0: ONE}}
        for j in range(1, order + 1):
            nxt = {}
            for r1, p1 in term.items():
                for r2, p2 in L.items():
                    if r1 + r2 <= order:
                        padd_into(nxt.setdefault(r1 + r2, {}), pmul(ch, p1, p2), (mpq(1, j), Q0))
            term = {r: p for r, p in nxt.items() if p}
            for r, p in term.items():
                padd_into(c.setdefault(r, {}), p)
        self.c = c
        self.ops = {r: self._split(p) for r, p in c.items()}

    def _split(self, poly):
        """{(alpha, beta): {P exponents: coeff}}."""
        ch, n = self.chart, self.alg.n
        out = {}
        for m, v in poly.items():
            e = ch.exps(m)
            key = (e[:n], e[n:2 * n])
            P = e[2 * n:]
            out.setdefault(key, {})[P] = v
        return out

    def check_shape(self):
        """Order <= r in each argument and Liouville weight -r, per table."""
        for r, tab in self.ops.items():
            for (al, be), P in tab.items():
                if sum(al) > r or sum(be) > r:
                    return False
                if any(sum(pe) != sum(al) + sum(be) - r for pe in P):
                    return False
        return True

    def apply(self, r, f, h):
        """M_r^inv(f, h) for ExpLin or LieFunction arguments."""
        out = None
        for (al, be), P in self.ops.get(r, {}).items():
            fa = f.Z_multi(al)
            hb = h.Z_multi(be)
            t = fa.mul(hb).mul_P(P)
            out = t if out is None else out.add(t)
        return out if out is not None else f.zero_like()


@lru_cache(maxsize=None)
def gutt_tables(alg_key, order):
    return GuttTables(_ALG_REGISTRY[alg_key], order)


_ALG_REGISTRY = {}


def tables_for(alg, order):
    key = (alg.name, alg.n, tuple(sorted(alg.C.items())))
    _ALG_REGISTRY[key] = alg
    return gutt_tables(key, order)


def exp_star_via_enveloping(alg, order, bideg):
    """e_U *_S e_V through eps^order and (U, V)-degree <= bideg, computed in U(g):
    rho_S(e_U) rho_S(e_V) = exp(eps U) exp(eps V), symmetrized back to symbols.

    Returns {r: poly on the tables' chart}.
    """
    n = alg.n
    ch = Chart(2 * n, n)
    env = Enveloping(alg, ch)
    out = {}
    for a in range(bideg + 1):
        for b in range(bideg + 1 - a):
            elem = {}
            for word in iproduct(range(n), repeat=a + b):
                mono = 0
                for pos, i in enumerate(word):
                    mono += ch.unit[i] if pos < a else ch.unit[n + i]
                elem[word] = {mono: (mpq(1, factorial(a) * factorial(b)), Q0)}
            sym = env.symbol(env.reduce(elem))
            for s, p in sym.items():
                r = a + b - len(s)
                if r > order:
                    continue
                Pm = 0
                for i in s:
                    Pm += ch.unit[2 * n + i]
                padd_into(out.setdefault(r, {}), {m + Pm: v for m, v in p.items()})
    return {r: p for r, p in out.items() if p}


def exp_star_via_bch(alg, order, bideg):
    """e_{U+V} sum_r eps^r c_r, truncated at (U, V)-degree bideg."""
    T = tables_for(alg, order)
    ch = T.chart
    n = alg.n
    lin = {}
    for i in range(n):
        padd_into(lin, {ch.unit[i] + ch.unit[2 * n + i]: ONE})
        padd_into(lin, {ch.unit[n + i] + ch.unit[2 * n + i]: ONE})
    e = {0: ONE}
    term = {0: ONE}
    for j in range(1, bideg + 1):
        term = {m: (v[0] / j, v[1] / j) for m, v in pmul(ch, term, lin, bideg).items()}
        padd_into(e, term)
    return {r: p for r, p in ((r, pmul(ch, e, c, bideg)) for r, c in T.c.items()) if p}


# ---------------------------------------------------------------- function classes

class ExpLin:
    """Left-invariant function poly(P, lambda) * exp(<v0, P>); lambda-powers <= lcap."""

    __slots__ = ("n", "v0", "terms", "lcap")

    def __init__(self, n, v0=None, terms=None, lcap=EXACT):
        self.n = n
        self.v0 = tuple(cpair(x) for x in (v0 if v0 is not None else [0] * n))
        self.lcap = lcap
        self.terms = {k: v for k, v in (terms or {}).items() if not is_zero(v) and k[0] <= lcap}

    @classmethod
    def e(cls, U, lcap=EXACT):
        return cls(len(U), U, {(0, (0,) * len(U)): ONE}, lcap)

    @classmethod
    def hat(cls, U, lcap=EXACT):
        n = len(U)
        terms = {}
        for i, c in enumerate(U):
            m = [0] * n
            m[i] = 1
            terms[(0, tuple(m))] = cpair(c)
        return cls(n, None, terms, lcap)

    @classmethod
    def exp_of(cls, w, lcap):
        """exp(<w, P>) for w = {l: vector} a lambda-series of vectors."""
        n = len(w[0])
        f = cls(n, w[0], {(0, (0,) * n): ONE}, lcap)
        lin = cls(n, None, {}, lcap)
        for l, v in w.items():
            if l == 0:
                continue
            for i, c in enumerate(v):
                m = [0] * n
                m[i] = 1
                lin = lin.add(cls(n, None, {(l, tuple(m)): cpair(c)}, lcap))
        term = cls(n, None, {(0, (0,) * n): ONE}, lcap)
        total = term
        j = 0
        while True:
            j += 1
            term = term.mul(lin).scale((mpq(1, j), Q0))
            if not term.terms:
                break
            total = total.add(term)
        return f.mul(total)

    def zero_like(self):
        return ExpLin(self.n, self.v0, {}, self.lcap)

    def __repr__(self):
        return f"ExpLin(v0={self.v0}, {len(self.terms)} terms)"

    def _compatible(self, o):
        if self.v0 != o.v0 and self.terms and o.terms:
            raise ValueError("adding ExpLin values with different exponents")

    def add(self, o, sign=1):
        if not o.terms:
            return ExpLin(self.n, self.v0, self.terms, min(self.lcap, o.lcap))
        if not self.terms:
            return ExpLin(self.n, o.v0, {k: (v[0] * sign, v[1] * sign) for k, v in o.terms.items()},
                          min(self.lcap, o.lcap))
        self._compatible(o)
        t = dict(self.terms)
        for k, v in o.terms.items():
            t[k] = _cadd(t.get(k), (v[0] * sign, v[1] * sign))
        return ExpLin(self.n, self.v0, t, min(self.lcap, o.lcap))

    def sub(self, o):
        return self.add(o, -1)

    def scale(self, c):
        c = cpair(c)
        return ExpLin(self.n, self.v0, {k: cmul(v, c) for k, v in self.terms.items()}, self.lcap)

    def eps(self, r):
        """Multiply by (lambda/i)^r."""
        c = ipow(-r)
        lc = self.lcap + r if self.lcap < EXACT // 2 else self.lcap
        return ExpLin(self.n, self.v0, {(l + r, m): cmul(v, c) for (l, m), v in self.terms.items()},
                      lc)

    def times_lambda(self, r, c=ONE):
        lc = self.lcap + r if self.lcap < EXACT // 2 else self.lcap
        return ExpLin(self.n, self.v0, {(l + r, m): cmul(v, c) for (l, m), v in self.terms.items()},
                      lc)

    def truncate(self, lcap):
        return ExpLin(self.n, self.v0, self.terms, min(lcap, self.lcap))

    def mul(self, o):
        v0 = tuple(_cadd(a, b) for a, b in zip(self.v0, o.v0))
        lcap = min(self.lcap, o.lcap)
        t = {}
        for (l1, m1), c1 in self.terms.items():
            for (l2, m2), c2 in o.terms.items():
                if l1 + l2 > lcap:
                    continue
                k = (l1 + l2, tuple(x + y for x, y in zip(m1, m2)))
                t[k] = _cadd(t.get(k), cmul(c1, c2))
        return ExpLin(self.n, v0, t, lcap)

    def mul_P(self, P):
        """Multiply by a P-polynomial {exps: coeff}."""
        t = {}
        for (l, m), c in self.terms.items():
            for e, v in P.items():
                k = (l, tuple(x + y for x, y in zip(m, e)))
                t[k] = _cadd(t.get(k), cmul(c, v))
        return ExpLin(self.n, self.v0, t, self.lcap)

    def Z(self, i):
        t = {}
        for (l, m), c in self.terms.items():
            if m[i]:
                mm = list(m)
                mm[i] -= 1
                k = (l, tuple(mm))
                t[k] = _cadd(t.get(k), (c[0] * m[i], c[1] * m[i]))
            if not is_zero(self.v0[i]):
                t[(l, m)] = _cadd(t.get((l, m)), cmul(c, self.v0[i]))
        return ExpLin(self.n, self.v0, t, self.lcap)

    def Z_multi(self, alpha):
        f = self
        for i, a in enumerate(alpha):
            for _ in range(a):
                f = f.Z(i)
        return f

    def Y(self, i):
        return self.zero_like()

    def is_zero(self):
        return not self.terms

    def __eq__(self, o):
        if not isinstance(o, ExpLin):
            return NotImplemented
        lc = min(self.lcap, o.lcap)
        a, b = self.truncate(lc), o.truncate(lc)
        if not a.terms or not b.terms:
            return not a.terms and not b.terms
        return a.v0 == b.v0 and a.terms == b.terms

    __hash__ = None


class LieFunction:
    """Phase function f(x, P) on Chart(n, n) with a frame for the Y_i."""

    __slots__ = ("elem", "frame")

    def __init__(self, elem, frame):
        self.elem = elem
        self.frame = frame

    @property
    def chart(self):
        return self.elem.chart

    def _w(self, e):
        return LieFunction(e, self.frame)

    def zero_like(self):
        return self._w(g.zero(self.chart))

    def add(self, o, sign=1):
        return self._w(self.elem + o.elem if sign > 0 else self.elem - o.elem)

    def sub(self, o):
        return self.add(o, -1)

    def scale(self, c):
        return self._w(g.scale(self.elem, c))

    def eps(self, r):
        return self._w(g.times_lambda(self.elem, r, ipow(-r)) if r else self.elem)

    def times_lambda(self, r, c=ONE):
        return self._w(g.times_lambda(self.elem, r, c))

    def mul(self, o):
        return self._w(g.mu(self.elem, o.elem))

    def mul_P(self, P):
        ch = self.chart
        n = ch.nq
        poly = {ch.pack((0,) * n + tuple(e)): v for e, v in P.items()}
        return self._w(g.coef_mul(self.elem, poly))

    def Z(self, i):
        return self._w(g.diff_coeffs(self.elem, self.chart.nq + i))

    def Z_multi(self, alpha):
        f = self
        for i, a in enumerate(alpha):
            for _ in range(a):
                f = f.Z(i)
        return f

    def Y(self, i):
        return self._w(self.frame.apply(self.elem, i))

    def truncate(self, lcap):
        return self._w(self.elem.truncate(2 * lcap))

    def is_zero(self):
        return self.elem.is_zero()


# ---------------------------------------------------------------- products

def std_star_lie(alg, f, h, k):
    """f *_S h = sum_r eps^r sum_t 1/t! M^inv_{r-t}(Z^J f, Y_J h), eps = lambda/i."""
    if k < 0:
        raise ValueError("negative lambda cap")
    T = tables_for(alg, k)
    n = alg.n
    out = f.zero_like()
    for t in range(k + 1):
        for J in iproduct(range(n), repeat=t):
            zf = f
            yh = h
            for j in J:
                zf = zf.Z(j)
            if zf.is_zero():
                continue
            for j in reversed(J):
                yh = yh.Y(j)
            if yh.is_zero():
                continue
            for r in range(t, k + 1):
                m = T.apply(r - t, zf, yh)
                if m.is_zero():
                    continue
                out = out.add(m.eps(r).scale((mpq(1, factorial(t)), Q0)))
    return out.truncate(k)


def gutt_exp_star(alg, U, V, k):
    """(e_U *_S e_V via the M^inv operators, e_{(i/lambda) H((lambda/i)U, (lambda/i)V)})."""
    if k < 1:
        raise ValueError("lambda cap must be >= 1")
    lhs = std_star_lie(alg, ExpLin.e(U, k), ExpLin.e(V, k), k)
    H = bch_components(alg, U, V, k + 1)
    # (1/eps) H(eps U, eps V) = sum_m eps^{m-1} H_m, eps^{m-1} = (-i)^{m-1} lambda^{m-1}
    w = {}
    for m, vec in H.items():
        vals = vector_values(vec)
        w[m - 1] = [cmul(v, ipow(-(m - 1))) for v in vals]
    rhs = ExpLin.exp_of(w, k)
    return lhs, rhs


def laplacian_lie(alg, f, t):
    """Delta_t = Y_i Z^i + t C^l_li Z^i (alpha = (t - 1/2) C^l_li theta^i)."""
    out = f.zero_like()
    cs = alg.trace_form()
    for i in range(alg.n):
        zi = f.Z(i)
        if zi.is_zero():
            continue
        out = out.add(zi.Y(i))
        if not is_zero(cs[i]) and t:
            out = out.add(zi.scale(cmul(cs[i], cpair(t))))
    return out


def _exp_op(op, f, k, sign):
    """exp(sign (lambda/2i) op) f through lambda^k."""
    c = (Q0, mpq(-sign, 2))
    total = f
    term = f
    for m in range(1, k + 1):
        term = op(term).times_lambda(1, cmul(c, (mpq(1, m), Q0))).truncate(k)
        if term.is_zero():
            break
        total = total.add(term)
    return total.truncate(k)


def n_lie(alg, f, t, k, inverse=False):
    return _exp_op(lambda x: laplacian_lie(alg, x, t), f, k, -1 if inverse else 1)


def d_S(alg, f):
    out = f.zero_like()
    for i, c in enumerate(alg.trace_form()):
        if not is_zero(c):
            out = out.add(f.Z(i).scale(c))
    return out


def a_t(alg, f, t, k):
    """A_t = exp((lambda/2i) t d_S)."""
    t = cpair(t)
    return _exp_op(lambda x: d_S(alg, x).scale(t), f, k, 1)


def alpha_closed(alg):
    """d((t - 1/2) c_i theta^i) = 0 iff c_i C^i_jk = 0 for all j, k."""
    c = alg.trace_form()
    for j in range(alg.n):
        for k in range(alg.n):
            acc = (Q0, Q0)
            for i in range(alg.n):
                x = alg.c(i, j, k)
                if x and not is_zero(c[i]):
                    acc = _cadd(acc, cmul(c[i], x))
            if not is_zero(acc):
                return False
    return True


def gutt_weyl_star(alg, f, h, k, t=0):
    """f *_G h = N^-1(Nf *_S Nh) with N = exp((lambda/2i) Delta_t)."""
    if not alpha_closed(alg):
        raise ValueError("C^l_li theta^i is not closed: structure constants are inconsistent")
    nf = n_lie(alg, f, t, k)
    nh = n_lie(alg, h, t, k)
    return n_lie(alg, std_star_lie(alg, nf, nh, k), t, k, inverse=True)


def pichi_star_formula(chi, f, k):
    """sum_r (1/r!) (i lambda/2)^r (X_i1 .. X_ir chi) Z^i1 .. Z^ir f, chi a base function."""
    n = f.chart.nq
    out = chi.mul(f)
    for r in range(1, k + 1):
        c = cmul((mpq(1, factorial(r)), Q0), cmul(ipow(r), (mpq(1, 2 ** r), Q0)))
        for J in iproduct(range(n), repeat=r):
            zf = f.Z_multi(_counts(J, n))
            if zf.is_zero():
                continue
            x = chi
            for j in reversed(J):
                x = x.Y(j)
            if x.is_zero():
                continue
            out = out.add(x.mul(zf).times_lambda(r, c))
    return out.truncate(k)


def _counts(J, n):
    c = [0] * n
    for j in J:
        c[j] += 1
    return c


def hatU_star_eV(alg, U, V, k):
    """U^ *_G e_V from the Bernoulli generating series of ad((lambda/i) V)."""
    if k < 1:
        raise ValueError("lambda cap must be >= 1")
    return bernoulli_action(alg, U, V, k)


def bernoulli_action(alg, U, V, k):
    """e_V * hat( ad(eps V)/(exp(ad(eps V)) - 1) U ) as an ExpLin, through lambda^k."""
    n = alg.n
    ch = SCALAR_CHART
    u = numeric_vector(U)
    v = numeric_vector(V)
    res = ExpLin(n, V, {}, k)
    cur = u
    for r in range(k + 1):
        if r:
            cur = alg.bracket(v, cur, ch)
        coef = cmul((bernoulli(r) / factorial(r), Q0), ipow(-r))
        vals = vector_values(cur)
        terms = {}
        for i, c in enumerate(vals):
            if not is_zero(c):
                m = [0] * n
                m[i] = 1
                terms[(r, tuple(m))] = cmul(c, coef)
        res = res.add(ExpLin(n, V, terms, k))
    return res


def w_r_literal(alg, U, V, r, k):
    """The componentwise term (-1)^r/r! B_r P_l (Z^j U^) C^j1_{j k1} .. C^l_{j_{r-1} k_r} Z^k.. e_V,
    times eps^r, read literally."""
    n = alg.n
    # contract: start with Z^j U^ = U^j, then chain C^{j1}_{j k1} V^{k1} ...
    cur = [cpair(x) for x in U]
    for _ in range(r):
        nxt = [(Q0, Q0)] * n
        for (a, j, kk), c in alg.C.items():
            vk = cpair(V[kk])
            if not is_zero(cur[j]) and not is_zero(vk):
                nxt[a] = _cadd(nxt[a], cmul(cmul(c, cur[j]), vk))
        cur = nxt
    coef = cmul(((-1) ** r * bernoulli(r) / factorial(r), Q0), ipow(-r))
    terms = {}
    for l, c in enumerate(cur):
        if not is_zero(c):
            m = [0] * n
            m[l] = 1
            terms[(r, tuple(m))] = cmul(c, coef)
    return ExpLin(n, V, terms, k)


# ---------------------------------------------------------------- exponential coordinates

class LieFrame:
    """Left-invariant frame X_i = E^a_i(x) d_a in exponential coordinates (jets).

    E = B(ad_x) with B(z) = z/(1 - e^{-z}); its inverse coframe is
    theta = (1 - e^{-ad_x})/ad_x.
    """

    def __init__(self, alg, jet):
        self.alg = alg
        self.n = n = alg.n
        self.jet = jet
        self.Q = Chart(n, 0)
        Q = self.Q
        ad = [[{} for _ in range(n)] for _ in range(n)]     # ad[a][b] = C^a_{cb} x^c
        for (a, c, b), v in alg.C.items():
            padd_into(ad[a][b], {Q.unit[c]: v})
        jm = jet + 1
        bcoef = [(-1) ** r * bernoulli(r) / factorial(r) for r in range(jm + 1)]
        tcoef = [mpq((-1) ** r, factorial(r + 1)) for r in range(jm + 1)]
        self.E = _matrix_series(Q, ad, bcoef, jm)
        self.theta = _matrix_series(Q, ad, tcoef, jm)
        self.ejet = jm

    def components(self, i):
        """{a: E^a_i}"""
        return {a: self.E[a][i] for a in range(self.n) if self.E[a][i]}

    def apply(self, f, i):
        """X_i acting on the base coefficients of an element on Chart(n, *)."""
        parts = []
        for a, p in self.components(i).items():
            d = g.diff_coeffs(f, a)
            if d.terms:
                parts.append(g.coef_mul(d, p, self.ejet))
        return g.add_all(f.chart, parts, f.prof.lower(1)) if parts else g.zero(f.chart, f.prof.lower(1))

    def bracket_defect(self):
        """max over (i, j) of [X_i, X_j] - C^k_ij X_k as jets; {} when the frame is right."""
        n, Q = self.n, self.Q
        jv = self.ejet - 1
        bad = {}
        for i in range(n):
            for j in range(n):
                for a in range(n):
                    acc = {}
                    for b in range(n):
                        padd_into(acc, pmul(Q, self.E[b][i], pdiff(Q, self.E[a][j], b), jv))
                        padd_into(acc, pmul(Q, self.E[b][j], pdiff(Q, self.E[a][i], b), jv),
                                  (mpq(-1), Q0))
                    for k in range(n):
                        c = self.alg.c(k, i, j)
                        if c:
                            padd_into(acc, self.E[a][k], (-c[0], -c[1]))
                    acc = ptrunc(Q, acc, jv)
                    if acc:
                        bad[(i, j, a)] = acc
        return bad

    def inverse_defect(self):
        n, Q = self.n, self.Q
        for a in range(n):
            for b in range(n):
                acc = {}
                for i in range(n):
                    padd_into(acc, pmul(Q, self.E[a][i], self.theta[i][b], self.ejet))
                if a == b:
                    padd_into(acc, {0: (mpq(-1), Q0)})
                if acc:
                    return False
        return True

    def connection(self):
        """Half-commutator connection nabla_U V = 1/2 [U, V] as Christoffel jets."""
        n, Q = self.n, self.Q
        jv = self.ejet - 1
        gam = {}
        for c in range(n):
            for a in range(n):
                for b in range(a, n):
                    acc = {}
                    for j in range(n):
                        if self.E[c][j]:
                            padd_into(acc, pmul(Q, pdiff(Q, self.theta[j][b], a), self.E[c][j], jv))
                    for (k, i, j), v in self.alg.C.items():
                        if self.E[c][k] and self.theta[i][a] and self.theta[j][b]:
                            t = pmul(Q, pmul(Q, self.theta[i][a], self.theta[j][b], jv), self.E[c][k], jv)
                            padd_into(acc, t, (v[0] / 2, v[1] / 2))
                    acc = ptrunc(Q, acc, jv)
                    if acc:
                        gam[(c, a, b)] = acc
        return ConnectionData(n, gam, jv, f"half-commutator {self.alg.name}")

    def to_canonical(self, f, target=None):
        """Substitute P_i = E^a_i(x) p_a: invariant momenta -> canonical momenta."""
        ch = f.chart
        n = self.n
        target = target or ch
        images = []
        for i in range(n):
            acc = {}
            for a in range(n):
                if self.E[a][i]:
                    padd_into(acc, pmul_var(ch, self.E[a][i], n + a))
            images.append(acc)
        out = {}
        for key, p in f.terms.items():
            l = key[0]
            jl = f.prof(2 * l)
            jl = min(jl, self.ejet)
            acc = {}
            for m, c in p.items():
                e = ch.exps(m)
                term = {ch.pack(e[:n] + (0,) * n): c}
                for i in range(n):
                    for _ in range(e[n + i]):
                        term = pmul(ch, term, images[i], jl)
                padd_into(acc, term)
            if acc:
                out[key] = acc
        prof = f.prof.cap_nonempty(f.degs(), self.ejet)
        return WeylElement(ch, out, prof)


def _matrix_series(Q, M, coefs, jet):
    """sum_r coefs[r] M^r for a matrix of polys vanishing at the origin."""
    n = len(M)
    ident = [[{0: ONE} if a == b else {} for b in range(n)] for a in range(n)]
    out = [[dict() for _ in range(n)] for _ in range(n)]
    power = ident
    for r, c in enumerate(coefs):
        if r:
            nxt = [[dict() for _ in range(n)] for _ in range(n)]
            for a in range(n):
                for b in range(n):
                    for k in range(n):
                        if power[a][k] and M[k][b]:
                            padd_into(nxt[a][b], pmul(Q, power[a][k], M[k][b], jet))
            power = nxt
        if not any(any(row) for row in power):
            break
        if c:
            for a in range(n):
                for b in range(n):
                    if power[a][b]:
                        padd_into(out[a][b], power[a][b], (mpq(c), Q0))
    return out


def lie_function(frame, entries, jet=None):
    """LieFunction from {(l, x exps + P exps): coeff}."""
    ch = Chart(frame.n, frame.n)
    j = frame.ejet if jet is None else jet
    return LieFunction(g.build(ch, [(l, [0] * ch.nvars, (), list(e), c)
                                    for (l, e), c in entries.items()], j), frame)


def lie_alpha(frame, t):
    """Coordinate components of (t - 1/2) C^l_li theta^i."""
    c = frame.alg.trace_form()
    w = (cpair(t)[0] - mpq(1, 2), cpair(t)[1])
    out = {}
    for a in range(frame.n):
        acc = {}
        for i in range(frame.n):
            if not is_zero(c[i]) and frame.theta[i][a]:
                padd_into(acc, frame.theta[i][a], cmul(c[i], w))
        if acc:
            out[a] = acc
    return out


def frame_operator(frame, i):
    """X_i as a coordinate differential operator on Q."""
    from .representation import DiffOpOnQ
    n = frame.n
    terms = {}
    for a, p in frame.components(i).items():
        e = [0] * n
        e[a] = 1
        terms[(0, tuple(e))] = p
    return DiffOpOnQ(n, terms, frame.ejet)


def exp_rep_check(alg, U, k, jet=None):
    """rho_S((U.P)^j / j!) == (lambda/i)^j / j! (U.X)^j for j <= k, composing frame operators."""
    from .fedosov_engine import ClassicalFedosov
    from .representation import DiffOpOnQ, std_rep
    frame = LieFrame(alg, (jet or 2 * k + 3) + 1)
    conn = frame.connection()
    C = ClassicalFedosov(conn, sym_cap=k + 1)
    n = alg.n
    UX = None
    for i, u in enumerate(U):
        if not is_zero(cpair(u)):
            t = frame_operator(frame, i).scale(cpair(u))
            UX = t if UX is None else UX + t
    ops = DiffOpOnQ.identity(n)
    ok = []
    for j in range(1, k + 1):
        ops = UX @ ops
        entries = {}
        for m, c in _power_terms(U, j).items():
            entries[(0, (0,) * n + m)] = cmul(c, (mpq(1, factorial(j)), Q0))
        f = frame.to_canonical(lie_function(frame, entries).elem)
        lhs = std_rep(C, f, j)
        rhs = ops.scale(cmul(ipow(-j), (mpq(1, factorial(j)), Q0)), j)
        d = lhs - rhs
        jv = min(lhs.jet, rhs.jet)
        ok.append(all(not ptrunc(Chart(n, 0), p, jv) for p in d.terms.values()))
    return ok


def _power_terms(U, j):
    """(U.P)^j as {P exps: coeff}."""
    n = len(U)
    out = {(0,) * n: ONE}
    for _ in range(j):
        nxt = {}
        for m, c in out.items():
            for i, u in enumerate(U):
                u = cpair(u)
                if is_zero(u):
                    continue
                mm = list(m)
                mm[i] += 1
                nxt[tuple(mm)] = _cadd(nxt.get(tuple(mm)), cmul(c, u))
        out = nxt
    return out


def delta_matches_geometry(frame, f, t):
    """Delta_t in the frame equals the coordinate Delta with alpha = (t - 1/2) c_i theta^i."""
    from .geometry import covariant_delta
    conn = frame.connection()
    lhs = frame.to_canonical(laplacian_lie(frame.alg, f, t).elem)
    rhs = covariant_delta(frame.to_canonical(f.elem), conn, lie_alpha(frame, t), frame.ejet)
    return (lhs - rhs).is_zero()


# ---------------------------------------------------------------- cross-validation

@dataclass
class CrossReport:
    algebra: str
    order: int
    frame_ok: bool
    trace_free: bool
    probes: int
    mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return self.frame_ok and self.trace_free and not self.mismatches


def cross_validate_fedosov(alg, k=2, probes=None, jet=None):
    """Compare std_star_lie with the general Fedosov engine (standard mode) on the
    half-commutator connection in exponential coordinates."""
    from .fedosov_engine import FedosovSession, min_jet
    J = min_jet(k) if jet is None else jet
    frame = LieFrame(alg, J + 1)
    conn = frame.connection()
    cd = curvature(conn)
    if probes is None:
        probes = default_probes(frame)
    S = FedosovSession(conn, mode="standard", lambda_order=k)
    rep = CrossReport(alg.name, k, not frame.bracket_defect() and frame.inverse_defect(),
                      not cd.trace_two_form, 0)
    for i, f in enumerate(probes):
        for j, h in enumerate(probes):
            lie = std_star_lie(alg, f, h, k)
            lhs = frame.to_canonical(lie.elem)
            rhs = S.star(frame.to_canonical(f.elem), frame.to_canonical(h.elem), k)
            d = (lhs - rhs).truncate(2 * k)
            rep.probes += 1
            if not d.is_zero():
                rep.mismatches.append((i, j))
    return rep


def default_probes(frame):
    n = frame.n
    z = [0] * n

    def e(x, P):
        return tuple(x) + tuple(P)

    u = [list(z) for _ in range(n)]
    for i in range(n):
        u[i][i] = 1
    return [
        lie_function(frame, {(0, e(z, u[0])): 1}),
        lie_function(frame, {(0, e(z, u[1])): 1, (0, e(u[0], z)): 2}),
        lie_function(frame, {(0, e(u[1], u[n - 1])): 1}),
        lie_function(frame, {(0, e(z, [a + b for a, b in zip(u[0], u[1])])): (0, 1)}),
    ]
