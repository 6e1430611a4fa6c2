"""Momentum polynomials acting as differential operators on Q.

Operators are kept in coordinate form, ``sum lambda^l c_{l,a}(q) d^a``, with
jets valid to a uniform q-degree.  The covariant closed form of the standard
representation is evaluated through tau_0 and then read back into coordinate
form by probing with monomials, so composition and adjoints stay plain
Leibniz calculus.
"""
from collections import namedtuple
from itertools import product as iproduct
from math import comb, factorial

from gmpy2 import mpq

from . import gweyl_core as g
from .fedosov_engine import ClassicalFedosov
from .geometry import div_alpha
from .gweyl_core import WeylElement
from .jets import (EXACT, Chart, JetError, Profile, padd_into, pconj, pdiff,
                   pmul, ptrunc)
from .scalar import Q0, Q1, cmul, ipow

SymTensor = namedtuple("SymTensor", "k comps jet")
SymTensor.__doc__ = "Symmetric contravariant tensor: comps keyed by sorted index tuples."


def _lo(j, k=1):
    return j if j >= EXACT // 2 else j - k


def _multi_fact(alpha):
    r = 1
    for a in alpha:
        r *= factorial(a)
    return r


def _counts(idx, n):
    c = [0] * n
    for i in idx:
        c[i] += 1
    return tuple(c)


# ---------------------------------------------------------------- hat

def hat(T, chart):
    """T^ = (1/k!) T^{i1..ik} p_i1 .. p_ik as a phase function on T*Q."""
    n = chart.nq
    terms = {}
    for idx, p in T.comps.items():
        if len(idx) != T.k:
            raise ValueError(f"component {idx} does not match tensor degree {T.k}")
        beta = _counts(idx, n)
        c = (mpq(1, _multi_fact(beta)), Q0)
        e = chart.pack((0,) * n + beta)
        padd_into(terms, {m + e: v for m, v in p.items()}, c)
    return WeylElement(chart, {(0, 0, 0): terms} if terms else {}, Profile.uniform(T.jet))


def unhat(f, k=None):
    """The symmetric tensor behind a lambda-free momentum-homogeneous phase function."""
    ch = f.chart
    n = ch.nq
    if any(s or A or l for (l, s, A) in f.terms):
        raise ValueError("unhat expects a lambda-free phase function")
    p = f.coeff(0)
    degs = {ch.pdeg(m) for m in p}
    if k is None:
        if len(degs) > 1:
            raise ValueError(f"not homogeneous in the momenta (degrees {sorted(degs)})")
        k = degs.pop() if degs else 0
    elif degs - {k}:
        raise ValueError(f"momentum degrees {sorted(degs)} differ from {k}")
    comps = {}
    qmask = (1 << (8 * n)) - 1
    for m, c in p.items():
        e = ch.exps(m)
        beta = e[n:]
        idx = tuple(i for i in range(n) for _ in range(beta[i]))
        padd_into(comps.setdefault(idx, {}), {m & qmask: c}, (mpq(_multi_fact(beta)), Q0))
    comps = {i: v for i, v in comps.items() if v}
    return SymTensor(k, comps, f.prof(0))


# ---------------------------------------------------------------- fibrewise representations

def fib_std_rep(a, Psi, lift):
    """rho~_S(a) Psi = i^*(a o_S pi^* Psi)."""
    Q = lift.conn.Q
    return g.restrict_zero_section(g.std_mul(a, g.pullback(Psi, lift.chart), lift.hor), Q)


def fib_weyl_rep(a, Psi, lift):
    return fib_std_rep(g.s_fib(a, lift.hor), Psi, lift)


# ---------------------------------------------------------------- operators on Q

class DiffOpOnQ:
    """sum lambda^l c_{l,a}(q) d^a; coefficients valid to q-degree ``jet``,
    lambda-powers above ``lcap`` unknown."""

    __slots__ = ("n", "Q", "terms", "jet", "lcap")

    def __init__(self, n, terms=None, jet=EXACT, lcap=EXACT):
        self.n = n
        self.Q = Chart(n, 0)
        self.jet = jet
        self.lcap = lcap
        out = {}
        for (l, a), p in (terms or {}).items():
            if l > lcap:
                continue
            p = ptrunc(self.Q, p, jet)
            if p:
                out[(l, tuple(a))] = p
        self.terms = out

    @classmethod
    def identity(cls, n):
        return cls(n, {(0, (0,) * n): {0: (Q1, Q0)}})

    @classmethod
    def multiplication(cls, n, poly, jet=EXACT):
        return cls(n, {(0, (0,) * n): dict(poly)}, jet)

    @classmethod
    def partial(cls, n, i):
        a = [0] * n
        a[i] = 1
        return cls(n, {(0, tuple(a)): {0: (Q1, Q0)}})

    def __repr__(self):
        return f"DiffOpOnQ(n={self.n}, {len(self.terms)} terms, order {self.order})"

    @property
    def order(self):
        return max((sum(a) for _, a in self.terms), default=0)

    def is_zero(self):
        return not self.terms

    def _bin(self, o, sign):
        terms = {k: dict(v) for k, v in self.terms.items()}
        for k, v in o.terms.items():
            padd_into(terms.setdefault(k, {}), v, None if sign > 0 else (mpq(-1), Q0))
        return DiffOpOnQ(self.n, terms, min(self.jet, o.jet), min(self.lcap, o.lcap))

    def __add__(self, o):
        return self._bin(o, 1)

    def __sub__(self, o):
        return self._bin(o, -1)

    def __eq__(self, o):
        if not isinstance(o, DiffOpOnQ):
            return NotImplemented
        return (self - o).is_zero()

    __hash__ = None

    def scale(self, c, lam=0):
        """Multiply by c * lambda^lam."""
        return DiffOpOnQ(self.n, {(l + lam, a): {m: cmul(v, c) for m, v in p.items()}
                                  for (l, a), p in self.terms.items()},
                         self.jet, self.lcap + lam if self.lcap < EXACT // 2 else self.lcap)

    def conj(self):
        return DiffOpOnQ(self.n, {k: pconj(p) for k, p in self.terms.items()}, self.jet, self.lcap)

    def truncate_lambda(self, k):
        return DiffOpOnQ(self.n, self.terms, self.jet, min(self.lcap, k))

    def apply(self, psi):
        """Act on a phase function on Q (lambda-series of base jets)."""
        Q = self.Q
        if psi.chart != Q:
            raise ValueError("operand lives on a different chart")
        parts = []
        dcache = {(0,) * self.n: psi}

        def D(a):
            r = dcache.get(a)
            if r is None:
                i = max(j for j in range(self.n) if a[j])
                prev = list(a)
                prev[i] -= 1
                r = g.diff_coeffs(D(tuple(prev)), i)
                dcache[a] = r
            return r

        for (l, a), c in self.terms.items():
            t = g.coef_mul(D(a), c, self.jet)
            parts.append(g.times_lambda(t, l) if l else t)
        out = g.add_all(Q, parts) if parts else g.zero(Q, psi.prof)
        if self.lcap < EXACT // 2:
            out = out.truncate(2 * self.lcap)
        return out

    def compose(self, o):
        """self o other."""
        Q, n = self.Q, self.n
        jet = min(self.jet, _lo(o.jet, self.order))
        terms = {}
        dcache = {}
        for (l1, a), c1 in self.terms.items():
            for (l2, b), c2 in o.terms.items():
                for gam in iproduct(*[range(x + 1) for x in a]):
                    db = dcache.get((id(c2), gam))
                    if db is None:
                        db = c2
                        for i, e in enumerate(gam):
                            for _ in range(e):
                                db = pdiff(Q, db, i)
                        dcache[(id(c2), gam)] = db
                    if not db:
                        continue
                    mult = 1
                    for x, y_ in zip(a, gam):
                        mult *= comb(x, y_)
                    r = pmul(Q, c1, db, jet)
                    if r:
                        out_a = tuple(x - y_ + z for x, y_, z in zip(a, gam, b))
                        padd_into(terms.setdefault((l1 + l2, out_a), {}), r, (mpq(mult), Q0))
        return DiffOpOnQ(n, terms, jet, min(self.lcap, o.lcap))

    __matmul__ = compose

    @classmethod
    def from_action(cls, n, action, order, lcap=EXACT):
        """Read back coordinate coefficients from the action on monomials q^a, |a| <= order."""
        Q = Chart(n, 0)
        alphas = [a for d in range(order + 1) for a in _exps(n, d)]
        coeffs = {}
        jet = EXACT
        for a in alphas:
            res = action(g.from_poly(Q, {Q.pack(a): (Q1, Q0)}))
            top = lcap if lcap < EXACT // 2 else max((l for (l, _, _) in res.terms), default=0)
            for l in range(top + 1):
                jet = min(jet, res.prof(2 * l))
            fa = _multi_fact(a)
            for l in range(top + 1):
                acc = dict(res.coeff(l))
                for b in _sub_multi(a):
                    if b == a:
                        continue
                    c = coeffs.get((l, b))
                    if not c:
                        continue
                    rest = tuple(x - y_ for x, y_ in zip(a, b))
                    w = mpq(fa, _multi_fact(rest))
                    padd_into(acc, {m + Q.pack(rest): v for m, v in c.items()}, (-w, Q0))
                if acc:
                    coeffs[(l, a)] = {m: (v[0] / fa, v[1] / fa) for m, v in acc.items()}
        if jet < 0:
            raise JetError("operator recovery exhausted the jets")
        return cls(n, coeffs, jet, lcap)

    def adjoint(self, conn, alpha=None, alpha_jet=EXACT):
        return formal_adjoint(self, conn, alpha, alpha_jet)


def _exps(n, d):
    if n == 1:
        yield (d,)
        return
    for a in range(d, -1, -1):
        for rest in _exps(n - 1, d - a):
            yield (a,) + rest


def _sub_multi(a):
    return iproduct(*[range(x + 1) for x in a])


# ---------------------------------------------------------------- standard and Weyl representation

def _classical(obj):
    if isinstance(obj, ClassicalFedosov):
        return obj
    if hasattr(obj, "classical"):
        return obj.classical
    return ClassicalFedosov(obj)


def std_rep_apply(f, psi, classical):
    """Closed form: sum (1/r!)(lambda/i)^r i^*(d_p^r f) i_s(d_q)^r D_0^(r) psi.

    With D_0^(r) the degree-r part of tau_0(psi) this collapses, per momentum
    monomial c p^b, to (lambda/i)^|b| c b! [y^b] tau_0(psi).
    """
    C = _classical(classical)
    ch = f.chart
    n = ch.nq
    Q = C.Q
    if any(s or A for (_, s, A) in f.terms):
        raise ValueError("the representation takes phase functions")
    r_max = max((ch.pdeg(m) for p in f.terms.values() for m in p), default=0)
    tau = C.taylor(psi, r_max)
    qmask = (1 << (8 * n)) - 1
    out = []
    for (l, _, _), p in f.terms.items():
        for m, c in p.items():
            e = ch.exps(m)
            beta = e[n:]
            r = sum(beta)
            sel = tau.select(lambda l2, s, A, key=Q.pack(beta): s == key and not A)
            sel = WeylElement(Q, {(l2, 0, 0): v for (l2, _, _), v in sel.terms.items()},
                              Profile.uniform(min(tau.prof(r), f.prof(2 * l))))
            coef = cmul(ipow(-r), (mpq(_multi_fact(beta)), Q0))
            term = g.coef_mul(sel, {m & qmask: cmul(c, coef)}, f.prof(2 * l))
            out.append(g.times_lambda(term, l + r) if l + r else term)
    return g.add_all(Q, out) if out else g.zero(Q)


def std_rep_via_star(session_std, f, psi):
    """i^*(f *_S pi^* psi), the defining expression."""
    if session_std.mode != "standard":
        raise ValueError("needs a standard-mode session")
    res = session_std.star(f, g.pullback(psi, session_std.chart))
    return g.restrict_zero_section(res, session_std.conn.Q)


def std_rep(classical, f, lcap=None):
    """rho_S(f) as a DiffOpOnQ."""
    C = _classical(classical)
    ch = f.chart
    order = max((ch.pdeg(m) for p in f.terms.values() for m in p), default=0)
    top = max((l for (l, _, _) in f.terms), default=0) + order
    if lcap is None:
        lcap = top
    return DiffOpOnQ.from_action(C.conn.n, lambda psi: std_rep_apply(f, psi, C), order, lcap)


def weyl_rep(calc, f, lcap=None):
    """rho_W(f) = rho_S(N f)."""
    return std_rep(calc.session("standard").classical, calc.N(f), lcap)


def std_symbol(classical, A):
    """Inverse of rho_S on operators: the phase function f with rho_S(f) = A.

    Peels off top-order coordinate coefficients; it is the constructive
    witness that rho_S is injective on momentum polynomials.
    """
    C = _classical(classical)
    n = A.n
    ch = Chart(n, n)
    f = WeylElement(ch)
    rest = A
    while not rest.is_zero():
        r = rest.order
        lmin = min(l for (l, a) in rest.terms if sum(a) == r)
        if lmin < r:
            raise ValueError("operator is not in the image of rho_S (lambda-power below order)")
        terms = {}
        for (l, a), c in rest.terms.items():
            if sum(a) != r:
                continue
            coef = cmul(ipow(r), (mpq(1), Q0))     # (i/lambda)^r
            e = ch.pack((0,) * n + a)
            padd_into(terms.setdefault((l - r, 0, 0), {}), {m + e: v for m, v in c.items()}, coef)
        piece = WeylElement(ch, terms, Profile.uniform(A.jet))
        f = f + piece
        rest = rest - std_rep(C, piece, A.lcap)
        if rest.order >= r and any(sum(a) == r for (_, a) in rest.terms):
            raise ArithmeticError("symbol recovery did not reduce the order")
    return f


# ---------------------------------------------------------------- adjoints

def volume_log_derivative(conn, alpha=None):
    """beta_i = Gamma^k_{ki} + alpha_i = d_i log(density) of a volume with nabla mu = alpha x mu."""
    n = conn.n
    out = {}
    for i in range(n):
        acc = {}
        for k in range(n):
            padd_into(acc, conn.G(k, k, i))
        if alpha:
            padd_into(acc, alpha.get(i, {}))
        if acc:
            out[i] = acc
    return out


def formal_adjoint(A, conn, alpha=None, alpha_jet=EXACT):
    """A^dagger w.r.t. a volume mu with nabla_0 mu = alpha x mu:
    (c d^a)^dagger = (-1)^|a| (d + beta)^a o conj(c)."""
    n = A.n
    beta = volume_log_derivative(conn, alpha)
    jb = min(conn.jet, alpha_jet if alpha else EXACT)
    minus_nabla = []
    for i in range(n):
        op = DiffOpOnQ.partial(n, i).scale((mpq(-1), Q0))
        if beta.get(i):
            op = op - DiffOpOnQ.multiplication(n, beta[i], jb)
        minus_nabla.append(op)
    out = DiffOpOnQ(n, {}, EXACT, A.lcap)
    for (l, a), c in A.terms.items():
        term = DiffOpOnQ.multiplication(n, pconj(c), A.jet).scale((Q1, Q0), l)
        for i, e in enumerate(a):
            for _ in range(e):
                term = minus_nabla[i] @ term
        out = out + term
    return DiffOpOnQ(n, out.terms, out.jet, A.lcap)


def adjoint_by_divergence(T, phi, conn, alpha=None, alpha_jet=EXACT):
    """rho_S(T^)^dagger phi = (1/k!)(lambda/i)^k Div_alpha^k(phi conj(T)).

    The integration-by-parts recursion, evaluated on one lambda-free phi.
    """
    Q, k = conn.Q, T.k
    pj = phi.prof(0)
    p0 = phi.coeff(0)
    comps = {}
    for idx, p in T.comps.items():
        r = pmul(Q, pconj(p), p0, min(T.jet, pj))
        if r:
            comps[idx] = r
    t = (k, comps, min(T.jet, pj))
    for _ in range(k):
        t = div_alpha(t, conn, alpha, alpha_jet)
    _, comps, jet = t
    val = comps.get((), {})
    c = cmul(ipow(-k), (mpq(1, factorial(k)), Q0))
    return g.times_lambda(g.from_poly(Q, val, jet=jet), k, c)
