"""Equivalences between the Fedosov products and the Weyl-type product *_W.

A :class:`Calculus` fixes one connection, one one-form alpha (dalpha = -tr R)
and one lambda-order, and owns the three Fedosov sessions plus the
conjugating element h.  Every operator below reads alpha from it, so two
operators can never silently disagree about alpha.

Maps on phase functions:

* T   (*' -> *_F)      Tf = sigma(S^-1 tau'(f)),           T^-1 f = sigma(S tau_F(f))
* V   (*_S -> *')      Vf = sigma(e^{-ad(pi*h)} tau_S(f)),  V^-1 f = sigma(e^{ad} tau'(f))
* C_S (anti-aut of *_S) C_S f = sigma(e^{ad} S C S^-1 e^{-ad} tau_S(f))
* N   exp((lambda/2i) Delta),  f *_W g = N^-1(Nf *_S Ng)
"""
from dataclasses import dataclass
from itertools import combinations_with_replacement

from gmpy2 import mpq

from . import gweyl_core as g
from .fedosov_engine import ClassicalFedosov, FedosovSession, SessionConfig, exp_ad
from .geometry import (LiftedConnection, covariant_delta, curvature, exterior_derivative,
                       n_operator, s_fib)
from .gweyl_core import WeylElement
from .jets import EXACT, JetError, Profile, padd_into, pdiff, pmul, pmul_var, ptrunc
from .scalar import Q0, Q1

KINDS = ("T", "V", "N", "Cs")


def _finish(f, k):
    """Keep lambda-powers <= k and fail loudly if one of them lost its jets."""
    out = f.truncate(2 * k)
    for l in range(k + 1):
        if out.prof(2 * l) < 0:
            raise JetError(f"coefficient at lambda^{l} exhausted the jets")
    return out


def _same_setup(a, b):
    if a.lift is not b.lift and a.lift.conn is not b.lift.conn:
        raise ValueError("sessions are built over different connections")
    if a.k != b.k or a.cap != b.cap:
        raise ValueError(f"cap mismatch: lambda-order {a.k}/{b.k}, Deg cap {a.cap}/{b.cap}")


# ---------------------------------------------------------------- the maps

def t_map(session_prime, session_weyl, f, direction="forward"):
    _same_setup(session_prime, session_weyl)
    k = session_prime.k
    if direction == "forward":
        t = session_prime.taylor(f, 2 * k)
        return _finish(g.sigma(s_fib(t, session_prime.lift, inverse=True)), k)
    if direction == "inverse":
        t = session_weyl.taylor(f, 2 * k)
        return _finish(g.sigma(s_fib(t, session_weyl.lift)), k)
    raise ValueError(f"unknown direction {direction!r}")


def v_map(session_std, session_prime, f, direction="forward", h=None):
    if h is None:
        raise ValueError("V needs the conjugating element h")
    _same_setup(session_std, session_prime)
    k = session_std.k
    ph = g.pullback(h, session_std.chart)
    if direction == "forward":
        t = session_std.taylor(f, 2 * k)
        return _finish(g.sigma(exp_ad(-ph, t, session_std.product, 2 * k)), k)
    if direction == "inverse":
        t = session_prime.taylor(f, 2 * k)
        return _finish(g.sigma(exp_ad(ph, t, session_std.product, 2 * k)), k)
    raise ValueError(f"unknown direction {direction!r}")


def cs_map(session_std, f, h=None):
    if h is None:
        raise ValueError("C_S needs the conjugating element h")
    if session_std.mode != "standard":
        raise ValueError("C_S is built on a standard-mode session")
    k = session_std.k
    cap = 2 * k
    prod = session_std.product
    lift = session_std.lift
    ph = g.pullback(h, session_std.chart)
    t = session_std.taylor(f, cap)
    t = s_fib(exp_ad(-ph, t, prod, cap), lift, inverse=True)
    t = s_fib(g.conj(t), lift)
    return _finish(g.sigma(exp_ad(ph, t, prod, cap)), k)


def weyl_star_N(f, g_, conn, alpha, k, session_std, alpha_jet=EXACT):
    """f *_W g = N^-1((Nf) *_S (Ng))."""
    nf = n_operator(f, conn, alpha, alpha_jet).truncate(2 * k)
    ng = n_operator(g_, conn, alpha, alpha_jet).truncate(2 * k)
    prod = session_std.star(nf, ng, k)
    return _finish(n_operator(prod, conn, alpha, alpha_jet, inverse=True), k)


# ---------------------------------------------------------------- the session bundle

def resolve_alpha(conn, policy="auto"):
    """(alpha, alpha_jet) for a policy 'auto', 'zero' or explicit jets {i: poly}."""
    cd = curvature(conn)
    if isinstance(policy, str):
        if policy == "auto":
            return cd.alpha, cd.alpha_jet
        if policy == "zero":
            if cd.trace_two_form:
                raise ValueError("alpha = 0 needs a unimodular connection (tr R != 0 here)")
            return {}, EXACT
        raise ValueError(f"unknown alpha policy {policy!r}")
    alpha = {i: p for i, p in policy.items() if p}
    jr = cd.jet
    da = exterior_derivative(conn.Q, alpha, conn.n)
    for key in set(da) | set(cd.trace_two_form):
        acc = dict(da.get(key, {}))
        padd_into(acc, cd.trace_two_form.get(key, {}))
        acc = ptrunc(conn.Q, acc, jr - 1 if jr < EXACT // 2 else jr)
        if acc:
            raise ValueError(f"explicit alpha violates d alpha = -tr R at {key}")
    return alpha, cd.alpha_jet


class Calculus:
    """Sessions, alpha and h for one geometry at one lambda-order."""

    def __init__(self, conn, lambda_order=2, alpha="auto", strict=True, lift=None):
        self.conn = conn
        self.k = lambda_order
        self.strict = strict
        self.alpha, self.alpha_jet = resolve_alpha(conn, alpha)
        self.lift = lift or LiftedConnection(conn)
        self.chart = conn.TQ
        self._sessions = {}
        self._h = None

    def session(self, mode):
        s = self._sessions.get(mode)
        if s is None:
            cfg = SessionConfig(mode=mode, lambda_order=self.k, strict=self.strict)
            s = FedosovSession(self.conn, cfg, lift=self.lift)
            self._sessions[mode] = s
        return s

    def check_alpha(self, alpha):
        if alpha is not None and {i: p for i, p in alpha.items() if p} != self.alpha:
            raise ValueError("alpha differs from the one fixed for this calculus")

    @property
    def h(self):
        if self._h is None:
            cap = 2 * self.k + 1
            C = ClassicalFedosov(self.conn, sym_cap=cap)
            self._h = C.solve_h(self.alpha, cap=cap, alpha_jet=self.alpha_jet)
        return self._h

    # -- products
    def star(self, mode, f, g_):
        if mode == "weyl-n":
            return self.weyl_star(f, g_)
        return self.session(mode).star(f, g_, self.k)

    def weyl_star(self, f, g_):
        return weyl_star_N(f, g_, self.conn, self.alpha, self.k, self.session("standard"),
                           self.alpha_jet)

    # -- maps
    def T(self, f, inverse=False):
        return t_map(self.session("prime"), self.session("weyl"), f,
                     "inverse" if inverse else "forward")

    def V(self, f, inverse=False):
        return v_map(self.session("standard"), self.session("prime"), f,
                     "inverse" if inverse else "forward", h=self.h)

    def Cs(self, f):
        return cs_map(self.session("standard"), f, h=self.h)

    def N(self, f, power=1, inverse=False, alpha=None):
        self.check_alpha(alpha)
        return n_operator(f, self.conn, self.alpha, self.alpha_jet, inverse, power).truncate(2 * self.k)

    def delta(self, f):
        return covariant_delta(f, self.conn, self.alpha, self.alpha_jet)

    def map(self, kind):
        return EquivalenceMap(kind, self)

    # -- checks
    def n2c_equals_cs_check(self, probes):
        """[(probe, N^2 conj f - C_S f)]; all differences vanish when the identity holds."""
        out = []
        for f in probes:
            if any(self.chart.pdeg(m) > 1 for p in f.terms.values() for m in p):
                raise ValueError("N^2 C = C_S is only claimed for functions at most linear in momenta")
            lhs = _finish(self.N(g.conj(f), power=2), self.k)
            out.append((f, lhs - self.Cs(f)))
        return out

    def m2_compare(self, X, Y, engine=True):
        return m2_compare(X, Y, self.conn, self.alpha, self.alpha_jet,
                          self if engine else None)


@dataclass
class EquivalenceMap:
    """One of T, V, N, C_S bound to a calculus."""

    kind: str
    calc: Calculus

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown map {self.kind!r}; expected one of {KINDS}")

    def __call__(self, f, inverse=False):
        c = self.calc
        if self.kind == "T":
            return c.T(f, inverse)
        if self.kind == "V":
            return c.V(f, inverse)
        if self.kind == "N":
            return c.N(f, inverse=inverse)
        return c.Cs(f)          # an involution: its own inverse

    def order_bound(self, r):
        """The order the theory allows for the lambda^r part."""
        return {"T": 2 * r, "V": r, "N": 2 * r, "Cs": 2 * r}[self.kind]


# ---------------------------------------------------------------- measured differential order

def _monomial(chart, exps, jet=EXACT):
    return g.build(chart, [(0, [0] * chart.nvars, (), list(exps), 1)], jet)


def differential_order(op, chart, r, max_order, jet=EXACT):
    """Order of the lambda^r part of ``op`` measured with coordinate commutators.

    The m-fold commutator [..[L, x_a1], .., x_am] applied to 1 is a function;
    for m = order(L) it is nonzero for some (a1..am) and for m > order(L) it
    vanishes.  Returns the largest such m seen up to max_order + 1.
    """
    nv = chart.nvars
    images = {}

    def L(exps):
        v = images.get(exps)
        if v is None:
            res = op(_monomial(chart, exps, jet))
            v = (res.coeff(r), res.prof(2 * r))
            images[exps] = v
        return v

    order = 0
    for m in range(1, max_order + 2):
        hit = False
        for combo in combinations_with_replacement(range(nv), m):
            acc = {}
            jv = EXACT
            for mask in range(1 << m):
                inside = [0] * nv
                outside = {0: (Q1, Q0)}
                for b in range(m):
                    if mask >> b & 1:
                        inside[combo[b]] += 1
                    else:
                        outside = pmul_var(chart, outside, combo[b])
                val, jl = L(tuple(inside))
                jv = min(jv, jl)
                sign = -1 if (m - bin(mask).count("1")) & 1 else 1
                padd_into(acc, pmul(chart, outside, val), (mpq(sign), Q0))
            if jv < 0:
                raise JetError("order probe exhausted the jets")
            if ptrunc(chart, acc, jv):
                hit = True
                break
        if hit:
            order = m
    return order


# ---------------------------------------------------------------- M_2 comparison

def vector_hat(X, chart, jet=EXACT):
    """X^i p_i as a phase function; X maps i -> poly in q."""
    n = chart.nq
    terms = {}
    for i, p in X.items():
        if p:
            padd_into(terms, pmul_var(chart, p, n + i))
    return WeylElement(chart, {(0, 0, 0): terms} if terms else {}, Profile.uniform(jet))


def _cov_vec(X, conn, jet):
    """X^k_{|l} = d_l X^k + Gamma^k_{lm} X^m."""
    Q, n = conn.Q, conn.n
    out = {}
    for k in range(n):
        for l in range(n):
            acc = dict(pdiff(Q, X.get(k, {}), l))
            for m in range(n):
                if X.get(m):
                    padd_into(acc, pmul(Q, conn.G(k, l, m), X[m], jet))
            acc = ptrunc(Q, acc, jet)
            if acc:
                out[(k, l)] = acc
    return out


def _contract(Q, T, X, Y, jet):
    acc = {}
    for (i, j), p in T.items():
        if X.get(i) and Y.get(j):
            padd_into(acc, pmul(Q, pmul(Q, p, X[i], jet), Y[j], jet))
    return acc


def m2_closed_forms(X, Y, conn, alpha=None, alpha_jet=EXACT, jet=EXACT):
    """(M_2^W, M_2^F, validity) as polys on Q from the local formulas."""
    Q, n = conn.Q, conn.n
    cd = curvature(conn)
    jv = min(jet - 1 if jet < EXACT // 2 else jet, cd.jet,
             conn.jet - 1 if conn.jet < EXACT // 2 else conn.jet)
    if alpha:
        jv = min(jv, alpha_jet - 1 if alpha_jet < EXACT // 2 else alpha_jet, conn.jet)
    if jv < 0:
        raise JetError("M_2 comparison needs jets of order >= 2")
    DX = _cov_vec(X, conn, jv)
    DY = _cov_vec(Y, conn, jv)
    tr = {}
    for (k, l), p in DX.items():
        q_ = DY.get((l, k))
        if q_:
            padd_into(tr, pmul(Q, p, q_, jv))
    mF = {k: (-v[0], -v[1]) for k, v in tr.items()}
    sym = _contract(Q, cd.ricci, X, Y, jv)
    padd_into(sym, _contract(Q, cd.ricci, Y, X, jv))
    if alpha:
        # (nabla alpha)_{lj} = d_l alpha_j - Gamma^m_{lj} alpha_m
        na = {}
        for l in range(n):
            for j in range(n):
                acc = dict(pdiff(Q, alpha.get(j, {}), l))
                for m in range(n):
                    if alpha.get(m):
                        padd_into(acc, pmul(Q, conn.G(m, l, j), alpha[m], jv), (mpq(-1), Q0))
                if acc:
                    na[(l, j)] = acc
        padd_into(sym, _contract(Q, na, X, Y, jv), (mpq(-1), Q0))
        padd_into(sym, _contract(Q, na, Y, X, jv), (mpq(-1), Q0))
    mW = dict(mF)
    padd_into(mW, sym, (mpq(-1, 2), Q0))
    return ptrunc(Q, mW, jv), ptrunc(Q, mF, jv), jv


@dataclass
class M2Report:
    weyl: dict
    fedosov: dict
    difference: dict
    jet: int
    engine_weyl: dict | None = None
    engine_fedosov: dict | None = None

    @property
    def confirmed(self):
        if self.engine_weyl is None:
            return None
        return self.engine_weyl == self.weyl and self.engine_fedosov == self.fedosov


def m2_compare(X, Y, conn, alpha=None, alpha_jet=EXACT, calc=None, jet=EXACT):
    """M_2^W and M_2^F on (X^, Y^); with ``calc`` the values are re-derived as
    -4 times the lambda^2 coefficients of X^ *_W Y^ and X^ *_F Y^."""
    mW, mF, jv = m2_closed_forms(X, Y, conn, alpha, alpha_jet, jet)
    diff = dict(mW)
    padd_into(diff, mF, (mpq(-1), Q0))
    rep = M2Report(mW, mF, diff, jv)
    if calc is not None:
        if calc.k < 2:
            raise ValueError("the engine cross-check needs lambda-order >= 2")
        calc.check_alpha(alpha)
        ch = calc.chart
        xh, yh = vector_hat(X, ch, jet), vector_hat(Y, ch, jet)
        for name, prod in (("engine_weyl", calc.weyl_star(xh, yh)),
                           ("engine_fedosov", calc.star("weyl", xh, yh))):
            j = min(jv, prod.prof(4))
            c = {m: (v[0] * -4, v[1] * -4) for m, v in prod.coeff(2).items()}
            setattr(rep, name, ptrunc(ch, c, j))
        rep.jet = min(jv, calc.session("weyl").star(xh, yh, 2).prof(4))
        rep.weyl, rep.fedosov = ptrunc(ch, mW, rep.jet), ptrunc(ch, mF, rep.jet)
        rep.engine_weyl = ptrunc(ch, rep.engine_weyl, rep.jet)
        rep.engine_fedosov = ptrunc(ch, rep.engine_fedosov, rep.jet)
        rep.difference = ptrunc(ch, diff, rep.jet)
    return rep
