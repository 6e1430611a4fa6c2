"""Fedosov recursions on a cotangent chart and the classical theory on Q.

A :class:`FedosovSession` solves for r in one of three modes

* ``weyl``      D_F = -delta + nabla + (i/lambda) ad_W(r)
* ``prime``     D'  = -delta + nabla + B + (i/lambda) ad_S(S r)
* ``standard``  D_S = -delta + nabla + B + (i/lambda) ad_S(r_S)

and builds Fedosov-Taylor series and star products from it.
:class:`ClassicalFedosov` holds rho_0, D_0, tau_0 = e^D and D_0^{-1} on Q.
"""
from dataclasses import dataclass

from gmpy2 import mpq

from . import gweyl_core as g
from .geometry import (ConnTable, LiftedConnection, b_operator, nabla, curvature,
                       sym_derivative, s_fib)
from .gweyl_core import WeylElement, VecElement
from .jets import EXACT, UNKNOWN, JetError, Profile
from .scalar import Q0, Q1

MODES = ("weyl", "prime", "standard")
I_PAIR = (Q0, Q1)


def times_i_over_lambda(a):
    return g.scale(g.div_lambda(a), I_PAIR)


def assemble(chart, comps, cap, low=EXACT):
    """Sum Deg-homogeneous components; degrees above ``cap`` become unknown."""
    vals = []
    terms = {}
    for d in range(cap + 1):
        c = comps.get(d)
        if c is None:
            vals.append(low)
            continue
        vals.append(c.prof(d))
        for k, v in c.terms.items():
            g._acc(terms, k, v)
    return WeylElement(chart, terms, Profile(vals, UNKNOWN))


def components(a, lo=0, hi=None):
    hi = a.prof.last_known() if hi is None else hi
    if hi is None:
        hi = max(a.degs(), default=0)
    return {d: a.component(d) for d in range(lo, hi + 1)}


def phase_key(f):
    return tuple(sorted((k, tuple(sorted(p.items()))) for k, p in f.terms.items())), f.prof.vals, f.prof.tail


@dataclass
class SessionConfig:
    mode: str = "weyl"
    lambda_order: int = 2
    deg_cap: int | None = None
    strict: bool = True
    check: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.lambda_order < 0:
            raise ValueError("lambda_order must be >= 0")


def min_jet(k):
    """Jet order the engine needs to deliver a star product at lambda-order k."""
    return 2 * k + 3


class FedosovSession:
    """One Fedosov construction over a lifted connection."""

    def __init__(self, conn, config=None, lift=None, **kw):
        cfg = config or SessionConfig(**kw)
        self.cfg = cfg
        self.conn = conn
        self.mode = cfg.mode
        self.k = cfg.lambda_order
        if cfg.strict and conn.jet < EXACT // 2 and conn.jet < min_jet(self.k):
            raise JetError(f"lambda-order {self.k} needs jet order >= {min_jet(self.k)}, "
                           f"geometry has {conn.jet}")
        self.lift = lift or LiftedConnection(conn)
        self.chart = self.lift.chart
        self.n = conn.n
        self.cap = cfg.deg_cap if cfg.deg_cap is not None else 2 * self.k + 1
        self.hor = self.lift.hor
        self._r = None
        self._rF = None
        self._tau = {}
        self._classical = None

    # -- ingredients of the derivation
    def product(self, a, b):
        if self.mode == "weyl":
            return g.weyl_mul(a, b)
        return g.std_mul(a, b, self.hor)

    def sigma_product(self, a, b):
        if self.mode == "weyl":
            return g.sigma_weyl(a, b)
        return g.sigma_std(a, b, self.hor)

    def T0(self, a):
        t = nabla(a, self.lift.table)
        if self.mode == "weyl":
            return t
        return t + b_operator(a, self.lift)

    def ad(self, r, a):
        return g.super_commutator(r, a, self.product)

    # -- r
    def _recursion(self, product, T0, cap):
        R = self.lift.r_element()
        comps = {}
        if cap >= 3:
            comps[3] = g.delta_inv(R)
        for d in range(4, cap + 1):
            parts = [T0(comps[d - 1])]
            quad = [product(comps[a], comps[d + 1 - a]) for a in range(3, d - 1)]
            if quad:
                parts.append(times_i_over_lambda(g.add_all(self.chart, quad)))
            comps[d] = g.delta_inv(g.add_all(self.chart, parts)).component(d)
        return comps

    def solve_r_weyl(self):
        if self._rF is None:
            self._rF = self._recursion(g.weyl_mul, lambda a: nabla(a, self.lift.table), self.cap)
        return self._rF

    def solve_r(self):
        """Deg-homogeneous components {d: r^(d)} of the element entering ad."""
        if self._r is None:
            if self.mode == "weyl":
                self._r = self.solve_r_weyl()
            elif self.mode == "prime":
                self._r = {d: s_fib(c, self.lift) for d, c in self.solve_r_weyl().items()}
            else:
                self._r = self._recursion(lambda a, b: g.std_mul(a, b, self.hor), self.T0, self.cap)
        return self._r

    @property
    def r(self):
        return assemble(self.chart, self.solve_r(), self.cap)

    def r_total(self, cap=None):
        comps = self.solve_r_weyl() if self.mode == "prime" else self.solve_r()
        return assemble(self.chart, comps, self.cap if cap is None else cap)

    def apply_derivation(self, a):
        parts = [-g.delta(a), self.T0(a)]
        r = self.r
        if r.terms:
            parts.append(times_i_over_lambda(self.ad(r, a)))
        return g.add_all(self.chart, parts)

    D = apply_derivation

    # -- Fedosov-Taylor series
    def taylor(self, f, cap=None):
        """tau(f) through Deg ``cap`` (default 2k)."""
        cap = 2 * self.k if cap is None else cap
        key = (phase_key(f), cap)
        hit = self._tau.get(key)
        if hit is not None:
            return hit
        if any(s or A for (_, s, A) in f.terms):
            raise ValueError("taylor expects a phase function (no fibre generators)")
        rc = self.solve_r()
        if cap > self.cap + 1:
            raise JetError(f"tau through Deg {cap} needs r through Deg {cap + 1}; session has {self.cap}")
        parts = []
        byl = {}
        for (l, s, A), p in f.terms.items():
            byl[l] = p
        for l, p in sorted(byl.items()):
            c = cap - 2 * l
            if c < 0:
                continue
            t0 = WeylElement(self.chart, {(0, 0, 0): p}, Profile.uniform(f.prof(2 * l)))
            comps = {0: t0}
            for d in range(1, c + 1):
                acc = [self.T0(comps[d - 1])]
                for m in range(3, d + 1):
                    rm = rc.get(m)
                    if rm is None or not rm.terms:
                        continue
                    src = comps[d + 1 - m]
                    if src.terms:
                        acc.append(times_i_over_lambda(self.ad(rm, src)))
                comps[d] = g.delta_inv(g.add_all(self.chart, acc)).component(d)
            t = assemble(self.chart, comps, c)
            parts.append(g.times_lambda(t, l) if l else t)
        out = g.add_all(self.chart, parts) if parts else WeylElement(self.chart)
        out = out.with_profile(Profile([EXACT] * (cap + 1), UNKNOWN))
        self._tau[key] = out
        return out

    def star(self, f, g_, order=None):
        k = self.k if order is None else order
        tf = self.taylor(f, 2 * k)
        tg = self.taylor(g_, 2 * k)
        res = self.sigma_product(tf, tg).truncate(2 * k)
        res = res.select(lambda l, s, A: l <= k)
        for l in range(k + 1):
            if res.prof(2 * l) < 0:
                raise JetError(f"star product coefficient at lambda^{l} exhausted the jets")
        return res

    # -- classical data
    @property
    def classical(self):
        if self._classical is None:
            self._classical = ClassicalFedosov(self.conn)
        return self._classical


# ---------------------------------------------------------------- helpers for phase functions

def phase(chart, entries, jet=EXACT):
    """Phase function from {(l, base exps): coeff} or an iterable of (l, exps, coeff)."""
    items = entries.items() if isinstance(entries, dict) else [((l, e), c) for l, e, c in entries]
    return g.build(chart, [(l, [0] * chart.nvars, (), list(e), c) for (l, e), c in items], jet)


def lambda_coeff(f, l):
    return dict(f.terms.get((l, 0, 0), {}))


# ---------------------------------------------------------------- the classical theory on Q

def curvature_element(conn):
    """R_Q = 1/2 R^k_{lij} y^l eta^i eta^j x d_k (vector valued, on Q)."""
    Q = conn.Q
    riem = curvature(conn).riem
    comps = {}
    jr = curvature(conn).jet
    for (k, l, i, j), p in riem.items():
        if i < j:
            g._acc(comps.setdefault(k, {}), (0, Q.unit[l], (1 << i) | (1 << j)), p)
    return VecElement(Q, {k: WeylElement(Q, t, Profile.uniform(jr)) for k, t in comps.items()}), jr


class ClassicalFedosov:
    """rho_0, D_0, tau_0 and D_0^{-1} for a torsion-free connection on Q."""

    def __init__(self, conn, sym_cap=None):
        self.conn = conn
        self.Q = conn.Q
        self.table = ConnTable(self.Q, conn.gamma, conn.jet)
        self.sym_cap = sym_cap if sym_cap is not None else (
            min(conn.jet + 1, 8) if conn.jet < EXACT // 2 else 8)
        self._rho = None
        self.RQ, self.jr = curvature_element(conn) if not conn.flat else (VecElement(self.Q), EXACT)

    def nabla(self, a):
        return nabla(a, self.table)

    def nabla_vec(self, v):
        """nabla on vector-valued elements, the vector slot included."""
        out = {k: [self.nabla(c)] for k, c in v.comps.items()}
        for (k, i, j), p in self.conn.gamma.items():
            c = v.comps.get(j)
            if c is not None:
                out.setdefault(k, []).append(g.coef_mul(g.left_eta(c, i), p, self.conn.jet))
        return VecElement(self.Q, {k: g.add_all(self.Q, ps) for k, ps in out.items()})

    def rho_components(self, cap=None):
        """{d: rho_0^(d)} with d the symmetric degree (starting at 2)."""
        cap = self.sym_cap if cap is None else cap
        if self._rho is not None and self._rho[0] >= cap:
            return self._rho[1]
        comps = {}
        if not self.RQ.is_zero() and cap >= 2:
            comps[2] = self.RQ.map(lambda c: g.delta_inv(-c))
            for d in range(3, cap + 1):
                acc = self.nabla_vec(comps[d - 1])
                for a in range(2, d):
                    b = d - a
                    if a in comps and b in comps and b >= 2:
                        acc = acc + comps[b].map(lambda c, ra=comps[a]: g.i_s_vec(ra, c))
                comps[d] = acc.map(lambda c, d=d: _sym_component(g.delta_inv(c), d))
        self._rho = (cap, comps)
        return comps

    def rho(self, cap=None):
        cap = self.sym_cap if cap is None else cap
        comps = self.rho_components(cap)
        out = VecElement(self.Q)
        for c in comps.values():
            out = out + c
        return VecElement(self.Q, {k: v.with_profile(_sym_profile(cap)) for k, v in out.comps.items()})

    def i_s_rho(self, a, cap=None):
        return g.i_s_vec(self.rho(cap), a)

    def D0(self, a, cap=None):
        parts = [-g.delta(a), self.nabla(a)]
        rho = self.rho(cap)
        if not rho.is_zero():
            parts.append(g.i_s_vec(rho, a))
        return g.add_all(self.Q, parts)

    def D0_vec(self, v, cap=None):
        nv = self.nabla_vec(v)
        rho = self.rho(cap)
        out = {}
        for k in set(v.comps) | set(nv.comps):
            c = v.comps.get(k, g.zero(self.Q))
            parts = [-g.delta(c), nv.comps.get(k, g.zero(self.Q))]
            if not rho.is_zero():
                parts.append(g.i_s_vec(rho, c))
            out[k] = g.add_all(self.Q, parts)
        return VecElement(self.Q, out)

    # -- Taylor series
    def taylor_exp(self, chi, cap):
        """e^D chi with D = dq^k v nabla_k (symmetrized covariant derivatives)."""
        t = chi
        out = chi
        for m in range(1, cap + 1):
            t = g.scale(sym_derivative(t, self.table), (mpq(1, m), Q0))
            out = out + t
        return out.with_profile(_sym_profile(cap))

    def taylor_rec(self, chi, cap):
        """tau_0 by the recursion tau^(k+1) = delta^{-1}(nabla + i_s(rho)) tau^(k)."""
        comps = {0: chi}
        rho = self.rho_components(cap + 1)
        for d in range(1, cap + 1):
            acc = [self.nabla(comps[d - 1])]
            for m, rm in rho.items():
                src = comps.get(d + 1 - m)
                if src is not None and src.terms:
                    acc.append(g.i_s_vec(rm, src))
            comps[d] = g.delta_inv(g.add_all(self.Q, acc)).component(d)
        return assemble(self.Q, comps, cap)

    taylor = taylor_exp

    # -- D_0^{-1}
    def K(self, a, cap=None):
        """[delta^{-1}, nabla + i_s(rho)] (graded commutator of two odd maps)."""
        def N(x):
            parts = [self.nabla(x)]
            rho = self.rho(cap)
            if not rho.is_zero():
                parts.append(g.i_s_vec(rho, x))
            return g.add_all(self.Q, parts)
        return g.delta_inv(N(a)) + N(g.delta_inv(a))

    def d0_inv(self, a, cap=None):
        cap = self.sym_cap if cap is None else cap
        if g.sigma(a).terms:
            raise ValueError("D_0^{-1} is defined on elements with vanishing sigma part")
        total = a
        term = a
        for _ in range(cap + 1):
            term = self.K(term, cap).truncate(cap)
            if not term.terms:
                break
            total = total + term
        return (-g.delta_inv(total)).truncate(cap)

    # -- h
    def h_source(self, alpha, cap=None, alpha_jet=EXACT):
        """1/2 (tr rho_0 + 1 x alpha)."""
        parts = []
        rho = self.rho(cap)
        if not rho.is_zero():
            parts.append(g.trace_op(rho))
        for i, p in (alpha or {}).items():
            if p:
                parts.append(WeylElement(self.Q, {(0, 0, 1 << i): dict(p)}, Profile.uniform(alpha_jet)))
        src = g.add_all(self.Q, parts) if parts else WeylElement(self.Q)
        return g.scale(src, (mpq(1, 2), Q0))

    def solve_h(self, alpha=None, phi=None, cap=None, alpha_jet=EXACT):
        cap = self.sym_cap if cap is None else cap
        h = self.d0_inv(self.h_source(alpha, cap, alpha_jet), cap)
        if phi:
            h = h + self.taylor_exp(WeylElement(self.Q, {(0, 0, 0): dict(phi)}), cap)
        return h


def _sym_profile(cap):
    return Profile([EXACT] * (cap + 1), UNKNOWN)


def _sym_component(a, d):
    ch = a.chart
    return WeylElement(ch, {k: v for k, v in a.terms.items() if ch.deg(k[1]) == d}, a.prof,
                       normalize=False)


# ---------------------------------------------------------------- conjugation by e^{ad_S(pi^* h)}

def exp_ad(h, a, product, cap):
    """e^{ad(h)} a, with ad(h) raising total degree (series cut at Deg cap)."""
    total = a
    term = a
    m = 0
    while True:
        m += 1
        term = g.scale(g.super_commutator(h, term, product), (mpq(1, m), Q0)).truncate(cap)
        if not term.terms:
            break
        total = total + term
    return total.truncate(cap)
