"""Chart-level geometry: connection jets on Q, curvature, the homogeneous
symplectic lift to T*Q and the operators built from it.

Connections are stored as Christoffel jets ``gamma[(k, i, j)]`` (upper index
first), polys in q only, valid up to q-degree ``jet``.  Because q-variables
are packed first, the same poly keys serve on Q and on T*Q.
"""
from dataclasses import dataclass
from math import factorial

from gmpy2 import mpq

from . import gweyl_core as g
from .gweyl_core import WeylElement, HorizontalLift, left_sign, _acc
from .jets import (EXACT, Chart, JetError, Profile, padd_into, pmul, pdiff, pscale_q,
                   pneg, ptrunc, pconst, series_compose, pmul_var)
from .scalar import Q0, Q1, cpair, cmul


def _lo(j, k=1):
    return j if j >= EXACT // 2 else j - k


@dataclass
class ConnectionData:
    """Torsion-free connection on an n-dimensional chart of Q."""

    n: int
    gamma: dict
    jet: int = EXACT
    name: str = "custom"

    def __post_init__(self):
        full = {}
        for (k, i, j), p in self.gamma.items():
            if not p:
                continue
            full[(k, i, j)] = p
            if (k, j, i) in self.gamma and self.gamma[(k, j, i)] != p:
                raise ValueError(f"Christoffel symbols not symmetric in lower indices at {(k, i, j)}")
            full[(k, j, i)] = p
        self.gamma = full
        self.Q = Chart(self.n, 0)
        self.TQ = Chart(self.n, self.n)

    def G(self, k, i, j):
        return self.gamma.get((k, i, j), {})

    @property
    def flat(self):
        return not self.gamma


def flat_connection(n):
    return ConnectionData(n, {}, EXACT, f"flat R^{n}")


def _metric_levi_civita(n, metric, jet, name):
    """Christoffel jets from metric jets g[(i, j)] (valid to order jet + 1)."""
    Q = Chart(n, 0)
    jm = jet + 1
    # inverse metric: g = I + E with E(0) = E0; factor out the constant part
    g0 = [[metric.get((i, j), {}).get(0, (Q0, Q0))[0] for j in range(n)] for i in range(n)]
    inv0 = _rat_inverse(g0)
    E = {}
    for i in range(n):
        for j in range(n):
            p = dict(metric.get((i, j), {}))
            p.pop(0, None)
            if p:
                E[(i, j)] = p
    # g^{-1} = sum_m (-inv0 E)^m inv0
    ginv = {(i, j): pconst(inv0[i][j]) for i in range(n) for j in range(n)}
    term = dict(ginv)
    for _ in range(jm + 1):
        new = {}
        for i in range(n):
            for j in range(n):
                acc = {}
                for a in range(n):
                    if not inv0[i][a]:
                        continue
                    for b in range(n):
                        e = E.get((a, b))
                        t = term.get((b, j))
                        if e and t:
                            padd_into(acc, pmul(Q, e, t, jm), (-inv0[i][a], Q0))
                if acc:
                    new[(i, j)] = acc
        term = new
        if not term:
            break
        for k, v in term.items():
            padd_into(ginv.setdefault(k, {}), v)
    gamma = {}
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                acc = {}
                for l in range(n):
                    gi = ginv.get((k, l))
                    if not gi:
                        continue
                    s = {}
                    padd_into(s, pdiff(Q, metric.get((j, l), {}), i))
                    padd_into(s, pdiff(Q, metric.get((i, l), {}), j))
                    padd_into(s, pdiff(Q, metric.get((i, j), {}), l), (mpq(-1), Q0))
                    padd_into(acc, pmul(Q, gi, s, jet), (mpq(1, 2), Q0))
                if acc:
                    gamma[(k, i, j)] = acc
    return ConnectionData(n, gamma, jet, name)


def _rat_inverse(m):
    n = len(m)
    a = [[mpq(x) for x in row] + [mpq(1 if i == j else 0) for j in range(n)]
         for i, row in enumerate(m)]
    for c in range(n):
        piv = next(r for r in range(c, n) if a[r][c])
        a[c], a[piv] = a[piv], a[c]
        pv = a[c][c]
        a[c] = [x / pv for x in a[c]]
        for r in range(n):
            if r != c and a[r][c]:
                f = a[r][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return [row[n:] for row in a]


def conformal_metric(n, factor_series, jet):
    """Metric f(|q|^2) delta_ij with f given by its power series coefficients."""
    Q = Chart(n, 0)
    u = {}
    for i in range(n):
        padd_into(u, {2 * Q.unit[i]: (Q1, Q0)})
    f = series_compose(Q, [(c, 0) for c in factor_series], u, jet + 1)
    return {(i, i): f for i in range(n)}


def sphere_stereographic(jet):
    """Unit 2-sphere in stereographic coordinates, metric 4 delta/(1+|q|^2)^2."""
    # 4 (1+u)^-2 = 4 sum (-1)^m (m+1) u^m
    coeffs = [mpq(4 * (-1) ** m * (m + 1)) for m in range(jet // 2 + 2)]
    return _metric_levi_civita(2, conformal_metric(2, coeffs, jet), jet, "S^2 stereographic")


def hyperbolic_disc(jet):
    """Hyperbolic plane in the Poincare disc, metric 4 delta/(1-|q|^2)^2."""
    coeffs = [mpq(4 * (m + 1)) for m in range(jet // 2 + 2)]
    return _metric_levi_civita(2, conformal_metric(2, coeffs, jet), jet, "hyperbolic disc")


def sphere_normal(jet):
    """Unit 2-sphere in geodesic normal coordinates at a point.

    g_ij = delta_ij + h(|x|^2)(|x|^2 delta_ij - x_i x_j) with
    h(u) = (sin^2(sqrt u)/u - 1)/u.
    """
    n = 2
    Q = Chart(n, 0)
    jm = jet + 1
    # sin^2(r)/r^2 = sum_{k>=1} (-1)^(k+1) 2^(2k-1) r^(2k-2)/(2k)!
    hcoef = [mpq((-1) ** (k + 1) * 2 ** (2 * k - 1), factorial(2 * k)) for k in range(2, jm // 2 + 4)]
    u = {}
    for i in range(n):
        padd_into(u, {2 * Q.unit[i]: (Q1, Q0)})
    # h(u) with h(0) = hcoef[0]: evaluate as constant + series in u
    h = {0: (hcoef[0], Q0)}
    pw = {0: (Q1, Q0)}
    for c in hcoef[1:]:
        pw = pmul(Q, pw, u, jm)
        if not pw:
            break
        padd_into(h, pw, (c, Q0))
    metric = {}
    for i in range(n):
        for j in range(n):
            inner = {}
            if i == j:
                padd_into(inner, u)
            padd_into(inner, {Q.unit[i] + Q.unit[j]: (mpq(-1), Q0)})
            p = pmul(Q, h, inner, jm)
            if i == j:
                padd_into(p, {0: (Q1, Q0)})
            if p:
                metric[(i, j)] = p
    return _metric_levi_civita(n, metric, jet, "S^2 normal")


# ---------------------------------------------------------------- curvature

@dataclass
class CurvatureData:
    riem: dict          # (l, k, i, j) -> poly, R(d_i, d_j) d_k = R^l_{kij} d_l
    ricci: dict         # (i, j) -> poly, Ric(X, Y) = tr(Z -> R(Z, X) Y)
    trace_two_form: dict  # (i, j) -> poly, (tr R)_{ij} = R^k_{kij}
    alpha: dict         # i -> poly with d alpha = -tr R
    jet: int
    alpha_jet: int


def riemann(conn):
    n, Q, J = conn.n, conn.Q, conn.jet
    jr = _lo(J)
    R = {}
    for l in range(n):
        for k in range(n):
            for i in range(n):
                for j in range(i + 1, n):
                    acc = {}
                    padd_into(acc, pdiff(Q, conn.G(l, j, k), i))
                    padd_into(acc, pdiff(Q, conn.G(l, i, k), j), (mpq(-1), Q0))
                    for m in range(n):
                        padd_into(acc, pmul(Q, conn.G(l, i, m), conn.G(m, j, k), jr))
                        padd_into(acc, pmul(Q, conn.G(l, j, m), conn.G(m, i, k), jr), (mpq(-1), Q0))
                    acc = ptrunc(Q, acc, jr)
                    if acc:
                        R[(l, k, i, j)] = acc
                        R[(l, k, j, i)] = pneg(acc)
    return R, jr


def homotopy_one_form(chart, F, n):
    """alpha with d alpha = F for a closed two-form F[(a, b)] (radial homotopy)."""
    alpha = {}
    for b in range(n):
        acc = {}
        for a in range(n):
            f = F.get((a, b))
            if not f:
                continue
            for m, c in f.items():
                d = chart.qdeg(m)
                padd_into(acc, {m + chart.unit[a]: (c[0] / (d + 2), c[1] / (d + 2))})
        if acc:
            alpha[b] = acc
    return alpha


def exterior_derivative(chart, alpha, n):
    out = {}
    for a in range(n):
        for b in range(n):
            acc = {}
            padd_into(acc, pdiff(chart, alpha.get(b, {}), a))
            padd_into(acc, pdiff(chart, alpha.get(a, {}), b), (mpq(-1), Q0))
            if acc:
                out[(a, b)] = acc
    return out


def curvature(conn):
    """Riemann, Ricci and trace jets plus an alpha with d alpha = -tr R."""
    if conn.jet < 1:
        raise JetError("curvature needs jet order >= 1")
    n, Q = conn.n, conn.Q
    R, jr = riemann(conn)
    ric = {}
    tr = {}
    for i in range(n):
        for j in range(n):
            acc = {}
            for l in range(n):
                padd_into(acc, R.get((l, j, l, i), {}))
            if acc:
                ric[(i, j)] = acc
            acc = {}
            for k in range(n):
                padd_into(acc, R.get((k, k, i, j), {}))
            if acc:
                tr[(i, j)] = acc
    F = {k: pneg(v) for k, v in tr.items()}
    alpha = homotopy_one_form(Q, F, n)
    return CurvatureData(R, ric, tr, alpha, jr, jr if jr >= EXACT // 2 else jr + 1)


# ---------------------------------------------------------------- connection tables

class ConnTable:
    """Christoffel table on a chart, indexed for covariant derivatives:
    ``by_upper[j]`` lists (i, k, poly) with Gamma^j_{ik} = poly."""

    def __init__(self, chart, table, jet):
        self.chart = chart
        self.table = {k: v for k, v in table.items() if v}
        self.jet = jet
        self.by_upper = {}
        for (j, i, k), p in self.table.items():
            self.by_upper.setdefault(j, []).append((i, k, p))

    def get(self, j, i, k):
        return self.table.get((j, i, k), {})


def nabla(a, conn_table):
    """(1 x dx^i) nabla_{d_i} on W x Lambda (torsion-free connection)."""
    ch = a.chart
    ct = conn_table
    prof = a.prof.derive(a.degs(), ct.jet)
    out = {}
    N = ch.nvars
    for (l, s, A), p in a.terms.items():
        d = ch.deg(s) + 2 * l
        jmax = prof(d)
        if jmax < 0:
            continue
        for v in range(N):
            sg = left_sign(v, A)
            if not sg:
                continue
            dp = pdiff(ch, p, v)
            if dp:
                _acc(out, (l, s, A | (1 << v)), dp, None if sg > 0 else (mpq(-1), Q0))
        for j, lst in ct.by_upper.items():
            e = ch.exp(s, j)
            if not e:
                continue
            s1 = s - ch.unit[j]
            for i, k, gp in lst:
                sg = left_sign(i, A)
                if not sg:
                    continue
                r = pmul(ch, p, gp, jmax)
                if r:
                    _acc(out, (l, s1 + ch.unit[k], A | (1 << i)), r, (mpq(-sg * e), Q0))
    return WeylElement(ch, out, prof)


def sym_derivative(a, conn_table):
    """D = dx^k v nabla_{d_k} on symmetric tensors (the antisymmetric slot untouched)."""
    ch = a.chart
    ct = conn_table
    prof = a.prof.derive(a.degs(), ct.jet).shift(1)
    out = {}
    for (l, s, A), p in a.terms.items():
        d = ch.deg(s) + 2 * l + 1
        jmax = prof(d)
        if jmax < 0:
            continue
        for v in range(ch.nvars):
            dp = pdiff(ch, p, v)
            if dp:
                _acc(out, (l, s + ch.unit[v], A), dp)
        for j, lst in ct.by_upper.items():
            e = ch.exp(s, j)
            if not e:
                continue
            s1 = s - ch.unit[j]
            for i, k, gp in lst:
                r = pmul(ch, p, gp, jmax)
                if r:
                    _acc(out, (l, s1 + ch.unit[k] + ch.unit[i], A), r, (mpq(-e), Q0))
    return WeylElement(ch, out, prof)


# ---------------------------------------------------------------- the lift

class LiftedConnection:
    """Homogeneous symplectic torsion-free lift of a connection to T*Q."""

    def __init__(self, conn, extra=None):
        """``extra`` optionally perturbs the p-linear block by p_a B^a_{ijk}
        (B totally symmetric in ijk), keeping torsion-freeness, symplecticity
        and homogeneity but breaking the vertical characterization."""
        self.conn = conn
        n = self.n = conn.n
        ch = self.chart = conn.TQ
        J = conn.jet
        self.jet = _lo(J)
        G0 = {}

        def put(a, b, c, p):
            if p:
                padd_into(G0.setdefault((a, b, c), {}), p)

        for (k, i, j), p in conn.gamma.items():
            put(k, i, j, p)
            # Gamma0^{p_j}_{q^i p_k} = Gamma0^{p_j}_{p_k q^i} = -Gamma^k_{ij}
            put(n + j, i, n + k, pneg(p))
            put(n + j, n + k, i, pneg(p))
        jl = self.jet
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    acc = {}
                    for (ii, jj, kk) in ((i, j, k), (j, k, i), (k, i, j)):
                        for a in range(n):
                            t = {}
                            for s in range(n):
                                padd_into(t, pmul(ch, conn.G(a, jj, s), conn.G(s, kk, ii), jl),
                                          (mpq(2), Q0))
                            padd_into(t, pdiff(ch, conn.G(a, kk, ii), jj), (mpq(-1), Q0))
                            if t:
                                padd_into(acc, pmul_var(ch, t, n + a), (mpq(1, 3), Q0))
                    if extra:
                        for a in range(n):
                            b = extra.get((a, i, j, k))
                            if b:
                                padd_into(acc, {ch.unit[n + a]: cpair(b)})
                    put(n + k, i, j, ptrunc(ch, acc, jl))
        self.gamma0 = {k: v for k, v in G0.items() if v}
        self.table = ConnTable(ch, self.gamma0, self.jet)
        # horizontal lift coefficients G_k^r = Gamma^l_{kr} p_l
        H = {}
        for k in range(n):
            lst = []
            for r in range(n):
                acc = {}
                for l in range(n):
                    gp = conn.G(l, k, r)
                    if gp:
                        padd_into(acc, pmul_var(ch, gp, n + l))
                if acc:
                    lst.append((r, acc))
            if lst:
                H[k] = lst
        self.hor = HorizontalLift(ch, H, conn.jet)
        self._curv = None
        self._R0 = None
        self._Relem = None
        self._bcoef = None

    def G0(self, a, b, c):
        return self.gamma0.get((a, b, c), {})

    @property
    def curv(self):
        if self._curv is None:
            self._curv = curvature(self.conn)
        return self._curv

    # -- curvature of the lift
    def curvature_direct(self):
        """R0^a_{bcd} from Gamma0 by the coordinate formula."""
        if self._R0 is None:
            ch, N = self.chart, 2 * self.n
            jr = _lo(self.jet)
            R = {}
            for a in range(N):
                for b in range(N):
                    for c in range(N):
                        for d in range(c + 1, N):
                            acc = {}
                            padd_into(acc, pdiff(ch, self.G0(a, d, b), c))
                            padd_into(acc, pdiff(ch, self.G0(a, c, b), d), (mpq(-1), Q0))
                            for e in range(N):
                                padd_into(acc, pmul(ch, self.G0(a, c, e), self.G0(e, d, b), jr))
                                padd_into(acc, pmul(ch, self.G0(a, d, e), self.G0(e, c, b), jr),
                                          (mpq(-1), Q0))
                            acc = ptrunc(ch, acc, jr)
                            if acc:
                                R[(a, b, c, d)] = acc
                                R[(a, b, d, c)] = pneg(acc)
            self._R0 = (R, jr)
        return self._R0

    def curvature_table(self):
        """R0 from the closed-form component table in terms of base curvature."""
        n, ch = self.n, self.chart
        cd = self.curv
        Rb = cd.riem
        jr = _lo(self.jet)
        R = {}

        def put(a, b, c, d, p):
            p = ptrunc(ch, p, jr)
            if p:
                padd_into(R.setdefault((a, b, c, d), {}), p)
                padd_into(R.setdefault((a, b, d, c), {}), pneg(p))

        def rb(l, k, i, j):
            return Rb.get((l, k, i, j), {})

        for l in range(n):
            for k in range(n):
                for i in range(n):
                    for j in range(i + 1, n):
                        p = rb(l, k, i, j)
                        put(l, k, i, j, p)
                        put(n + k, n + l, i, j, pneg(p))
        for l in range(n):
            for k in range(n):
                for i in range(n):
                    for j in range(n):
                        acc = {}
                        padd_into(acc, rb(j, l, k, i), (mpq(1, 3), Q0))
                        padd_into(acc, rb(j, k, l, i), (mpq(1, 3), Q0))
                        put(n + l, k, i, n + j, acc)
        # covariant derivative of base curvature: R^a_{jlk|i}
        Qc = self.conn.Q
        G = self.conn.G
        jr2 = _lo(jr)

        def cov(a, j, l, k, i):
            acc = dict(pdiff(Qc, rb(a, j, l, k), i))
            for s in range(n):
                padd_into(acc, pmul(Qc, G(a, i, s), rb(s, j, l, k), jr2))
                padd_into(acc, pmul(Qc, G(s, i, j), rb(a, s, l, k), jr2), (mpq(-1), Q0))
                padd_into(acc, pmul(Qc, G(s, i, l), rb(a, j, s, k), jr2), (mpq(-1), Q0))
                padd_into(acc, pmul(Qc, G(s, i, k), rb(a, j, l, s), jr2), (mpq(-1), Q0))
            return acc

        for i in range(n):
            for j in range(n):
                for k in range(n):
                    for l in range(k + 1, n):
                        acc = {}
                        for (ii, jj) in ((i, j), (j, i)):
                            for a in range(n):
                                t = dict(cov(a, jj, l, k, ii))
                                for s in range(n):
                                    padd_into(t, pmul(Qc, G(a, ii, s), rb(s, jj, l, k), jr2), (mpq(-3), Q0))
                                    padd_into(t, pmul(Qc, G(a, l, s), rb(s, ii, jj, k), jr2), (mpq(-1), Q0))
                                    padd_into(t, pmul(Qc, G(a, k, s), rb(s, ii, jj, l), jr2))
                                if t:
                                    padd_into(acc, pmul_var(ch, t, n + a), (mpq(1, 3), Q0))
                        put(n + i, j, k, l, acc)
        return R, jr2

    def r_element(self):
        """R = 1/4 omega_{it} R0^t_{jkl} y^i y^j eta^k eta^l."""
        if self._Relem is None:
            n, ch = self.n, self.chart
            R0, jr = self.curvature_direct()
            out = {}
            for (t, j, k, l), p in R0.items():
                if k > l:
                    continue
                # omega_{i t}: omega_{q^a p_a} = 1, omega_{p_a q^a} = -1
                if t >= n:
                    i, w = t - n, 1
                else:
                    i, w = t + n, -1
                # sum over (k,l) and (l,k) gives 2x; 1/4 * 2 = 1/2
                _acc(out, (0, ch.unit[i] + ch.unit[j], (1 << k) | (1 << l)), p, (mpq(w, 2), Q0))
            self._Relem = WeylElement(ch, out, Profile.uniform(jr))
        return self._Relem

    def b_coefficients(self):
        """c[(i, j, k)] = p_l R^l_{jik} (base curvature), used by B."""
        if self._bcoef is None:
            n, ch = self.n, self.chart
            Rb = self.curv.riem
            c = {}
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        acc = {}
                        for l in range(n):
                            r = Rb.get((l, j, i, k))
                            if r:
                                padd_into(acc, pmul_var(ch, r, n + l))
                        if acc:
                            c[(i, j, k)] = acc
            self._bcoef = c
        return self._bcoef


def nabla0(a, lift):
    return nabla(a, lift.table)


def b_operator(a, lift):
    """B = (1 x dq^i)(i lambda/3) p_l R^l_{jik} i_s(d_{p_j}) i_s(d_{p_k})."""
    ch = a.chart
    n = lift.n
    coef = lift.b_coefficients()
    if not coef:
        return WeylElement(ch, {}, a.prof)
    jc = lift.curv.jet
    parts = []
    for (i, j, k), c in coef.items():
        t = g.i_s(g.i_s(a, n + k), n + j)
        if not t.terms:
            continue
        t = g.coef_mul(t, c, jc)
        t = g.left_eta(t, i)
        parts.append(g.times_lambda(t, 1, (Q0, mpq(1, 3))))
    return g.add_all(ch, parts, a.prof.cap_nonempty(a.degs(), jc))


def delta_fib(a, lift):
    return g.delta_fib(a, lift.hor if lift is not None else None)


def s_fib(a, lift=None, inverse=False):
    return g.s_fib(a, lift.hor if lift is not None else None, inverse)


def std_mul(a, b, lift=None):
    return g.std_mul(a, b, lift.hor if lift is not None else None)


# ---------------------------------------------------------------- phase-space operators

def covariant_delta(f, conn, alpha=None, alpha_jet=EXACT):
    """Delta f = d_q d_p f + p_r G^r_ij d_pi d_pj f + G^i_ij d_pj f + alpha_j d_pj f."""
    ch = conn.TQ
    n = conn.n
    parts = []
    for i in range(n):
        parts.append(g.diff_coeffs(g.diff_coeffs(f, n + i), i))
    for (r, i, j), p in conn.gamma.items():
        t = g.diff_coeffs(g.diff_coeffs(f, n + i), n + j)
        if t.terms:
            parts.append(g.coef_mul(t, pmul_var(ch, p, n + r), conn.jet))
    for j in range(n):
        acc = {}
        for i in range(n):
            padd_into(acc, conn.G(i, i, j))
        if alpha:
            padd_into(acc, alpha.get(j, {}))
        if acc:
            jt = min(conn.jet, alpha_jet) if alpha else conn.jet
            parts.append(g.coef_mul(g.diff_coeffs(f, n + j), acc, jt))
    return g.add_all(ch, parts, f.prof)


def n_operator(f, conn, alpha=None, alpha_jet=EXACT, inverse=False, power=1):
    """N^power = exp(power (lambda/2i) Delta) (power may be negative via inverse)."""
    c = (Q0, mpq(-power, 2)) if not inverse else (Q0, mpq(power, 2))
    total = f
    term = f
    m = 0
    while True:
        m += 1
        term = g.times_lambda(covariant_delta(term, conn, alpha, alpha_jet), 1,
                              cmul(c, (mpq(1, m), Q0)))
        if not term.terms:
            break
        total = total + term
    return total


def div_alpha(T, conn, alpha=None, alpha_jet=EXACT):
    """Covariant divergence plus alpha-insertion of a symmetric contravariant tensor.

    ``T`` is ``(k, comps, jet)`` with comps keyed by sorted index tuples.
    """
    k, comps, jet = T
    n, Q = conn.n, conn.Q
    if k == 0:
        return (0, {}, jet)
    jo = min(_lo(jet), conn.jet, alpha_jet if alpha else EXACT)

    def comp(idx):
        return comps.get(tuple(sorted(idx)), {})

    out = {}
    from itertools import combinations_with_replacement as cwr
    for J in cwr(range(n), k - 1):
        acc = {}
        for i in range(n):
            idx = (i,) + J
            padd_into(acc, pdiff(Q, comp(idx), i))
            # connection terms for each upper slot of T^{i J}
            for m in range(k):
                for s_ in range(n):
                    up = idx[m]
                    gm = conn.G(up, i, s_)
                    if gm:
                        new = list(idx)
                        new[m] = s_
                        padd_into(acc, pmul(Q, gm, comp(new), jo))
            if alpha:
                a = alpha.get(i)
                if a:
                    padd_into(acc, pmul(Q, a, comp(idx), jo))
        acc = ptrunc(Q, acc, jo)
        if acc:
            out[J] = acc
    return (k - 1, out, jo)


def horizontal_lift(X, conn):
    """X^h = X^i d_{q^i} + X^k Gamma^j_{ki} p_j d_{p_i}; X maps i -> poly."""
    n, ch = conn.n, conn.TQ
    out = {}
    for i, p in X.items():
        if p:
            out[i] = dict(p)
    for i in range(n):
        acc = {}
        for k, xp in X.items():
            for j in range(n):
                gp = conn.G(j, k, i)
                if gp and xp:
                    padd_into(acc, pmul_var(ch, pmul(ch, xp, gp, conn.jet), n + j))
        if acc:
            out[n + i] = acc
    return out


def vertical_lift(beta, conn):
    n = conn.n
    return {n + i: dict(p) for i, p in beta.items() if p}


# ---------------------------------------------------------------- normal-form checks

def geodesic_symmetrization(conn):
    """Gamma^k_{ij}(q) q^i q^j for each k (vanishes iff normal coordinates)."""
    n, Q = conn.n, conn.Q
    out = {}
    for k in range(n):
        acc = {}
        for i in range(n):
            for j in range(n):
                p = conn.G(k, i, j)
                if p:
                    padd_into(acc, pmul_var(Q, pmul_var(Q, p, i), j))
        acc = ptrunc(Q, acc, conn.jet)
        if acc:
            out[k] = acc
    return out


def lifted_cubic_form(lift):
    """omega_{il} Gamma0^l_{jk}(x) x^i x^j x^k on T*Q."""
    n, ch = lift.n, lift.chart
    acc = {}
    for (l, j, k), p in lift.gamma0.items():
        if l >= n:
            i, w = l - n, 1
        else:
            i, w = l + n, -1
        t = pmul_var(ch, pmul_var(ch, pmul_var(ch, p, i), j), k)
        padd_into(acc, t, (mpq(w), Q0))
    return ptrunc(ch, acc, lift.jet + 3 if lift.jet < EXACT // 2 else EXACT)


def normal_coordinate_suite(conn, probes=None, sym_cap=4):
    """Checks that hold when the chart is geodesic normal at the origin.

    * Gamma^k_ij q^i q^j = 0 (the input really is in normal form),
    * omega_il Gamma0^l_jk x^i x^j x^k = 0 for the lift,
    * the q-degree-0 part of tau_0(f) = e^D f is the Taylor series f(y).
    """
    from .fedosov_engine import ClassicalFedosov
    bad = geodesic_symmetrization(conn)
    if bad:
        raise ValueError(f"connection is not in normal coordinates (component {min(bad)})")
    Q = conn.Q
    report = {"normal_form": True,
              "cubic_form_vanishes": not lifted_cubic_form(LiftedConnection(conn))}
    if probes is None:
        probes = []
        for d in range(sym_cap + 1):
            for e in _exponents(conn.n, d):
                probes.append({Q.pack(e): (Q1, Q0)})
    C = ClassicalFedosov(conn, sym_cap=sym_cap)
    ok = True
    for f in probes:
        t = C.taylor(WeylElement(Q, {(0, 0, 0): dict(f)}), sym_cap)
        for d in range(sym_cap + 1):
            if t.prof(d) < 0:
                raise JetError("Taylor check exhausted the jets")
        got = {}
        for (l, s, A), p in t.terms.items():
            c = p.get(0)
            if c is not None and not l and not A:
                got[s] = c
        want = {m: c for m, c in f.items() if Q.deg(m) <= sym_cap}
        if got != want:
            ok = False
    report["taylor_at_origin"] = ok
    return report


def _exponents(n, d):
    if n == 1:
        yield (d,)
        return
    for a in range(d, -1, -1):
        for rest in _exponents(n - 1, d - a):
            yield (a,) + rest


def lift_properties(lift):
    """Exact jet checks of torsion-freeness, symplecticity and homogeneity."""
    n, ch = lift.n, lift.chart
    N = 2 * n
    torsion = symp = homog = True
    for (a, b, c), p in lift.gamma0.items():
        if lift.G0(a, c, b) != p:
            torsion = False
        w = (1 if b >= n else 0) + (1 if c >= n else 0) - (1 if a >= n else 0)
        if any(ch.pdeg(m) + w for m in p):
            homog = False
    # omega_{il} Gamma0^l_{jk} totally symmetric
    def low(i, j, k):
        l, w = (i + n, 1) if i < n else (i - n, -1)
        p = lift.G0(l, j, k)
        return pscale_q(p, mpq(w)) if p else {}
    for i in range(N):
        for j in range(N):
            for k in range(N):
                if low(i, j, k) != low(j, i, k):
                    symp = False
    return {"torsion_free": torsion, "symplectic": symp, "homogeneous": homog}


def random_connection(n, jet, rng, terms=3, maxdeg=2, span=3, name="random"):
    """Torsion-free connection with small random polynomial Christoffels."""
    Q = Chart(n, 0)
    gam = {}
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                p = {}
                for _ in range(terms):
                    e = [0] * n
                    for _ in range(rng.randint(0, maxdeg)):
                        e[rng.randrange(n)] += 1
                    padd_into(p, {Q.pack(e): (mpq(rng.randint(-span, span)), Q0)})
                if p:
                    gam[(k, i, j)] = p
    return ConnectionData(n, gam, jet, name)


def builtin_connection(name, jet, n=2):
    if name == "flat":
        return flat_connection(n)
    if name in ("s2", "sphere"):
        return sphere_stereographic(jet)
    if name in ("s2-normal", "sphere-normal"):
        return sphere_normal(jet)
    if name in ("hyperbolic", "h2"):
        return hyperbolic_disc(jet)
    raise ValueError(f"unknown builtin geometry {name!r}")
