"""Base-function jets and the per-degree validity bookkeeping.

A base function on a chart is a sparse polynomial in the jet coordinates
(q, truncated Taylor data at the origin) and the momentum coordinates
(p, exact polynomial dependence).  Exponent vectors are packed into one int,
``BITS`` bits per variable, q variables first, so multiplying monomials is
integer addition.  A poly is a plain dict ``{packed exponent: (re, im)}``.
"""
from math import factorial

from gmpy2 import mpq

from .scalar import Q0, cmul, cneg, cconj, is_zero, cpair

BITS = 8
MASK = (1 << BITS) - 1

# validity sentinels: EXACT means "no truncation", UNKNOWN means "nothing known"
EXACT = 1 << 40
UNKNOWN = -1


class JetError(ValueError):
    """Raised when a computation would consult jets beyond their validity."""


class Chart:
    """Coordinate layout: ``nq`` jet coordinates followed by ``np`` polynomial ones.

    The same layout indexes fibre generators: generator ``a`` is dx^a.
    """

    def __init__(self, nq, np=0):
        self.nq = nq
        self.np = np
        self.nvars = nq + np
        self.unit = [1 << (BITS * a) for a in range(self.nvars)]
        self.qmask = (1 << (BITS * nq)) - 1
        self._exps = {}

    def __eq__(self, other):
        return isinstance(other, Chart) and (self.nq, self.np) == (other.nq, other.np)

    def __hash__(self):
        return hash((self.nq, self.np))

    def __repr__(self):
        return f"Chart(nq={self.nq}, np={self.np})"

    def pack(self, exps):
        k = 0
        for a, e in enumerate(exps):
            if e < 0 or e > MASK:
                raise ValueError("exponent out of range")
            k |= e << (BITS * a)
        return k

    def exps(self, k):
        r = self._exps.get(k)
        if r is None:
            r = tuple((k >> (BITS * a)) & MASK for a in range(self.nvars))
            self._exps[k] = r
        return r

    def exp(self, k, a):
        return (k >> (BITS * a)) & MASK

    # digit sums in base 2^BITS: k mod (2^BITS - 1), exact while degrees stay below MASK
    def qdeg(self, k):
        return (k & self.qmask) % MASK

    def pdeg(self, k):
        return (k >> (BITS * self.nq)) % MASK

    def deg(self, k):
        return k % MASK

    def is_q(self, a):
        return a < self.nq


# ---------------------------------------------------------------- polys

def pconst(c):
    c = cpair(c)
    return {} if is_zero(c) else {0: c}


def pmono(chart, exps, c=1):
    c = cpair(c)
    return {} if is_zero(c) else {chart.pack(exps): c}


def pvar(chart, a, c=1):
    c = cpair(c)
    return {} if is_zero(c) else {chart.unit[a]: c}


def padd_into(dst, src, scale=None):
    """dst += scale * src (scale a pair or None), in place."""
    if scale is None:
        for k, c in src.items():
            o = dst.get(k)
            if o is None:
                if c[0] or c[1]:
                    dst[k] = c
            else:
                s = (o[0] + c[0], o[1] + c[1])
                if s[0] or s[1]:
                    dst[k] = s
                else:
                    del dst[k]
    else:
        for k, c in src.items():
            c = cmul(c, scale)
            o = dst.get(k)
            if o is None:
                if c[0] or c[1]:
                    dst[k] = c
            else:
                s = (o[0] + c[0], o[1] + c[1])
                if s[0] or s[1]:
                    dst[k] = s
                else:
                    del dst[k]
    return dst


def padd(a, b):
    return padd_into(dict(a), b)


def pscale(p, c):
    c = cpair(c)
    if is_zero(c):
        return {}
    return {k: cmul(v, c) for k, v in p.items()}


def pscale_q(p, r):
    """Scale by a rational."""
    if not r:
        return {}
    return {k: (v[0] * r, v[1] * r) for k, v in p.items()}


def pneg(p):
    return {k: cneg(v) for k, v in p.items()}


def pconj(p):
    return {k: cconj(v) for k, v in p.items()}


def ptrunc(chart, p, jmax):
    if jmax >= EXACT:
        return p
    qm = chart.qmask
    return {k: v for k, v in p.items() if (k & qm) % MASK <= jmax}


def pmul(chart, a, b, jmax=EXACT):
    """Product of two polys, dropping q-degrees above ``jmax``."""
    if not a or not b:
        return {}
    if len(a) > len(b):
        a, b = b, a
    out = {}
    if jmax >= EXACT or chart.nq == 0:
        bl = list(b.items())
        for ka, (ar, ai) in a.items():
            for kb, (br, bi) in bl:
                k = ka + kb
                if ai:
                    if bi:
                        c = (ar * br - ai * bi, ar * bi + ai * br)
                    else:
                        c = (ar * br, ai * br)
                elif bi:
                    c = (ar * br, ar * bi)
                else:
                    c = (ar * br, Q0)
                o = out.get(k)
                if o is None:
                    out[k] = c
                else:
                    out[k] = (o[0] + c[0], o[1] + c[1])
    else:
        qm = chart.qmask
        bl = sorted(((kb & qm) % MASK, kb, c) for kb, c in b.items())
        for ka, (ar, ai) in a.items():
            lim = jmax - (ka & qm) % MASK
            if lim < 0:
                continue
            for dq, kb, (br, bi) in bl:
                if dq > lim:
                    break
                k = ka + kb
                if ai:
                    if bi:
                        c = (ar * br - ai * bi, ar * bi + ai * br)
                    else:
                        c = (ar * br, ai * br)
                elif bi:
                    c = (ar * br, ar * bi)
                else:
                    c = (ar * br, Q0)
                o = out.get(k)
                if o is None:
                    out[k] = c
                else:
                    out[k] = (o[0] + c[0], o[1] + c[1])
    return {k: v for k, v in out.items() if v[0] or v[1]}


def pdiff(chart, p, a):
    """Partial derivative in coordinate ``a``."""
    sh = BITS * a
    u = 1 << sh
    out = {}
    for k, c in p.items():
        e = (k >> sh) & MASK
        if e:
            out[k - u] = (c[0] * e, c[1] * e)
    return out


def pmul_var(chart, p, a, c=None):
    """Multiply by the coordinate x^a (times an optional pair)."""
    u = chart.unit[a]
    if c is None:
        return {k + u: v for k, v in p.items()}
    return {k + u: cmul(v, c) for k, v in p.items() if not is_zero(cmul(v, c))}


def pat_p0(chart, p):
    """Restrict to p = 0 (drop every monomial containing a momentum)."""
    pd = chart.pdeg
    return {k: v for k, v in p.items() if pd(k) == 0}


def pat_q0(chart, p):
    qd = chart.qdeg
    return {k: v for k, v in p.items() if qd(k) == 0}


def pvalue0(p):
    """Value at the origin."""
    return p.get(0, (Q0, Q0))


def ppow(chart, p, n, jmax=EXACT):
    r = {0: (mpq(1), Q0)}
    for _ in range(n):
        r = pmul(chart, r, p, jmax)
    return r


def psubs_linear(chart, p, images, target, jmax=EXACT):
    """Substitute x^a -> images[a] (polys on ``target`` chart)."""
    out = {}
    cache = {}
    for k, c in p.items():
        e = chart.exps(k)
        term = {0: c}
        for a, ea in enumerate(e):
            if ea:
                key = (a, ea)
                pw = cache.get(key)
                if pw is None:
                    pw = ppow(target, images[a], ea, jmax)
                    cache[key] = pw
                term = pmul(target, term, pw, jmax)
        padd_into(out, term)
    return out


def series_compose(chart, coeffs, p, jmax):
    """sum_k coeffs[k] p^k for a poly p vanishing at the origin (jets)."""
    if jmax >= EXACT:
        raise JetError("series composition needs a finite jet order")
    if pvalue0(p) != (Q0, Q0):
        raise ValueError("series argument must vanish at the origin")
    out = {}
    pw = {0: (mpq(1), Q0)}
    for k, ck in enumerate(coeffs):
        if k > 0:
            pw = pmul(chart, pw, p, jmax)
            if not pw:
                break
        padd_into(out, pw, cpair(ck))
    return out


def fact(n):
    return factorial(n)


# ---------------------------------------------------------------- validity

def _lower(v, k):
    if v >= EXACT // 2 or v < 0:
        return v
    return max(v - k, UNKNOWN)


class Profile:
    """Jet validity per total degree: ``vals[d]`` for d < len(vals), else ``tail``.

    A value J means coefficients of that degree component are correct modulo
    q-monomials of degree > J.  ``UNKNOWN`` (-1) marks degrees that were
    never computed (beyond a cap).
    """

    __slots__ = ("vals", "tail")

    def __init__(self, vals=(), tail=EXACT):
        vals = list(vals)
        while vals and vals[-1] == tail:
            vals.pop()
        self.vals = tuple(vals)
        self.tail = tail

    def __call__(self, d):
        if d < 0:
            return EXACT
        v = self.vals
        return v[d] if d < len(v) else self.tail

    def __eq__(self, o):
        return isinstance(o, Profile) and self.vals == o.vals and self.tail == o.tail

    def __repr__(self):
        def f(x):
            return "exact" if x >= EXACT // 2 else str(x)
        return f"Profile([{', '.join(f(x) for x in self.vals)}], tail={f(self.tail)})"

    @classmethod
    def uniform(cls, j):
        return cls((), j)

    def min(self, o):
        n = max(len(self.vals), len(o.vals))
        return Profile([min(self(d), o(d)) for d in range(n)], min(self.tail, o.tail))

    def shift(self, k):
        """Profile of an operator raising total degree by k (k may be negative)."""
        n = len(self.vals)
        if k >= 0:
            return Profile([EXACT] * k + list(self.vals), self.tail)
        return Profile([self(d - k) for d in range(max(n + k, 0))], self.tail)

    def lower(self, k):
        return Profile([_lower(v, k) for v in self.vals], _lower(self.tail, k))

    def cap_nonempty(self, degs, jcoef):
        """min with a coefficient validity on the nonempty components."""
        if jcoef >= EXACT:
            return self
        n = max(len(self.vals), max(degs) + 1 if degs else 0)
        return Profile([min(self(d), jcoef) if d in degs else self(d) for d in range(n)],
                       self.tail)

    def derive(self, degs, jcoef):
        """Profile after a q-derivative plus multiplication by coefficients of
        validity ``jcoef`` (the shape of a covariant derivative)."""
        n = max(len(self.vals), max(degs) + 1 if degs else 0)
        vals = []
        for d in range(n):
            v = _lower(self(d), 1)
            if d in degs:
                v = min(v, jcoef)
            vals.append(v)
        return Profile(vals, _lower(self.tail, 1))

    def truncate(self, kmax):
        """Mark every degree above kmax as unknown."""
        return Profile([self(d) for d in range(kmax + 1)], UNKNOWN)

    def last_known(self):
        """Largest degree with validity >= 0, or None if unbounded."""
        if self.tail >= 0:
            return None
        for d in range(len(self.vals) - 1, -1, -1):
            if self.vals[d] >= 0:
                return d
        return -1

    def known_through(self, kmax, jmin=0):
        return all(self(d) >= jmin for d in range(kmax + 1))


def product_profile(pa, degs_a, pb, degs_b):
    """Validity of a degree-additive product of two elements.

    An empty component of validity J behaves like O(q^(J+1)), so it bounds
    the product by J no matter what it multiplies.
    """
    la = max(len(pa.vals), max(degs_a) + 1 if degs_a else 0)
    lb = max(len(pb.vals), max(degs_b) + 1 if degs_b else 0)

    def pair(da, db):
        ja, jb = pa(da), pb(db)
        ea, eb = da not in degs_a, db not in degs_b
        if ea and eb:
            return max(ja, jb)
        if ea:
            return ja
        if eb:
            return jb
        return min(ja, jb)

    vals = []
    for d in range(la + lb + 1):
        vals.append(min(pair(da, d - da) for da in range(d + 1)))
    tail = vals.pop()
    return Profile(vals, tail)
