"""Exact Gaussian rationals.

Hot loops work on plain ``(re, im)`` tuples of ``gmpy2.mpq``; :class:`Scalar`
is the public value type used for parsing, rendering and comparisons.
"""
import re as _re
from fractions import Fraction

from gmpy2 import mpq

Q0 = mpq(0)
Q1 = mpq(1)
ZERO = (Q0, Q0)
ONE = (Q1, Q0)
I = (Q0, Q1)


def q(x):
    """Coerce an int, Fraction, string or mpq to mpq."""
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


def cpair(x):
    """Coerce anything scalar-like to an (re, im) pair."""
    if isinstance(x, tuple):
        return (q(x[0]), q(x[1]))
    if isinstance(x, Scalar):
        return (x.re, x.im)
    if isinstance(x, complex):
        raise TypeError("floating point complex numbers are not exact")
    if isinstance(x, float):
        raise TypeError("floats are not exact")
    return (q(x), Q0)


def cadd(a, b):
    return (a[0] + b[0], a[1] + b[1])


def csub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def cmul(a, b):
    ar, ai = a
    br, bi = b
    if not ai:
        if not bi:
            return (ar * br, Q0)
        return (ar * br, ar * bi)
    if not bi:
        return (ar * br, ai * br)
    return (ar * br - ai * bi, ar * bi + ai * br)


def cneg(a):
    return (-a[0], -a[1])


def cconj(a):
    return (a[0], -a[1])


def cinv(a):
    d = a[0] * a[0] + a[1] * a[1]
    if not d:
        raise ZeroDivisionError("division by zero scalar")
    return (a[0] / d, -a[1] / d)


def cscale(a, r):
    """Multiply by a rational."""
    return (a[0] * r, a[1] * r)


def is_zero(a):
    return not a[0] and not a[1]


def ipow(k):
    """i**k as a pair."""
    return ((Q1, Q0), (Q0, Q1), (-Q1, Q0), (Q0, -Q1))[k % 4]


def _fmt_q(x):
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


_SCALAR_RE = _re.compile(
    r"^\s*([+-]?\d+(?:/\d+)?)?\s*(?:([+-])\s*(\d+(?:/\d+)?)?\s*\*?\s*i)?\s*$")


class Scalar:
    """Exact value re + i*im with rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = q(re)
        self.im = q(im)

    @classmethod
    def of(cls, x):
        r, i = cpair(x)
        s = cls.__new__(cls)
        s.re, s.im = r, i
        return s

    @property
    def pair(self):
        return (self.re, self.im)

    def __add__(self, o):
        return Scalar.of(cadd(self.pair, cpair(o)))

    __radd__ = __add__

    def __sub__(self, o):
        return Scalar.of(csub(self.pair, cpair(o)))

    def __rsub__(self, o):
        return Scalar.of(csub(cpair(o), self.pair))

    def __mul__(self, o):
        return Scalar.of(cmul(self.pair, cpair(o)))

    __rmul__ = __mul__

    def __truediv__(self, o):
        return Scalar.of(cmul(self.pair, cinv(cpair(o))))

    def __neg__(self):
        return Scalar.of(cneg(self.pair))

    def conjugate(self):
        return Scalar.of(cconj(self.pair))

    def __eq__(self, o):
        try:
            return self.pair == cpair(o)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash(self.pair)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __repr__(self):
        return f"Scalar({self})"

    def __str__(self):
        return render(self.pair)

    @classmethod
    def parse(cls, text):
        return cls.of(parse_pair(text))


def render(pair):
    """Render as 'a/b+c/d*i' (both parts always present)."""
    re_, im_ = pair
    sign = "-" if im_ < 0 else "+"
    return f"{_fmt_q(re_)}{sign}{_fmt_q(abs(im_))}*i"


def parse_pair(text):
    """Parse 'a/b+c/d*i', 'a/b', 'c/d*i', '-i' and similar forms."""
    t = text.strip().replace(" ", "")
    if t.endswith("i") and not _re.search(r"\d|i", t[:-1].rstrip("*+-")) and \
            t.rstrip("*i") in ("", "+", "-"):
        return (Q0, -Q1 if t.startswith("-") else Q1)
    m = _SCALAR_RE.match(t)
    if not m or (m.group(1) is None and m.group(2) is None):
        # pure imaginary like '3/4*i' or '-3/4*i'
        m2 = _re.match(r"^([+-]?)(\d+(?:/\d+)?)\*?i$", t)
        if m2:
            v = mpq(m2.group(2))
            return (Q0, -v if m2.group(1) == "-" else v)
        raise ValueError(f"cannot parse scalar {text!r}")
    re_ = mpq(m.group(1)) if m.group(1) else Q0
    if m.group(2) is None:
        return (re_, Q0)
    im_ = mpq(m.group(3)) if m.group(3) else Q1
    return (re_, -im_ if m.group(2) == "-" else im_)
