"""Invariant suites per module, run on one geometry (and one Lie algebra).

Each check yields a Verdict; ``first`` names the first surviving term of a
nonzero defect.  These are the ``selftest`` payload of the CLI.
"""
import random
import time
from dataclasses import dataclass

from gmpy2 import mpq

from . import gweyl_core as g
from . import lie_group as lg
from .calculus_ops import Calculus
from .fedosov_engine import MODES, phase
from .geometry import (LiftedConnection, curvature, exterior_derivative, lift_properties,
                       normal_coordinate_suite)
from .gweyl_core import WeylElement
from .jets import EXACT, padd_into, ptrunc
from .representation import std_rep, std_rep_apply, std_rep_via_star


@dataclass
class Verdict:
    suite: str
    identity: str
    passed: bool
    first: str = ""


def first_term(d):
    """Readable first surviving term of a defect (WeylElement, dict or bool)."""
    if isinstance(d, WeylElement):
        if d.is_zero():
            return ""
        key = min(d.terms)
        m = min(d.terms[key])
        return f"{key} {d.chart.exps(m)}: {d.terms[key][m]}"
    if isinstance(d, dict):
        return "" if not d else str(min(d.items(), key=lambda kv: str(kv[0])))[:120]
    return ""


def _v(out, suite, name, defect):
    if isinstance(defect, bool):
        out.append(Verdict(suite, name, defect, "" if defect else "identity violated"))
    else:
        z = defect.is_zero() if isinstance(defect, WeylElement) else not defect
        out.append(Verdict(suite, name, z, first_term(defect)))


def random_phase(chart, rng, terms=3, pdeg=2, qdeg=2, lam=0):
    n = chart.nq
    entries = {}
    for _ in range(terms):
        e = [rng.randint(0, qdeg) for _ in range(n)] + [rng.randint(0, pdeg) for _ in range(n)]
        while sum(e[:n]) > qdeg:
            e[rng.randrange(n)] = 0
        while sum(e[n:]) > pdeg:
            e[n + rng.randrange(n)] = 0
        entries[(rng.randint(0, lam), tuple(e))] = (mpq(rng.randint(-3, 3) or 1, rng.randint(1, 3)),
                                                    mpq(rng.randint(-2, 2)))
    return phase(chart, entries)


def core_suite(conn, rng):
    out = []
    ch = conn.TQ
    n = conn.n
    a = g.build(ch, [(0, [1] + [0] * (2 * n - 1), (), [0] * (2 * n - 1) + [1], 1),
                     (1, [0, 1] + [0] * (2 * n - 2), (0,), [1] + [0] * (2 * n - 1), mpq(2, 3))])
    b = g.build(ch, [(0, [0] * (2 * n - 1) + [2], (1,), [0] * 2 * n, (0, 1)),
                     (0, [1] + [0] * (2 * n - 1), (), [1] + [0] * (2 * n - 1), 1)])
    c = g.build(ch, [(0, [0, 1] + [0] * (2 * n - 2), (), [0] * 2 * n, 1)])
    for name, mul in (("weyl", g.weyl_mul), ("standard", g.std_mul)):
        _v(out, "gweyl_core", f"{name} fibre product associative",
           mul(mul(a, b), c) - mul(a, mul(b, c)))
    _v(out, "gweyl_core", "delta^2 = 0", g.delta(g.delta(a)))
    _v(out, "gweyl_core", "delta delta^-1 + delta^-1 delta + sigma = id",
       g.delta(g.delta_inv(a)) + g.delta_inv(g.delta(a)) + g.sigma(a) - a)
    _v(out, "gweyl_core", "conj reverses the fibre Weyl product",
       g.conj(g.weyl_mul(a, c)) - g.weyl_mul(g.conj(c), g.conj(a)))
    return out


def geometry_suite(conn, rng):
    out = []
    cd = curvature(conn)
    da = exterior_derivative(conn.Q, cd.alpha, conn.n)
    bad = {}
    for key in set(da) | set(cd.trace_two_form):
        acc = dict(da.get(key, {}))
        padd_into(acc, cd.trace_two_form.get(key, {}))
        acc = ptrunc(conn.Q, acc, cd.alpha_jet - 1 if cd.alpha_jet < EXACT // 2 else EXACT)
        if acc:
            bad[key] = acc
    _v(out, "geometry", "d alpha = -tr R", bad)
    for name, ok in sorted(lift_properties(LiftedConnection(conn)).items()):
        _v(out, "geometry", f"lift: {name}", bool(ok))
    try:
        res = normal_coordinate_suite(conn)
    except ValueError:
        res = {}         # not in normal coordinates
    for name, ok in sorted(res.items()):
        _v(out, "geometry", f"normal coordinates: {name}", bool(ok))
    return out


def fedosov_suite(calc, rng, probes=2):
    out = []
    ch = calc.chart
    for mode in MODES:
        S = calc.session(mode)
        a = g.build(ch, [(0, [1] + [0] * (2 * ch.nq - 1), (), [0] * (2 * ch.nq - 1) + [1], 1)])
        _v(out, "fedosov_engine", f"D^2 = 0 ({mode})", S.D(S.D(a)))
        r = S.r
        if mode == "prime":
            # r' is the fibrewise transform of r_F, not a normalized solution
            _v(out, "fedosov_engine", "r' = S r_F", r - g.s_fib(calc.session("weyl").r, calc.lift.hor))
        else:
            _v(out, "fedosov_engine", f"delta^-1 r = 0 ({mode})", g.delta_inv(r))
            _v(out, "fedosov_engine", f"r is lambda-free ({mode})", r.max_lambda() == 0 or r.is_zero())
        f, h, k = (random_phase(ch, rng) for _ in range(3))
        _v(out, "fedosov_engine", f"associativity ({mode})",
           S.star(S.star(f, h), k) - S.star(f, S.star(h, k)))
        _v(out, "fedosov_engine", f"homogeneity is a derivation ({mode})",
           g.homogeneity(S.star(f, h)) - S.star(g.homogeneity(f), h) - S.star(f, g.homogeneity(h)))
    _v(out, "fedosov_engine", "r_S = r_F", calc.session("standard").r - calc.session("weyl").r)
    return out


def calculus_suite(calc, rng):
    out = []
    ch = calc.chart
    f, h = random_phase(ch, rng), random_phase(ch, rng)
    _v(out, "calculus_ops", "T(f *' g) = Tf *_F Tg",
       calc.T(calc.star("prime", f, h)) - calc.star("weyl", calc.T(f), calc.T(h)))
    _v(out, "calculus_ops", "V(f *_S g) = Vf *' Vg",
       calc.V(calc.star("standard", f, h)) - calc.star("prime", calc.V(f), calc.V(h)))
    _v(out, "calculus_ops", "C_S anti-automorphism",
       calc.Cs(calc.star("standard", f, h)) - calc.star("standard", calc.Cs(h), calc.Cs(f)))
    lin = random_phase(ch, rng, pdeg=1)
    (_, d), = calc.n2c_equals_cs_check([lin])
    _v(out, "calculus_ops", "N^2 conj = C_S", d)
    return out


def representation_suite(calc, rng):
    out = []
    S = calc.session("standard")
    cl = S.classical
    ch, Q = calc.chart, calc.conn.Q
    f, h = random_phase(ch, rng), random_phase(ch, rng, pdeg=1)
    psi = g.from_poly(Q, {Q.pack((1,) + (0,) * (Q.nq - 1)): (mpq(1), mpq(0)), 0: (mpq(2), mpq(0))})
    _v(out, "representation", "closed form = i*(f *_S pi*psi)",
       std_rep_apply(f, psi, cl) - std_rep_via_star(S, f, psi))
    A, B = std_rep(cl, f), std_rep(cl, h)
    AB = std_rep(cl, S.star(f, h), calc.k)
    _v(out, "representation", "rho_S homomorphism", ((A @ B).truncate_lambda(calc.k) - AB).is_zero())
    return out


def lie_suite(alg, k=2, rng=None):
    out = []
    rng = rng or random.Random(0)
    U = [rng.randint(-2, 2) for _ in range(alg.n)]
    V = [rng.randint(-2, 2) for _ in range(alg.n)]
    d = lg.bch_components(alg, U, V, 4)
    o = lg.bch_tensor_log(alg, U, V, 4)
    _v(out, "lie_group", "Dynkin BCH = tensor-algebra log",
       all(lg.vector_values(d[N]) == lg.vector_values(o[N]) for N in d))
    lhs, rhs = lg.gutt_exp_star(alg, U, V, k)
    _v(out, "lie_group", "e_U *_S e_V = e_BCH", lhs == rhs)
    _v(out, "lie_group", "M_r^inv table shape", lg.tables_for(alg, k).check_shape())
    _v(out, "lie_group", "enveloping-algebra symbols = BCH series",
       lg.exp_star_via_enveloping(alg, k, k + 1) == lg.exp_star_via_bch(alg, k, k + 1))
    direct = lg.gutt_weyl_star(alg, lg.ExpLin.hat(U, k), lg.ExpLin.e(V, k), k)
    _v(out, "lie_group", "Bernoulli series = U^ *_G e_V", direct == lg.hatU_star_eV(alg, U, V, k))
    rep = lg.cross_validate_fedosov(alg, min(k, 2))
    _v(out, "lie_group", "std_star_lie = Fedosov standard product", rep.ok)
    frame = lg.LieFrame(alg, 2 * k + 4)
    pr = lg.default_probes(frame)[:2]
    ok = all((lg.gutt_weyl_star(alg, f, h, k, 0).elem - lg.gutt_weyl_star(alg, f, h, k, 1).elem).is_zero()
             for f in pr for h in pr)
    _v(out, "lie_group", "*_G independent of t", ok)
    return out


def run_all(conn, lambda_order=2, alpha="auto", alg=None, strict=True, seed=0):
    """All suites; returns ([Verdict], seconds)."""
    t0 = time.perf_counter()
    rng = random.Random(seed)
    calc = Calculus(conn, lambda_order, alpha, strict=strict)
    out = core_suite(conn, rng) + geometry_suite(conn, rng)
    out += fedosov_suite(calc, rng) + calculus_suite(calc, rng) + representation_suite(calc, rng)
    out += lie_suite(alg or lg.heisenberg(), min(lambda_order, 2), rng)
    return out, time.perf_counter() - t0
