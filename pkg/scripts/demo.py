"""Small tour: flat and curved products, the Weyl/Fedosov M_2 gap on S^2, a Gutt exponential."""
import time

from gmpy2 import mpq

from cotstar import geometry as geo
from cotstar import lie_group as lg
from cotstar.calculus_ops import Calculus
from cotstar.fedosov_engine import FedosovSession, phase


def show(label, f):
    rows = []
    for (l, s, A), p in sorted(f.terms.items()):
        for m, (re_, im) in sorted(p.items()):
            rows.append(f"  lambda^{l} {f.chart.exps(m)}: {re_}{'+' if im >= 0 else ''}{im}i")
    print(label)
    print("\n".join(rows) or "  0")


def main():
    t = time.perf_counter()
    S = FedosovSession(geo.flat_connection(1), mode="standard", lambda_order=3)
    ch = S.chart
    show("flat: p^2 *_S q^2   (exponents q, p)", S.star(phase(ch, {(0, (0, 2)): 1}), phase(ch, {(0, (2, 0)): 1})))

    C = Calculus(geo.sphere_stereographic(9), lambda_order=2)
    ch = C.chart
    f, h = phase(ch, {(0, (1, 0, 1, 0)): 1}), phase(ch, {(0, (0, 1, 0, 1)): 1})
    show("S^2: q1 p1 *_F q2 p2   (exponents q1, q2, p1, p2)", C.star("weyl", f, h))

    Z = Calculus(geo.sphere_stereographic(7), lambda_order=2, alpha="zero")
    rep = Z.m2_compare({0: {0: (mpq(1), mpq(0))}}, {0: {0: (mpq(1), mpq(0))}})
    print("S^2: M2^W - M2^F on (d1^, d1^) at the origin:", rep.difference.get(0), "confirmed:", rep.confirmed)

    lhs, rhs = lg.gutt_exp_star(lg.heisenberg(), [1, 0, 0], [0, 1, 0], 3)
    print("heisenberg: e_X *_S e_Y == e_BCH(X,Y) through lambda^3:", lhs == rhs)
    print(f"done in {time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
