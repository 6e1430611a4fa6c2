"""Batch front end: read a scene, run its tasks, write an exact report.

Scenes are YAML documents::

    name: flat-demo
    geometry: {kind: flat, n: 1}        # or builtin / christoffel / lie
    truncation: {lambda_order: 2, jet_order: 7}
    alpha: auto                          # auto | zero | {0: [terms]}
    tasks:
      - {command: star, mode: standard,
         f: [{p_index: [2], q_index: [0], value: "1"}],
         g: [{p_index: [0], q_index: [2], value: "1"}]}

Operands are coefficient tables; each entry carries lambda_power (default 0),
p_index, q_index and either ``value`` ("a/b+c/d*i") or ``re``/``im``.
Reports list the same fields, so a result table can be pasted back as an
operand.  Exit status: 0 all checks pass, 1 a check failed, 2 bad input.
"""
import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

import yaml
from gmpy2 import mpq

from . import gweyl_core as g
from . import lie_group as lg
from .calculus_ops import KINDS, Calculus, m2_compare
from .fedosov_engine import min_jet
from .geometry import ConnectionData, builtin_connection, flat_connection
from .gweyl_core import WeylElement
from .jets import EXACT, Chart, JetError, Profile
from .representation import adjoint_by_divergence, std_rep, std_rep_apply, unhat, weyl_rep
from .scalar import Q0, parse_pair, render
from .suites import Verdict, first_term, run_all

COMMANDS = ("star", "rep", "adjoint", "equivalence", "m2-compare", "lie", "selftest")
CLI_MODES = ("weyl", "standard", "prime", "weyl-n", "gutt")


class SceneError(ValueError):
    """Bad scene: syntax, dimensions, jet budget, structure constants."""


@dataclass
class Scene:
    name: str
    kind: str
    n: int
    lambda_order: int
    jet_order: int
    alpha: object = "auto"
    conn: ConnectionData | None = None
    algebra: lg.LieAlgebraData | None = None
    total_degree: int | None = None
    mode: str = "standard"
    tasks: list = field(default_factory=list)


# ---------------------------------------------------------------- scalars and tables

def _scalar(x, where):
    try:
        if isinstance(x, bool):
            raise ValueError
        if isinstance(x, (int, float)):
            return (mpq(str(x)), Q0)
        return parse_pair(str(x))
    except ValueError:
        raise SceneError(f"{where}: cannot read scalar {x!r}") from None


def _entry_value(e, where):
    if "value" in e:
        return _scalar(e["value"], where)
    re_ = _scalar(e.get("re", 0), where)[0]
    im_ = _scalar(e.get("im", 0), where)[0]
    return (re_, im_)


def _index(e, key, n, where):
    v = e.get(key, [0] * n)
    if not isinstance(v, list) or len(v) != n or not all(isinstance(x, int) and x >= 0 for x in v):
        raise SceneError(f"{where}: {key} must be a list of {n} non-negative integers")
    return tuple(v)


def read_table(entries, n, chart, jet, where, base_only=False):
    """Coefficient table -> phase function (on T*Q, or on Q when base_only)."""
    if not isinstance(entries, list):
        raise SceneError(f"{where}: operand must be a list of entries")
    terms = {}
    for j, e in enumerate(entries):
        w = f"{where}[{j}]"
        if not isinstance(e, dict):
            raise SceneError(f"{w}: entry must be a mapping")
        l = e.get("lambda_power", 0)
        if not isinstance(l, int) or l < 0:
            raise SceneError(f"{w}: lambda_power must be a non-negative integer")
        q = _index(e, "q_index", n, w)
        exps = q if base_only else q + _index(e, "p_index", n, w)
        c = _entry_value(e, w)
        key = (l, 0, 0)
        m = chart.pack(exps)
        acc = terms.setdefault(key, {})
        old = acc.get(m, (Q0, Q0))
        acc[m] = (old[0] + c[0], old[1] + c[1])
    terms = {k: {m: v for m, v in p.items() if v != (Q0, Q0)} for k, p in terms.items()}
    return WeylElement(chart, {k: p for k, p in terms.items() if p}, Profile.uniform(jet))


def table_of(f, n=None):
    """Phase function -> sorted list of coefficient entries."""
    ch = f.chart
    n = ch.nq if n is None else n
    rows = []
    for (l, s, A), p in f.terms.items():
        for m, v in p.items():
            e = ch.exps(m)
            rows.append({"lambda_power": l, "p_index": list(e[n:2 * n]) if ch.np else [0] * n,
                         "q_index": list(e[:n]), "re": str(v[0]), "im": str(v[1])})
    rows.sort(key=lambda r: (r["lambda_power"], r["p_index"], r["q_index"]))
    return rows


def _jet_of(f):
    v = f.prof.vals[0] if f.prof.vals else f.prof.tail
    return "exact" if v >= EXACT // 2 else int(v)


def operator_table(A):
    rows = []
    Q = A.Q
    for (l, a), p in A.terms.items():
        for m, v in p.items():
            rows.append({"lambda_power": l, "d_index": list(a), "q_index": list(Q.exps(m)),
                         "re": str(v[0]), "im": str(v[1])})
    rows.sort(key=lambda r: (r["lambda_power"], r["d_index"], r["q_index"]))
    return rows


def explin_table(f):
    rows = []
    for (l, m), v in sorted(f.terms.items()):
        rows.append({"lambda_power": l, "p_index": list(m), "q_index": [0] * len(m),
                     "re": str(v[0]), "im": str(v[1])})
    return {"exponent": [render(x) for x in f.v0], "terms": rows}


# ---------------------------------------------------------------- scene parsing

def _load(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        raise SceneError(f"syntax error at line {mark.line + 1}, column {mark.column + 1}: "
                         f"{e.problem}") from None
    except yaml.YAMLError as e:
        raise SceneError(f"syntax error: {e}") from None
    if not isinstance(doc, dict):
        raise SceneError("scene must be a mapping at top level")
    return doc


def _gamma(raw, n, jet):
    Q = Chart(n, 0)
    gam = {}
    if not isinstance(raw, dict):
        raise SceneError("geometry.gamma must map 'k,i,j' to coefficient tables")
    for key, entries in raw.items():
        try:
            k, i, j = (int(x) for x in str(key).split(","))
        except ValueError:
            raise SceneError(f"geometry.gamma: bad index {key!r} (expected 'k,i,j')") from None
        if not all(0 <= x < n for x in (k, i, j)):
            raise SceneError(f"geometry.gamma: index {key!r} out of range for dimension {n}")
        f = read_table(entries, n, Q, jet, f"geometry.gamma[{key}]", base_only=True)
        gam[(k, i, j)] = f.terms.get((0, 0, 0), {})
    try:
        return ConnectionData(n, gam, jet, "custom")
    except ValueError as e:
        raise SceneError(f"geometry.gamma: {e}") from None


def _algebra(geo):
    if "algebra" in geo:
        try:
            return lg.builtin_algebra(geo["algebra"])
        except ValueError as e:
            raise SceneError(str(e)) from None
    n = geo.get("n")
    consts = geo.get("constants")
    if not isinstance(n, int) or not isinstance(consts, dict):
        raise SceneError("lie geometry needs 'algebra' or both 'n' and 'constants'")
    C = {}
    for key, v in consts.items():
        try:
            k, i, j = (int(x) for x in str(key).split(","))
        except ValueError:
            raise SceneError(f"constants: bad index {key!r}") from None
        if not all(0 <= x < n for x in (k, i, j)):
            raise SceneError(f"constants: index {key!r} out of range for dimension {n}")
        C[(k, i, j)] = _scalar(v, f"constants[{key}]")
    try:
        return lg.LieAlgebraData(n, C, geo.get("name", "custom"))
    except ValueError as e:
        raise SceneError(f"structure constants rejected: {e}") from None


def parse_scene(text, strict=True):
    """YAML text -> validated Scene (SceneError with a position or field path)."""
    doc = _load(text)
    geo = doc.get("geometry")
    if not isinstance(geo, dict) or "kind" not in geo:
        raise SceneError("missing geometry.kind")
    trunc = doc.get("truncation", {}) or {}
    k = trunc.get("lambda_order", doc.get("lambda_order", 2))
    if not isinstance(k, int) or k < 0:
        raise SceneError("truncation.lambda_order must be a non-negative integer")
    kind = geo["kind"]
    J = trunc.get("jet_order", min_jet(k))
    if not isinstance(J, int) or J < 0:
        raise SceneError("truncation.jet_order must be a non-negative integer")
    if strict and kind in ("builtin", "christoffel") and J < min_jet(k):
        raise SceneError(f"jet order {J} is below the minimum {min_jet(k)} for lambda-order {k}")
    sc = Scene(str(doc.get("name", "scene")), kind, 0, k, J, doc.get("alpha", "auto"),
               total_degree=trunc.get("total_degree"), mode=doc.get("mode", "standard"))
    if kind == "flat":
        n = geo.get("n", geo.get("dimension", doc.get("dimension")))
        if not isinstance(n, int) or n < 1:
            raise SceneError("flat geometry needs a positive dimension n")
        sc.n, sc.conn, sc.jet_order = n, flat_connection(n), EXACT
    elif kind == "builtin":
        try:
            sc.conn = builtin_connection(str(geo.get("name")), J, geo.get("n", 2))
        except ValueError as e:
            raise SceneError(str(e)) from None
        sc.n = sc.conn.n
    elif kind == "christoffel":
        n = geo.get("n")
        if not isinstance(n, int) or n < 1:
            raise SceneError("christoffel geometry needs a positive dimension n")
        sc.n, sc.conn = n, _gamma(geo.get("gamma", {}), n, J)
    elif kind == "lie":
        sc.algebra = _algebra(geo)
        sc.n = sc.algebra.n
    else:
        raise SceneError(f"unknown geometry kind {kind!r}")
    if sc.mode not in CLI_MODES:
        raise SceneError(f"unknown mode {sc.mode!r}")
    al = sc.alpha
    if isinstance(al, dict):
        Q = Chart(sc.n, 0)
        parsed = {}
        for i, entries in al.items():
            if not isinstance(i, int) or not 0 <= i < sc.n:
                raise SceneError(f"alpha: component {i!r} out of range")
            parsed[i] = read_table(entries, sc.n, Q, J, f"alpha[{i}]", base_only=True).terms.get(
                (0, 0, 0), {})
        sc.alpha = parsed
    elif al not in ("auto", "zero"):
        raise SceneError(f"alpha must be auto, zero or a table, not {al!r}")
    tasks = doc.get("tasks", []) or []
    if not isinstance(tasks, list):
        raise SceneError("tasks must be a list")
    for i, t in enumerate(tasks):
        if not isinstance(t, dict) or t.get("command") not in COMMANDS:
            raise SceneError(f"tasks[{i}]: command must be one of {COMMANDS}")
        if t.get("mode", sc.mode) not in CLI_MODES:
            raise SceneError(f"tasks[{i}]: unknown mode {t.get('mode')!r}")
    sc.tasks = tasks
    return sc


# ---------------------------------------------------------------- running

class Runner:
    def __init__(self, scene, strict=True):
        self.scene = scene
        self.strict = strict
        self._calc = None

    @property
    def calc(self):
        if self._calc is None:
            sc = self.scene
            if sc.conn is None:
                raise SceneError("this command needs a base geometry, not a Lie algebra")
            try:
                self._calc = Calculus(sc.conn, sc.lambda_order, sc.alpha, strict=self.strict)
            except ValueError as e:
                raise SceneError(str(e)) from None
        return self._calc

    def operand(self, task, key, i, base_only=False):
        if key not in task:
            raise SceneError(f"tasks[{i}]: missing operand {key!r}")
        sc = self.scene
        ch = Chart(sc.n, 0) if base_only else Chart(sc.n, sc.n)
        return read_table(task[key], sc.n, ch, sc.jet_order, f"tasks[{i}].{key}", base_only)

    def run_task(self, i, task):
        cmd = task["command"]
        out = {"index": i, "command": cmd}
        verdicts = []
        handler = getattr(self, "do_" + cmd.replace("-", "_"))
        handler(i, task, out, verdicts)
        if verdicts:
            out["verdicts"] = [{"identity": v.identity, "passed": v.passed, "first_failure": v.first}
                               for v in verdicts]
        return out, all(v.passed for v in verdicts)

    # each handler fills ``out`` and appends Verdicts
    def do_star(self, i, task, out, verdicts):
        mode = task.get("mode", self.scene.mode)
        out["mode"] = mode
        if self.scene.algebra is not None:
            return self._lie_star(i, task, out, mode)
        f, h = self.operand(task, "f", i), self.operand(task, "g", i)
        if mode == "gutt":
            raise SceneError(f"tasks[{i}]: mode gutt needs a lie geometry")
        res = self.calc.star(mode, f, h)
        out["result"] = {"jet": _jet_of(res), "terms": table_of(res)}

    def _lie_star(self, i, task, out, mode):
        alg, k = self.scene.algebra, self.scene.lambda_order
        frame = lg.LieFrame(alg, min_jet(k) + 1)
        f = lg.LieFunction(self.operand(task, "f", i).with_profile(Profile.uniform(frame.ejet)), frame)
        h = lg.LieFunction(self.operand(task, "g", i).with_profile(Profile.uniform(frame.ejet)), frame)
        if mode == "standard":
            res = lg.std_star_lie(alg, f, h, k)
        elif mode == "gutt":
            res = lg.gutt_weyl_star(alg, f, h, k, task.get("t", 0))
        else:
            raise SceneError(f"tasks[{i}]: lie geometries support modes standard and gutt")
        out["result"] = {"jet": _jet_of(res.elem), "terms": table_of(res.elem)}

    def do_rep(self, i, task, out, verdicts):
        calc = self.calc
        f = self.operand(task, "f", i)
        weyl = task.get("mode", "standard") in ("weyl", "weyl-n")
        cl = calc.session("standard").classical
        A = weyl_rep(calc, f, calc.k) if weyl else std_rep(cl, f, calc.k)
        out["mode"] = "weyl" if weyl else "standard"
        out["operator"] = {"jet": "exact" if A.jet >= EXACT // 2 else A.jet, "terms": operator_table(A)}
        if "psi" in task:
            psi = self.operand(task, "psi", i, base_only=True)
            res = A.apply(psi)
            out["result"] = {"jet": _jet_of(res), "terms": table_of(res, self.scene.n)}
            if not weyl:
                d = res - std_rep_apply(f, psi, cl)
                verdicts.append(Verdict("representation", "operator = closed form", d.is_zero(),
                                        first_term(d)))

    def do_adjoint(self, i, task, out, verdicts):
        calc = self.calc
        f = self.operand(task, "f", i)
        try:
            T = unhat(f)
        except ValueError as e:
            raise SceneError(f"tasks[{i}]: {e}") from None
        if T.k > 2:
            raise SceneError(f"tasks[{i}]: adjoint checks are defined for tensors of degree <= 2")
        cl = calc.session("standard").classical
        R = std_rep(cl, f, calc.k)
        adj = R.adjoint(calc.conn, calc.alpha, calc.alpha_jet)
        via_n = std_rep(cl, calc.N(g.conj(f), power=2), calc.k)
        out["operator"] = {"jet": "exact" if adj.jet >= EXACT // 2 else adj.jet,
                           "terms": operator_table(adj)}
        verdicts.append(Verdict("representation", "rho_S(T^)^dagger = rho_S(N^2 conj T^)",
                                (adj - via_n).is_zero()))
        Q = calc.conn.Q
        psi = self.operand(task, "psi", i, True) if "psi" in task else g.from_poly(
            Q, {Q.pack((1,) + (0,) * (Q.nq - 1)): (mpq(1), Q0), 0: (mpq(1), Q0)})
        d = adjoint_by_divergence(T, psi, calc.conn, calc.alpha, calc.alpha_jet) - adj.apply(psi)
        verdicts.append(Verdict("representation", "adjoint = Div_alpha recursion", d.is_zero(),
                                first_term(d)))

    def do_equivalence(self, i, task, out, verdicts):
        calc = self.calc
        kind = task.get("map", "T")
        if kind not in KINDS:
            raise SceneError(f"tasks[{i}]: map must be one of {KINDS}")
        f = self.operand(task, "f", i)
        M = calc.map(kind)
        res = M(f, task.get("inverse", False))
        out["map"] = kind
        out["result"] = {"jet": _jet_of(res), "terms": table_of(res)}
        if "g" in task:
            h = self.operand(task, "g", i)
            src, dst = {"T": ("prime", "weyl"), "V": ("standard", "prime"),
                        "N": ("weyl-n", "standard"), "Cs": ("standard", "standard")}[kind]
            lhs = M(calc.star(src, f, h))
            rhs = calc.star(dst, M(h), M(f)) if kind == "Cs" else calc.star(dst, M(f), M(h))
            d = lhs - rhs
            verdicts.append(Verdict("calculus_ops", f"{kind} intertwines the products", d.is_zero(),
                                    first_term(d)))

    def do_m2_compare(self, i, task, out, verdicts):
        calc = self.calc
        Q = calc.conn.Q

        def vec(key):
            raw = task.get(key, [1] + [0] * (self.scene.n - 1))
            if not isinstance(raw, list) or len(raw) != self.scene.n:
                raise SceneError(f"tasks[{i}].{key}: need {self.scene.n} components")
            outv = {}
            for a, c in enumerate(raw):
                if isinstance(c, list):
                    p = read_table(c, self.scene.n, Q, EXACT, f"tasks[{i}].{key}[{a}]", True)
                    p = p.terms.get((0, 0, 0), {})
                else:
                    v = _scalar(c, f"tasks[{i}].{key}[{a}]")
                    p = {0: v} if v != (Q0, Q0) else {}
                if p:
                    outv[a] = p
            return outv

        X, Y = vec("X"), vec("Y")
        if calc.k < 2:
            raise SceneError(f"tasks[{i}]: m2-compare needs lambda_order >= 2")
        rep = m2_compare(X, Y, calc.conn, calc.alpha, calc.alpha_jet, calc)
        ch = calc.chart
        for name in ("weyl", "fedosov", "difference"):
            val = getattr(rep, name)
            e = WeylElement(ch, {(0, 0, 0): val} if val else {}, Profile.uniform(rep.jet))
            out[name] = {"jet": rep.jet, "terms": table_of(e)}
        verdicts.append(Verdict("calculus_ops", "M2 values confirmed by the engine", bool(rep.confirmed)))

    def do_lie(self, i, task, out, verdicts):
        alg = self.scene.algebra
        if alg is None:
            raise SceneError(f"tasks[{i}]: lie needs a lie geometry")
        k = self.scene.lambda_order
        op = task.get("op", "exp-star")
        n = alg.n

        def vec(key):
            raw = task.get(key)
            if not isinstance(raw, list) or len(raw) != n:
                raise SceneError(f"tasks[{i}].{key}: need {n} components")
            return [_scalar(x, f"tasks[{i}].{key}") for x in raw]

        out["op"] = op
        if op == "bch":
            H = lg.bch(alg, vec("a"), vec("b"), task.get("order", k))
            out["result"] = [render(x) for x in lg.vector_values(H)]
            o = lg.bch_tensor_log(alg, vec("a"), vec("b"), task.get("order", k))
            tot = [dict() for _ in range(n)]
            for v in o.values():
                tot = lg._vadd(tot, v)
            verdicts.append(Verdict("lie_group", "Dynkin = tensor-algebra log",
                                    lg.vector_values(tot) == lg.vector_values(H)))
        elif op == "exp-star":
            lhs, rhs = lg.gutt_exp_star(alg, vec("U"), vec("V"), k)
            out["result"] = explin_table(lhs)
            verdicts.append(Verdict("lie_group", "e_U *_S e_V = e_BCH", lhs == rhs))
        elif op == "bernoulli":
            U, V = vec("U"), vec("V")
            closed = lg.hatU_star_eV(alg, U, V, k)
            direct = lg.gutt_weyl_star(alg, lg.ExpLin.hat(U, k), lg.ExpLin.e(V, k), k)
            out["result"] = explin_table(closed)
            verdicts.append(Verdict("lie_group", "Bernoulli series = U^ *_G e_V", closed == direct))
        elif op == "cross-validate":
            rep = lg.cross_validate_fedosov(alg, min(k, task.get("order", 2)))
            out["result"] = {"probes": rep.probes, "mismatches": [list(m) for m in rep.mismatches]}
            verdicts.append(Verdict("lie_group", "std_star_lie = Fedosov standard product", rep.ok))
        else:
            raise SceneError(f"tasks[{i}]: unknown lie op {op!r}")

    def do_selftest(self, i, task, out, verdicts):
        sc = self.scene
        conn = sc.conn or flat_connection(2)
        vs, _ = run_all(conn, min(sc.lambda_order, 2), sc.alpha if sc.conn else "auto",
                        alg=sc.algebra, strict=self.strict, seed=task.get("seed", 0))
        verdicts.extend(vs)


def run(scene, command=None, strict=True, timing=False):
    """Execute a scene's tasks (optionally only one command); returns (report, ok)."""
    runner = Runner(scene, strict)
    tasks = scene.tasks
    if command == "selftest" and not any(t["command"] == "selftest" for t in tasks):
        tasks = [{"command": "selftest"}]
    report = {"scene": scene.name, "geometry": scene.kind, "dimension": scene.n,
              "lambda_order": scene.lambda_order,
              "jet_order": "exact" if scene.jet_order >= EXACT // 2 else scene.jet_order,
              "tasks": []}
    ok = True
    for i, t in enumerate(tasks):
        if command and t["command"] != command:
            continue
        t0 = time.perf_counter()
        try:
            res, passed = runner.run_task(i, t)
        except SceneError:
            raise
        except (ValueError, JetError) as e:
            raise SceneError(f"tasks[{i}] ({t['command']}): {e}") from None
        if timing:
            res["seconds"] = round(time.perf_counter() - t0, 3)
        report["tasks"].append(res)
        ok &= passed
    report["status"] = "pass" if ok else "fail"
    return report, ok


def render_report(report, output="text"):
    if output == "json-like":
        return json.dumps(report, indent=1, sort_keys=True) + "\n"
    return yaml.safe_dump(report, sort_keys=True, default_flow_style=None, width=100)


def parse_report(text):
    """Either rendering back into the report mapping."""
    return yaml.safe_load(text)


def table_to_phase(rows, n, jet=EXACT):
    """A report table back into a phase function (the round-trip)."""
    return read_table(rows, n, Chart(n, n), jet, "table")


# ---------------------------------------------------------------- entry point

def _parser():
    p = argparse.ArgumentParser(prog="cotstar", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS + ("run",))
    p.add_argument("--scene", help="scene file (YAML); selftest defaults to flat R^2")
    p.add_argument("--order", type=int, help="override truncation.lambda_order")
    p.add_argument("--mode", choices=CLI_MODES, help="default product for star tasks")
    p.add_argument("--alpha", choices=("auto", "zero"), help="override the alpha policy")
    p.add_argument("--output", choices=("text", "json-like"), default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="add per-task seconds (not deterministic)")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    guard = os.environ.get("FORGE_CAP_GUARD", "strict")
    if guard not in ("strict", "permissive"):
        print(f"error: FORGE_CAP_GUARD must be strict or permissive, not {guard!r}", file=sys.stderr)
        return 2
    strict = guard == "strict"
    try:
        if args.scene:
            with open(args.scene, encoding="utf-8") as fh:
                text = fh.read()
        elif args.command == "selftest":
            text = "name: selftest\ngeometry: {kind: flat, n: 2}\n"
        else:
            raise SceneError("--scene is required")
        doc_override = _load(text)
        if args.order is not None:
            doc_override.setdefault("truncation", {})["lambda_order"] = args.order
        if args.mode:
            doc_override["mode"] = args.mode
        if args.alpha:
            doc_override["alpha"] = args.alpha
        scene = parse_scene(yaml.safe_dump(doc_override), strict)
        report, ok = run(scene, None if args.command == "run" else args.command, strict, args.timing)
    except (SceneError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    text = render_report(report, args.output)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
