"""Reference implementations used to cross-check the package.

Nothing here calls into the code under test except for the plain data
constructors, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from cpsp import terms as T
from cpsp.timealg.expr import BinOp, Dist, Num, TimeConstraint, TVar

# --- deducibility by saturation --------------------------------------------

PUBLIC_KINDS = ("text", "participant", "intruder")


def _subterms(m, out: set) -> None:
    out.add(m)
    match m:
        case T.SK(a) | T.PK(a):
            _subterms(a, out)
        case T.Enc(p, k):
            _subterms(p, out)
            _subterms(k, out)
        case T.Tuple(items):
            for i in items:
                _subterms(i, out)


def _inverse(k):
    match k:
        case T.PK(a):
            return T.SK(a)
        case T.SK(a):
            return T.PK(a)
        case T.Const(_, "symkey"):
            return k
    return None


def closure_derivable(pool, target) -> bool:
    """Saturate analysis and synthesis over the subterms of pool and target."""
    universe: set = set()
    for m in list(pool) + [target]:
        _subterms(m, universe)
    for m in list(universe):
        if isinstance(m, T.Enc) and _inverse(m.key) is not None:
            universe.add(_inverse(m.key))
    known = set(pool)
    known |= {m for m in universe if isinstance(m, T.Const) and m.kind in PUBLIC_KINDS}
    changed = True
    while changed:
        changed = False
        for m in list(known):
            new = []
            if isinstance(m, T.Tuple):
                new = list(m.items)
            elif isinstance(m, T.Enc) and _inverse(m.key) in known:
                new = [m.payload]
            for x in new:
                if x not in known:
                    known.add(x)
                    changed = True
        for u in universe - known:
            ok = (isinstance(u, T.Tuple) and all(i in known for i in u.items)) or \
                 (isinstance(u, T.Enc) and u.payload in known and u.key in known)
            if ok:
                known.add(u)
                changed = True
    return target in known


# --- linear forms ----------------------------------------------------------

def atom_name(e) -> str:
    match e:
        case TVar(n):
            return n
        case Dist(a, b):
            return f"td({a},{b})"
    raise TypeError(e)


def linear(e) -> dict[str, Fraction]:
    """Coefficients of a +,- expression; key '' holds the constant."""
    match e:
        case Num(v):
            return {"": Fraction(v)}
        case TVar() | Dist():
            return {atom_name(e): Fraction(1)}
        case BinOp(op, a, b) if op in "+-":
            la, lb = linear(a), linear(b)
            sign = 1 if op == "+" else -1
            out = dict(la)
            for k, v in lb.items():
                out[k] = out.get(k, 0) + sign * v
            return {k: v for k, v in out.items() if v != 0}
    raise TypeError(f"not a +/- expression: {e!r}")


def canonical(tc: TimeConstraint, rename: dict[str, str] | None = None):
    """Hashable normal form: lhs - rhs REL 0 with REL in {>=, >, =}."""
    rename = rename or {}
    lhs, rhs = linear(tc.lhs), linear(tc.rhs)
    diff: dict[str, Fraction] = {}
    for k, v in lhs.items():
        diff[rename.get(k, k)] = diff.get(rename.get(k, k), 0) + v
    for k, v in rhs.items():
        diff[rename.get(k, k)] = diff.get(rename.get(k, k), 0) - v
    diff = {k: v for k, v in diff.items() if v != 0}
    rel = tc.rel
    if rel in ("<=", "<"):
        diff = {k: -v for k, v in diff.items()}
        rel = ">=" if rel == "<=" else ">"
    if rel == "=":
        first = min(k for k in diff if k)
        if diff[first] < 0:
            diff = {k: -v for k, v in diff.items()}
    return rel, frozenset(diff.items())


# --- LP feasibility --------------------------------------------------------

def lp_feasible(rows: list[tuple[dict[str, Fraction], str]],
                nonneg: bool = True) -> bool:
    """Feasibility of {sum c_i x_i + c0 REL 0}; strict rows get a slack eps."""
    names = sorted({k for r, _ in rows for k in r if k})
    idx = {n: i for i, n in enumerate(names)}
    n = len(names) + 1  # last column is eps
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for coeffs, rel in rows:
        row = np.zeros(n)
        for k, v in coeffs.items():
            if k:
                row[idx[k]] = float(v)
        c0 = float(coeffs.get("", 0))
        match rel:
            case ">=":
                a_ub.append(-row); b_ub.append(c0)
            case ">":
                row[-1] = -1.0
                a_ub.append(-row); b_ub.append(c0)
            case "<=":
                a_ub.append(row); b_ub.append(-c0)
            case "<":
                row[-1] = 1.0
                a_ub.append(row); b_ub.append(-c0)
            case "=":
                a_eq.append(row); b_eq.append(-c0)
    obj = np.zeros(n)
    obj[-1] = -1.0
    lo = 0 if nonneg else None
    bounds = [(lo, None)] * (n - 1) + [(0, 1)]
    res = linprog(obj, A_ub=np.array(a_ub) if a_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(a_eq) if a_eq else None,
                  b_eq=np.array(b_eq) if b_eq else None,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return False
    strict = any(rel in (">", "<") for _, rel in rows)
    return not strict or -res.fun > 1e-9


def lp_feasible_constraints(tcs, nonneg: bool = True) -> bool:
    rows = []
    for tc in tcs:
        diff = linear(tc.lhs)
        for k, v in linear(tc.rhs).items():
            diff[k] = diff.get(k, 0) - v
        rows.append((diff, tc.rel))
    return lp_feasible(rows, nonneg)
