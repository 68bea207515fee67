"""Exact general simplex over delta-rationals for linear feasibility.

Follows the bound-driven tableau method used in SMT arithmetic solvers:
one slack per row, Bland's rule for pivot selection, strict bounds carried
as an infinitesimal component.
"""

from __future__ import annotations

from fractions import Fraction

from .expr import Linear

Pair = tuple[Fraction, Fraction]
_Z = Fraction(0)


def _add(a: Pair, b: Pair) -> Pair:
    return (a[0] + b[0], a[1] + b[1])


def _mul(a: Pair, f: Fraction) -> Pair:
    return (a[0] * f, a[1] * f)


def solve(rows: list[tuple[Linear, str]],
          variables: set[str]) -> dict[str, Fraction] | None:
    """Nonnegative rational model of the rows `lin rel 0`, or None if infeasible."""
    originals = sorted(variables | {v for lin, _ in rows for v in lin.coeffs})
    lower: dict[str, Pair | None] = {v: (_Z, _Z) for v in originals}
    upper: dict[str, Pair | None] = {v: None for v in originals}
    tableau: dict[str, dict[str, Fraction]] = {}
    order: dict[str, int] = {v: i for i, v in enumerate(originals)}
    slack_of: dict[tuple, str] = {}

    for lin, rel in rows:
        bound = (-lin.const, Fraction(-1) if rel == "<" else _Z)
        if not lin.coeffs:
            if bound < (_Z, _Z):
                return None
            continue
        key = tuple(sorted(lin.coeffs.items()))
        s = slack_of.get(key)
        if s is None:
            s = f"\0s{len(slack_of)}"
            slack_of[key] = s
            tableau[s] = dict(lin.coeffs)
            lower[s] = None
            upper[s] = bound
            order[s] = len(order)
        elif upper[s] is None or bound < upper[s]:
            upper[s] = bound

    value: dict[str, Pair] = {v: (_Z, _Z) for v in order}
    for s, row in tableau.items():
        value[s] = (_Z, _Z)  # originals start at 0

    def violated(x: str) -> bool:
        lo, up = lower[x], upper[x]
        return (lo is not None and value[x] < lo) or (up is not None and value[x] > up)

    while True:
        bad = [b for b in tableau if violated(b)]
        if not bad:
            break
        xi = min(bad, key=order.__getitem__)
        row = tableau[xi]
        lo = lower[xi]
        if lo is not None and value[xi] < lo:
            target = lo
            cands = [xj for xj, a in row.items()
                     if (a > 0 and _below_upper(xj, value, upper))
                     or (a < 0 and _above_lower(xj, value, lower))]
        else:
            target = upper[xi]
            cands = [xj for xj, a in row.items()
                     if (a < 0 and _below_upper(xj, value, upper))
                     or (a > 0 and _above_lower(xj, value, lower))]
        if not cands:
            return None
        xj = min(cands, key=order.__getitem__)
        _pivot_and_update(tableau, value, xi, xj, target)

    delta = Fraction(1)
    for x in order:
        v = value[x]
        for bnd, is_lower in ((lower[x], True), (upper[x], False)):
            if bnd is None:
                continue
            lhs, rhs = (bnd, v) if is_lower else (v, bnd)
            (a1, b1), (a2, b2) = lhs, rhs
            if a1 < a2 and b1 > b2:
                delta = min(delta, (a2 - a1) / (b1 - b2))
    return {v: value[v][0] + value[v][1] * delta for v in originals}


def _below_upper(x, value, upper) -> bool:
    return upper[x] is None or value[x] < upper[x]


def _above_lower(x, value, lower) -> bool:
    return lower[x] is None or value[x] > lower[x]


def _pivot_and_update(tableau, value, xi: str, xj: str, v: Pair) -> None:
    row = tableau[xi]
    a = row[xj]
    theta = _mul(_add(v, _mul(value[xi], Fraction(-1))), 1 / a)
    value[xi] = v
    value[xj] = _add(value[xj], theta)
    for xk, rk in tableau.items():
        if xk != xi and xj in rk:
            value[xk] = _add(value[xk], _mul(theta, rk[xj]))
    # xi = a*xj + rest  =>  xj = (xi - rest) / a
    new_row = {xi: 1 / a}
    for x, c in row.items():
        if x != xj:
            new_row[x] = -c / a
    del tableau[xi]
    for xk, rk in tableau.items():
        c = rk.pop(xj, None)
        if c is None:
            continue
        for x, d in new_row.items():
            nv = rk.get(x, _Z) + c * d
            if nv:
                rk[x] = nv
            else:
                rk.pop(x, None)
    tableau[xj] = new_row
