"""Difference-logic feasibility by Bellman-Ford negative-cycle detection.

Weights are pairs (c, k) meaning c + k*delta for an infinitesimal delta > 0,
so strict bounds x - y < c become x - y <= (c, -1).
"""

from __future__ import annotations

from fractions import Fraction

from .expr import Linear

ZERO = "\0zero"
Pair = tuple[Fraction, Fraction]


def as_difference(lin: Linear) -> tuple[str, str, Fraction] | None:
    """Match `lin <= 0` against x - y <= c (y may be ZERO).

    Returns (x, y, c) or None when lin is not a difference.
    """
    items = list(lin.coeffs.items())
    if len(items) == 1:
        (v, a), = items
        c = -lin.const / abs(a)
        return (v, ZERO, c) if a > 0 else (ZERO, v, c)
    if len(items) == 2:
        (v1, a1), (v2, a2) = items
        if a1 != -a2:
            return None
        c = -lin.const / abs(a1)
        return (v1, v2, c) if a1 > 0 else (v2, v1, c)
    return None


def is_difference_system(rows: list[tuple[Linear, str]]) -> bool:
    return all(not lin.coeffs or as_difference(lin) is not None for lin, _ in rows)


def solve(rows: list[tuple[Linear, str]],
          variables: set[str]) -> dict[str, Fraction] | None:
    """Model over nonnegative rationals for `lin rel 0` rows, or None."""
    edges: list[tuple[str, str, Pair]] = []
    for lin, rel in rows:
        k = Fraction(-1) if rel == "<" else Fraction(0)
        if not lin.coeffs:
            if (lin.const, -k) > (0, 0):
                return None
            continue
        m = as_difference(lin)
        if m is None:
            raise ValueError("row is not a difference constraint")
        x, y, c = m
        edges.append((y, x, (c, k)))  # x - y <= c : edge y -> x
    nodes = sorted(variables) + [ZERO]
    for v in variables:
        edges.append((v, ZERO, (Fraction(0), Fraction(0))))  # zero - v <= 0
    for u, v, _ in edges:
        if u not in variables and u != ZERO:
            nodes.append(u)
        if v not in variables and v != ZERO:
            nodes.append(v)
    nodes = list(dict.fromkeys(nodes))
    dist: dict[str, Pair] = {n: (Fraction(0), Fraction(0)) for n in nodes}
    for _ in range(len(nodes)):
        changed = False
        for u, v, (c, k) in edges:
            du = dist[u]
            cand = (du[0] + c, du[1] + k)
            if cand < dist[v]:
                dist[v] = cand
                changed = True
        if not changed:
            break
    else:
        return None
    # a final pass still relaxing means a negative cycle
    for u, v, (c, k) in edges:
        du = dist[u]
        if (du[0] + c, du[1] + k) < dist[v]:
            return None
    z = dist[ZERO]
    vals = {n: (d[0] - z[0], d[1] - z[1]) for n, d in dist.items()}
    delta = _pick_delta(
        ((_pair_sub(vals[v], vals[u]), w) for u, v, w in edges))
    return {n: vals[n][0] + vals[n][1] * delta for n in nodes if n != ZERO}


def _pair_sub(a: Pair, b: Pair) -> Pair:
    return (a[0] - b[0], a[1] - b[1])


def _pick_delta(pairs) -> Fraction:
    """Largest delta <= 1 keeping every lhs <= rhs true once concretized."""
    delta = Fraction(1)
    for (a1, b1), (a2, b2) in pairs:
        if a1 < a2 and b1 > b2:
            delta = min(delta, (a2 - a1) / (b1 - b2))
    return delta
