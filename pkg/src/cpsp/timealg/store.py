"""Persistent constraint stores and the satisfiability oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from . import difflogic, simplex, smtlib
from .expr import (NotLinear, TimeConstraint, has_cur, holds, normalize,
                   variables)


class CurLeak(ValueError):
    """A constraint still mentions cur when entering a store."""


@dataclass(frozen=True)
class Sat:
    model: Mapping[str, Fraction]


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = ""


Verdict = Sat | Unsat | Unknown


class ConstraintStore:
    """Append-only set of time constraints; add() returns a new store."""

    __slots__ = ("_items", "_set", "_tags", "status")

    def __init__(self, items: Iterable[TimeConstraint] = (),
                 tags: Mapping[TimeConstraint, str] | None = None):
        seen: dict[TimeConstraint, None] = {}
        for tc in items:
            if has_cur(tc):
                raise CurLeak(str(tc))
            seen[tc] = None
        self._items = tuple(seen)
        self._set = frozenset(seen)
        self._tags = dict(tags or {})
        self.status: Verdict | None = None

    def add(self, tc: TimeConstraint, tag: str | None = None) -> "ConstraintStore":
        if has_cur(tc):
            raise CurLeak(str(tc))
        if tc in self._set:
            return self
        new = ConstraintStore.__new__(ConstraintStore)
        new._items = self._items + (tc,)
        new._set = self._set | {tc}
        new._tags = self._tags if tag is None else {**self._tags, tc: tag}
        new.status = None
        return new

    def add_all(self, tcs: Iterable[TimeConstraint],
                tag: str | None = None) -> "ConstraintStore":
        s = self
        for tc in tcs:
            s = s.add(tc, tag)
        return s

    def tag(self, tc: TimeConstraint) -> str | None:
        return self._tags.get(tc)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, tc) -> bool:
        return tc in self._set

    def variables(self) -> set[str]:
        return {v for tc in self._items for v in variables(tc)}

    def __repr__(self) -> str:
        return "{" + ", ".join(str(tc) for tc in self._items) + "}"


def verify_model(constraints: Iterable[TimeConstraint],
                 model: Mapping[str, Fraction]) -> bool:
    """Exact re-evaluation of every constraint plus nonnegativity."""
    if any(v < 0 for v in model.values()):
        return False
    return all(holds(tc, model) for tc in constraints)


def builtin_check(constraints: Iterable[TimeConstraint]) -> Verdict:
    constraints = list(constraints)
    rows = []
    try:
        for tc in constraints:
            rows.extend(normalize(tc))
    except NotLinear as exc:
        return Unknown(f"outside the linear fragment: {exc}")
    names = {v for tc in constraints for v in variables(tc)}
    if difflogic.is_difference_system(rows):
        model = difflogic.solve(rows, names)
    else:
        model = simplex.solve(rows, names)
    if model is None:
        return Unsat()
    model = {k: v for k, v in model.items() if k in names}
    return Sat(model)


def smt_check(constraints: Iterable[TimeConstraint],
              solver: "smtlib.SmtSolver") -> Verdict:
    constraints = list(constraints)
    status, model = solver.run(smtlib.encode(constraints))
    if status == "unsat":
        return Unsat()
    if status == "unknown":
        return Unknown("solver answered unknown")
    names = {v for tc in constraints for v in variables(tc)}
    full = {n: model.get(n, Fraction(0)) for n in names}
    if not verify_model(constraints, full):
        raise smtlib.MalformedSolverReply("solver model fails exact re-evaluation")
    return Sat(full)


@dataclass
class Oracle:
    """Backend selection plus call statistics for a search run."""

    backend: str = "auto"  # builtin | smt | auto
    solver_path: str | None = None
    solver_timeout: float | None = 30.0
    calls: int = 0
    smt_calls: int = 0
    _solver: "smtlib.SmtSolver | None" = field(default=None, repr=False)

    def smt(self) -> "smtlib.SmtSolver":
        if self._solver is None:
            self._solver = smtlib.SmtSolver(self.solver_path,
                                            timeout=self.solver_timeout)
        return self._solver

    def check(self, store: ConstraintStore | Iterable[TimeConstraint]) -> Verdict:
        if isinstance(store, ConstraintStore) and store.status is not None:
            return store.status
        self.calls += 1
        items = list(store)
        if self.backend == "smt":
            self.smt_calls += 1
            verdict = smt_check(items, self.smt())
        else:
            verdict = builtin_check(items)
            if isinstance(verdict, Unknown) and self.backend == "auto":
                self.smt_calls += 1
                verdict = smt_check(items, self.smt())
        if isinstance(store, ConstraintStore):
            store.status = verdict
        return verdict


def check_sat(store: ConstraintStore | Iterable[TimeConstraint],
              backend: str = "builtin",
              solver: "smtlib.SmtSolver | None" = None) -> Verdict:
    if backend == "builtin":
        return builtin_check(store)
    if backend == "smt":
        return smt_check(store, solver or smtlib.SmtSolver())
    if backend == "auto":
        v = builtin_check(store)
        if isinstance(v, Unknown):
            return smt_check(store, solver or smtlib.SmtSolver())
        return v
    raise ValueError(f"unknown backend {backend!r}")
