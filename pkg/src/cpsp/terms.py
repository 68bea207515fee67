"""Message algebra: terms, substitutions and syntactic unification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Union

CONST_KINDS = ("nonce", "symkey", "participant", "intruder", "text")


@dataclass(frozen=True, slots=True)
class Const:
    name: str
    kind: str = "text"

    def __post_init__(self) -> None:
        if self.kind not in CONST_KINDS:
            raise ValueError(f"unknown constant kind {self.kind!r}")

    def __str__(self) -> str:
        tag = {"nonce": "nonce", "symkey": "key", "participant": "name",
               "intruder": "name", "text": "text"}[self.kind]
        return f"{tag}({self.name})"


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class SK:
    agent: "Message"

    def __str__(self) -> str:
        return f"sk({_agent_str(self.agent)})"


@dataclass(frozen=True, slots=True)
class PK:
    agent: "Message"

    def __str__(self) -> str:
        return f"pk({_agent_str(self.agent)})"


@dataclass(frozen=True, slots=True)
class Enc:
    payload: "Message"
    key: "Message"

    def __str__(self) -> str:
        return f"enc({self.payload}, {self.key})"


@dataclass(frozen=True, slots=True)
class Tuple:
    items: tuple["Message", ...]

    def __post_init__(self) -> None:
        if len(self.items) < 2:
            raise ValueError("use tup() so that singleton tuples collapse")

    def __str__(self) -> str:
        return "[" + ", ".join(str(m) for m in self.items) + "]"


Message = Union[Const, Var, SK, PK, Enc, Tuple]


def _agent_str(m: Message) -> str:
    # inside sk/pk the agent is written bare
    if isinstance(m, Const) and m.kind in ("participant", "intruder"):
        return m.name
    return str(m)


def tup(*items: Message) -> Message:
    """Build a tuple; a singleton tuple is its element."""
    if not items:
        raise ValueError("empty tuple")
    if len(items) == 1:
        return items[0]
    return Tuple(tuple(items))


def name(agent: str, kind: str = "participant") -> Const:
    return Const(agent, kind)


def nonce(n: str) -> Const:
    return Const(n, "nonce")


def key(k: str) -> Const:
    return Const(k, "symkey")


def text(t: str) -> Const:
    return Const(t, "text")


class NotAKey(ValueError):
    """Raised when a message in key position has no inverse."""


def inverse_key(k: Message) -> Message:
    match k:
        case PK(a):
            return SK(a)
        case SK(a):
            return PK(a)
        case Const(_, "symkey"):
            return k
    raise NotAKey(f"{k} is not a key")


def is_ground(m: Message) -> bool:
    return not vars_of(m)


def vars_of(m: Message) -> frozenset[str]:
    return frozenset(_iter_vars(m))


def _iter_vars(m: Message) -> Iterator[str]:
    match m:
        case Var(n):
            yield n
        case SK(a) | PK(a):
            yield from _iter_vars(a)
        case Enc(p, k):
            yield from _iter_vars(p)
            yield from _iter_vars(k)
        case Tuple(items):
            for it in items:
                yield from _iter_vars(it)


def subterms(m: Message) -> Iterator[Message]:
    yield m
    match m:
        case SK(a) | PK(a):
            yield from subterms(a)
        case Enc(p, k):
            yield from subterms(p)
            yield from subterms(k)
        case Tuple(items):
            for it in items:
                yield from subterms(it)


def constants(m: Message) -> frozenset[Const]:
    return frozenset(t for t in subterms(m) if isinstance(t, Const))


def depth(m: Message) -> int:
    match m:
        case SK(a) | PK(a):
            return 1 + depth(a)
        case Enc(p, k):
            return 1 + max(depth(p), depth(k))
        case Tuple(items):
            return 1 + max(depth(i) for i in items)
    return 0


class Substitution:
    """Idempotent finite map from variable names to messages."""

    __slots__ = ("_map",)

    def __init__(self, bindings: Mapping[str, Message] | None = None):
        self._map: dict[str, Message] = dict(bindings or {})

    @classmethod
    def empty(cls) -> "Substitution":
        return _EMPTY

    def __contains__(self, v: str) -> bool:
        return v in self._map

    def __getitem__(self, v: str) -> Message:
        return self._map[v]

    def __len__(self) -> int:
        return len(self._map)

    def __iter__(self):
        return iter(self._map)

    def items(self):
        return self._map.items()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Substitution) and self._map == other._map

    def __hash__(self) -> int:
        return hash(frozenset(self._map.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k} -> {v}" for k, v in sorted(self._map.items()))
        return "{" + inner + "}"

    def apply(self, m: Message) -> Message:
        if not self._map:
            return m
        return apply(self, m)

    def bind(self, v: str, m: Message) -> "Substitution":
        """Extend with v -> m, keeping the result idempotent."""
        single = Substitution({v: m})
        new = {k: single.apply(t) for k, t in self._map.items()}
        new[v] = m
        return Substitution(new)


_EMPTY = Substitution()


def apply(s: Substitution, m: Message) -> Message:
    match m:
        case Var(n):
            return s._map.get(n, m)
        case Const():
            return m
        case SK(a):
            return SK(apply(s, a))
        case PK(a):
            return PK(apply(s, a))
        case Enc(p, k):
            return Enc(apply(s, p), apply(s, k))
        case Tuple(items):
            return Tuple(tuple(apply(s, i) for i in items))
    raise TypeError(f"not a message: {m!r}")


def unify(m1: Message, m2: Message,
          base: Substitution | None = None) -> Substitution | None:
    """Most general unifier of m1 and m2 extending base, or None."""
    s = base if base is not None else _EMPTY
    stack = [(m1, m2)]
    while stack:
        a, b = stack.pop()
        a, b = s.apply(a), s.apply(b)
        if a == b:
            continue
        if isinstance(a, Var):
            if a.name in vars_of(b):
                return None
            s = s.bind(a.name, b)
            continue
        if isinstance(b, Var):
            stack.append((b, a))
            continue
        match a, b:
            case SK(x), SK(y):
                stack.append((x, y))
            case PK(x), PK(y):
                stack.append((x, y))
            case Enc(p1, k1), Enc(p2, k2):
                stack.append((k1, k2))
                stack.append((p1, p2))
            case Tuple(xs), Tuple(ys) if len(xs) == len(ys):
                stack.extend(reversed(list(zip(xs, ys))))
            case _:
                return None
    return s


def rename_vars(m: Message, mapping: Mapping[str, str]) -> Message:
    return apply(Substitution({k: Var(v) for k, v in mapping.items()}), m)
