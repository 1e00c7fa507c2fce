"""STL fragment: AST, text grammar, horizons and Boolean semantics.

The fragment has three layers::

    Phi  := F[0,T] phi | G[0,T] phi
    phi  := phi & phi | phi | phi | F[0,h] body | G[0,h] body
    body := pred | !body | body & body | body | body

Concrete syntax: ``F[a,b](...)``, ``G[a,b](...)``, ``&``, ``|``, ``!`` and
predicates ``s<k> < c`` / ``s<k> > c``.  ``x`` and ``y`` are aliases for
``s0`` and ``s1``.  Time bounds are real numbers; they are rounded up to
whole samples when a formula is evaluated against a sampled trajectory.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

__all__ = [
    "Predicate",
    "Not",
    "And",
    "Or",
    "Temporal",
    "Node",
    "Trajectory",
    "StlSyntaxError",
    "FragmentError",
    "InsufficientSamplesError",
    "parse_node",
    "parse_stl",
    "check_fragment",
    "to_text",
    "horizon",
    "to_steps",
    "eval_bool",
    "subformulae",
    "max_signal_index",
    "bool_verdicts",
]


class StlSyntaxError(ValueError):
    """Malformed formula text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class FragmentError(ValueError):
    """Well-formed STL that falls outside the three-layer fragment."""


class InsufficientSamplesError(ValueError):
    """Trajectory too short to resolve a formula at the requested index."""


@dataclass(frozen=True)
class Predicate:
    signal_index: int
    comparison: str  # "<" or ">"
    threshold: float

    def __post_init__(self):
        if self.comparison not in ("<", ">"):
            raise ValueError(f"unsupported comparison {self.comparison!r}")
        if self.signal_index < 0:
            raise ValueError("signal_index must be non-negative")

    def holds(self, sample) -> bool:
        v = sample[self.signal_index]
        return v < self.threshold if self.comparison == "<" else v > self.threshold


@dataclass(frozen=True)
class Not:
    child: "Node"


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Temporal:
    """``F[lo,hi] child`` (op ``"F"``) or ``G[lo,hi] child`` (op ``"G"``)."""

    op: str
    lo: float
    hi: float
    child: "Node"

    def __post_init__(self):
        if self.op not in ("F", "G"):
            raise ValueError(f"unknown temporal operator {self.op!r}")
        if not (0 <= self.lo <= self.hi) or math.isinf(self.hi):
            raise ValueError(f"bad time window [{self.lo},{self.hi}]")


Node = Union[Predicate, Not, And, Or, Temporal]


@dataclass(frozen=True)
class Trajectory:
    """Sampled signal: ``samples[k]`` is the state at time ``k * dt``."""

    samples: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("trajectory needs at least one sample of a fixed dimension")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<sig>s\d+|x|y)
  | (?P<temp>[FG])
  | (?P<op>[&|!<>\[\](),])
    """,
    re.VERBOSE,
)

_ALIASES = {"x": 0, "y": 1}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, value: str | None = None, kind: str | None = None):
        tok = self.tokens[self.i]
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = repr(value) if value is not None else kind
            got = repr(tok[1]) if tok[0] != "eof" else "end of input"
            raise StlSyntaxError(f"expected {want}, got {got}", tok[2])
        self.i += 1
        return tok

    def formula(self) -> Node:
        node = self.conj()
        while self.peek()[1] == "|":
            self.take("|")
            node = Or(node, self.conj())
        return node

    def conj(self) -> Node:
        node = self.unary()
        while self.peek()[1] == "&":
            self.take("&")
            node = And(node, self.unary())
        return node

    def unary(self) -> Node:
        kind, value, pos = self.peek()
        if value == "!":
            self.take("!")
            return Not(self.unary())
        if kind == "temp":
            self.take()
            self.take("[")
            lo = float(self.take(kind="num")[1])
            self.take(",")
            hi_tok = self.take(kind="num")
            hi = float(hi_tok[1])
            self.take("]")
            if lo < 0 or hi < lo:
                raise StlSyntaxError(f"bad time window [{lo},{hi}]", hi_tok[2])
            return Temporal(value, lo, hi, self.unary())
        if value == "(":
            self.take("(")
            node = self.formula()
            self.take(")")
            return node
        if kind == "sig":
            self.take()
            index = _ALIASES[value] if value in _ALIASES else int(value[1:])
            op_tok = self.peek()
            if op_tok[1] not in ("<", ">"):
                raise StlSyntaxError("expected '<' or '>'", op_tok[2])
            self.take()
            return Predicate(index, op_tok[1], float(self.take(kind="num")[1]))
        got = repr(value) if kind != "eof" else "end of input"
        raise StlSyntaxError(f"unexpected {got}", pos)


def parse_node(text: str) -> Node:
    """Parse any formula in the concrete grammar, without fragment checks."""
    p = _Parser(text)
    node = p.formula()
    p.take(kind="eof")
    return node


def _is_bool(node: Node) -> bool:
    if isinstance(node, Predicate):
        return True
    if isinstance(node, Not):
        return _is_bool(node.child)
    if isinstance(node, (And, Or)):
        return _is_bool(node.left) and _is_bool(node.right)
    return False


def _check_inner(node: Node) -> None:
    if isinstance(node, (And, Or)):
        _check_inner(node.left)
        _check_inner(node.right)
    elif isinstance(node, Temporal):
        if node.lo != 0:
            raise FragmentError(f"sub-formula windows must start at 0, got [{node.lo},{node.hi}]")
        if not _is_bool(node.child):
            raise FragmentError("temporal operators may not be nested inside a sub-formula body")
    elif isinstance(node, Not):
        raise FragmentError("negation may only be applied to predicates")
    else:
        raise FragmentError("every operand of the inner formula must be an F or G sub-formula")


def check_fragment(node: Node) -> Temporal:
    """Raise :class:`FragmentError` unless ``node`` is a fragment formula."""
    if not isinstance(node, Temporal):
        raise FragmentError("formula must start with an outer F or G operator")
    if node.lo != 0:
        raise FragmentError(f"outer window must start at 0, got [{node.lo},{node.hi}]")
    _check_inner(node.child)
    return node


def parse_stl(text: str) -> Temporal:
    return check_fragment(parse_node(text))


# ---------------------------------------------------------------------------
# Printing


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _atom(node: Node) -> str:
    s = to_text(node)
    return s if isinstance(node, Predicate) else f"({s})"


def to_text(node: Node) -> str:
    """Canonical text; ``parse_node(to_text(n)) == n``."""
    if isinstance(node, Predicate):
        return f"s{node.signal_index}{node.comparison}{_fmt(node.threshold)}"
    if isinstance(node, Not):
        return "!" + _atom(node.child)
    if isinstance(node, And):
        left = to_text(node.left)
        if isinstance(node.left, Or):
            left = f"({left})"
        right = to_text(node.right)
        if isinstance(node.right, (And, Or)):
            right = f"({right})"
        return f"{left} & {right}"
    if isinstance(node, Or):
        right = to_text(node.right)
        if isinstance(node.right, Or):
            right = f"({right})"
        return f"{to_text(node.left)} | {right}"
    if isinstance(node, Temporal):
        return f"{node.op}[{_fmt(node.lo)},{_fmt(node.hi)}]({to_text(node.child)})"
    raise TypeError(f"not an STL node: {node!r}")


# ---------------------------------------------------------------------------
# Semantics


def horizon(node: Node) -> float:
    """Time needed beyond the evaluation instant to resolve ``node``."""
    if isinstance(node, Predicate):
        return 0.0
    if isinstance(node, Not):
        return horizon(node.child)
    if isinstance(node, (And, Or)):
        return max(horizon(node.left), horizon(node.right))
    if isinstance(node, Temporal):
        return node.hi + horizon(node.child)
    raise TypeError(f"not an STL node: {node!r}")


def to_steps(duration: float, dt: float) -> int:
    """Whole samples covering ``duration``, rounding up."""
    # tolerance absorbs float noise such as 0.3 / 0.1
    return max(0, math.ceil(duration / dt - 1e-9))


def _eval(node: Node, samples: np.ndarray, t: int, dt: float) -> int:
    if isinstance(node, Predicate):
        return int(node.holds(samples[t]))
    if isinstance(node, Not):
        return 1 - _eval(node.child, samples, t, dt)
    if isinstance(node, And):
        return min(_eval(node.left, samples, t, dt), _eval(node.right, samples, t, dt))
    if isinstance(node, Or):
        return max(_eval(node.left, samples, t, dt), _eval(node.right, samples, t, dt))
    lo, hi = to_steps(node.lo, dt), to_steps(node.hi, dt)
    window = (_eval(node.child, samples, k, dt) for k in range(t + lo, t + hi + 1))
    if node.op == "F":
        return int(any(window))
    return int(all(window))


def eval_bool(node: Node, traj: Trajectory, t: int = 0) -> int:
    """Boolean verdict of ``(traj, t) |= node`` as 0 or 1."""
    need = t + to_steps(horizon(node), traj.dt)
    if t < 0 or need >= len(traj):
        raise InsufficientSamplesError(
            f"evaluating at index {t} needs samples up to {need}, trajectory has {len(traj)}"
        )
    for p in _predicates(node):
        if p.signal_index >= traj.dim:
            raise ValueError(f"s{p.signal_index} out of range for {traj.dim}-dimensional trajectory")
    return _eval(node, traj.samples, t, traj.dt)


def _predicates(node: Node) -> Iterator[Predicate]:
    if isinstance(node, Predicate):
        yield node
    elif isinstance(node, (Not, Temporal)):
        yield from _predicates(node.child)
    else:
        yield from _predicates(node.left)
        yield from _predicates(node.right)


def _leaves(node: Node) -> Iterator[Temporal]:
    if isinstance(node, (And, Or)):
        yield from _leaves(node.left)
        yield from _leaves(node.right)
    else:
        yield node


def subformulae(formula: Temporal) -> list[Temporal]:
    """Sub-formulae of a fragment formula in left-to-right order."""
    check_fragment(formula)
    return list(_leaves(formula.child))


def max_signal_index(node: Node) -> int:
    return max(p.signal_index for p in _predicates(node))


def bool_verdicts(body: Node, states: Sequence) -> list[int]:
    """Instantaneous verdicts of a predicate combination on each state."""
    return [_eval(body, np.asarray([s], dtype=float), 0, 1.0) for s in states]
