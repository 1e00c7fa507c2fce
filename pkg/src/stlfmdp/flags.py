"""Flag-augmented states for learning STL objectives.

Each sub-formula ``F[0,h] body`` or ``G[0,h] body`` gets one flag with
``tau_i = ceil(h/dt) + 1`` levels, stored as an integer numerator
``k in [0, tau_i - 1]`` of ``k / (tau_i - 1)``:

* F-type flags hold the time since the body last held: set to the top
  level on a hit, stepped down by one level on a miss.
* G-type flags hold the length of the current run of hits: stepped up on
  a hit (capped at the top), reset to zero on a miss.

A flag absorbs the state the system is *leaving*.  The augmented state at
time ``t`` is ``(sigma_t, f)`` where ``f`` summarises ``sigma_0..sigma_{t-1}``,
and :func:`sat` combines ``f`` with the verdict on ``sigma_t``.  With this
convention ``sat`` equals the Boolean verdict of the sub-formula over the
window ``sigma_{t-tau_i+1..t}`` using only ``tau_i`` flag levels.

Clamping is toward the valid range: ``max(k - 1, 0)`` for F-type misses and
``min(k + 1, tau_i - 1)`` for G-type hits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .stl import And, Node, Or, Temporal, bool_verdicts, check_fragment, horizon, subformulae, to_steps

__all__ = [
    "FlagSchema",
    "FMdpState",
    "update_flags",
    "update_from_bits",
    "sat",
    "sat_from_bits",
    "reward",
    "reward_value",
    "init_flags",
    "flag_values",
]


FlagVector = tuple  # integer numerators, one per sub-formula


@dataclass(frozen=True)
class FMdpState:
    sigma: object  # environment state: an index or a state vector
    flags: FlagVector


class FlagSchema:
    """Flag layout of a fragment formula for sampling period ``dt``.

    Attributes:
        formula: the outer formula.
        ops: temporal operator of each sub-formula, ``"F"`` or ``"G"``.
        bodies: predicate combination of each sub-formula.
        taus: ``tau_i`` per sub-formula.
        tau: the largest ``tau_i``.
        T: outer horizon in steps, i.e. ``ceil(hrz(formula)/dt)``.
    """

    def __init__(self, formula: Temporal, dt: float = 1.0):
        check_fragment(formula)
        self.formula = formula
        self.dt = dt
        subs = subformulae(formula)
        self.subformulae = subs
        self.ops = tuple(s.op for s in subs)
        self.bodies = tuple(s.child for s in subs)
        self.taus = tuple(to_steps(s.hi, dt) + 1 for s in subs)
        self.tau = max(self.taus)
        self.n = len(subs)
        self.outer_op = formula.op
        self.T = to_steps(horizon(formula), dt)
        self.tree = _compile(formula.child, iter(range(self.n)))

    @property
    def n_flag_states(self) -> int:
        return math.prod(self.taus)

    def state_count(self, n_env_states: int) -> int:
        """``|Sigma^F| = |Sigma| * prod(tau_i)``."""
        return n_env_states * self.n_flag_states

    def zero(self) -> FlagVector:
        return (0,) * self.n

    def all_flags(self) -> list[FlagVector]:
        """Every flag vector, in lexicographic order."""
        out: list[FlagVector] = [()]
        for t in self.taus:
            out = [f + (k,) for f in out for k in range(t)]
        return out

    def verdicts(self, sample) -> tuple[int, ...]:
        """Instantaneous body verdict of every sub-formula on ``sample``."""
        return tuple(bool_verdicts(b, [sample])[0] for b in self.bodies)

    def verdict_table(self, states: np.ndarray) -> list[tuple[int, ...]]:
        cols = [bool_verdicts(b, states) for b in self.bodies]
        return [tuple(c[s] for c in cols) for s in range(len(states))]


def _compile(node: Node, counter) -> tuple:
    if isinstance(node, And):
        return ("and", _compile(node.left, counter), _compile(node.right, counter))
    if isinstance(node, Or):
        return ("or", _compile(node.left, counter), _compile(node.right, counter))
    if isinstance(node, Temporal):
        return ("leaf", next(counter))
    raise TypeError(f"unexpected inner node {node!r}")


def flag_values(flags: FlagVector, schema: FlagSchema) -> tuple[Fraction, ...]:
    """Real flag values ``k_i / (tau_i - 1)``; a single-level flag reads 0."""
    return tuple(
        Fraction(k, t - 1) if t > 1 else Fraction(0) for k, t in zip(flags, schema.taus)
    )


def update_from_bits(flags: FlagVector, bits: Sequence[int], schema: FlagSchema) -> FlagVector:
    out = []
    for k, hit, op, t in zip(flags, bits, schema.ops, schema.taus):
        top = t - 1
        if op == "F":
            out.append(top if hit else max(k - 1, 0))
        else:
            out.append(min(k + 1, top) if hit else 0)
    return tuple(out)


def update_flags(flags: FlagVector, sample, schema: FlagSchema) -> FlagVector:
    """Fold the verdicts on ``sample`` (the state being left) into ``flags``."""
    return update_from_bits(flags, schema.verdicts(sample), schema)


def _leaf(i: int, flags: FlagVector, bits: Sequence[int], schema: FlagSchema) -> int:
    if schema.ops[i] == "F":
        return int(flags[i] > 0 or bool(bits[i]))
    return int(flags[i] == schema.taus[i] - 1 and bool(bits[i]))


def _sat_tree(tree: tuple, flags, bits, schema) -> int:
    tag = tree[0]
    if tag == "leaf":
        return _leaf(tree[1], flags, bits, schema)
    left = _sat_tree(tree[1], flags, bits, schema)
    right = _sat_tree(tree[2], flags, bits, schema)
    return min(left, right) if tag == "and" else max(left, right)


def sat_from_bits(flags: FlagVector, bits: Sequence[int], schema: FlagSchema) -> int:
    """Running verdict of the whole inner formula."""
    return _sat_tree(schema.tree, flags, bits, schema)


def sat(state: FMdpState, schema: FlagSchema, node: Node | int | None = None) -> int:
    """Running verdict of ``node`` at an augmented state.

    ``node`` is the inner formula (default), any And/Or sub-tree of it, or
    a sub-formula given by object or by its 0-based position.
    ``state.sigma`` must be a state vector here.
    """
    bits = schema.verdicts(state.sigma)
    if node is None:
        return sat_from_bits(state.flags, bits, schema)
    if isinstance(node, int):
        return _leaf(node, state.flags, bits, schema)
    tree = _find(schema.formula.child, schema.tree, node)
    if tree is None:
        raise ValueError("node is not part of this schema's inner formula")
    return _sat_tree(tree, state.flags, bits, schema)


def _find(node: Node, tree: tuple, target: Node):
    if node is target:
        return tree
    if tree[0] != "leaf":
        return _find(node.left, tree[1], target) or _find(node.right, tree[2], target)
    return None


def reward_value(sat_value: int, outer_op: str, beta: float) -> float:
    """``exp(beta*(sat-1))`` under an outer F, ``-exp(-beta*sat)`` under an outer G.

    The F branch is ``exp(beta*sat)`` scaled by the constant ``exp(-beta)``,
    which keeps values in ``(0, 1]`` and leaves every argmax unchanged.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if outer_op == "F":
        return math.exp(beta * (sat_value - 1))
    return -math.exp(-beta * sat_value)


def reward(state: FMdpState, schema: FlagSchema, beta: float) -> float:
    return reward_value(sat(state, schema), schema.outer_op, beta)


def init_flags(prefix: Sequence, schema: FlagSchema) -> FlagVector:
    """Flags at time ``tau - 1`` from the given prefix ``sigma_0..sigma_{tau-1}``.

    Starting from all-zero flags, every prefix state except the last is
    absorbed; the augmented state is then ``(prefix[-1], flags)``.
    """
    if len(prefix) != schema.tau:
        raise ValueError(f"prefix must hold tau={schema.tau} states, got {len(prefix)}")
    flags = schema.zero()
    for sample in prefix[:-1]:
        flags = update_flags(flags, sample, schema)
    return flags
