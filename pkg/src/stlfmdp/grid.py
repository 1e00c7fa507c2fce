"""Finite MDPs with exact transition rows, and the stochastic grid world.

States are referred to by integer index; ``Mdp.states[i]`` is the centroid
vector that predicates are evaluated on.  Transition probabilities are kept
as :class:`fractions.Fraction` so that row sums are exactly one and the
explicit models built for the oracles are reproducible.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ACTIONS",
    "MOVES",
    "STAY",
    "Mdp",
    "GridSpec",
    "build_grid",
    "step",
    "transition_row",
    "rng_stream",
]

ACTIONS = ("N", "NW", "W", "SW", "S", "SE", "E", "NE", "stay")
# Compass moves in circular order, so the +/-45 degree neighbours of
# move k are k-1 and k+1 (mod 8).
MOVES = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))
STAY = ACTIONS.index("stay")


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Streams for different key tuples are statistically independent, which
    is how per-trial and per-episode randomness is split.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys))
    return np.random.Generator(np.random.PCG64(ss))


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p)
    if isinstance(p, float):
        # floats such as 0.93 are meant as decimals, not binary expansions
        return Fraction(repr(p))
    return Fraction(p)


class Mdp:
    """Finite MDP ``(states, actions, P)`` without a reward.

    Args:
        states: ``(m, d)`` array of state vectors.
        actions: action names.
        rows: ``rows[s][a]`` maps successor index to probability.  Rows
            within 1e-9 of summing to one are renormalised exactly; others
            are rejected.
    """

    def __init__(
        self,
        states,
        actions: Sequence[str],
        rows: Sequence[Sequence[Mapping[int, object]]],
    ):
        self.states = np.asarray(states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        self.states.setflags(write=False)
        self.actions = tuple(actions)
        m, k = len(self.states), len(self.actions)
        if len(rows) != m or any(len(r) != k for r in rows):
            raise ValueError("rows must be indexed [state][action]")
        self._rows: list[list[dict[int, Fraction]]] = []
        self._succ: list[list[list[int]]] = []
        self._cum: list[list[list[float]]] = []
        for s in range(m):
            row_s, succ_s, cum_s = [], [], []
            for a in range(k):
                dist = {}
                for nxt, p in rows[s][a].items():
                    p = _as_fraction(p)
                    if p < 0 or not 0 <= nxt < m:
                        raise ValueError(f"bad entry P({s},{a},{nxt}) = {p}")
                    if p > 0:
                        dist[int(nxt)] = dist.get(int(nxt), Fraction(0)) + p
                total = sum(dist.values(), Fraction(0))
                if abs(total - 1) > Fraction(1, 10**9):
                    raise ValueError(f"P({s},{a},.) sums to {float(total)}")
                if total != 1:
                    dist = {n: p / total for n, p in dist.items()}
                dist = dict(sorted(dist.items()))
                row_s.append(dist)
                succ_s.append(list(dist))
                acc, cum = Fraction(0), []
                for p in dist.values():
                    acc += p
                    cum.append(float(acc))
                cum[-1] = 1.0
                cum_s.append(cum)
            self._rows.append(row_s)
            self._succ.append(succ_s)
            self._cum.append(cum_s)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def row(self, s: int, a: int) -> dict[int, Fraction]:
        return dict(self._rows[s][a])

    def successors(self, s: int) -> set[int]:
        """States reachable from ``s`` in one step under some action."""
        out: set[int] = set()
        for a in range(self.n_actions):
            out.update(self._succ[s][a])
        return out

    def matrix(self, a: int) -> np.ndarray:
        """Dense float transition matrix of action ``a``."""
        P = np.zeros((self.n_states, self.n_states))
        for s in range(self.n_states):
            for nxt, p in self._rows[s][a].items():
                P[s, nxt] = float(p)
        return P

    def sample(self, s: int, a: int, rng: np.random.Generator) -> int:
        succ = self._succ[s][a]
        if len(succ) == 1:
            return succ[0]
        return succ[bisect.bisect_right(self._cum[s][a], rng.random())]


def step(mdp: Mdp, s: int, a: int, rng: np.random.Generator) -> int:
    """Draw the successor of ``(s, a)``; this is all a learner may call."""
    return mdp.sample(s, a, rng)


def transition_row(mdp: Mdp, s: int, a: int) -> dict[int, Fraction]:
    """Exact ``P(s, a, .)``.  Reserved for oracles; learners must not use it."""
    return mdp.row(s, a)


@dataclass(frozen=True)
class GridSpec:
    """Grid world with noisy compass moves.

    The chosen move succeeds with ``p_intended``; each of the two moves at
    +/-45 degrees happens with ``p_side``; the remainder stays put.  Any
    branch that would leave the grid stays put instead.  The ``stay``
    action is noise free.
    """

    width: int
    height: int
    p_intended: Fraction = Fraction("0.93")
    p_side: Fraction = Fraction("0.023")

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid needs at least one cell")
        pi, ps = _as_fraction(self.p_intended), _as_fraction(self.p_side)
        if pi < 0 or ps < 0 or pi + 2 * ps > 1:
            raise ValueError("need p_intended + 2*p_side <= 1 with non-negative terms")
        object.__setattr__(self, "p_intended", pi)
        object.__setattr__(self, "p_side", ps)

    def index(self, i: int, j: int) -> int:
        return j * self.width + i

    def cell(self, s: int) -> tuple[int, int]:
        return s % self.width, s // self.width

    def locate(self, point: Sequence[float]) -> int:
        """Index of the cell containing ``point``."""
        i, j = int(np.floor(point[0])), int(np.floor(point[1]))
        if not (0 <= i < self.width and 0 <= j < self.height):
            raise ValueError(f"point {tuple(point)} lies outside the {self.width}x{self.height} grid")
        return self.index(i, j)


def build_grid(spec: GridSpec) -> Mdp:
    states = [(i + 0.5, j + 0.5) for j in range(spec.height) for i in range(spec.width)]
    residual = 1 - spec.p_intended - 2 * spec.p_side

    def target(s: int, move: int) -> int:
        i, j = spec.cell(s)
        di, dj = MOVES[move]
        ni, nj = i + di, j + dj
        if 0 <= ni < spec.width and 0 <= nj < spec.height:
            return spec.index(ni, nj)
        return s

    rows = []
    for s in range(len(states)):
        row = []
        for a in range(len(ACTIONS)):
            dist: dict[int, Fraction] = {}
            if a == STAY:
                dist[s] = Fraction(1)
            else:
                branches = [
                    (target(s, a), spec.p_intended),
                    (target(s, (a - 1) % 8), spec.p_side),
                    (target(s, (a + 1) % 8), spec.p_side),
                    (s, residual),
                ]
                for nxt, p in branches:
                    dist[nxt] = dist.get(nxt, Fraction(0)) + p
            row.append(dist)
        rows.append(row)
    return Mdp(states, ACTIONS, rows)
