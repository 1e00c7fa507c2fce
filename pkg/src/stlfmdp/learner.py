"""Tabular Q-learning over hashable state keys."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Hashable

from .errors import ConfigError
from .grid import rng_stream

__all__ = [
    "LearnConfig",
    "QTable",
    "Policy",
    "TrainingTrace",
    "q_update",
    "greedy_policy",
    "train",
    "argmax",
    "QTABLE_FORMAT",
    "save_qtable",
    "load_qtable",
]

QTABLE_FORMAT = ("stlfmdp-qtable", 1)


def argmax(row) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    best = 0
    for i in range(1, len(row)):
        if row[i] > row[best]:
            best = i
    return best


class QTable:
    """Action values keyed by state; unseen keys read as ``default``."""

    def __init__(self, n_actions: int, default: float = 0.0):
        self.n_actions = n_actions
        self.default = default
        self.values: dict[Hashable, list[float]] = {}

    def row(self, key) -> list[float]:
        r = self.values.get(key)
        if r is None:
            r = self.values[key] = [self.default] * self.n_actions
        return r

    def get(self, key, a: int) -> float:
        r = self.values.get(key)
        return self.default if r is None else r[a]

    def max_value(self, key) -> float:
        r = self.values.get(key)
        return self.default if r is None else max(r)

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, key) -> bool:
        return key in self.values

    def entries(self) -> int:
        return len(self.values) * self.n_actions


def q_update(q: QTable, key, a: int, r: float, next_key, alpha: float, gamma: float,
             terminal: bool = False) -> QTable:
    """``Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_b Q(s',b))``.

    With ``terminal`` the continuation term is dropped.
    """
    target = r if terminal else r + gamma * q.max_value(next_key)
    row = q.row(key)
    row[a] = (1.0 - alpha) * row[a] + alpha * target
    return q


class Policy:
    """Greedy action per key, falling back to ``default_action``.

    ``fallbacks`` counts lookups of keys the table never saw.
    """

    def __init__(self, actions: dict, default_action: int):
        self.actions = actions
        self.default_action = default_action
        self.fallbacks = 0

    def __call__(self, key) -> int:
        a = self.actions.get(key)
        if a is None:
            self.fallbacks += 1
            return self.default_action
        return a

    def __len__(self) -> int:
        return len(self.actions)


def greedy_policy(q: QTable, default_action: int = 0) -> Policy:
    return Policy({k: argmax(r) for k, r in q.values.items()}, default_action)


@dataclass
class LearnConfig:
    """Learner hyperparameters.

    ``alpha_mode="episode"`` uses ``alpha_decay ** k`` for episode ``k``
    (counted from 1); ``"visit"`` uses ``1 / n`` where ``n`` counts the
    updates of the same state-action pair so far.  Both are floored at
    ``alpha_floor``.  ``explore_starts`` is the fraction of training
    episodes that begin in a uniformly drawn state instead of the start.  Exploration is epsilon-greedy with epsilon
    falling linearly from ``eps_start`` to ``eps_end`` over the first
    ``eps_decay_frac`` of the episodes.  ``bootstrap_at_end`` keeps the
    continuation term at the last step (truncation instead of termination).
    """

    episodes: int = 2000
    beta: float = 50.0
    gamma: float = 0.9999
    alpha_decay: float = 0.95
    alpha_floor: float = 0.05
    alpha_mode: str = "episode"
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.8
    bootstrap_at_end: bool = False
    q_init: float = 0.0
    explore_starts: float = 0.5
    seed: int = 0

    def validate(self) -> "LearnConfig":
        if self.episodes < 0:
            raise ConfigError("episodes must be non-negative")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0 < self.alpha_decay <= 1 or not 0 < self.alpha_floor <= 1:
            raise ConfigError("alpha_decay and alpha_floor must lie in (0, 1]")
        if self.alpha_mode not in ("episode", "visit"):
            raise ConfigError(f"unknown alpha_mode {self.alpha_mode!r}")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ConfigError("exploration rates must lie in [0, 1]")
        if not 0 < self.eps_decay_frac <= 1:
            raise ConfigError("eps_decay_frac must lie in (0, 1]")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not 0 <= self.explore_starts <= 1:
            raise ConfigError("explore_starts must lie in [0, 1]")
        return self

    def epsilon(self, k: int) -> float:
        span = self.eps_decay_frac * self.episodes
        if span <= 0 or k >= span:
            return self.eps_end
        return self.eps_start + (self.eps_end - self.eps_start) * k / span

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainingTrace:
    returns: list[float] = field(default_factory=list)


def train(env, cfg: LearnConfig):
    """Run ``cfg.episodes`` episodes of epsilon-greedy Q-learning on ``env``.

    Returns ``(QTable, Policy, TrainingTrace)``.  Episode ``k`` draws all of
    its randomness from ``rng_stream(cfg.seed, k)``.
    """
    cfg.validate()
    q = QTable(env.n_actions, cfg.q_init)
    trace = TrainingTrace()
    n_actions = env.n_actions
    visits: dict = {}
    by_visit = cfg.alpha_mode == "visit"
    decay, floor, gamma = cfg.alpha_decay, cfg.alpha_floor, cfg.gamma
    for k in range(cfg.episodes):
        rng = rng_stream(cfg.seed, k)
        eps = cfg.epsilon(k)
        alpha_ep = max(decay ** (k + 1), floor)
        if cfg.explore_starts and rng.random() < cfg.explore_starts:
            key = env.reset(rng, start=int(rng.integers(env.mdp.n_states)))
        else:
            key = env.reset(rng)
        total = 0.0
        done = env.done
        while not done:
            if rng.random() < eps:
                a = int(rng.integers(n_actions))
            else:
                r = q.values.get(key)
                a = argmax(r) if r is not None else 0
            nxt, reward, done = env.step(a, rng)
            if by_visit:
                n = visits.get((key, a), 0)
                visits[(key, a)] = n + 1
                alpha = max(1.0 / (n + 1), floor)
            else:
                alpha = alpha_ep
            q_update(q, key, a, reward, nxt, alpha, gamma,
                     terminal=done and not cfg.bootstrap_at_end)
            total += reward
            key = nxt
        trace.returns.append(total)
    return q, greedy_policy(q, env.default_action), trace


def save_qtable(q: QTable, path, header: dict) -> None:
    """Write ``q`` as JSON with a format tag, a version and ``header``.

    Keys must be tuples of ints (both backends produce those).  Entries are
    sorted so the file is a function of the table's contents only.
    """
    doc = {
        "format": QTABLE_FORMAT[0],
        "version": QTABLE_FORMAT[1],
        "header": header,
        "n_actions": q.n_actions,
        "default": q.default,
        "entries": [[list(k), v] for k, v in sorted(q.values.items())],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_qtable(path) -> tuple[QTable, dict]:
    """Read a file written by :func:`save_qtable`; returns ``(table, header)``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a Q-table file ({exc})") from None
    if (doc.get("format"), doc.get("version")) != QTABLE_FORMAT:
        raise ConfigError(
            f"{path}: expected {QTABLE_FORMAT[0]} v{QTABLE_FORMAT[1]}, "
            f"got {doc.get('format')} v{doc.get('version')}"
        )
    q = QTable(int(doc["n_actions"]), float(doc["default"]))
    for key, row in doc["entries"]:
        if len(row) != q.n_actions:
            raise ConfigError(f"{path}: row for {key} has {len(row)} actions")
        q.values[tuple(key)] = [float(v) for v in row]
    return q, doc["header"]
