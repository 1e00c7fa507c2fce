"""Ground truth: Monte-Carlo satisfaction, exact models and bounds.

Satisfaction estimates judge each rolled-out trajectory with
:func:`stlfmdp.stl.eval_bool`; flags are never consulted, so the estimate
is independent of the construction the policy was trained on.

The explicit models here enumerate the full flag-augmented state space of
small MDPs.  Time is measured in decision steps from the first decision
state ``x0``; ``reward_from`` is the first step whose state earns reward
(and whose verdict counts toward satisfaction).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ResourceCapError
from .flags import FlagSchema, reward_value, sat_from_bits, update_from_bits
from .grid import Mdp, rng_stream
from .learner import Policy, argmax
from .stl import eval_bool

__all__ = [
    "RolloutStats",
    "BoundReport",
    "ExplicitFMdp",
    "ValueResult",
    "SandwichReport",
    "binomial_interval",
    "rollout",
    "estimate_satisfaction",
    "build_explicit_fmdp",
    "value_iteration",
    "expectimax_value",
    "open_loop_value",
    "chain_scores",
    "sandwich_check",
    "theorem_gap",
    "log_sum_exp_max",
    "log_sum_exp_min",
]


# ---------------------------------------------------------------------------
# Log-sum-exp


def log_sum_exp_max(values: Sequence[float], beta: float) -> float:
    """Smooth maximum ``(1/beta) log sum exp(beta x)``; never below ``max``."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("log_sum_exp_max of an empty sequence")
    if beta <= 0:
        raise ValueError("beta must be positive")
    m = x.max()
    return float(m + np.log(np.exp(beta * (x - m)).sum()) / beta)


def log_sum_exp_min(values: Sequence[float], beta: float) -> float:
    """Smooth minimum ``-(1/beta) log sum exp(-beta x)``; never above ``min``."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("log_sum_exp_min of an empty sequence")
    return -log_sum_exp_max(-x, beta)


# ---------------------------------------------------------------------------
# Monte Carlo


def binomial_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% interval for a binomial proportion.

    Normal approximation, except at 0 or ``n`` successes where the exact
    one-sided Clopper-Pearson bound is used.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if successes == 0:
        return 0.0, 1.0 - 0.025 ** (1.0 / n)
    if successes == n:
        return 0.025 ** (1.0 / n), 1.0
    p = successes / n
    half = z * math.sqrt(p * (1 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


@dataclass
class RolloutStats:
    trials: int
    successes: int
    interval: tuple[float, float]
    fallbacks: int = 0
    trajectories: list = field(default_factory=list, repr=False)
    verdicts: list = field(default_factory=list, repr=False)
    flag_verdicts: list = field(default_factory=list, repr=False)

    @property
    def estimate(self) -> float:
        return self.successes / self.trials


def rollout(policy, env, rng: np.random.Generator):
    """One episode under ``policy``; returns ``(trajectory, running sats)``.

    ``running sats`` holds the flag- or window-based verdict at every step
    from ``tau - 1`` on; it is diagnostic only.
    """
    key = env.reset(rng)
    sats = [env.current_sat()] if env.t >= env.tau - 1 else []
    while not env.done:
        key, _, _ = env.step(policy(key), rng)
        if env.t >= env.tau - 1:
            sats.append(env.current_sat())
    return env.trajectory(), sats


def estimate_satisfaction(policy, env, n: int, seed: int = 0, keep: bool = False) -> RolloutStats:
    """Fraction of ``n`` rollouts whose trajectory satisfies the formula."""
    if n < 1:
        raise ValueError("need at least one trial")
    before = getattr(policy, "fallbacks", 0)
    stats = RolloutStats(n, 0, (0.0, 1.0))
    for i in range(n):
        traj, sats = rollout(policy, env, rng_stream(seed, i))
        verdict = eval_bool(env.formula, traj, 0)
        stats.successes += verdict
        if keep:
            stats.trajectories.append(traj)
            stats.verdicts.append(verdict)
            overall = max(sats) if env.formula.op == "F" else min(sats)
            stats.flag_verdicts.append(overall)
    stats.interval = binomial_interval(stats.successes, n)
    stats.fallbacks = getattr(policy, "fallbacks", 0) - before
    return stats


class RandomPolicy:
    """Uniformly random actions, seeded independently of the rollout stream."""

    def __init__(self, n_actions: int, seed: int = 0):
        self.n_actions = n_actions
        self.rng = rng_stream(seed, 2**31 - 1)

    def __call__(self, key) -> int:
        return int(self.rng.integers(self.n_actions))


# ---------------------------------------------------------------------------
# Explicit flag-augmented models


@dataclass
class ExplicitFMdp:
    """Full ``Sigma x prod F_i`` product with per-action transition matrices."""

    schema: FlagSchema
    states: list  # (sigma, flags) tuples
    index: dict
    P: np.ndarray  # (|A|, |X|, |X|)
    sat: np.ndarray  # running verdict of each state
    reward: np.ndarray  # flag reward of each state

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return self.P.shape[0]

    def reachable(self, x0: int) -> list[int]:
        """States reachable from ``x0`` under some action sequence."""
        seen = {x0}
        frontier = [x0]
        while frontier:
            x = frontier.pop()
            for a in range(self.n_actions):
                for y in np.nonzero(self.P[a, x])[0]:
                    if int(y) not in seen:
                        seen.add(int(y))
                        frontier.append(int(y))
        return sorted(seen)


def build_explicit_fmdp(mdp: Mdp, schema: FlagSchema, beta: float = 50.0,
                        cap: int = 5000) -> ExplicitFMdp:
    """Tabulate the flag-augmented MDP of ``mdp``.

    ``P[a, (s, f), (s', f')] = P(s, a, s')`` when ``f'`` is ``f`` updated with
    the verdicts on ``s``, else 0.
    """
    size = schema.state_count(mdp.n_states)
    if size > cap:
        raise ResourceCapError(f"explicit model would have {size} states, cap is {cap}")
    bits = schema.verdict_table(mdp.states)
    states = [(s, f) for s in range(mdp.n_states) for f in schema.all_flags()]
    index = {x: i for i, x in enumerate(states)}
    P = np.zeros((mdp.n_actions, size, size))
    sats = np.zeros(size, dtype=int)
    rewards = np.zeros(size)
    for i, (s, f) in enumerate(states):
        nf = update_from_bits(f, bits[s], schema)
        for a in range(mdp.n_actions):
            for nxt, p in mdp.row(s, a).items():
                P[a, i, index[(nxt, nf)]] += float(p)
        sats[i] = sat_from_bits(f, bits[s], schema)
        rewards[i] = reward_value(int(sats[i]), schema.outer_op, beta)
    return ExplicitFMdp(schema, states, index, P, sats, rewards)


@dataclass
class ValueResult:
    values: np.ndarray  # (|X|,) stationary, or (H+1, |X|) per step
    q: np.ndarray  # (|A|, |X|) stationary, or (H, |A|, |X|)
    policy: np.ndarray  # (|X|,) stationary, or (H, |X|)


def _greedy(q: np.ndarray) -> np.ndarray:
    return np.array([argmax(q[:, x]) for x in range(q.shape[1])])


def value_iteration(model: ExplicitFMdp, gamma: float, horizon: int | None = None,
                    reward_from: int = 0, tol: float = 1e-13,
                    max_iter: int = 1_000_000) -> ValueResult:
    """Optimal values and greedy policy of ``model``.

    With ``horizon=None``: discounted infinite-horizon values, reward paid
    on arrival, iterated to a sup-norm change below ``tol``.  With an
    integer horizon ``H``: backward induction over decisions ``0..H-1``,
    where the arrival at step ``t+1`` pays reward iff ``t+1 >= reward_from``.
    Ties go to the lowest action index, as in the learner.
    """
    R = model.reward
    if horizon is None:
        V = np.zeros(model.n_states)
        for _ in range(max_iter):
            Q = model.P @ (R + gamma * V)
            nV = Q.max(axis=0)
            if np.max(np.abs(nV - V)) < tol:
                V = nV
                break
            V = nV
        Q = model.P @ (R + gamma * V)
        return ValueResult(V, Q, _greedy(Q))
    V = np.zeros((horizon + 1, model.n_states))
    Q = np.zeros((horizon, model.n_actions, model.n_states))
    pol = np.zeros((horizon, model.n_states), dtype=int)
    for t in range(horizon - 1, -1, -1):
        paid = R if t + 1 >= reward_from else 0.0
        Q[t] = model.P @ (paid + gamma * V[t + 1])
        V[t] = Q[t].max(axis=0)
        pol[t] = _greedy(Q[t])
    return ValueResult(V, Q, pol)


def expectimax_value(model: ExplicitFMdp, x0: int, horizon: int, gamma: float,
                     reward_from: int = 0) -> float:
    """Optimal expected return by exhaustive search of the outcome tree.

    Exponential in ``horizon``; an oracle for :func:`value_iteration`.
    """

    def search(x: int, t: int) -> float:
        if t == horizon:
            return 0.0
        best = -math.inf
        for a in range(model.n_actions):
            total = 0.0
            for y in np.nonzero(model.P[a, x])[0]:
                paid = model.reward[y] if t + 1 >= reward_from else 0.0
                total += model.P[a, x, y] * (paid + gamma * search(int(y), t + 1))
            best = max(best, total)
        return best

    return search(x0, 0)


def open_loop_value(model: ExplicitFMdp, x0: int, horizon: int, gamma: float,
                    reward_from: int = 0) -> float:
    """Best expected return over all fixed action sequences of length ``horizon``."""
    best = -math.inf
    start = np.zeros(model.n_states)
    start[x0] = 1.0
    for seq in itertools.product(range(model.n_actions), repeat=horizon):
        dist, total = start, 0.0
        for t, a in enumerate(seq):
            dist = dist @ model.P[a]
            if t + 1 >= reward_from:
                total += gamma**t * float(dist @ model.reward)
        best = max(best, total)
    return best


def chain_scores(model: ExplicitFMdp, policy: Sequence[int], x0: int, horizon: int,
                 verdict_from: int = 0) -> tuple[float, float]:
    """Exact ``(P[formula holds], E[sum of rewards])`` of a stationary policy.

    The verdict of each visited state at steps ``verdict_from..horizon`` is
    its running ``sat``; an outer F needs one 1, an outer G needs all 1s.
    The reward sum runs over the same steps, undiscounted.
    """
    n = model.n_states
    M = np.array([model.P[policy[x], x] for x in range(n)])
    outer_f = model.schema.outer_op == "F"
    # mass on (state, decided); decided = already satisfied (F) or already failed (G)
    open_ = np.zeros(n)
    open_[x0] = 1.0
    decided = np.zeros(n)
    expected = 0.0
    ok = model.sat.astype(bool)
    for t in range(horizon + 1):
        if t > 0:
            open_, decided = open_ @ M, decided @ M
        if t >= verdict_from:
            hit = ok if outer_f else ~ok
            decided = decided + open_ * hit
            open_ = open_ * ~hit
            expected += float((open_ + decided) @ model.reward)
    p_decided = float(decided.sum())
    return (p_decided if outer_f else 1.0 - p_decided), expected


@dataclass
class SandwichReport:
    beta: float
    horizon: int
    gap: float
    pr_best: float  # best satisfaction probability over stationary policies
    pr_surrogate: float  # worst satisfaction among surrogate-optimal policies
    pr_surrogate_best: float
    n_policies: int

    @property
    def holds(self) -> bool:
        eps = 1e-12
        return self.pr_best - self.gap - eps <= self.pr_surrogate <= self.pr_best + eps


def sandwich_check(model: ExplicitFMdp, x0: int, horizon: int, beta: float,
                   verdict_from: int = 0, max_policies: int = 200_000) -> SandwichReport:
    """Compare the probability optimum with the reward-sum optimum.

    Every deterministic stationary policy on the states reachable from
    ``x0`` is scored exactly with :func:`chain_scores`.
    """
    reach = model.reachable(x0)
    count = model.n_actions ** len(reach)
    if count > max_policies:
        raise ResourceCapError(f"{count} policies to enumerate, cap is {max_policies}")
    base = [0] * model.n_states
    scored = []
    for choice in itertools.product(range(model.n_actions), repeat=len(reach)):
        pol = list(base)
        for x, a in zip(reach, choice):
            pol[x] = a
        scored.append(chain_scores(model, pol, x0, horizon, verdict_from))
    probs = np.array([s[0] for s in scored])
    objs = np.array([s[1] for s in scored])
    best_obj = objs.max()
    tied = objs >= best_obj - 1e-12 * max(1.0, abs(best_obj))
    n_windows = horizon - verdict_from + 1
    return SandwichReport(
        beta=beta,
        horizon=horizon,
        gap=math.log(n_windows) / beta,
        pr_best=float(probs.max()),
        pr_surrogate=float(probs[tied].min()),
        pr_surrogate_best=float(probs[tied].max()),
        n_policies=count,
    )


# ---------------------------------------------------------------------------
# Bound


@dataclass(frozen=True)
class BoundReport:
    beta: float
    T: int
    tau: int

    @property
    def gap(self) -> float:
        return math.log(self.T - self.tau + 2) / self.beta


def theorem_gap(beta: float, T: int, tau: int) -> BoundReport:
    """Worst-case loss in satisfaction probability from the smooth surrogate."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if T < tau - 1:
        raise ValueError("need T >= tau - 1")
    return BoundReport(beta, T, tau)
