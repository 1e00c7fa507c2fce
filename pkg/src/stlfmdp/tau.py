"""Window-state baseline: the learner's state is the last ``tau`` states."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ResourceCapError
from .flags import reward_value
from .grid import Mdp, step
from .stl import Temporal, Trajectory, eval_bool

__all__ = [
    "DEFAULT_STATE_CAP",
    "count_tau_states",
    "check_tau_cap",
    "enumerate_tau_states",
    "tau_reward",
    "tau_step",
]

# Between the pruned window counts for tau=5 (115,600) and tau=6 (902,500)
# on the 6x6 grid.
DEFAULT_STATE_CAP = 500_000

TauState = tuple  # state indices, oldest first


def _feasibility(mdp: Mdp) -> np.ndarray:
    adj = np.zeros((mdp.n_states, mdp.n_states), dtype=object)
    for s in range(mdp.n_states):
        for nxt in mdp.successors(s):
            adj[s, nxt] = 1
    return adj


def count_tau_states(mdp: Mdp, tau: int) -> int:
    """Number of feasible windows of length ``tau`` (exact integer)."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    adj = _feasibility(mdp)
    paths = np.ones(mdp.n_states, dtype=object)
    for _ in range(tau - 1):
        paths = paths @ adj
    return int(sum(paths))


def check_tau_cap(mdp: Mdp, tau: int, cap: int = DEFAULT_STATE_CAP) -> int:
    """Pruned window count, or :class:`ResourceCapError` when above ``cap``."""
    n = count_tau_states(mdp, tau)
    if n > cap:
        raise ResourceCapError(
            f"tau-MDP with tau={tau} has {n} pruned states, above the cap of {cap}"
        )
    return n


def enumerate_tau_states(mdp: Mdp, tau: int, cap: int = DEFAULT_STATE_CAP) -> list[TauState]:
    """All windows whose consecutive pairs are one-step feasible.

    The count is computed before anything is materialised; more than
    ``cap`` windows raises :class:`ResourceCapError`.
    """
    check_tau_cap(mdp, tau, cap)
    succ = [sorted(mdp.successors(s)) for s in range(mdp.n_states)]
    windows: list[TauState] = [(s,) for s in range(mdp.n_states)]
    for _ in range(tau - 1):
        windows = [w + (nxt,) for w in windows for nxt in succ[w[-1]]]
    return windows


def tau_reward(
    window: Sequence, formula: Temporal, beta: float, dt: float = 1.0
) -> float:
    """Reward of a window of state vectors.

    The inner formula is judged at the first sample of the window, with the
    same outer-operator branches (and F-branch scaling) as the flag reward.
    """
    verdict = eval_bool(formula.child, Trajectory(np.asarray(window, dtype=float), dt), 0)
    return reward_value(verdict, formula.op, beta)


def tau_step(window: TauState, a: int, rng: np.random.Generator, mdp: Mdp) -> TauState:
    """Shift the window by one and append the sampled successor."""
    nxt = step(mdp, window[-1], a, rng)
    return window[1:] + (nxt,)
