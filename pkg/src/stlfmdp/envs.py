"""Episodic steppers over the flag-augmented and the window state spaces.

Both expose the same small interface to the learner: ``reset(rng)``
returns the first decision state's key, ``step(a, rng)`` returns
``(key, reward, done)``.  The learner never sees the transition function.

An episode spans ``t = 0..T`` with ``T`` the outer horizon in steps.  The
first ``tau`` states ``sigma_0..sigma_{tau-1}`` are the prefix:

* ``prefix="stay"``: the prefix is ``tau`` copies of the start state and the
  first decision is taken at ``t = tau - 1``.
* ``prefix="policy"``: the agent acts from ``t = 0``.

Rewards are paid on arrival and only for states at ``t >= tau - 1``, so an
episode's return is the objective summand over ``t in [tau-1, T]`` (minus
the state at ``tau - 1`` when it is fixed by a ``stay`` prefix).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .flags import FlagSchema, reward_value, sat_from_bits, update_from_bits
from .grid import STAY, Mdp, step
from .stl import Temporal, Trajectory, eval_bool, max_signal_index
from .tau import DEFAULT_STATE_CAP, check_tau_cap

__all__ = ["PREFIX_MODES", "SpecEnv", "FMdpEnv", "TauMdpEnv", "make_env"]

PREFIX_MODES = ("stay", "policy")


class SpecEnv:
    """Shared episode bookkeeping; subclasses define the learner's key."""

    def __init__(
        self,
        mdp: Mdp,
        formula: Temporal,
        start: int,
        dt: float = 1.0,
        beta: float = 50.0,
        prefix: str = "stay",
    ):
        if prefix not in PREFIX_MODES:
            raise ConfigError(f"prefix must be one of {PREFIX_MODES}, got {prefix!r}")
        if not 0 <= start < mdp.n_states:
            raise ConfigError(f"start state {start} outside the MDP")
        if beta <= 0:
            raise ConfigError("beta must be positive")
        if max_signal_index(formula) >= mdp.states.shape[1]:
            raise ConfigError("formula refers to a signal the MDP states do not have")
        self.mdp = mdp
        self.formula = formula
        self.schema = FlagSchema(formula, dt)
        self.dt = dt
        self.beta = beta
        self.start = start
        self.prefix = prefix
        self.tau = self.schema.tau
        self.T = self.schema.T
        if self.T < self.tau - 1:
            raise ConfigError("outer horizon shorter than the sub-formula windows")
        self.n_actions = mdp.n_actions
        self.default_action = STAY if mdp.n_actions > STAY else 0
        self._bits = self.schema.verdict_table(mdp.states)
        self.t = 0
        self.path: list[int] = []

    # -- episode control ----------------------------------------------------
    def reset(self, rng: np.random.Generator | None = None, start: int | None = None):
        s0 = self.start if start is None else start
        self.path = [s0]
        self._begin()
        if self.prefix == "stay":
            for _ in range(self.tau - 1):
                self._advance(s0)
        self.t = len(self.path) - 1
        return self.key

    def step(self, a: int, rng: np.random.Generator):
        nxt = step(self.mdp, self.path[-1], a, rng)
        self._advance(nxt)
        self.t += 1
        r = self.current_reward() if self.t >= self.tau - 1 else 0.0
        return self.key, r, self.t >= self.T

    @property
    def done(self) -> bool:
        return self.t >= self.T

    def trajectory(self) -> Trajectory:
        return Trajectory(self.mdp.states[self.path], self.dt)

    def current_reward(self) -> float:
        return reward_value(self.current_sat(), self.formula.op, self.beta)

    # -- subclass hooks -----------------------------------------------------
    def _begin(self) -> None:
        raise NotImplementedError

    def _advance(self, nxt: int) -> None:
        raise NotImplementedError

    @property
    def key(self):
        raise NotImplementedError

    def current_sat(self) -> int:
        raise NotImplementedError


class FMdpEnv(SpecEnv):
    """Key ``(sigma, k_1, ..., k_n)``: state index plus flag numerators."""

    backend = "fmdp"

    def _begin(self) -> None:
        self.flags = self.schema.zero()

    def _advance(self, nxt: int) -> None:
        self.flags = update_from_bits(self.flags, self._bits[self.path[-1]], self.schema)
        self.path.append(nxt)

    @property
    def key(self):
        return (self.path[-1],) + self.flags

    def current_sat(self) -> int:
        return sat_from_bits(self.flags, self._bits[self.path[-1]], self.schema)

    def state_count(self) -> int:
        return self.schema.state_count(self.mdp.n_states)


class TauMdpEnv(SpecEnv):
    """Key: the last ``tau`` state indices (fewer before ``t = tau - 1``)."""

    backend = "taumdp"

    def __init__(self, *args, state_cap: int = DEFAULT_STATE_CAP, **kwargs):
        super().__init__(*args, **kwargs)
        self._n_windows = check_tau_cap(self.mdp, self.tau, state_cap)
        self._reward_cache: dict[tuple, int] = {}

    def _begin(self) -> None:
        pass

    def _advance(self, nxt: int) -> None:
        self.path.append(nxt)

    @property
    def key(self):
        return tuple(self.path[-self.tau:])

    def current_sat(self) -> int:
        window = self.key
        if len(window) < self.tau:
            raise ValueError("window not yet full")
        v = self._reward_cache.get(window)
        if v is None:
            traj = Trajectory(self.mdp.states[list(window)], self.dt)
            v = eval_bool(self.formula.child, traj, 0)
            self._reward_cache[window] = v
        return v

    def state_count(self) -> int:
        return self._n_windows


def make_env(backend: str, *args, state_cap: int = DEFAULT_STATE_CAP, **kwargs) -> SpecEnv:
    """``backend`` is ``"fmdp"`` or ``"taumdp"``; ``state_cap`` binds the latter."""
    if backend == "fmdp":
        return FMdpEnv(*args, **kwargs)
    if backend == "taumdp":
        return TauMdpEnv(*args, state_cap=state_cap, **kwargs)
    raise ConfigError(f"unknown backend {backend!r}")
