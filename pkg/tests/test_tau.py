import itertools

import numpy as np
import pytest

from stlfmdp.envs import FMdpEnv, TauMdpEnv, make_env
from stlfmdp.errors import ConfigError, ResourceCapError
from stlfmdp.flags import FlagSchema, reward_value, sat_from_bits, update_from_bits
from stlfmdp.grid import GridSpec, build_grid, rng_stream
from stlfmdp.stl import parse_stl
from stlfmdp.tau import (
    DEFAULT_STATE_CAP,
    check_tau_cap,
    count_tau_states,
    enumerate_tau_states,
    tau_reward,
    tau_step,
)

CS2 = "G[0,12](F[0,{h}](x>1 & x<2 & y>3 & y<4) & F[0,{h}](x>2 & x<3 & y>2 & y<3))"


@pytest.fixture(scope="module")
def grid3():
    return build_grid(GridSpec(3, 3))


@pytest.fixture(scope="module")
def grid6():
    return build_grid(GridSpec(6, 6))


def brute_count(mdp, tau):
    return sum(
        all(b in mdp.successors(a) for a, b in zip(w, w[1:]))
        for w in itertools.product(range(mdp.n_states), repeat=tau)
    )


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_count_matches_brute_force(grid3, tau):
    assert count_tau_states(grid3, tau) == brute_count(grid3, tau)
    assert len(enumerate_tau_states(grid3, tau)) == count_tau_states(grid3, tau)


def test_pruned_counts_on_six_by_six(grid6):
    # windows of length 1..6; unpruned would be 36**tau
    assert [count_tau_states(grid6, t) for t in range(1, 7)] == [
        36, 256, 1936, 14884, 115600, 902500]


def test_cap_is_enforced_before_enumeration(grid6):
    assert check_tau_cap(grid6, 5) == 115600
    with pytest.raises(ResourceCapError):
        enumerate_tau_states(grid6, 6)
    with pytest.raises(ResourceCapError):
        TauMdpEnv(grid6, parse_stl(CS2.format(h=5)), 7, prefix="policy")
    assert DEFAULT_STATE_CAP < 902500


def test_window_reward_equals_flag_reward(grid3):
    """All feasible 3-windows on a 3x3 grid, both outer operators."""
    for outer in ("G", "F"):
        phi = parse_stl(f"{outer}[0,4](F[0,2](x>1 & x<2) & G[0,2](y<2))")
        sch = FlagSchema(phi)
        bits = sch.verdict_table(grid3.states)
        for w in enumerate_tau_states(grid3, 3):
            flags = sch.zero()
            for s in w[:-1]:
                flags = update_from_bits(flags, bits[s], sch)
            via_flags = reward_value(sat_from_bits(flags, bits[w[-1]], sch), outer, 50.0)
            assert tau_reward(grid3.states[list(w)], phi, 50.0) == via_flags


def test_tau_step_shifts(grid3):
    w = tau_step((0, 1, 2), 8, rng_stream(0), grid3)
    assert w == (1, 2, 2)


def test_fmdp_and_taumdp_see_the_same_episode(grid6):
    phi = parse_stl(CS2.format(h=2))
    a = FMdpEnv(grid6, phi, 7, prefix="policy")
    b = TauMdpEnv(grid6, phi, 7, prefix="policy")
    for ep in range(30):
        ra, rb = rng_stream(3, ep), rng_stream(3, ep)
        a.reset(ra), b.reset(rb)
        acts = rng_stream(4, ep)
        while not a.done:
            act = int(acts.integers(9))
            ka, xa, da = a.step(act, ra)
            kb, xb, db = b.step(act, rb)
            assert (xa, da) == (xb, db)
            assert ka[0] == kb[-1]
        assert a.path == b.path and b.done


def test_prefix_modes(grid6):
    phi = parse_stl(CS2.format(h=2))
    stay = FMdpEnv(grid6, phi, 7, prefix="stay")
    stay.reset(rng_stream(0))
    assert stay.path == [7, 7, 7] and stay.t == 2
    pol = FMdpEnv(grid6, phi, 7, prefix="policy")
    pol.reset(rng_stream(0))
    assert pol.path == [7] and pol.t == 0
    _, r, _ = pol.step(8, rng_stream(0))
    assert r == 0.0  # no reward before the first full window
    n = 1
    while not pol.done:
        pol.step(8, rng_stream(0))
        n += 1
    assert n == 14 and len(pol.trajectory()) == 15


def test_state_counts_reported(grid6):
    phi = parse_stl(CS2.format(h=2))
    assert make_env("fmdp", grid6, phi, 7).state_count() == 324
    assert make_env("taumdp", grid6, phi, 7).state_count() == 1936


def test_env_validation(grid6):
    phi = parse_stl(CS2.format(h=2))
    with pytest.raises(ConfigError):
        make_env("lstm", grid6, phi, 7)
    with pytest.raises(ConfigError):
        FMdpEnv(grid6, phi, 99)
    with pytest.raises(ConfigError):
        FMdpEnv(grid6, phi, 7, prefix="random")
    with pytest.raises(ConfigError):
        FMdpEnv(grid6, parse_stl("F[0,3](G[0,1](s2>0))"), 7)
