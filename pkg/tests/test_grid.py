from fractions import Fraction

import numpy as np
import pytest

from stlfmdp.grid import ACTIONS, STAY, GridSpec, Mdp, build_grid, rng_stream, step, transition_row

N, NW, W, SW, S, SE, E, NE = range(8)


@pytest.fixture(scope="module")
def grid6():
    return GridSpec(6, 6), build_grid(GridSpec(6, 6))


def test_sizes(grid6):
    spec, mdp = grid6
    assert mdp.n_states == 36 and mdp.n_actions == 9
    assert ACTIONS[STAY] == "stay"
    assert tuple(mdp.states[spec.index(2, 3)]) == (2.5, 3.5)


def test_one_cell_grid_self_loops():
    mdp = build_grid(GridSpec(1, 1))
    for a in range(9):
        assert transition_row(mdp, 0, a) == {0: 1}
        assert step(mdp, 0, a, rng_stream(0)) == 0


def test_interior_north_row(grid6):
    spec, mdp = grid6
    s = spec.index(2, 2)
    row = transition_row(mdp, s, N)
    assert row == {
        spec.index(2, 3): Fraction("0.93"),
        spec.index(1, 3): Fraction("0.023"),
        spec.index(3, 3): Fraction("0.023"),
        s: Fraction("0.024"),
    }


def test_every_row_sums_to_one_exactly(grid6):
    _, mdp = grid6
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            assert sum(transition_row(mdp, s, a).values()) == 1


def test_stay_is_noise_free(grid6):
    _, mdp = grid6
    for s in range(mdp.n_states):
        assert transition_row(mdp, s, STAY) == {s: 1}


def test_corner_folds_off_grid_mass_into_stay(grid6):
    spec, mdp = grid6
    corner = spec.index(0, 0)
    # every branch of SW, S and W leaves the grid
    for a in (SW, S, W):
        assert transition_row(mdp, corner, a) == {corner: 1}
    # N keeps N and NE; the NW branch folds into stay
    assert transition_row(mdp, corner, N) == {
        spec.index(0, 1): Fraction("0.93"),
        spec.index(1, 1): Fraction("0.023"),
        corner: Fraction("0.047"),
    }


def test_boundary_mass_conservation(grid6):
    spec, mdp = grid6
    moves = {N: (0, 1), NW: (-1, 1), W: (-1, 0), SW: (-1, -1),
             S: (0, -1), SE: (1, -1), E: (1, 0), NE: (1, 1)}
    for s in range(mdp.n_states):
        i, j = spec.cell(s)
        for a in range(8):
            branches = [(a, spec.p_intended), ((a - 1) % 8, spec.p_side), ((a + 1) % 8, spec.p_side)]
            off = sum(p for m, p in branches
                      if not (0 <= i + moves[m][0] < 6 and 0 <= j + moves[m][1] < 6))
            residual = 1 - spec.p_intended - 2 * spec.p_side
            assert transition_row(mdp, s, a).get(s, 0) == residual + off


def test_intended_frequency(grid6):
    spec, mdp = grid6
    s, rng = spec.index(2, 2), rng_stream(5)
    draws = [step(mdp, s, N, rng) for _ in range(100_000)]
    freq = np.mean(np.array(draws) == spec.index(2, 3))
    assert abs(freq - 0.93) < 0.01


def test_boundary_stay_frequency_matches_row(grid6):
    spec, mdp = grid6
    s, rng = spec.index(0, 3), rng_stream(6)
    row = transition_row(mdp, s, SW)
    draws = np.array([step(mdp, s, SW, rng) for _ in range(100_000)])
    for succ, p in row.items():
        p = float(p)
        sd = np.sqrt(p * (1 - p) / len(draws))
        assert abs(np.mean(draws == succ) - p) <= 3 * sd + 1e-12


def test_same_seed_same_path(grid6):
    _, mdp = grid6

    def path(seed):
        rng, s, out = rng_stream(seed), 7, []
        for t in range(200):
            s = step(mdp, s, t % 9, rng)
            out.append(s)
        return out

    assert path(11) == path(11)
    assert path(11) != path(12)


def test_streams_are_keyed():
    a = rng_stream(1, 2).random(4)
    assert np.array_equal(a, rng_stream(1, 2).random(4))
    assert not np.array_equal(a, rng_stream(1, 3).random(4))


def test_locate(grid6):
    spec, _ = grid6
    assert spec.locate((1.5, 1.5)) == 7
    with pytest.raises(ValueError):
        spec.locate((6.0, 0.5))


def test_mdp_rejects_bad_rows():
    with pytest.raises(ValueError):
        Mdp(np.zeros((1, 1)), ["a"], [[{0: 0.5}]])


def test_noise_settings_validated():
    with pytest.raises(ValueError):
        GridSpec(2, 2, p_intended=Fraction(9, 10), p_side=Fraction(1, 10))
