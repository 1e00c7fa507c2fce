"""Acceptance criteria, one test each, one PASS/FAIL line each.

Run on its own with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.  The case-study criteria train the
learner many times over and take several minutes in total.
"""

from __future__ import annotations

import statistics
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import lse_bound_violations, window_equivalence  # noqa: E402
from tiny_instances import decision_horizon, make_instances, prefix_state  # noqa: E402

from stlfmdp.envs import FMdpEnv  # noqa: E402
from stlfmdp.errors import ResourceCapError  # noqa: E402
from stlfmdp.evaluator import expectimax_value, sandwich_check, value_iteration  # noqa: E402
from stlfmdp.experiments import build_env, preset, run_case_study, sweep  # noqa: E402
from stlfmdp.flags import FlagSchema  # noqa: E402
from stlfmdp.learner import LearnConfig, train  # noqa: E402
from stlfmdp.stl import parse_stl  # noqa: E402
from stlfmdp.tau import enumerate_tau_states  # noqa: E402

TINY_COUNT = 6
TINY_GAMMA = 0.8
TINY_LEARNER = dict(episodes=10000, gamma=TINY_GAMMA, eps_start=1.0, eps_end=1.0,
                    bootstrap_at_end=True, explore_starts=1.0, alpha_mode="visit",
                    alpha_floor=1e-3, seed=1)
SEEDS = range(5)


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{name}] {detail}"
    capman = _capture_manager()
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    else:
        print(line, flush=True)
    assert ok, line


_CONFIG = None


def _capture_manager():
    return None if _CONFIG is None else _CONFIG.pluginmanager.getplugin("capturemanager")


@pytest.fixture(autouse=True, scope="module")
def _grab_config(pytestconfig):
    global _CONFIG
    _CONFIG = pytestconfig
    yield
    _CONFIG = None


@pytest.fixture(scope="module")
def tiny():
    return make_instances(TINY_COUNT, gamma=TINY_GAMMA)


def test_state_space_sizes():
    t0 = time.perf_counter()
    cs1 = FlagSchema(parse_stl(preset("cs1").formula)).state_count(36)
    cs2 = [build_env(preset(f"cs2-h{h}")).state_count() for h in (2, 4, 5)]
    dt = time.perf_counter() - t0
    ok = cs1 == 72 and cs2 == [324, 900, 1296]
    report("state-space sizes", ok, f"cs1={cs1}, cs2(h=2,4,5)={cs2}, {dt:.3f}s")


def test_window_equivalence():
    t0 = time.perf_counter()
    checked = bad = 0
    for tau in (2, 3, 4):
        for op in ("F", "G"):
            c, b = window_equivalence(tau, op, 8)
            checked, bad = checked + c, bad + b
    dt = time.perf_counter() - t0
    ok = bad == 0 and checked > 0 and dt < 1.0
    report("window equivalence", ok, f"{checked} comparisons, {bad} mismatches, {dt:.2f}s (< 1 s)")


def test_log_sum_exp_bounds():
    t0 = time.perf_counter()
    bad = lse_bound_violations(100_000, seed=2024)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 5.0
    report("log-sum-exp bounds", ok, f"1e5 draws, {bad} violations, {dt:.2f}s (< 5 s)")


def test_tiny_instance_optimality(tiny):
    t0 = time.perf_counter()
    mismatches, worst = 0, 0.0
    sizes = []
    for inst in tiny:
        sizes.append(inst.model.n_states)
        env = FMdpEnv(inst.mdp, inst.formula, inst.start)
        _, pol, _ = train(env, LearnConfig(**TINY_LEARNER))
        vi = value_iteration(inst.model, TINY_GAMMA)
        for key, a in pol.actions.items():
            mismatches += a != vi.policy[inst.model.index[(key[0], key[1:])]]
        x0, H = prefix_state(inst), decision_horizon(inst)
        for g in (1.0, TINY_GAMMA):
            v = value_iteration(inst.model, g, horizon=H).values[0, x0]
            worst = max(worst, abs(v - expectimax_value(inst.model, x0, H, g)))
    dt = time.perf_counter() - t0
    ok = (len(tiny) >= 5 and max(sizes) <= 12 and mismatches == 0 and worst <= 1e-9
          and dt < 60)
    report("tiny-instance optimality", ok,
           f"{len(tiny)} instances (|S^F| {min(sizes)}..{max(sizes)}), policy mismatches "
           f"{mismatches}, max |VI - enumeration| {worst:.1e}, {dt:.1f}s (< 60 s)")


def test_sandwich(tiny):
    t0 = time.perf_counter()
    details, ok = [], True
    for inst in tiny:
        rep = sandwich_check(inst.model, prefix_state(inst), decision_horizon(inst), 50.0)
        ok &= rep.holds
        details.append(f"{rep.pr_surrogate:.4f}/{rep.pr_best:.4f}")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    report("surrogate sandwich", ok,
           f"Pr(surrogate opt)/Pr(opt) = {', '.join(details)}; gap ln(n)/50; {dt:.1f}s")


def test_case_study_one():
    t0 = time.perf_counter()
    cfg = preset("cs1")
    ps = [run_case_study(cfg, seed, keep=False).stats.estimate for seed in SEEDS]
    hits = sum(p >= 0.95 for p in ps)
    ok = hits >= 4
    report("case study 1", ok,
           f"p_hat per seed {[round(p, 3) for p in ps]}, {hits}/5 >= 0.95 "
           f"({time.perf_counter() - t0:.0f}s)")


def test_case_study_two_trend():
    t0 = time.perf_counter()
    mean = {}
    for h in (2, 4, 5):
        cfg = preset(f"cs2-h{h}")
        mean[h] = statistics.fmean(
            run_case_study(cfg, seed, keep=False).stats.estimate for seed in SEEDS)
    ok = mean[2] < mean[4] <= mean[5] + 0.05 and mean[5] >= 0.70
    report("case study 2 trend", ok,
           f"mean p_hat h=2 {mean[2]:.4f}, h=4 {mean[4]:.4f}, h=5 {mean[5]:.4f} "
           f"({time.perf_counter() - t0:.0f}s)")


def test_baseline_comparison():
    t0 = time.perf_counter()
    rows = sweep(preset("cs2-h2"), range(25), backends=["fmdp", "taumdp"])
    med = {b: statistics.median(float(r["p_hat"]) for r in rows if r["backend"] == b)
           for b in ("fmdp", "taumdp")}
    try:
        enumerate_tau_states(build_env(preset("cs2-h2")).mdp, 6)
        capped = False
    except ResourceCapError:
        capped = True
    try:
        build_env(preset("cs2-h5", ["experiment.backend=taumdp"]))
        env_capped = False
    except ResourceCapError:
        env_capped = True
    ok = med["fmdp"] >= med["taumdp"] and capped and env_capped
    report("baseline comparison", ok,
           f"25 seeds at 10000 episodes: median p_hat F-MDP {med['fmdp']:.4f} >= "
           f"tau-MDP {med['taumdp']:.4f}; tau=6 cap error raised: {capped and env_capped} "
           f"({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
