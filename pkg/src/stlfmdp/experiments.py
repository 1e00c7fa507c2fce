"""Experiment configuration, case-study presets and result files.

Configuration files are INI (``configparser``) with four sections::

    [experiment]
    name = cs1
    formula = F[0,6](G[0,1](x>4 & y>4))
    backend = fmdp          ; fmdp | taumdp
    prefix = stay           ; stay | policy
    start = 1.5, 1.5        ; a point inside the start cell
    dt = 1
    state_cap = 500000      ; pruned window cap for the taumdp backend

    [grid]
    width = 6
    height = 6
    p_intended = 0.93
    p_side = 0.023

    [learner]               ; any LearnConfig field
    episodes = 2000

    [eval]
    trials = 500
    seed = 1000             ; rollout i of the evaluation uses stream (seed, i)

Unknown keys are rejected.  The config hash is the first 16 hex digits of
the SHA-256 of the canonical INI text, so it does not depend on key order,
comments or formatting.

Result files (all CSV with a header row, every row carries ``config_hash``):

``metrics.csv``
    ``config_hash, name, backend, seed, episodes, trials, successes, p_hat,
    ci_low, ci_high, n_states, n_aug_states, q_entries, fallbacks,
    wall_time_s``.  ``n_aug_states`` is the flag-augmented count for
    ``fmdp`` and the pruned window count for ``taumdp``.  ``wall_time_s``
    is the only column that changes between identical runs.
``trajectories.csv``
    ``config_hash, trial, t, cell, x, y, verdict``: one row per visited
    state of every evaluation rollout.
``returns-per-episode.csv``
    ``config_hash, episode, return``.
``sweep.csv``
    ``config_hash, name, backend, seed, trials, successes, p_hat``: one row
    per (backend, seed), sorted.  Byte-identical for a fixed seed list.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .envs import PREFIX_MODES, SpecEnv, make_env
from .errors import ConfigError
from .evaluator import RolloutStats, estimate_satisfaction
from .grid import GridSpec, build_grid
from .learner import LearnConfig, Policy, QTable, greedy_policy, load_qtable, save_qtable, train
from .stl import (
    FragmentError,
    StlSyntaxError,
    Trajectory,
    eval_bool,
    horizon,
    max_signal_index,
    parse_stl,
    to_steps,
    to_text,
)
from .tau import DEFAULT_STATE_CAP

__all__ = [
    "OUTPUT_ROOT_ENV",
    "PRESETS",
    "ExperimentConfig",
    "RunResult",
    "output_root",
    "preset",
    "build_env",
    "run_training",
    "run_evaluation",
    "run_case_study",
    "evaluate_saved",
    "write_training",
    "compare",
    "sweep",
    "read_trace",
    "verify",
]

OUTPUT_ROOT_ENV = "STLFMDP_OUTPUT_ROOT"
BACKENDS = ("fmdp", "taumdp")

METRICS_FIELDS = [
    "config_hash", "name", "backend", "seed", "episodes", "trials", "successes",
    "p_hat", "ci_low", "ci_high", "n_states", "n_aug_states", "q_entries",
    "fallbacks", "wall_time_s",
]
SWEEP_FIELDS = ["config_hash", "name", "backend", "seed", "trials", "successes", "p_hat"]

_CS2_REGIONS = "F[0,{h}](x>1 & x<2 & y>3 & y<4) & F[0,{h}](x>2 & x<3 & y>2 & y<3)"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))


@dataclass
class ExperimentConfig:
    name: str = "custom"
    formula: str = "F[0,6](G[0,1](x>4 & y>4))"
    backend: str = "fmdp"
    prefix: str = "stay"
    start: tuple[float, float] = (1.5, 1.5)
    dt: float = 1.0
    state_cap: int = DEFAULT_STATE_CAP
    grid: GridSpec = field(default_factory=lambda: GridSpec(6, 6))
    learner: LearnConfig = field(default_factory=LearnConfig)
    trials: int = 500
    eval_seed: int = 1000

    # -- validation ---------------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        try:
            phi = parse_stl(self.formula)
        except (StlSyntaxError, FragmentError) as exc:
            raise ConfigError(f"formula: {exc}") from None
        if max_signal_index(phi) > 1:
            raise ConfigError("grid states have two signals (x, y)")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.prefix not in PREFIX_MODES:
            raise ConfigError(f"prefix must be one of {PREFIX_MODES}")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.state_cap < 1:
            raise ConfigError("state_cap must be positive")
        g = self.grid
        if g.width < 1 or g.height < 1:
            raise ConfigError("grid must be at least 1x1")
        if not (0 <= g.p_side and 0 <= g.p_intended and g.p_intended + 2 * g.p_side <= 1):
            raise ConfigError("need p_intended + 2 p_side <= 1 with both non-negative")
        x, y = self.start
        if not (0 <= x < g.width and 0 <= y < g.height):
            raise ConfigError(f"start {self.start} lies outside the {g.width}x{g.height} grid")
        self.learner.validate()
        return self

    @property
    def start_state(self) -> int:
        return self.grid.locate(self.start)

    # -- INI round trip -----------------------------------------------------
    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {
            "name": self.name,
            "formula": to_text(parse_stl(self.formula)),
            "backend": self.backend,
            "prefix": self.prefix,
            "start": f"{_num(self.start[0])}, {_num(self.start[1])}",
            "dt": _num(self.dt),
            "state_cap": str(self.state_cap),
        }
        cp["grid"] = {
            "width": str(self.grid.width),
            "height": str(self.grid.height),
            "p_intended": str(self.grid.p_intended),
            "p_side": str(self.grid.p_side),
        }
        cp["learner"] = {k: _num(v) for k, v in dataclasses.asdict(self.learner).items()}
        cp["eval"] = {"trials": str(self.trials), "seed": str(self.eval_seed)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from None
        unknown = set(cp.sections()) - {"experiment", "grid", "learner", "eval"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = cls()
        for section in cp.sections():
            for key, value in cp[section].items():
                cfg.set(f"{section}.{key}", value)
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_ini(text)

    def set(self, dotted: str, value: str) -> None:
        """Apply one ``section.key = value`` override from text."""
        section, _, key = dotted.partition(".")
        try:
            if section == "experiment" and key in ("name", "formula", "backend", "prefix"):
                setattr(self, key, value.strip())
            elif section == "experiment" and key == "start":
                parts = [float(p) for p in value.split(",")]
                if len(parts) != 2:
                    raise ConfigError("start needs two coordinates")
                self.start = (parts[0], parts[1])
            elif section == "experiment" and key == "dt":
                self.dt = float(value)
            elif section == "experiment" and key == "state_cap":
                self.state_cap = int(value)
            elif section == "grid" and key in ("width", "height"):
                self.grid = dataclasses.replace(self.grid, **{key: int(value)})
            elif section == "grid" and key in ("p_intended", "p_side"):
                self.grid = dataclasses.replace(self.grid, **{key: Fraction(value.strip())})
            elif section == "learner" and key in _LEARN_TYPES:
                setattr(self.learner, key, _LEARN_TYPES[key](value))
            elif section == "eval" and key == "trials":
                self.trials = int(value)
            elif section == "eval" and key == "seed":
                self.eval_seed = int(value)
            else:
                raise ConfigError(f"unknown config key {dotted!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {dotted}: {value!r}") from None

    def with_overrides(self, overrides: Iterable[str] | dict) -> "ExperimentConfig":
        """Copy with ``section.key=value`` overrides applied."""
        cfg = ExperimentConfig.from_ini(self.to_ini())
        items = overrides.items() if isinstance(overrides, dict) else (
            _split_override(o) for o in overrides
        )
        for k, v in items:
            cfg.set(k, str(v))
        return cfg.validate()

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]


def _split_override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    return key.strip(), value.strip()


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


_LEARN_TYPES = {
    f.name: {"int": int, "float": float, "bool": _bool, "str": str}[f.type]
    for f in dataclasses.fields(LearnConfig)
}


def _num(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) and v.is_integer():
        return str(int(v)) if abs(v) < 1e15 else repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# Presets

def _cs1() -> ExperimentConfig:
    return ExperimentConfig(
        name="cs1",
        formula="F[0,6](G[0,1](x>4 & y>4))",
        learner=LearnConfig(episodes=2000),
    )


def _cs2(h: int) -> ExperimentConfig:
    return ExperimentConfig(
        name=f"cs2-h{h}",
        formula=f"G[0,12]({_CS2_REGIONS.format(h=h)})",
        prefix="policy",
        learner=LearnConfig(episodes=10000),
    )


PRESETS = {
    "cs1": _cs1,
    "cs2-h2": lambda: _cs2(2),
    "cs2-h4": lambda: _cs2(4),
    "cs2-h5": lambda: _cs2(5),
}


def preset(name: str, overrides: Iterable[str] | dict = ()) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]().validate().with_overrides(overrides)


# ---------------------------------------------------------------------------
# Running

@dataclass
class RunResult:
    config: ExperimentConfig
    seed: int
    q: QTable
    policy: Policy
    returns: list[float]
    stats: RolloutStats | None
    n_states: int
    n_aug_states: int
    wall_time: float

    def metrics_row(self) -> dict:
        s = self.stats
        return {
            "config_hash": self.config.digest(),
            "name": self.config.name,
            "backend": self.config.backend,
            "seed": self.seed,
            "episodes": self.config.learner.episodes,
            "trials": s.trials,
            "successes": s.successes,
            "p_hat": _fmt(s.estimate),
            "ci_low": _fmt(s.interval[0]),
            "ci_high": _fmt(s.interval[1]),
            "n_states": self.n_states,
            "n_aug_states": self.n_aug_states,
            "q_entries": self.q.entries(),
            "fallbacks": s.fallbacks,
            "wall_time_s": f"{self.wall_time:.3f}",
        }


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def build_env(cfg: ExperimentConfig) -> SpecEnv:
    """Fresh environment for ``cfg``; the taumdp backend enforces ``state_cap``."""
    mdp = build_grid(cfg.grid)
    return make_env(
        cfg.backend, mdp, parse_stl(cfg.formula), cfg.start_state,
        dt=cfg.dt, beta=cfg.learner.beta, prefix=cfg.prefix, state_cap=cfg.state_cap,
    )


def _seeded(cfg: ExperimentConfig, seed: int | None) -> LearnConfig:
    return cfg.learner if seed is None else dataclasses.replace(cfg.learner, seed=seed)


def run_training(cfg: ExperimentConfig, seed: int | None = None):
    """Train on ``cfg``; returns ``(env, q, policy, trace, seconds)``."""
    env = build_env(cfg)
    t0 = time.perf_counter()
    q, policy, trace = train(env, _seeded(cfg, seed))
    return env, q, policy, trace, time.perf_counter() - t0


def run_evaluation(cfg: ExperimentConfig, env: SpecEnv, policy: Policy, keep: bool = True,
                   seed_offset: int = 0) -> RolloutStats:
    return estimate_satisfaction(policy, env, cfg.trials, seed=cfg.eval_seed + seed_offset,
                                 keep=keep)


def run_case_study(cfg: ExperimentConfig, seed: int | None = None, out_dir=None,
                   keep: bool = True) -> RunResult:
    """Train, evaluate, and (when ``out_dir`` is given) write the result files.

    The evaluation seed is offset by the training seed, so different seeds
    are judged on independent rollouts.
    """
    seed = cfg.learner.seed if seed is None else seed
    env, q, policy, trace, seconds = run_training(cfg, seed)
    stats = run_evaluation(cfg, env, policy, keep=keep, seed_offset=seed)
    res = RunResult(cfg, seed, q, policy, trace.returns, stats, env.mdp.n_states,
                    env.state_count(), seconds)
    if out_dir is not None:
        write_run(res, env, Path(out_dir))
    return res


def qtable_header(cfg: ExperimentConfig, env: SpecEnv, seed: int) -> dict:
    return {
        "formula": to_text(env.formula),
        "backend": cfg.backend,
        "taus": list(env.schema.taus),
        "n_states": env.mdp.n_states,
        "config_hash": cfg.digest(),
        "seed": seed,
    }


def write_training(out: Path, cfg: ExperimentConfig, env: SpecEnv, q: QTable,
                   returns: Sequence[float], seed: int) -> None:
    """Q-table, per-episode returns and the resolved config."""
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "returns-per-episode.csv", ["config_hash", "episode", "return"],
               [{"config_hash": cfg.digest(), "episode": k + 1, "return": repr(r)}
                for k, r in enumerate(returns)])
    save_qtable(q, out / "qtable.json", qtable_header(cfg, env, seed))
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")


def write_run(res: RunResult, env: SpecEnv, out: Path) -> None:
    write_training(out, res.config, env, res.q, res.returns, res.seed)
    _write_csv(out / "metrics.csv", METRICS_FIELDS, [res.metrics_row()])
    write_trajectories(out / "trajectories.csv", res.config.digest(), res.config.grid, res.stats)


def write_trajectories(path: Path, config_hash: str, grid: GridSpec, stats: RolloutStats) -> None:
    rows = []
    for trial, (traj, verdict) in enumerate(zip(stats.trajectories, stats.verdicts)):
        for t, sample in enumerate(traj.samples):
            rows.append({
                "config_hash": config_hash, "trial": trial, "t": t,
                "cell": grid.locate(sample),
                "x": _num(float(sample[0])), "y": _num(float(sample[1])),
                "verdict": verdict,
            })
    _write_csv(path, ["config_hash", "trial", "t", "cell", "x", "y", "verdict"], rows)


def _write_csv(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def evaluate_saved(cfg: ExperimentConfig, qtable_path, out_dir=None) -> RunResult:
    """Evaluate a stored Q-table under ``cfg`` without training."""
    env = build_env(cfg)
    q, header = load_qtable(qtable_path)
    if header.get("formula") != to_text(env.formula):
        raise ConfigError(
            f"Q-table was trained for {header.get('formula')!r}, config has {to_text(env.formula)!r}"
        )
    if header.get("backend") != cfg.backend:
        raise ConfigError(f"Q-table backend {header.get('backend')!r} differs from {cfg.backend!r}")
    seed = int(header.get("seed", 0))
    policy = greedy_policy(q, env.default_action)
    stats = run_evaluation(cfg, env, policy, keep=True, seed_offset=seed)
    res = RunResult(cfg, seed, q, policy, [], stats, env.mdp.n_states, env.state_count(), 0.0)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "metrics.csv", METRICS_FIELDS, [res.metrics_row()])
        write_trajectories(out / "trajectories.csv", cfg.digest(), cfg.grid, stats)
    return res


def compare(cfg: ExperimentConfig, seed: int | None = None, out_dir=None) -> list[RunResult]:
    """Run ``cfg`` once per backend with the same seed and episode budget."""
    results = []
    for backend in BACKENDS:
        c = cfg.with_overrides({"experiment.backend": backend})
        sub = None if out_dir is None else Path(out_dir) / backend
        results.append(run_case_study(c, seed, sub))
    if out_dir is not None:
        _write_csv(Path(out_dir) / "metrics.csv", METRICS_FIELDS,
                   [r.metrics_row() for r in results])
    return results


def _sweep_job(args) -> dict:
    ini, seed = args
    cfg = ExperimentConfig.from_ini(ini)
    res = run_case_study(cfg, seed, keep=False)
    s = res.stats
    return {
        "config_hash": cfg.digest(), "name": cfg.name, "backend": cfg.backend,
        "seed": seed, "trials": s.trials, "successes": s.successes, "p_hat": _fmt(s.estimate),
    }


def sweep(cfg: ExperimentConfig, seeds: Sequence[int], backends: Sequence[str] | None = None,
          out_path=None, jobs: int = 1) -> list[dict]:
    """Per-seed satisfaction estimates; one row per (backend, seed), sorted.

    Seeds run as independent jobs (``jobs > 1`` uses worker processes).
    The merge only sorts, so the rows do not depend on scheduling.
    """
    backends = [cfg.backend] if backends is None else list(backends)
    tasks = []
    for b in backends:
        ini = cfg.with_overrides({"experiment.backend": b}).to_ini()
        tasks.extend((ini, int(s)) for s in seeds)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_job, tasks))
    else:
        rows = [_sweep_job(t) for t in tasks]
    rows.sort(key=lambda r: (r["backend"], r["seed"]))
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        _write_csv(Path(out_path), SWEEP_FIELDS, rows)
    return rows


# ---------------------------------------------------------------------------
# Standalone oracle

def read_trace(path, dim: int | None = None) -> np.ndarray:
    """Samples from a CSV trace: one row per time step, one column per signal.

    A first row that does not parse as numbers is taken as a header.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ConfigError(f"cannot read trace: {exc}") from None
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path}: trace has no samples")
    width = len(rows[0])
    data = []
    for n, r in enumerate(rows, 1):
        if len(r) != width:
            raise ConfigError(f"{path}: row {n} has {len(r)} columns, expected {width}")
        try:
            data.append([float(c) for c in r])
        except ValueError:
            raise ConfigError(f"{path}: row {n} is not numeric") from None
    arr = np.asarray(data, dtype=float)
    if dim is not None and arr.shape[1] < dim:
        raise ConfigError(f"{path}: formula needs {dim} signals, trace has {arr.shape[1]}")
    return arr


def verify(trace_path, formula_text: str, dt: float = 1.0) -> int:
    """Boolean verdict of ``formula_text`` on a CSV trace, at time 0."""
    phi = parse_stl(formula_text)
    samples = read_trace(trace_path, max_signal_index(phi) + 1)
    return eval_bool(phi, Trajectory(samples, dt), 0)


def required_samples(formula_text: str, dt: float = 1.0) -> int:
    return to_steps(horizon(parse_stl(formula_text)), dt) + 1
