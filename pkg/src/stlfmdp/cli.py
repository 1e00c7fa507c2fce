"""Command line entry point: ``stlfmdp <subcommand> ...``.

Exit codes: 0 success, 2 configuration or input error, 3 resource cap.
Results go under ``$STLFMDP_OUTPUT_ROOT`` (default ``./results``) unless
``--out`` is given.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path

from .errors import ConfigError, ResourceCapError
from .experiments import (
    PRESETS,
    ExperimentConfig,
    compare,
    evaluate_saved,
    output_root,
    preset,
    run_case_study,
    run_training,
    sweep,
    verify,
    write_training,
)
from .stl import FragmentError, InsufficientSamplesError, StlSyntaxError

EXIT_OK, EXIT_CONFIG, EXIT_CAP = 0, 2, 3


def _parse_seeds(text: str) -> list[int]:
    """``"0-4"`` -> 0..4; ``"1,5,9"`` -> those; mixes allowed."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            seeds.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError:
            raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def _config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = preset(args.preset or "cs1")
    cfg = cfg.with_overrides(args.set or [])
    if args.backend:
        cfg = cfg.with_overrides({"experiment.backend": args.backend})
    return cfg


def _out(args, cfg: ExperimentConfig, *parts) -> Path:
    if args.out:
        return Path(args.out)
    return output_root().joinpath(cfg.name, *parts)


def _seed(args, cfg) -> int:
    return cfg.learner.seed if args.seed is None else args.seed


def cmd_show_config(args) -> int:
    cfg = _config(args)
    print(f"; config_hash = {cfg.digest()}")
    sys.stdout.write(cfg.to_ini())
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    env, q, _, trace, seconds = run_training(cfg, seed)
    out = _out(args, cfg, cfg.backend, f"seed-{seed}")
    write_training(out, cfg, env, q, trace.returns, seed)
    print(f"trained {cfg.learner.episodes} episodes in {seconds:.1f}s; "
          f"{len(q)} states visited; wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg, cfg.backend, "eval")
    res = evaluate_saved(cfg, args.qtable, out)
    _print_row(res.metrics_row())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    res = run_case_study(cfg, seed, _out(args, cfg, cfg.backend, f"seed-{seed}"))
    _print_row(res.metrics_row())
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    for res in compare(cfg, seed, _out(args, cfg, "compare", f"seed-{seed}")):
        _print_row(res.metrics_row())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    seeds = _parse_seeds(args.seeds)
    backends = args.backends.split(",") if args.backends else None
    path = Path(args.out) if args.out else output_root() / cfg.name / "sweep.csv"
    rows = sweep(cfg, seeds, backends, out_path=path, jobs=args.jobs)
    by_backend: dict[str, list[float]] = {}
    for r in rows:
        by_backend.setdefault(r["backend"], []).append(float(r["p_hat"]))
    for b, ps in by_backend.items():
        print(f"{b}: {len(ps)} seeds, mean p_hat {statistics.fmean(ps):.4f}, "
              f"median {statistics.median(ps):.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    print(verify(args.trace, args.formula, args.dt))
    return EXIT_OK


def _print_row(row: dict) -> None:
    keys = ["name", "backend", "seed", "p_hat", "ci_low", "ci_high", "n_states",
            "n_aug_states", "q_entries", "wall_time_s"]
    print(" ".join(f"{k}={row[k]}" for k in keys))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stlfmdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, seed=True):
        sp.add_argument("--config", help="INI experiment file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--backend", choices=["fmdp", "taumdp"])
        sp.add_argument("--out", help="output directory (or file for sweep)")
        if seed:
            sp.add_argument("--seed", type=int, help="training seed")
        return sp

    with_config(sub.add_parser("show-config", help="print the resolved config"),
                seed=False).set_defaults(func=cmd_show_config)
    with_config(sub.add_parser("train", help="train and save a Q-table")).set_defaults(
        func=cmd_train)
    sp = with_config(sub.add_parser("eval", help="evaluate a saved Q-table"), seed=False)
    sp.add_argument("--qtable", required=True)
    sp.set_defaults(func=cmd_eval)
    with_config(sub.add_parser("run", help="train, evaluate and write all result files")
                ).set_defaults(func=cmd_run)
    with_config(sub.add_parser("compare", help="run both backends on one config")
                ).set_defaults(func=cmd_compare)
    sp = with_config(sub.add_parser("sweep", help="per-seed estimates as CSV"), seed=False)
    sp.add_argument("--seeds", default="0-4", help='e.g. "0-24" or "1,3,5"')
    sp.add_argument("--backends", help="comma list, default: the config's backend")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("verify", help="judge a CSV trace with the offline semantics")
    sp.add_argument("trace")
    sp.add_argument("formula")
    sp.add_argument("--dt", type=float, default=1.0)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, StlSyntaxError, FragmentError, InsufficientSamplesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
