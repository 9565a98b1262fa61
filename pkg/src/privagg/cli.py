"""Command-line interface: run, sweep, privacy, attack, validate."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .engine import RunConfig, run
from .harness import (
    ConfigError,
    ExperimentConfig,
    load_config,
    run_experiment,
)
from .noise import derive_seed
from .privacy import (
    AdversaryView,
    PrivacyQuery,
    disclosure_attack,
    later_round_attack,
    naive_attack,
    privacy_sweep,
    reports_to_csv,
    sigma_analytic,
)

SWEEP_PARAMS = ("alpha", "rho", "h", "term_epsilon", "max_iterations")


def _float_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_validate(args) -> int:
    config = load_config(args.config)
    print(f"OK: {args.config} ({config.topology.kind}, n={config.topology.n})")
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config, base_dir=args.out)
    for rec in result.manifest["runs"]:
        print(
            f"run {rec['repetition']}: k_stop={rec['k_stop']} ({rec['reason']}), "
            f"consensus={rec['consensus_value']!r}, err={rec['final_err']:.3e}"
        )
    print(f"manifest: {result.manifest_path}")
    return 0


def _override(config: ExperimentConfig, param: str, value: float) -> ExperimentConfig:
    if param in ("alpha", "rho"):
        return replace(config, noise=replace(config.noise, **{param: value}))
    if param == "h":
        return replace(config, noise=replace(config.noise, h=int(value)))
    if param == "term_epsilon":
        return replace(config, run=replace(config.run, term_epsilon=value))
    return replace(config, run=replace(config.run, max_iterations=int(value)))


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    values = _float_values(args.values)
    if not values:
        raise ConfigError("--values is empty")
    for value in values:
        point = _override(config, args.param, value)
        sub = f"{args.param}={value:g}"
        point = replace(
            point, outputs=replace(point.outputs, directory=str(Path(point.outputs.directory) / sub))
        )
        result = run_experiment(point, base_dir=args.out)
        errs = [rec["final_err"] for rec in result.manifest["runs"]]
        print(f"{sub}: max final err {max(errs):.3e} -> {result.manifest_path}")
    return 0


def cmd_privacy(args) -> int:
    config = load_config(args.config)
    epsilons = _float_values(args.epsilons)
    reports = privacy_sweep(
        config.noise, epsilons, args.trials, seed=derive_seed(config.noise.seed, 9001)
    )
    out = Path(args.out) if args.out else _default_out(config) / "privacy.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    reports_to_csv(reports, out)
    for r in reports:
        print(
            f"epsilon={r.epsilon:g}: sigma_analytic={r.sigma_analytic:.6f} "
            f"empirical={r.sigma_empirical:.6f} (stderr {r.stderr:.6f})"
        )
    print(f"wrote {out}")
    return 0


def _default_out(config: ExperimentConfig) -> Path:
    root = config.origin.parent if config.origin is not None else Path.cwd()
    out = Path(config.outputs.directory)
    return out if out.is_absolute() else root / out


def cmd_attack(args) -> int:
    config = load_config(args.config)
    graph = config.topology.build()
    params = config.noise
    target = args.target if args.target is not None else graph.neighbors[args.observer][0]
    if args.kind == "disclosure":
        view = AdversaryView(graph, args.observer, target, knows_target_neighbors=True)
        if config.run.events:
            raise ConfigError("disclosure attack requires a config without events")
        if config.scheme not in ("zero_sum", "zero"):
            raise ConfigError(
                "disclosure attack requires the zero_sum (or zero) noise scheme"
            )
        x0 = _rep0_x0(config, graph.n)
        run_config = RunConfig(
            graph=graph,
            x0=x0,
            noise=replace(params, seed=derive_seed(params.seed, 0)),
            scheme=config.scheme,
            max_iterations=max(config.run.max_iterations or graph.n**2, args.horizon + 1),
            record_trace=True,
        )
        trace = run(run_config)
        result = disclosure_attack(view, trace, args.horizon)
        actual = float(x0[target])
        print(f"estimate x_{target}(0) = {result.estimate!r}")
        print(f"actual   x_{target}(0) = {actual!r}")
        print(f"abs error = {abs(result.estimate - actual):.3e} "
              f"(bound {result.error_bound:.3e} at horizon {result.horizon})")
        return 0

    if args.epsilon is None:
        raise ConfigError("--epsilon is required for naive/later attacks")
    view = AdversaryView(graph, args.observer, target)
    sigma = sigma_analytic(PrivacyQuery(args.epsilon, params))
    seed = derive_seed(params.seed, 9002)
    if args.kind == "naive":
        rate = naive_attack(view, params, args.epsilon, args.trials, seed=seed)
    else:
        rate = later_round_attack(
            view, params, args.round, args.epsilon, args.trials,
            seed=seed, train_trials=args.train_trials, scheme=config.scheme,
        )
    print(
        f"{args.kind} attack: success rate {rate:.6f} over {args.trials} trials "
        f"(sigma_analytic {sigma:.6f})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privagg",
        description="Noisy average-consensus aggregation: simulations, sweeps, privacy attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out", help="base directory for outputs", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a config across parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("privacy", help="analytic vs empirical disclosure curve")
    p.add_argument("config")
    p.add_argument("--epsilons", required=True, help="comma-separated accuracies")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_privacy)

    p = sub.add_parser("attack", help="run a concrete adversary")
    p.add_argument("config")
    p.add_argument("--kind", required=True, choices=("naive", "later", "disclosure"))
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--train-trials", type=int, default=2000, dest="train_trials")
    p.add_argument("--round", type=int, default=1)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--observer", type=int, default=0)
    p.add_argument("--target", type=int, default=None,
                   help="defaults to the observer's first neighbor")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    return parser


def _rep0_x0(config: ExperimentConfig, n: int):
    import numpy as np

    if config.x0.mode == "explicit":
        return np.array(config.x0.values, dtype=np.float64)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(derive_seed(config.x0.seed, 0)))
    )
    return rng.uniform(config.x0.low, config.x0.high, n)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
