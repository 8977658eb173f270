"""Command-line entry point.

Subcommands: ``solve`` (closed-form equilibrium on the grid), ``simulate``
(Monte Carlo payoff of a policy), ``learn`` (one learner configuration),
``reproduce`` (the built-in temperature sweep with report tables).

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 a
``--check`` threshold failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .analytic import solve_equilibrium
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
)
from .params import DomainError, ParameterError
from .simulate import MeanField, PolicyParams, mc_expected_reward, sample_rewards
from . import rng as _rng

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

OUT_DIR_ENV = "LQMFG_OUT_DIR"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="dotted-key override, e.g. game.A=2.5 (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument(
        "--out-dir",
        default=os.environ.get(OUT_DIR_ENV, "."),
        help=f"output directory (default: ${OUT_DIR_ENV} or '.')",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-se", type=float, help="self-exploration temperature")
    parser.add_argument("--lambda-ce", type=float, help="cross-exploration temperature")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqmfg",
        description="Entropy-regularized LQ mean field games: closed forms, "
        "simulation, and policy-gradient learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="evaluate the closed-form equilibrium")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--game", choices=("se", "ee"), default="se")
    p.add_argument("--csv", help="also dump the table to this CSV path")

    p = sub.add_parser(
        "simulate",
        help="Monte Carlo payoff of a policy",
        description="Estimates the sampled objective (quadratic penalties "
        "plus the Shannon exploration bonus) for the chosen policy. This is "
        "the observable the learner optimizes; it matches solve's game value "
        "for the 'se' equilibrium, while an 'ee' policy is scored on the "
        "same observable rather than on the enhanced objective.",
    )
    _add_common(p)
    _add_model_flags(p)
    p.add_argument(
        "--policy", default="se",
        help="'se', 'ee' (closed-form equilibrium) or a JSON file with "
        "fields m_hat and sigma2",
    )
    p.add_argument("--n-paths", type=int, default=10000)
    p.add_argument("--dump-paths", help="optional per-path reward CSV")

    p = sub.add_parser("learn", help="run the learner for one temperature")
    _add_common(p)
    _add_model_flags(p)

    p = sub.add_parser("reproduce", help="run the built-in temperature sweep")
    _add_common(p)
    p.add_argument(
        "--check", action="store_true",
        help="fail (exit 4) when a convergence threshold is violated",
    )
    return parser


def _load(args) -> ExperimentConfig:
    if args.config:
        data = config_to_dict(load_config(args.config))
    else:
        data = config_to_dict(default_config())
    if getattr(args, "lambda_se", None) is not None:
        data["game"]["lambda_se"] = args.lambda_se
    if getattr(args, "lambda_ce", None) is not None:
        data["game"]["lambda_ce"] = args.lambda_ce
    if args.seed is not None:
        data["seed"] = args.seed
    apply_overrides(data, args.overrides)
    return config_from_dict(data)


def _cmd_solve(args) -> int:
    config = _load(args)
    solution = solve_equilibrium(config.game, args.game, config.grid)
    print(f"# equilibrium ({args.game} game)")
    print(f"policy_gain {_fmt(solution.policy.mean_coeff)}")
    print(f"game_value {_fmt(solution.game_value)}")
    print(f"m_star {_fmt(solution.m_star)}")
    header = ["t", "riccati", "value_offset", "policy_variance", "state_variance"]
    rows = [
        [solution.times[i], solution.riccati[i], solution.value_offset[i],
         solution.policy_variance[i], solution.state_variance[i]]
        for i in range(len(solution.times))
    ]
    print(" ".join(header))
    for row in rows:
        print(" ".join(_fmt(v) for v in row))
    if args.csv:
        import csv as _csv

        with open(args.csv, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(header)
            w.writerows([[_fmt(v) for v in row] for row in rows])
        if args.verbose:
            print(f"wrote {args.csv}", file=sys.stderr)
    return EXIT_OK


def _policy_from_arg(arg: str, config: ExperimentConfig) -> PolicyParams:
    from .analytic import equilibrium_policy
    from .simulate import discretize_policy

    if arg in ("se", "ee"):
        return discretize_policy(equilibrium_policy(config.game, arg), config.grid)
    try:
        with open(arg) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read policy file {arg}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in policy file {arg}: {exc}") from exc
    if not isinstance(data, dict) or "m_hat" not in data or "sigma2" not in data:
        raise ConfigError("policy file must contain fields m_hat and sigma2")
    return PolicyParams(m_hat=float(data["m_hat"]), sigma2=np.asarray(data["sigma2"]))


def _cmd_simulate(args) -> int:
    config = _load(args)
    if args.n_paths < 2:
        raise ConfigError("--n-paths must be >= 2")
    policy = _policy_from_arg(args.policy, config)
    mean_field = MeanField.constant(config.game.xi_mean, config.grid)
    mean, stderr = mc_expected_reward(
        config.game, config.grid, policy, mean_field, args.n_paths, config.seed
    )
    print(f"mean {_fmt(mean)}")
    print(f"stderr {_fmt(stderr)}")
    print(f"n_paths {args.n_paths}")
    print(f"seed {config.seed}")
    if args.dump_paths:
        rewards = sample_rewards(
            config.game, config.grid, policy, mean_field, args.n_paths,
            _rng.substream(config.seed, _rng.TRAJECTORY),
        )
        import csv as _csv

        with open(args.dump_paths, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["path", "reward"])
            for j, r in enumerate(rewards):
                w.writerow([j, _fmt(r)])
    return EXIT_OK


def _cmd_learn(args) -> int:
    config = _load(args)
    lam = config.game.lambda_se
    single = ExperimentConfig(
        game=config.game, grid=config.grid, learner=config.learner,
        lambda_se_values=(lam,), n_eval_paths=config.n_eval_paths,
        output_dir=args.out_dir, seed=config.seed,
    )
    report = harness.reproduce(single)
    arm = report.arms[0]
    print(f"lambda_se {_fmt(lam)}")
    print(f"learned_m_hat {_fmt(arm.result.policy.m_hat)}")
    print(f"final_rel_error {_fmt(arm.result.trace.records[-1].rel_error)}")
    if args.verbose:
        print(f"wrote tables under {args.out_dir}", file=sys.stderr)
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    config = _load(args)
    config = ExperimentConfig(
        game=config.game, grid=config.grid, learner=config.learner,
        lambda_se_values=config.lambda_se_values, n_eval_paths=config.n_eval_paths,
        output_dir=args.out_dir, seed=config.seed,
    )
    report = harness.reproduce(config)
    for arm in report.arms:
        final = arm.result.trace.records[-1].rel_error
        print(
            f"lambda_se {_fmt(arm.lambda_se)} learned_m_hat "
            f"{_fmt(arm.result.policy.m_hat)} final_rel_error {_fmt(final)}"
        )
    if args.check:
        failures = harness.check_thresholds(report)
        for message in failures:
            print(f"CHECK FAILED: {message}", file=sys.stderr)
        if failures:
            return EXIT_CHECK
        print("all checks passed")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "learn": _cmd_learn,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
