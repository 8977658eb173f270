"""Experiment orchestration: relative error, the reference sweep, and reports.

The convergence metric is |J(candidate) - J(reference)| / |J(reference)|,
with both payoffs estimated by the same Monte Carlo estimator on a common
frozen set of draws (same paths, same count). Estimating both sides the same
way removes the time-discretization bias from the ratio and lets the error
vanish exactly when the candidate equals the reference.

The reference is the discretized closed-form equilibrium policy of the
Shannon game: gain B/D^2 and per-step variances lambda_se/(D^2 * eta(s*dt)).
At lambda_se = 0 (entropy bonus off) the limiting reference is the
quadratic-cost-only equilibrium: same gain, variances at the floor.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .analytic import equilibrium_policy, game_value, riccati_coefficient
from .config import ExperimentConfig, config_to_dict
from .learner import RunResult
from .learner import run as learner_run
from .params import GameParams, ParameterError, TimeGrid
from .simulate import (
    SIGMA_FLOOR,
    MeanField,
    PolicyParams,
    _batch_rewards,
    _draw_batch,
    discretize_policy,
)


def reference_policy(
    params: GameParams, grid: TimeGrid, sigma_floor: float = SIGMA_FLOOR
) -> PolicyParams:
    """Discretized equilibrium policy used as the error reference."""
    if params.lambda_se > 0.0:
        return discretize_policy(equilibrium_policy(params, "se"), grid)
    gain = params.B / params.D**2
    return PolicyParams(m_hat=gain, sigma2=np.full(grid.n_steps, sigma_floor))


class DegenerateReferenceError(ValueError):
    """Reference payoff too close to zero for a relative error."""


class PayoffEvaluator:
    """Common-random-number payoff estimator with a cached reference value.

    All evaluations reuse one frozen set of initial states and Brownian
    increments, so repeated calls are bit-identical and differences between
    nearby policies are estimated with far less noise than independent runs.
    """

    def __init__(
        self,
        params: GameParams,
        grid: TimeGrid,
        n_paths: int,
        seed: int,
        sigma_floor: float = SIGMA_FLOOR,
    ):
        if n_paths < 2:
            raise ParameterError("n_paths must be >= 2")
        self.params = params
        self.grid = grid
        self.n_paths = n_paths
        stream = rng.substream(seed, rng.EVALUATION)
        self._x0, self._dW = _draw_batch(stream, params, grid.dt, n_paths, grid.n_steps)
        self.reference = reference_policy(params, grid, sigma_floor)
        self.reference_mean_field = MeanField.constant(params.xi_mean, grid)
        self.reference_payoff, self.reference_stderr = self.payoff(
            self.reference, self.reference_mean_field
        )
        if abs(self.reference_payoff) < 1e-12:
            raise DegenerateReferenceError(
                "reference payoff is numerically zero; relative error undefined"
            )

    def payoff(self, policy: PolicyParams, mean_field: MeanField) -> tuple[float, float]:
        policy.check_aligned(self.grid)
        mean_field.check_aligned(self.grid)
        rewards = _batch_rewards(
            self.params,
            self.grid.dt,
            mean_field.values,
            policy.m_hat,
            policy.sigma2,
            self._x0,
            self._dW,
        )
        return float(rewards.mean()), float(rewards.std(ddof=1) / np.sqrt(self.n_paths))

    def rel_error(self, policy: PolicyParams, mean_field: MeanField) -> float:
        value, _ = self.payoff(policy, mean_field)
        return abs(value - self.reference_payoff) / abs(self.reference_payoff)


def relative_error(
    params: GameParams,
    grid: TimeGrid,
    policy: PolicyParams,
    mean_field: MeanField,
    n_eval_paths: int,
    seed: int,
) -> float:
    """One-shot relative error against the discretized equilibrium."""
    ev = PayoffEvaluator(params, grid, n_eval_paths, seed)
    return ev.rel_error(policy, mean_field)


@dataclass
class ArmResult:
    """Outcome of one temperature setting in the sweep."""

    lambda_se: float
    result: RunResult
    evaluator: PayoffEvaluator
    runtime_seconds: float


@dataclass
class ExperimentReport:
    """All tables backing the reference experiment's figures."""

    config: ExperimentConfig
    arms: list = field(default_factory=list)
    version: str = ""

    def arm(self, lambda_se: float) -> ArmResult:
        for a in self.arms:
            if a.lambda_se == lambda_se:
                return a
        raise KeyError(f"no arm with lambda_se={lambda_se}")


def _arm_params(config: ExperimentConfig, lambda_se: float) -> GameParams:
    base = config.game
    return GameParams(
        A=base.A, B=base.B, D=base.D, Q=base.Q, Q_bar=base.Q_bar,
        lambda_se=lambda_se, lambda_ce=base.lambda_ce, T=base.T,
        xi_mean=base.xi_mean, xi_second_moment=base.xi_second_moment,
    )


def run_arm(config: ExperimentConfig, lambda_se: float) -> ArmResult:
    """Run the learner for one temperature and evaluate its whole trace."""
    params = _arm_params(config, lambda_se)
    grid = config.grid
    index = config.lambda_se_values.index(lambda_se)
    eval_seed = rng.derive_seed(config.seed, rng.EVALUATION, index)
    evaluator = PayoffEvaluator(
        params, grid, config.n_eval_paths, eval_seed, config.learner.sigma_floor
    )
    cfg = dataclasses.replace(config.learner, master_seed=config.seed)
    start = time.perf_counter()
    result = learner_run(params, grid, cfg, evaluate=evaluator.rel_error)
    return ArmResult(
        lambda_se=lambda_se,
        result=result,
        evaluator=evaluator,
        runtime_seconds=time.perf_counter() - start,
    )


def reproduce(config: ExperimentConfig) -> ExperimentReport:
    """Sweep the configured temperatures and assemble the report.

    If the configuration names an output directory the tables are written
    there before returning.
    """
    report = ExperimentReport(config=config, version=version_string())
    for lam in config.lambda_se_values:
        report.arms.append(run_arm(config, lam))
    if config.output_dir:
        write_report(report, config.output_dir)
    return report


def analytic_variance_schedule(params: GameParams, grid: TimeGrid) -> np.ndarray:
    """Closed-form exploration schedule at the step left endpoints."""
    if params.lambda_se <= 0.0:
        return np.full(grid.n_steps, SIGMA_FLOOR)
    eta = riccati_coefficient(params, grid.step_times(), "se")
    return params.lambda_se / (params.D**2 * eta)


def _continuous_game_value(config: ExperimentConfig, lambda_se: float) -> float:
    """Closed-form value reported alongside the sampled reference payoff.

    In the zero-temperature limit the offset vanishes and only the quadratic
    term survives.
    """
    params = _arm_params(config, lambda_se)
    if lambda_se > 0.0:
        return game_value(params, "se", 0.0, config.grid)
    return -0.5 * float(riccati_coefficient(params, 0.0, "se")) * params.xi_var


def check_thresholds(report: ExperimentReport, threshold: float = 0.05) -> list:
    """Convergence checks for --check mode: final error below the threshold
    for every positive-temperature arm. Returns a list of failure messages."""
    failures = []
    for arm in report.arms:
        if arm.lambda_se <= 0.0:
            continue
        final = arm.result.trace.records[-1].rel_error
        if not final < threshold:
            failures.append(
                f"lambda_se={arm.lambda_se}: final relative error {final:.4f} "
                f">= {threshold}"
            )
    return failures


def version_string() -> str:
    """Package version, suffixed with the git commit when available."""
    base = "0.1.0"
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0:
            return f"{base}+g{out.stdout.strip()}"
    except OSError:
        pass
    return base


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_report(report: ExperimentReport, out_dir: str) -> list:
    """Write the report tables; the manifest is written last and atomically.

    A failure mid-write leaves the partial tables plus a FAILED marker and
    never a manifest. Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    # a manifest must always describe the tables next to it: clear leftovers
    # from any previous run before writing anything new
    for stale in ("manifest.json", "FAILED"):
        path = os.path.join(out_dir, stale)
        if os.path.exists(path):
            os.remove(path)
    written = []
    try:
        path = os.path.join(out_dir, "learning_curve.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_se", "k", "i", "total_iter", "rel_error"])
            for arm in report.arms:
                n_inner = report.config.learner.n_inner
                for r in arm.result.trace.records:
                    total = r.outer * (n_inner + 1) + r.inner
                    w.writerow(
                        [_fmt(arm.lambda_se), r.outer, r.inner, total, _fmt(r.rel_error)]
                    )
        written.append(path)

        path = os.path.join(out_dir, "variance_schedule.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_se", "s", "learned_sigma2", "analytic_sigma2"])
            for arm in report.arms:
                params = _arm_params(report.config, arm.lambda_se)
                analytic = analytic_variance_schedule(params, report.config.grid)
                learned = arm.result.policy.sigma2
                for s in range(report.config.grid.n_steps):
                    w.writerow(
                        [_fmt(arm.lambda_se), s, _fmt(learned[s]), _fmt(analytic[s])]
                    )
        written.append(path)

        path = os.path.join(out_dir, "mean_field.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_se", "k", "s", "m"])
            for arm in report.arms:
                initial = MeanField.constant(
                    report.config.learner.initial_mean_field, report.config.grid
                )
                paths = [initial] + arm.result.trace.outer_mean_fields
                for k, mf in enumerate(paths):
                    for s, m in enumerate(mf.values):
                        w.writerow([_fmt(arm.lambda_se), k, s, _fmt(m)])
        written.append(path)

        path = os.path.join(out_dir, "summary.json")
        summary = {
            "true_m_hat": report.config.game.B / report.config.game.D**2,
            "seeds": {
                "master_seed": report.config.seed,
                "n_eval_paths": report.config.n_eval_paths,
            },
            "arms": [
                {
                    "lambda_se": arm.lambda_se,
                    "learned_m_hat": arm.result.policy.m_hat,
                    "final_rel_error": arm.result.trace.records[-1].rel_error,
                    "reference_payoff": arm.evaluator.reference_payoff,
                    "reference_game_value": _continuous_game_value(
                        report.config, arm.lambda_se
                    ),
                    "runtime_seconds": arm.runtime_seconds,
                }
                for arm in report.arms
            ],
        }
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2)
        written.append(path)
    except Exception as exc:
        marker = os.path.join(out_dir, "FAILED")
        with open(marker, "w") as fh:
            fh.write(f"report writing failed: {exc}\n")
        raise OSError(f"failed writing report under {out_dir}: {exc}") from exc

    manifest = {
        "config": config_to_dict(report.config),
        "seed": report.config.seed,
        "version": report.version or version_string(),
        "tables": [os.path.basename(p) for p in written],
    }
    tmp = os.path.join(out_dir, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2)
    final = os.path.join(out_dir, "manifest.json")
    os.replace(tmp, final)
    written.append(final)
    return written
