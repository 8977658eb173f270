"""Discrete-time dynamics and payoff sampling under Gaussian feedback policies.

The controlled state aggregates the policy's action law in closed form: for a
feedback law N(m_hat*(m_s - x), sigma2_s) the per-step drift and squared
diffusion are the policy's first and second action moments, so no inner
sampling over actions is needed. Paths differ only through the initial state
and the Brownian increments.

Determinism contract: all draws for a batch come from one counter-based
substream in a fixed layout (row per path, fixed chunk size), and reductions
use numpy's pairwise summation, so results are bit-identical for a given seed
regardless of evaluation order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .analytic import GaussianFeedbackPolicy
from .params import DomainError, GameParams, ParameterError, TimeGrid

# Default floor protecting log-entropy and square roots from perturbed or
# learner-updated variances; see LearnerConfig.sigma_floor.
SIGMA_FLOOR = 1e-6

# Fixed batch chunk so draw layout never depends on available memory.
_CHUNK = 1 << 14


@dataclass(frozen=True)
class MeanField:
    """Population mean-state path m_0..m_N aligned with a TimeGrid."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ParameterError("mean field must be a 1-d path of at least 2 values")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("mean field values must be finite")

    @classmethod
    def constant(cls, value: float, grid: TimeGrid) -> "MeanField":
        return cls(np.full(grid.n_steps + 1, float(value)))

    def check_aligned(self, grid: TimeGrid) -> None:
        if len(self.values) != grid.n_steps + 1:
            raise ParameterError(
                f"mean field has {len(self.values)} values, grid needs {grid.n_steps + 1}"
            )

    def interpolant(self, grid: TimeGrid) -> Callable:
        """Piecewise-linear m(t) through the grid values (vectorized)."""
        self.check_aligned(grid)
        times = grid.times()

        def fn(t):
            out = np.interp(np.asarray(t, dtype=float), times, self.values)
            return out if np.ndim(t) else float(out)

        return fn


@dataclass(frozen=True)
class PolicyParams:
    """Learnable policy vector: scalar gain plus per-step exploration variances."""

    m_hat: float
    sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))
        if self.sigma2.ndim != 1:
            raise ParameterError("sigma2 must be a 1-d per-step schedule")
        if not np.all(np.isfinite(self.sigma2)) or np.any(self.sigma2 <= 0.0):
            raise DomainError("per-step variances must be finite and strictly positive")
        if not np.isfinite(self.m_hat):
            raise ParameterError("m_hat must be finite")

    @property
    def n_steps(self) -> int:
        return len(self.sigma2)

    def check_aligned(self, grid: TimeGrid) -> None:
        if self.n_steps != grid.n_steps:
            raise ParameterError(
                f"policy has {self.n_steps} variance entries, grid needs {grid.n_steps}"
            )

    def to_vector(self) -> np.ndarray:
        """Flatten to (1 + N,): gain first, then the variance schedule."""
        return np.concatenate(([self.m_hat], self.sigma2))

    @classmethod
    def from_vector(cls, vec: np.ndarray, floor: float = SIGMA_FLOOR) -> "PolicyParams":
        vec = np.asarray(vec, dtype=float)
        return cls(m_hat=float(vec[0]), sigma2=np.maximum(vec[1:], floor))


def discretize_policy(policy: GaussianFeedbackPolicy, grid: TimeGrid) -> PolicyParams:
    """Per-step parameters of a continuous-time policy (left-endpoint variances)."""
    return PolicyParams(
        m_hat=policy.mean_coeff, sigma2=policy.variance_on(grid.step_times())
    )


@dataclass(frozen=True)
class Trajectory:
    """One simulated state path plus the feedback moments that produced it."""

    states: np.ndarray
    policy_means: np.ndarray
    policy_variances: np.ndarray
    seed_id: tuple


def step_moments(
    params: GameParams, policy: PolicyParams, m_s: float, x_s, s: int
) -> tuple:
    """Drift and squared diffusion of one Euler step at state(s) x_s.

    These are the policy-aggregated first and second action moments pushed
    through the dynamics; vectorized over x_s.
    """
    if not 0 <= s < policy.n_steps:
        raise ParameterError(f"step index {s} outside [0, {policy.n_steps})")
    gap = m_s - np.asarray(x_s, dtype=float)
    drift = (params.A + params.B * policy.m_hat) * gap
    diffusion2 = params.D**2 * (policy.m_hat**2 * gap**2 + policy.sigma2[s])
    if np.ndim(x_s) == 0:
        return float(drift), float(diffusion2)
    return drift, diffusion2


def _batch_states(
    params: GameParams,
    dt: float,
    m_values: np.ndarray,
    m_hat,
    sigma2,
    x0: np.ndarray,
    dW: np.ndarray,
) -> np.ndarray:
    """Euler paths for a batch; m_hat scalar or (n,), sigma2 (N,) or (n, N).

    Returns states of shape (n, N + 1).
    """
    n, n_steps = dW.shape
    states = np.empty((n, n_steps + 1))
    states[:, 0] = x0
    a = params.A + params.B * np.asarray(m_hat)
    m_hat2 = np.asarray(m_hat) ** 2
    sigma2 = np.asarray(sigma2)
    x = x0.astype(float, copy=True)
    for s in range(n_steps):
        gap = m_values[s] - x
        sig = sigma2[..., s] if sigma2.ndim > 1 else sigma2[s]
        diffusion2 = params.D**2 * (m_hat2 * gap**2 + sig)
        x = x + a * gap * dt + np.sqrt(diffusion2) * dW[:, s]
        states[:, s + 1] = x
    return states


def _batch_rewards(
    params: GameParams,
    dt: float,
    m_values: np.ndarray,
    m_hat,
    sigma2,
    x0: np.ndarray,
    dW: np.ndarray,
) -> np.ndarray:
    """Realized rewards for a batch without materializing full state paths."""
    n, n_steps = dW.shape
    a = params.A + params.B * np.asarray(m_hat)
    m_hat2 = np.asarray(m_hat) ** 2
    sigma2 = np.asarray(sigma2)
    x = x0.astype(float, copy=True)
    total = np.zeros(n)
    for s in range(n_steps):
        gap = m_values[s] - x
        sig = sigma2[..., s] if sigma2.ndim > 1 else sigma2[s]
        total += -0.5 * params.Q * gap**2 * dt
        if params.lambda_se > 0.0:
            total += 0.5 * params.lambda_se * np.log(2.0 * np.pi * np.e * sig) * dt
        diffusion2 = params.D**2 * (m_hat2 * gap**2 + sig)
        x = x + a * gap * dt + np.sqrt(diffusion2) * dW[:, s]
    total += -0.5 * params.Q_bar * (x - m_values[n_steps]) ** 2
    return total


def _draw_batch(stream: np.random.Generator, params: GameParams, dt: float,
                n_paths: int, n_steps: int):
    """Initial states and Brownian increments in the fixed batch layout."""
    x0 = params.xi_mean + np.sqrt(params.xi_var) * stream.standard_normal(n_paths)
    dW = np.sqrt(dt) * stream.standard_normal((n_paths, n_steps))
    return x0, dW


def simulate_trajectory(
    params: GameParams,
    grid: TimeGrid,
    policy: PolicyParams,
    mean_field: MeanField,
    stream: np.random.Generator,
    seed_id: tuple = (),
) -> Trajectory:
    """One Euler path: x0 from the initial Gaussian, increments N(0, dt)."""
    policy.check_aligned(grid)
    mean_field.check_aligned(grid)
    x0, dW = _draw_batch(stream, params, grid.dt, 1, grid.n_steps)
    states = _batch_states(
        params, grid.dt, mean_field.values, policy.m_hat, policy.sigma2, x0, dW
    )[0]
    gaps = mean_field.values[:-1] - states[:-1]
    return Trajectory(
        states=states,
        policy_means=policy.m_hat * gaps,
        policy_variances=policy.sigma2.copy(),
        seed_id=tuple(seed_id),
    )


def realized_reward(
    params: GameParams,
    grid: TimeGrid,
    traj: Trajectory,
    policy: PolicyParams,
    mean_field: MeanField,
) -> float:
    """Single-trajectory reward: running quadratic penalty plus the Gaussian
    entropy bonus per step, and the terminal quadratic penalty.

    The entropy of the per-step Gaussian action law enters in closed form,
    0.5 * log(2*pi*e*sigma2_s); with lambda_se = 0 the reward is the pure
    quadratic cost.
    """
    policy.check_aligned(grid)
    mean_field.check_aligned(grid)
    if len(traj.states) != grid.n_steps + 1:
        raise ParameterError("trajectory length does not match the grid")
    gaps = traj.states[:-1] - mean_field.values[:-1]
    total = float(np.sum(-0.5 * params.Q * gaps**2) * grid.dt)
    if params.lambda_se > 0.0:
        total += float(
            np.sum(0.5 * params.lambda_se * np.log(2.0 * np.pi * np.e * policy.sigma2))
            * grid.dt
        )
    total += -0.5 * params.Q_bar * float(
        (traj.states[-1] - mean_field.values[-1]) ** 2
    )
    return total


def sample_rewards(
    params: GameParams,
    grid: TimeGrid,
    policy: PolicyParams,
    mean_field: MeanField,
    n_paths: int,
    stream: np.random.Generator,
) -> np.ndarray:
    """Realized rewards over n_paths independent paths (fixed draw layout)."""
    policy.check_aligned(grid)
    mean_field.check_aligned(grid)
    out = np.empty(n_paths)
    done = 0
    while done < n_paths:
        c = min(_CHUNK, n_paths - done)
        x0, dW = _draw_batch(stream, params, grid.dt, c, grid.n_steps)
        out[done : done + c] = _batch_rewards(
            params, grid.dt, mean_field.values, policy.m_hat, policy.sigma2, x0, dW
        )
        done += c
    return out


def simulate_states(
    params: GameParams,
    grid: TimeGrid,
    policy: PolicyParams,
    mean_field: MeanField,
    n_paths: int,
    stream: np.random.Generator,
) -> np.ndarray:
    """State paths for n_paths independent rollouts, shape (n_paths, N + 1)."""
    policy.check_aligned(grid)
    mean_field.check_aligned(grid)
    out = np.empty((n_paths, grid.n_steps + 1))
    done = 0
    while done < n_paths:
        c = min(_CHUNK, n_paths - done)
        x0, dW = _draw_batch(stream, params, grid.dt, c, grid.n_steps)
        out[done : done + c] = _batch_states(
            params, grid.dt, mean_field.values, policy.m_hat, policy.sigma2, x0, dW
        )
        done += c
    return out


def mc_expected_reward(
    params: GameParams,
    grid: TimeGrid,
    policy: PolicyParams,
    mean_field: MeanField,
    n_paths: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, stderr) of the expected reward."""
    if n_paths < 2:
        raise ParameterError("n_paths must be >= 2")
    stream = rng.substream(seed, rng.TRAJECTORY)
    rewards = sample_rewards(params, grid, policy, mean_field, n_paths, stream)
    return float(rewards.mean()), float(rewards.std(ddof=1) / np.sqrt(n_paths))


def expected_reward_exact(
    params: GameParams, grid: TimeGrid, policy: PolicyParams, mean_field: MeanField
) -> float:
    """Exact expectation of the realized reward under the discrete dynamics.

    The state's first and second moments close into linear recursions because
    drift is affine and squared diffusion quadratic in the state, so the
    expected reward needs no sampling. This is the discrete-time counterpart
    of the moment-ODE payoff evaluator and the systematic (bias) part of any
    Monte Carlo estimate of the same quantity.
    """
    policy.check_aligned(grid)
    mean_field.check_aligned(grid)
    dt = grid.dt
    m = mean_field.values
    a = params.A + params.B * policy.m_hat
    mhat = params.xi_mean
    phi2 = params.xi_second_moment
    total = 0.0
    for s in range(grid.n_steps):
        gap2 = phi2 - 2.0 * m[s] * mhat + m[s] ** 2
        total += -0.5 * params.Q * gap2 * dt
        if params.lambda_se > 0.0:
            total += (
                0.5 * params.lambda_se
                * math.log(2.0 * math.pi * math.e * policy.sigma2[s]) * dt
            )
        shrink = 1.0 - a * dt
        mhat_next = shrink * mhat + a * dt * m[s]
        phi2 = (
            shrink**2 * phi2
            + 2.0 * shrink * a * dt * m[s] * mhat
            + (a * dt * m[s]) ** 2
            + dt * params.D**2 * (policy.m_hat**2 * gap2 + policy.sigma2[s])
        )
        mhat = mhat_next
    total += -0.5 * params.Q_bar * (phi2 - 2.0 * m[-1] * mhat + m[-1] ** 2)
    return float(total)


def propagate_mean_field(
    params: GameParams, grid: TimeGrid, policy: PolicyParams, prev: MeanField
) -> MeanField:
    """Exact mean path when every agent plays the policy against ``prev``.

    This is the expectation of the discrete dynamics (the fictitious-play
    update): the new path starts at the initial mean and reverts toward the
    previous iteration's path at rate A + B*m_hat. Deterministic.
    """
    policy.check_aligned(grid)
    prev.check_aligned(grid)
    a = params.A + params.B * policy.m_hat
    out = np.empty(grid.n_steps + 1)
    out[0] = params.xi_mean
    for s in range(grid.n_steps):
        out[s + 1] = out[s] + a * (prev.values[s] - out[s]) * grid.dt
    return MeanField(out)


def propagate_mean_field_mc(
    params: GameParams,
    grid: TimeGrid,
    policy: PolicyParams,
    prev: MeanField,
    n_paths: int,
    seed: int,
) -> MeanField:
    """Monte Carlo variant of the mean-field update (comparison switch)."""
    if n_paths < 2:
        raise ParameterError("n_paths must be >= 2")
    policy.check_aligned(grid)
    prev.check_aligned(grid)
    stream = rng.substream(seed, rng.TRAJECTORY)
    sums = np.zeros(grid.n_steps + 1)
    done = 0
    while done < n_paths:
        c = min(_CHUNK, n_paths - done)
        x0, dW = _draw_batch(stream, params, grid.dt, c, grid.n_steps)
        states = _batch_states(
            params, grid.dt, prev.values, policy.m_hat, policy.sigma2, x0, dW
        )
        sums += states.sum(axis=0)
        done += c
    return MeanField(sums / n_paths)
