"""Closed-form equilibrium objects of the entropy-regularized LQ game.

Two game variants are supported, selected by the ``game`` argument:

* ``"se"``: self-exploration only (Shannon bonus, temperature lambda_se);
* ``"ee"``: enhanced exploration (additional cross-exploration bonus at
  temperature lambda_ce). ``lambda_ce == 0`` reduces "ee" to "se" exactly.

Everything here is a pure function of its inputs: the quadratic value
coefficient solving the scalar backward Riccati ODE, the value offset, the
equilibrium Gaussian feedback policy, the equilibrium state variance, the
game value, and the expected payoff of an arbitrary Gaussian feedback policy
evaluated through its first/second state-moment ODEs.

Riccati coefficients are always evaluated from the closed form; ODE stepping
appears only in test oracles. Integrals use composite trapezoid on a uniform
refinement of the simulation grid (smooth integrands, O(h^2) error,
verifiable by refinement).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import DomainError, GameParams, ParameterError, TimeGrid

GAMES = ("se", "ee")

# Default quadrature refinement: sub-steps per simulation step.
DEFAULT_REFINEMENT = 100


def _check_game(game: str) -> None:
    if game not in GAMES:
        raise ParameterError(f"game must be one of {GAMES}, got {game!r}")


def temperature(params: GameParams, game: str) -> float:
    """Total exploration temperature of the variant."""
    _check_game(game)
    return params.lambda_se + (params.lambda_ce if game == "ee" else 0.0)


def _temperature_ratio(params: GameParams, game: str) -> float:
    if game == "se":
        return 1.0
    params.require_positive_temperature()
    return temperature(params, game) / params.lambda_se


def decay_rate(params: GameParams, game: str) -> float:
    """Rate of the linear backward ODE solved by the value curvature."""
    ratio = _temperature_ratio(params, game)
    return 2.0 * params.A + params.B**2 / params.D**2 * ratio


def riccati_coefficient(params: GameParams, t, game: str = "se"):
    """Quadratic coefficient of the value function at time(s) ``t``.

    Solves eta' = rho * eta - Q backward from eta(T) = Q_bar, where rho is
    ``decay_rate``. Strictly positive on [0, T]; accepts scalar or array t.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > params.T):
        raise DomainError(f"time outside the horizon [0, {params.T}]")
    rho = decay_rate(params, game)
    decay = np.exp(-rho * (params.T - t_arr))
    out = params.Q_bar * decay + (params.Q / rho) * (1.0 - decay)
    return out if out.ndim else float(out)


def _refined_times(t0: float, t1: float, base_dt: float, refinement: int) -> np.ndarray:
    """Uniform quadrature nodes on [t0, t1] with step about base_dt/refinement."""
    span = t1 - t0
    if span <= 0.0:
        return np.array([t0])
    n = max(1, math.ceil(span / base_dt - 1e-12) * refinement)
    return np.linspace(t0, t1, n + 1)


def value_offset(
    params: GameParams,
    t: float,
    grid: TimeGrid,
    game: str = "se",
    refinement: int = DEFAULT_REFINEMENT,
) -> float:
    """State-independent part of the value function at time ``t``.

    Vanishes identically at t = T. For "ee" a third term proportional to
    lambda_ce integrates the value curvature against the equilibrium state
    variance; it drops out exactly at lambda_ce = 0.
    """
    params.check_time(t)
    params.require_positive_temperature()
    _check_game(game)
    if t == params.T:
        return 0.0
    lam = temperature(params, game)
    zs = _refined_times(t, params.T, grid.dt, refinement)
    eta = riccati_coefficient(params, zs, game)
    out = (lam / 2.0) * math.log(2.0 * math.pi * lam / params.D**2) * (params.T - t)
    out -= (lam / 2.0) * float(np.trapezoid(np.log(eta), zs))
    if game == "ee" and params.lambda_ce > 0.0:
        kappa = _state_variance_path(params, zs, start_time=t, game="ee")
        coeff = (params.B**2 / (2.0 * params.D**2)) * params.lambda_ce * lam / params.lambda_se**2
        out += coeff * float(np.trapezoid(eta * kappa, zs))
    return out


def equilibrium_state_rates(params: GameParams, game: str = "ee") -> tuple[float, float]:
    """Linear rates (drift_rate, variance_feedback_rate) of the equilibrium state.

    The equilibrium state follows a linear SDE whose variance obeys
    var' = (2*drift_rate + variance_feedback_rate) * var + source; the drift
    rate is negative (mean reversion), the feedback rate positive.

    The drift rate is A plus the control gain B times the policy's feedback
    coefficient ratio*B/D^2, i.e. -(A + ratio * B^2/D^2). Only the control
    part is amplified by the temperature ratio; an alternative form scaling
    the whole sum by the ratio disagrees with simulation of the equilibrium
    dynamics whenever the cross temperature is positive (19 sigma at
    lambda_se = lambda_ce = 1 with 2e5 paths) and is not used.
    """
    ratio = _temperature_ratio(params, game)
    drift_rate = -(params.A + ratio * params.B**2 / params.D**2)
    variance_feedback = (params.B / params.D * ratio) ** 2
    return drift_rate, variance_feedback


def _state_variance_path(
    params: GameParams, times: np.ndarray, start_time: float, game: str
) -> np.ndarray:
    """Equilibrium Var[X_s] along ``times`` for the game started at start_time."""
    lam = temperature(params, game)
    drift_rate, feedback = equilibrium_state_rates(params, game)
    rate = 2.0 * drift_rate + feedback
    eta = riccati_coefficient(params, times, game)
    rel = times - start_time
    # var(s) = e^{rate*(s-t0)} * (var0 + \int_{t0}^{s} e^{-rate*(u-t0)} lam/eta(u) du)
    integrand = np.exp(-rate * rel) * lam / eta
    cum = np.concatenate(
        ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times)))
    )
    return np.exp(rate * rel) * (params.xi_var + cum)


def equilibrium_state_variance(
    params: GameParams,
    s: float,
    grid: TimeGrid,
    game: str = "ee",
    start_time: float = 0.0,
    refinement: int = DEFAULT_REFINEMENT,
) -> float:
    """Variance of the equilibrium state at time ``s``, started at ``start_time``."""
    params.require_positive_temperature()
    _check_game(game)
    params.check_time(start_time)
    if not start_time <= s <= params.T:
        raise DomainError(f"time {s!r} outside [{start_time}, {params.T}]")
    times = _refined_times(start_time, s, grid.dt, refinement)
    return float(_state_variance_path(params, times, start_time, game)[-1])


def constant_fn(value: float) -> Callable:
    """Time function that is identically ``value`` (vectorized)."""

    def fn(t):
        return np.full_like(np.asarray(t, dtype=float), value) if np.ndim(t) else value

    return fn


def step_fn(values: np.ndarray, grid: TimeGrid) -> Callable:
    """Right-continuous step function holding values[s] on [s*dt, (s+1)*dt)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_steps,):
        raise ParameterError(
            f"expected {grid.n_steps} per-step values, got shape {values.shape}"
        )

    def fn(t):
        idx = np.clip((np.asarray(t) / grid.dt).astype(int), 0, grid.n_steps - 1)
        out = values[idx]
        return out if np.ndim(t) else float(out)

    return fn


@dataclass(frozen=True)
class GaussianFeedbackPolicy:
    """Feedback law: at state x and time t, act by N(mean_coeff*(m(t) - x), variance_fn(t)).

    ``reference_mean_fn`` is the population-mean path the feedback is taken
    against; for equilibrium policies it is the constant xi_mean.
    """

    mean_coeff: float
    variance_fn: Callable
    reference_mean_fn: Callable

    def variance_on(self, times) -> np.ndarray:
        return np.asarray(self.variance_fn(np.asarray(times, dtype=float)), dtype=float)

    def reference_mean_on(self, times) -> np.ndarray:
        return np.asarray(self.reference_mean_fn(np.asarray(times, dtype=float)), dtype=float)


def equilibrium_policy(params: GameParams, game: str = "se") -> GaussianFeedbackPolicy:
    """Equilibrium Gaussian feedback policy of the chosen game variant."""
    params.require_positive_temperature()
    _check_game(game)
    ratio = _temperature_ratio(params, game)
    lam = temperature(params, game)
    mean_coeff = ratio * params.B / params.D**2

    def variance_fn(t):
        return lam / (params.D**2 * riccati_coefficient(params, t, game))

    return GaussianFeedbackPolicy(
        mean_coeff=mean_coeff,
        variance_fn=variance_fn,
        reference_mean_fn=constant_fn(params.xi_mean),
    )


def game_value(
    params: GameParams,
    game: str,
    t: float = 0.0,
    grid: TimeGrid | None = None,
    refinement: int = DEFAULT_REFINEMENT,
) -> float:
    """Expected value of the game at time ``t`` over the initial distribution.

    Averaging the quadratic value ansatz over the initial state gives
    -eta(t)/2 * Var[xi] + gamma(t).
    """
    if grid is None:
        grid = TimeGrid.from_horizon(params.T, 1)
    eta_t = riccati_coefficient(params, t, game)
    return -0.5 * eta_t * params.xi_var + value_offset(params, t, grid, game, refinement)


@dataclass(frozen=True)
class PayoffBreakdown:
    """Expected payoff of a Gaussian feedback policy, with its three parts."""

    total: float
    running_quadratic: float
    entropy: float
    terminal: float


def _moment_paths(
    params: GameParams,
    mean_coeff: float,
    variance_fn: Callable,
    mean_field_fn: Callable,
    times: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """First and second moments of the controlled state along ``times`` (RK4).

    The controlled dynamics aggregate the policy's action moments, so the
    state moments close into a linear ODE system:

        mhat' = a * (m(t) - mhat),                      a = A + B*mean_coeff
        phi2' = -2a*phi2 + 2a*m(t)*mhat
                + D^2 * (mean_coeff^2 * (phi2 - 2*m(t)*mhat + m(t)^2) + var(t))
    """
    a = params.A + params.B * mean_coeff
    D2 = params.D**2
    M2 = mean_coeff**2

    def rhs(t, mhat, phi2):
        m = mean_field_fn(t)
        var = variance_fn(t)
        ex2 = phi2 - 2.0 * m * mhat + m * m
        dm = a * (m - mhat)
        dp = -2.0 * a * phi2 + 2.0 * a * m * mhat + D2 * (M2 * ex2 + var)
        return dm, dp

    n = len(times)
    mhat = np.empty(n)
    phi2 = np.empty(n)
    mhat[0] = params.xi_mean
    phi2[0] = params.xi_second_moment
    for i in range(n - 1):
        t, h = times[i], times[i + 1] - times[i]
        k1m, k1p = rhs(t, mhat[i], phi2[i])
        k2m, k2p = rhs(t + h / 2, mhat[i] + h / 2 * k1m, phi2[i] + h / 2 * k1p)
        k3m, k3p = rhs(t + h / 2, mhat[i] + h / 2 * k2m, phi2[i] + h / 2 * k2p)
        k4m, k4p = rhs(t + h, mhat[i] + h * k3m, phi2[i] + h * k3p)
        mhat[i + 1] = mhat[i] + h / 6 * (k1m + 2 * k2m + 2 * k3m + k4m)
        phi2[i + 1] = phi2[i] + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return mhat, phi2


def feedback_policy_payoff(
    params: GameParams,
    policy: GaussianFeedbackPolicy,
    mean_field_fn,
    grid: TimeGrid,
    start_time: float = 0.0,
    refinement: int = DEFAULT_REFINEMENT,
) -> PayoffBreakdown:
    """Expected payoff of an arbitrary Gaussian feedback policy against m(t).

    ``mean_field_fn`` is either a vectorized callable t -> m(t) or a
    grid-aligned MeanField (interpolated piecewise-linearly). Integrates the
    state-moment ODEs forward on the refined grid and assembles the running
    quadratic penalty, the Shannon exploration bonus, and the terminal
    penalty by composite trapezoid. Requires strictly positive policy
    variance along the horizon.
    """
    params.check_time(start_time)
    if hasattr(mean_field_fn, "interpolant"):
        mean_field_fn = mean_field_fn.interpolant(grid)
    times = _refined_times(start_time, params.T, grid.dt, refinement)
    var = np.asarray(policy.variance_fn(times), dtype=float)
    if np.any(var <= 0.0):
        raise DomainError("policy variance must be strictly positive on the horizon")
    m = np.asarray(mean_field_fn(times), dtype=float)
    mhat, phi2 = _moment_paths(
        params, policy.mean_coeff, policy.variance_fn, mean_field_fn, times
    )
    ex2 = phi2 - 2.0 * m * mhat + m * m
    running = -0.5 * params.Q * float(np.trapezoid(ex2, times))
    entropy = 0.5 * params.lambda_se * float(
        np.trapezoid(np.log(2.0 * math.pi * math.e * var), times)
    )
    terminal = -0.5 * params.Q_bar * float(ex2[-1])
    return PayoffBreakdown(
        total=running + entropy + terminal,
        running_quadratic=running,
        entropy=entropy,
        terminal=terminal,
    )


def second_moment_path_closed_form(
    params: GameParams,
    mean_coeff: float,
    variance_fn: Callable,
    mean_field_fn: Callable,
    grid: TimeGrid,
    start_time: float = 0.0,
    refinement: int = DEFAULT_REFINEMENT,
    corrected: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exponential-kernel form of the state moment paths (times, mhat, phi2).

    With ``corrected=True`` this matches the ODE route (`_moment_paths`) up to
    quadrature error. ``corrected=False`` reproduces an uncorrected variant
    (opposite sign on the mean-path integral, missing factor 2 on the
    squared-integral cross term) kept only for numerical comparison; it
    disagrees with Monte Carlo whenever the mean path is nonzero.
    """
    k_hat = -(params.A + params.B * mean_coeff)
    D2M2 = params.D**2 * mean_coeff**2
    times = _refined_times(start_time, params.T, grid.dt, refinement)
    rel = times - start_time
    m = np.asarray(mean_field_fn(times), dtype=float)
    var = np.asarray(variance_fn(times), dtype=float)

    def cumtrap(f):
        return np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(times))))

    # mean path: mhat(s) = e^{k(s-t0)} E[xi] -/+ \int e^{k(s-z)} k m(z) dz
    kernel = cumtrap(np.exp(-k_hat * rel) * k_hat * m)
    sign = -1.0 if corrected else 1.0
    mhat = np.exp(k_hat * rel) * (params.xi_mean + sign * kernel)

    factor = 2.0 if corrected else 1.0
    b_dot = (
        -2.0 * params.xi_mean * np.exp(-k_hat * rel) * k_hat * m
        + factor * kernel * np.exp(-k_hat * rel) * k_hat * m
        + np.exp(-2.0 * k_hat * rel)
        * params.D**2
        * (mean_coeff**2 * m * m - 2.0 * mean_coeff**2 * m * mhat + var)
    )
    inner = cumtrap(np.exp(-D2M2 * rel) * b_dot)
    phi2 = np.exp((2.0 * k_hat + D2M2) * rel) * (params.xi_second_moment + inner)
    return times, mhat, phi2


@dataclass(frozen=True)
class EquilibriumSolution:
    """Equilibrium summary of one game variant on a simulation grid."""

    game: str
    times: np.ndarray
    riccati: np.ndarray
    value_offset: np.ndarray
    policy: GaussianFeedbackPolicy
    policy_variance: np.ndarray
    game_value: float
    m_star: float
    state_variance: np.ndarray


def solve_equilibrium(
    params: GameParams,
    game: str,
    grid: TimeGrid,
    t: float = 0.0,
    refinement: int = DEFAULT_REFINEMENT,
) -> EquilibriumSolution:
    """Evaluate every closed-form equilibrium object on the grid."""
    params.require_positive_temperature()
    _check_game(game)
    times = grid.times()
    policy = equilibrium_policy(params, game)
    offsets = np.array(
        [value_offset(params, float(z), grid, game, refinement) for z in times]
    )
    # Population variance is anchored at the start time; undefined before it.
    var_path = np.array(
        [
            equilibrium_state_variance(params, float(z), grid, game, t, refinement)
            if z >= t
            else np.nan
            for z in times
        ]
    )
    return EquilibriumSolution(
        game=game,
        times=times,
        riccati=riccati_coefficient(params, times, game),
        value_offset=offsets,
        policy=policy,
        policy_variance=policy.variance_on(times),
        game_value=game_value(params, game, t, grid, refinement),
        m_star=params.xi_mean,
        state_variance=var_path,
    )
