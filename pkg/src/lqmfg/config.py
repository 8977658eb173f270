"""Experiment configuration: one JSON tree with dotted-key overrides.

The schema mirrors the dataclasses it builds: a ``game`` section
(GameParams), ``grid`` (n_steps; the step is T / n_steps), ``learner``
(LearnerConfig minus the master seed, which always comes from the top-level
``seed``), the temperature sweep, evaluation path count, output directory and
seed. Validation errors name the offending dotted key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .learner import InitSpec, LearnerConfig
from .params import REFERENCE_MODEL, GameParams, ParameterError, TimeGrid


class ConfigError(ValueError):
    """Configuration file or override rejected; the message names the key."""


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameParams
    grid: TimeGrid
    learner: LearnerConfig
    lambda_se_values: tuple
    n_eval_paths: int
    output_dir: Optional[str]
    seed: int


_GAME_FIELDS = (
    "A", "B", "D", "Q", "Q_bar", "lambda_se", "lambda_ce", "T",
    "xi_mean", "xi_second_moment",
)
_LEARNER_FIELDS = (
    "n_outer", "n_inner", "n_perturbations", "radius", "step_size",
    "sigma_floor", "initial_mean_field", "shared_rollout_noise",
    "baseline", "warm_start",
)
_INIT_FIELDS = ("m_hat_mean", "m_hat_var", "sigma2_mean", "sigma2_var")
_INT_FIELDS = {
    "grid.n_steps", "learner.n_outer", "learner.n_inner",
    "learner.n_perturbations", "n_eval_paths", "seed",
}
_BOOL_FIELDS = {"learner.shared_rollout_noise", "learner.warm_start"}
_STR_FIELDS = {"learner.baseline", "output_dir"}


def default_config() -> ExperimentConfig:
    """Built-in reference configuration (the reported experiment)."""
    game = GameParams(**REFERENCE_MODEL)
    return ExperimentConfig(
        game=game,
        grid=TimeGrid.from_horizon(game.T, 5),
        learner=LearnerConfig(master_seed=0),
        lambda_se_values=(0.0, 1.0, 3.0),
        n_eval_paths=4096,
        output_dir=None,
        seed=0,
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "game": {name: getattr(cfg.game, name) for name in _GAME_FIELDS},
        "grid": {"n_steps": cfg.grid.n_steps},
        "learner": {
            **{name: getattr(cfg.learner, name) for name in _LEARNER_FIELDS},
            "init": {name: getattr(cfg.learner.init, name) for name in _INIT_FIELDS},
        },
        "lambda_se_values": list(cfg.lambda_se_values),
        "n_eval_paths": cfg.n_eval_paths,
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
    }


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required field {where}{key}")
    return section[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {where} must be a number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"field {where} must be an integer, got {value!r}")
    return value


def _check_unknown(section: dict, allowed, where: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown field {where}{key}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    _check_unknown(
        data,
        ("game", "grid", "learner", "lambda_se_values", "n_eval_paths",
         "output_dir", "seed"),
        "",
    )
    game_sec = _need(data, "game", "")
    _check_unknown(game_sec, _GAME_FIELDS, "game.")
    try:
        game = GameParams(
            **{name: _number(_need(game_sec, name, "game."), f"game.{name}")
               for name in _GAME_FIELDS}
        )
    except ParameterError as exc:
        raise ConfigError(f"game: {exc}") from exc

    grid_sec = _need(data, "grid", "")
    _check_unknown(grid_sec, ("n_steps",), "grid.")
    n_steps = _integer(_need(grid_sec, "n_steps", "grid."), "grid.n_steps")
    try:
        grid = TimeGrid.from_horizon(game.T, n_steps)
    except ParameterError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    learner_sec = dict(_need(data, "learner", ""))
    init_sec = learner_sec.pop("init", {})
    _check_unknown(learner_sec, _LEARNER_FIELDS, "learner.")
    _check_unknown(init_sec, _INIT_FIELDS, "learner.init.")
    seed = _integer(_need(data, "seed", ""), "seed")
    kwargs = {}
    for name in _LEARNER_FIELDS:
        value = _need(learner_sec, name, "learner.")
        where = f"learner.{name}"
        if where in _INT_FIELDS:
            kwargs[name] = _integer(value, where)
        elif where in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise ConfigError(f"field {where} must be a boolean, got {value!r}")
            kwargs[name] = value
        elif where in _STR_FIELDS:
            if not isinstance(value, str):
                raise ConfigError(f"field {where} must be a string, got {value!r}")
            kwargs[name] = value
        else:
            kwargs[name] = _number(value, where)
    init_kwargs = {
        name: _number(_need(init_sec, name, "learner.init."), f"learner.init.{name}")
        for name in _INIT_FIELDS
    }
    try:
        learner = LearnerConfig(
            init=InitSpec(**init_kwargs), master_seed=seed, **kwargs
        )
    except ParameterError as exc:
        raise ConfigError(f"learner: {exc}") from exc

    lam_values = _need(data, "lambda_se_values", "")
    if not isinstance(lam_values, list) or not lam_values:
        raise ConfigError("field lambda_se_values must be a nonempty list")
    lam_tuple = tuple(
        _number(v, f"lambda_se_values[{i}]") for i, v in enumerate(lam_values)
    )
    for i, v in enumerate(lam_tuple):
        if v < 0:
            raise ConfigError(f"field lambda_se_values[{i}] must be nonnegative")

    n_eval = _integer(_need(data, "n_eval_paths", ""), "n_eval_paths")
    if n_eval < 2:
        raise ConfigError("field n_eval_paths must be >= 2")
    out_dir = data.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError(f"field output_dir must be a string or null, got {out_dir!r}")
    return ExperimentConfig(
        game=game,
        grid=grid,
        learner=learner,
        lambda_se_values=lam_tuple,
        n_eval_paths=n_eval,
        output_dir=out_dir,
        seed=seed,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def apply_overrides(data: dict, overrides) -> dict:
    """Apply dotted-key overrides (``game.A=2.5``) to a config tree.

    Values parse as JSON when possible and as raw strings otherwise; the
    resulting tree still goes through full schema validation.
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown config section {part!r} in override {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config field {key!r}")
        node[parts[-1]] = value
    return data
