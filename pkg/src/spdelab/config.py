"""Strict JSON experiment configs: one document per run, unknown keys rejected."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .domain import DomainSpec, NoiseSpec, SigmaSpec, bump, constant, ground_mode

COMMANDS = ("verify-kernels", "bounds", "solve", "simulate", "threshold")


class ConfigError(ValueError):
    pass


def _check_keys(block: dict, allowed: set, required: set, context: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{context}: expected an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"{context}: missing required key(s) {sorted(missing)}")


def _number(block, key, context, default=None, positive=False):
    if key not in block:
        if default is None:
            raise ConfigError(f"{context}: missing {key}")
        return default
    v = block[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(f"{context}: {key} must be a finite number")
    if positive and v <= 0:
        raise ConfigError(f"{context}: {key} must be positive")
    return float(v)


def parse_domain(block, context="domain") -> DomainSpec:
    _check_keys(block, {"length", "boundary", "drift"}, {"length"}, context)
    try:
        return DomainSpec(length=_number(block, "length", context, positive=True),
                          boundary=block.get("boundary", "dirichlet"),
                          drift=_number(block, "drift", context, default=0.0))
    except ValueError as e:
        raise ConfigError(f"{context}: {e}") from e


def parse_noise(block, context="noise") -> NoiseSpec:
    if block is None:
        return NoiseSpec(kind="white")
    _check_keys(block, {"kind", "covariance", "alpha", "ell"}, {"kind"}, context)
    try:
        return NoiseSpec(kind=block["kind"], covariance=block.get("covariance"),
                         alpha=_number(block, "alpha", context, default=0.5),
                         ell=_number(block, "ell", context, default=1.0))
    except ValueError as e:
        raise ConfigError(f"{context}: {e}") from e


def parse_sigma(block, context="sigma") -> SigmaSpec:
    if block is None:
        return SigmaSpec()
    _check_keys(block, {"kind", "l_sigma", "L_sigma"}, set(), context)
    try:
        return SigmaSpec(kind=block.get("kind", "linear"),
                         l_sigma=_number(block, "l_sigma", context, default=1.0),
                         L_sigma=_number(block, "L_sigma", context, default=1.0))
    except ValueError as e:
        raise ConfigError(f"{context}: {e}") from e


def parse_u0(block, length: float, context="u0"):
    if block is None:
        return bump(length)
    _check_keys(block, {"kind", "value"}, {"kind"}, context)
    kind = block["kind"]
    if kind == "bump":
        return bump(length)
    if kind == "constant":
        return constant(length, _number(block, "value", context, default=1.0))
    if kind == "ground_mode":
        return ground_mode(length)
    raise ConfigError(f"{context}: unknown kind {kind!r} (bump, constant, ground_mode)")


_TOP_KEYS = {
    "verify-kernels": {"command", "out", "grid"},
    "bounds": {"command", "out", "domain", "beta_fractions", "eps_fraction", "renewal"},
    "solve": {"command", "out", "equation", "domain", "lambdas", "sigma_slope",
              "noise", "u0", "horizon", "nodes", "dt", "rate_window", "picard_check"},
    "simulate": {"command", "out", "domain", "lambda", "sigma", "noise", "u0",
                 "nodes", "dt", "horizon", "snapshots", "paths", "moments", "seed",
                 "dump_paths"},
    "threshold": {"command", "out", "domain", "u0", "bracket", "horizon", "nodes",
                  "dt", "scan_lambdas", "paths", "seed", "snapshots", "sim_dt"},
}

_SEED_REQUIRED = {"simulate"}


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")
    _check_keys(raw, _TOP_KEYS[command], {"command"}, "config")
    if command in _SEED_REQUIRED and "seed" not in raw:
        raise ConfigError(f"{command}: stochastic command requires a seed")
    if command == "threshold" and raw.get("paths", 0) and "seed" not in raw:
        raise ConfigError("threshold: seed required when paths > 0")
    return raw
