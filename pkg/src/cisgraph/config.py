"""Flat key-value run configuration with CLI-flag overrides.

Config files hold one ``key = value`` pair per line with ``#`` comments.
Flags win over the file.  The effective configuration can be serialized
back to the same format; re-running it reproduces the outputs bit for bit.
The worker count can be overridden by the CISGRAPH_WORKERS environment
variable (useful in CI); the effective config records the final value.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from cisgraph.adaptive import AdaptiveConfig, MODES
from cisgraph.engine import RunConfig
from cisgraph.graph import BuildPlan
from cisgraph.image import ImageConfig
from cisgraph.system import MODEL_NAMES, MODEL_PARAMS, make_model

__all__ = ["ConfigError", "ResolvedConfig", "parse_config_text",
           "resolve_config", "render_config", "WORKERS_ENV_VAR"]

WORKERS_ENV_VAR = "CISGRAPH_WORKERS"

_DEFAULTS = {
    "model": "cstr",
    "iterations": "20",
    "mode": "full",
    "N": "3",
    "delta": "0.01",
    "include_face_points": "false",
    "samples_per_dim": "3",
    "bloat": "0.1",
    "input_grid": "3",
    "workers": "1",
    "batch_size": "1024",
    "min_diameter": "",
    "strict_largest_scc": "false",
}

_MODEL_PARAM_PREFIXES = tuple(f"{name}." for name in MODEL_NAMES)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


@dataclass
class ResolvedConfig:
    run_config: RunConfig
    effective: dict  # str -> str, round-trips through render/parse


def parse_config_text(text: str) -> dict:
    """Parse flat 'key = value' lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], f"malformed line {lineno} (expected key = value)")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def render_config(effective: dict) -> str:
    return "".join(f"{k} = {effective[k]}\n" for k in sorted(effective))


def _parse_int(key, value, minimum=None):
    try:
        v = int(value)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be at least {minimum}")
    return v


def _parse_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {value!r}") from None


def _parse_bool(key, value):
    low = value.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(key, f"expected true/false, got {value!r}")


def _parse_counts(key, value):
    try:
        parts = [int(p) for p in value.split(",")]
    except ValueError:
        raise ConfigError(key, f"expected an integer or comma list, got {value!r}") from None
    if any(p < 2 for p in parts):
        raise ConfigError(key, "input grid counts must be at least 2")
    return parts[0] if len(parts) == 1 else tuple(parts)


def resolve_config(file_values: dict | None = None, overrides: dict | None = None,
                   check_containment: bool = True,
                   keep_final_graph: bool = False,
                   snapshot_iterations: tuple = ()) -> ResolvedConfig:
    """Merge defaults, config-file values and flag overrides into a RunConfig.

    Raises ConfigError naming the offending key on any invalid or unknown
    entry.
    """
    values = dict(_DEFAULTS)
    model_params: dict[str, str] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key in _DEFAULTS:
                values[key] = str(value)
            elif key.startswith(_MODEL_PARAM_PREFIXES):
                model_params[key] = str(value)
            else:
                raise ConfigError(key, "unknown configuration key")
    env_workers = os.environ.get(WORKERS_ENV_VAR)
    if env_workers:
        values["workers"] = env_workers

    name = values["model"]
    if name not in MODEL_NAMES:
        raise ConfigError("model", f"unknown model {name!r}; known: {', '.join(MODEL_NAMES)}")
    own_params = {}
    for key, value in model_params.items():
        prefix, param = key.split(".", 1)
        if prefix != name:
            raise ConfigError(key, f"parameter does not apply to model {name!r}")
        if param not in MODEL_PARAMS[name]:
            raise ConfigError(key, f"unknown parameter of model {name!r}")
        own_params[param] = _parse_float(key, value)
    try:
        model = make_model(name, **own_params)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None

    mode = values["mode"]
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}")
    delta = _parse_float("delta", values["delta"])
    if not delta > 0:
        raise ConfigError("delta", "must be positive")
    bloat = _parse_float("bloat", values["bloat"])
    if bloat < 0:
        raise ConfigError("bloat", "must be nonnegative")
    min_diameter = None
    if values["min_diameter"]:
        min_diameter = _parse_float("min_diameter", values["min_diameter"])
        if not min_diameter > 0:
            raise ConfigError("min_diameter", "must be positive")

    run_config = RunConfig(
        model=model,
        iterations=_parse_int("iterations", values["iterations"], minimum=1),
        min_diameter=min_diameter,
        adaptive=AdaptiveConfig(
            mode=mode,
            n_neighbors=_parse_int("N", values["N"], minimum=0),
            delta=delta,
            include_face_points=_parse_bool(
                "include_face_points", values["include_face_points"]
            ),
        ),
        image=ImageConfig(
            samples_per_dim=_parse_int("samples_per_dim", values["samples_per_dim"],
                                       minimum=2),
            bloat=bloat,
        ),
        plan=BuildPlan(
            batch_size=_parse_int("batch_size", values["batch_size"], minimum=1),
            workers=_parse_int("workers", values["workers"], minimum=1),
        ),
        input_counts=_parse_counts("input_grid", values["input_grid"]),
        strict_largest_scc=_parse_bool(
            "strict_largest_scc", values["strict_largest_scc"]
        ),
        check_containment=check_containment,
        keep_final_graph=keep_final_graph,
        snapshot_iterations=snapshot_iterations,
    )
    effective = dict(values)
    effective.update(model_params)
    return ResolvedConfig(run_config=run_config, effective=effective)
