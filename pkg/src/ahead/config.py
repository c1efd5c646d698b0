"""Experiment configuration files: flat key=value text with sections.

The format is INI-style and intentionally boring, one scalar per line, so
configs diff cleanly under version control.  Sections:

* ``[run]``    what to do: kind, profile, seed, output/cache paths, format.
* ``[model]``  overrides for ModelParams fields.
* ``[grid]``   overrides for GridSpec fields (applied on top of the profile).
* ``[sweep]``  axis lists for sweep kinds; values are comma lists, a float
               axis may also be written ``lo:hi:count``.

The ``desk`` profile shortens the horizon (T=20, delta=0.25) and keeps grids
coarse; ``repro`` runs the full-scale configuration and refuses to fill in
the calibration constants (sigma, lambda_minus, lambda_plus) silently, since
no reference values exist for them and every number downstream depends on
the choice.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .params import GridSpec, ModelParams

KINDS = ("subgame_sweep", "game", "duration", "baselines", "table3",
         "table4", "simulate", "epsilon")
PROFILES = ("desk", "repro")
FORMATS = ("csv", "json")

CACHE_ENV = "AHEAD_CACHE_DIR"

_DESK_MODEL = {"T": 20.0, "delta": 0.25}

_MODEL_TYPES = {
    "sigma": float, "K": float, "q": float, "v_a": float, "v_b": float,
    "lambda_minus": float, "lambda_plus": float, "h": float, "T": float,
    "delta": float, "n_hat": int, "n_hat_ab": int,
    "sim_trigger_mode": str, "p_minus_pstar0": float, "target_rounding": str,
}
# the calibration constants the repro profile refuses to default
_CALIBRATED = ("sigma", "lambda_minus", "lambda_plus")

_GRID_TYPES = {
    "s_max": float, "s_nodes": int, "n_max_a": int, "n_max_b": int,
    "l_max_a": float, "l_max_b": float, "l_nodes_a": int, "l_nodes_b": int,
    "m_max": int, "delta_auction": float, "s_stretch": float,
}

_RUN_KEYS = ("kind", "profile", "out", "cache", "seed", "paths", "log_paths",
             "threads", "format", "emit_policies", "confirm_long", "figures")

_SWEEP_KEYS = ("h_values", "q_values", "n_plus_values", "n_plus_b_values",
               "x_values", "x_a_values", "x_b_values", "v_pairs", "s_values")

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    """Fully resolved run description; construction implies validity."""

    kind: str
    params: ModelParams
    grid: GridSpec
    profile: str = "desk"
    out_dir: str = "out"
    cache_dir: str | None = None
    seed: int = 0
    paths: int = 10000
    log_paths: int = 100
    threads: int = 1
    fmt: str = "csv"
    emit_policies: bool = False
    confirm_long: bool = False
    figures: bool = True
    sweep: dict = field(default_factory=dict)
    # [model] keys given explicitly, as opposed to calibration defaults;
    # the sidecar reports which unmeasured constants were defaulted
    explicit_model: tuple = ()

    def defaulted_calibration(self) -> tuple:
        return tuple(k for k in _CALIBRATED if k not in self.explicit_model)


# ----------------------------------------------------------------------
# scalar and list parsing
# ----------------------------------------------------------------------

def _scalar(raw: str, typ, where: str):
    raw = raw.strip()
    if typ is str:
        return raw
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"{where}: expected {typ.__name__}, got {raw!r}") from None


def _bool(raw: str, where: str) -> bool:
    val = _BOOL_WORDS.get(raw.strip().lower())
    if val is None:
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    return val


def _float_axis(raw: str, where: str) -> tuple:
    """Comma list of floats, or ``lo:hi:count`` for a uniform axis."""
    raw = raw.strip()
    if ":" in raw and "," not in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{where}: axis syntax is lo:hi:count")
        lo = _scalar(parts[0], float, where)
        hi = _scalar(parts[1], float, where)
        count = _scalar(parts[2], int, where)
        if count < 2 or hi <= lo:
            raise ConfigError(f"{where}: need hi > lo and count >= 2")
        return tuple(float(x) for x in np.linspace(lo, hi, count))
    items = [p for p in raw.split(",") if p.strip()]
    if not items:
        raise ConfigError(f"{where}: empty list")
    return tuple(_scalar(p, float, where) for p in items)


def _int_list(raw: str, where: str) -> tuple:
    items = [p for p in raw.split(",") if p.strip()]
    if not items:
        raise ConfigError(f"{where}: empty list")
    return tuple(_scalar(p, int, where) for p in items)


def _pair_list(raw: str, where: str) -> tuple:
    """Rate pairs written ``v_a/v_b``, comma separated."""
    pairs = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        halves = item.split("/")
        if len(halves) != 2:
            raise ConfigError(f"{where}: pair syntax is v_a/v_b, got {item!r}")
        pairs.append((_scalar(halves[0], float, where),
                      _scalar(halves[1], float, where)))
    if not pairs:
        raise ConfigError(f"{where}: empty list")
    return tuple(pairs)


_SWEEP_PARSERS = {
    "h_values": _float_axis, "q_values": _float_axis,
    "n_plus_values": _int_list, "n_plus_b_values": _int_list,
    "x_values": _float_axis, "x_a_values": _float_axis,
    "x_b_values": _float_axis, "v_pairs": _pair_list,
    "s_values": _float_axis,
}


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

def _read_sections(text: str, source: str):
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # ModelParams fields are case sensitive (T, K)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"run": _RUN_KEYS, "model": tuple(_MODEL_TYPES),
             "grid": tuple(_GRID_TYPES), "sweep": _SWEEP_KEYS}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}] in {source}")
        for key in cp[section]:
            if key not in known[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")
    return cp


def parse_config(text: str, *, source: str = "<config>",
                 overrides: dict | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from config text plus CLI overrides.

    ``overrides`` may carry out, cache, profile, threads, seed, format,
    emit_policies, confirm_long and figures; a key present and not None wins
    over the file.  Raises ConfigError with the offending field named.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cp = _read_sections(text, source)
    run = cp["run"] if cp.has_section("run") else {}

    kind = overrides.get("kind", run.get("kind", "")).strip()
    if kind not in KINDS:
        raise ConfigError(
            f"[run] kind: expected one of {', '.join(KINDS)}, got {kind!r}")

    profile = overrides.get("profile", run.get("profile", "desk")).strip()
    if profile not in PROFILES:
        raise ConfigError(
            f"[run] profile: expected one of {', '.join(PROFILES)}, "
            f"got {profile!r}")

    model_kwargs = dict(_DESK_MODEL) if profile == "desk" else {}
    explicit = []
    if cp.has_section("model"):
        for key, raw in cp["model"].items():
            model_kwargs[key] = _scalar(raw, _MODEL_TYPES[key],
                                        f"[model] {key}")
            explicit.append(key)
    if profile == "repro":
        missing = [k for k in _CALIBRATED if k not in explicit]
        if missing:
            raise ConfigError(
                f"[model] repro profile requires explicit values for "
                f"{', '.join(missing)}; these constants are calibration "
                f"choices and are not defaulted silently")
    try:
        params = ModelParams(**model_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None

    grid_kwargs = {}
    if cp.has_section("grid"):
        for key, raw in cp["grid"].items():
            grid_kwargs[key] = _scalar(raw, _GRID_TYPES[key], f"[grid] {key}")
    factory = GridSpec.desk if profile == "desk" else GridSpec.repro
    try:
        grid = factory(params, **grid_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    sweep = {}
    if cp.has_section("sweep"):
        for key, raw in cp["sweep"].items():
            sweep[key] = _SWEEP_PARSERS[key](raw, f"[sweep] {key}")
    if kind == "subgame_sweep" and not (
            "x_values" in sweep or "x_a_values" in sweep):
        raise ConfigError(
            "[sweep] x_values: required for kind=subgame_sweep")

    def run_value(key, typ, default):
        if key in overrides:
            return overrides[key]
        if key in run:
            where = f"[run] {key}"
            if typ is bool:
                return _bool(run[key], where)
            return _scalar(run[key], typ, where)
        return default

    seed = run_value("seed", int, 0)
    paths = run_value("paths", int, 10000)
    log_paths = run_value("log_paths", int, 100)
    threads = run_value("threads", int, 1)
    if seed < 0:
        raise ConfigError(f"[run] seed: must be >= 0, got {seed}")
    if paths < 1:
        raise ConfigError(f"[run] paths: must be >= 1, got {paths}")
    if log_paths < 0:
        raise ConfigError(f"[run] log_paths: must be >= 0, got {log_paths}")
    if threads < 1:
        raise ConfigError(f"[run] threads: must be >= 1, got {threads}")
    fmt = run_value("format", str, "csv")
    if fmt not in FORMATS:
        raise ConfigError(
            f"[run] format: expected one of {', '.join(FORMATS)}, "
            f"got {fmt!r}")

    cache_dir = overrides.get("cache", run.get("cache"))
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV) or None

    return ExperimentConfig(
        kind=kind,
        params=params,
        grid=grid,
        profile=profile,
        out_dir=run_value("out", str, "out"),
        cache_dir=cache_dir,
        seed=seed,
        paths=paths,
        log_paths=log_paths,
        threads=threads,
        fmt=fmt,
        emit_policies=run_value("emit_policies", bool, False),
        confirm_long=run_value("confirm_long", bool, False),
        figures=run_value("figures", bool, True),
        sweep=sweep,
        explicit_model=tuple(explicit),
    )


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=path, overrides=overrides)
