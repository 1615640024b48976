"""Run configuration: key-value file, environment overrides, command-line flags.

The config file holds one ``key = value`` per line (``#`` starts a comment).
Precedence, lowest first: built-in defaults, config file, ``PAYVALUE_<KEY>``
environment variables, command-line flags.

Keys
----
data                dataset directory (mutually exclusive with synthetic keys)
out                 output directory
workers             worker threads (default: CPU count)
cutoff              evaluation time, ISO-8601 UTC (default: end of dataset)
alpha, epsilon, max_iters
w_online, w_offline, include_p2p
recency_{a,b,c,s}, frequency_{a,b,c,s}, expansion_{a,b,c,s}
percentiles         comma-separated, e.g. ``25,50,75,90,99``
temporal_start, temporal_end    ISO-8601 UTC (default: dataset span)
temporal_step_months            default 3
hist_bins           bins per axis of the 2-D histograms (default 30)
seed, n_users, ...  any SynthConfig field; selects the synthetic source
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .intrinsic import IntrinsicParams
from .synth import SynthConfig
from .value_engine import ValueParams

ENV_PREFIX = "PAYVALUE_"


class ConfigError(ValueError):
    pass


_SYNTH_KEYS = set(SynthConfig.field_names())
_SIGMOID_KEYS = {f"{factor}_{p}" for factor in ("recency", "frequency", "expansion")
                 for p in ("a", "b", "c", "s")}
_RUN_KEYS = {"data", "out", "workers", "cutoff", "alpha", "epsilon", "max_iters", "w_online",
             "w_offline", "include_p2p", "percentiles", "temporal_start", "temporal_end",
             "temporal_step_months", "hist_bins"}
KNOWN_KEYS = _SYNTH_KEYS | _SIGMOID_KEYS | _RUN_KEYS


def parse_time(text) -> int:
    """ISO-8601 UTC text (trailing Z optional) or integer epoch seconds."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    s = str(text).strip()
    if s.lstrip("-").isdigit():
        return int(s)
    try:
        return int(np.datetime64(s.rstrip("Z"), "s").astype(np.int64))
    except ValueError as exc:
        raise ConfigError(f"bad timestamp {text!r}") from exc


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return dict(parser["run"])


def env_overrides(environ: Mapping[str, str] = os.environ) -> dict[str, str]:
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in KNOWN_KEYS:
                out[name] = value
    return out


@dataclass
class RunConfig:
    data: Optional[Path] = None
    synth: Optional[SynthConfig] = field(default_factory=SynthConfig)
    intrinsic: IntrinsicParams = field(default_factory=IntrinsicParams)
    value: ValueParams = field(default_factory=ValueParams)
    out: Path = Path("out")
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    percentiles: tuple = (25, 50, 75, 90, 99)
    temporal_start: Optional[int] = None
    temporal_end: Optional[int] = None
    temporal_step_months: int = 3
    hist_bins: int = 30

    @property
    def cutoff(self) -> Optional[int]:
        return self.intrinsic.eval_time


def _convert(key: str, raw):
    if raw is None:
        return None
    try:
        if key in ("workers", "max_iters", "temporal_step_months", "hist_bins"):
            return int(raw)
        if key in ("alpha", "epsilon", "w_online", "w_offline") or key in _SIGMOID_KEYS:
            return float(raw)
        if key == "include_p2p":
            if isinstance(raw, bool):
                return raw
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        if key == "percentiles":
            if isinstance(raw, (list, tuple)):
                return tuple(float(p) for p in raw)
            return tuple(float(p) for p in str(raw).split(",") if p.strip())
        if key in ("cutoff", "temporal_start", "temporal_end"):
            return parse_time(raw)
        if key in ("data", "out"):
            return Path(raw)
        if key in _SYNTH_KEYS:
            ftype = {f.name: f.type for f in fields(SynthConfig)}[key]
            if ftype in ("int", int):
                return int(raw)
            if ftype in ("float", float):
                return float(raw)
            return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unknown config key {key!r}")


def build_run_config(file_values: Mapping[str, str] = (), env: Mapping[str, str] = (),
                     flags: Mapping[str, object] = ()) -> RunConfig:
    merged: dict[str, object] = {}
    for layer in (dict(file_values), dict(env), {k: v for k, v in dict(flags).items()
                                                 if v is not None}):
        for key, value in layer.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    values = {k: _convert(k, v) for k, v in merged.items()}

    synth_values = {k: v for k, v in values.items() if k in _SYNTH_KEYS}
    data = values.get("data")
    if data is not None and synth_values:
        raise ConfigError("choose one input: dataset files (data) or synthetic settings "
                          f"({', '.join(sorted(synth_values))}), not both")
    try:
        synth = None if data is not None else SynthConfig(**synth_values)
        sig = {}
        defaults = IntrinsicParams()
        for factor in ("recency", "frequency", "expansion"):
            base = getattr(defaults, factor)
            over = {p: values[f"{factor}_{p}"] for p in "abcs" if f"{factor}_{p}" in values}
            sig[factor] = replace(base, **over) if over else base
        intrinsic = IntrinsicParams(
            w_online=values.get("w_online", 1.0), w_offline=values.get("w_offline", 1.0),
            eval_time=values.get("cutoff"), include_p2p=values.get("include_p2p", False), **sig)
        value = ValueParams(alpha=values.get("alpha", 0.85),
                            epsilon=values.get("epsilon", 1e-9),
                            max_iters=values.get("max_iters"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    cfg = RunConfig(data=data, synth=synth, intrinsic=intrinsic, value=value)
    for key in ("out", "workers", "percentiles", "temporal_start", "temporal_end",
                "temporal_step_months", "hist_bins"):
        if key in values:
            setattr(cfg, key, values[key])
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.temporal_step_months < 1:
        raise ConfigError("temporal_step_months must be >= 1")
    return cfg

