"""
Experiment configuration: a sectioned ``key = value`` text file.

Every key has a default, so a config only lists what it changes. Parsing
fills in defaults, checks types and choices, and raises :class:`ConfigError`
naming the offending ``section.key``. :meth:`ExperimentConfig.flat` gives the
fully resolved settings, which reports embed so any run can be replayed.

Parameter functions for the prior live under ``[prior]`` with dotted keys,
``mean.kind = inverse_power``, ``mean.b = 2``, and so on (see
:func:`bifs.paramfn.from_dict`). Example::

    [run]
    estimator = map
    seed = 3

    [input]
    source = phantom
    size = 128

    [noise]
    model = gaussian
    sd = 2.5

    [prior]
    family = exponential
    mean.kind = inverse_power
    mean.b = 2
"""

import configparser
from dataclasses import dataclass

from .exceptions import ConfigError, ParameterError
from .paramfn import from_dict, to_dict

__all__ = ["ExperimentConfig", "parse_config", "load_config", "SCHEMA", "ESTIMATORS"]

ESTIMATORS = ("map", "mmse", "sample", "igmrf", "compare", "ddbifs")

# section -> key -> (type, default, allowed values or None)
SCHEMA = {
    "run": {
        "estimator": (str, "map", ESTIMATORS),
        "seed": (int, 0, None),
        "threads": (int, 1, None),
        "n_samples": (int, 1, None),
        "proposal_grid_points": (int, 4096, None),
    },
    "input": {
        "source": (str, "phantom", ("phantom", "scene", "bumps", "mrf", "file")),
        "path": (str, "", None),
        "size": (int, 128, None),
        "seed": (int, 0, None),
    },
    "noise": {
        "model": (str, "gaussian", ("none", "gaussian", "student_t")),
        "sd": (float, 2.5, None),
        "df": (float, 5.0, None),
        "seed": (int, 1, None),
    },
    "prior": {
        "family": (str, "exponential", ("exponential", "sqrt_exponential", "trunc_gaussian")),
        "source": (str, "function", ("function", "fit_mrf")),
        "power_match": (bool, True, None),
        "scale_ratio": (float, 1.0, None),
        "weight": (float, 1.0, None),
    },
    "likelihood": {
        "family": (str, "rician", ("rician", "gaussian_modulus")),
        "sigma": (str, "auto", None),
        "argument": (str, "fixed", ("fixed", "rician")),
    },
    "mrf": {
        "kappa": (float, 1.0, None),
        "n_sim": (int, 1000, None),
        "seed": (int, 7, None),
        "target": (str, "modulus", ("modulus", "power")),
    },
    "ddbifs": {
        "database": (str, "bumps", None),
        "prior": (str, "", None),
        "count": (int, 1000, None),
        "seed": (int, 0, None),
        "m": (float, 1.0, None),
        "rate": (float, 10.0, None),
    },
    "output": {
        "image": (str, "", None),
        "report": (str, "", None),
        "power_csv": (str, "", None),
        "bits": (int, 8, (8, 16)),
        "rescale": (bool, True, None),
    },
}

DEFAULT_MEAN = {"mean.kind": "inverse_power", "mean.a": "1.0", "mean.b": "2.0"}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(section, key, raw, typ, choices):
    name = f"{section}.{key}"
    try:
        if typ is bool:
            low = str(raw).strip().lower()
            if low not in _TRUE | _FALSE:
                raise ValueError
            value = low in _TRUE
        else:
            value = typ(str(raw).strip()) if typ is not str else str(raw).strip()
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {typ.__name__}", key=name) from None
    if choices is not None and value not in choices:
        raise ConfigError(f"{name}: {value!r} is not one of {list(choices)}", key=name)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings: ``values[section][key]`` holds typed values, defaults filled in."""

    values: dict

    def get(self, section, key):
        return self.values[section][key]

    def section(self, name):
        return dict(self.values[name])

    def prior_functions(self):
        """``(mean_fn, sd_fn or None)`` from the dotted ``[prior]`` keys."""
        prior = self.values["prior"]
        fns = {}
        for role in ("mean", "sd"):
            sub = {k: v for k, v in prior.items() if k.startswith(role + ".")}
            if not sub:
                fns[role] = None
                continue
            try:
                fns[role] = from_dict({k: str(v) for k, v in sub.items()}, prefix=role + ".")
            except (ParameterError, ValueError) as exc:
                key = getattr(exc, "key", None) or _key_from_message(str(exc), role)
                raise ConfigError(f"prior.{role}: {exc}", key=f"prior.{key}") from None
        return fns["mean"], fns["sd"]

    def flat(self):
        """All resolved settings as ``section.key -> str`` (sorted)."""
        out = {}
        for sec in sorted(self.values):
            for key in sorted(self.values[sec]):
                out[f"{sec}.{key}"] = _fmt(self.values[sec][key])
        return out

    def to_text(self):
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in sorted(self.values[sec]):
                lines.append(f"{key} = {_fmt(self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)


def _key_from_message(msg, role):
    # from_dict names the key in quotes
    import re

    m = re.search(r"'([^']+)'", msg)
    return m.group(1) if m else role


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_config(text, overrides=None):
    """Parse config text. ``overrides`` maps ``section.key`` to raw strings and wins over the file."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}", key=None) from None
    raw = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key", key=dotted)
        raw.setdefault(sec, {})[key] = value
    for sec in raw:
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", key=sec)

    values = {}
    for sec, keys in SCHEMA.items():
        given = raw.get(sec, {})
        out = {}
        for key, val in given.items():
            if key in keys:
                continue
            if sec == "prior" and (key.startswith("mean.") or key.startswith("sd.")):
                out[key] = val.strip()
                continue
            raise ConfigError(f"unknown key {sec}.{key}", key=f"{sec}.{key}")
        for key, (typ, default, choices) in keys.items():
            out[key] = _convert(sec, key, given[key], typ, choices) if key in given else default
        values[sec] = out
    prior = values["prior"]
    # partial inverse-power settings (say just mean.b) take the rest from the default
    if prior["source"] == "function" and prior.get("mean.kind", "inverse_power") == "inverse_power":
        for key, val in DEFAULT_MEAN.items():
            prior.setdefault(key, val)

    cfg = ExperimentConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg):
    v = cfg.values

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}", key=key)

    need(v["run"]["threads"] >= 1, "run.threads", "must be >= 1")
    need(v["run"]["n_samples"] >= 1, "run.n_samples", "must be >= 1")
    need(v["input"]["size"] >= 4 and v["input"]["size"] % 2 == 0, "input.size", "must be even and >= 4")
    need(v["input"]["source"] != "file" or v["input"]["path"], "input.path", "required when input.source = file")
    need(v["noise"]["sd"] > 0, "noise.sd", "must be positive")
    need(v["noise"]["model"] != "student_t" or v["noise"]["df"] > 2, "noise.df", "must exceed 2")
    need(v["mrf"]["kappa"] > 0, "mrf.kappa", "must be positive")
    need(v["ddbifs"]["m"] >= 0, "ddbifs.m", "must be nonnegative")
    sigma = v["likelihood"]["sigma"]
    if sigma != "auto":
        try:
            ok = float(sigma) > 0
        except ValueError:
            ok = False
        need(ok, "likelihood.sigma", "must be 'auto' or a positive number")
    if v["prior"]["source"] == "function":
        cfg.prior_functions()


def load_config(path, overrides=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key=None) from None
    return parse_config(text, overrides)


def prior_keys(fn, role="mean"):
    """Dotted ``[prior]`` keys describing ``fn``, for writing configs programmatically."""
    return {f"{role}.{k}": v for k, v in to_dict(fn).items()}
