"""Pipeline configuration: flat key=value files plus CLI overrides.

Defaults reproduce the reference setup: extraction depth 1 with rule caps
of 5 variables and 15 nodes per side, at most 50 targets per source
elementary tree, decoding beams of 200 unique/500 total entries (100/200
for the model-selection profile), token Hamming loss at scale 1, and
regularization C = 0.01.  The random seed falls back to the TREEDUCE_SEED
environment variable.
"""

from __future__ import annotations

import os
from typing import Optional


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, object] = {
    "source": None,             # source treebank path
    "target": None,             # target treebank path
    "align": "auto",            # alignment file path or "auto"
    "grammar": None,            # grammar file path
    "lm": "none",               # ARPA path, "auto" (toy-train), or "none"
    "lm_order": 3,
    "model": None,              # weights file path
    "depth": 1,
    "max_vars": 5,
    "max_nodes": 15,
    "filter_k": 50,
    "loss": "hamming-token",
    "length_penalty_scale": 1.0,
    "loss_scale": 1.0,
    "C": 0.01,
    "epsilon": 1e-3,
    "max_passes": 100,
    "beam_unique": 200,
    "beam_total": 500,
    "synthesize": "copy,delete",
    "seed": None,
    "jobs": 1,
    "aliases": "",              # display aliases, e.g. "SBAR=S-bar"
}

_INT_KEYS = {"lm_order", "depth", "max_vars", "max_nodes", "max_passes", "jobs"}
_OPT_INT_KEYS = {"filter_k", "beam_unique", "beam_total", "seed"}
_FLOAT_KEYS = {"length_penalty_scale", "loss_scale", "C", "epsilon"}


class Config:
    def __init__(self, values: Optional[dict] = None):
        self.values = dict(DEFAULTS)
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError("unknown configuration key %r" % key)
        self.values[key] = _coerce(key, value)

    def __getattr__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def resolved_seed(self) -> int:
        if self.values["seed"] is not None:
            return int(self.values["seed"])
        env = os.environ.get("TREEDUCE_SEED")
        return int(env) if env else 0

    def alias_map(self) -> dict[str, str]:
        out = {}
        for part in str(self.values["aliases"]).split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ConfigError("bad alias %r (want OLD=NEW)" % part)
            old, new = part.split("=", 1)
            out[old] = new
        return out

    def synthesize_kinds(self) -> tuple[str, ...]:
        text = str(self.values["synthesize"]).strip()
        if text in ("", "none"):
            return ()
        kinds = tuple(p.strip() for p in text.split(",") if p.strip())
        for k in kinds:
            if k not in ("copy", "delete"):
                raise ConfigError("unknown synthesis kind %r" % k)
        return kinds


def _coerce(key: str, value):
    if value is None:
        return None
    if isinstance(value, str):
        text = value.strip()
        if key in _OPT_INT_KEYS:
            if text.lower() in ("none", "inf", ""):
                return None
            return int(text)
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
        return text
    return value


def load_config(path) -> Config:
    """Read a flat key=value file; '#' comments and blank lines skipped."""
    cfg = Config()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected key=value" % (path, lineno))
            key, value = line.split("=", 1)
            try:
                cfg.set(key.strip(), value.strip())
            except ConfigError as exc:
                raise ConfigError("%s:%d: %s" % (path, lineno, exc)) from None
    return cfg
