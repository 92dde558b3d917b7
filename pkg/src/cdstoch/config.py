"""Run configuration: defaults, validation, and the flat text format.

A config file is flat ``key = value`` text.  Values are whitespace
separated tokens; ``#`` starts a comment.  Matrices are row-major number
lists whose length fixes the (square) size.  Covariance blocks use
dotted keys::

    seed = 7
    replicas = 50000
    level = 2
    n = 2
    grid = 32
    window = 0 1
    experiments = paths isometry
    u0.block1.a = 1 0 0 0
    u0.block1.b = 2 0.3 0.3 1
    drift = 0.5 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0
    tol.exact = 1e-12

``u1.block*`` keys configure the imaginary-part covariance; with no u1
keys it mirrors u0 (a complexified driving path), and ``u1 = none``
selects a plain real-part path.  Every parse or validation failure
raises ConfigError naming the offending key.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .algebra import AlgebraError, CdReal, dim_of
from .linops import (
    CdVector,
    ComplexCovariance,
    CovarianceOperator,
    NotSPD,
    spd_sqrt,
    vec_size,
)


class ConfigError(ValueError):
    """A configuration problem; the message names the offending key."""


EXPERIMENT_CHOICES = ("algebra", "linops", "paths", "isometry",
                      "martingale", "chebyshev", "sde")
TOLERANCE_CHOICES = ("exact", "sqrt")
FORMAT_CHOICES = ("json", "csv")
THREADS_ENV = "CD_STOCHASTIC_THREADS"


@dataclass(frozen=True)
class RunConfig:
    """Validated inputs for a verification run."""

    seed: int = 0
    replicas: int = 20_000
    grids: tuple[int, ...] = (32,)
    window: tuple[float, float] = (0.0, 1.0)
    level: int = 2
    n: int = 1
    experiments: tuple[str, ...] = ()
    u0_blocks: tuple | None = None
    u1_blocks: tuple | None = None
    drift: tuple[float, ...] | None = None
    threads: int | None = None
    out: str | None = None
    format: str = "json"
    tolerances: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "grids", tuple(int(g) for g in self.grids))
        object.__setattr__(self, "window",
                           (float(self.window[0]), float(self.window[1])))
        object.__setattr__(self, "experiments", tuple(self.experiments))
        if self.drift is not None:
            object.__setattr__(self, "drift",
                               tuple(float(v) for v in self.drift))
        object.__setattr__(self, "tolerances",
                           tuple((k, float(v)) for k, v in self.tolerances))
        if not (0 <= int(self.seed) < 2 ** 62):
            raise ConfigError("config key 'seed': need 0 <= seed < 2^62")
        if self.replicas < 1:
            raise ConfigError("config key 'replicas': need at least 1")
        if not self.grids:
            raise ConfigError("config key 'grid': need at least one size")
        for g in self.grids:
            if g < 8 or g % 8:
                raise ConfigError(
                    "config key 'grid': sizes must be multiples of 8")
        for prev, nxt in zip(self.grids, self.grids[1:]):
            if nxt != 2 * prev:
                raise ConfigError(
                    "config key 'grid': multiple sizes must form a "
                    "doubling ladder (each twice the previous)")
        a, b = self.window
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ConfigError("config key 'window': need finite a < b")
        if not (0 <= self.level <= 5):
            raise ConfigError("config key 'level': need 0 <= level <= 5")
        if self.n < 1:
            raise ConfigError("config key 'n': need at least 1")
        for name in self.experiments:
            if name not in EXPERIMENT_CHOICES:
                raise ConfigError(
                    f"config key 'experiments': unknown experiment '{name}'")
        if self.format not in FORMAT_CHOICES:
            raise ConfigError("config key 'format': choose json or csv")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("config key 'threads': need at least 1")
        for key, value in self.tolerances:
            if key not in TOLERANCE_CHOICES:
                raise ConfigError(f"config key 'tol.{key}': unknown tolerance")
            if not (value > 0):
                raise ConfigError(f"config key 'tol.{key}': need a positive value")
        if self.drift is not None:
            size = vec_size(self.level, self.n)
            if len(self.drift) != size:
                raise ConfigError(
                    f"config key 'drift': need {size} coefficients for "
                    f"level {self.level}, n {self.n}")


def effective_threads(requested: int | None) -> int:
    """Resolve the worker count: flag, then environment, then the host."""
    if requested is not None:
        if requested < 1:
            raise ConfigError("config key 'threads': need at least 1")
        return requested
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}: not an integer") from exc
        if value < 1:
            raise ConfigError(f"{THREADS_ENV}: need at least 1")
        return value
    return os.cpu_count() or 1


# ----------------------------------------------------------- driving builder

def _build_covariance(level: int, n: int, blocks, key_prefix: str
                      ) -> CovarianceOperator:
    if blocks is None:
        return CovarianceOperator.simple(
            CdReal.from_real(level, 1.0), np.eye(n))
    pieces = []
    d = dim_of(level)
    for j, (a_coeffs, b_flat) in enumerate(blocks, start=1):
        a = np.asarray(a_coeffs, dtype=float)
        if a.shape != (d,):
            raise ConfigError(
                f"config key '{key_prefix}.block{j}.a': need {d} "
                f"coefficients at level {level}")
        k = math.isqrt(len(b_flat))
        if k * k != len(b_flat) or k < 1:
            raise ConfigError(
                f"config key '{key_prefix}.block{j}.b': need a row-major "
                "square matrix")
        m = np.asarray(b_flat, dtype=float).reshape(k, k)
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(m))))):
            raise ConfigError(
                f"config key '{key_prefix}.block{j}.b': matrix is not "
                "symmetric")
        try:
            spd_sqrt(m)
        except NotSPD as exc:
            raise ConfigError(
                f"config key '{key_prefix}.block{j}.b': {exc}") from exc
        pieces.append((CdReal(level, a), m))
    cov = CovarianceOperator(level, tuple(pieces))
    try:
        cov.sqrt_entries()
    except AlgebraError as exc:
        raise ConfigError(f"config key '{key_prefix}': {exc}") from exc
    if cov.n != n:
        raise ConfigError(
            f"config key '{key_prefix}': blocks cover {cov.n} components "
            f"but n = {n}")
    return cov


def build_driving(cfg: RunConfig):
    """Build (covariance, drift) for the configured driving paths."""
    u0 = _build_covariance(cfg.level, cfg.n, cfg.u0_blocks, "u0")
    if cfg.u1_blocks is not None and len(cfg.u1_blocks) == 0:
        u = u0
    else:
        u1_blocks = cfg.u1_blocks if cfg.u1_blocks is not None \
            else cfg.u0_blocks
        u1 = _build_covariance(cfg.level, cfg.n, u1_blocks, "u1")
        u = ComplexCovariance(u0, u1)
    p = None
    if cfg.drift is not None:
        p = CdVector.from_vec(cfg.level, cfg.n, np.asarray(cfg.drift))
    return u, p


# ------------------------------------------------------------------- parsing

_BLOCK_KEY = re.compile(r"^(u0|u1)\.block([0-9]+)\.(a|b)$")
_SCALAR_KEYS = ("seed", "replicas", "level", "n", "threads", "format", "out",
                "grid", "window", "experiments", "drift", "u1")


def _tokens(value: str) -> list[str]:
    return value.split()


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': not an integer") from exc


def _parse_floats(key: str, value: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in _tokens(value))
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': not a number list") from exc


def parse_config_text(text: str) -> RunConfig:
    """Parse flat key=value text into a validated RunConfig."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"config key '{key}': duplicated")
        values[key] = value.strip()

    fields: dict = {}
    blocks: dict[str, dict[int, dict[str, tuple[float, ...]]]] = {
        "u0": {}, "u1": {}}
    u1_none = False
    for key, value in values.items():
        match = _BLOCK_KEY.match(key)
        if match:
            prefix, j, part = match.group(1), int(match.group(2)), match.group(3)
            blocks[prefix].setdefault(j, {})[part] = _parse_floats(key, value)
            continue
        if key.startswith("tol."):
            name = key[4:]
            if name not in TOLERANCE_CHOICES:
                raise ConfigError(f"config key '{key}': unknown tolerance")
            parts = _parse_floats(key, value)
            if len(parts) != 1:
                raise ConfigError(f"config key '{key}': need one number")
            fields.setdefault("tolerances", []).append((name, parts[0]))
            continue
        if key not in _SCALAR_KEYS:
            raise ConfigError(f"config key '{key}': unknown key")
        if key in ("seed", "replicas", "level", "n", "threads"):
            fields[key] = _parse_int(key, value)
        elif key == "grid":
            fields["grids"] = tuple(_parse_int(key, tok)
                                    for tok in _tokens(value))
        elif key == "window":
            parts = _parse_floats(key, value)
            if len(parts) != 2:
                raise ConfigError("config key 'window': need exactly 'a b'")
            fields["window"] = parts
        elif key == "experiments":
            fields["experiments"] = tuple(_tokens(value))
        elif key == "drift":
            fields["drift"] = _parse_floats(key, value)
        elif key == "format":
            fields["format"] = value
        elif key == "out":
            fields["out"] = value
        elif key == "u1":
            if value != "none":
                raise ConfigError(
                    "config key 'u1': only 'none' is accepted here; use "
                    "u1.block*.a / u1.block*.b for blocks")
            u1_none = True

    for prefix in ("u0", "u1"):
        if not blocks[prefix]:
            continue
        if prefix == "u1" and u1_none:
            raise ConfigError(
                "config key 'u1': 'none' conflicts with u1.block* keys")
        indices = sorted(blocks[prefix])
        if indices != list(range(1, len(indices) + 1)):
            raise ConfigError(
                f"config key '{prefix}.block{indices[-1]}.a': block numbers "
                "must be 1, 2, ... without gaps")
        out = []
        for j in indices:
            part = blocks[prefix][j]
            for piece in ("a", "b"):
                if piece not in part:
                    raise ConfigError(
                        f"config key '{prefix}.block{j}.{piece}': missing")
            out.append((part["a"], part["b"]))
        fields[f"{prefix}_blocks"] = tuple(out)
    if u1_none:
        fields["u1_blocks"] = ()
    if "tolerances" in fields:
        fields["tolerances"] = tuple(fields["tolerances"])

    cfg = RunConfig(**fields)
    # surface covariance/drift problems at parse time with their key names
    build_driving(cfg)
    return cfg


def load_config(path) -> RunConfig:
    """Read and parse a config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config file '{path}': {exc}") from exc
    return parse_config_text(text)
