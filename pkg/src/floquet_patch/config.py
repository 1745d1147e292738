"""Analysis configuration files: INI-style ``[section]`` / ``key = value`` text.

Example::

    [model]
    builtin = holling_tanner
    a = 1
    h = 0.5
    K = 5
    m = 1
    r = 1
    s = 0.1

    [patch]
    n = 2
    delta = 0.01
    E = 1, 10; 1, 1

    [cycle]
    seed = 1, 1

A DSL model replaces ``builtin`` by ``variables = u, v`` and one
``rhs.<var> = "<expression>"`` per variable; every other key of the
``[model]`` section is a parameter value.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .expr import ExprError
from .kinetics import BUILTIN_MODELS, KineticSystem
from .ode import IntegratorConfig, Section

__all__ = ["ConfigError", "AnalysisConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class AnalysisConfig:
    kinetics: KineticSystem
    n: int = 2
    deltas: list[float] = field(default_factory=lambda: [0.01])
    E: np.ndarray | None = None
    seed: np.ndarray | None = None
    burn_in: float = 200.0
    section: Section | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    probes: list[float] = field(default_factory=lambda: [1e-3, 2e-3, 4e-3])
    horizon: float = 20000.0
    lle_burn_in: float = 500.0
    hopf_parameter: str | None = None
    hopf_guess: np.ndarray | None = None
    hopf_order: int = 1
    hopf_k1: int = 1
    sweep: dict = field(default_factory=dict)
    source: str = ""

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()

    @property
    def delta(self) -> float:
        return self.deltas[0]

    def require_patch(self) -> None:
        if self.E is None:
            raise ConfigError("[patch] E is required for this analysis")
        if self.n < 2:
            raise ConfigError("[patch] n must be at least 2")


def _key_line(text: str, section: str, key: str | None) -> int | None:
    sec = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
            if key is None and sec == section:
                return i
            continue
        if sec == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return i
    return None


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


class _Reader:
    def __init__(self, cp, text):
        self.cp = cp
        self.text = text

    def err(self, section, key, msg):
        return ConfigError(f"[{section}] {key}: {msg}" if key else f"[{section}] {msg}",
                           _key_line(self.text, section, key))

    def has(self, section, key):
        return self.cp.has_section(section) and self.cp.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            return default
        return _unquote(self.cp.get(section, key))

    def float(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise self.err(section, key, f"expected a number, got {v!r}") from None

    def int(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise self.err(section, key, f"expected an integer, got {v!r}") from None

    def floats(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return [float(x) for x in re.split(r"[,\s]+", v.strip()) if x]
        except ValueError:
            raise self.err(section, key, f"expected a list of numbers, got {v!r}") from None

    def matrix(self, section, key):
        v = self.raw(section, key)
        if v is None:
            return None
        try:
            rows = [[float(x) for x in re.split(r"[,\s]+", r.strip()) if x] for r in v.split(";")]
            M = np.array(rows, dtype=float)
        except ValueError:
            raise self.err(section, key, f"expected rows 'a, b; c, d', got {v!r}") from None
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise self.err(section, key, "matrix must be square")
        return M


def _model(rd: _Reader) -> KineticSystem:
    if not rd.cp.has_section("model"):
        raise ConfigError("missing [model] section")
    items = {k: _unquote(v) for k, v in rd.cp.items("model")}
    if "builtin" in items:
        name = items.pop("builtin")
        if name not in BUILTIN_MODELS:
            raise rd.err("model", "builtin", f"unknown built-in model {name!r}")
        params = {}
        for k in items:
            params[k] = rd.float("model", k)
        try:
            return BUILTIN_MODELS[name](**params)
        except TypeError as exc:
            raise rd.err("model", None, f"bad parameters for {name}: {exc}") from None
        except ValueError as exc:
            raise rd.err("model", None, str(exc)) from None
    if "variables" not in items:
        raise rd.err("model", None, "needs either 'builtin' or 'variables'")
    variables = [v for v in re.split(r"[,\s]+", items.pop("variables")) if v]
    rhs = []
    for v in variables:
        key = f"rhs.{v}"
        if key not in items:
            raise rd.err("model", None, f"missing right-hand side '{key}'")
        rhs.append(items.pop(key))
    params = {k: rd.float("model", k) for k in items}
    try:
        return KineticSystem(variables, rhs, params, name="custom")
    except ExprError as exc:
        key = next((f"rhs.{v}" for v, e in zip(variables, rhs) if _fails(e, variables, params)), None)
        raise rd.err("model", key, str(exc)) from None
    except ValueError as exc:
        raise rd.err("model", None, str(exc)) from None


def _fails(e, variables, params):
    from .expr import SymbolTable, parse

    try:
        parse(e, SymbolTable(tuple(variables), dict(params)))
        return False
    except ExprError:
        return True


def parse_config(text: str) -> AnalysisConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    rd = _Reader(cp, text)
    known = {"model", "patch", "cycle", "analysis", "hopf", "sweep", "integrator"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"unknown section [{s}]", _key_line(text, s, None))
    ks = _model(rd)
    cfg = AnalysisConfig(ks, source=text)

    cfg.n = rd.int("patch", "n", 2)
    cfg.deltas = rd.floats("patch", "delta", [0.01])
    if any(d < 0 for d in cfg.deltas):
        raise rd.err("patch", "delta", "coupling strength must be non-negative")
    cfg.E = rd.matrix("patch", "E")
    if cfg.E is not None and cfg.E.shape[0] != ks.dim:
        raise rd.err("patch", "E", f"must be {ks.dim}x{ks.dim}")
    if rd.has("patch", "n") and cfg.n < 2:
        raise rd.err("patch", "n", "need at least two patches")

    seed = rd.floats("cycle", "seed")
    if seed is not None and len(seed) != ks.dim:
        raise rd.err("cycle", "seed", f"needs {ks.dim} components")
    cfg.seed = None if seed is None else np.array(seed)
    cfg.burn_in = rd.float("cycle", "burn_in", 200.0)
    sec = rd.raw("cycle", "section")
    if sec is not None:
        parts = [p for p in re.split(r"[,\s]+", sec) if p]
        try:
            idx = ks.variables.index(parts[0]) if parts[0] in ks.variables else int(parts[0])
            cfg.section = Section(idx, float(parts[1]), int(parts[2]) if len(parts) > 2 else 1)
        except (ValueError, IndexError):
            raise rd.err("cycle", "section", "expected 'variable, level[, direction]'") from None

    try:
        cfg.integrator = IntegratorConfig(
            rtol=rd.float("integrator", "rtol", 1e-10),
            atol=rd.float("integrator", "atol", 1e-12),
            event_tol=rd.float("integrator", "event_tol", 1e-12),
            fixed_step=rd.float("integrator", "fixed_step", None),
        )
    except ValueError as exc:
        raise rd.err("integrator", None, str(exc)) from None

    cfg.probes = rd.floats("analysis", "probes", cfg.probes)
    cfg.horizon = rd.float("analysis", "horizon", cfg.horizon)
    cfg.lle_burn_in = rd.float("analysis", "lle_burn_in", cfg.lle_burn_in)

    cfg.hopf_parameter = rd.raw("hopf", "parameter")
    if cfg.hopf_parameter is not None and cfg.hopf_parameter not in ks.params:
        raise rd.err("hopf", "parameter", f"unknown parameter {cfg.hopf_parameter!r}")
    guess = rd.floats("hopf", "guess")
    cfg.hopf_guess = None if guess is None else np.array(guess)
    cfg.hopf_order = rd.int("hopf", "k", 1)
    cfg.hopf_k1 = rd.int("hopf", "k1", 1)

    if cp.has_section("sweep"):
        target = rd.raw("sweep", "target", "delta")
        if not (target == "delta" or re.fullmatch(r"E\d\d", target)):
            raise rd.err("sweep", "target", "expected 'delta' or an entry such as E12")
        values = rd.floats("sweep", "values")
        if not values:
            raise rd.err("sweep", "values", "needs at least one value")
        cfg.sweep = {"target": target, "values": values}
    return cfg


def load_config(path) -> AnalysisConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
