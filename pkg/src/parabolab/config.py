"""Flat key-path experiment configs and problem building.

Format: one ``section.key = value`` per line, ``#`` comments.  Values are
numbers, comma lists, or field expression strings (lists of expressions
use ``;`` so expressions may contain commas).  Unknown keys are rejected
to catch typos; the full grammar is documented in the README.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .solver import ProblemSpec, SchemeConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "build_operator", "build_problem"]


class ConfigError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


_KNOWN_KEYS = {
    "seed",
    "problem.d",
    "problem.operator",
    "problem.lambda",
    "problem.Lambda",
    "problem.scale",
    "problem.p",
    "problem.coefficients",
    "problem.source",
    "problem.source_class",
    "problem.boundary",
    "problem.domain.lo",
    "problem.domain.hi",
    "problem.t0",
    "scheme.h",
    "scheme.dt",
    "scheme.cfl_safety",
    "scheme.n_store",
    "analyses",
    "campanato.alpha",
    "campanato.radii",
    "holder.alpha",
    "c2alpha.alpha",
    "dyadic_sequence.rho",
    "dyadic_sequence.alpha",
    "dyadic_sequence.k_max",
    "loglip.radii",
    "sobolev.p",
    "pbmo.p",
    "pbmo.radii",
    "a_decay.openings",
    "a_decay.space_stride",
    "a_decay.time_stride",
    "alpha_beta.M",
    "alpha_beta.C1",
    "alpha_beta.rho",
    "alpha_beta.k_max",
    "sweep.parameter",
    "sweep.values",
    "output.dir",
}

_PATTERN_KEYS = [re.compile(r"^problem\.isaacs\.(a|f)\.\d+\.\d+$")]

_ANALYSES = {
    "campanato",
    "c2alpha",
    "holder",
    "dyadic_sequence",
    "loglip",
    "sobolev",
    "pbmo",
    "a_decay",
    "alpha_beta",
    "class_residual",
    "max_principle",
}

# source regularity classes ordered weakest to strongest
_SOURCE_RANK = {"lp": 0, "bounded": 1, "holder": 2}
_ANALYSIS_NEEDS = {
    "dyadic_sequence": "holder",
    "loglip": "bounded",
    "sobolev": "lp",
    "a_decay": "lp",
    "alpha_beta": "lp",
}


@dataclass
class ExperimentConfig:
    raw: dict
    text: str = ""

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def floats(self, key, default=None):
        v = self.raw.get(key)
        if v is None:
            return default
        return [float(s) for s in str(v).split(",") if s.strip()]

    def number(self, key, default=None):
        v = self.raw.get(key)
        return default if v is None else float(v)

    def integer(self, key, default=None):
        v = self.raw.get(key)
        return default if v is None else int(v)

    @property
    def analyses(self) -> list:
        v = self.raw.get("analyses", "")
        return [s.strip() for s in v.split(",") if s.strip()]


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("syntax", f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in _KNOWN_KEYS and not any(p.match(key) for p in _PATTERN_KEYS):
            raise ConfigError("unknown_key", f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError("duplicate_key", f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    cfg = ExperimentConfig(raw, text)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    d = cfg.integer("problem.d")
    if d is None or not 1 <= d <= 3:
        raise ConfigError("dimension", "problem.d must be 1, 2 or 3")
    variant = cfg.get("problem.operator")
    if variant not in {"pucci_plus", "pucci_minus", "scaled_trace", "linear", "isaacs", "p_laplace"}:
        raise ConfigError("operator", f"unknown operator variant {variant!r}")
    if variant in ("pucci_plus", "pucci_minus", "linear", "isaacs"):
        lam = cfg.number("problem.lambda")
        Lam = cfg.number("problem.Lambda", lam)
        if lam is None or lam <= 0 or Lam < lam:
            raise ConfigError("ellipticity", "need 0 < lambda <= Lambda")
    if variant == "p_laplace" and not (cfg.number("problem.p") or 0) > 1:
        raise ConfigError("operator", "p_laplace needs problem.p > 1")
    for key in ("problem.source", "problem.boundary", "problem.t0", "scheme.h"):
        if cfg.get(key) is None:
            raise ConfigError("missing", f"{key} is required")
    if cfg.number("problem.t0") >= 0:
        raise ConfigError("domain", "problem.t0 must be negative")
    lo = cfg.floats("problem.domain.lo")
    hi = cfg.floats("problem.domain.hi")
    if lo is None or hi is None or len(lo) != d or len(hi) != d:
        raise ConfigError("domain", "domain.lo/hi must have length problem.d")
    for a in cfg.analyses:
        if a not in _ANALYSES:
            raise ConfigError("analysis", f"unknown analysis {a!r}")
    src_class = cfg.get("problem.source_class", "bounded")
    if src_class not in _SOURCE_RANK:
        raise ConfigError("source_class", "source_class must be holder, bounded or lp")
    for a in cfg.analyses:
        need = _ANALYSIS_NEEDS.get(a)
        if need == "holder" and src_class != "holder":
            raise ConfigError(
                "source_class", f"{a} requires a Holder-continuous source (source_class = holder)"
            )
        if need == "bounded" and src_class == "lp":
            raise ConfigError("source_class", f"{a} requires a bounded source")
    sweep = cfg.get("sweep.parameter")
    if sweep is not None:
        if sweep not in {"aperture", "p", "scale"}:
            raise ConfigError("sweep", f"unsupported sweep parameter {sweep!r}")
        if not cfg.floats("sweep.values"):
            raise ConfigError("sweep", "sweep.values must be a nonempty list")


def _isaacs_tables(cfg: ExperimentConfig, d: int):
    pat = re.compile(r"^problem\.isaacs\.(a|f)\.(\d+)\.(\d+)$")
    a_tab, f_tab = {}, {}
    for key, value in cfg.raw.items():
        mm = pat.match(key)
        if not mm:
            continue
        kind, b, g = mm.group(1), int(mm.group(2)), int(mm.group(3))
        if kind == "a":
            entries = [s.strip() for s in value.split(";")]
            if len(entries) != d * d:
                raise ConfigError("operator", f"{key}: need {d * d} entries")
            a_tab[(b, g)] = [
                [_number_or_expr(entries[i * d + j]) for j in range(d)] for i in range(d)
            ]
        else:
            f_tab[(b, g)] = _number_or_expr(value)
    if not a_tab:
        raise ConfigError("operator", "isaacs operator needs problem.isaacs.a.<b>.<g> entries")
    n_b = max(b for b, _ in a_tab) + 1
    n_g = max(g for _, g in a_tab) + 1
    a = [[a_tab.get((b, g)) for g in range(n_g)] for b in range(n_b)]
    if any(e is None for row in a for e in row):
        raise ConfigError("operator", "isaacs coefficient table has gaps")
    f = [[f_tab.get((b, g), 0.0) for g in range(n_g)] for b in range(n_b)]
    return a, f


def _number_or_expr(s: str):
    try:
        return float(s)
    except ValueError:
        return s


def build_operator(cfg: ExperimentConfig, sweep_value: float | None = None) -> ops.Operator:
    d = cfg.integer("problem.d")
    variant = cfg.get("problem.operator")
    sweep = cfg.get("sweep.parameter")
    lam = cfg.number("problem.lambda", 1.0)
    Lam = cfg.number("problem.Lambda", lam)
    if sweep == "aperture" and sweep_value is not None:
        Lam = lam * (1.0 + sweep_value)
    pair = ops.EllipticityPair(lam, Lam)
    if variant == "pucci_plus":
        return ops.PucciPlus(pair, d)
    if variant == "pucci_minus":
        return ops.PucciMinus(pair, d)
    if variant == "scaled_trace":
        c = cfg.number("problem.scale", 1.0)
        if sweep == "scale" and sweep_value is not None:
            c = sweep_value
        return ops.ScaledTrace(c, d)
    if variant == "linear":
        entries = [s.strip() for s in cfg.get("problem.coefficients", "").split(";")]
        if len(entries) != d * d:
            raise ConfigError("operator", f"problem.coefficients needs {d * d} entries")
        a = [[_number_or_expr(entries[i * d + j]) for j in range(d)] for i in range(d)]
        return ops.LinearCoefficient(a, d, pair)
    if variant == "isaacs":
        a, f = _isaacs_tables(cfg, d)
        return ops.Isaacs(a, f, d, pair)
    if variant == "p_laplace":
        p = cfg.number("problem.p")
        if sweep == "p" and sweep_value is not None:
            p = sweep_value
        return ops.NormalizedPLaplace(p, d)
    raise ConfigError("operator", f"unknown operator {variant!r}")


def check_operator_ellipticity(F: ops.Operator, seed: int = 0, n: int = 40) -> None:
    """Sampled two-sided Pucci sandwich at the declared pair (assumption A1)."""
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        x = rng.uniform(-0.5, 0.5, size=F.d)
        t = float(rng.uniform(-0.9, 0.0))
        samples.append((x, t, ops.random_symmetric(rng, F.d), ops.random_symmetric(rng, F.d)))
    rep = ops.check_pucci_sandwich(F, samples, tol=1e-7)
    if not rep.ok:
        raise ConfigError(
            "ellipticity",
            f"declared pair fails the ellipticity sandwich (slack {min(rep.worst_low, rep.worst_high):.3e})",
        )


def build_problem(cfg: ExperimentConfig, sweep_value: float | None = None) -> tuple:
    F = build_operator(cfg, sweep_value)
    check_operator_ellipticity(F, seed=cfg.integer("seed", 0))
    spec = ProblemSpec(
        F=F,
        source=cfg.get("problem.source"),
        lo=cfg.floats("problem.domain.lo"),
        hi=cfg.floats("problem.domain.hi"),
        t0=cfg.number("problem.t0"),
        boundary=cfg.get("problem.boundary"),
    )
    scheme = SchemeConfig(
        h=cfg.number("scheme.h"),
        dt=cfg.number("scheme.dt"),
        cfl_safety=cfg.number("scheme.cfl_safety", 0.9),
    )
    return spec, scheme
