"""Scenario configuration: a flat YAML mapping validated against a typed schema.

Schema (all keys optional except ``scenario``)::

    scenario:   S1 | S2 | S3 | S4 | S5 | S6
    operator:   p_laplace | porous_medium | zero
    p:          p-Laplace exponent (> 1)
    m:          porous-medium exponent for Psi(s) = s|s|^{m-1} (>= 1)
    driver:     additive_fbm | young | linear_mult | reg_by_noise | none
    H:          Hurst parameter of the driving fBm, in (0, 1)
    coloring:   list of mode weights for the additive driver
    sigma:      sin | tanh | identity | constant  (young driver)
    eps:        list of mollification widths (reg_by_noise, each > 0)
    H_w:        Hurst parameter of the regularizing path w
    gamma, q:   declared driver exponents (defaults derived from H)
    n, d, T:    time intervals (power of two), interior space nodes, horizon
    seeds:      list of integer seeds
    tol:        sewing tolerance;  newton_tol: implicit-solve tolerance
    refinements: number of grid refinements for the constant-stability audit
    study:      heat | sewing_left_point | chain_rule_identity  (tables)
    levels:     refinement levels for tables (list of >= 3 integers)
    out:        output directory
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

SCENARIOS = ("S1", "S2", "S3", "S4", "S5", "S6")
OPERATORS = ("p_laplace", "porous_medium", "zero")
DRIVERS = ("additive_fbm", "young", "linear_mult", "reg_by_noise", "none")
SIGMAS = ("sin", "tanh", "identity", "constant")
STUDIES = ("heat", "sewing_left_point", "chain_rule_identity")

SCENARIO_DEFAULTS = {
    "S1": {"operator": "p_laplace", "p": 3.0, "driver": "additive_fbm", "H": 0.75},
    "S2": {"operator": "p_laplace", "p": 3.0, "driver": "young", "H": 0.9, "sigma": "sin"},
    "S3": {"operator": "p_laplace", "p": 2.0, "driver": "linear_mult", "H": 0.9},
    "S4": {"operator": "porous_medium", "m": 2.0, "driver": "additive_fbm", "H": 0.75},
    "S5": {"operator": "p_laplace", "p": 3.0, "driver": "reg_by_noise", "H_w": 0.1},
    "S6": {"operator": "zero", "driver": "none", "H": 0.75},
}


class ConfigError(ValueError):
    """Carries the itemized list of violations."""

    def __init__(self, errors: list):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class ScenarioConfig:
    scenario: str
    operator: str = "p_laplace"
    p: float = 3.0
    m: float = 2.0
    driver: str = "additive_fbm"
    H: float = 0.75
    coloring: list = field(default_factory=lambda: [1.0])
    sigma: str = "sin"
    eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    H_w: float = 0.1
    gamma: float | None = None
    q: float | None = None
    n: int = 4096
    d: int = 128
    T: float = 1.0
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    tol: float = 1e-10
    newton_tol: float = 1e-12
    refinements: int = 3
    study: str = "heat"
    levels: list = field(default_factory=lambda: [9, 10, 11])
    out: str = "runs"

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # derived driver exponents ------------------------------------------------

    def driver_exponents(self) -> tuple[float, float]:
        """Declared ``(gamma, q)``; defaults follow the admissible window for each driver."""
        if self.driver == "additive_fbm":
            gamma, q = self.H - 0.05, float("inf")
        elif self.driver in ("young", "linear_mult"):
            gamma, q = 0.75 + 0.25 * (self.H - 0.75), 4.0
        elif self.driver == "reg_by_noise":
            gamma, q = 0.9, 4.0
        else:
            gamma, q = 1.0, float("inf")
        if self.gamma is not None:
            gamma = self.gamma
        if self.q is not None:
            q = self.q
        return gamma, q


_FIELDS = {f for f in ScenarioConfig.__dataclass_fields__}


def _as_float(key, v, errors):
    try:
        return float(v)
    except (TypeError, ValueError):
        errors.append(f"{key}: expected a number, got {v!r}")
        return None


def validate(cfg: ScenarioConfig) -> list:
    """Return the list of violated rules (empty when admissible)."""
    errs = []
    if cfg.scenario not in SCENARIOS:
        errs.append(f"scenario: unknown id {cfg.scenario!r} (expected one of {', '.join(SCENARIOS)})")
    if cfg.operator not in OPERATORS:
        errs.append(f"operator: unknown operator {cfg.operator!r}")
    if cfg.driver not in DRIVERS:
        errs.append(f"driver: unknown driver {cfg.driver!r}")
    if cfg.sigma not in SIGMAS:
        errs.append(f"sigma: unknown map {cfg.sigma!r}")
    if cfg.study not in STUDIES:
        errs.append(f"study: unknown study {cfg.study!r}")
    if not 0 < cfg.H < 1:
        errs.append(f"H: Hurst in (0,1) required, got {cfg.H}")
    if not 0 < cfg.H_w < 1:
        errs.append(f"H_w: Hurst in (0,1) required, got {cfg.H_w}")
    if not cfg.p > 1:
        errs.append(f"p: p-Laplace exponent must exceed 1, got {cfg.p}")
    if not cfg.m >= 1:
        errs.append(f"m: porous-medium exponent must be >= 1, got {cfg.m}")
    if not (isinstance(cfg.n, int) and cfg.n >= 4 and cfg.n & (cfg.n - 1) == 0):
        errs.append(f"n: number of time intervals must be a power of two >= 4, got {cfg.n}")
    if not (isinstance(cfg.d, int) and cfg.d >= 2):
        errs.append(f"d: need at least 2 interior nodes, got {cfg.d}")
    if not cfg.T > 0:
        errs.append(f"T: horizon must be positive, got {cfg.T}")
    if not cfg.seeds or not all(isinstance(s, int) and s >= 0 for s in cfg.seeds):
        errs.append("seeds: need a nonempty list of nonnegative integers")
    if cfg.driver == "reg_by_noise":
        if not cfg.eps or any(not (isinstance(e, (int, float)) and e > 0) for e in cfg.eps):
            errs.append("eps: mollification must be positive")
    if any(not c == c or abs(c) == float("inf") for c in cfg.coloring):
        errs.append("coloring: coefficients must be finite")
    if not cfg.tol >= 0 or not cfg.newton_tol > 0:
        errs.append("tol/newton_tol: tolerances must be nonnegative / positive")
    if not (isinstance(cfg.refinements, int) and cfg.refinements >= 1):
        errs.append("refinements: need a positive integer")
    if len(cfg.levels) < 3 or not all(isinstance(l, int) and 1 <= l <= 22 for l in cfg.levels):
        errs.append("levels: need at least 3 integer refinement levels in 1..22")
    if errs:
        return errs
    # regime hypotheses
    gamma, q = cfg.driver_exponents()
    if cfg.driver == "additive_fbm" and not cfg.H > 0.5:
        errs.append(
            f"H: additive regime needs Z of regularity gamma > 1/2; H={cfg.H} gives gamma <= 1/2"
        )
    if cfg.driver in ("young", "linear_mult") and not cfg.H > 0.75:
        errs.append(
            f"H: Young regime needs X in C^gamma with gamma > 3/4; H={cfg.H} does not allow it"
        )
    if cfg.driver in ("young", "linear_mult") and not gamma < cfg.H:
        errs.append(f"gamma: declared {gamma} must stay below the path regularity H={cfg.H}")
    if cfg.driver != "none" and not gamma > 0.5 + 1.0 / q:
        errs.append(f"gamma: driver exponents violate gamma > 1/2 + 1/q (gamma={gamma}, q={q})")
    if cfg.driver == "additive_fbm" and not gamma < cfg.H:
        errs.append(f"gamma: declared {gamma} must stay below the path regularity H={cfg.H}")
    if cfg.scenario == "S4" and cfg.operator != "porous_medium":
        errs.append("operator: S4 is the porous-medium scenario")
    return errs


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate; raise :class:`ConfigError` with every violation."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a key-value mapping"])
    errs = [f"{k}: unknown key" for k in raw if k not in _FIELDS]
    if "scenario" not in raw:
        errs.append("scenario: required key missing")
        raise ConfigError(errs)
    sid = str(raw["scenario"])
    merged = dict(SCENARIO_DEFAULTS.get(sid, {}))
    merged.update({k: v for k, v in raw.items() if k in _FIELDS})
    merged["scenario"] = sid
    for key in ("p", "m", "H", "H_w", "T", "tol", "newton_tol", "gamma", "q"):
        if key in merged and merged[key] is not None:
            val = _as_float(key, merged[key], errs)
            if val is not None:
                merged[key] = val
    for key in ("n", "d", "refinements"):
        if key in merged and not (isinstance(merged[key], int) and not isinstance(merged[key], bool)):
            errs.append(f"{key}: expected an integer, got {merged[key]!r}")
    for key in ("coloring", "eps", "seeds", "levels"):
        if key in merged and not isinstance(merged[key], list):
            merged[key] = [merged[key]]
    if "coloring" in merged:
        merged["coloring"] = [_as_float("coloring", c, errs) for c in merged["coloring"]]
    if "eps" in merged:
        merged["eps"] = [_as_float("eps", c, errs) for c in merged["eps"]]
    if any("expected" in e for e in errs):
        raise ConfigError(errs)
    cfg = ScenarioConfig(**merged)
    errs += validate(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def dump_config(cfg: ScenarioConfig) -> str:
    d = asdict(cfg)
    for k in ("gamma", "q"):
        if d[k] is None:
            d.pop(k)
    return yaml.safe_dump(d, sort_keys=True)
