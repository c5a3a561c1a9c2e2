"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, list values are comma
separated.  Unknown keys are rejected so that typos surface before any
trial runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..banded import BandedSpec, Regularity, Symmetry
from ..codes import ChunkScheme, make_scheme, scheme_for
from ..network import DeliveryOrder, ScheduleKind


class ConfigError(ValueError):
    """A configuration value is missing, malformed or inconsistent."""


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path: str | Path) -> dict[str, str]:
    return parse_text(Path(path).read_text(encoding="utf-8"))


def _items(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _bool(key: str, value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {value!r}")


def _ints(key, value):
    return [_int(key, v) for v in _items(value)]


def _floats(key, value):
    return [_float(key, v) for v in _items(value)]


def _kinds(key, value):
    try:
        return [ScheduleKind.parse(v) for v in _items(value)]
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None


def _choice(enum):
    def conv(key, value):
        try:
            return enum(value)
        except ValueError:
            allowed = ", ".join(m.value for m in enum)
            raise ConfigError(f"{key}: expected one of {allowed}, got {value!r}") from None
    return conv


def _str(key, value):
    return value


def _strs(key, value):
    return _items(value)


# run-control settings shared by every mode
_COMMON = {
    "seed": _int,
    "workers": _int,
    "out": _str,
}


@dataclass(frozen=True)
class SchemeChoice:
    """Scheme request as written in a config: ``dense``, ``CC:alpha`` or ``OCC:alpha:tau``."""

    label: str
    alpha: int | None
    tau: int

    def build(self, k: int) -> ChunkScheme:
        if self.label == "dense":
            return make_scheme("dense", k)
        return scheme_for(k, self.alpha, self.tau)


def _scheme_token(key: str, token: str) -> SchemeChoice:
    parts = token.split(":")
    head = parts[0].strip().lower()
    try:
        if head == "dense" and len(parts) == 1:
            return SchemeChoice("dense", None, 1)
        if head == "cc" and len(parts) == 2:
            return SchemeChoice("CC", int(parts[1]), 1)
        if head == "occ" and len(parts) == 3:
            return SchemeChoice("OCC", int(parts[1]), int(parts[2]))
    except ValueError:
        pass
    raise ConfigError(f"{key}: bad scheme {token!r} (use dense, CC:alpha or OCC:alpha:tau)")


def _schemes(key, value):
    return [_scheme_token(key, t) for t in _items(value)]


@dataclass(frozen=True)
class SimulateConfig:
    k: int = 64
    l: int = 2
    kinds: list = field(default_factory=lambda: [ScheduleKind.ONE_IN_ONE_OUT])
    lambdas: list = field(default_factory=lambda: [0.5])
    schemes: list = field(default_factory=lambda: [SchemeChoice("dense", None, 1)])
    delivery: DeliveryOrder = DeliveryOrder.INORDER
    payload_len: int = 0
    allow_empty_chunk: bool = False
    trials: int | None = None
    target_failures: int = 1000
    max_trials: int = 1_000_000
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def n_for(self, lam: float) -> int:
        return int(round((1 + lam) * self.k))

    def validate(self) -> None:
        if self.k < 1 or self.l < 1:
            raise ConfigError("k and l must be positive")
        for lam in self.lambdas:
            if self.n_for(lam) < 1:
                raise ConfigError(f"lambda: {lam} gives an empty schedule")
        for s in self.schemes:
            try:
                s.build(self.k)
            except ValueError as e:
                raise ConfigError(f"schemes: {e}") from None
        _check_run_control(self)


@dataclass(frozen=True)
class RankConfig:
    ks: list = field(default_factory=lambda: [128])
    ms: list = field(default_factory=lambda: list(range(11)))
    alphas: list | None = None
    gammas: list | None = None
    taus: list | None = None
    regularity: Regularity = Regularity.IRREGULAR
    symmetry: Symmetry = Symmetry.SYMMETRIC
    trials: int = 10_000
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def cells(self) -> list[BandedSpec]:
        """Every (k, m, alpha, gamma) cell; gammas come from ``gamma`` or from ``tau``."""
        specs = []
        for k in self.ks:
            alphas = self.alphas or [k]
            for alpha in alphas:
                if self.gammas is not None:
                    gammas = self.gammas
                elif self.taus is not None:
                    gammas = []
                    for tau in self.taus:
                        if alpha % tau:
                            raise ConfigError(f"tau: {tau} does not divide alpha = {alpha}")
                        gammas.append(alpha * (tau - 1) // tau)
                else:
                    gammas = [0]
                for gamma in gammas:
                    for m in self.ms:
                        try:
                            specs.append(BandedSpec(k + m, k, alpha, gamma, self.regularity, self.symmetry))
                        except ValueError as e:
                            raise ConfigError(f"cell k={k} m={m} alpha={alpha} gamma={gamma}: {e}") from None
        return specs

    def validate(self) -> None:
        if self.gammas is not None and self.taus is not None:
            raise ConfigError("give either gamma or tau, not both")
        if any(m < -min(self.ks) for m in self.ms):
            raise ConfigError("m: too negative for the smallest k")
        self.cells()
        _check_run_control(self)


BOUND_NAMES = ("dense_kmax", "erasure_kmax", "density_loss", "cc_capacity", "cc_kmax", "rank_tail")


@dataclass(frozen=True)
class BoundsConfig:
    bounds: list = field(default_factory=lambda: list(BOUND_NAMES))
    kinds: list = field(default_factory=lambda: list(ScheduleKind))
    ns: list = field(default_factory=lambda: [1024])
    ls: list = field(default_factory=lambda: [4])
    qs: list = field(default_factory=lambda: [8])
    epsilons: list = field(default_factory=lambda: [0.01])
    ds: list = field(default_factory=lambda: [16])
    gammas: list = field(default_factory=lambda: [2, 4])
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def validate(self) -> None:
        for b in self.bounds:
            if b not in BOUND_NAMES:
                raise ConfigError(f"bounds: unknown bound {b!r} (known: {', '.join(BOUND_NAMES)})")
        for e in self.epsilons:
            if not 0 < e <= 1:
                raise ConfigError(f"epsilon: {e} outside (0, 1]")
        for d in self.ds:
            for g in self.gammas:
                if not 0 <= g <= d - 1:
                    raise ConfigError(f"gamma: {g} outside 0..{d - 1}")


@dataclass(frozen=True)
class CapacityConfig:
    kinds: list = field(default_factory=lambda: list(ScheduleKind))
    l: int = 4
    n: int = 1024
    q: int = 8
    epsilon: float = 0.01
    trials: int = 1000
    delivery: DeliveryOrder = DeliveryOrder.INORDER
    validate_bound: bool = False
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def validate(self) -> None:
        if self.l < 1 or self.n < 1 or self.q < 1:
            raise ConfigError("l, n and q must be positive")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon: {self.epsilon} outside (0, 1)")
        _check_run_control(self)


def _check_run_control(cfg) -> None:
    if getattr(cfg, "workers", 1) < 1:
        raise ConfigError("workers must be >= 1")
    trials = getattr(cfg, "trials", None)
    if trials is not None and trials < 1:
        raise ConfigError("trials must be >= 1")
    if getattr(cfg, "target_failures", 1) < 1:
        raise ConfigError("target_failures must be >= 1")
    if getattr(cfg, "max_trials", 1) < 1:
        raise ConfigError("max_trials must be >= 1")
    if getattr(cfg, "seed", 0) < 0:
        raise ConfigError("seed must be a non-negative integer")


# config key -> (field name, converter) per mode
_KEYS = {
    SimulateConfig: {
        "k": ("k", _int), "l": ("l", _int), "kind": ("kinds", _kinds),
        "lambda": ("lambdas", _floats), "schemes": ("schemes", _schemes),
        "delivery": ("delivery", _choice(DeliveryOrder)), "payload_len": ("payload_len", _int),
        "allow_empty_chunk": ("allow_empty_chunk", _bool), "trials": ("trials", _int),
        "target_failures": ("target_failures", _int), "max_trials": ("max_trials", _int),
    },
    RankConfig: {
        "k": ("ks", _ints), "m": ("ms", _ints), "alpha": ("alphas", _ints),
        "gamma": ("gammas", _ints), "tau": ("taus", _ints),
        "regularity": ("regularity", _choice(Regularity)), "symmetry": ("symmetry", _choice(Symmetry)),
        "trials": ("trials", _int),
    },
    BoundsConfig: {
        "bounds": ("bounds", _strs), "kind": ("kinds", _kinds), "n": ("ns", _floats),
        "l": ("ls", _ints), "q": ("qs", _ints), "epsilon": ("epsilons", _floats),
        "d": ("ds", _ints), "gamma": ("gammas", _ints),
    },
    CapacityConfig: {
        "kind": ("kinds", _kinds), "l": ("l", _int), "n": ("n", _int), "q": ("q", _int),
        "epsilon": ("epsilon", _float), "trials": ("trials", _int),
        "delivery": ("delivery", _choice(DeliveryOrder)), "validate": ("validate_bound", _bool),
    },
}


def _alpha_tau_grid(raw: dict[str, str]) -> list[SchemeChoice]:
    """``alpha`` x ``tau`` cross product; alpha = k with tau = 1 is the dense code."""
    alphas = _ints("alpha", raw.pop("alpha"))
    taus = _ints("tau", raw.pop("tau", "1"))
    k = _int("k", raw["k"]) if "k" in raw else None
    out = []
    for a in alphas:
        for t in taus:
            if t == 1:
                out.append(SchemeChoice("dense", None, 1) if a == k else SchemeChoice("CC", a, 1))
            else:
                out.append(SchemeChoice("OCC", a, t))
    return out


def build_config(cls, raw: dict[str, str]):
    """Typed config of class ``cls`` from raw string settings; validates it."""
    raw = dict(raw)
    raw.pop("mode", None)
    values = {}
    if cls is SimulateConfig and "alpha" in raw:
        if "schemes" in raw:
            raise ConfigError("give either schemes or alpha/tau, not both")
        values["schemes"] = _alpha_tau_grid(raw)
    keys = {**_KEYS[cls], **{k: (k, conv) for k, conv in _COMMON.items()}}
    for key, value in raw.items():
        if key not in keys:
            raise ConfigError(f"unknown setting {key!r} for this mode")
        name, conv = keys[key]
        values[name] = conv(key, value)
    known = {f.name for f in fields(cls)}
    cfg = replace(cls(), **{k: v for k, v in values.items() if k in known})
    cfg.validate()
    return cfg
