"""Shared domain types, protocol configuration, and the flat config file format.

Everything in here is an immutable value type; the rest of the package builds
on these without adding shared mutable state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Mapping

import numpy as np

__all__ = [
    "Vote",
    "FaultKind",
    "FaultProfile",
    "MemoryRecord",
    "AgentProfile",
    "ProtocolConfig",
    "ConfigError",
    "InvalidQuorumFraction",
    "FaultBoundViolation",
    "WeightSumViolation",
    "LengthMismatch",
    "validate_config",
    "config_violations",
    "parse_config_text",
    "protocol_config_from_items",
    "make_embedding",
]

# Unit-sum checks (decay weights, score weights) use this tolerance.
WEIGHT_SUM_TOL = 1e-9


class Vote(enum.Enum):
    """A binary retention vote."""

    KEEP = "keep"
    FORGET = "forget"

    def inverted(self) -> "Vote":
        return Vote.FORGET if self is Vote.KEEP else Vote.KEEP


class FaultKind(enum.Enum):
    """Byzantine behavior classes for fault injection."""

    HONEST = "honest"
    SILENT_HALF = "silent_half"
    EQUIVOCATE_HALF = "equivocate_half"


@dataclass(frozen=True)
class FaultProfile:
    """Per-agent fault behavior: a kind plus the seed for its round coins.

    silent_half suppresses the agent's outbound messages in 50% of consensus
    rounds; equivocate_half inverts the agent's wire vote in 50% of rounds.
    Coin draws are resolved per (agent, epoch, memory) by the transport layer.
    """

    kind: FaultKind = FaultKind.HONEST
    coin_seed: int = 0


def make_embedding(values: Iterable[float]) -> np.ndarray:
    """Build a read-only float64 vector, the canonical embedding form."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"embedding must be one-dimensional, got shape {arr.shape}")
    arr = arr.copy() if arr.flags.writeable else arr
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class MemoryRecord:
    """One shared memory item.

    Equality and hashing are by id: a store never holds two records with the
    same id, and an updated record (new t_last) still denotes the same memory.
    """

    id: str
    embedding: np.ndarray
    agent_id: str
    t_last: float
    salience: float

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("memory id must be nonempty")
        if self.t_last < 0:
            raise ValueError(f"t_last must be >= 0, got {self.t_last}")
        if not 0.0 <= self.salience <= 1.0:
            raise ValueError(f"salience must be in [0, 1], got {self.salience}")
        emb = self.embedding
        if not isinstance(emb, np.ndarray) or emb.dtype != np.float64 or emb.flags.writeable:
            object.__setattr__(self, "embedding", make_embedding(emb))
        elif emb.ndim != 1:
            raise ValueError(f"embedding must be one-dimensional, got shape {emb.shape}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryRecord):
            return NotImplemented
        return self.id == other.id

    def __hash__(self) -> int:
        return hash(self.id)

    def touched(self, now: float) -> "MemoryRecord":
        """Copy of this record with t_last advanced to `now`."""
        return replace(self, t_last=now)


@dataclass(frozen=True)
class AgentProfile:
    """A voting agent: role weight, reliability confidence, liveness, fault mode."""

    agent_id: str
    weight: float = 1.0
    confidence: float = 1.0
    active: bool = True
    fault: FaultProfile = field(default_factory=FaultProfile)

    def __post_init__(self) -> None:
        if not self.agent_id:
            raise ValueError("agent_id must be nonempty")
        if self.weight <= 0:
            raise ValueError(f"weight must be > 0, got {self.weight}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


class ConfigError(ValueError):
    """A protocol configuration constraint is violated."""


class InvalidQuorumFraction(ConfigError):
    """alpha outside (0.5, 1]."""


class FaultBoundViolation(ConfigError):
    """N < 3f + 1."""


class WeightSumViolation(ConfigError):
    """A weight vector fails its unit-sum or range constraint."""


class LengthMismatch(ConfigError):
    """decay_scales and decay_weights differ in length (or are empty)."""


@dataclass(frozen=True)
class ProtocolConfig:
    """All tunables of one protocol run. Defaults reproduce the reference setup."""

    n_agents: int = 4
    f: int = 1
    alpha: float = 2.0 / 3.0
    decay_scales: tuple[float, ...] = (10.0, 60.0, 3600.0)
    decay_weights: tuple[float, ...] = (0.2, 0.3, 0.5)
    decay_threshold: float = 0.3
    variance_warn: float = 0.1
    omega_d: float = 0.4
    omega_r: float = 0.6
    vote_threshold: float = 0.4
    epoch_interactions: int = 100
    cache_capacity: int = 100
    batch_size: int = 50
    batch_interval_s: float = 10.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        # Normalize list-ish inputs to tuples so the config stays hashable.
        object.__setattr__(self, "decay_scales", tuple(float(s) for s in self.decay_scales))
        object.__setattr__(self, "decay_weights", tuple(float(g) for g in self.decay_weights))


def config_violations(cfg: ProtocolConfig) -> list[tuple[type[ConfigError], str]]:
    """All violated constraints of `cfg`, in declaration order. Empty when valid."""
    out: list[tuple[type[ConfigError], str]] = []
    if cfg.n_agents < 3 * cfg.f + 1 or cfg.f < 0:
        out.append((FaultBoundViolation, f"N ≥ 3f+1 violated: n_agents={cfg.n_agents}, f={cfg.f}"))
    if not 0.5 < cfg.alpha <= 1.0:
        out.append((InvalidQuorumFraction, f"alpha must lie in (0.5, 1], got {cfg.alpha}"))
    if len(cfg.decay_scales) != len(cfg.decay_weights) or len(cfg.decay_scales) == 0:
        out.append(
            (
                LengthMismatch,
                f"decay_scales and decay_weights must be same nonempty length, "
                f"got {len(cfg.decay_scales)} and {len(cfg.decay_weights)}",
            )
        )
    if any(s <= 0 for s in cfg.decay_scales):
        out.append((ConfigError, f"decay_scales must be positive, got {cfg.decay_scales}"))
    if any(not 0.0 <= g <= 1.0 for g in cfg.decay_weights):
        out.append((WeightSumViolation, f"each decay weight must lie in [0, 1], got {cfg.decay_weights}"))
    elif cfg.decay_weights and abs(math.fsum(cfg.decay_weights) - 1.0) > WEIGHT_SUM_TOL:
        out.append(
            (WeightSumViolation, f"decay weights must sum to 1, got {math.fsum(cfg.decay_weights)!r}")
        )
    if not 0.0 <= cfg.omega_d <= 1.0 or not 0.0 <= cfg.omega_r <= 1.0 or abs(
        cfg.omega_d + cfg.omega_r - 1.0
    ) > WEIGHT_SUM_TOL:
        out.append(
            (WeightSumViolation, f"omega_d + omega_r must equal 1, got {cfg.omega_d} + {cfg.omega_r}")
        )
    if not 0.0 < cfg.decay_threshold < 1.0:
        out.append((ConfigError, f"decay_threshold must lie in (0, 1), got {cfg.decay_threshold}"))
    if not 0.0 < cfg.vote_threshold < 1.0:
        out.append((ConfigError, f"vote_threshold must lie in (0, 1), got {cfg.vote_threshold}"))
    if cfg.variance_warn < 0:
        out.append((ConfigError, f"variance_warn must be >= 0, got {cfg.variance_warn}"))
    if cfg.epoch_interactions < 1:
        out.append((ConfigError, f"epoch_interactions must be >= 1, got {cfg.epoch_interactions}"))
    if cfg.cache_capacity < 1:
        out.append((ConfigError, f"cache_capacity must be >= 1, got {cfg.cache_capacity}"))
    if cfg.batch_size < 1:
        out.append((ConfigError, f"batch_size must be >= 1, got {cfg.batch_size}"))
    if cfg.batch_interval_s <= 0:
        out.append((ConfigError, f"batch_interval_s must be > 0, got {cfg.batch_interval_s}"))
    return out


def validate_config(cfg: ProtocolConfig) -> ProtocolConfig:
    """Return `cfg` unchanged iff every constraint holds; raise on the first violation."""
    violations = config_violations(cfg)
    if violations:
        err_cls, message = violations[0]
        raise err_cls(message)
    return cfg


# --- flat config file format -------------------------------------------------
#
# One `key = value` pair per line; blank lines and `#` comments are ignored.
# Values: int, float, bool (true/false), fraction (2/3), comma list (10, 60),
# integer range (10..20), else a bare string. Keys are namespaced by prefix:
# bare keys configure the protocol, `workload.` and `network.` feed those specs.


def _parse_scalar(raw: str) -> Any:
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            return float(num) / float(den)
        except (ValueError, ZeroDivisionError):
            pass
    return text


def _parse_value(raw: str) -> Any:
    text = raw.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            return (int(lo), int(hi))
        except ValueError:
            pass
    if "," in text:
        return tuple(_parse_scalar(part) for part in text.split(","))
    return _parse_scalar(text)


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse the flat key = value format into a mapping with coerced values."""
    items: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in items:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        items[key] = _parse_value(raw)
    return items


_PROTOCOL_FIELDS = None


def protocol_config_from_items(items: Mapping[str, Any], validate: bool = True) -> ProtocolConfig:
    """Build a ProtocolConfig from parsed key/value items.

    Unknown keys are an error; missing keys keep their defaults. With
    validate=False the constraints are left unchecked so a caller can list
    every violation via config_violations instead of stopping at the first.
    """
    global _PROTOCOL_FIELDS
    if _PROTOCOL_FIELDS is None:
        _PROTOCOL_FIELDS = {fld.name for fld in fields(ProtocolConfig)}
    unknown = sorted(set(items) - _PROTOCOL_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(items)
    for key in ("decay_scales", "decay_weights"):
        if key in kwargs and not isinstance(kwargs[key], tuple):
            kwargs[key] = (kwargs[key],)
    try:
        cfg = ProtocolConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate_config(cfg) if validate else cfg
