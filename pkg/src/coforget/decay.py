"""Multi-scale exponential decay scoring with variance monitoring.

A memory's age is scored against several time constants at once; the combined
weighted score drives forgetting proposals, while the spread across scales is
tracked as a variance diagnostic.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

from .core import ProtocolConfig

logger = logging.getLogger(__name__)

__all__ = ["Proposal", "DecayResult", "NegativeAge", "decay_score"]


class NegativeAge(ValueError):
    """now precedes t_last; the age would be negative."""


class Proposal(enum.Enum):
    PROPOSE_FORGET = "propose_forget"
    PROPOSE_KEEP = "propose_keep"


@dataclass(frozen=True)
class DecayResult:
    """Per-scale scores, their weighted combination, and the spread diagnostic."""

    per_scale: tuple[float, ...]
    combined: float
    variance: float
    high_variance: bool
    proposal: Proposal


def decay_score(t_last: float, now: float, cfg: ProtocolConfig) -> DecayResult:
    """Score a memory's age across all configured time scales.

    per_scale[i] = exp(-(now - t_last) / S_i); combined is the gamma-weighted
    average; variance is the population spread of the per-scale scores around
    the combined (weighted) value. The proposal flag compares combined against
    the decay threshold; it is reported but does not bypass voting.
    """
    age = now - t_last
    if age < 0:
        raise NegativeAge(f"now ({now}) precedes t_last ({t_last})")
    # math.exp underflows to 0.0 for very old memories; that is intended
    # (combined 0 means propose_forget).
    per_scale = tuple(math.exp(-age / s) for s in cfg.decay_scales)
    combined = 0.0
    for g, d in zip(cfg.decay_weights, per_scale):
        combined += g * d
    acc = 0.0
    for d in per_scale:
        diff = d - combined
        acc += diff * diff
    variance = acc / len(per_scale)
    high_variance = variance > cfg.variance_warn
    if high_variance:
        logger.debug(
            "high decay variance: age=%.3f variance=%.6f warn=%.3f", age, variance, cfg.variance_warn
        )
    proposal = Proposal.PROPOSE_FORGET if combined < cfg.decay_threshold else Proposal.PROPOSE_KEEP
    return DecayResult(per_scale, combined, variance, high_variance, proposal)
