"""Consensus-gated collective forgetting for multi-agent shared memory.

Agents score each memory by multi-scale temporal decay and semantic relevance,
vote under a confidence-weighted dynamic quorum, and finalize deletions through
three-phase Byzantine consensus. The package is a library plus a deterministic
CLI simulator with fault injection.
"""

from .consensus import (
    Behavior,
    ConsensusTimeout,
    DuplicateInstance,
    MessageKind,
    PbftInstance,
    PbftMessage,
    RoundResult,
    finalize,
    run_round,
)
from .core import (
    AgentProfile,
    ConfigError,
    FaultBoundViolation,
    FaultKind,
    FaultProfile,
    InvalidQuorumFraction,
    LengthMismatch,
    MemoryRecord,
    ProtocolConfig,
    Vote,
    WeightSumViolation,
    config_violations,
    make_embedding,
    parse_config_text,
    protocol_config_from_items,
    validate_config,
)
from .decay import DecayResult, NegativeAge, Proposal, decay_score
from .epoch import EpochReport, MemoryAudit, SimulationResult, run_epoch, run_simulation
from .relevance import (
    ContextProfile,
    CosineContextScorer,
    DimensionMismatch,
    ExternalScorer,
    KeywordOverlapScorer,
    RelevanceScorer,
    ScorerKind,
    relevance,
)
from .store import EmptyIndex, MemoryStore, MetadataTable, VectorIndex, WriteBuffer
from .transport import (
    CodecError,
    CoordinatorEndpoint,
    Frame,
    FrameKind,
    NetworkConfig,
    OversizeFrame,
    ProposalTimeout,
    SimulatedNetwork,
    TransportClosed,
    TruncatedFrame,
    UnknownMessageKind,
    decode,
    encode,
    propose_forgetting,
    resolve_behavior,
)
from .voting import (
    AgentVote,
    NoActiveAgents,
    QuorumDecision,
    UnknownAgent,
    form_vote,
    quorum_decision,
    quorum_threshold,
    weighted_forget_score,
)
from .workload import (
    EmptyPopulation,
    SummaryMetrics,
    WorkloadSpec,
    ZipfSampler,
    aggregate,
    default_agents,
    generate_initial,
    make_context,
    step_interaction,
)

__version__ = "0.1.0"
