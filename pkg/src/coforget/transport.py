"""Deterministic simulated network, fault-coin resolution, and the framed codec.

The network delivers messages in timestamp order with seeded-uniform latency
and seeded drops, so a whole run's delivery trace is a pure function of the
submission sequence and the seed. The codec defines the binary frame format
shared by the in-process transport and the optional socket mode.
"""

from __future__ import annotations

import enum
import logging
import random
import struct
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import Sequence

from .consensus import Behavior, MessageKind, PbftMessage
from .core import FaultKind, FaultProfile, Vote

logger = logging.getLogger(__name__)

__all__ = [
    "NetworkConfig",
    "network_config_from_items",
    "FaultProfile",
    "FaultKind",
    "resolve_behavior",
    "Delivery",
    "UnknownDestination",
    "SimulatedNetwork",
    "FrameKind",
    "Frame",
    "CodecError",
    "TruncatedFrame",
    "UnknownMessageKind",
    "OversizeFrame",
    "MAX_FRAME_BYTES",
    "encode_frame",
    "decode_frame",
    "encode",
    "decode",
    "frame_from_message",
    "message_from_frame",
    "ProposalTimeout",
    "TransportClosed",
    "CoordinatorEndpoint",
    "propose_forgetting",
    "send_frame",
    "recv_frame",
]


# --- simulated network --------------------------------------------------------


@dataclass(frozen=True)
class NetworkConfig:
    """Latency band (milliseconds), drop probability, and the RNG seed."""

    latency_min_ms: float = 1.0
    latency_max_ms: float = 5.0
    drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ValueError(
                f"latency band invalid: [{self.latency_min_ms}, {self.latency_max_ms}]"
            )
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError(f"drop_prob must be in [0, 1], got {self.drop_prob}")


def network_config_from_items(items: dict[str, object]) -> NetworkConfig:
    """Build a NetworkConfig from parsed config-file items; unknown keys error."""
    from .core import ConfigError

    known = set(NetworkConfig.__dataclass_fields__)
    unknown = sorted(set(items) - known)
    if unknown:
        raise ConfigError(f"unknown network config keys: {', '.join(unknown)}")
    try:
        return NetworkConfig(**items)  # type: ignore[arg-type]
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


class UnknownDestination(KeyError):
    """Message submitted to a destination that was never registered."""


@dataclass(frozen=True)
class Delivery:
    """One delivered message with its timing."""

    msg: PbftMessage
    sender: str
    dest: str
    time_s: float
    latency_s: float


class SimulatedNetwork:
    """Single-owner event queue with seeded latency and drops.

    Delivery order is (timestamp, sender, per-sender sequence): deterministic
    for a fixed seed and submission sequence. Self-submissions bypass latency
    and drops entirely.
    """

    def __init__(self, config: NetworkConfig | None = None):
        self.config = config or NetworkConfig()
        self._rng = random.Random(self.config.seed)
        self._heap: list[tuple[float, str, int, Delivery]] = []
        self._seq: dict[str, int] = {}
        self._destinations: set[str] = set()
        self.clock = 0.0
        self.delivered = 0
        self.dropped = 0
        self.delivered_latency_s = 0.0

    def register(self, node_id: str) -> None:
        self._destinations.add(node_id)

    def submit(self, msg: PbftMessage, sender: str, dest: str) -> bool:
        """Schedule a delivery (or drop it). Returns whether it was scheduled."""
        if dest not in self._destinations:
            raise UnknownDestination(dest)
        seq = self._seq.get(sender, 0) + 1
        self._seq[sender] = seq
        if sender == dest:
            # Self-messages bypass the network: immediate, lossless.
            delivery = Delivery(msg, sender, dest, self.clock, 0.0)
            heappush(self._heap, (self.clock, sender, seq, delivery))
            return True
        if self._rng.random() < self.config.drop_prob:
            self.dropped += 1
            return False
        latency_s = self._rng.uniform(self.config.latency_min_ms, self.config.latency_max_ms) / 1000.0
        delivery = Delivery(msg, sender, dest, self.clock + latency_s, latency_s)
        heappush(self._heap, (delivery.time_s, sender, seq, delivery))
        return True

    def poll(self) -> Delivery | None:
        """Deliver the next scheduled message, advancing the virtual clock."""
        if not self._heap:
            return None
        _, _, _, delivery = heappop(self._heap)
        self.clock = delivery.time_s
        self.delivered += 1
        self.delivered_latency_s += delivery.latency_s
        return delivery

    def pending(self) -> int:
        return len(self._heap)

    def drain(self) -> int:
        """Discard anything still queued; returns how many messages were dropped."""
        n = len(self._heap)
        self._heap.clear()
        return n


def resolve_behavior(fault: FaultProfile, epoch: int, memory_id: str) -> Behavior:
    """Flip the per-round fault coin for one agent and one consensus round.

    Coins are seeded from (coin_seed, epoch, memory_id) so the schedule is
    reproducible and independent of delivery order.
    """
    if fault.kind is FaultKind.HONEST:
        return Behavior.HONEST
    coin = random.Random(f"{fault.coin_seed}:{epoch}:{memory_id}").random() < 0.5
    if fault.kind is FaultKind.SILENT_HALF:
        return Behavior.SILENT if coin else Behavior.HONEST
    return Behavior.EQUIVOCATE if coin else Behavior.HONEST


# --- framed codec --------------------------------------------------------------
#
# Frame layout, all integers big-endian:
#   [u32 frame_length excluding itself]
#   [u8  kind: 0=EVALUATE, 1=PREPARE, 2=COMMIT, 3=PROPOSE, 4=PROPOSE_ACK]
#   [u64 epoch]
#   [u16 sender_len][sender UTF-8]
#   [u16 id_count] then per id: [u16 len][id UTF-8]
#   [u8  vote: 0=keep, 1=forget, 2=absent]
#   [u16 sig_len][signature bytes, may be empty]

MAX_FRAME_BYTES = 64 * 1024

_U32 = struct.Struct("!I")
_U16 = struct.Struct("!H")
_HEAD = struct.Struct("!BQ")  # kind, epoch


class FrameKind(enum.IntEnum):
    EVALUATE = 0
    PREPARE = 1
    COMMIT = 2
    PROPOSE = 3
    PROPOSE_ACK = 4


class CodecError(ValueError):
    """Base class for every frame decoding/encoding failure."""


class TruncatedFrame(CodecError):
    """The byte sequence ends before the frame does."""


class UnknownMessageKind(CodecError):
    """The kind byte names no known frame kind."""


class OversizeFrame(CodecError):
    """Frame body exceeds the 64 KiB limit."""


_VOTE_TO_BYTE = {Vote.KEEP: 0, Vote.FORGET: 1, None: 2}
_BYTE_TO_VOTE = {0: Vote.KEEP, 1: Vote.FORGET, 2: None}


@dataclass(frozen=True)
class Frame:
    """Decoded wire frame; PROPOSE/PROPOSE_ACK carry many ids, consensus kinds one."""

    kind: FrameKind
    epoch: int
    sender: str
    memory_ids: tuple[str, ...]
    vote: Vote | None = None
    signature: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    """Serialize a frame; raises OversizeFrame past the 64 KiB body limit."""
    if not 0 <= frame.epoch < 2**64:
        raise CodecError(f"epoch out of u64 range: {frame.epoch}")
    sender = frame.sender.encode("utf-8")
    ids = [mid.encode("utf-8") for mid in frame.memory_ids]
    body_len = (
        _HEAD.size
        + 2
        + len(sender)
        + 2
        + sum(2 + len(b) for b in ids)
        + 1
        + 2
        + len(frame.signature)
    )
    if body_len > MAX_FRAME_BYTES:
        raise OversizeFrame(f"frame body {body_len} bytes exceeds {MAX_FRAME_BYTES}")
    parts = [
        _U32.pack(body_len),
        _HEAD.pack(int(frame.kind), frame.epoch),
        _U16.pack(len(sender)),
        sender,
        _U16.pack(len(ids)),
    ]
    for raw in ids:
        parts.append(_U16.pack(len(raw)))
        parts.append(raw)
    parts.append(bytes([_VOTE_TO_BYTE[frame.vote]]))
    parts.append(_U16.pack(len(frame.signature)))
    parts.append(frame.signature)
    return b"".join(parts)


class _Cursor:
    """Bounds-checked reader over one frame body."""

    def __init__(self, body: bytes):
        self._body = body
        self._pos = 0

    def take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._body):
            raise TruncatedFrame(
                f"frame body ends at {len(self._body)} bytes but field needs {end}"
            )
        chunk = self._body[self._pos : end]
        self._pos = end
        return chunk

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def text(self) -> str:
        raw = self.take(self.u16())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError(f"invalid utf-8 in frame field: {exc}") from exc

    def leftover(self) -> int:
        return len(self._body) - self._pos


def decode_frame(data: bytes) -> Frame:
    """Parse exactly one complete frame; total over all five kinds.

    Malformed input always raises a CodecError subclass: TruncatedFrame for
    short or over-declared input, UnknownMessageKind for a bad kind byte,
    OversizeFrame for bodies past the limit.
    """
    if len(data) < 4:
        raise TruncatedFrame(f"need 4 length bytes, got {len(data)}")
    (body_len,) = _U32.unpack(data[:4])
    if body_len > MAX_FRAME_BYTES:
        raise OversizeFrame(f"declared body {body_len} bytes exceeds {MAX_FRAME_BYTES}")
    if len(data) - 4 < body_len:
        raise TruncatedFrame(f"declared body {body_len} bytes, got {len(data) - 4}")
    if len(data) - 4 > body_len:
        raise CodecError(f"{len(data) - 4 - body_len} trailing bytes after frame")
    cur = _Cursor(data[4:])
    kind_byte, epoch = _HEAD.unpack(cur.take(_HEAD.size))
    try:
        kind = FrameKind(kind_byte)
    except ValueError as exc:
        raise UnknownMessageKind(f"unknown frame kind byte {kind_byte:#04x}") from exc
    sender = cur.text()
    id_count = cur.u16()
    memory_ids = tuple(cur.text() for _ in range(id_count))
    vote_byte = cur.take(1)[0]
    if vote_byte not in _BYTE_TO_VOTE:
        raise CodecError(f"unknown vote code {vote_byte}")
    signature = cur.take(cur.u16())
    if cur.leftover():
        raise CodecError(f"{cur.leftover()} unparsed bytes inside declared frame body")
    return Frame(
        kind=kind,
        epoch=epoch,
        sender=sender,
        memory_ids=memory_ids,
        vote=_BYTE_TO_VOTE[vote_byte],
        signature=signature,
    )


def frame_from_message(msg: PbftMessage) -> Frame:
    return Frame(
        kind=FrameKind(int(msg.kind)),
        epoch=msg.epoch,
        sender=msg.sender,
        memory_ids=(msg.memory_id,),
        vote=msg.vote,
        signature=msg.signature,
    )


def message_from_frame(frame: Frame) -> PbftMessage:
    if frame.kind not in (FrameKind.EVALUATE, FrameKind.PREPARE, FrameKind.COMMIT):
        raise UnknownMessageKind(f"frame kind {frame.kind.name} is not a consensus message")
    if len(frame.memory_ids) != 1:
        raise CodecError(
            f"consensus frames carry exactly one memory id, got {len(frame.memory_ids)}"
        )
    try:
        return PbftMessage(
            kind=MessageKind(int(frame.kind)),
            epoch=frame.epoch,
            memory_id=frame.memory_ids[0],
            sender=frame.sender,
            vote=frame.vote,
            signature=frame.signature,
        )
    except ValueError as exc:
        raise CodecError(str(exc)) from exc


def encode(msg: PbftMessage) -> bytes:
    """Serialize a consensus message to its wire frame."""
    return encode_frame(frame_from_message(msg))


def decode(data: bytes) -> PbftMessage:
    """Parse a consensus message; PROPOSE frames are rejected as non-consensus."""
    return message_from_frame(decode_frame(data))


# --- proposal RPC ---------------------------------------------------------------


class ProposalTimeout(TimeoutError):
    """The coordinator endpoint did not answer within budget."""


class TransportClosed(ConnectionError):
    """The endpoint's transport was shut down."""


class CoordinatorEndpoint:
    """In-process coordinator side of the forgetting-proposal RPC.

    Receives PROPOSE frames, records who proposed what, and acknowledges the
    order-preserving deduplicated id list.
    """

    def __init__(self, node_id: str = "coordinator", reachable: bool = True):
        self.node_id = node_id
        self.reachable = reachable
        self.closed = False
        self.received: list[tuple[str, tuple[str, ...]]] = []

    def close(self) -> None:
        self.closed = True

    def handle_frame(self, data: bytes) -> bytes:
        if self.closed:
            raise TransportClosed(f"endpoint {self.node_id} is closed")
        frame = decode_frame(data)
        if frame.kind is not FrameKind.PROPOSE:
            raise CodecError(f"endpoint expects PROPOSE, got {frame.kind.name}")
        acked = tuple(dict.fromkeys(frame.memory_ids))
        self.received.append((frame.sender, acked))
        return encode_frame(
            Frame(kind=FrameKind.PROPOSE_ACK, epoch=frame.epoch, sender=self.node_id, memory_ids=acked)
        )


def propose_forgetting(
    memory_ids: Sequence[str],
    agent_id: str,
    endpoint: CoordinatorEndpoint | None,
    epoch: int = 0,
) -> list[str]:
    """Send one agent's forget proposals; returns the acknowledged id subset.

    Duplicate ids are acknowledged once. An unreachable coordinator raises
    ProposalTimeout; a closed one raises TransportClosed.
    """
    if not memory_ids:
        raise ValueError("memory id list must be non-empty")
    if endpoint is None or not endpoint.reachable:
        raise ProposalTimeout(f"coordinator unreachable for agent {agent_id}")
    request = encode_frame(
        Frame(kind=FrameKind.PROPOSE, epoch=epoch, sender=agent_id, memory_ids=tuple(memory_ids))
    )
    response = decode_frame(endpoint.handle_frame(request))
    if response.kind is not FrameKind.PROPOSE_ACK:
        raise CodecError(f"expected PROPOSE_ACK, got {response.kind.name}")
    return list(response.memory_ids)


# --- socket mode ------------------------------------------------------------------
#
# The optional socket transport reuses the identical frame format; these helpers
# do the length-prefixed framing over any connected stream socket.


def send_frame(sock, frame: Frame) -> None:
    sock.sendall(encode_frame(frame))


def _recv_exact(sock, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if not buf:
                return None
            raise TruncatedFrame(f"connection closed mid-frame after {len(buf)} of {n} bytes")
        buf.extend(chunk)
    return bytes(buf)


def recv_frame(sock) -> Frame | None:
    """Read one frame off a stream socket; None on clean EOF between frames."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (body_len,) = _U32.unpack(header)
    if body_len > MAX_FRAME_BYTES:
        raise OversizeFrame(f"declared body {body_len} bytes exceeds {MAX_FRAME_BYTES}")
    body = _recv_exact(sock, body_len)
    if body is None:
        raise TruncatedFrame("connection closed after frame header")
    return decode_frame(header + body)
