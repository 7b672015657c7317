"""Message log of one pool/requester protocol session.

Only message metadata is kept: direction, kind, byte size and a digest of the
payload. The set of kinds each direction may carry is fixed, so a plaintext
test record or a raw first-layer output can never be recorded.
"""

import hashlib
from collections import Counter
from enum import StrEnum

from pydantic import BaseModel, ConfigDict

from pofl_sim.errors import ProtocolError
from pofl_sim.serialization import canonical_json


class Direction(StrEnum):
    """Sender of a message."""

    POOL_TO_REQUESTER = "pool_to_requester"
    REQUESTER_TO_POOL = "requester_to_pool"


class MessageKind(StrEnum):
    """Kinds of message a session may exchange."""

    PUBLIC_KEY = "public_key"
    CIPHERTEXT = "ciphertext"
    MASKED_ACTIVATION = "masked_activation"
    GARBLED_CIRCUIT = "garbled_circuit"
    INPUT_LABELS = "input_labels"
    OT_SENDER = "ot_sender"
    OT_RECEIVER = "ot_receiver"
    ENCODED_OUTPUT = "encoded_output"


class Phase(StrEnum):
    """Cost-report bucket of a message kind."""

    HE = "he"
    OT = "ot"
    GC = "gc"


ALLOWED_KINDS: dict[Direction, frozenset[MessageKind]] = {
    Direction.REQUESTER_TO_POOL: frozenset(
        {
            MessageKind.PUBLIC_KEY,
            MessageKind.CIPHERTEXT,
            MessageKind.MASKED_ACTIVATION,
            MessageKind.OT_RECEIVER,
            MessageKind.ENCODED_OUTPUT,
        }
    ),
    Direction.POOL_TO_REQUESTER: frozenset(
        {
            MessageKind.CIPHERTEXT,
            MessageKind.GARBLED_CIRCUIT,
            MessageKind.INPUT_LABELS,
            MessageKind.OT_SENDER,
        }
    ),
}

PHASE_OF_KIND: dict[MessageKind, Phase] = {
    MessageKind.PUBLIC_KEY: Phase.HE,
    MessageKind.CIPHERTEXT: Phase.HE,
    MessageKind.MASKED_ACTIVATION: Phase.HE,
    MessageKind.OT_SENDER: Phase.OT,
    MessageKind.OT_RECEIVER: Phase.OT,
    MessageKind.GARBLED_CIRCUIT: Phase.GC,
    MessageKind.INPUT_LABELS: Phase.GC,
    MessageKind.ENCODED_OUTPUT: Phase.GC,
}


class TranscriptEntry(BaseModel):
    """One recorded message."""

    model_config = ConfigDict(frozen=True)

    seq: int
    direction: Direction
    kind: MessageKind
    size: int
    digest: str


class TranscriptRecorder:
    """Append-only recorder for a single session."""

    def __init__(self, session_id: str) -> None:
        self.session_id = session_id
        self._entries: list[TranscriptEntry] = []

    def record(
        self, direction: Direction, kind: MessageKind, payload: bytes
    ) -> TranscriptEntry:
        """Log a message as it crosses the boundary.

        Raises:
            ProtocolError: If the direction may not carry this kind of message.
        """
        if kind not in ALLOWED_KINDS[direction]:
            raise ProtocolError(f"{direction} may not carry {kind} messages")
        entry = TranscriptEntry(
            seq=len(self._entries),
            direction=direction,
            kind=kind,
            size=len(payload),
            digest=hashlib.sha256(payload).hexdigest(),
        )
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def bytes_by_phase(self) -> dict[Phase, int]:
        totals: Counter[Phase] = Counter({phase: 0 for phase in Phase})
        for entry in self._entries:
            totals[PHASE_OF_KIND[entry.kind]] += entry.size
        return {phase: totals[phase] for phase in Phase}

    def total_bytes(self) -> int:
        return sum(entry.size for entry in self._entries)

    def commitment(self) -> bytes:
        """SHA-256 over the ordered message digests."""
        h = hashlib.sha256(self.session_id.encode())
        for entry in self._entries:
            h.update(bytes.fromhex(entry.digest))
        return h.digest()

    def to_json(self) -> bytes:
        return canonical_json(
            {
                "session_id": self.session_id,
                "entries": [entry.model_dump(mode="json") for entry in self._entries],
            }
        )
