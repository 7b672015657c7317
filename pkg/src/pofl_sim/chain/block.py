"""PoFL tasks, blocks and their canonical byte layout.

Integers are big-endian, strings are UTF-8 with a length prefix, and every
variable-length section carries a 4-byte length. A serialized block ends with
the SHA-256 of its header so the tip of a chain is as tamper-evident as the
blocks below it.
"""

import hashlib
import struct
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Self

import structlog
from pydantic import BaseModel, ConfigDict, Field

from pofl_sim.errors import ChainError
from pofl_sim.verification.garbled import GarbledCircuit
from pofl_sim.verification.transcript import TranscriptRecorder

logger = structlog.stdlib.get_logger()

HASH_BYTES = 32
GENESIS_PREV_HASH = bytes(HASH_BYTES)

_LENGTH = struct.Struct(">I")
_HEADER_FIXED = struct.Struct(">32s32sQQ")
_ACCURACY = struct.Struct(">II")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _pack_bytes(data: bytes) -> bytes:
    return _LENGTH.pack(len(data)) + data


class BlockReader:
    """Cursor over a serialized block; any overrun is a ChainError."""

    def __init__(self, data: bytes, offset: int = 0) -> None:
        self.data = data
        self.offset = offset

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise ChainError(f"truncated block data at offset {self.offset}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple[Any, ...]:
        return fmt.unpack(self.take(fmt.size))

    def take_prefixed(self) -> bytes:
        (length,) = _LENGTH.unpack(self.take(_LENGTH.size))
        return self.take(length)

    def take_str(self) -> str:
        try:
            return self.take_prefixed().decode()
        except UnicodeDecodeError as exc:
            raise ChainError("malformed string field") from exc


class Task(BaseModel):
    """A published training task and its accuracy-submission deadline."""

    model_config = ConfigDict(frozen=True)

    task_id: str = Field(min_length=1)
    reward: float = Field(ge=0.0)
    arrival: int = Field(ge=0, description="Simulated tick of publication")
    test_commitment: str = Field(
        default="", description="Hex SHA-256 of the requester's test set"
    )
    deadline: int = Field(default=1, ge=1, description="Ticks until submission")
    record_count: int = Field(default=1, ge=1, description="Test-set size I")


@dataclass(frozen=True)
class Vm:
    """Verification payload: encrypted first layer, garbled circuit, commitment."""

    encrypted_weights: bytes
    garbled_circuit: bytes
    transcript_commitment: bytes

    def __post_init__(self) -> None:
        if len(self.transcript_commitment) != HASH_BYTES:
            raise ChainError("transcript commitment must be a 32-byte hash")

    @property
    def weights_commitment(self) -> bytes:
        return sha256(self.encrypted_weights)

    def to_bytes(self) -> bytes:
        return (
            _pack_bytes(self.encrypted_weights)
            + _pack_bytes(self.garbled_circuit)
            + self.transcript_commitment
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = BlockReader(data)
        weights = reader.take_prefixed()
        gc = reader.take_prefixed()
        commitment = reader.take(HASH_BYTES)
        if reader.offset != len(data):
            raise ChainError("trailing bytes after verification payload")
        return cls(
            encrypted_weights=weights,
            garbled_circuit=gc,
            transcript_commitment=commitment,
        )

    def digest(self) -> bytes:
        return sha256(self.to_bytes())

    def garbled(self) -> GarbledCircuit:
        """Parse the garbled circuit; raises CorruptCircuitError when malformed."""
        return GarbledCircuit.from_bytes(self.garbled_circuit)

    def check(
        self, record_count: int, transcript: TranscriptRecorder | None = None
    ) -> None:
        """Structural validation of the payload.

        Raises:
            CorruptCircuitError: If the garbled circuit does not parse.
            ChainError: If it was built for another test-set size or the
                transcript does not match the commitment.
        """
        gc = self.garbled()
        if gc.record_count != record_count:
            raise ChainError(
                f"garbled circuit covers {gc.record_count} records, "
                f"header claims {record_count}"
            )
        if transcript is not None and transcript.commitment() != (
            self.transcript_commitment
        ):
            raise ChainError("transcript does not match its commitment")


@dataclass(frozen=True)
class BlockHeader:
    """Header fields in canonical order; accuracy is stored as (N, I).

    Raises:
        ChainError: If a hash has the wrong width, the height is negative or
            N lies outside [0, I].
    """

    prev_hash: bytes
    merkle_root: bytes
    height: int
    timestamp: int
    task_id: str
    pool_id: str
    vm_hash: bytes
    matches: int
    record_count: int

    def __post_init__(self) -> None:
        for name in ("prev_hash", "merkle_root", "vm_hash"):
            if len(getattr(self, name)) != HASH_BYTES:
                raise ChainError(f"{name} must be {HASH_BYTES} bytes")
        if self.height < 0 or self.timestamp < 0:
            raise ChainError("height and timestamp must be non-negative")
        if self.record_count < 1 or not 0 <= self.matches <= self.record_count:
            raise ChainError(
                f"accuracy {self.matches}/{self.record_count} is out of range"
            )

    @property
    def accuracy(self) -> Fraction:
        return Fraction(self.matches, self.record_count)

    def to_bytes(self) -> bytes:
        return (
            _HEADER_FIXED.pack(
                self.prev_hash, self.merkle_root, self.height, self.timestamp
            )
            + _pack_bytes(self.task_id.encode())
            + _pack_bytes(self.pool_id.encode())
            + self.vm_hash
            + _ACCURACY.pack(self.matches, self.record_count)
        )

    def digest(self) -> bytes:
        return sha256(self.to_bytes())

    @classmethod
    def read(cls, reader: BlockReader) -> Self:
        prev_hash, merkle, height, timestamp = reader.unpack(_HEADER_FIXED)
        task_id = reader.take_str()
        pool_id = reader.take_str()
        vm_hash = reader.take(HASH_BYTES)
        matches, record_count = reader.unpack(_ACCURACY)
        return cls(
            prev_hash=prev_hash,
            merkle_root=merkle,
            height=height,
            timestamp=timestamp,
            task_id=task_id,
            pool_id=pool_id,
            vm_hash=vm_hash,
            matches=matches,
            record_count=record_count,
        )


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[bytes, ...]
    vm: Vm

    def digest(self) -> bytes:
        return self.header.digest()

    def to_bytes(self) -> bytes:
        header = self.header.to_bytes()
        body = _LENGTH.pack(len(self.transactions)) + b"".join(
            _pack_bytes(tx) for tx in self.transactions
        )
        return (
            _pack_bytes(header)
            + body
            + _pack_bytes(self.vm.to_bytes())
            + sha256(header)
        )

    @classmethod
    def read(cls, reader: BlockReader) -> Self:
        """Parse one block and check its sealing hash.

        Raises:
            ChainError: If the bytes are truncated or the sealing hash differs.
        """
        header_bytes = reader.take_prefixed()
        header_reader = BlockReader(header_bytes)
        header = BlockHeader.read(header_reader)
        if header_reader.offset != len(header_bytes):
            raise ChainError("trailing bytes in block header")
        (count,) = _LENGTH.unpack(reader.take(_LENGTH.size))
        transactions = tuple(reader.take_prefixed() for _ in range(count))
        vm = Vm.from_bytes(reader.take_prefixed())
        if reader.take(HASH_BYTES) != sha256(header_bytes):
            raise ChainError(f"block {header.height} fails its sealing hash")
        return cls(header=header, transactions=transactions, vm=vm)

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = BlockReader(data)
        block = cls.read(reader)
        if reader.offset != len(data):
            raise ChainError("trailing bytes after block")
        return block

    def to_dict(self) -> dict[str, object]:
        """JSON-ready view for inspection; payload bytes are summarized."""
        h = self.header
        return {
            "hash": self.digest().hex(),
            "height": h.height,
            "prev_hash": h.prev_hash.hex(),
            "merkle_root": h.merkle_root.hex(),
            "timestamp": h.timestamp,
            "task_id": h.task_id,
            "pool_id": h.pool_id,
            "matches": h.matches,
            "record_count": h.record_count,
            "accuracy": float(h.accuracy),
            "vm_hash": h.vm_hash.hex(),
            "transactions": len(self.transactions),
            "vm_bytes": {
                "encrypted_weights": len(self.vm.encrypted_weights),
                "garbled_circuit": len(self.vm.garbled_circuit),
            },
        }


def merkle_root(transactions: Sequence[bytes]) -> bytes:
    """Binary Merkle root over SHA-256 leaves; odd levels repeat their last node.

    An empty body has the all-zero root.
    """
    if not transactions:
        return bytes(HASH_BYTES)
    level = [sha256(tx) for tx in transactions]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def build_block(
    parent: BlockHeader | None,
    transactions: Sequence[bytes],
    task_id: str,
    vm: Vm,
    *,
    pool_id: str,
    matches: int,
    record_count: int,
    timestamp: int,
) -> Block:
    """Assemble a block on top of `parent` (None for the genesis height)."""
    header = BlockHeader(
        prev_hash=GENESIS_PREV_HASH if parent is None else parent.digest(),
        merkle_root=merkle_root(transactions),
        height=0 if parent is None else parent.height + 1,
        timestamp=timestamp,
        task_id=task_id,
        pool_id=pool_id,
        vm_hash=vm.digest(),
        matches=matches,
        record_count=record_count,
    )
    block = Block(header=header, transactions=tuple(transactions), vm=vm)
    logger.debug(
        "block_built",
        height=header.height,
        pool_id=pool_id,
        task_id=task_id,
        matches=matches,
        record_count=record_count,
    )
    return block
