"""The chain itself: append, dump/load and integrity validation."""

from collections.abc import Iterator, Sequence
from pathlib import Path
from typing import Self

import structlog

from pofl_sim.chain.block import (
    GENESIS_PREV_HASH,
    Block,
    BlockHeader,
    BlockReader,
    merkle_root,
)
from pofl_sim.errors import ChainError, CorruptCircuitError
from pofl_sim.serialization import canonical_json

logger = structlog.stdlib.get_logger()


def _link_error(parent: BlockHeader | None, block: Block) -> str | None:
    h = block.header
    expected_height = 0 if parent is None else parent.height + 1
    expected_prev = GENESIS_PREV_HASH if parent is None else parent.digest()
    if h.height != expected_height:
        return f"height {h.height}, expected {expected_height}"
    if h.prev_hash != expected_prev:
        return f"block {h.height} does not link to its parent"
    if h.merkle_root != merkle_root(block.transactions):
        return f"block {h.height} has a Merkle root mismatch"
    if h.vm_hash != block.vm.digest():
        return f"block {h.height} has a verification payload mismatch"
    return None


class ChainState:
    """Single-writer list of validated blocks."""

    def __init__(self, blocks: Sequence[Block] = ()) -> None:
        self._blocks: list[Block] = []
        for block in blocks:
            self.append(block)

    def __len__(self) -> int:
        return len(self._blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self._blocks)

    def __getitem__(self, height: int) -> Block:
        return self._blocks[height]

    @property
    def blocks(self) -> tuple[Block, ...]:
        return tuple(self._blocks)

    @property
    def tip(self) -> BlockHeader | None:
        return self._blocks[-1].header if self._blocks else None

    @property
    def height(self) -> int:
        """Height of the tip, -1 for an empty chain."""
        return len(self._blocks) - 1

    def append(self, block: Block) -> None:
        """Add a block on top of the tip.

        Raises:
            ChainError: If the block does not extend the tip consistently.
        """
        problem = _link_error(self.tip, block)
        if problem is not None:
            raise ChainError(problem)
        self._blocks.append(block)
        logger.info(
            "block_appended",
            height=block.header.height,
            pool_id=block.header.pool_id,
        )

    def dumps(self) -> bytes:
        """Concatenated serialized blocks."""
        return b"".join(block.to_bytes() for block in self._blocks)

    def dump(self, path: Path) -> None:
        path.write_bytes(self.dumps())

    @classmethod
    def loads(cls, data: bytes) -> Self:
        """Parse and re-validate a dump.

        Raises:
            ChainError: If any block is malformed or breaks the chain.
        """
        return cls(parse_blocks(data))

    @classmethod
    def load(cls, path: Path) -> Self:
        return cls.loads(path.read_bytes())

    def to_json(self) -> bytes:
        return canonical_json(
            {
                "height": self.height,
                "blocks": [block.to_dict() for block in self._blocks],
            },
            indent=True,
        )


def parse_blocks(data: bytes) -> list[Block]:
    reader = BlockReader(data)
    blocks: list[Block] = []
    while reader.offset < len(data):
        blocks.append(Block.read(reader))
    return blocks


def validate_chain(
    chain: Sequence[Block] | bytes, *, check_payloads: bool = True
) -> bool:
    """True iff links, heights, Merkle roots and header invariants all hold.

    Accepts parsed blocks or a raw dump. With `check_payloads`, every block's
    garbled circuit must also parse and match the header's test-set size.
    """
    try:
        blocks = parse_blocks(chain) if isinstance(chain, bytes) else list(chain)
    except ChainError as exc:
        logger.info("chain_invalid", reason=str(exc))
        return False
    parent: BlockHeader | None = None
    for block in blocks:
        problem = _link_error(parent, block)
        if problem is None and check_payloads:
            try:
                block.vm.check(block.header.record_count)
            except (ChainError, CorruptCircuitError) as exc:
                problem = str(exc)
        if problem is not None:
            logger.info("chain_invalid", reason=problem)
            return False
        parent = block.header
    return True
