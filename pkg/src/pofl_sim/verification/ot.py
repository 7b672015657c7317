"""1-out-of-2 oblivious transfer of wire labels.

The discrete-log backend follows the classic construction: the sender
publishes c = g^s, the receiver with choice b sends h0 where h_b = g^x and
h_(1-b) = c / h_b, and the sender masks message i with H(h_i^k). Only the
receiver knows the discrete log of exactly one of h0, h1.
"""

import hashlib
import random
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import structlog

from pofl_sim.config import OTGroupName
from pofl_sim.errors import ProtocolError
from pofl_sim.verification.transcript import (
    Direction,
    MessageKind,
    TranscriptRecorder,
)

logger = structlog.stdlib.get_logger()

_MODP_1024 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381FFFFFFFFFFFFFFFF",
    16,
)
_MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)

EXPONENT_BITS = 256


@dataclass(frozen=True)
class PrimeGroup:
    """Multiplicative group modulo a safe prime, generator 2."""

    name: str
    prime: int
    generator: int = 2

    @property
    def element_bytes(self) -> int:
        return (self.prime.bit_length() + 7) // 8

    def gen_pow(self, exponent: int) -> int:
        return pow(self.generator, exponent, self.prime)

    def pow(self, base: int, exponent: int) -> int:
        return pow(base, exponent, self.prime)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.prime

    def inv(self, a: int) -> int:
        return pow(a, -1, self.prime)

    def rand_exponent(self, rng: random.Random) -> int:
        return rng.getrandbits(EXPONENT_BITS) | 1

    def check(self, element: int) -> int:
        """Return `element` if it is a usable group element.

        Raises:
            ProtocolError: If the element is 0, 1, p - 1 or outside [0, p).
        """
        if not 1 < element < self.prime - 1:
            raise ProtocolError(f"malformed group element in {self.name}")
        return element

    def encode(self, element: int) -> bytes:
        return element.to_bytes(self.element_bytes, "big")


GROUPS: dict[str, PrimeGroup] = {
    "modp1024": PrimeGroup(name="modp1024", prime=_MODP_1024),
    "modp2048": PrimeGroup(name="modp2048", prime=_MODP_2048),
}


def get_group(name: OTGroupName) -> PrimeGroup:
    return GROUPS[name]


def _ot_hash(group: PrimeGroup, element: int, length: int) -> bytes:
    return hashlib.shake_256(group.encode(element)).digest(length)


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b, strict=True))


@dataclass(frozen=True)
class SenderReply:
    """The sender's second message: g^k and both masked messages."""

    c1: int
    e0: bytes
    e1: bytes


class OTSender:
    """Sender side of a batch of transfers sharing one published c."""

    def __init__(self, group: PrimeGroup, rng: random.Random) -> None:
        self.group = group
        self._rng = rng
        self.c_exponent = group.rand_exponent(rng)
        self.c = group.gen_pow(self.c_exponent)

    def reply(self, h0: int, m0: bytes, m1: bytes) -> SenderReply:
        """Mask both messages for a receiver's h0.

        Raises:
            ProtocolError: If h0 is not a valid group element.
        """
        g = self.group
        h0 = g.check(h0)
        h1 = g.mul(self.c, g.inv(h0))
        k = g.rand_exponent(self._rng)
        return SenderReply(
            c1=g.gen_pow(k),
            e0=_xor(m0, _ot_hash(g, g.pow(h0, k), len(m0))),
            e1=_xor(m1, _ot_hash(g, g.pow(h1, k), len(m1))),
        )


class OTReceiver:
    """Receiver side of one transfer.

    The secret exponent may be injected, which lets a harness pair a choice-0
    run with a choice-1 run that produces the same h0.
    """

    def __init__(
        self,
        group: PrimeGroup,
        choice: int,
        rng: random.Random,
        exponent: int | None = None,
    ) -> None:
        if choice not in (0, 1):
            raise ProtocolError(f"choice bit must be 0 or 1, got {choice}")
        self.group = group
        self.choice = choice
        self._x = exponent if exponent is not None else group.rand_exponent(rng)

    def request(self, c: int) -> int:
        """h0 for the sender's published c."""
        g = self.group
        c = g.check(c)
        h_b = g.gen_pow(self._x)
        if self.choice == 0:
            return h_b
        return g.mul(c, g.inv(h_b))

    def receive(self, reply: SenderReply) -> bytes:
        g = self.group
        key = _ot_hash(g, g.pow(g.check(reply.c1), self._x), len(reply.e0))
        return _xor(reply.e1 if self.choice else reply.e0, key)


class OTBackend(Protocol):
    """Delivers one label per choice bit to the receiver."""

    def transfer(
        self,
        pairs: Sequence[tuple[int, int]],
        choices: Sequence[int],
        transcript: TranscriptRecorder | None = None,
    ) -> list[int]: ...


def _label_bytes(label: int, width: int) -> bytes:
    return label.to_bytes(width, "big")


class DiscreteLogOT:
    """Discrete-log OT run between both parties in-process."""

    def __init__(self, group: PrimeGroup, seed: int, label_bytes: int = 16) -> None:
        self.group = group
        self.seed = seed
        self.label_bytes = label_bytes
        self.exponentiations = 0

    def transfer(
        self,
        pairs: Sequence[tuple[int, int]],
        choices: Sequence[int],
        transcript: TranscriptRecorder | None = None,
    ) -> list[int]:
        """Run one transfer per (pair, choice).

        Raises:
            ProtocolError: On mismatched lengths or malformed group elements.
        """
        if len(pairs) != len(choices):
            raise ProtocolError("one choice bit is needed per label pair")
        sender_rng = random.Random(f"ot-sender:{self.seed}")
        receiver_rng = random.Random(f"ot-receiver:{self.seed}")
        sender = OTSender(self.group, sender_rng)
        if transcript is not None:
            transcript.record(
                Direction.POOL_TO_REQUESTER,
                MessageKind.OT_SENDER,
                self.group.encode(sender.c),
            )
        received: list[int] = []
        for (m0, m1), choice in zip(pairs, choices, strict=True):
            receiver = OTReceiver(self.group, choice, receiver_rng)
            h0 = receiver.request(sender.c)
            reply = sender.reply(
                h0,
                _label_bytes(m0, self.label_bytes),
                _label_bytes(m1, self.label_bytes),
            )
            if transcript is not None:
                transcript.record(
                    Direction.REQUESTER_TO_POOL,
                    MessageKind.OT_RECEIVER,
                    self.group.encode(h0),
                )
                transcript.record(
                    Direction.POOL_TO_REQUESTER,
                    MessageKind.OT_SENDER,
                    self.group.encode(reply.c1) + reply.e0 + reply.e1,
                )
            received.append(int.from_bytes(receiver.receive(reply), "big"))
        # c once; per transfer g^x, c1^x, g^k, h0^k and h1^k
        self.exponentiations += 1 + 5 * len(pairs)
        logger.debug(
            "ot_batch_complete", transfers=len(pairs), group=self.group.name
        )
        return received


class TrustedDealerOT:
    """Hands the chosen labels over directly; for tests and cost-free runs."""

    def transfer(
        self,
        pairs: Sequence[tuple[int, int]],
        choices: Sequence[int],
        transcript: TranscriptRecorder | None = None,
    ) -> list[int]:
        if len(pairs) != len(choices):
            raise ProtocolError("one choice bit is needed per label pair")
        for choice in choices:
            if choice not in (0, 1):
                raise ProtocolError(f"choice bit must be 0 or 1, got {choice}")
        return [pair[choice] for pair, choice in zip(pairs, choices, strict=True)]


def ot_message_bytes(
    group: PrimeGroup, transfers: int, label_bytes: int = 16
) -> int:
    """Bytes a discrete-log batch puts on the wire."""
    if transfers == 0:
        return 0
    per_transfer = group.element_bytes * 2 + 2 * label_bytes
    return group.element_bytes + transfers * per_transfer
