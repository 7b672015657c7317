"""Privacy-preserving accuracy measurement between a pool and a requester.

The requester encrypts its test features under its own Paillier key. The
pool evaluates its first layer on the ciphertexts with plaintext weights,
adds an encrypted random mask and returns the result; the requester decrypts
z + h, the pool removes h, applies the sigmoid and runs the remaining layers
in the clear. The predicted labels are then compared with the requester's
true labels inside a garbled circuit whose evaluator inputs arrive by OT.
"""

import hashlib
import random
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import structlog
from phe import paillier

from pofl_sim.errors import MaskReuseError, ProtocolError, ShapeError
from pofl_sim.federated.datasets import Dataset
from pofl_sim.federated.model import (
    FloatArray,
    Layer,
    ModelParams,
    forward_layers,
    sigmoid,
)
from pofl_sim.verification.circuit import build_comparison_circuit, label_to_bits
from pofl_sim.verification.garbled import (
    GarbledCircuit,
    decode_output,
    evaluate,
    evaluator_label_pairs,
    garble,
    garbler_input_labels,
)
from pofl_sim.verification.he import (
    FixedPointEncoding,
    HECiphertext,
    HEKeyPair,
    ciphertext_bytes,
    decrypt,
    encrypt,
    encrypt_array,
    encrypt_mantissa,
    he_add,
    he_dot,
)
from pofl_sim.verification.ot import OTBackend
from pofl_sim.verification.transcript import (
    Direction,
    MessageKind,
    TranscriptRecorder,
)

logger = structlog.stdlib.get_logger()

IntArray = npt.NDArray[np.int64]

MASK_BOUND = 2**40
_FLOAT = struct.Struct(">d")


@dataclass(frozen=True)
class MaskVector:
    """Random integers (at scale f) added to one record's first-layer outputs."""

    session_id: str
    mask_id: int
    values: tuple[int, ...]

    def real(self, encoding: FixedPointEncoding) -> FloatArray:
        return np.array([encoding.decode(v) for v in self.values], dtype=np.float64)


@dataclass(frozen=True)
class EncryptedTestSet:
    """The requester's features, one row of ciphertexts per record."""

    rows: tuple[tuple[HECiphertext, ...], ...]
    feature_width: int

    @property
    def record_count(self) -> int:
        return len(self.rows)


def encrypt_test_set(
    keypair: HEKeyPair,
    features: FloatArray,
    encoding: FixedPointEncoding,
    rng: random.Random | None = None,
) -> EncryptedTestSet:
    """Encrypt every feature at scale f under the requester's key."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    rows = tuple(
        encrypt_array(keypair.public_key, row, encoding, rng).ciphertexts
        for row in features
    )
    return EncryptedTestSet(rows=rows, feature_width=int(features.shape[1]))


def first_layer_masked(
    row: Sequence[HECiphertext],
    layer: Layer,
    mask: MaskVector,
    encoding: FixedPointEncoding,
    public_key: paillier.PaillierPublicKey,
    rng: random.Random | None = None,
) -> list[HECiphertext]:
    """<z_k + h_k> for every first-layer node k, all at scale 2f.

    Raises:
        ShapeError: If the row width or the mask length does not match the layer.
    """
    if len(row) != layer.in_width:
        raise ShapeError(f"layer expects {layer.in_width} features, row has {len(row)}")
    if len(mask.values) != layer.out_width:
        raise ShapeError(f"mask covers {len(mask.values)} of {layer.out_width} nodes")
    out: list[HECiphertext] = []
    for k in range(layer.out_width):
        z = he_dot(row, [float(w) for w in layer.weights[k]], encoding)
        bias = encrypt(public_key, float(layer.bias[k]), encoding, scale=2, rng=rng)
        shifted = mask.values[k] << encoding.frac_bits
        h = encrypt_mantissa(public_key, shifted, 2 * encoding.frac_bits, rng)
        out.append(he_add(he_add(z, bias), h))
    return out


def requester_decrypt(
    keypair: HEKeyPair, ciphertexts: Sequence[HECiphertext]
) -> FloatArray:
    """Decrypt masked first-layer outputs to plaintext z + h."""
    return np.array([decrypt(keypair, c) for c in ciphertexts], dtype=np.float64)


def unmask_and_activate(
    masked: FloatArray,
    mask: MaskVector,
    session_id: str,
    encoding: FixedPointEncoding,
) -> FloatArray:
    """sigma((z + h) - h) elementwise.

    Raises:
        ProtocolError: If the mask belongs to another session or has another length.
    """
    if mask.session_id != session_id:
        raise ProtocolError(f"mask of session {mask.session_id} used in {session_id}")
    masked = np.asarray(masked, dtype=np.float64)
    if masked.shape != (len(mask.values),):
        raise ProtocolError("masked values and mask differ in length")
    return sigmoid(masked - mask.real(encoding))


def forward_rest(tail: Sequence[Layer], activations: FloatArray) -> IntArray:
    """Labels from the remaining layers; argmax with ties to the lowest index."""
    outputs = forward_layers(tail, activations)
    return np.argmax(outputs, axis=1).astype(np.int64)


class PredictionSession:
    """Mask bookkeeping for one pool-side prediction session.

    Masks are drawn fresh per record and may be used exactly once, and only
    within the session that drew them.
    """

    def __init__(
        self,
        session_id: str,
        public_key: paillier.PaillierPublicKey,
        encoding: FixedPointEncoding,
        rng: random.Random,
    ) -> None:
        self.session_id = session_id
        self.public_key = public_key
        self.encoding = encoding
        self._rng = rng
        self._issued = 0
        self._used: set[int] = set()

    def fresh_mask(self, width: int) -> MaskVector:
        values = tuple(
            self._rng.randint(-MASK_BOUND, MASK_BOUND) for _ in range(width)
        )
        mask = MaskVector(
            session_id=self.session_id, mask_id=self._issued, values=values
        )
        self._issued += 1
        return mask

    def mask_row(
        self, row: Sequence[HECiphertext], layer: Layer, mask: MaskVector
    ) -> list[HECiphertext]:
        """Masked first layer for one record.

        Raises:
            MaskReuseError: If the mask comes from another session or was used.
        """
        if mask.session_id != self.session_id:
            raise MaskReuseError(
                f"mask of session {mask.session_id} offered to {self.session_id}"
            )
        if mask.mask_id in self._used:
            raise MaskReuseError(f"mask {mask.mask_id} was already used")
        self._used.add(mask.mask_id)
        return first_layer_masked(
            row, layer, mask, self.encoding, self.public_key, self._rng
        )

    def unmask(self, masked: FloatArray, mask: MaskVector) -> FloatArray:
        return unmask_and_activate(masked, mask, self.session_id, self.encoding)


def _float_bytes(values: FloatArray) -> bytes:
    return b"".join(_FLOAT.pack(float(v)) for v in values)


def _public_key_bytes(public_key: paillier.PaillierPublicKey) -> bytes:
    n: int = public_key.n
    return n.to_bytes((n.bit_length() + 7) // 8, "big")


def _label_block(labels: Sequence[int]) -> bytes:
    return b"".join(label.to_bytes(16, "big") for label in labels)


class Requester:
    """Task publisher holding the private test set and the HE key pair."""

    def __init__(
        self,
        requester_id: str,
        test_set: Dataset,
        keypair: HEKeyPair,
        *,
        label_bits: int = 8,
        encoding: FixedPointEncoding | None = None,
        seed: int = 0,
    ) -> None:
        if test_set.labels is None:
            raise ShapeError("the requester's test set must carry labels")
        self.requester_id = requester_id
        self.keypair = keypair
        self.label_bits = label_bits
        self.encoding = encoding or FixedPointEncoding()
        self._test_set = test_set
        self._labels = [int(v) for v in test_set.labels]
        for label in self._labels:
            label_to_bits(label, label_bits)
        self._rng = random.Random(f"requester:{requester_id}:{seed}")
        self._encrypted: EncryptedTestSet | None = None

    @property
    def record_count(self) -> int:
        return len(self._labels)

    @property
    def feature_width(self) -> int:
        return self._test_set.feature_width

    @property
    def public_key(self) -> paillier.PaillierPublicKey:
        return self.keypair.public_key

    def commitment(self) -> bytes:
        """SHA-256 over the test features and labels, published with the task."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self._test_set.features).tobytes())
        h.update(np.asarray(self._labels, dtype=">i8").tobytes())
        return h.digest()

    def encrypted_test_set(self) -> EncryptedTestSet:
        if self._encrypted is None:
            self._encrypted = encrypt_test_set(
                self.keypair, self._test_set.features, self.encoding, self._rng
            )
        return self._encrypted

    def decrypt_masked(self, ciphertexts: Sequence[HECiphertext]) -> FloatArray:
        return requester_decrypt(self.keypair, ciphertexts)

    def choice_bits(self) -> list[int]:
        """Bits of the true labels, in the circuit's evaluator wire order."""
        return [
            bit
            for label in self._labels
            for bit in label_to_bits(label, self.label_bits)
        ]

    def evaluate_garbled(
        self,
        gc: GarbledCircuit,
        label_pairs: Sequence[tuple[int, int]],
        ot: OTBackend,
        transcript: TranscriptRecorder | None = None,
    ) -> tuple[int, ...]:
        """Fetch evaluator labels by OT and evaluate; returns encoded outputs.

        Raises:
            ProtocolError: If the circuit was built for another test set size.
        """
        if gc.record_count != self.record_count or gc.label_bits != self.label_bits:
            raise ProtocolError("garbled circuit does not match the test set")
        labels = ot.transfer(label_pairs, self.choice_bits(), transcript)
        outputs = evaluate(gc, gc.garbler_inputs, labels)
        if transcript is not None:
            transcript.record(
                Direction.REQUESTER_TO_POOL,
                MessageKind.ENCODED_OUTPUT,
                _label_block(outputs),
            )
        return outputs

    def plaintext_accuracy(self, predicted: Sequence[int]) -> int:
        """Reference match count, for tests and audits."""
        return sum(1 for p, a in zip(predicted, self._labels, strict=True) if p == a)


@dataclass(frozen=True)
class AccuracyResult:
    """Outcome of one pool/requester accuracy session."""

    matches: int
    record_count: int
    garbled: GarbledCircuit
    garbling_seed: int
    encrypted_weights: bytes
    transcript: TranscriptRecorder = field(compare=False)
    he_operations: int = 0


def encrypted_first_layer(
    model: ModelParams,
    public_key: paillier.PaillierPublicKey,
    encoding: FixedPointEncoding,
    rng: random.Random | None = None,
) -> bytes:
    """First-layer weights and biases encrypted under the requester's key."""
    first = model.first
    weights = encrypt_array(public_key, first.weights, encoding, rng)
    bias = encrypt_array(public_key, first.bias, encoding, rng)
    sealed = (*weights.ciphertexts, *bias.ciphertexts)
    return b"".join(ciphertext_bytes(c) for c in sealed)


def predict_privately(
    model: ModelParams,
    requester: Requester,
    session: PredictionSession,
    transcript: TranscriptRecorder,
) -> IntArray:
    """Run the masked first-layer exchange and finish inference in the clear."""
    if len(model.layers) < 2:
        raise ShapeError("private prediction needs a hidden layer before the output")
    transcript.record(
        Direction.REQUESTER_TO_POOL,
        MessageKind.PUBLIC_KEY,
        _public_key_bytes(requester.public_key),
    )
    encrypted = requester.encrypted_test_set()
    activations: list[FloatArray] = []
    for row in encrypted.rows:
        transcript.record(
            Direction.REQUESTER_TO_POOL,
            MessageKind.CIPHERTEXT,
            b"".join(ciphertext_bytes(c) for c in row),
        )
        mask = session.fresh_mask(model.first.out_width)
        masked = session.mask_row(row, model.first, mask)
        transcript.record(
            Direction.POOL_TO_REQUESTER,
            MessageKind.CIPHERTEXT,
            b"".join(ciphertext_bytes(c) for c in masked),
        )
        plain = requester.decrypt_masked(masked)
        transcript.record(
            Direction.REQUESTER_TO_POOL,
            MessageKind.MASKED_ACTIVATION,
            _float_bytes(plain),
        )
        activations.append(session.unmask(plain, mask))
    return forward_rest(model.tail, np.vstack(activations))


def run_accuracy_protocol(
    model: ModelParams,
    requester: Requester,
    *,
    session_id: str,
    garbling_seed: int,
    ot: OTBackend,
    rng: random.Random,
) -> AccuracyResult:
    """Measure how many test records the model labels correctly, privately.

    The pool learns N and never sees the test data; the requester learns
    neither the model nor the predictions.
    """
    transcript = TranscriptRecorder(session_id)
    session = PredictionSession(
        session_id, requester.public_key, requester.encoding, rng
    )
    predicted = predict_privately(model, requester, session, transcript)

    circuit = build_comparison_circuit(requester.record_count, requester.label_bits)
    gc = garble(circuit, garbling_seed)
    inputs = garbler_input_labels(circuit, garbling_seed, [int(p) for p in predicted])
    transcript.record(
        Direction.POOL_TO_REQUESTER, MessageKind.GARBLED_CIRCUIT, gc.to_bytes()
    )
    transcript.record(
        Direction.POOL_TO_REQUESTER, MessageKind.INPUT_LABELS, _label_block(inputs)
    )
    gc = gc.attach_inputs(inputs)
    outputs = requester.evaluate_garbled(
        gc, evaluator_label_pairs(circuit, garbling_seed), ot, transcript
    )
    matches = decode_output(gc, outputs)

    weights = encrypted_first_layer(
        model, requester.public_key, requester.encoding, rng
    )
    k, d = model.first.out_width, model.first.in_width
    logger.info(
        "accuracy_measured",
        session_id=session_id,
        records=requester.record_count,
        matches=matches,
    )
    return AccuracyResult(
        matches=matches,
        record_count=requester.record_count,
        garbled=gc,
        garbling_seed=garbling_seed,
        encrypted_weights=weights,
        transcript=transcript,
        he_operations=requester.record_count * k * (d + 2),
    )


def verify_accuracy(
    gc_bytes: bytes,
    requester: Requester,
    label_pairs: Sequence[tuple[int, int]],
    ot: OTBackend,
) -> int:
    """Replay the comparison of a published garbled circuit with the requester.

    `label_pairs` come from the pool that garbled the circuit; the requester
    obtains its labels by OT, evaluates and the decoding table yields N.
    """
    gc = GarbledCircuit.from_bytes(gc_bytes)
    outputs = requester.evaluate_garbled(gc, label_pairs, ot)
    return decode_output(gc, outputs)
