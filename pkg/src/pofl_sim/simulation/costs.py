"""Communication and computation cost of the accuracy protocol.

Measured costs come from session transcripts. The analytic model predicts the
same byte counts from the protocol's shape alone, which lets the test-set size
sweep reach thousands of records without running the cryptography.
"""

from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from phe import paillier
from pydantic import BaseModel, ConfigDict

from pofl_sim.verification.circuit import build_comparison_circuit
from pofl_sim.verification.garbled import LABEL_BYTES, ROW_BYTES
from pofl_sim.verification.he import ciphertext_size
from pofl_sim.verification.ot import PrimeGroup, ot_message_bytes
from pofl_sim.verification.protocol import AccuracyResult
from pofl_sim.verification.transcript import MessageKind, Phase, TranscriptRecorder

_FLOAT_BYTES = 8
# Four length prefixes plus the fixed header of a serialized garbled circuit.
_GC_FRAMING = 4 * 4 + 14


class CostRow(BaseModel):
    """Bytes per phase and operation counts for one session."""

    model_config = ConfigDict(frozen=True)

    label: str
    records: int
    he_bytes: int
    ot_bytes: int
    gc_bytes: int
    total_bytes: int
    messages: int
    he_operations: int = 0
    garbled_rows: int = 0
    ot_transfers: int = 0
    update_bytes: int = 0


def _measured(label: str, records: int, transcript: TranscriptRecorder) -> CostRow:
    phases = transcript.bytes_by_phase()
    return CostRow(
        label=label,
        records=records,
        he_bytes=phases.get(Phase.HE, 0),
        ot_bytes=phases.get(Phase.OT, 0),
        gc_bytes=phases.get(Phase.GC, 0),
        total_bytes=transcript.total_bytes(),
        messages=len(transcript.entries),
    )


def report_costs(
    transcripts: Mapping[str, TranscriptRecorder],
) -> list[CostRow]:
    """Per-phase byte counts of each recorded session, in label order."""
    rows: list[CostRow] = []
    for label, transcript in sorted(transcripts.items()):
        kinds = Counter(e.kind for e in transcript.entries)
        # one masked-activation message per test record
        records = kinds[MessageKind.MASKED_ACTIVATION]
        rows.append(_measured(label, records, transcript))
    return rows


def cost_row(
    label: str, result: AccuracyResult, *, update_bytes: int = 0
) -> CostRow:
    """Measured bytes plus the operation counts of one accuracy session."""
    gc = result.garbled
    measured = _measured(label, result.record_count, result.transcript)
    return measured.model_copy(
        update={
            "he_operations": result.he_operations,
            "garbled_rows": 4 * len(gc.tables),
            "ot_transfers": result.record_count * gc.label_bits,
            "update_bytes": update_bytes,
        }
    )


@dataclass(frozen=True)
class CostModel:
    """Byte counts of one accuracy session as a function of the test-set size."""

    public_key_bytes: int
    ciphertext_bytes: int
    group: PrimeGroup
    feature_width: int
    hidden_width: int
    label_bits: int

    @classmethod
    def for_key(
        cls,
        public_key: paillier.PaillierPublicKey,
        group: PrimeGroup,
        *,
        feature_width: int,
        hidden_width: int,
        label_bits: int,
    ) -> "CostModel":
        n: int = public_key.n
        return cls(
            public_key_bytes=(n.bit_length() + 7) // 8,
            ciphertext_bytes=ciphertext_size(public_key),
            group=group,
            feature_width=feature_width,
            hidden_width=hidden_width,
            label_bits=label_bits,
        )

    def he_bytes(self, records: int) -> int:
        if records == 0:
            return 0
        per_record = (
            (self.feature_width + self.hidden_width) * self.ciphertext_bytes
            + self.hidden_width * _FLOAT_BYTES
        )
        return self.public_key_bytes + records * per_record

    def ot_bytes(self, records: int) -> int:
        return ot_message_bytes(self.group, records * self.label_bits, LABEL_BYTES)

    def gc_bytes(self, records: int) -> int:
        if records == 0:
            return 0
        circuit = build_comparison_circuit(records, self.label_bits)
        outputs = len(circuit.outputs)
        garbled = (
            _GC_FRAMING
            + len(circuit.nonfree_gates) * 4 * ROW_BYTES
            + outputs * 2 * LABEL_BYTES
        )
        input_labels = (len(circuit.pool_wires) + 1) * LABEL_BYTES
        return garbled + input_labels + outputs * LABEL_BYTES

    def row(self, records: int) -> CostRow:
        he = self.he_bytes(records)
        ot = self.ot_bytes(records)
        gc = self.gc_bytes(records)
        return CostRow(
            label=f"I={records}",
            records=records,
            he_bytes=he,
            ot_bytes=ot,
            gc_bytes=gc,
            total_bytes=he + ot + gc,
            messages=0,
        )


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    """Least-squares line through (xs, ys) and its coefficient of determination."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual**2)) / total
    return LinearFit(
        slope=float(slope), intercept=float(intercept), r_squared=r_squared
    )
