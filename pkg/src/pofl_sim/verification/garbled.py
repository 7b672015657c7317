"""Free-XOR, point-and-permute garbling of the comparison circuit.

Labels are 128-bit integers. Every wire's one-label is its zero-label XOR a
global offset R whose low bit is 1, so the low bit of a label is its permute
bit. Non-free gates get four 256-bit rows, each the SHA-256 of the two input
labels and the gate id XOR (output label || 128 zero bits); the zero tail
authenticates a correct decryption.
"""

import hashlib
import hmac
import struct
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Self

import structlog

from pofl_sim.errors import CorruptCircuitError
from pofl_sim.verification.circuit import (
    BoolCircuit,
    GateKind,
    build_comparison_circuit,
    label_to_bits,
)

logger = structlog.stdlib.get_logger()

LABEL_BITS = 128
LABEL_BYTES = LABEL_BITS // 8
ROW_BYTES = 2 * LABEL_BYTES
_TAIL_MASK = (1 << LABEL_BITS) - 1

_HEADER = struct.Struct(">IIHI")
_SECTION = struct.Struct(">I")

_GATE_TRUTH: dict[GateKind, tuple[int, int, int, int]] = {
    GateKind.OR: (0, 1, 1, 1),
    GateKind.AND: (0, 0, 0, 1),
}


def _pad(a: int, b: int, gate_id: int) -> int:
    digest = hashlib.sha256(
        a.to_bytes(LABEL_BYTES, "big")
        + b.to_bytes(LABEL_BYTES, "big")
        + gate_id.to_bytes(4, "big")
    ).digest()
    return int.from_bytes(digest, "big")


def _output_digest(label: int, wire: int) -> bytes:
    return hashlib.sha256(
        b"out" + label.to_bytes(LABEL_BYTES, "big") + wire.to_bytes(4, "big")
    ).digest()[:LABEL_BYTES]


@dataclass(frozen=True)
class WireLabels:
    """The garbler's secret: the offset R and every wire's zero-label."""

    offset: int
    zero: tuple[int, ...]

    def label(self, wire: int, bit: int) -> int:
        return self.zero[wire] ^ (self.offset if bit else 0)

    def pair(self, wire: int) -> tuple[int, int]:
        return self.zero[wire], self.zero[wire] ^ self.offset


def _prf_label(key: bytes, tag: bytes, index: int) -> int:
    mac = hmac.digest(key, tag + index.to_bytes(8, "big"), "sha256")
    return int.from_bytes(mac[:LABEL_BYTES], "big")


def wire_labels(circuit: BoolCircuit, seed: int) -> WireLabels:
    """Derive all wire labels from a seed; free gates get derived labels.

    Fresh labels are HMAC-SHA256 outputs keyed by the seed, one per wire id,
    so a label depends only on the seed and its wire.
    """
    key = b"pofl-garble:" + str(seed).encode()
    offset = _prf_label(key, b"offset", 0) | 1
    zero = [0] * circuit.wire_count
    for wire in (circuit.one_wire, *circuit.pool_wires, *circuit.requester_wires):
        zero[wire] = _prf_label(key, b"wire", wire)
    for g in circuit.gates:
        match g.kind:
            case GateKind.XOR:
                zero[g.output] = zero[g.inputs[0]] ^ zero[g.inputs[1]]
            case GateKind.NOT:
                # XOR with the constant-one wire
                zero[g.output] = zero[g.inputs[0]] ^ zero[circuit.one_wire]
            case _:
                zero[g.output] = _prf_label(key, b"wire", g.output)
    return WireLabels(offset=offset, zero=tuple(zero))


@dataclass(frozen=True)
class GarbledCircuit:
    """Public garbled material: tables, garbler input labels and decoding table."""

    record_count: int
    label_bits: int
    tables: tuple[tuple[int, int, int, int], ...]
    decoding: tuple[tuple[bytes, bytes], ...]
    garbler_inputs: tuple[int, ...] = ()

    @property
    def circuit(self) -> BoolCircuit:
        return build_comparison_circuit(self.record_count, self.label_bits)

    def attach_inputs(self, labels: Sequence[int]) -> "GarbledCircuit":
        """Copy carrying the garbler's active input labels."""
        return replace(self, garbler_inputs=tuple(labels))

    def to_bytes(self) -> bytes:
        """Length-prefixed big-endian layout; stable for a fixed seed."""
        header = _HEADER.pack(
            self.record_count, self.label_bits, LABEL_BITS, len(self.tables)
        )
        tables = b"".join(
            row.to_bytes(ROW_BYTES, "big") for rows in self.tables for row in rows
        )
        inputs = b"".join(
            lab.to_bytes(LABEL_BYTES, "big") for lab in self.garbler_inputs
        )
        decoding = b"".join(h0 + h1 for h0, h1 in self.decoding)
        return b"".join(
            _SECTION.pack(len(section)) + section
            for section in (header, tables, inputs, decoding)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        """Parse and structurally validate a serialized garbled circuit.

        Raises:
            CorruptCircuitError: If a section is truncated or inconsistent with
                the circuit the header describes.
        """
        sections: list[bytes] = []
        offset = 0
        try:
            for _ in range(4):
                (length,) = _SECTION.unpack_from(data, offset)
                offset += _SECTION.size
                sections.append(data[offset : offset + length])
                if len(sections[-1]) != length:
                    raise CorruptCircuitError("truncated section")
                offset += length
            record_count, label_bits, label_size, table_count = _HEADER.unpack(
                sections[0]
            )
        except struct.error as exc:
            raise CorruptCircuitError(f"malformed garbled circuit: {exc}") from exc
        if offset != len(data):
            raise CorruptCircuitError("trailing bytes after garbled circuit")
        if label_size != LABEL_BITS:
            raise CorruptCircuitError(f"unsupported label width {label_size}")
        try:
            circuit = build_comparison_circuit(record_count, label_bits)
        except ValueError as exc:
            raise CorruptCircuitError(str(exc)) from exc
        if table_count != len(circuit.nonfree_gates):
            raise CorruptCircuitError("table count does not match the circuit")

        tables_raw, inputs_raw, decoding_raw = sections[1:]
        if len(tables_raw) != table_count * 4 * ROW_BYTES:
            raise CorruptCircuitError("garbled table section has the wrong size")
        if len(decoding_raw) != len(circuit.outputs) * 2 * LABEL_BYTES:
            raise CorruptCircuitError("decoding section has the wrong size")
        if len(inputs_raw) % LABEL_BYTES:
            raise CorruptCircuitError("input label section has the wrong size")

        rows = [
            int.from_bytes(tables_raw[i : i + ROW_BYTES], "big")
            for i in range(0, len(tables_raw), ROW_BYTES)
        ]
        tables = tuple(
            (rows[i], rows[i + 1], rows[i + 2], rows[i + 3])
            for i in range(0, len(rows), 4)
        )
        inputs = tuple(
            int.from_bytes(inputs_raw[i : i + LABEL_BYTES], "big")
            for i in range(0, len(inputs_raw), LABEL_BYTES)
        )
        decoding = tuple(
            (
                decoding_raw[i : i + LABEL_BYTES],
                decoding_raw[i + LABEL_BYTES : i + 2 * LABEL_BYTES],
            )
            for i in range(0, len(decoding_raw), 2 * LABEL_BYTES)
        )
        return cls(
            record_count=record_count,
            label_bits=label_bits,
            tables=tables,
            decoding=decoding,
            garbler_inputs=inputs,
        )


def garble(circuit: BoolCircuit, seed: int) -> GarbledCircuit:
    """Garble a comparison circuit; identical seeds give identical bytes."""
    labels = wire_labels(circuit, seed)
    tables: list[tuple[int, int, int, int]] = []
    for g in circuit.gates:
        if g.free:
            continue
        truth = _GATE_TRUTH[g.kind]
        a, b = g.inputs
        rows = [0, 0, 0, 0]
        for va in (0, 1):
            for vb in (0, 1):
                la, lb = labels.label(a, va), labels.label(b, vb)
                out = labels.label(g.output, truth[va << 1 | vb])
                rows[(la & 1) << 1 | (lb & 1)] = _pad(la, lb, g.gate_id) ^ (
                    out << LABEL_BITS
                )
        tables.append((rows[0], rows[1], rows[2], rows[3]))
    decoding: list[tuple[bytes, bytes]] = []
    for w in circuit.outputs:
        zero, one = labels.pair(w)
        decoding.append((_output_digest(zero, w), _output_digest(one, w)))
    logger.debug("circuit_garbled", records=circuit.record_count, tables=len(tables))
    return GarbledCircuit(
        record_count=circuit.record_count,
        label_bits=circuit.label_bits,
        tables=tuple(tables),
        decoding=tuple(decoding),
    )


def garbler_input_labels(
    circuit: BoolCircuit, seed: int, predicted: Sequence[int]
) -> tuple[int, ...]:
    """Active labels for the predicted labels, then the constant-one wire."""
    labels = wire_labels(circuit, seed)
    active: list[int] = []
    for wires, label in zip(circuit.pool_inputs, predicted, strict=True):
        bits = label_to_bits(label, circuit.label_bits)
        active.extend(labels.label(w, bit) for w, bit in zip(wires, bits, strict=True))
    active.append(labels.label(circuit.one_wire, 1))
    return tuple(active)


def evaluator_label_pairs(circuit: BoolCircuit, seed: int) -> list[tuple[int, int]]:
    """(label0, label1) for every evaluator input wire, in bit order."""
    labels = wire_labels(circuit, seed)
    return [labels.pair(w) for w in circuit.requester_wires]


def evaluate(
    gc: GarbledCircuit,
    garbler_labels: Sequence[int],
    evaluator_labels: Sequence[int],
) -> tuple[int, ...]:
    """Evaluate gate by gate and return the output-wire labels.

    Raises:
        CorruptCircuitError: On a wrong label count or a row that fails to
            authenticate.
    """
    circuit = gc.circuit
    pool_wires, req_wires = circuit.pool_wires, circuit.requester_wires
    if len(garbler_labels) != len(pool_wires) + 1:
        raise CorruptCircuitError("wrong number of garbler input labels")
    if len(evaluator_labels) != len(req_wires):
        raise CorruptCircuitError("wrong number of evaluator input labels")

    active = [0] * circuit.wire_count
    for wire, label in zip(pool_wires, garbler_labels[:-1], strict=True):
        active[wire] = label
    active[circuit.one_wire] = garbler_labels[-1]
    for wire, label in zip(req_wires, evaluator_labels, strict=True):
        active[wire] = label

    tables = iter(gc.tables)
    for g in circuit.gates:
        match g.kind:
            case GateKind.XOR:
                active[g.output] = active[g.inputs[0]] ^ active[g.inputs[1]]
            case GateKind.NOT:
                active[g.output] = active[g.inputs[0]] ^ active[circuit.one_wire]
            case _:
                la, lb = active[g.inputs[0]], active[g.inputs[1]]
                rows = next(tables)
                plain = rows[(la & 1) << 1 | (lb & 1)] ^ _pad(la, lb, g.gate_id)
                if plain & _TAIL_MASK:
                    raise CorruptCircuitError(
                        f"gate {g.gate_id}: no row authenticates"
                    )
                active[g.output] = plain >> LABEL_BITS
    return tuple(active[w] for w in circuit.outputs)


def decode_output(gc: GarbledCircuit, encoded: Sequence[int]) -> int:
    """Map output labels to the bits of N through the decoding table.

    Raises:
        CorruptCircuitError: If a label matches neither decoding entry.
    """
    circuit = gc.circuit
    if len(encoded) != len(circuit.outputs):
        raise CorruptCircuitError("wrong number of output labels")
    n = 0
    for j, (wire, label, (h0, h1)) in enumerate(
        zip(circuit.outputs, encoded, gc.decoding, strict=True)
    ):
        digest = _output_digest(label, wire)
        if digest == h1:
            n |= 1 << j
        elif digest != h0:
            raise CorruptCircuitError(f"output bit {j} has an unknown label")
    return n
