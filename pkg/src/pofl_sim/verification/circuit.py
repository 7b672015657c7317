"""Boolean circuit that counts matching labels between two label vectors.

Per record the circuit XORs the l label bits, OR-reduces the differences and
negates the result, giving a match bit. A tree of ripple-carry adders sums the
I match bits into N. Wires are integers; bit vectors are little-endian.
"""

import functools
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum

from pydantic import BaseModel, ConfigDict

from pofl_sim.errors import ShapeError


class GateKind(StrEnum):
    """Two-input gate kinds plus NOT."""

    XOR = "xor"
    NOT = "not"
    OR = "or"
    AND = "and"


FREE_GATES = frozenset({GateKind.XOR, GateKind.NOT})


class Normalization(StrEnum):
    """How non-free gates are counted."""

    RAW = "raw"
    TABLE = "table"


@dataclass(frozen=True, slots=True)
class Gate:
    """A gate writing one output wire; NOT has a single input."""

    gate_id: int
    kind: GateKind
    inputs: tuple[int, ...]
    output: int

    @property
    def free(self) -> bool:
        return self.kind in FREE_GATES


@dataclass(frozen=True)
class BoolCircuit:
    """Topologically ordered comparison circuit for I records of l-bit labels."""

    record_count: int
    label_bits: int
    wire_count: int
    one_wire: int
    pool_inputs: tuple[tuple[int, ...], ...]
    requester_inputs: tuple[tuple[int, ...], ...]
    outputs: tuple[int, ...]
    gates: tuple[Gate, ...]
    adder_widths: tuple[int, ...] = field(default=())

    @property
    def nonfree_gates(self) -> tuple[Gate, ...]:
        return tuple(g for g in self.gates if not g.free)

    @property
    def pool_wires(self) -> tuple[int, ...]:
        return tuple(w for record in self.pool_inputs for w in record)

    @property
    def requester_wires(self) -> tuple[int, ...]:
        return tuple(w for record in self.requester_inputs for w in record)


class _Builder:
    def __init__(self) -> None:
        self.wire_count = 0
        self.gates: list[Gate] = []

    def wire(self) -> int:
        self.wire_count += 1
        return self.wire_count - 1

    def wires(self, count: int) -> tuple[int, ...]:
        return tuple(self.wire() for _ in range(count))

    def gate(self, kind: GateKind, *inputs: int) -> int:
        out = self.wire()
        gate_id = len(self.gates)
        self.gates.append(Gate(gate_id, kind, inputs, out))
        return out

    def add(self, a: list[int], b: list[int], width: int) -> list[int]:
        """Ripple-carry sum of two little-endian numbers, truncated to `width` bits.

        Callers guarantee the true sum fits in `width`, so a carry out of the
        top position is never built.
        """
        result: list[int] = []
        carry: int | None = None
        for i in range(max(len(a), len(b))):
            bits = [x[i] for x in (a, b) if i < len(x)]
            if carry is not None:
                bits.append(carry)
            last = i + 1 >= width
            if len(bits) == 1:
                result.append(bits[0])
                carry = None
            elif len(bits) == 2:
                x, y = bits
                result.append(self.gate(GateKind.XOR, x, y))
                carry = None if last else self.gate(GateKind.AND, x, y)
            else:
                x, y, c = bits
                xc = self.gate(GateKind.XOR, x, c)
                result.append(self.gate(GateKind.XOR, xc, y))
                if last:
                    carry = None
                else:
                    yc = self.gate(GateKind.XOR, y, c)
                    carry = self.gate(GateKind.XOR, self.gate(GateKind.AND, xc, yc), c)
        if carry is not None and len(result) < width:
            result.append(carry)
        return result[:width]


@functools.lru_cache(maxsize=64)
def build_comparison_circuit(record_count: int, label_bits: int) -> BoolCircuit:
    """Build the match-counting circuit.

    Raises:
        ValueError: If either dimension is below 1.
    """
    if record_count < 1 or label_bits < 1:
        raise ValueError("record count and label width must be at least 1")
    b = _Builder()
    one = b.wire()
    pool = [b.wires(label_bits) for _ in range(record_count)]
    requester = [b.wires(label_bits) for _ in range(record_count)]

    matches: list[int] = []
    for predicted, actual in zip(pool, requester, strict=True):
        pairs = zip(predicted, actual, strict=True)
        diffs = [b.gate(GateKind.XOR, x, y) for x, y in pairs]
        any_diff = diffs[0]
        for d in diffs[1:]:
            any_diff = b.gate(GateKind.OR, any_diff, d)
        matches.append(b.gate(GateKind.NOT, any_diff))

    # Each node is (bits, leaves summed); leftovers at odd levels move up unchanged.
    level: list[tuple[list[int], int]] = [([m], 1) for m in matches]
    widths: list[int] = []
    while len(level) > 1:
        nxt: list[tuple[list[int], int]] = []
        for j in range(0, len(level) - 1, 2):
            (a, na), (c, nc) = level[j], level[j + 1]
            widths.append(max(len(a), len(c)))
            nxt.append((b.add(a, c, (na + nc).bit_length()), na + nc))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    outputs = tuple(level[0][0])

    return BoolCircuit(
        record_count=record_count,
        label_bits=label_bits,
        wire_count=b.wire_count,
        one_wire=one,
        pool_inputs=tuple(pool),
        requester_inputs=tuple(requester),
        outputs=outputs,
        gates=tuple(b.gates),
        adder_widths=tuple(widths),
    )


class GateCounts(BaseModel):
    """Non-free gate tally of a comparison circuit."""

    model_config = ConfigDict(frozen=True)

    normalization: Normalization
    record_count: int
    or_gates: float
    adder_gates: float

    @property
    def total(self) -> float:
        return self.or_gates + self.adder_gates


def ceil_log2(n: int) -> int:
    return 0 if n <= 1 else (n - 1).bit_length()


def count_nonfree_gates(
    circuit: BoolCircuit, normalization: Normalization = Normalization.RAW
) -> GateCounts:
    """Count non-free gates.

    The table normalization charges one OR per record and I * ceil(log2 I) / 2
    gates for the adder tree.
    """
    i = circuit.record_count
    if normalization is Normalization.TABLE:
        return GateCounts(
            normalization=normalization,
            record_count=i,
            or_gates=i,
            adder_gates=i * ceil_log2(i) / 2,
        )
    kinds = Counter(g.kind for g in circuit.gates)
    return GateCounts(
        normalization=normalization,
        record_count=i,
        or_gates=kinds[GateKind.OR],
        adder_gates=kinds[GateKind.AND],
    )


def gate_count_report(circuit: BoolCircuit) -> dict[str, object]:
    """Raw and normalized counts plus the adder-width histogram."""
    kinds = Counter(g.kind for g in circuit.gates)
    raw = count_nonfree_gates(circuit, Normalization.RAW)
    table = count_nonfree_gates(circuit, Normalization.TABLE)
    return {
        "record_count": circuit.record_count,
        "label_bits": circuit.label_bits,
        "gates": {kind.value: kinds[kind] for kind in GateKind},
        "raw_nonfree": raw.total,
        "table_nonfree": table.total,
        "adders_by_width": {
            str(width): count
            for width, count in sorted(Counter(circuit.adder_widths).items())
        },
    }


def label_to_bits(label: int, width: int) -> tuple[int, ...]:
    """Little-endian bits of a class label.

    Raises:
        ValueError: If the label does not fit in `width` bits.
    """
    if not 0 <= label < 1 << width:
        raise ValueError(f"label {label} does not fit in {width} bits")
    return tuple((label >> j) & 1 for j in range(width))


def bits_to_int(bits: Sequence[int]) -> int:
    return sum(bit << j for j, bit in enumerate(bits))


def simulate(
    circuit: BoolCircuit, predicted: Sequence[int], actual: Sequence[int]
) -> int:
    """Evaluate the circuit in the clear and return N."""
    if len(predicted) != circuit.record_count or len(actual) != circuit.record_count:
        raise ShapeError("label vectors must have one entry per record")
    values = [0] * circuit.wire_count
    values[circuit.one_wire] = 1
    for wires, label in zip(circuit.pool_inputs, predicted, strict=True):
        for w, bit in zip(wires, label_to_bits(label, circuit.label_bits), strict=True):
            values[w] = bit
    for wires, label in zip(circuit.requester_inputs, actual, strict=True):
        for w, bit in zip(wires, label_to_bits(label, circuit.label_bits), strict=True):
            values[w] = bit
    for g in circuit.gates:
        match g.kind:
            case GateKind.XOR:
                values[g.output] = values[g.inputs[0]] ^ values[g.inputs[1]]
            case GateKind.NOT:
                values[g.output] = values[g.inputs[0]] ^ 1
            case GateKind.OR:
                values[g.output] = values[g.inputs[0]] | values[g.inputs[1]]
            case GateKind.AND:
                values[g.output] = values[g.inputs[0]] & values[g.inputs[1]]
    return bits_to_int([values[w] for w in circuit.outputs])


def plaintext_oracle(predicted: Sequence[int], actual: Sequence[int]) -> int:
    """Count positions where the two label vectors agree.

    Raises:
        ShapeError: If the vectors differ in length.
    """
    if len(predicted) != len(actual):
        raise ShapeError(
            f"{len(predicted)} predicted labels vs {len(actual)} actual labels"
        )
    return sum(1 for p, a in zip(predicted, actual, strict=True) if p == a)
