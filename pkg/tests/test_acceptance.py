"""Acceptance-scale runs of the closed forms, the cryptography and the election."""

import random

import numpy as np
import pytest

from pofl_sim.chain.block import Block, Vm, build_block
from pofl_sim.chain.election import elect_winner, rank_candidates
from pofl_sim.config import Settings
from pofl_sim.federated.datasets import classification_task
from pofl_sim.federated.model import ModelParams
from pofl_sim.simulation.costs import CostModel, linear_fit
from pofl_sim.simulation.scenario import ScenarioConfig
from pofl_sim.simulation.sweeps import run_sweep
from pofl_sim.trading.oracle import GridSpec, audit_draws
from pofl_sim.verification.circuit import (
    Normalization,
    build_comparison_circuit,
    ceil_log2,
    count_nonfree_gates,
    label_to_bits,
    plaintext_oracle,
)
from pofl_sim.verification.garbled import (
    decode_output,
    evaluate,
    evaluator_label_pairs,
    garble,
    garbler_input_labels,
)
from pofl_sim.verification.he import (
    FixedPointEncoding,
    HEKeyPair,
    decrypt_mantissa,
    encrypt_mantissa,
    he_add,
    he_plain_mul_int,
)
from pofl_sim.verification.ot import TrustedDealerOT, get_group
from pofl_sim.verification.protocol import (
    PredictionSession,
    Requester,
    predict_privately,
)
from pofl_sim.verification.transcript import MessageKind, TranscriptRecorder

pytestmark = pytest.mark.slow

ENC = FixedPointEncoding(24)
SIZES = list(range(500, 8001, 500))


class TestTradingAtScale:
    """Closed forms against brute force over many random draws."""

    def test_thousand_draws_and_ic_audits(self) -> None:
        """1,000 draws on the 1e-4 grid, each with a 21^3 fake-report audit."""
        audit = audit_draws(1_000, seed=2024, grid=GridSpec(), fake_steps=21)
        assert audit.draws == 1_000
        assert audit.bid_mismatches == 0
        assert audit.markup_mismatches == 0
        assert audit.ic_violations == 0


class TestGarbledAtScale:
    """Garbled evaluation and gate counts over many circuit sizes."""

    def test_thousand_random_instances(self) -> None:
        """Decoded N equals the plaintext count on every instance."""
        rng = random.Random(7)
        ot = TrustedDealerOT()
        for instance in range(1_000):
            records = rng.randint(1, 256)
            bits = rng.randint(1, 8)
            predicted = [rng.randrange(1 << bits) for _ in range(records)]
            actual = [
                p if rng.random() < 0.5 else rng.randrange(1 << bits)
                for p in predicted
            ]
            circuit = build_comparison_circuit(records, bits)
            gc = garble(circuit, instance).attach_inputs(
                garbler_input_labels(circuit, instance, predicted)
            )
            chosen = ot.transfer(
                evaluator_label_pairs(circuit, instance),
                [b for label in actual for b in label_to_bits(label, bits)],
            )
            decoded = decode_output(gc, evaluate(gc, gc.garbler_inputs, chosen))
            assert decoded == plaintext_oracle(predicted, actual)

    @pytest.mark.parametrize("exponent", range(15))
    def test_normalized_count_for_powers_of_two(self, exponent: int) -> None:
        """I + I * ceil(log2 I) / 2 exactly, for I = 1 .. 16384."""
        records = 1 << exponent
        table = count_nonfree_gates(
            build_comparison_circuit(records, 1), Normalization.TABLE
        )
        assert table.total == records + records * exponent // 2

    def test_cost_grows_as_n_log_n(
        self, scenario: ScenarioConfig, test_settings: Settings
    ) -> None:
        """Normalized gate cost over I * ceil(log2 I) stays within 10%."""
        table = run_sweep(scenario, "I", SIZES, settings=test_settings)
        column = table.column("table_nonfree")
        costs = [float(c) for c in column]  # type: ignore[arg-type]
        ratios = [
            cost / (size * ceil_log2(size))
            for size, cost in zip(SIZES, costs, strict=True)
        ]
        assert max(ratios) <= 1.1 * min(ratios)


class TestHomomorphicAtScale:
    """Paillier exactness and private prediction over many instances."""

    def test_ten_thousand_add_and_mul_pairs(self, keypair: HEKeyPair) -> None:
        """Sums and integer products of encoded integers decrypt exactly."""
        pk = keypair.public_key
        rng = random.Random(11)
        bound = 1 << 40
        for _ in range(10_000):
            a = rng.randint(-bound, bound)
            b = rng.randint(-bound, bound)
            ca = encrypt_mantissa(pk, a, 0, rng)
            cb = encrypt_mantissa(pk, b, 0, rng)
            assert decrypt_mantissa(keypair, he_add(ca, cb)) == a + b
            assert decrypt_mantissa(keypair, he_plain_mul_int(ca, b)) == a * b

    def test_hundred_private_predictions(self, keypair: HEKeyPair) -> None:
        """Masked first-layer labels equal plaintext labels on 100 nets."""
        for instance in range(100):
            rng = np.random.default_rng(instance)
            dimension = int(rng.integers(2, 5))
            hidden = int(rng.integers(2, 6))
            classes = int(rng.integers(2, 5))
            model = ModelParams.random(
                [dimension, hidden, classes], rng, scale=1.0
            )
            test_set = classification_task(5, dimension, classes, seed=instance)
            requester = Requester(
                "req", test_set, keypair, label_bits=2, encoding=ENC, seed=instance
            )
            session = PredictionSession(
                f"s-{instance}", keypair.public_key, ENC, random.Random(instance)
            )
            predicted = predict_privately(
                model, requester, session, TranscriptRecorder(f"s-{instance}")
            )
            np.testing.assert_array_equal(
                predicted, model.predict_labels(test_set.features)
            )

    def test_transcript_bytes_are_linear_in_records(
        self, keypair: HEKeyPair
    ) -> None:
        """HE bytes of an I-record session fit a line in I with R^2 >= 0.99.

        An I-record session sends exactly the first I records' messages of a
        longer session, so one 8000-record transcript measures every size.
        """
        records = SIZES[-1]
        test_set = classification_task(records, 1, 2, seed=3)
        model = ModelParams.random([1, 1, 2], np.random.default_rng(3))
        requester = Requester("req", test_set, keypair, label_bits=1, encoding=ENC)
        transcript = TranscriptRecorder("sweep")
        session = PredictionSession(
            "sweep", keypair.public_key, ENC, random.Random(3)
        )
        predict_privately(model, requester, session, transcript)

        measured: dict[int, int] = {}
        total = done = 0
        for entry in transcript.entries:
            total += entry.size
            if entry.kind is MessageKind.MASKED_ACTIVATION:
                done += 1
                if done in SIZES:
                    measured[done] = total
        fit = linear_fit(SIZES, [measured[size] for size in SIZES])
        assert fit.r_squared >= 0.99
        cost_model = CostModel.for_key(
            keypair.public_key,
            get_group("modp1024"),
            feature_width=1,
            hidden_width=1,
            label_bits=1,
        )
        assert [measured[size] for size in SIZES] == [
            cost_model.he_bytes(size) for size in SIZES
        ]


class TestElectionAtScale:
    """Randomized candidate sets with inflated claims."""

    RECORDS = 16

    def _candidates(
        self, rng: random.Random, vm: Vm
    ) -> tuple[list[Block], dict[str, int]]:
        blocks: list[Block] = []
        truth: dict[str, int] = {}
        for i in range(rng.randint(1, 6)):
            pool_id = f"pool-{i}"
            verified = rng.randint(0, self.RECORDS)
            claimed = verified
            if verified < self.RECORDS and rng.random() < 0.4:
                claimed = rng.randint(verified + 1, self.RECORDS)
            truth[pool_id] = verified
            blocks.append(
                build_block(
                    None,
                    (f"tx-{i}".encode(),),
                    "task-1",
                    vm,
                    pool_id=pool_id,
                    matches=claimed,
                    record_count=self.RECORDS,
                    timestamp=rng.randint(0, 3),
                )
            )
        return blocks, truth

    def test_thousand_candidate_sets(self) -> None:
        """The winner is the best truthful claim, whatever order nodes see."""
        vm = Vm(
            encrypted_weights=b"\x01" * 16,
            garbled_circuit=garble(build_comparison_circuit(4, 2), 1).to_bytes(),
            transcript_commitment=b"\x02" * 32,
        )
        rng = random.Random(5)
        for _ in range(1_000):
            blocks, truth = self._candidates(rng, vm)

            def verify(block: Block, truth: dict[str, int] = truth) -> int:
                return truth[block.header.pool_id]

            honest = [b for b in blocks if b.header.matches == verify(b)]
            expected = rank_candidates(honest)[0] if honest else None
            first_node = elect_winner(blocks, verify)
            shuffled = blocks[:]
            rng.shuffle(shuffled)
            second_node = elect_winner(shuffled, verify)
            assert first_node is expected
            assert second_node is expected
