"""Tests for fixed-point Paillier encryption."""

import random

import numpy as np
import pytest

from pofl_sim.errors import DecryptionError, EncodingError, HEOverflowError
from pofl_sim.verification.he import (
    FixedPointEncoding,
    HEKeyPair,
    ciphertext_bytes,
    ciphertext_size,
    decrypt,
    decrypt_array,
    decrypt_mantissa,
    encrypt,
    encrypt_array,
    encrypt_mantissa,
    he_add,
    he_dot,
    he_plain_mul,
    he_plain_mul_int,
    keygen,
    scale_tag,
)

ENC = FixedPointEncoding(24)


class TestKeygen:
    """Tests for key generation."""

    def test_seeded_keys_repeat(self) -> None:
        """The same seed yields the same modulus."""
        assert keygen(512, seed=7).public_key.n == keygen(512, seed=7).public_key.n

    def test_modulus_width(self, keypair: HEKeyPair) -> None:
        """n has exactly the requested number of bits."""
        assert keypair.public_key.n.bit_length() == 512
        assert keypair.bits == 512

    def test_small_keys_rejected(self) -> None:
        """Keys below 512 bits are refused."""
        with pytest.raises(ValueError, match="at least 512"):
            keygen(256, seed=0)


class TestEncoding:
    """Tests for the binary fixed-point codec."""

    def test_resolution(self) -> None:
        """Values round to multiples of 2^-f."""
        assert ENC.to_mantissa(1.5) == 3 << 23
        decoded = ENC.decode(ENC.to_mantissa(0.1))
        assert decoded == pytest.approx(0.1, abs=ENC.resolution)

    def test_non_finite(self) -> None:
        """NaN and infinity cannot be encoded."""
        with pytest.raises(EncodingError):
            ENC.to_mantissa(float("inf"))

    def test_overflow(self, keypair: HEKeyPair) -> None:
        """Mantissas beyond the signed message space are refused."""
        with pytest.raises(HEOverflowError):
            encrypt_mantissa(keypair.public_key, keypair.public_key.n, 0)


class TestHomomorphism:
    """Tests for ciphertext arithmetic."""

    def test_encrypt_decrypt(self, keypair: HEKeyPair) -> None:
        """Negative and positive values survive at scale f."""
        rng = random.Random(0)
        for value in (-3.25, 0.0, 7.125):
            c = encrypt(keypair.public_key, value, ENC, rng=rng)
            assert scale_tag(c) == 24
            assert decrypt(keypair, c) == value

    def test_addition_is_exact(self, keypair: HEKeyPair) -> None:
        """Sums of encoded values decrypt to the sum of mantissas."""
        pk = keypair.public_key
        a, b = encrypt(pk, 1.25, ENC), encrypt(pk, -4.5, ENC)
        assert decrypt_mantissa(keypair, he_add(a, b)) == ENC.to_mantissa(-3.25)

    def test_plain_multiplication_doubles_the_scale(self, keypair: HEKeyPair) -> None:
        """Multiplying by an encoded real moves the result to scale 2f."""
        c = he_plain_mul(encrypt(keypair.public_key, 1.5, ENC), -2.0, ENC)
        assert scale_tag(c) == 48
        assert decrypt(keypair, c) == -3.0

    def test_integer_multiplication_keeps_the_scale(self, keypair: HEKeyPair) -> None:
        """Integer factors leave the scale tag alone."""
        c = he_plain_mul_int(encrypt(keypair.public_key, 0.5, ENC), -6)
        assert scale_tag(c) == 24
        assert decrypt(keypair, c) == -3.0

    def test_scale_mismatch(self, keypair: HEKeyPair) -> None:
        """Adding ciphertexts of different scales is an encoding error."""
        pk = keypair.public_key
        with pytest.raises(EncodingError, match="scale"):
            he_add(encrypt(pk, 1.0, ENC), encrypt(pk, 1.0, ENC, scale=2))

    def test_key_mismatch(self, keypair: HEKeyPair, other_keypair: HEKeyPair) -> None:
        """Adding ciphertexts under different keys is an encoding error."""
        with pytest.raises(EncodingError, match="keys"):
            he_add(
                encrypt(keypair.public_key, 1.0, ENC),
                encrypt(other_keypair.public_key, 1.0, ENC),
            )

    def test_dot_product(self, keypair: HEKeyPair) -> None:
        """An encrypted inner product agrees with numpy within 2^-f per term."""
        x = [0.5, -1.25, 2.0]
        w = [0.3, 0.7, -0.1]
        cts = [encrypt(keypair.public_key, v, ENC) for v in x]
        c = he_dot(cts, w, ENC)
        assert scale_tag(c) == 48
        assert decrypt(keypair, c) == pytest.approx(float(np.dot(x, w)), abs=1e-6)

    def test_dot_needs_equal_lengths(self, keypair: HEKeyPair) -> None:
        with pytest.raises(ValueError, match="equal-length"):
            he_dot([encrypt(keypair.public_key, 1.0, ENC)], [1.0, 2.0], ENC)

    def test_wrong_key_decryption(
        self, keypair: HEKeyPair, other_keypair: HEKeyPair
    ) -> None:
        """A ciphertext under another key cannot be decrypted."""
        with pytest.raises(DecryptionError):
            decrypt(other_keypair, encrypt(keypair.public_key, 1.0, ENC))


class TestArrays:
    """Tests for array encryption and ciphertext sizing."""

    def test_array_round_trip(self, keypair: HEKeyPair) -> None:
        """Shapes are preserved and values recovered."""
        values = np.array([[0.25, -0.5], [1.0, 2.0]])
        enc = encrypt_array(keypair.public_key, values, ENC, random.Random(1))
        assert enc.shape == (2, 2)
        np.testing.assert_array_equal(decrypt_array(keypair, enc), values)

    def test_ciphertext_width(self, keypair: HEKeyPair) -> None:
        """Every ciphertext serializes to the width of n^2."""
        size = ciphertext_size(keypair.public_key)
        assert size == 128
        c = encrypt(keypair.public_key, 3.0, ENC, rng=random.Random(2))
        assert len(ciphertext_bytes(c)) == size
        enc = encrypt_array(keypair.public_key, np.zeros(3), ENC)
        assert enc.payload_bytes() == 3 * size

    def test_seeded_encryption_repeats(self, keypair: HEKeyPair) -> None:
        """A fixed RNG fixes the obfuscator and so the ciphertext."""
        a = encrypt(keypair.public_key, 1.0, ENC, rng=random.Random(3))
        b = encrypt(keypair.public_key, 1.0, ENC, rng=random.Random(3))
        assert ciphertext_bytes(a) == ciphertext_bytes(b)

    def test_encryption_is_probabilistic(self, keypair: HEKeyPair) -> None:
        """Fresh obfuscators give distinct ciphertexts of the same plaintext."""
        pk = keypair.public_key
        unseeded = {ciphertext_bytes(encrypt(pk, 1.0, ENC)) for _ in range(8)}
        assert len(unseeded) == 8
        rng = random.Random(4)
        seeded = {ciphertext_bytes(encrypt(pk, 1.0, ENC, rng=rng)) for _ in range(8)}
        assert len(seeded) == 8
        assert {decrypt(keypair, encrypt(pk, 1.0, ENC)) for _ in range(4)} == {1.0}
