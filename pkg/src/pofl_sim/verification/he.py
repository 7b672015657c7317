"""Additively homomorphic encryption over Paillier with binary fixed-point encoding.

Ciphertexts are `phe` EncryptedNumbers; their exponent is the scale tag
(-f for encoded values, -2f for products of two encoded values).
"""

import math
import random
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Self

import numpy as np
import phe.encoding
import structlog
from Crypto.Util.number import getPrime
from phe import paillier

from pofl_sim.errors import DecryptionError, EncodingError, HEOverflowError

logger = structlog.stdlib.get_logger()

HECiphertext = paillier.EncryptedNumber

DEFAULT_FRACTIONAL_BITS = 24
UPDATE_FRACTIONAL_BITS = 48


class FixedPointNumber(phe.encoding.EncodedNumber):  # type: ignore[misc]
    """Paillier plaintext holding round(value * 2^bits) with exponent -bits."""

    BASE = 2
    LOG2_BASE = 1.0

    @classmethod
    def from_mantissa(
        cls, public_key: paillier.PaillierPublicKey, mantissa: int, frac_bits: int
    ) -> Self:
        """Encode an already-scaled signed integer.

        Raises:
            HEOverflowError: If the integer leaves the key's signed message space.
        """
        if abs(mantissa) > public_key.max_int:
            raise HEOverflowError(
                f"encoded magnitude needs {abs(mantissa).bit_length()} bits, "
                f"key allows {public_key.max_int.bit_length()}"
            )
        return cls(public_key, mantissa % public_key.n, -frac_bits)

    @property
    def mantissa(self) -> int:
        """Signed integer stored in the plaintext."""
        if self.encoding <= self.public_key.max_int:
            return int(self.encoding)
        if self.encoding >= self.public_key.n - self.public_key.max_int:
            return int(self.encoding - self.public_key.n)
        raise HEOverflowError("decrypted plaintext lies in the wraparound band")


@dataclass(frozen=True)
class FixedPointEncoding:
    """Binary fixed-point codec with `frac_bits` fractional bits."""

    frac_bits: int = DEFAULT_FRACTIONAL_BITS

    @property
    def resolution(self) -> float:
        return 2.0**-self.frac_bits

    def to_mantissa(self, value: float, scale: int = 1) -> int:
        """round(value * 2^(scale * frac_bits)).

        Raises:
            EncodingError: If the value is not finite.
        """
        if not math.isfinite(value):
            raise EncodingError(f"cannot encode non-finite value {value!r}")
        return round(value * 2 ** (self.frac_bits * scale))

    def encode(
        self, public_key: paillier.PaillierPublicKey, value: float, scale: int = 1
    ) -> FixedPointNumber:
        return FixedPointNumber.from_mantissa(
            public_key, self.to_mantissa(value, scale), self.frac_bits * scale
        )

    def decode(self, mantissa: int, scale: int = 1) -> float:
        return mantissa / 2 ** (self.frac_bits * scale)


@dataclass(frozen=True)
class HEKeyPair:
    """A Paillier key pair and its modulus size."""

    public_key: paillier.PaillierPublicKey
    private_key: paillier.PaillierPrivateKey
    bits: int


def keygen(bits: int, seed: int | None = None) -> HEKeyPair:
    """Generate a Paillier key pair with an n of `bits` bits.

    With a seed the primes are drawn from a seeded stream, so repeated runs
    produce the same key; otherwise the library's system-random generator is used.

    Raises:
        ValueError: If `bits` is below 512.
    """
    if bits < 512:
        raise ValueError(f"key size must be at least 512 bits, got {bits}")
    if seed is None:
        public_key, private_key = paillier.generate_paillier_keypair(n_length=bits)
        return HEKeyPair(public_key=public_key, private_key=private_key, bits=bits)

    stream = random.Random(seed)
    while True:
        p = getPrime(bits // 2, randfunc=stream.randbytes)
        q = getPrime(bits - bits // 2, randfunc=stream.randbytes)
        if p != q and (p * q).bit_length() == bits:
            break
    public_key = paillier.PaillierPublicKey(p * q)
    private_key = paillier.PaillierPrivateKey(public_key, p, q)
    logger.debug("paillier_keygen", bits=bits, seeded=True)
    return HEKeyPair(public_key=public_key, private_key=private_key, bits=bits)


def ciphertext_size(public_key: paillier.PaillierPublicKey) -> int:
    """Bytes needed to carry one ciphertext (an element of Z_{n^2})."""
    return (public_key.nsquare.bit_length() + 7) // 8


def ciphertext_bytes(c: HECiphertext) -> bytes:
    """Fixed-width big-endian payload of a ciphertext."""
    raw = int(c.ciphertext(be_secure=False))
    return raw.to_bytes(ciphertext_size(c.public_key), "big")


def scale_tag(c: HECiphertext) -> int:
    """Number of fractional bits a ciphertext's plaintext carries."""
    return -int(c.exponent)


def encrypt_mantissa(
    public_key: paillier.PaillierPublicKey,
    mantissa: int,
    frac_bits: int,
    rng: random.Random | None = None,
) -> HECiphertext:
    """Encrypt an already-scaled integer.

    A supplied RNG fixes the obfuscator, which makes encryption reproducible.
    """
    encoded = FixedPointNumber.from_mantissa(public_key, mantissa, frac_bits)
    r_value = rng.randrange(1, public_key.n) if rng is not None else None
    return public_key.encrypt(encoded, r_value=r_value)


def encrypt(
    public_key: paillier.PaillierPublicKey,
    value: float,
    encoding: FixedPointEncoding,
    *,
    scale: int = 1,
    rng: random.Random | None = None,
) -> HECiphertext:
    """Encrypt a real value at `scale` times the encoding's fractional bits."""
    return encrypt_mantissa(
        public_key, encoding.to_mantissa(value, scale), encoding.frac_bits * scale, rng
    )


def decrypt_mantissa(keypair: HEKeyPair, c: HECiphertext) -> int:
    """Decrypt to the signed encoded integer.

    Raises:
        DecryptionError: On a ciphertext under another key or a corrupted payload.
        HEOverflowError: If the plaintext fell into the wraparound band.
    """
    try:
        encoded = keypair.private_key.decrypt_encoded(c, FixedPointNumber)
    except ValueError as exc:
        raise DecryptionError(str(exc)) from exc
    if not isinstance(encoded, FixedPointNumber):
        raise DecryptionError("unexpected plaintext encoding")
    return encoded.mantissa


def decrypt(keypair: HEKeyPair, c: HECiphertext) -> float:
    """Decrypt and rescale using the ciphertext's own scale tag."""
    return decrypt_mantissa(keypair, c) / 2 ** scale_tag(c)


def he_add(c1: HECiphertext, c2: HECiphertext) -> HECiphertext:
    """Homomorphic sum of two ciphertexts of equal scale.

    Raises:
        EncodingError: If the scale tags or the public keys differ.
    """
    if c1.public_key != c2.public_key:
        raise EncodingError("ciphertexts were encrypted under different keys")
    if c1.exponent != c2.exponent:
        raise EncodingError(f"scale tags differ: {scale_tag(c1)} vs {scale_tag(c2)}")
    return c1 + c2


def he_plain_mul(
    c: HECiphertext, k: float, encoding: FixedPointEncoding
) -> HECiphertext:
    """Multiply a ciphertext by a plaintext real; the product's scale tags add.

    Raises:
        HEOverflowError: If the encoded factor exceeds the message space.
    """
    factor = encoding.encode(c.public_key, k)
    return c * factor


def he_plain_mul_int(c: HECiphertext, k: int) -> HECiphertext:
    """Multiply by an integer without changing the scale tag."""
    if abs(k) > c.public_key.max_int:
        raise HEOverflowError("integer factor exceeds the message space")
    return c * FixedPointNumber.from_mantissa(c.public_key, k, 0)


def he_dot(
    ciphertexts: Sequence[HECiphertext],
    weights: Sequence[float],
    encoding: FixedPointEncoding,
) -> HECiphertext:
    """Encrypted inner product with plaintext weights; the result carries scale 2f.

    Raises:
        ValueError: If the sequences are empty or differ in length.
    """
    if not ciphertexts or len(ciphertexts) != len(weights):
        raise ValueError("dot product needs two equal-length non-empty sequences")
    total = he_plain_mul(ciphertexts[0], weights[0], encoding)
    for c, w in zip(ciphertexts[1:], weights[1:], strict=True):
        total = he_add(total, he_plain_mul(c, w, encoding))
    return total


@dataclass(frozen=True)
class EncryptedArray:
    """Ciphertexts of a real array, flattened in C order."""

    shape: tuple[int, ...]
    ciphertexts: tuple[HECiphertext, ...]

    @property
    def size(self) -> int:
        return len(self.ciphertexts)

    def payload_bytes(self) -> int:
        if not self.ciphertexts:
            return 0
        return self.size * ciphertext_size(self.ciphertexts[0].public_key)


def encrypt_array(
    public_key: paillier.PaillierPublicKey,
    values: np.ndarray,
    encoding: FixedPointEncoding,
    rng: random.Random | None = None,
) -> EncryptedArray:
    flat = np.asarray(values, dtype=np.float64).ravel()
    return EncryptedArray(
        shape=tuple(np.shape(values)),
        ciphertexts=tuple(
            encrypt(public_key, float(v), encoding, rng=rng) for v in flat
        ),
    )


def decrypt_array(keypair: HEKeyPair, enc: EncryptedArray) -> np.ndarray:
    values = np.array([decrypt(keypair, c) for c in enc.ciphertexts], dtype=np.float64)
    return values.reshape(enc.shape)
