"""Paillier cryptosystem with signed fixed-point encoding and (N, t)-threshold decryption.

The generator is fixed to ``g = n + 1`` so that ``g**m mod n**2 == 1 + m*n``.
All randomness is drawn from a caller-supplied :class:`random.Random`; when
none is given a :class:`secrets.SystemRandom` is used.
"""

from __future__ import annotations

import math
import random
import secrets
from dataclasses import dataclass, field
from fractions import Fraction
from decimal import Decimal

MR_ROUNDS = 64
DEFAULT_KEY_BITS = 1024

_SMALL_PRIMES = [
    p for p in range(3, 1000) if all(p % d for d in range(2, int(p**0.5) + 1))
]


class PaillierError(ValueError):
    pass


class EncodingOverflow(PaillierError):
    pass


class ShareCombinationError(PaillierError):
    pass


def _rng(rng: random.Random | None) -> random.Random:
    return rng if rng is not None else secrets.SystemRandom()


def is_probable_prime(n: int, rounds: int = MR_ROUNDS, rng: random.Random | None = None) -> bool:
    """Miller-Rabin test with trial division by small primes first."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    rng = _rng(rng)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: random.Random | None = None) -> int:
    # top two bits set so that the product of two such primes has exactly 2*bits bits
    rng = _rng(rng)
    while True:
        cand = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if is_probable_prime(cand, rng=rng):
            return cand


# --------------------------------------------------------------------------- keys


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int
    bit_length: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def max_signed(self) -> int:
        """Largest magnitude representable by the signed encoding."""
        return (self.n - 1) // 2

    def to_dict(self) -> dict:
        return {"n": format(self.n, "x"), "g": format(self.g, "x"), "bits": self.bit_length}

    @classmethod
    def from_dict(cls, d: dict) -> PublicKey:
        return cls(n=int(d["n"], 16), g=int(d["g"], 16), bit_length=int(d["bits"]))


@dataclass(frozen=True)
class PrivateKey:
    lam: int
    mu: int
    public: PublicKey

    def to_dict(self) -> dict:
        d = self.public.to_dict()
        d.update({"lambda": format(self.lam, "x"), "mu": format(self.mu, "x")})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PrivateKey:
        return cls(lam=int(d["lambda"], 16), mu=int(d["mu"], 16), public=PublicKey.from_dict(d))


@dataclass(frozen=True)
class Ciphertext:
    value: int
    # encryption randomness, kept for simulation-side audit only; never serialized
    randomness: int | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"value": format(self.value, "x")}

    @classmethod
    def from_dict(cls, d: dict) -> Ciphertext:
        return cls(int(d["value"], 16))


def _check_bits(bit_length: int) -> None:
    if bit_length < 64 or bit_length % 2:
        raise PaillierError(f"bit_length must be even and >= 64, got {bit_length}")


def _prime_pair(bit_length: int, rng: random.Random | None, min_prime: int = 0) -> tuple[int, int]:
    half = bit_length // 2
    while True:
        p = random_prime(half, rng)
        q = random_prime(half, rng)
        if p == q or min(p, q) <= min_prime:
            continue
        n = p * q
        if n.bit_length() == bit_length and math.gcd(n, (p - 1) * (q - 1)) == 1:
            return p, q


def keygen(bit_length: int = DEFAULT_KEY_BITS, rng: random.Random | None = None) -> tuple[PublicKey, PrivateKey]:
    """Generate a key pair whose modulus ``n`` has exactly ``bit_length`` bits."""
    _check_bits(bit_length)
    p, q = _prime_pair(bit_length, rng)
    n = p * q
    lam = math.lcm(p - 1, q - 1)
    pk = PublicKey(n=n, g=n + 1, bit_length=bit_length)
    # with g = n + 1, L(g^lam mod n^2) = lam mod n
    mu = pow(lam, -1, n)
    return pk, PrivateKey(lam=lam, mu=mu, public=pk)


# --------------------------------------------------------------------------- core ops


def random_unit(pk: PublicKey, rng: random.Random | None = None) -> int:
    rng = _rng(rng)
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            return r


def encrypt(pk: PublicKey, m: int, r: int | None = None, rng: random.Random | None = None) -> Ciphertext:
    if not 0 <= m < pk.n:
        raise PaillierError("plaintext out of range [0, n)")
    if r is None:
        r = random_unit(pk, rng)
    elif not 1 <= r < pk.n or math.gcd(r, pk.n) != 1:
        raise PaillierError("randomness must be a unit in [1, n)")
    n2 = pk.nsquare
    gm = (1 + m * pk.n) % n2 if pk.g == pk.n + 1 else pow(pk.g, m, n2)
    return Ciphertext(gm * pow(r, pk.n, n2) % n2, randomness=r)


def _check_ciphertext(pk: PublicKey, c: Ciphertext) -> None:
    if not 0 < c.value < pk.nsquare or math.gcd(c.value, pk.n) != 1:
        raise PaillierError("invalid ciphertext (not a unit mod n^2)")


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def decrypt(sk: PrivateKey, c: Ciphertext) -> int:
    pk = sk.public
    _check_ciphertext(pk, c)
    return _L(pow(c.value, sk.lam, pk.nsquare), pk.n) * sk.mu % pk.n


def hom_add(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return Ciphertext(a.value * b.value % pk.nsquare)


def hom_sum(pk: PublicKey, cts) -> Ciphertext:
    acc = 1
    n2 = pk.nsquare
    for c in cts:
        acc = acc * c.value % n2
    return Ciphertext(acc)


def hom_scale(pk: PublicKey, a: Ciphertext, k: int) -> Ciphertext:
    """Ciphertext of ``k * m mod n``; negative ``k`` goes through the modular inverse."""
    return Ciphertext(pow(a.value, k, pk.nsquare))


# --------------------------------------------------------------------------- signed fixed point


def to_fraction(x) -> Fraction:
    """Exact rational view of ``x``. Floats are read through their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, (Decimal, str)):
        return Fraction(x)
    raise TypeError(f"cannot encode {type(x).__name__}")


def scale_floor(x, scale: int) -> int:
    """``floor(scale * x)`` computed exactly."""
    return math.floor(to_fraction(x) * scale)


def encode_signed(x, scale: int, pk: PublicKey) -> int:
    if scale <= 0:
        raise PaillierError("scale must be positive")
    v = scale_floor(x, scale)
    if not -pk.max_signed <= v <= pk.max_signed:
        raise EncodingOverflow(f"|{v}| exceeds the signed plaintext range")
    return v % pk.n


def decode_signed(raw: int, scale: int, pk: PublicKey) -> Fraction:
    if not 0 <= raw < pk.n:
        raise PaillierError("raw value out of range [0, n)")
    v = raw - pk.n if raw > pk.n // 2 else raw
    return Fraction(v, scale)


def signed_int(raw: int, pk: PublicKey) -> int:
    """Signed integer represented by a residue (scale 1)."""
    return raw - pk.n if raw > pk.n // 2 else raw


# --------------------------------------------------------------------------- threshold


@dataclass(frozen=True)
class KeyShare:
    index: int
    share: int
    threshold: int
    party_count: int
    public: PublicKey
    verification_base: int | None = None

    def to_dict(self) -> dict:
        d = self.public.to_dict()
        d.update(
            {
                "index": self.index,
                "share": format(self.share, "x"),
                "threshold": self.threshold,
                "parties": self.party_count,
            }
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> KeyShare:
        return cls(
            index=int(d["index"]),
            share=int(d["share"], 16),
            threshold=int(d["threshold"]),
            party_count=int(d["parties"]),
            public=PublicKey.from_dict(d),
        )


@dataclass(frozen=True)
class DecryptionShare:
    index: int
    value: int
    party_count: int


def check_threshold_params(party_count: int, threshold: int) -> None:
    if not 1 <= threshold <= party_count:
        raise PaillierError(f"need 1 <= t <= N, got N={party_count}, t={threshold}")
    if party_count <= 3 and threshold != party_count:
        raise PaillierError("for N <= 3 only (N, N)-threshold sharing is allowed")


def threshold_keygen(
    bit_length: int, party_count: int, threshold: int, rng: random.Random | None = None
) -> tuple[PublicKey, list[KeyShare]]:
    """Split the decryption exponent ``d`` (``d = 0 mod lambda``, ``d = 1 mod n``)
    with a degree ``t - 1`` polynomial over ``Z_{n*lambda}``."""
    _check_bits(bit_length)
    check_threshold_params(party_count, threshold)
    rng = _rng(rng)
    # primes must exceed N so that 4 * (N!)^2 is invertible mod n
    p, q = _prime_pair(bit_length, rng, min_prime=party_count)
    n = p * q
    lam = math.lcm(p - 1, q - 1)
    pk = PublicKey(n=n, g=n + 1, bit_length=bit_length)
    mod = n * lam
    d = lam * pow(lam, -1, n)
    coeffs = [d] + [rng.randrange(mod) for _ in range(threshold - 1)]
    shares = []
    for i in range(1, party_count + 1):
        s = 0
        for a in reversed(coeffs):
            s = (s * i + a) % mod
        shares.append(KeyShare(index=i, share=s, threshold=threshold, party_count=party_count, public=pk))
    return pk, shares


def partial_decrypt(share: KeyShare, c: Ciphertext) -> DecryptionShare:
    pk = share.public
    _check_ciphertext(pk, c)
    delta = math.factorial(share.party_count)
    return DecryptionShare(share.index, pow(c.value, 2 * delta * share.share, pk.nsquare), share.party_count)


def combine_shares(pk: PublicKey, shares: list[DecryptionShare], threshold: int) -> int:
    """Lagrange-combine at least ``threshold`` decryption shares into the plaintext."""
    idx = [s.index for s in shares]
    if len(set(idx)) != len(idx):
        raise ShareCombinationError("duplicate share indices")
    if len(shares) < threshold:
        raise ShareCombinationError(f"need {threshold} shares, got {len(shares)}")
    if not shares:
        raise ShareCombinationError("no shares")
    used = shares[:threshold]
    N = used[0].party_count
    delta = math.factorial(N)
    n2 = pk.nsquare
    acc = 1
    for s in used:
        num, den = delta, 1
        for o in used:
            if o.index != s.index:
                num *= o.index
                den *= o.index - s.index
        coeff = num // den  # exact: delta clears the Lagrange denominators
        acc = acc * pow(s.value, 2 * coeff, n2) % n2
    if (acc - 1) % pk.n:
        raise ShareCombinationError("combined value is not of the form 1 + k*n")
    return _L(acc, pk.n) * pow(4 * delta * delta, -1, pk.n) % pk.n
