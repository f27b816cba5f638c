"""Deterministic 64-bit RNG used everywhere randomness feeds consensus.

Miner, verifier, and simulator must reproduce each other's random
sequences bit for bit across machines and backends, so we use a
hand-rolled splitmix64 generator (public-domain algorithm by Steele,
Lea and Flood) instead of `random` or numpy's generators, whose
streams are not contractually stable across versions.

All state fits in one unsigned 64-bit word, which makes the generator
trivial to suspend, hash-derive, and mirror in the compiled kernels.
"""

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
TWO_PI = 6.283185307179586

# 2**-53, written as a division so both backends build the same double
_U53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """splitmix64 finalizer: a bijective avalanche on 64-bit words."""
    z &= MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *salts: int) -> int:
    """Derive an independent child seed from `seed` and integer salts.

    Used to split one protocol seed into per-purpose streams (miner
    vs verifier, per-restart, per-step) without overlap.
    """
    x = mix64(seed)
    for s in salts:
        x = mix64(x ^ mix64((s + GOLDEN) & MASK64))
    return x


class SplitMix64:
    """Sequential splitmix64 stream.

    >>> SplitMix64(0).next_u64()
    16294208416658607535
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _U53

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        # reject the low residue class so every value is equally likely
        threshold = (1 << 64) % bound
        while True:
            u = self.next_u64()
            if u >= threshold:
                return u % bound

    def gauss_pair(self) -> tuple[float, float]:
        """Two independent standard normals via Box-Muller."""
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        return r * math.cos(TWO_PI * u2), r * math.sin(TWO_PI * u2)


# stream salts; arbitrary but frozen (changing any is a consensus break)
SALT_POSITIONS = 0x706F73
SALT_VALUES = 0x76616C
SALT_SA_RESTART = 0x7361
SALT_GD_STEP = 0x6764
SALT_GD_INIT = 0x696E6974
SALT_MINER = 0x6D696E65
SALT_NETSIM = 0x6E6574
