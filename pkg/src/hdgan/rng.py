"""Seeded, fully reproducible random number generation.

All randomness in the pipeline flows through one construction:

* stream seeds are derived as ``derive_seed(master_seed, tag, index)`` where
  ``tag`` names the purpose ("split", "dropout", ...) and ``index``
  distinguishes repeats (epoch number, ensemble member, ...);
* each stream is a bank of ``LANES`` xoshiro256** generators whose state
  words come from one splitmix64 counter chain, emitted round-major
  (round r yields lane 0..LANES-1 before round r+1 starts).

The lane count is part of the stream definition: changing ``LANES`` changes
every stream, so it is a module constant, never a parameter. Bounded integer
draws reduce a 64-bit word modulo the bound; the bias is below
``bound / 2**64`` and irrelevant at any bound this package uses.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

#: Number of interleaved xoshiro lanes per stream. Fixed forever (see above).
LANES = 4096

_U64 = np.uint64
_ROT7 = _U64(7)
_ROT45 = _U64(45)
_SH17 = _U64(17)
_SH11 = _U64(11)
_FIVE = _U64(5)
_NINE = _U64(9)
_INV53 = float(2.0**-53)


def mix64(value: int) -> int:
    """splitmix64 finalizer: a 64-bit bijective scramble."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Derive a child stream seed from (master seed, purpose tag, index)."""
    h = mix64(master_seed & _MASK64)
    h = mix64(h ^ fnv1a64(tag.encode("utf-8")))
    return mix64(h ^ (index & _MASK64))


def _splitmix_block(seed: int, count: int) -> np.ndarray:
    """First `count` splitmix64 outputs for `seed`, computed counter-style.

    splitmix64 advances its state by a constant, so output k equals
    mix64(seed + (k+1)*GOLDEN) and the whole block vectorizes.
    """
    with np.errstate(over="ignore"):
        k = np.arange(1, count + 1, dtype=np.uint64)
        z = _U64(seed & _MASK64) + k * _U64(_GOLDEN)
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def _rotl(x: np.ndarray, k: np.uint64) -> np.ndarray:
    return (x << k) | (x >> (_U64(64) - k))


class Rng:
    """One deterministic stream of 64-bit words and derived variates."""

    def __init__(self, seed: int):
        self._seed = seed & _MASK64
        state = _splitmix_block(self._seed, 4 * LANES).reshape(LANES, 4)
        # xoshiro forbids the all-zero state; splitmix64 cannot emit four
        # zero words in a row for any seed, but keep the guard explicit.
        if not state.any(axis=1).all():
            raise AssertionError("degenerate xoshiro lane state")
        self._s0 = state[:, 0].copy()
        self._s1 = state[:, 1].copy()
        self._s2 = state[:, 2].copy()
        self._s3 = state[:, 3].copy()
        self._buffer = np.empty(0, dtype=np.uint64)

    @property
    def seed(self) -> int:
        return self._seed

    def _rounds(self, n_rounds: int) -> np.ndarray:
        out = np.empty((n_rounds, LANES), dtype=np.uint64)
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        with np.errstate(over="ignore"):
            for r in range(n_rounds):
                out[r] = _rotl(s1 * _FIVE, _ROT7) * _NINE
                t = s1 << _SH17
                s2 = s2 ^ s0
                s3 = s3 ^ s1
                s1 = s1 ^ s2
                s0 = s0 ^ s3
                s2 = s2 ^ t
                s3 = _rotl(s3, _ROT45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return out.reshape(-1)

    def u64(self, n: int) -> np.ndarray:
        """Next `n` words of the stream."""
        if n < 0:
            raise ValueError("n must be non-negative")
        have = self._buffer.shape[0]
        if have >= n:
            out, self._buffer = self._buffer[:n], self._buffer[n:]
            return out
        need = n - have
        fresh = self._rounds(-(-need // LANES))
        out = np.concatenate([self._buffer, fresh[:need]])
        self._buffer = fresh[need:]
        return out

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def random(self, n: int | None = None):
        """Uniform floats in [0, 1) with 53-bit resolution."""
        if n is None:
            return float(self.u64(1)[0] >> _SH11) * _INV53
        return (self.u64(n) >> _SH11).astype(np.float64) * _INV53

    def uniform(self, lo: float, hi: float, n: int | None = None):
        return lo + (hi - lo) * self.random(n)

    def below(self, bound: int) -> int:
        """One integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return int(self.u64(1)[0]) % bound

    def integers(self, bound: int, n: int) -> np.ndarray:
        """`n` integers in [0, bound), int64."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return (self.u64(n) % _U64(bound)).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), one word per swap."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        words = self.u64(n - 1)
        bounds = np.arange(n, 1, -1, dtype=np.uint64)  # i+1 for i = n-1..1
        targets = (words % bounds).astype(np.int64)
        for pos in range(n - 1, 0, -1):
            j = targets[n - 1 - pos]
            perm[pos], perm[j] = perm[j], perm[pos]
        return perm

    def shuffled(self, seq):
        """New list with the elements of `seq` in permuted order."""
        items = list(seq)
        return [items[i] for i in self.permutation(len(items))]

    def normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive word pairs."""
        if n == 0:
            return np.empty(0, dtype=np.float64)
        pairs = -(-n // 2)
        words = self.u64(2 * pairs)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((words[0::2] >> _SH11).astype(np.float64) + 1.0) * _INV53
        u2 = (words[1::2] >> _SH11).astype(np.float64) * _INV53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]
