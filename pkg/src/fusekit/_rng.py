"""Seeded randomness with a pinned algorithm.

Bits come from numpy's PCG64 seeded through ``SeedSequence``; numpy keeps
bit-generator streams stable across releases. Everything above the raw
64-bit words (bounded integers, floats, shuffles) is implemented here so
that no library-level sampling change can alter an ordering:

* ``below(n)``: rejection sampling, ``word % n`` accepted when
  ``word < 2**64 - (2**64 % n)``.
* ``random()``: top 53 bits of a word times ``2**-53``.
* ``shuffle``: Fisher-Yates from the last index down, ``j = below(i + 1)``.
"""

from __future__ import annotations

from collections.abc import MutableSequence

import numpy as np

_TWO64 = 1 << 64
_BLOCK = 1024


class PinnedRandom:
    def __init__(self, *entropy: int) -> None:
        if any(e < 0 for e in entropy):
            raise ValueError("seeds must be non-negative integers")
        self._bits = np.random.PCG64(np.random.SeedSequence(list(entropy)))
        self._buffer: list[int] = []

    def next_u64(self) -> int:
        if not self._buffer:
            self._buffer = self._bits.random_raw(_BLOCK).tolist()[::-1]
        return self._buffer.pop()

    def below(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be >= 1")
        limit = _TWO64 - (_TWO64 % n)
        while True:
            word = self.next_u64()
            if word < limit:
                return word % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: MutableSequence) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        order = list(range(n))
        self.shuffle(order)
        return order

    def sample(self, n: int, k: int) -> list[int]:
        """First *k* entries of a partial Fisher-Yates over ``range(n)``."""
        if not 0 <= k <= n:
            raise ValueError("sample size out of range")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
