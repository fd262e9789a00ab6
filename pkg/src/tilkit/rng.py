"""Counter-based deterministic random stream.

Every draw is a pure function of (global_seed, patch_key, counter), so
per-patch work reproduces exactly regardless of process or thread
scheduling. No global mutable RNG anywhere in the pipeline.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence, TypeVar

T = TypeVar("T")

_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class RngStream:
    global_seed: int
    patch_key: str
    counter: int = 0
    _prefix: bytes = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._prefix = (self.global_seed & _MASK64).to_bytes(8, "little") + self.patch_key.encode(
            "utf-8"
        )

    def _next_u64(self) -> int:
        h = hashlib.blake2b(digest_size=8)
        h.update(self._prefix)
        h.update((self.counter & _MASK64).to_bytes(8, "little"))
        self.counter += 1
        return int.from_bytes(h.digest(), "little")

    def split(self, key: str) -> "RngStream":
        """Independent child stream; draws never collide with the parent's."""
        return RngStream(self.global_seed, f"{self.patch_key}/{key}")

    def u01(self) -> float:
        # 53-bit mantissa, uniform in [0, 1)
        return (self._next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.u01()

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], both ends inclusive."""
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        span = high - low + 1
        # modulo bias is negligible for span << 2**64
        return low + self._next_u64() % span

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise ValueError("cannot choose from an empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def poisson(self, lam: float) -> int:
        """Knuth's product-of-uniforms sampler; fine for small lambda."""
        if lam <= 0:
            return 0
        limit = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.u01()
            if p <= limit:
                return k
            k += 1
