"""SplitMix64 generator shared by the Python side and the kernels.

The stream is counter based: output ``i`` (1-based) of a generator seeded with
``s`` is ``mix(s + i * GOLDEN)``.  Kernels keep the counter in a length-1
``uint64`` array so they can advance it in place.
"""

from __future__ import annotations

import numpy as np

from ._accel import JIT_ENABLED, kernel

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def new_state(seed: int) -> np.ndarray:
    return np.array([seed & MASK64], dtype=np.uint64)


if JIT_ENABLED:
    _G = np.uint64(GOLDEN)
    _M1 = np.uint64(MIX1)
    _M2 = np.uint64(MIX2)
    _S30 = np.uint64(30)
    _S27 = np.uint64(27)
    _S31 = np.uint64(31)

    @kernel
    def next_u64(state):
        s = state[0] + _G
        state[0] = s
        z = (s ^ (s >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @kernel
    def randbelow(state, m):
        # modulo bias < m / 2**64, negligible for ring sizes
        return np.int64(next_u64(state) % np.uint64(m))

else:

    def next_u64(state):
        s = (int(state[0]) + GOLDEN) & MASK64
        state[0] = s
        return mix64(s)

    def randbelow(state, m):
        return next_u64(state) % int(m)


def stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset+1 .. offset+count`` of the generator, vectorised."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def random_bits(seed: int, count: int) -> np.ndarray:
    """``count`` fair bits (uint8 0/1) drawn from the seeded stream."""
    words = stream(seed, (count + 63) // 64)
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")
    return bits[:count]


class SplitMix64:
    """Scalar generator for Python-side sampling (node samples, replicas)."""

    def __init__(self, seed: int):
        self.state = new_state(seed)

    def next(self) -> int:
        s = (int(self.state[0]) + GOLDEN) & MASK64
        self.state[0] = s
        return mix64(s)

    def randbelow(self, m: int) -> int:
        return self.next() % m

    def random(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def integers(self, m: int, size: int) -> np.ndarray:
        """``size`` draws below ``m``; advances the counter by ``size``."""
        out = stream(int(self.state[0]), size) % np.uint64(m)
        self.state[0] = (int(self.state[0]) + size * GOLDEN) & MASK64
        return out.astype(np.int64)
