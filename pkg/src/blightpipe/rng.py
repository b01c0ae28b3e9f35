"""Counter-based deterministic random numbers (splitmix64).

Every random decision in this package flows through this generator so that
runs are reproducible from a single 64-bit seed, and so that the stream can
be re-implemented exactly in another language from the description below.

Algorithm (splitmix64, Steele/Lea/Flood mixing constants):

    output(seed, n) = mix(seed + (n + 1) * 0x9E3779B97F4A7C15)   mod 2^64
    mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
            z ^= z >> 27; z *= 0x94D049BB133111EB
            z ^= z >> 31

``n`` is a 0-based draw counter, so the stream is random access: draw ``n``
never depends on earlier draws. Substream ``i`` of a seed uses
``output(seed, i)`` as its own seed, which keeps per-particle streams
independent of population size and evaluation order.

Floats map a 64-bit output ``u`` to ``((u >> 11) + 0.5) * 2**-53``, which is
uniform on the open interval (0, 1) -- never exactly 0 or 1, so values are
safe to divide by or take logs of.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Sequential view over one splitmix64 stream.

    Instances track a draw counter; ``jump_to`` provides random access.
    """

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed) & _MASK
        if stream:
            seed = int(substream_seed(seed, stream))
        self._seed = np.uint64(seed)
        self._counter = 0

    @property
    def counter(self) -> int:
        return self._counter

    def jump_to(self, counter: int) -> None:
        self._counter = int(counter)

    def next_u64(self) -> int:
        with np.errstate(over="ignore"):
            value = _mix((self._seed + np.uint64(self._counter + 1) * _GAMMA))
        self._counter += 1
        return int(value)

    def uniform(self) -> float:
        """One float uniform on the open interval (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * 2.0**-53

    def uniform_array(self, n: int) -> np.ndarray:
        """``n`` consecutive open-interval uniforms as float64."""
        with np.errstate(over="ignore"):
            counters = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
            values = _mix(self._seed + counters * _GAMMA)
        self._counter += n
        return ((values >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Integer uniform on [0, n) via the float map; n must be small
        relative to 2^53 (always true here: pool picks, shuffles)."""
        return int(self.uniform() * n)

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates, high index down."""
        for j in range(len(items) - 1, 0, -1):
            i = self.randbelow(j + 1)
            items[j], items[i] = items[i], items[j]


def substream_seed(seed: int, index: int) -> int:
    """Seed of substream ``index``: output ``index`` of the master stream."""
    with np.errstate(over="ignore"):
        return int(_mix(np.uint64(int(seed) & _MASK) + np.uint64(index + 1) * _GAMMA))
