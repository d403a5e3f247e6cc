"""Counter-based random streams for reproducible sampling.

Every variate is a pure function of (seed, stream_id, word index), so a
stream can be serialized mid-sequence, restored, and split into
independent child streams for parallel work without cross-talk.  Two
rounds of the SplitMix64 finalizer with key material injected between
rounds give the avalanche quality needed for Monte Carlo use; draws are
turned into normals by Box-Muller.

Conventions: a stream object is either *drawn from* (advancing its
counter) or *derived from* (pure, counter untouched) -- never both for
the same purpose.  Parallel tasks must each own a derived child stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0xD1342543DE82EF95


def _mix(words: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; bijective avalanche on uint64 words."""
    words = (words ^ (words >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    words = (words ^ (words >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return words ^ (words >> np.uint64(31))


def _words(seed: int, stream_id: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words start .. start+count-1 of stream (seed, stream_id)."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    k1 = _mix(np.array([seed & _MASK], dtype=np.uint64))
    k2 = _mix(np.array([(stream_id & _MASK) ^ _GOLDEN], dtype=np.uint64))
    h = _mix(idx * np.uint64(_GOLDEN) + k1)
    return _mix(h ^ k2)


@dataclass
class RngStream:
    """One reproducible stream; (seed, stream_id) fixes the full sequence.

    The counter records how many raw 64-bit words have been consumed, so
    ``RngStream(**old.state())`` resumes exactly where ``old`` stopped.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def normal(self, n: int) -> np.ndarray:
        """Draw n standard normals, consuming 2n words."""
        if n < 1:
            raise ValueError("normal draw count must be >= 1")
        w = _words(self.seed, self.stream_id, self.counter, 2 * n)
        # u1 in (0, 1] so log never sees zero; u2 in [0, 1).
        u1 = ((w[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        self.counter += 2 * n
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic Fisher-Yates shuffle of range(n)."""
        if n < 0:
            raise ValueError("permutation length must be >= 0")
        perm = np.arange(n)
        if n > 1:
            w = _words(self.seed, self.stream_id, self.counter, n - 1)
            self.counter += n - 1
            for k, i in enumerate(range(n - 1, 0, -1)):
                j = int(w[k] % np.uint64(i + 1))
                perm[i], perm[j] = perm[j], perm[i]
        return perm

    def derive(self, *keys: int) -> "RngStream":
        """Independent child stream keyed by ``keys``; does not advance self."""
        sid = np.array([self.stream_id & _MASK], dtype=np.uint64)
        for key in keys:
            salted = np.array([((key & _MASK) * _STREAM_SALT) & _MASK], dtype=np.uint64)
            sid = _mix((sid ^ np.uint64(_GOLDEN)) + _mix(salted))
        return RngStream(self.seed, int(sid[0]), 0)

    def state(self) -> dict:
        """Serializable snapshot; feed back as RngStream(**state) to resume."""
        return {"seed": self.seed, "stream_id": self.stream_id, "counter": self.counter}
