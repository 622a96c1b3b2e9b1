"""Counter-based random streams.

Sample ``i`` of a run with seed ``s`` always receives the four 64-bit words of
Philox block ``i`` under key ``s``, so any split of the index range into chunks
reproduces the same per-sample draws.
"""
import numpy as np

WORDS_PER_SAMPLE = 4
_MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= _MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def sample_words(seed: int, start: int, stop: int) -> np.ndarray:
    """Raw words for sample indices ``start..stop-1``, shape ``(n, 4)``."""
    if stop < start or start < 0:
        raise ValueError(f"invalid sample range [{start}, {stop})")
    n = stop - start
    if n == 0:
        return np.zeros((0, WORDS_PER_SAMPLE), dtype=np.uint64)
    bitgen = np.random.Philox(key=check_seed(seed), counter=start)
    return bitgen.random_raw(WORDS_PER_SAMPLE * n).reshape(n, WORDS_PER_SAMPLE)


def to_unit(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles in [0, 1) using the top 53 bits."""
    return (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    return to_unit(sample_words(seed, start, stop))


def normals(seed: int, start: int, stop: int) -> np.ndarray:
    """One standard normal per sample (Box-Muller on words 0 and 1)."""
    u = uniforms(seed, start, stop)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    return r * np.cos(2.0 * np.pi * u[:, 1])
