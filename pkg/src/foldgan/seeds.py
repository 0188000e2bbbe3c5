"""Deterministic seed derivation.

Every component that needs randomness derives its own 64-bit seed from a
base seed and a stream index, so independent pieces of work (households,
trials, per-class trainings) can run in any order, or in parallel, and
still reproduce bit-identically.
"""

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 finalizer round: maps a 64-bit int to a well-mixed one."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def derive_seed(base: int, index: int) -> int:
    """Child seed for substream ``index`` of ``base`` (seed xor index, mixed)."""
    return splitmix64((base & _MASK64) ^ (index & _MASK64))
