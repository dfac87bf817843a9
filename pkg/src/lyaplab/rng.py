"""Counter-based splittable random numbers.

Every random draw is a pure function of ``(key, counter)``, so per-trial streams
can be derived from a master seed without sequential state and the same trial
produces the same numbers no matter which worker or batch it lands in.

The mixer is the SplitMix64 finalizer applied to ``key + counter * GOLDEN``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def mix64(z):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def split(seed, index):
    """Child key for stream ``index`` of ``seed``; vectorizes over ``index``."""
    seed = np.uint64(int(seed) & MASK64)
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(seed ^ mix64(idx * GOLDEN + np.uint64(0x632BE59BD9B4E019)))


def trial_keys(master_seed, start, stop):
    return split(master_seed, np.arange(start, stop, dtype=np.uint64))


def bits(keys, counter):
    """Raw 64-bit outputs for each key at position ``counter`` (scalar or array)."""
    keys = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(keys + (c + np.uint64(1)) * GOLDEN)


def uniform(keys, counter):
    """Doubles in the open interval (0, 1)."""
    b = bits(keys, counter) >> _S11
    return (b.astype(np.float64) + 0.5) * _INV53


def normal(keys, counter):
    """Standard normals by inverse CDF (one uniform per draw)."""
    return ndtri(uniform(keys, counter))


def derive_seed(seed, *labels):
    """Deterministic 64-bit child seed from an integer seed and integer/str labels."""
    k = np.uint64(int(seed) & MASK64)
    for lab in labels:
        if isinstance(lab, str):
            lab = int.from_bytes(lab.encode()[:8].ljust(8, b"\0"), "little") ^ len(lab)
        k = split(k, np.uint64(int(lab) & MASK64))
    return int(k)
