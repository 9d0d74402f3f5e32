"""Seed derivation and keyed site hashing.

All randomness in the toolkit flows from explicit 64-bit seeds.  Replicate
loops derive per-replicate seeds with :func:`derive_seed`, so results do not
depend on execution order or worker count.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0 ** -53


def splitmix64(x):
    """splitmix64 finalizer, vectorized over uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GAMMA
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        return z ^ (z >> _S31)


def derive_seed(master: int, index: int) -> int:
    """Seed for replicate `index` of a run keyed by `master` (splittable-stream convention)."""
    with np.errstate(over="ignore"):
        base = np.uint64(master & _MASK)
        step = np.asarray(np.uint64((index & _MASK)), dtype=np.uint64) * _GAMMA
        return int(splitmix64(splitmix64(base) + step))


def derive_seeds(master: int, count: int) -> np.ndarray:
    """Vector of per-replicate seeds, identical to calling derive_seed index by index."""
    with np.errstate(over="ignore"):
        idx = np.arange(count, dtype=np.uint64) * _GAMMA
        return splitmix64(splitmix64(np.uint64(master & _MASK)) + idx)


def bits_to_unit(bits) -> np.ndarray:
    """Map uint64 words to doubles in [0, 1) using the top 53 bits."""
    return (np.asarray(bits, dtype=np.uint64) >> _S11) * _INV53


def site_hash(seed, sites) -> np.ndarray:
    """Hash lattice sites to uint64 words, keyed by `seed`.

    `sites` is an (n, d) integer array; `seed` is a scalar or an array
    broadcastable against the n axis.  The hash chains one splitmix64 round
    per coordinate, so every coordinate (and the seed) avalanches into the
    output word.
    """
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim == 1:
        sites = sites[None, :]
    with np.errstate(over="ignore"):
        h = splitmix64(np.asarray(seed, dtype=np.uint64) & np.uint64(_MASK))
        h = np.broadcast_to(h, sites.shape[:1]).copy()
        for j in range(sites.shape[1]):
            col = sites[:, j].astype(np.uint64)
            h = splitmix64(h ^ (col * _MIX2 + np.uint64(j + 1) * _GAMMA))
        return h
