"""Counter-based random numbers keyed by (seed, stream, shot, counter).

Every draw is a pure function of its key, so shots can be simulated in any
order or in parallel and still reproduce the same numbers. The mixer is the
SplitMix64 finalizer; a key is hashed to a per-(seed, stream, shot) base and
the counter walks the SplitMix64 sequence from that base.

``uniform`` is a plain-Python reference used to check the compiled kernels.
"""

from __future__ import annotations

import numba as nb
import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def stream_base(seed: int, stream: int, shot: int) -> int:
    h = mix(seed + GOLDEN)
    h = mix(h ^ (stream + GOLDEN))
    return mix(h ^ (shot + GOLDEN))


def uniform(seed: int, stream: int, shot: int, counter: int) -> float:
    """Uniform on [0, 1) with 53 random bits."""
    z = mix(stream_base(seed, stream, shot) + (counter + 1) * GOLDEN)
    return (z >> 11) * 2.0**-53


# compiled twins; uint64 arithmetic wraps modulo 2**64 as above

_G = np.uint64(GOLDEN)
_U30, _U27, _U31, _U11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_UM1, _UM2 = np.uint64(_M1), np.uint64(_M2)


@nb.njit(cache=True, nogil=True)
def mix_nb(z):
    z = (z ^ (z >> _U30)) * _UM1
    z = (z ^ (z >> _U27)) * _UM2
    return z ^ (z >> _U31)


@nb.njit(cache=True, nogil=True)
def stream_base_nb(seed, stream, shot):
    h = mix_nb(np.uint64(seed) + _G)
    h = mix_nb(h ^ (np.uint64(stream) + _G))
    return mix_nb(h ^ (np.uint64(shot) + _G))


@nb.njit(cache=True, nogil=True)
def uniform_nb(base, counter):
    z = mix_nb(base + (np.uint64(counter) + np.uint64(1)) * _G)
    return np.float64(z >> _U11) * 1.1102230246251565e-16
