"""Counter-based hashing used for every random cookie in the package.

A cookie at stack index ``j`` and site ``z`` is a pure function of
``(seed, j, z)``; trial seeds are a pure function of ``(master_seed, index)``.
Both the materialized environments and the Monte Carlo kernel call the same
jitted functions, so they agree bit for bit.
"""

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO = np.uint64(2)
_THREE = np.uint64(3)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@nb.njit(nb.uint64(nb.uint64), cache=True)
def splitmix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


@nb.njit(nb.uint64(nb.uint64, nb.int64), cache=True)
def derive_seed(master, index):
    h = splitmix(master)
    return splitmix(h ^ splitmix(np.uint64(index) * _THREE))


@nb.njit(cache=True)
def cookie_uniform(seed, j, z):
    h = splitmix(seed)
    h = splitmix(h ^ splitmix(np.uint64(j) + _GOLDEN))
    h = splitmix(h ^ splitmix(np.uint64(z) * _TWO + _GOLDEN))
    return np.float64(h >> _S11) * _INV53


@nb.njit(cache=True)
def draw_jump(u, cdf, max_jump):
    for i in range(cdf.shape[0] - 1):
        if u < cdf[i]:
            return i - max_jump
    return cdf.shape[0] - 1 - max_jump


@nb.njit(cache=True)
def hashed_cookie(seed, j, z, cdf, max_jump):
    return draw_jump(cookie_uniform(seed, j, z), cdf, max_jump)


@nb.njit(cache=True)
def fill_cookies(seed, lo, hi, depth, cdf, max_jump, out):
    for z in range(lo, hi + 1):
        for j in range(depth):
            out[z - lo, j] = hashed_cookie(seed, j, z, cdf, max_jump)


def as_seed(seed):
    """Map any Python integer onto the unsigned 64-bit seed space."""
    return np.uint64(int(seed) & MASK64)


def trial_seed(master_seed, index):
    return int(derive_seed(as_seed(master_seed), np.int64(index)))
