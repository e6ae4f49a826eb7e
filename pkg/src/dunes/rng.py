"""Portable seeded random numbers.

Every stochastic part of the package draws from one generator family,
xorshift64* (Vigna 2016), so a run can be replayed in any language from the
seed alone.  The algorithm, bit for bit:

    state  <- splitmix64(seed)            # once, at seeding; 0 is remapped
    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
    output  = x * 0x2545F4914F6CDD1D      (mod 2**64)
    double  = (output >> 11) * 2**-53     in [0, 1)
    below n = floor(double * n)           clipped to n - 1

where splitmix64(s) is

    z = s + 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^ (z >> 31)

all modulo 2**64.  Generator state is a one-element uint64 array so kernels
can advance it in place.
"""

import numpy as np

from ._backend import njit, quiet_overflow

MASK64 = (1 << 64) - 1
_MULT = np.uint64(0x2545F4914F6CDD1D)
_S12 = np.uint64(12)
_S25 = np.uint64(25)
_S27 = np.uint64(27)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_ZERO_STATE_REPLACEMENT = 0x9E3779B97F4A7C15


def splitmix64(seed):
    """Scramble an arbitrary integer seed into a 64-bit generator state."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z or _ZERO_STATE_REPLACEMENT


def new_state(seed):
    return np.array([splitmix64(seed)], dtype=np.uint64)


@njit(inline=True)
def next_u64(state):
    x = state[0]
    x ^= x >> _S12
    x ^= x << _S25
    x ^= x >> _S27
    state[0] = x
    return x * _MULT


@njit(inline=True)
def next_double(state):
    return np.float64(next_u64(state) >> _S11) * _INV53


@njit(inline=True)
def next_below(state, n):
    i = np.int64(next_double(state) * n)
    if i >= n:
        i = n - 1
    return i


@njit
def fill_doubles(state, out):
    for i in range(out.shape[0]):
        out[i] = next_double(state)


@njit
def fill_u64(state, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(state)


class Xorshift:
    """Stateful convenience wrapper around the kernel functions.

    >>> Xorshift(0).random(2).shape
    (2,)
    """

    name = "xorshift64star"

    def __init__(self, seed):
        self.seed = int(seed)
        self.state = new_state(seed)

    def random(self, n):
        out = np.empty(int(n), dtype=np.float64)
        with quiet_overflow():
            fill_doubles(self.state, out)
        return out

    def uint64(self, n):
        out = np.empty(int(n), dtype=np.uint64)
        with quiet_overflow():
            fill_u64(self.state, out)
        return out

    def below(self, n):
        with quiet_overflow():
            return int(next_below(self.state, np.int64(n)))

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)`` driven by this generator."""
        perm = np.arange(n, dtype=np.int64)
        u = self.random(max(n - 1, 0))
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
