"""Counter-based Gaussian draws and a dyadically refinable Brownian tree.

Every value is a pure function of (seed, stream, level, index), so paths can
be regenerated from any point (checkpoint resume) and refined in place: the
two half-step increments of an interval sum bitwise to the full-step
increment.  Exact summation is achieved by quantizing increments to integer
multiples of 2**-26 and splitting intervals with integer arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

QUANT_BITS = 26
_QUANT = 2.0 ** QUANT_BITS
_UNIT = 2.0 ** -QUANT_BITS


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _key(seed: int, stream: int, level: int) -> np.uint64:
    with np.errstate(over="ignore"):
        z = _mix(np.asarray(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) + _GAMMA)
        z = _mix(z ^ (np.uint64(stream + 1) * _M1))
        z = _mix(z ^ (np.uint64(level + 1) * _M2))
    return z


def standard_normals(seed: int, stream: int, level: int, indices) -> np.ndarray:
    """One N(0, 1) draw per index; deterministic in all arguments."""
    idx = np.asarray(indices, dtype=np.uint64)
    key = _key(seed, stream, level)
    with np.errstate(over="ignore"):
        two = np.uint64(2)
        v1 = _mix(key + (two * idx + np.uint64(1)) * _GAMMA)
        v2 = _mix(key + (two * idx + np.uint64(2)) * _GAMMA)
    u1 = (v1 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    u2 = (v2 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.round(x * _QUANT).astype(np.int64)


def _split_interval(dt: float) -> tuple[float, int]:
    """Write dt = dt_ref * 2**-L with dt_ref in [0.5, 1); L may be negative."""
    mant, exp = math.frexp(dt)
    return mant, -exp


def brownian_increments(seed: int, stream: int, dt: float, start: int, count: int) -> np.ndarray:
    """Increments W((i+1) dt) - W(i dt) for i in [start, start+count).

    For a fixed seed and stream, halving dt refines the same Brownian path:
    increments at dt sum pairwise (bitwise exactly) to increments at 2 dt.
    """
    if count <= 0:
        return np.zeros(0)
    if dt == 0.0:
        return np.zeros(count)
    if dt < 0.0:
        raise ValueError("time step must be nonnegative")
    dt_ref, big_l = _split_interval(dt)
    root = math.sqrt(dt_ref)
    if big_l < 0:
        # dt is a power-of-two multiple of dt_ref: sum whole top-level groups
        group = 1 << (-big_l)
        j0 = start * group
        z = _quantize(root * standard_normals(seed, stream, 0, j0 + np.arange(count * group)))
        return z.reshape(count, group).sum(axis=1).astype(np.float64) * _UNIT

    last = start + count - 1
    lo = start >> big_l
    z = _quantize(
        root * standard_normals(seed, stream, 0, lo + np.arange((last >> big_l) - lo + 1))
    )
    for lev in range(1, big_l + 1):
        half_std = 0.5 * math.sqrt(dt_ref * 2.0 ** (-(lev - 1)))
        parents = lo + np.arange(len(z))
        xi = _quantize(half_std * standard_normals(seed, stream, lev, parents))
        children = np.empty(2 * len(z), dtype=np.int64)
        children[0::2] = (z >> 1) + xi
        children[1::2] = z - children[0::2]
        lo *= 2
        a = start >> (big_l - lev)
        b = last >> (big_l - lev)
        z = children[a - lo : b - lo + 1]
        lo = a
    return z.astype(np.float64) * _UNIT


def derive_seed(seed: int, *salt: int) -> int:
    """Stable derived seed for independent substreams (members, perturbations)."""
    with np.errstate(over="ignore"):
        z = np.asarray(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) + _GAMMA
        for s in salt:
            z = _mix(z + np.uint64((s + 1) & 0xFFFFFFFFFFFFFFFF) * _M1)
    return int(z)
