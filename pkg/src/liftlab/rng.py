"""Vectorized Philox4x64-10 counter-based generator and seed-tree addressing.

Every random quantity in the package is a pure function of a 128-bit node key
and a 256-bit counter, so any node of a nested sample tree can be rebuilt from
its address alone. Keys and counters are broadcast numpy ``uint64`` arrays,
which lets a whole tree level be drawn in one call.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)

# Fourth counter word separates tree-node derivation from variate generation.
DOMAIN_NODE = 0
DOMAIN_DRAW = 1


def _mulhilo(a: np.ndarray, b: np.uint64) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product split as (hi, lo)."""
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64(counter, key, rounds: int = 10) -> tuple[np.ndarray, ...]:
    """Philox4x64 bijection.

    Args:
        counter: four broadcastable uint64 arrays.
        key: two broadcastable uint64 arrays.

    Returns:
        Four uint64 arrays of the common broadcast shape.
    """
    with np.errstate(over="ignore"):
        c0, c1, c2, c3 = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in counter))
        k0, k1 = (np.asarray(k, dtype=np.uint64) for k in key)
        for r in range(rounds):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(c0, _M0)
            hi1, lo1 = _mulhilo(c2, _M1)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def split_seed(seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Root key for a 64-bit master seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return philox4x64(
        (np.uint64(seed), np.uint64(0x6C6966746C6162), np.uint64(0), np.uint64(DOMAIN_NODE)),
        (np.uint64(0), np.uint64(0)),
    )[:2]


def child_key(parent, index, tag: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Key of child ``index`` of a node; ``tag`` separates sibling sub-trees.

    ``parent`` is a pair of uint64 arrays shaped ``S``; ``index`` broadcasts
    against ``S`` (typically ``np.arange(N)`` appended as a trailing axis).
    """
    k0, k1 = parent
    idx = np.asarray(index, dtype=np.uint64)
    out = philox4x64((idx, np.uint64(tag), np.uint64(0), np.uint64(DOMAIN_NODE)), (k0, k1))
    return out[0], out[1]


def uniforms(key, count: int, stream: int, salt: int = 0) -> np.ndarray:
    """``count`` uniforms in (0, 1) per node; output shape ``key_shape + (count,)``."""
    k0, k1 = (np.asarray(k, dtype=np.uint64)[..., None] for k in key)
    nblocks = -(-count // 4)
    block = np.arange(nblocks, dtype=np.uint64)
    words = philox4x64((block, np.uint64(stream), np.uint64(salt), np.uint64(DOMAIN_DRAW)), (k0, k1))
    raw = np.stack(words, axis=-1).reshape(*np.broadcast_shapes(k0.shape, block.shape)[:-1], nblocks * 4)
    raw = raw[..., :count]
    return ((raw >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def normals(key, count: int, stream: int, salt: int = 0) -> np.ndarray:
    """Standard normals by inverse CDF: one counter word maps to one variate."""
    return ndtri(uniforms(key, count, stream, salt))
