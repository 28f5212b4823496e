"""Counter-based Gaussian streams keyed by (seed, chain, step).

Every draw is a pure function of its coordinates, so an ensemble update gives
the same bits whatever the chain partitioning or thread count.

Construction (kept stable so stored outputs stay reproducible):

* Philox4x32-10 with key ``(seed & 0xffffffff, seed >> 32)`` and counter
  ``(block, chain, step & 0xffffffff, step >> 32)``.
* The four output words ``(w0, w1, w2, w3)`` give two 53-bit integers
  ``n1 = (w0 << 21) | (w1 >> 11)`` and ``n2 = (w2 << 21) | (w3 >> 11)``;
  ``u1 = (n1 + 0.5) / 2**53`` lies in (0, 1) and ``u2 = n2 / 2**53`` in [0, 1).
* Box-Muller: ``r = sqrt(-2 log u1)``, normals ``r cos(2 pi u2)`` and
  ``r sin(2 pi u2)``. Block ``b`` supplies coordinates ``2b`` and ``2b + 1``.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)
_ROUNDS = 10

# step counter reserved for initial-state draws
INIT_STEP = (1 << 64) - 1


def philox4x32(counter, key):
    """Philox4x32-10 block function, vectorised over broadcastable words.

    ``counter`` is a 4-sequence and ``key`` a 2-sequence of uint32-valued
    arrays; returns four uint64 arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _MASK for k in key)
    for _ in range(_ROUNDS):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _SHIFT) ^ c1 ^ k0, p1 & _MASK,
                          (p0 >> _SHIFT) ^ c3 ^ k1, p0 & _MASK)
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _split64(v: int):
    v = int(v) & ((1 << 64) - 1)
    return np.uint64(v & 0xFFFFFFFF), np.uint64(v >> 32)


def uniform_pairs(seed: int, chains, step: int, block: int = 0):
    """Two uniform arrays ``(u1, u2)`` with u1 in (0, 1), u2 in [0, 1)."""
    chains = np.asarray(chains, dtype=np.uint64)
    k0, k1 = _split64(seed)
    s0, s1 = _split64(step)
    w0, w1, w2, w3 = philox4x32((np.uint64(block), chains, s0, s1), (k0, k1))
    n1 = (w0 << np.uint64(21)) | (w1 >> np.uint64(11))
    n2 = (w2 << np.uint64(21)) | (w3 >> np.uint64(11))
    scale = 2.0**-53
    u1 = (n1.astype(np.float64) + 0.5) * scale
    u2 = n2.astype(np.float64) * scale
    return u1, u2


def standard_normal(seed: int, chains, step: int, dim: int) -> np.ndarray:
    """Standard normal draws of shape ``(len(chains), dim)`` for one step."""
    chains = np.asarray(chains, dtype=np.uint64).reshape(-1)
    out = np.empty((chains.shape[0], dim))
    for block in range((dim + 1) // 2):
        u1, u2 = uniform_pairs(seed, chains, step, block)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out[:, 2 * block] = r * np.cos(theta)
        if 2 * block + 1 < dim:
            out[:, 2 * block + 1] = r * np.sin(theta)
    return out
