"""Reshaping helpers for per-generation arrays.

A generation-k array has shape ``(2**k,) * d`` and is indexed by cube
coordinates. Child data for generation k has shape ``(2**k,) * d + (2**d,)``
with the trailing axis in grid child order.
"""

from __future__ import annotations

import itertools

import numpy as np


def coarsen(a: np.ndarray, levels: int = 1) -> np.ndarray:
    """Sum over dyadic blocks of side ``2**levels``, one halving at a time."""
    for _ in range(levels):
        parts = [a[idx] for idx in itertools.product((slice(0, None, 2), slice(1, None, 2)), repeat=a.ndim)]
        a = parts[0] + parts[1]
        for p in parts[2:]:
            a = a + p
    return a


def block_max(a: np.ndarray, levels: int) -> np.ndarray:
    if levels == 0:
        return a
    d = a.ndim
    b = 1 << levels
    n = a.shape[0] // b
    shaped = a.reshape(sum(((n, b) for _ in range(d)), ()))
    return shaped.max(axis=tuple(range(1, 2 * d, 2)))


def refine(a: np.ndarray, levels: int = 1) -> np.ndarray:
    """Copy each entry onto its ``2**levels`` per-axis descendants."""
    if levels == 0:
        return a
    out = a
    for axis in range(a.ndim):
        out = np.repeat(out, 1 << levels, axis=axis)
    return out


def to_blocks(a: np.ndarray, levels: int) -> np.ndarray:
    """Generation g+levels array -> (2**g,)*d + (2**(levels*d),) descendant blocks."""
    d = a.ndim
    b = 1 << levels
    n = a.shape[0] // b
    shaped = a.reshape(sum(((n, b) for _ in range(d)), ()))
    order = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
    return shaped.transpose(order).reshape((n,) * d + (b**d,))


def from_blocks(blocks: np.ndarray, levels: int) -> np.ndarray:
    """Inverse of :func:`to_blocks`."""
    d = blocks.ndim - 1
    b = 1 << levels
    n = blocks.shape[0]
    shaped = blocks.reshape((n,) * d + (b,) * d)
    order = sum(((i, d + i) for i in range(d)), ())
    return shaped.transpose(order).reshape((n * b,) * d)


def split_children(a: np.ndarray) -> np.ndarray:
    return to_blocks(a, 1)


def merge_children(c: np.ndarray) -> np.ndarray:
    return from_blocks(c, 1)


def safe_divide(num: np.ndarray, den: np.ndarray, tiny: float = 1e-300) -> np.ndarray:
    """num/den with zero wherever the denominator is below ``tiny``."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    ok = np.broadcast_to(den >= tiny, out.shape)
    np.divide(num, den, out=out, where=ok)
    return out
