"""Finite-depth dyadic measures and measure-level diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import _blocks
from .grid import CubeId

# masses below this are treated as zero in every division
TINY = 1e-300


@dataclass(frozen=True, eq=False)
class MeasureTree:
    """Masses of every cube down to generation ``depth``.

    ``levels[k]`` has shape ``(2**k,) * dim``. Build instances with
    :meth:`from_leaves` so that additivity holds by construction.
    """

    dim: int
    levels: tuple[np.ndarray, ...]
    root_volume: float = 1.0

    @classmethod
    def from_leaves(cls, leaves: np.ndarray, root_volume: float = 1.0) -> MeasureTree:
        leaves = np.array(leaves, dtype=float)
        dim = leaves.ndim
        side = leaves.shape[0]
        depth = side.bit_length() - 1
        if side != 1 << depth or any(s != side for s in leaves.shape):
            raise ValueError("leaf array must be a cube of side 2**depth")
        if not np.all(np.isfinite(leaves)) or np.any(leaves < 0):
            raise ValueError("masses must be finite and nonnegative")
        if root_volume <= 0:
            raise ValueError("root volume must be positive")
        levels = [leaves]
        for _ in range(depth):
            levels.append(_blocks.coarsen(levels[-1]))
        levels.reverse()
        for a in levels:
            a.setflags(write=False)
        return cls(dim, tuple(levels), float(root_volume))

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def level(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.depth:
            raise ValueError(f"generation {k} outside 0..{self.depth}")
        return self.levels[k]

    def mass(self, q: CubeId) -> float:
        if q.dim != self.dim:
            raise ValueError("dimension mismatch")
        return float(self.level(q.gen)[q.coords])

    def child_masses(self, q: CubeId) -> np.ndarray:
        """Masses of the children of ``q`` in grid order."""
        if q.gen >= self.depth:
            raise ValueError(f"depth overflow: {q} has no children in the tree")
        nxt = self.levels[q.gen + 1]
        sl = tuple(slice(2 * c, 2 * c + 2) for c in q.coords)
        return nxt[sl].reshape(-1).copy()

    @property
    def total(self) -> float:
        return float(self.levels[0].reshape(-1)[0])

    def volume(self, gen: int) -> float:
        """Lebesgue volume of a cube of generation ``gen``."""
        return self.root_volume * 2.0 ** (-self.dim * gen)

    def children_levels(self, k: int) -> np.ndarray:
        """Child masses of every generation-k cube, shape ``(2**k,)*d + (2**d,)``."""
        return _blocks.split_children(self.level(k + 1))

    def additivity_error(self) -> float:
        """Largest relative gap between a parent mass and the sum of its children."""
        worst = 0.0
        for k in range(self.depth):
            par = self.levels[k]
            kids = _blocks.coarsen(self.levels[k + 1])
            scale = np.maximum(np.abs(par), TINY)
            worst = max(worst, float(np.max(np.abs(par - kids) / scale)))
        return worst


def build_lebesgue(dim: int, depth: int, root_volume: float = 1.0) -> MeasureTree:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    side = 1 << depth
    leaves = np.full((side,) * dim, root_volume * 2.0 ** (-dim * depth))
    return MeasureTree.from_leaves(leaves, root_volume)


def build_explicit(dim: int, depth: int, masses: Sequence[float], root_volume: float = 1.0) -> MeasureTree:
    arr = np.asarray(masses, dtype=float)
    side = 1 << depth
    if arr.size != side**dim:
        raise ValueError(f"expected {side ** dim} leaf masses, got {arr.size}")
    return MeasureTree.from_leaves(arr.reshape((side,) * dim), root_volume)


# ---------------------------------------------------------------- split measures

SPLIT_KINDS = ("explicit_list", "formula_a", "formula_b", "formula_c", "formula_d")


def _triangular_offset(k: int) -> int:
    """For n(n-1)/2 < k <= n(n+1)/2 return k - n(n-1)/2."""
    n = 1
    while n * (n + 1) // 2 < k:
        n += 1
    return k - n * (n - 1) // 2


def _formula_b(kind: str, k: int) -> float:
    if k == 1:
        return 0.5
    if kind == "formula_a":
        return 1.0 / k
    if kind == "formula_b":
        return 2.0 ** (-(k * k))
    if kind == "formula_c":
        return 1.0 / (2 * _triangular_offset(k))
    if kind == "formula_d":
        if k in (2, 3):
            return 0.5
        half = k // 2
        return 1.0 / half if k % 2 == 0 else 1.0 - 1.0 / half
    raise ValueError(f"unknown split kind {kind!r}")


@dataclass(frozen=True)
class SplitSequenceSpec:
    """The sequence b_k = mu(I_k^b)/mu(I_{k-1}), k = 1..depth, with a_k = 1 - b_k.

    I_k is [0, 2^-k) and I_k^b is its right sibling.
    """

    kind: str
    depth: int
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.depth < 1:
            raise ValueError("split measures need depth >= 1")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def b(self) -> np.ndarray:
        """b_1..b_depth as an array indexed from 0."""
        if self.kind == "explicit_list":
            if len(self.params) < self.depth:
                raise ValueError(f"explicit list has {len(self.params)} entries, depth {self.depth}")
            vals = np.array(self.params[: self.depth])
        else:
            vals = np.array([_formula_b(self.kind, k) for k in range(1, self.depth + 1)])
        if vals[0] != 0.5:
            raise ValueError("a_1 must equal 1/2")
        if np.any(~(vals > 0)) or np.any(~(vals < 1)):
            bad = int(np.argmax((vals <= 0) | (vals >= 1))) + 1
            raise ValueError(f"a_{bad} outside (0, 1)")
        return vals

    def a(self) -> np.ndarray:
        return 1.0 - self.b()

    def b_at(self, k: int) -> float:
        return float(self.b()[k - 1])

    def a_at(self, k: int) -> float:
        return 1.0 - self.b_at(k)


def build_split_measure(spec: SplitSequenceSpec) -> MeasureTree:
    n = spec.depth
    b = spec.b()
    a = 1.0 - b
    leaves = np.empty(1 << n)
    chain = 1.0  # mu(I_{k-1})
    for k in range(1, n + 1):
        lo, hi = 1 << (n - k), 1 << (n - k + 1)
        leaves[lo:hi] = b[k - 1] * chain / (hi - lo)
        chain *= a[k - 1]
    leaves[0] = chain
    return MeasureTree.from_leaves(leaves)


def chain_cube(k: int) -> CubeId:
    """I_k = [0, 2^-k) in one dimension."""
    return CubeId(1, k, (0,))


def chain_sibling(k: int) -> CubeId:
    """I_k^b = [2^-k, 2^{1-k})."""
    return CubeId(1, k, (1,))


# ---------------------------------------------------------------- plane example


def r2_root_exponent(K: int) -> int:
    """Smallest p with 2**p >= K + 1, so every [k, k+1)^2 is a grid cube."""
    return max(1, math.ceil(math.log2(K + 1)))


def r2_block_masses(k: int) -> np.ndarray:
    return np.array([1 / k**2, 1 / k**2, (k**2 - 2) / (2 * k**2), (k**2 - 2) / (2 * k**2)])


def r2_block_cube(k: int, K: int) -> CubeId:
    return CubeId(2, r2_root_exponent(K), (k, k))


def build_r2_nonstandard(K: int, depth: int) -> MeasureTree:
    """Lebesgue measure on [0, 2^p)^2 except on the blocks [k, k+1)^2, 2 <= k <= K.

    Each block keeps total mass 1 but its four children carry
    1/k^2, 1/k^2, (k^2-2)/(2k^2), (k^2-2)/(2k^2) in grid order, uniformly
    spread below. Masses are in natural units; ``root_volume`` is 4**p.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    p = r2_root_exponent(K)
    if depth < p + 1:
        raise ValueError(f"depth {depth} too shallow; need at least {p + 1} to resolve the blocks")
    side = 1 << depth
    cell = 4.0 ** (p - depth)
    leaves = np.full((side, side), cell)
    sub = 1 << (depth - p - 1)  # leaves per child axis
    for k in range(2, K + 1):
        for idx, m in enumerate(r2_block_masses(k)):
            bx, by = idx >> 1, idx & 1
            x0 = (2 * k + bx) * sub
            y0 = (2 * k + by) * sub
            leaves[x0 : x0 + sub, y0 : y0 + sub] = m / (sub * sub)
    return MeasureTree.from_leaves(leaves, root_volume=4.0**p)


def build_product(factors: Sequence[MeasureTree]) -> MeasureTree:
    if not factors:
        raise ValueError("need at least one factor")
    if any(f.dim != 1 for f in factors):
        raise ValueError("product factors must be one-dimensional")
    depth = factors[0].depth
    if any(f.depth != depth for f in factors):
        raise ValueError("depth mismatch among factors")
    leaves = factors[0].level(depth)
    vol = factors[0].root_volume
    for f in factors[1:]:
        leaves = np.multiply.outer(leaves, f.level(depth))
        vol *= f.root_volume
    return MeasureTree.from_leaves(leaves, vol)


def product_factors(mu: MeasureTree, rtol: float = 1e-12) -> list[MeasureTree] | None:
    """Recover one-dimensional marginals if ``mu`` is a product measure, else None."""
    n = mu.depth
    leaves = mu.level(n)
    total = mu.total
    if total <= 0:
        return None
    margs = []
    for axis in range(mu.dim):
        others = tuple(i for i in range(mu.dim) if i != axis)
        margs.append(leaves.sum(axis=others) if others else leaves)
    rebuilt = margs[0]
    for m in margs[1:]:
        rebuilt = np.multiply.outer(rebuilt, m)
    rebuilt = rebuilt / total ** (mu.dim - 1)
    if not np.allclose(rebuilt, leaves, rtol=rtol, atol=rtol * float(leaves.max())):
        return None
    scale = total ** (1.0 / mu.dim)
    vol = mu.root_volume ** (1.0 / mu.dim)
    return [MeasureTree.from_leaves(m / total * scale, vol) for m in margs]


# ---------------------------------------------------------------- m-values


def m_level(mu: MeasureTree, k: int) -> np.ndarray:
    """m(I) = mu(I_-) mu(I_+) / mu(I) for every I of generation k (one dimension)."""
    if mu.dim != 1:
        raise ValueError("m-values are defined in one dimension")
    if not 0 <= k < mu.depth:
        raise ValueError(f"generation {k} has no children in the tree")
    kids = mu.level(k + 1)
    left, right = kids[0::2], kids[1::2]
    return _blocks.safe_divide(left * right, mu.level(k))


def m_value(mu: MeasureTree, q: CubeId) -> float:
    return float(m_level(mu, q.gen)[q.coords[0]])


@dataclass
class DiagnosticsReport:
    """Per-generation extremes; series are indexed by generation (NaN where undefined)."""

    dim: int
    upto_gen: int
    c_inc: float | None
    c_dec: float | None
    c_doub: float
    degenerate: bool
    inc_series: np.ndarray | None
    dec_series: np.ndarray | None
    doub_series: np.ndarray
    growth: dict[float, np.ndarray] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for g in range(self.upto_gen + 1):
            row: dict[str, Any] = {"generation": g}
            if self.inc_series is not None:
                row["m_inc"] = float(self.inc_series[g])
                row["m_dec"] = float(self.dec_series[g])
            row["doubling"] = float(self.doub_series[g])
            for t, series in self.growth.items():
                row[f"growth_t{t:g}"] = float(series[g])
            out.append(row)
        return out


def _nanmax(a: np.ndarray) -> float:
    a = a[np.isfinite(a)]
    return float(a.max()) if a.size else float("nan")


def diagnostics(mu: MeasureTree, upto_gen: int | None = None, t_values: Iterable[float] = (1.0,)) -> DiagnosticsReport:
    """Doubling, m-monotonicity and growth profiles down to ``upto_gen``."""
    if upto_gen is None:
        upto_gen = mu.depth - 1
    if not 0 <= upto_gen < mu.depth:
        raise ValueError(f"upto_gen must lie in 0..{mu.depth - 1}")
    n = upto_gen + 1
    doub = np.full(n, np.nan)
    degenerate = False
    for g in range(1, n):
        kids = mu.level(g)
        par = _blocks.refine(mu.level(g - 1))
        pos = kids >= TINY
        if np.any(pos):
            doub[g] = float(np.max(par[pos] / kids[pos]))
        degenerate |= bool(np.any(~pos & (par >= TINY)))

    inc = dec = None
    c_inc = c_dec = None
    if mu.dim == 1:
        inc = np.full(n, np.nan)
        dec = np.full(n, np.nan)
        prev = m_level(mu, 0)
        for g in range(1, n):
            cur = m_level(mu, g)
            par = np.repeat(prev, 2)
            ok = (cur >= TINY) & (par >= TINY)
            if np.any(ok):
                inc[g] = float(np.max(cur[ok] / par[ok]))
                dec[g] = float(np.max(par[ok] / cur[ok]))
            prev = cur
        c_inc, c_dec = _nanmax(inc), _nanmax(dec)

    growth = {}
    for t in t_values:
        series = np.array([float(mu.level(g).max()) / mu.volume(g) ** t for g in range(n)])
        growth[float(t)] = series
    return DiagnosticsReport(mu.dim, upto_gen, c_inc, c_dec, _nanmax(doub), degenerate, inc, dec, doub, growth)


# ---------------------------------------------------------------- JSON


def measure_from_json(spec: dict[str, Any], depth: int | None = None) -> MeasureTree:
    """Build a measure from its JSON description; ``depth`` overrides the stored depth."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("measure spec must be an object with a 'kind'")
    kind = spec["kind"]
    n = int(depth if depth is not None else spec.get("depth", 8))
    if kind == "lebesgue":
        return build_lebesgue(int(spec.get("dim", 1)), n, float(spec.get("root_volume", 1.0)))
    if kind == "split":
        seq = spec.get("sequence", "explicit_list")
        return build_split_measure(SplitSequenceSpec(seq, n, tuple(spec.get("b", ()))))
    if kind == "r2_nonstandard":
        return build_r2_nonstandard(int(spec.get("K", 12)), n)
    if kind == "product":
        return build_product([measure_from_json(f, depth) for f in spec["factors"]])
    if kind == "explicit":
        if depth is not None and depth != spec["depth"]:
            raise ValueError("explicit measures carry their own depth")
        return build_explicit(int(spec["dim"]), int(spec["depth"]), spec["masses"], float(spec.get("root_volume", 1.0)))
    raise ValueError(f"unknown measure kind {kind!r}")


def measure_to_json(mu: MeasureTree) -> dict[str, Any]:
    return {
        "kind": "explicit",
        "dim": mu.dim,
        "depth": mu.depth,
        "root_volume": mu.root_volume,
        "masses": [float(x) for x in mu.level(mu.depth).reshape(-1)],
    }
