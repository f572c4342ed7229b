"""Simple functions on the dyadic tree and their norms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from . import _blocks
from .grid import CubeId
from .haar import HaarFunction, HaarSystem
from .measure import TINY, MeasureTree


@dataclass(frozen=True, eq=False)
class SimpleFunction:
    """Values on the cubes of generation ``resolution``, array of shape ``(2**M,)*d``."""

    resolution: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        side = 1 << self.resolution
        if any(s != side for s in vals.shape):
            raise ValueError(f"values must have side {side} in every axis")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @classmethod
    def constant(cls, dim: int, c: float = 1.0, resolution: int = 0) -> SimpleFunction:
        return cls(resolution, np.full((1 << resolution,) * dim, float(c)))

    @classmethod
    def indicator(cls, q: CubeId, resolution: int | None = None, scale: float = 1.0) -> SimpleFunction:
        res = q.gen if resolution is None else resolution
        if res < q.gen:
            raise ValueError("resolution coarser than the cube")
        vals = np.zeros((1 << res,) * q.dim)
        span = 1 << (res - q.gen)
        vals[tuple(slice(c * span, (c + 1) * span) for c in q.coords)] = scale
        return cls(res, vals)

    @classmethod
    def from_haar(cls, phi: HaarFunction, resolution: int | None = None) -> SimpleFunction:
        q = phi.cube
        res = q.gen + 1 if resolution is None else resolution
        if res < q.gen + 1:
            raise ValueError("resolution too coarse for a Haar function")
        vals = np.zeros((1 << (q.gen + 1),) * q.dim)
        kids = phi.child_values.reshape((2,) * q.dim)
        vals[tuple(slice(2 * c, 2 * c + 2) for c in q.coords)] = kids
        return cls(q.gen + 1, vals).refine(res)

    def refine(self, resolution: int) -> SimpleFunction:
        if resolution < self.resolution:
            raise ValueError("cannot refine to a coarser resolution")
        if resolution == self.resolution:
            return self
        return SimpleFunction(resolution, _blocks.refine(self.values, resolution - self.resolution))

    def restrict(self, q: CubeId) -> SimpleFunction:
        """f * 1_q at resolution max(M, gen q)."""
        f = self.refine(max(self.resolution, q.gen))
        return SimpleFunction(f.resolution, f.values * SimpleFunction.indicator(q, f.resolution).values)

    def __add__(self, other: SimpleFunction) -> SimpleFunction:
        res = max(self.resolution, other.resolution)
        return SimpleFunction(res, self.refine(res).values + other.refine(res).values)

    def __sub__(self, other: SimpleFunction) -> SimpleFunction:
        return self + other.scale(-1.0)

    def __mul__(self, other: SimpleFunction) -> SimpleFunction:
        res = max(self.resolution, other.resolution)
        return SimpleFunction(res, self.refine(res).values * other.refine(res).values)

    def scale(self, c: float) -> SimpleFunction:
        return SimpleFunction(self.resolution, self.values * c)

    def abs(self) -> SimpleFunction:
        return SimpleFunction(self.resolution, np.abs(self.values))

    def to_json(self) -> dict[str, Any]:
        return {"resolution": self.resolution, "values": [float(v) for v in self.values.reshape(-1)]}

    @classmethod
    def from_json(cls, spec: Mapping[str, Any], dim: int = 1) -> SimpleFunction:
        res = int(spec["resolution"])
        vals = np.asarray(spec["values"], dtype=float)
        side = 1 << res
        if vals.size != side**dim:
            raise ValueError(f"expected {side ** dim} values for resolution {res} in dimension {dim}")
        return cls(res, vals.reshape((side,) * dim))


def _check(f: SimpleFunction, mu: MeasureTree) -> None:
    if f.dim != mu.dim:
        raise ValueError("dimension mismatch between function and measure")
    if f.resolution > mu.depth:
        raise ValueError(f"depth overflow: resolution {f.resolution} exceeds measure depth {mu.depth}")


def cube_integrals(f: SimpleFunction, mu: MeasureTree, k: int) -> np.ndarray:
    """Integral of f over every cube of generation k."""
    _check(f, mu)
    if k > mu.depth:
        raise ValueError(f"depth overflow: generation {k}")
    if k >= f.resolution:
        return _blocks.refine(f.values, k - f.resolution) * mu.level(k)
    return _blocks.coarsen(f.values * mu.level(f.resolution), f.resolution - k)


def level_averages(f: SimpleFunction, mu: MeasureTree, k: int) -> np.ndarray:
    return _blocks.safe_divide(cube_integrals(f, mu, k), mu.level(k))


def average_pyramid(f: SimpleFunction, mu: MeasureTree) -> list[np.ndarray]:
    """Averages of f on every generation 0..resolution, from one bottom-up sweep."""
    _check(f, mu)
    ints = [f.values * mu.level(f.resolution)]
    for _ in range(f.resolution):
        ints.append(_blocks.coarsen(ints[-1]))
    ints.reverse()
    return [_blocks.safe_divide(a, mu.level(k)) for k, a in enumerate(ints)]


def integral_pyramid(f: SimpleFunction, mu: MeasureTree, finest: int | None = None) -> list[np.ndarray]:
    """Integrals of f over every cube of generation 0..finest (default: the resolution)."""
    _check(f, mu)
    finest = f.resolution if finest is None else finest
    if finest > mu.depth:
        raise ValueError(f"depth overflow: generation {finest}")
    if finest >= f.resolution:
        ints = [f.refine(finest).values * mu.level(finest)]
        for _ in range(finest):
            ints.append(_blocks.coarsen(ints[-1]))
        ints.reverse()
        return ints
    return integral_pyramid(f, mu)[: finest + 1]


def average(f: SimpleFunction, q: CubeId, mu: MeasureTree) -> float:
    return float(level_averages(f, mu, q.gen)[q.coords])


def integral(f: SimpleFunction, mu: MeasureTree) -> float:
    return float(cube_integrals(f, mu, 0).reshape(-1)[0])


def lp_norm(f: SimpleFunction, p: float, mu: MeasureTree) -> float:
    _check(f, mu)
    masses = mu.level(f.resolution)
    v = np.abs(f.values)
    if np.isinf(p):
        pos = masses >= TINY
        return float(v[pos].max()) if np.any(pos) else 0.0
    if p < 1:
        raise ValueError("p must be at least 1")
    return float(np.sum(v**p * masses) ** (1.0 / p))


def distribution(f: SimpleFunction, mu: MeasureTree) -> tuple[np.ndarray, np.ndarray]:
    """Distinct nonzero |f| values in decreasing order and mu{|f| >= v} for each."""
    _check(f, mu)
    v = np.abs(f.values).reshape(-1)
    w = mu.level(f.resolution).reshape(-1)
    keep = (v > 0) & (w > 0)
    vals, inv = np.unique(v[keep], return_inverse=True)
    mass = np.bincount(inv, weights=w[keep], minlength=vals.size)
    order = np.arange(vals.size)[::-1]
    return vals[order], np.cumsum(mass[order])


def weak_l1_norm(f: SimpleFunction, mu: MeasureTree) -> float:
    """sup_t t * mu{|f| > t}, attained as t rises to a value of |f|.

    Sorting |f| downwards, v_i times the running mass is largest on the last
    member of each tie group, so no deduplication is needed.
    """
    _check(f, mu)
    v = np.abs(f.values).reshape(-1)
    w = mu.level(f.resolution).reshape(-1)
    keep = (v > 0) & (w > 0)
    if not np.any(keep):
        return 0.0
    v, w = v[keep], w[keep]
    order = np.argsort(-v, kind="stable")
    return float(np.max(v[order] * np.cumsum(w[order])))


def inner_product(f: SimpleFunction, phi: HaarFunction, mu: MeasureTree) -> float:
    q = phi.cube
    kids = cube_integrals(f, mu, q.gen + 1)
    block = kids[tuple(slice(2 * c, 2 * c + 2) for c in q.coords)].reshape(-1)
    return float(phi.child_values @ block)


def pairing(f: SimpleFunction, g: SimpleFunction, mu: MeasureTree) -> float:
    return integral(f * g, mu)


def haar_coefficients(f: SimpleFunction, system: HaarSystem, mu: MeasureTree, k: int, child_integrals: np.ndarray | None = None) -> np.ndarray:
    """<f, phi_Q> for every cube of generation k.

    ``child_integrals`` may pass precomputed integrals of f at generation k + 1.
    """
    ints = cube_integrals(f, mu, k + 1) if child_integrals is None else child_integrals
    return np.sum(_blocks.split_children(ints) * system.values[k], axis=-1)


def synthesize(coeffs: np.ndarray, system: HaarSystem, k: int) -> np.ndarray:
    """sum_Q c_Q phi_Q over generation k, as values at generation k + 1."""
    return _blocks.merge_children(coeffs[..., None] * system.values[k])


@dataclass(frozen=True, eq=False)
class CoefficientSequence:
    """Real numbers attached to the cubes of generation < depth, one array per generation."""

    dim: int
    levels: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @classmethod
    def zeros(cls, dim: int, depth: int) -> CoefficientSequence:
        return cls(dim, tuple(np.zeros((1 << k,) * dim) for k in range(depth)))

    @classmethod
    def from_dict(cls, dim: int, depth: int, entries: Mapping[CubeId | str, float]) -> CoefficientSequence:
        levels = [np.zeros((1 << k,) * dim) for k in range(depth)]
        for key, val in entries.items():
            q = CubeId.parse(key) if isinstance(key, str) else key
            if q.gen >= depth:
                raise ValueError(f"cube {q} below the coefficient depth")
            levels[q.gen][q.coords] = float(val)
        return cls(dim, tuple(levels))

    @classmethod
    def from_function(cls, rho: SimpleFunction, system: HaarSystem, mu: MeasureTree) -> CoefficientSequence:
        """gamma_Q = <rho, theta_Q>."""
        return cls(mu.dim, tuple(haar_coefficients(rho, system, mu, k) for k in range(system.depth)))

    def __getitem__(self, q: CubeId) -> float:
        return float(self.levels[q.gen][q.coords])

    def sup(self) -> float:
        return max((float(np.max(np.abs(a))) for a in self.levels), default=0.0)

    def check_support(self, mu: MeasureTree) -> None:
        for k, a in enumerate(self.levels):
            bad = (a != 0) & (mu.level(k) < TINY)
            if np.any(bad):
                coords = tuple(int(c) for c in np.argwhere(bad)[0])
                raise ValueError(f"nonzero coefficient on zero-mass cube {CubeId(self.dim, k, coords)}")


def bmo_norm(rho: SimpleFunction, mu: MeasureTree, upto_gen: int | None = None) -> float:
    """sup over cubes of the mean square oscillation, square-rooted."""
    _check(rho, mu)
    top = rho.resolution if upto_gen is None else min(upto_gen, rho.resolution)
    w = mu.level(rho.resolution)
    pyramid = average_pyramid(rho, mu)
    best = 0.0
    for k in range(top):  # cubes at generation >= resolution see a constant
        avg = _blocks.refine(pyramid[k], rho.resolution - k)
        osc = _blocks.coarsen((rho.values - avg) ** 2 * w, rho.resolution - k)
        best = max(best, float(np.max(_blocks.safe_divide(osc, mu.level(k)))))
    return float(np.sqrt(best))


def carleson_norm(gamma: CoefficientSequence, mu: MeasureTree, upto_gen: int | None = None) -> float:
    """sup over positive-mass Q of (sum_{Q' in D(Q)} gamma_{Q'}^2 / mu(Q))^(1/2), truncated at the sequence depth."""
    gamma.check_support(mu)
    depth = gamma.depth
    if depth > mu.depth:
        raise ValueError("coefficient sequence deeper than the measure")
    top = depth - 1 if upto_gen is None else min(upto_gen, depth - 1)
    best = 0.0
    acc = None
    for k in range(depth - 1, -1, -1):
        sq = gamma.levels[k] ** 2
        acc = sq if acc is None else sq + _blocks.coarsen(acc)
        if k <= top:
            best = max(best, float(np.max(_blocks.safe_divide(acc, mu.level(k)))))
    return float(np.sqrt(best))


def bmo_from_carleson(gamma: CoefficientSequence, theta: HaarSystem, mu: MeasureTree) -> SimpleFunction:
    """Build rho with ||rho||_BMO <= ||gamma||_Car.

    Along the corner chain Q_0 = root, Q_{k+1} = child 0 of Q_k, a point in
    Q_k minus Q_{k+1} sees gamma_Q theta_Q for Q = Q_k and for cubes inside
    Q_k minus Q_{k+1}; the chain cubes above Q_k are dropped there.
    """
    if not theta.cancellative:
        raise ValueError("bmo_from_carleson needs a cancellative system")
    gamma.check_support(mu)
    depth = min(gamma.depth, theta.depth)
    n = depth  # functions of generation depth-1 live at resolution depth
    out = np.zeros((1 << n,) * mu.dim) if n else np.zeros((1,) * mu.dim)
    corner = (0,) * mu.dim
    for k in range(depth):
        coef = np.array(gamma.levels[k], dtype=float)
        chain_coef = coef[corner]
        coef[corner] = 0.0
        out += _blocks.refine(synthesize(coef, theta, k), n - k - 1)
        # chain cube Q_k contributes only on Q_k minus Q_{k+1}
        chain = np.zeros_like(coef)
        chain[corner] = chain_coef
        piece = synthesize(chain, theta, k)
        piece[corner] = 0.0
        out += _blocks.refine(piece, n - k - 1)
    return SimpleFunction(n, out)
