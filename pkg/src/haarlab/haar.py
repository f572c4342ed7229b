"""Generalized Haar systems.

Every function is stored by its constant values on the children of its
cube, so all norms reduce to short sums over ``2**d`` child masses. A system
keeps one array per generation of shape ``(2**k,)*d + (2**d,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Mapping, Sequence, Union

import numpy as np

from . import _blocks
from .grid import CubeId
from .measure import TINY, MeasureTree, product_factors

NORM_TOL = 1e-10
MEAN_TOL = 1e-12


class HaarValidationError(ValueError):
    def __init__(self, cube: CubeId, reason: str):
        super().__init__(f"{cube}: {reason}")
        self.cube = cube
        self.reason = reason


@dataclass(frozen=True, eq=False)
class HaarFunction:
    cube: CubeId
    child_values: np.ndarray
    is_zero: bool = field(init=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.child_values, dtype=float).reshape(-1)
        if vals.size != 1 << self.cube.dim:
            raise ValueError("need one value per child")
        object.__setattr__(self, "child_values", vals)
        object.__setattr__(self, "is_zero", not bool(np.any(vals != 0)))

    def norms(self, mu: MeasureTree) -> tuple[float, float, float]:
        """(L1, L2, Linf) norms with respect to ``mu``."""
        masses = mu.child_masses(self.cube)
        v = np.abs(self.child_values)
        pos = masses >= TINY
        linf = float(v[pos].max()) if np.any(pos) else 0.0
        return float(v @ masses), float(np.sqrt(v**2 @ masses)), linf

    def integral(self, mu: MeasureTree) -> float:
        return float(self.child_values @ mu.child_masses(self.cube))


Selector = Union[int, Sequence[int], Callable[[CubeId], Any], None]


@dataclass(frozen=True, eq=False)
class HaarSystem:
    """One function per cube of generation ``< depth``."""

    dim: int
    depth: int
    values: tuple[np.ndarray, ...]
    cancellative: bool
    builder: str
    selector: Any = None

    def __post_init__(self) -> None:
        for a in self.values:
            a.setflags(write=False)

    def function(self, q: CubeId) -> HaarFunction:
        if q.gen >= self.depth:
            raise ValueError(f"depth overflow: no function at generation {q.gen}")
        return HaarFunction(q, self.values[q.gen][q.coords])

    def active(self, k: int) -> np.ndarray:
        """Mask of cubes in the support family at generation k."""
        return np.any(self.values[k] != 0, axis=-1)

    def level_norms(self, mu: MeasureTree, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(L1, squared L2, Linf) for every function of generation k."""
        masses = mu.children_levels(k)
        v = np.abs(self.values[k])
        l1 = np.sum(v * masses, axis=-1)
        l2sq = np.sum(v * v * masses, axis=-1)
        linf = np.max(np.where(masses >= TINY, v, 0.0), axis=-1)
        return l1, l2sq, linf

    def level_integrals(self, mu: MeasureTree, k: int) -> np.ndarray:
        return np.sum(self.values[k] * mu.children_levels(k), axis=-1)


# ---------------------------------------------------------------- building blocks


def _two_block(masses: np.ndarray, lower: Sequence[int], upper: Sequence[int]) -> np.ndarray:
    """Normalized two-value function: +sqrt(m)/mu(E-) on ``lower``, -sqrt(m)/mu(E+) on ``upper``."""
    lo = masses[..., list(lower)].sum(axis=-1)
    hi = masses[..., list(upper)].sum(axis=-1)
    ok = (lo >= TINY) & (hi >= TINY)
    m = _blocks.safe_divide(lo * hi, lo + hi)
    root_m = np.sqrt(m)
    out = np.zeros(masses.shape)
    out[..., list(lower)] = np.where(ok, _blocks.safe_divide(root_m, lo), 0.0)[..., None]
    out[..., list(upper)] = np.where(ok, -_blocks.safe_divide(root_m, hi), 0.0)[..., None]
    return np.where(masses >= TINY, out, 0.0)


def wilson_partitions(dim: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Halving tree on the child enumeration: (lower half, upper half) per node, level by level."""
    n = 1 << dim
    parts = []
    size = n
    while size >= 2:
        for start in range(0, n, size):
            half = size // 2
            parts.append((tuple(range(start, start + half)), tuple(range(start + half, start + size))))
        size //= 2
    return parts


def mitrea_partitions(dim: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(child j, children j+1..end) for j = 0..2^d-2."""
    n = 1 << dim
    return [((j,), tuple(range(j + 1, n))) for j in range(n - 1)]


def tensor_epsilons(dim: int) -> list[tuple[int, ...]]:
    return [eps for eps in product((0, 1), repeat=dim) if any(eps)]


def _select(candidates: np.ndarray, selector: Selector, k: int, dim: int) -> np.ndarray:
    """candidates: (F,) + (2**k,)*d + (2**d,). Pick one function per cube."""
    count = candidates.shape[0]
    if selector is None:
        selector = 0
    if isinstance(selector, (int, np.integer)):
        if not 0 <= selector < count:
            raise ValueError(f"selector {selector} out of range 0..{count - 1}")
        return candidates[int(selector)]
    if callable(selector):
        side = 1 << k
        picks = np.zeros((side,) * dim, dtype=int)
        for coords in np.ndindex(*picks.shape):
            picks[coords] = int(selector(CubeId(dim, k, coords)))
    else:
        picks = np.asarray(selector[k], dtype=int)
    if np.any((picks < 0) | (picks >= count)):
        raise ValueError("selector out of range")
    idx = picks[None, ..., None]
    return np.take_along_axis(candidates, np.broadcast_to(idx, (1,) + candidates.shape[1:]), axis=0)[0]


def _partition_levels(mu: MeasureTree, parts: list, k: int) -> np.ndarray:
    masses = mu.children_levels(k)
    return np.stack([_two_block(masses, lo, hi) for lo, hi in parts])


def _from_partitions(mu: MeasureTree, parts: list, selector: Selector, name: str) -> HaarSystem:
    vals = tuple(_select(_partition_levels(mu, parts, k), selector, k, mu.dim) for k in range(mu.depth))
    return HaarSystem(mu.dim, mu.depth, vals, True, name, selector)


def _basis_at(mu: MeasureTree, parts: list, q: CubeId) -> list[HaarFunction]:
    masses = mu.child_masses(q)
    return [HaarFunction(q, _two_block(masses, lo, hi)) for lo, hi in parts]


# ---------------------------------------------------------------- builders


def canonical_1d(mu: MeasureTree) -> HaarSystem:
    """h_I = sqrt(m(I)) (1_{I-}/mu(I-) - 1_{I+}/mu(I+))."""
    if mu.dim != 1:
        raise ValueError("canonical system is one-dimensional")
    vals = tuple(_two_block(mu.children_levels(k), (0,), (1,)) for k in range(mu.depth))
    return HaarSystem(1, mu.depth, vals, True, "canonical1d")


def wilson(mu: MeasureTree, selector: Selector = 0) -> HaarSystem:
    return _from_partitions(mu, wilson_partitions(mu.dim), selector, "wilson")


def wilson_basis(mu: MeasureTree, q: CubeId) -> list[HaarFunction]:
    return _basis_at(mu, wilson_partitions(mu.dim), q)


def mitrea(mu: MeasureTree, selector: Selector = 0) -> HaarSystem:
    return _from_partitions(mu, mitrea_partitions(mu.dim), selector, "mitrea")


def mitrea_basis(mu: MeasureTree, q: CubeId) -> list[HaarFunction]:
    return _basis_at(mu, mitrea_partitions(mu.dim), q)


def wilson_family(mu: MeasureTree) -> list[HaarSystem]:
    """All constant-selector Wilson systems; per-cube maxima over this list range over every selector."""
    return [wilson(mu, j) for j in range((1 << mu.dim) - 1)]


def _tensor_level(factors: Sequence[MeasureTree], k: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    ones, haars = [], []
    for f in factors:
        kids = f.children_levels(k)  # (2**k, 2)
        par = f.level(k)
        inv = _blocks.safe_divide(1.0, np.sqrt(par))
        ones.append(np.repeat(inv[:, None], 2, axis=1))
        haars.append(_two_block(kids, (0,), (1,)))
    return ones, haars


def tensor(mu: MeasureTree, epsilon: Selector = None, factors: Sequence[MeasureTree] | None = None) -> HaarSystem:
    """Products of one-dimensional Haar functions (eps_j = 1) and normalized indicators (eps_j = 0).

    ``epsilon`` is an index into :func:`tensor_epsilons`, a 0/1 tuple, or a
    per-cube callable returning either.
    """
    if factors is None:
        factors = product_factors(mu)
        if factors is None:
            raise ValueError("tensor systems need a product measure")
    factors = list(factors)
    if len(factors) != mu.dim or any(f.depth != mu.depth for f in factors):
        raise ValueError("factors do not match the measure")
    eps_list = tensor_epsilons(mu.dim)

    def as_index(e: Any) -> int:
        if isinstance(e, (tuple, list)):
            return eps_list.index(tuple(int(x) for x in e))
        return int(e)

    if epsilon is None:
        sel: Selector = len(eps_list) - 1
    elif callable(epsilon):
        sel = lambda q: as_index(epsilon(q))  # noqa: E731
    elif isinstance(epsilon, (tuple, list)) and len(epsilon) == mu.dim and all(x in (0, 1) for x in epsilon):
        sel = as_index(epsilon)
    else:
        sel = epsilon
    vals = []
    for k in range(mu.depth):
        ones, haars = _tensor_level(factors, k)
        side = 1 << k
        cands = []
        for eps in eps_list:
            acc = None
            for j, e in enumerate(eps):
                piece = haars[j] if e else ones[j]  # (side, 2)
                acc = piece if acc is None else np.multiply.outer(acc, piece)
            # axes now (x1, b1, x2, b2, ...): move bits last
            shaped = acc.reshape(sum(((side, 2) for _ in range(mu.dim)), ()))
            order = tuple(range(0, 2 * mu.dim, 2)) + tuple(range(1, 2 * mu.dim, 2))
            cands.append(shaped.transpose(order).reshape((side,) * mu.dim + (1 << mu.dim,)))
        chosen = _select(np.stack(cands), sel, k, mu.dim)
        vals.append(np.where(mu.children_levels(k) >= TINY, chosen, 0.0))
    return HaarSystem(mu.dim, mu.depth, tuple(vals), True, "tensor", epsilon)


def noncancellative_indicator(mu: MeasureTree) -> HaarSystem:
    """1_Q / sqrt(mu(Q)) on every positive-mass cube."""
    vals = []
    for k in range(mu.depth):
        inv = _blocks.safe_divide(1.0, np.sqrt(mu.level(k)))
        masses = mu.children_levels(k)
        vals.append(np.where(masses >= TINY, inv[..., None], 0.0))
    return HaarSystem(mu.dim, mu.depth, tuple(vals), False, "indicator")


def custom_system(
    mu: MeasureTree,
    values: Mapping[CubeId | str, Sequence[float]],
    cancellative: bool = True,
    validate: bool = True,
) -> HaarSystem:
    """System with explicitly supplied child values; missing cubes get the zero function."""
    arrays = [np.zeros((1 << k,) * mu.dim + (1 << mu.dim,)) for k in range(mu.depth)]
    for key, vals in values.items():
        q = CubeId.parse(key) if isinstance(key, str) else key
        if q.dim != mu.dim or q.gen >= mu.depth:
            raise ValueError(f"cube {q} outside the tree")
        v = np.asarray(vals, dtype=float)
        if v.shape != (1 << mu.dim,):
            raise ValueError(f"{q}: need {1 << mu.dim} child values")
        arrays[q.gen][q.coords] = np.where(mu.child_masses(q) >= TINY, v, 0.0)
    system = HaarSystem(mu.dim, mu.depth, tuple(arrays), cancellative, "custom")
    if validate:
        validate_system(system, mu)
    return system


def r2_nonstandard_values(K: int) -> dict[CubeId, list[float]]:
    """Child values of the non-standard plane system on the blocks [k, k+1)^2."""
    from .measure import r2_block_cube

    out = {}
    for k in range(2, K + 1):
        c = float(np.sqrt(k * k / (2.0 * (k * k - 2))))
        out[r2_block_cube(k, K)] = [k / 2, -k / 2, c, -c]
    return out


def validate_system(system: HaarSystem, mu: MeasureTree) -> None:
    """Raise :class:`HaarValidationError` at the first cube breaking normalization or cancellation."""
    for k in range(system.depth):
        l1, l2sq, linf = system.level_norms(mu, k)
        active = system.active(k)
        bad_norm = active & (np.abs(np.sqrt(l2sq) - 1.0) > NORM_TOL)
        if np.any(bad_norm):
            coords = tuple(int(c) for c in np.argwhere(bad_norm)[0])
            raise HaarValidationError(CubeId(system.dim, k, coords), f"L2 norm {np.sqrt(l2sq[coords]):.12g} != 1")
        if system.cancellative:
            mean = np.abs(system.level_integrals(mu, k))
            bad_mean = active & (mean > MEAN_TOL * linf * mu.level(k) + TINY)
            if np.any(bad_mean):
                coords = tuple(int(c) for c in np.argwhere(bad_mean)[0])
                raise HaarValidationError(CubeId(system.dim, k, coords), f"integral {mean[coords]:.3g} is not zero")


# ---------------------------------------------------------------- system quantities


def standardness(system: HaarSystem, mu: MeasureTree, upto_gen: int | None = None) -> float:
    """max ||phi_Q||_1 ||phi_Q||_inf over the support family."""
    top = system.depth - 1 if upto_gen is None else min(upto_gen, system.depth - 1)
    best = 0.0
    for k in range(top + 1):
        l1, _, linf = system.level_norms(mu, k)
        best = max(best, float(np.max(l1 * linf)))
    return best


def two_value_m(phi: HaarFunction, mu: MeasureTree) -> float:
    """m_Phi(Q) = mu(E+) mu(E-) / mu(E+ u E-) for the sign sets of a two-value function."""
    masses = mu.child_masses(phi.cube)
    plus = float(masses[phi.child_values > 0].sum())
    minus = float(masses[phi.child_values < 0].sum())
    if plus < TINY or minus < TINY:
        return 0.0
    return plus * minus / (plus + minus)


def _family(x: HaarSystem | Sequence[HaarSystem]) -> list[HaarSystem]:
    return [x] if isinstance(x, HaarSystem) else list(x)


def _max_norm_level(systems: list[HaarSystem], mu: MeasureTree, k: int, which: str) -> np.ndarray:
    best = None
    for s in systems:
        l1, _, linf = s.level_norms(mu, k)
        cur = linf if which == "inf" else l1
        best = cur if best is None else np.maximum(best, cur)
    return best


def xi(
    phi: HaarSystem | Sequence[HaarSystem],
    psi: HaarSystem | Sequence[HaarSystem],
    r: int,
    s: int,
    mu: MeasureTree,
    upto_gen: int | None = None,
) -> float:
    """sup over Q and R in D_r(Q), S in D_s(Q) of ||phi_R||_inf ||psi_S||_1.

    Passing a list of systems maximizes per cube over the list, which covers
    every per-cube selector drawn from those systems.
    """
    phis, psis = _family(phi), _family(psi)
    depth = min(x.depth for x in phis + psis)
    top = depth - 1 if upto_gen is None else min(upto_gen, depth - 1)
    best = 0.0
    for g in range(0, top - max(r, s) + 1):
        rin = _blocks.block_max(_max_norm_level(phis, mu, g + r, "inf"), r)
        sl1 = _blocks.block_max(_max_norm_level(psis, mu, g + s, "one"), s)
        best = max(best, float(np.max(rin * sl1)))
    return best


# ---------------------------------------------------------------- JSON


def system_from_json(spec: Mapping[str, Any] | str, mu: MeasureTree) -> HaarSystem:
    if isinstance(spec, str):
        spec = {"builder": spec}
    builder = spec.get("builder", "canonical1d")
    selector = spec.get("selector")
    if builder == "canonical1d":
        return canonical_1d(mu)
    if builder == "wilson":
        return wilson(mu, 0 if selector is None else selector)
    if builder == "mitrea":
        return mitrea(mu, 0 if selector is None else selector)
    if builder == "tensor":
        return tensor(mu, tuple(selector) if isinstance(selector, list) else selector)
    if builder == "indicator":
        return noncancellative_indicator(mu)
    if builder == "custom":
        return custom_system(mu, spec["values"], bool(spec.get("cancellative", True)))
    if builder == "r2_nonstandard":
        return custom_system(mu, r2_nonstandard_values(int(spec["K"])))
    raise ValueError(f"unknown Haar builder {builder!r}")
