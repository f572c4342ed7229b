"""Three-part Calderon-Zygmund decomposition f = g + b + beta and its verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import _blocks
from .func import SimpleFunction, integral, level_averages, lp_norm
from .grid import CubeId, contains, parent
from .measure import TINY, MeasureTree

# floating slack on the inequality checks
REL_SLACK = 1e-12


class RegimeError(ValueError):
    """lambda does not exceed the average of |f| over the root."""


@dataclass(frozen=True, eq=False)
class LocalPart:
    """A function supported on ``cube``, stored by its values on that cube at some resolution."""

    cube: CubeId
    resolution: int
    values: np.ndarray

    def to_function(self) -> SimpleFunction:
        q = self.cube
        out = np.zeros((1 << self.resolution,) * q.dim)
        span = 1 << (self.resolution - q.gen)
        out[tuple(slice(c * span, (c + 1) * span) for c in q.coords)] = self.values
        return SimpleFunction(self.resolution, out)

    def masses(self, mu: MeasureTree) -> np.ndarray:
        q = self.cube
        span = 1 << (self.resolution - q.gen)
        lev = mu.level(self.resolution)
        return lev[tuple(slice(c * span, (c + 1) * span) for c in q.coords)]

    def integral(self, mu: MeasureTree) -> float:
        return float(np.sum(self.values * self.masses(mu)))

    def l1(self, mu: MeasureTree) -> float:
        return float(np.sum(np.abs(self.values) * self.masses(mu)))


@dataclass(frozen=True, eq=False)
class CZDecomposition:
    lam: float
    maximal_cubes: tuple[CubeId, ...]
    g: SimpleFunction
    g1: SimpleFunction  # f off the maximal cubes
    g2: SimpleFunction  # parent averages on the maximal cubes
    g3: SimpleFunction  # spread-out correction on the parents
    b_parts: tuple[LocalPart, ...]
    beta_parts: tuple[LocalPart, ...]
    b: SimpleFunction
    beta: SimpleFunction


def _stopping_masks(f: SimpleFunction, lam: float, mu: MeasureTree) -> list[np.ndarray]:
    """Per generation, the cubes where the stopping time fires."""
    af = f.abs()
    masks = []
    free = np.ones((1,) * f.dim, dtype=bool)
    for k in range(f.resolution + 1):
        if k:
            free = _blocks.refine(free)
        avg = level_averages(af, mu, k)
        stop = free & (avg > lam) & (mu.level(k) >= TINY)
        masks.append(stop)
        free = free & ~stop
    return masks


def maximal_cubes(f: SimpleFunction, lam: float, mu: MeasureTree) -> list[CubeId]:
    """Maximal cubes with <|f|>_Q > lambda, found top-down."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    root_avg = float(level_averages(f.abs(), mu, 0).reshape(-1)[0])
    if lam <= root_avg:
        raise RegimeError(f"lambda below global average: {lam!r} <= {root_avg!r}")
    out = []
    for k, mask in enumerate(_stopping_masks(f, lam, mu)):
        out.extend(CubeId(f.dim, k, tuple(int(c) for c in row)) for row in np.argwhere(mask))
    return out


def decompose(f: SimpleFunction, lam: float, mu: MeasureTree) -> CZDecomposition:
    cubes = maximal_cubes(f, lam, mu)
    res, d = f.resolution, f.dim
    vals = f.values
    in_omega = np.zeros(vals.shape, dtype=bool)
    g2 = np.zeros(vals.shape)
    g3 = np.zeros(vals.shape)
    b_parts, beta_parts = [], []
    b_total = np.zeros(vals.shape)
    beta_total = np.zeros(vals.shape)
    avg_cache: dict[int, np.ndarray] = {}

    def avg(k: int) -> np.ndarray:
        if k not in avg_cache:
            avg_cache[k] = level_averages(f, mu, k)
        return avg_cache[k]

    for q in cubes:
        p = parent(q)  # the root never stops, so this exists
        span_q = 1 << (res - q.gen)
        span_p = 1 << (res - p.gen)
        sq = tuple(slice(c * span_q, (c + 1) * span_q) for c in q.coords)
        sp = tuple(slice(c * span_p, (c + 1) * span_p) for c in p.coords)
        a_q = float(avg(q.gen)[q.coords])
        a_p = float(avg(p.gen)[p.coords])
        ratio = mu.mass(q) / mu.mass(p)
        in_omega[sq] = True
        g2[sq] += a_p
        g3[sp] += (a_q - a_p) * ratio
        bvals = vals[sq] - a_q
        b_parts.append(LocalPart(q, res, bvals))
        b_total[sq] += bvals
        # beta_j on the parent: (a_q - a_p)(1_Q - ratio 1_P)
        bet = np.full((span_p,) * d, -(a_q - a_p) * ratio)
        off = tuple(slice((qc - 2 * pc) * span_q, (qc - 2 * pc + 1) * span_q) for qc, pc in zip(q.coords, p.coords))
        bet[off] += a_q - a_p
        beta_parts.append(LocalPart(p, res, bet))
        beta_total[sp] += bet
    g1 = np.where(in_omega, 0.0, vals)
    g = g1 + g2 + g3
    return CZDecomposition(
        float(lam),
        tuple(cubes),
        SimpleFunction(res, g),
        SimpleFunction(res, g1),
        SimpleFunction(res, g2),
        SimpleFunction(res, g3),
        tuple(b_parts),
        tuple(beta_parts),
        SimpleFunction(res, b_total),
        SimpleFunction(res, beta_total),
    )


@dataclass(frozen=True)
class Check:
    name: str
    bound: float
    measured: float
    passed: bool

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "bound": self.bound, "measured": self.measured, "pass": self.passed}


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add_le(self, name: str, measured: float, bound: float) -> None:
        self.checks.append(Check(name, float(bound), float(measured), bool(measured <= bound * (1 + REL_SLACK) + 0.0)))

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> list[dict[str, Any]]:
        return [c.to_json() for c in self.checks]


def verify(dec: CZDecomposition, f: SimpleFunction, mu: MeasureTree, p_list: Sequence[int] = (1, 2, 3)) -> VerificationReport:
    """Check the identities and norm bounds of the decomposition."""
    if dec.g.resolution != f.resolution or dec.g.dim != f.dim:
        raise ValueError("decomposition does not match the function")
    lam = dec.lam
    rep = VerificationReport()
    f1 = lp_norm(f, 1, mu)
    finf = max(lp_norm(f, np.inf, mu), TINY)
    w = mu.level(f.resolution)
    pos = w >= TINY

    resid = np.abs(dec.g.values + dec.b.values + dec.beta.values - f.values)
    rep.add_le("sum_equals_f", float(np.max(np.where(pos, resid, 0.0))) / finf, 1e-9)

    support_ok = all(bp.cube == q for bp, q in zip(dec.b_parts, dec.maximal_cubes)) and all(
        bt.cube == parent(q) for bt, q in zip(dec.beta_parts, dec.maximal_cubes)
    )
    support_ok &= len(dec.b_parts) == len(dec.beta_parts) == len(dec.maximal_cubes)
    rep.checks.append(Check("supports", 0.0, 0.0 if support_ok else 1.0, support_ok))

    tol = 1e-12 * f1
    b_mean = max((abs(bp.integral(mu)) for bp in dec.b_parts), default=0.0)
    beta_mean = max((abs(bt.integral(mu)) for bt in dec.beta_parts), default=0.0)
    rep.checks.append(Check("b_mean_zero", tol, b_mean, b_mean <= tol))
    rep.checks.append(Check("beta_mean_zero", tol, beta_mean, beta_mean <= tol))

    rep.add_le("b_l1", sum(bp.l1(mu) for bp in dec.b_parts), 2 * f1)
    rep.add_le("beta_l1", sum(bt.l1(mu) for bt in dec.beta_parts), 4 * f1)
    rep.add_le("g_l1", lp_norm(dec.g, 1, mu), 4 * f1)
    rep.add_le("g12_linf", lp_norm(dec.g1 + dec.g2, np.inf, mu), lam)
    rep.add_le("g3_l2_squared", lp_norm(dec.g3, 2, mu) ** 2, 8 * lam * f1)
    for m in p_list:
        m = int(m)
        rep.add_le(f"g3_l{m}", lp_norm(dec.g3, m, mu) ** m, 2**m * math.factorial(m) * lam ** (m - 1) * f1)
    return rep


def trivial_regime_bound(f: SimpleFunction, lam: float, mu: MeasureTree) -> Check:
    """For lambda <= <|f|>_root: mu{M f > lambda} <= mu(root) <= ||f||_1 / lambda."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    from .ops import maximal

    mf = maximal(f, mu)
    level = float(np.sum(mu.level(f.resolution)[mf.values > lam]))
    bound = lp_norm(f, 1, mu) / lam
    return Check("weak_type_root_regime", bound, level, level <= bound * (1 + REL_SLACK))


def lemma_aux_operator(cubes: Sequence[CubeId], f: SimpleFunction, mu: MeasureTree) -> SimpleFunction:
    """sum_j (integral of |f| over Q_j) 1_{parent Q_j} / mu(parent Q_j)."""
    cubes = list(cubes)
    for q in cubes:
        if q.is_root:
            raise ValueError("the root has no parent")
    for i, a in enumerate(cubes):
        for b in cubes[i + 1 :]:
            if contains(a, b) or contains(b, a):
                raise ValueError(f"cubes {a} and {b} overlap")
    res = max([f.resolution] + [q.gen for q in cubes])
    af = f.abs().refine(res)
    w = mu.level(res)
    out = np.zeros((1 << res,) * f.dim)
    for q in cubes:
        p = parent(q)
        span_q = 1 << (res - q.gen)
        span_p = 1 << (res - p.gen)
        mass_q = float(np.sum((af.values * w)[tuple(slice(c * span_q, (c + 1) * span_q) for c in q.coords)]))
        mp = mu.mass(p)
        if mp >= TINY:
            out[tuple(slice(c * span_p, (c + 1) * span_p) for c in p.coords)] += mass_q / mp
    return SimpleFunction(res, out)


def lemma_aux_bound(cubes: Sequence[CubeId], f: SimpleFunction, mu: MeasureTree, m: int) -> float:
    """m! (sup_j <|f|>_{parent Q_j})^{m-1} times the integral of |f| over the union of the Q_j."""
    if not cubes:
        return 0.0
    af = f.abs()
    sup = max(float(level_averages(af, mu, parent(q).gen)[parent(q).coords]) for q in cubes)
    total = sum(integral(af.restrict(q), mu) for q in cubes)
    return math.factorial(m) * sup ** (m - 1) * total
