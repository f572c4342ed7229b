"""Dyadic operators and empirical weak-(1,1) probes."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterator, Mapping, Sequence

import numpy as np

from . import _blocks
from .func import (
    CoefficientSequence,
    average_pyramid,
    SimpleFunction,
    haar_coefficients,
    integral_pyramid,
    level_averages,
    lp_norm,
    synthesize,
    weak_l1_norm,
)
from .grid import CubeId
from .haar import (
    HaarSystem,
    canonical_1d,
    noncancellative_indicator,
    system_from_json,
    wilson,
    wilson_partitions,
    xi,
)
from .measure import TINY, MeasureTree

HS_C0 = 217.0
HS_C0_NONCANCELLATIVE = 220.0
PARAPRODUCT_C0 = 288.0


# ---------------------------------------------------------------- coefficients


def _local_index(q: CubeId, r: CubeId, depth: int) -> int:
    idx = 0
    for qc, rc in zip(q.coords, r.coords):
        off = rc - (qc << depth)
        if not 0 <= off < (1 << depth):
            raise ValueError(f"{r} is not a descendant of {q}")
        idx = (idx << depth) | off
    return idx


@dataclass(frozen=True, eq=False)
class ShiftCoefficients:
    """alpha^Q_{R,S} for R in D_r(Q), S in D_s(Q).

    ``block(g, d)`` returns either a scalar or an array of shape
    ``(2**g,)*d + (2**(r d), 2**(s d))``.
    """

    r: int
    s: int
    source: str
    value: float = 1.0
    seed: int | None = None
    entries: Mapping[tuple[CubeId, CubeId, CubeId], float] | None = None
    multiplier: CoefficientSequence | None = None
    transposed: bool = False

    @classmethod
    def constant(cls, r: int, s: int, c: float = 1.0) -> ShiftCoefficients:
        return cls(r, s, "constant", value=float(c))

    @classmethod
    def signs(cls, r: int, s: int, seed: int) -> ShiftCoefficients:
        return cls(r, s, "signs", seed=int(seed))

    @classmethod
    def explicit(cls, r: int, s: int, entries: Mapping[tuple[Any, Any, Any], float]) -> ShiftCoefficients:
        parsed = {}
        for key, val in entries.items():
            q, rr, ss = (CubeId.parse(x) if isinstance(x, str) else x for x in key)
            if rr.gen != q.gen + r or ss.gen != q.gen + s:
                raise ValueError(f"entry {key} does not match complexity ({r},{s})")
            parsed[(q, rr, ss)] = float(val)
        return cls(r, s, "explicit", entries=parsed)

    @classmethod
    def hilbert(cls) -> ShiftCoefficients:
        """alpha^I_{I, I-} = +1, alpha^I_{I, I+} = -1."""
        return cls(0, 1, "hilbert")

    @classmethod
    def hilbert_adjoint(cls) -> ShiftCoefficients:
        """alpha^I_{I-, I} = +1, alpha^I_{I+, I} = -1."""
        return cls(1, 0, "hilbert_adjoint")

    @classmethod
    def haar_multiplier(cls, alpha: CoefficientSequence) -> ShiftCoefficients:
        return cls(0, 0, "multiplier", multiplier=alpha)

    def adjoint(self) -> ShiftCoefficients:
        if self.source == "hilbert":
            return ShiftCoefficients.hilbert_adjoint()
        if self.source == "hilbert_adjoint":
            return ShiftCoefficients.hilbert()
        return replace(self, r=self.s, s=self.r, transposed=not self.transposed)

    def _raw(self, g: int, d: int, r: int, s: int) -> np.ndarray | float:
        side = 1 << g
        nr, ns = 1 << (r * d), 1 << (s * d)
        if self.source == "constant":
            return self.value
        if self.source == "hilbert":
            if d != 1:
                raise ValueError("the dyadic Hilbert transform is one-dimensional")
            return np.broadcast_to(np.array([[1.0, -1.0]]), (side, 1, 2))
        if self.source == "hilbert_adjoint":
            if d != 1:
                raise ValueError("the dyadic Hilbert transform is one-dimensional")
            return np.broadcast_to(np.array([[1.0], [-1.0]]), (side, 2, 1))
        if self.source == "signs":
            rng = np.random.default_rng([self.seed, g, r, s])
            return rng.choice(np.array([-1.0, 1.0]), size=(side,) * d + (nr, ns))
        if self.source == "multiplier":
            a = self.multiplier.levels[g] if g < self.multiplier.depth else np.zeros((side,) * d)
            return a[..., None, None]
        if self.source == "explicit":
            out = np.zeros((side,) * d + (nr, ns))
            for (q, rr, ss), val in self.entries.items():
                if q.gen == g:
                    out[q.coords + (_local_index(q, rr, r), _local_index(q, ss, s))] = val
            return out
        raise ValueError(f"unknown coefficient source {self.source!r}")

    def block(self, g: int, d: int) -> np.ndarray | float:
        if not self.transposed:
            return self._raw(g, d, self.r, self.s)
        raw = self._raw(g, d, self.s, self.r)
        return raw if np.isscalar(raw) else np.swapaxes(raw, -1, -2)

    def bound(self) -> float:
        """sup |alpha| over stored entries."""
        if self.source == "constant":
            return abs(self.value)
        if self.source in ("hilbert", "hilbert_adjoint", "signs"):
            return 1.0
        if self.source == "multiplier":
            return self.multiplier.sup()
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def lower_bound(self) -> float | None:
        """inf |alpha| when the source is non-degenerate by construction."""
        if self.source == "constant":
            return abs(self.value)
        if self.source in ("signs", "hilbert", "hilbert_adjoint"):
            return 1.0
        return None

    def describe(self) -> dict[str, Any]:
        return {"r": self.r, "s": self.s, "source": self.source, "value": self.value, "seed": self.seed, "transposed": self.transposed}


# ---------------------------------------------------------------- shift engine


def _depth_of(phi: HaarSystem, psi: HaarSystem, mu: MeasureTree) -> int:
    if phi.dim != mu.dim or psi.dim != mu.dim:
        raise ValueError("dimension mismatch")
    return min(phi.depth, psi.depth, mu.depth)


def _generation_range(coeffs: ShiftCoefficients, phi: HaarSystem, n: int, resolution: int) -> range:
    top = n - 1 - max(coeffs.r, coeffs.s)
    if phi.cancellative:
        top = min(top, resolution - 1 - coeffs.r)
    return range(0, top + 1)


def _shift_terms(
    coeffs: ShiftCoefficients,
    phi: HaarSystem,
    psi: HaarSystem,
    f: SimpleFunction,
    mu: MeasureTree,
    gens: Sequence[int],
    q0: CubeId | None = None,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (g, values at generation g+s+1) for the terms with gen(Q) = g."""
    d, r, s = mu.dim, coeffs.r, coeffs.s
    gens = [g for g in gens if q0 is None or g >= q0.gen]
    if not gens:
        return
    ints = integral_pyramid(f, mu, max(f.resolution, max(gens) + r + 1))
    for g in gens:
        cr = _blocks.to_blocks(haar_coefficients(f, phi, mu, g + r, ints[g + r + 1]), r)
        a = coeffs.block(g, d)
        if np.isscalar(a):
            out = np.repeat(a * cr.sum(axis=-1, keepdims=True), 1 << (s * d), axis=-1)
        else:
            out = np.einsum("...r,...rs->...s", cr, a)
        if q0 is not None:
            mask = SimpleFunction.indicator(q0, g).values
            out = out * mask[..., None]
        cs = _blocks.from_blocks(out, s)
        yield g, synthesize(cs, psi, g + s)


def _accumulate(pieces: dict[int, np.ndarray], resolution: int, dim: int) -> SimpleFunction:
    """Sum pieces given at various generations, refining coarse-to-fine once."""
    out = np.zeros((1,) * dim)
    for level in range(resolution + 1):
        if level:
            out = _blocks.refine(out)
        if level in pieces:
            out = out + pieces[level]
    return SimpleFunction(resolution, out)


def haar_shift(
    coeffs: ShiftCoefficients,
    phi: HaarSystem,
    psi: HaarSystem,
    f: SimpleFunction,
    mu: MeasureTree,
    q0: CubeId | None = None,
) -> SimpleFunction:
    """sum_Q sum_{R in D_r(Q), S in D_s(Q)} alpha^Q_{R,S} <f, phi_R> psi_S.

    Q runs over cubes with gen(Q) + max(r, s) <= N - 1. When ``q0`` is given
    the sum is restricted to Q inside q0.
    """
    n = _depth_of(phi, psi, mu)
    if f.resolution > n:
        raise ValueError(f"depth overflow: input resolution {f.resolution} exceeds {n}")
    pieces: dict[int, np.ndarray] = {}
    res = f.resolution
    for g, vals in _shift_terms(coeffs, phi, psi, f, mu, _generation_range(coeffs, phi, n, f.resolution), q0):
        lvl = g + coeffs.s + 1
        pieces[lvl] = pieces[lvl] + vals if lvl in pieces else vals
        res = max(res, lvl)
    return _accumulate(pieces, res, mu.dim)


def haar_shift_truncated(
    coeffs: ShiftCoefficients, phi: HaarSystem, psi: HaarSystem, f: SimpleFunction, mu: MeasureTree, q0: CubeId
) -> SimpleFunction:
    return haar_shift(coeffs, phi, psi, f, mu, q0=q0)


def local_l2_constant(
    coeffs: ShiftCoefficients, phi: HaarSystem, psi: HaarSystem, mu: MeasureTree, upto_gen: int | None = None
) -> float:
    """max over q0 of ||truncated shift applied to 1_{q0}||_2 / mu(q0)^(1/2).

    For R inside q0 the pairing <1_{q0}, phi_R> equals <1, phi_R>, so one
    bottom-up sweep that adds generations from the deepest upwards gives the
    truncated outputs for all q0 of a generation at once.
    """
    n = _depth_of(phi, psi, mu)
    one = SimpleFunction.constant(mu.dim, 1.0, 0)
    gens = range(0, n - max(coeffs.r, coeffs.s))
    top = n - 1 if upto_gen is None else min(upto_gen, n - 1)
    res = n
    w = mu.level(res)
    acc = np.zeros((1 << res,) * mu.dim)
    best = 0.0
    terms = dict(_shift_terms(coeffs, phi, psi, one, mu, list(gens)))
    for g in range(n - 1, -1, -1):
        if g in terms:
            acc += _blocks.refine(terms[g], res - (g + coeffs.s + 1))
        if g <= top:
            sq = _blocks.coarsen(acc * acc * w, res - g)
            best = max(best, float(np.max(_blocks.safe_divide(sq, mu.level(g)))))
    return float(np.sqrt(best))


def hilbert(f: SimpleFunction, mu: MeasureTree, system: HaarSystem | None = None) -> SimpleFunction:
    h = canonical_1d(mu) if system is None else system
    return haar_shift(ShiftCoefficients.hilbert(), h, h, f, mu)


def hilbert_adjoint(f: SimpleFunction, mu: MeasureTree, system: HaarSystem | None = None) -> SimpleFunction:
    h = canonical_1d(mu) if system is None else system
    return haar_shift(ShiftCoefficients.hilbert_adjoint(), h, h, f, mu)


def shift_l2_bound(coeffs: ShiftCoefficients, dim: int) -> float:
    """2^{(r+s)d/2} sup|alpha|."""
    return 2.0 ** ((coeffs.r + coeffs.s) * dim / 2) * coeffs.bound()


def hs_ceiling(coeffs: ShiftCoefficients, phi: HaarSystem, psi: HaarSystem, mu: MeasureTree, l2_norm: float | None = None, c0: float = HS_C0) -> float:
    """C0 (||Sh||_2 + 2^{sd} (r 2^{rd} + 1) Xi sup|alpha|), with the L2 norm replaced by its bound when not given."""
    d, r, s = mu.dim, coeffs.r, coeffs.s
    l2 = shift_l2_bound(coeffs, d) if l2_norm is None else l2_norm
    x = xi(phi, psi, r, s, mu)
    return c0 * (l2 + 2.0 ** (s * d) * (r * 2.0 ** (r * d) + 1) * x * coeffs.bound())


# ---------------------------------------------------------------- martingale structure


def maximal(f: SimpleFunction, mu: MeasureTree) -> SimpleFunction:
    """Largest average of |f| over the ancestor chain of each leaf."""
    pyramid = average_pyramid(f.abs(), mu)
    cur = pyramid[0]
    for k in range(1, f.resolution + 1):
        cur = np.maximum(_blocks.refine(cur), pyramid[k])
    return SimpleFunction(f.resolution, cur)


def expectation(f: SimpleFunction, k: int, mu: MeasureTree) -> SimpleFunction:
    if k < 0:
        raise ValueError("generation must be nonnegative")
    if k >= f.resolution:
        return f
    return SimpleFunction(f.resolution, _blocks.refine(level_averages(f, mu, k), f.resolution - k))


def difference(f: SimpleFunction, k: int, mu: MeasureTree) -> SimpleFunction:
    """D_k f = E_k f - E_{k-1} f for k >= 1."""
    if k < 1:
        raise ValueError("differences start at generation 1")
    return expectation(f, k, mu) - expectation(f, k - 1, mu)


def difference_at(f: SimpleFunction, q: CubeId, mu: MeasureTree) -> SimpleFunction:
    """D_Q f = D_{gen Q + 1} f restricted to Q."""
    return difference(f, q.gen + 1, mu).restrict(q)


def square_function(f: SimpleFunction, mu: MeasureTree) -> SimpleFunction:
    pyramid = average_pyramid(f, mu)
    total = np.zeros((1,) * f.dim)
    for k in range(1, f.resolution + 1):
        total = _blocks.refine(total) + (pyramid[k] - _blocks.refine(pyramid[k - 1])) ** 2
    return SimpleFunction(f.resolution, np.sqrt(total))


@dataclass(frozen=True, eq=False)
class MartingaleTransformSpec:
    """alpha_Q for every cube Q of generation < depth; multiplies the projection D_Q."""

    alpha: CoefficientSequence

    @classmethod
    def constant(cls, dim: int, depth: int, c: float = 1.0) -> MartingaleTransformSpec:
        return cls(CoefficientSequence(dim, tuple(np.full((1 << k,) * dim, float(c)) for k in range(depth))))

    @classmethod
    def signs(cls, dim: int, depth: int, seed: int) -> MartingaleTransformSpec:
        rng = np.random.default_rng(seed)
        return cls(CoefficientSequence(dim, tuple(rng.choice(np.array([-1.0, 1.0]), size=(1 << k,) * dim) for k in range(depth))))

    @classmethod
    def predictable(cls, dim: int, xi_k: Sequence[np.ndarray]) -> MartingaleTransformSpec:
        """From xi_k constant on generation k-1 cubes: alpha at generation k-1 is xi_k."""
        return cls(CoefficientSequence(dim, tuple(np.asarray(x, dtype=float) for x in xi_k)))


def martingale_transform(spec: MartingaleTransformSpec, f: SimpleFunction, mu: MeasureTree, method: str = "haar") -> SimpleFunction:
    """sum_Q alpha_Q D_Q f.

    ``method="haar"`` expands each D_Q in the Wilson basis of Q;
    ``method="difference"`` multiplies the differences D_k f directly.
    """
    depth = min(spec.alpha.depth, f.resolution)
    out = np.zeros((1 << f.resolution,) * f.dim)
    if method == "difference":
        for k in range(1, depth + 1):
            dk = difference(f, k, mu).values
            out += dk * _blocks.refine(spec.alpha.levels[k - 1], f.resolution - (k - 1))
        return SimpleFunction(f.resolution, out)
    if method != "haar":
        raise ValueError(f"unknown method {method!r}")
    systems = [wilson(mu, j) for j in range(len(wilson_partitions(mu.dim)))]
    for k in range(depth):
        level = np.zeros((1 << (k + 1),) * f.dim)
        for sys in systems:
            c = haar_coefficients(f, sys, mu, k) * spec.alpha.levels[k]
            level += synthesize(c, sys, k)
        out += _blocks.refine(level, f.resolution - k - 1)
    return SimpleFunction(f.resolution, out)


# ---------------------------------------------------------------- paraproducts


def paraproduct(gamma: CoefficientSequence, psi: HaarSystem, f: SimpleFunction, mu: MeasureTree) -> SimpleFunction:
    """sum_Q gamma_Q <f>_Q psi_Q."""
    gamma.check_support(mu)
    depth = min(gamma.depth, psi.depth)
    pieces = {}
    res = f.resolution
    for k in range(depth):
        if not np.any(gamma.levels[k]):
            continue
        c = gamma.levels[k] * level_averages(f, mu, k)
        pieces[k + 1] = synthesize(c, psi, k)
        res = max(res, k + 1)
    return _accumulate(pieces, res, mu.dim)


def paraproduct_adjoint(gamma: CoefficientSequence, psi: HaarSystem, f: SimpleFunction, mu: MeasureTree) -> SimpleFunction:
    """sum_Q gamma_Q <f, psi_Q> 1_Q / mu(Q)."""
    gamma.check_support(mu)
    depth = min(gamma.depth, psi.depth)
    pieces = {}
    res = f.resolution
    for k in range(depth):
        if not np.any(gamma.levels[k]):
            continue
        c = gamma.levels[k] * haar_coefficients(f, psi, mu, k)
        vals = _blocks.safe_divide(c, mu.level(k))
        if np.any(vals):
            pieces[k] = vals
            res = max(res, k)
    return _accumulate(pieces, res, mu.dim)


def paraproduct_as_shift(gamma: CoefficientSequence, psi: HaarSystem, mu: MeasureTree, adjoint: bool = False) -> tuple[ShiftCoefficients, HaarSystem, HaarSystem]:
    """Coefficients and systems writing the paraproduct as a (0,0) non-cancellative shift."""
    scaled = CoefficientSequence(mu.dim, tuple(_blocks.safe_divide(g, np.sqrt(mu.level(k))) for k, g in enumerate(gamma.levels)))
    ind = noncancellative_indicator(mu)
    coeffs = ShiftCoefficients.haar_multiplier(scaled)
    return (coeffs, psi, ind) if adjoint else (coeffs, ind, psi)


# ---------------------------------------------------------------- test functions


def adversarial_test_function(phi: HaarSystem, q: CubeId, mu: MeasureTree) -> SimpleFunction:
    """(u - <u>_Q) 1_Q with u = sgn(phi_Q) 1_{Q_inf} / mu(Q_inf), Q_inf the first child where |phi_Q| peaks."""
    fn = phi.function(q)
    if fn.is_zero:
        raise ValueError(f"{q} is not in the support family of the system")
    masses = mu.child_masses(q)
    vals = np.where(masses >= TINY, np.abs(fn.child_values), -1.0)
    top = int(np.argmax(vals))
    sign = float(np.sign(fn.child_values[top]))
    kids = -sign / mu.mass(q) * np.ones(1 << q.dim)
    kids[top] += sign / masses[top]
    kids = np.where(masses >= TINY, kids, 0.0)
    out = np.zeros((1 << (q.gen + 1),) * q.dim)
    out[tuple(slice(2 * c, 2 * c + 2) for c in q.coords)] = kids.reshape((2,) * q.dim)
    return SimpleFunction(q.gen + 1, out)


# ---------------------------------------------------------------- weak-type probes


@dataclass(frozen=True, eq=False)
class Operator:
    name: str
    apply: Callable[[SimpleFunction], SimpleFunction]
    test_system: HaarSystem | None = None
    ceiling: float | None = None
    meta: dict[str, Any] = field(default_factory=dict)


@dataclass
class WeakReport:
    """Empirical lower bounds for the weak-(1,1) norm."""

    operator: str
    battery: str
    seed: int | None
    max_ratio: float
    series: dict[int, float]
    witness_family: str
    witness_cube: str
    witness: SimpleFunction | None
    ceiling: float | None = None
    tested: int = 0

    def rows(self) -> list[dict[str, Any]]:
        return [
            {"generation": g, "ratio_lower_bound": v, "ceiling": self.ceiling if self.ceiling is not None else float("nan")}
            for g, v in sorted(self.series.items())
        ]


BATTERIES = ("haar_family", "adversarial_family", "normalized_indicators", "random_signs", "all")


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("HAARLAB_THREADS")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


def _pick_cubes(mu: MeasureTree, g: int, mask: np.ndarray, limit: int, rng: np.random.Generator) -> list[CubeId]:
    """All admissible cubes of a generation, or the most unevenly split ones plus a seeded sample."""
    coords = np.argwhere(mask)
    if len(coords) <= limit:
        chosen = coords
    else:
        if g < mu.depth:
            kids = mu.children_levels(g)
            low = np.min(np.where(kids >= TINY, kids, np.inf), axis=-1)
            score = _blocks.safe_divide(mu.level(g), np.where(np.isfinite(low), low, 0.0))
        else:
            score = np.ones(mask.shape)
        s = score[tuple(coords.T)]
        order = np.lexsort((np.arange(len(s)), -s))
        keep = list(order[: limit // 2 + limit % 2])
        rest = np.setdiff1d(np.arange(len(s)), keep)
        keep += list(rng.choice(rest, size=min(len(rest), limit // 2), replace=False))
        chosen = coords[np.sort(np.array(keep, dtype=int))]
    return [CubeId(mu.dim, g, tuple(int(c) for c in row)) for row in chosen]


def battery_functions(
    battery: str,
    mu: MeasureTree,
    system: HaarSystem | None,
    seed: int = 0,
    per_generation: int = 8,
    generations: Sequence[int] | None = None,
) -> list[tuple[str, CubeId, SimpleFunction]]:
    """(family, test cube, function) triples in a fixed order."""
    if battery not in BATTERIES:
        raise ValueError(f"unknown battery {battery!r}")
    fams = ["haar_family", "adversarial_family", "normalized_indicators", "random_signs"] if battery == "all" else [battery]
    if system is None and any(f in fams for f in ("haar_family", "adversarial_family")):
        system = canonical_1d(mu) if mu.dim == 1 else wilson(mu, 0)
    rng = np.random.default_rng(seed)
    gens = range(mu.depth + 1) if generations is None else generations
    out = []
    for fam in fams:
        for g in gens:
            if fam in ("haar_family", "adversarial_family"):
                if g >= system.depth:
                    continue
                cubes = _pick_cubes(mu, g, system.active(g), per_generation, rng)
                for q in cubes:
                    if fam == "haar_family":
                        out.append((fam, q, SimpleFunction.from_haar(system.function(q))))
                    else:
                        out.append((fam, q, adversarial_test_function(system, q, mu)))
            elif fam == "normalized_indicators":
                for q in _pick_cubes(mu, g, mu.level(g) >= TINY, per_generation, rng):
                    out.append((fam, q, SimpleFunction.indicator(q, scale=1.0 / mu.mass(q))))
            else:
                res = min(mu.depth, g + 3)
                for q in _pick_cubes(mu, g, mu.level(g) >= TINY, per_generation, rng):
                    signs = rng.choice(np.array([-1.0, 1.0]), size=(1 << (res - g),) * mu.dim)
                    vals = np.zeros((1 << res,) * mu.dim)
                    span = 1 << (res - g)
                    vals[tuple(slice(c * span, (c + 1) * span) for c in q.coords)] = signs
                    out.append((fam, q, SimpleFunction(res, vals)))
    return out


def weak_ratio(op: Operator, f: SimpleFunction, mu: MeasureTree) -> float:
    n1 = lp_norm(f, 1, mu)
    if n1 <= 0:
        return 0.0
    return weak_l1_norm(op.apply(f), mu) / n1


def weak11_estimate(
    op: Operator,
    mu: MeasureTree,
    battery: str = "all",
    seed: int = 0,
    per_generation: int = 8,
    generations: Sequence[int] | None = None,
    threads: int | None = None,
) -> WeakReport:
    """Max of ||Tf||_{1,inf} / ||f||_1 over a battery, with the series per test-cube generation.

    The values are lower bounds for the operator norm.
    """
    tests = battery_functions(battery, mu, op.test_system, seed, per_generation, generations)
    workers = threads_from_env() if threads is None else threads
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            ratios = list(ex.map(lambda t: weak_ratio(op, t[2], mu), tests))
    else:
        ratios = [weak_ratio(op, t[2], mu) for t in tests]
    series: dict[int, float] = {}
    best, arg = -1.0, None
    for (fam, q, f), ratio in zip(tests, ratios):
        series[q.gen] = max(series.get(q.gen, 0.0), ratio)
        if ratio > best:
            best, arg = ratio, (fam, q, f)
    if arg is None:
        return WeakReport(op.name, battery, seed, 0.0, {}, "", "", None, op.ceiling, 0)
    return WeakReport(op.name, battery, seed, best, series, arg[0], str(arg[1]), arg[2], op.ceiling, len(tests))


# ---------------------------------------------------------------- JSON handles


def _coefficients_from_json(spec: Mapping[str, Any], r: int, s: int, mu: MeasureTree) -> ShiftCoefficients:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ShiftCoefficients.constant(r, s, float(spec.get("value", 1.0)))
    if kind == "signs":
        return ShiftCoefficients.signs(r, s, int(spec.get("seed", 0)))
    if kind == "explicit":
        entries = {tuple(k.split("|")): v for k, v in spec["entries"].items()}
        return ShiftCoefficients.explicit(r, s, entries)
    if kind == "multiplier":
        alpha = CoefficientSequence.from_dict(mu.dim, mu.depth, spec.get("entries", {}))
        return ShiftCoefficients.haar_multiplier(alpha)
    raise ValueError(f"unknown coefficient kind {kind!r}")


def operator_from_json(spec: Mapping[str, Any], mu: MeasureTree, seed: int = 0) -> Operator:
    """Operator handle from ``{"op": ..., "system": ..., ...}``."""
    kind = spec.get("op")
    default_sys = "canonical1d" if mu.dim == 1 else "wilson"
    if kind in ("hilbert", "hilbert_adjoint"):
        h = canonical_1d(mu)
        coeffs = ShiftCoefficients.hilbert() if kind == "hilbert" else ShiftCoefficients.hilbert_adjoint()
        ceil = hs_ceiling(coeffs, h, h, mu, l2_norm=np.sqrt(2.0))
        return Operator(kind, lambda f: haar_shift(coeffs, h, h, f, mu), h, ceil)
    if kind in ("shift", "multiplier"):
        phi = system_from_json(spec.get("system", default_sys), mu)
        psi = system_from_json(spec.get("target_system", spec.get("system", default_sys)), mu)
        r, s = (0, 0) if kind == "multiplier" else (int(spec.get("r", 0)), int(spec.get("s", 0)))
        cspec = dict(spec.get("coefficients", {"kind": "constant", "value": 1.0}))
        if cspec.get("kind") == "signs" and "seed" not in cspec:
            cspec["seed"] = seed
        coeffs = _coefficients_from_json(cspec, r, s, mu)
        ceil = hs_ceiling(coeffs, phi, psi, mu) if phi.cancellative and psi.cancellative else None
        return Operator(kind, lambda f: haar_shift(coeffs, phi, psi, f, mu), phi, ceil, {"coefficients": coeffs.describe()})
    if kind in ("paraproduct", "paraproduct_adjoint"):
        psi = system_from_json(spec.get("system", default_sys), mu)
        gamma = CoefficientSequence.from_dict(mu.dim, mu.depth, spec.get("gamma", {}))
        fn = paraproduct if kind == "paraproduct" else paraproduct_adjoint
        return Operator(kind, lambda f: fn(gamma, psi, f, mu), psi)
    if kind == "square":
        return Operator(kind, lambda f: square_function(f, mu))
    if kind == "maximal":
        return Operator(kind, lambda f: maximal(f, mu))
    if kind == "martingale_transform":
        mspec = MartingaleTransformSpec.signs(mu.dim, mu.depth, int(spec.get("seed", seed)))
        return Operator(kind, lambda f: martingale_transform(mspec, f, mu))
    raise ValueError(f"unknown operator {kind!r}")
