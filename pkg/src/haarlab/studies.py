"""Study tables shared by the command line and the acceptance suite.

Each function returns plain rows (lists of dicts) so the caller decides how
to serialize or assert on them.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from .czd import decompose, verify
from .func import CoefficientSequence, SimpleFunction, carleson_norm, lp_norm, weak_l1_norm
from .grid import CubeId, child
from .haar import canonical_1d, custom_system, r2_nonstandard_values, standardness
from .measure import (
    MeasureTree,
    SplitSequenceSpec,
    build_lebesgue,
    build_r2_nonstandard,
    build_split_measure,
    chain_cube,
    chain_sibling,
    diagnostics,
    m_value,
    r2_block_cube,
)
from .ops import (
    Operator,
    ShiftCoefficients,
    haar_shift,
    operator_from_json,
    paraproduct,
    paraproduct_adjoint,
    square_function,
    weak11_estimate,
)

SPLIT_STUDIES = {"ex_a": "formula_a", "ex_b": "formula_b", "ex_c": "formula_c", "ex_d": "formula_d"}

STUDY_NOTES = {
    "ex_a": "split measure with b_k = 1/k: m-equilibrated, not doubling",
    "ex_b": "split measure with b_k = 2^(-k^2): doubling fails, m-increasing only",
    "ex_c": "split measure with triangular-block b_k: m-decreasing only",
    "ex_d": "split measure with alternating b_k: linear growth, neither m-monotone",
    "r2_nonstandard": "plane measure with a non-standard cancellative Haar system",
    "paraproduct": "paraproduct L2 bound against the Carleson norm, adjoint necessity pair",
    "square": "weak-type ratios of the dyadic square function on the split measures",
}


def split_measure(kind: str, depth: int = 20) -> MeasureTree:
    return build_split_measure(SplitSequenceSpec(kind, depth))


def ems_table(kind: str, depth: int = 20, kmax: int = 18) -> list[dict[str, Any]]:
    """Brute-force m-ratios along the left chain against their closed forms."""
    spec = SplitSequenceSpec(kind, depth)
    mu = build_split_measure(spec)
    rows = []
    for k in range(2, min(kmax, depth - 2) + 1):
        parent_m = m_value(mu, chain_cube(k - 1))
        brute_in = m_value(mu, chain_cube(k)) / parent_m
        brute_sib = m_value(mu, chain_sibling(k)) / parent_m
        closed_in = spec.a_at(k + 1) * spec.b_at(k + 1) / spec.b_at(k)
        closed_sib = 1.0 / (4.0 * spec.a_at(k))
        rows.append(
            {
                "k": k,
                "m_chain_ratio": brute_in,
                "closed_chain_ratio": closed_in,
                "rel_err_chain": abs(brute_in - closed_in) / abs(closed_in),
                "m_sibling_ratio": brute_sib,
                "closed_sibling_ratio": closed_sib,
                "rel_err_sibling": abs(brute_sib - closed_sib) / abs(closed_sib),
            }
        )
    return rows


def classification_rows(kind: str, depth: int = 20) -> list[dict[str, Any]]:
    mu = split_measure(kind, depth)
    return diagnostics(mu, depth - 1, t_values=(1.0,)).rows()


def multiplier_operator(mu: MeasureTree, system) -> Operator:
    coeffs = ShiftCoefficients.constant(0, 0, 1.0)
    return Operator("multiplier", lambda f: haar_shift(coeffs, system, system, f, mu), system)


def r2_table(K: int = 12, depth: int = 8) -> list[dict[str, Any]]:
    """Standardness and multiplier ratios on the non-standard plane system."""
    mu = build_r2_nonstandard(K, depth)
    system = custom_system(mu, r2_nonstandard_values(K))
    op = multiplier_operator(mu, system)
    rows = []
    for k in range(2, K + 1):
        q = r2_block_cube(k, K)
        phi = system.function(q)
        l1, _, linf = phi.norms(mu)
        first = child(q, 0)
        f = SimpleFunction.indicator(first, scale=1.0 / mu.mass(first))
        out = op.apply(f)
        ratio = weak_l1_norm(out, mu) / lp_norm(f, 1, mu)
        formula = (k / 2) * (1 / k + math.sqrt((k * k - 2) / (2 * k * k)))
        rows.append(
            {
                "k": k,
                "l1_times_linf": l1 * linf,
                "lower_bound": math.sqrt(k * k - 2) / (2 * math.sqrt(2)),
                "weak_ratio": ratio,
                "l1_ratio": lp_norm(out, 1, mu) / lp_norm(f, 1, mu),
                "formula": formula,
            }
        )
    rows.append({"k": "all", "l1_times_linf": standardness(system, mu), "lower_bound": float("nan"), "weak_ratio": float("nan"), "l1_ratio": float("nan"), "formula": float("nan")})
    return rows


def random_carleson(mu: MeasureTree, rng: np.random.Generator, density: float = 0.5) -> CoefficientSequence:
    levels = []
    for k in range(mu.depth):
        m = mu.level(k)
        vals = rng.normal(size=m.shape) * np.sqrt(m) * (rng.random(m.shape) < density)
        levels.append(np.where(m > 0, vals, 0.0))
    return CoefficientSequence(mu.dim, tuple(levels))


def random_measure(rng: np.random.Generator, dim: int, depth: int, zero_prob: float = 0.1) -> MeasureTree:
    """Leaf masses from a heavy-tailed law with some zero cells."""
    side = 1 << depth
    leaves = rng.pareto(1.0, size=(side,) * dim) + 1e-3
    leaves *= rng.random((side,) * dim) >= zero_prob
    if leaves.sum() <= 0:
        leaves.flat[0] = 1.0
    return MeasureTree.from_leaves(leaves / leaves.sum())


def random_function(rng: np.random.Generator, dim: int, resolution: int) -> SimpleFunction:
    side = 1 << resolution
    kind = rng.integers(3)
    if kind == 0:
        vals = rng.normal(size=(side,) * dim)
    elif kind == 1:
        vals = rng.standard_cauchy(size=(side,) * dim)
    else:
        vals = rng.normal(size=(side,) * dim) * (rng.random((side,) * dim) < 0.1) * 50
    return SimpleFunction(resolution, vals)


def paraproduct_l2_rows(count: int = 500, seed: int = 0) -> list[dict[str, Any]]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        dim = 1 if rng.random() < 0.7 else 2
        depth = int(rng.integers(2, 8 if dim == 1 else 5))
        mu = random_measure(rng, dim, depth)
        from .haar import wilson

        psi = canonical_1d(mu) if dim == 1 else wilson(mu, int(rng.integers(3)))
        gamma = random_carleson(mu, rng)
        f = random_function(rng, dim, depth)
        car = carleson_norm(gamma, mu)
        lhs = lp_norm(paraproduct(gamma, psi, f, mu), 2, mu)
        rhs = 2 * car * lp_norm(f, 2, mu)
        rows.append({"trial": i, "dim": dim, "depth": depth, "l2_out": lhs, "bound": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0})
    return rows


def adjoint_paraproduct_necessity(mu: MeasureTree, generations) -> list[dict[str, Any]]:
    """Weak ratio of the adjoint paraproduct on gamma = sqrt(mu(Q0)) delta_{Q0}, f = sgn(psi) 1_{Q0,inf}/mu(Q0,inf).

    Q0 ranges over the cubes of each generation with the most uneven split
    (the corner cube when it is the most uneven); the series holds the max.
    """
    psi = canonical_1d(mu)
    rows = []
    for g in generations:
        kids = mu.children_levels(g)
        par = mu.level(g)
        low = np.min(np.where(kids > 0, kids, np.inf), axis=-1)
        score = np.where(np.isfinite(low) & (psi.active(g)), par / np.where(np.isfinite(low), low, 1.0), -1.0)
        best = 0.0
        for idx in np.argsort(-score, kind="stable")[:4]:
            q = CubeId(1, g, (int(idx),))
            fn = psi.function(q)
            if fn.is_zero:
                continue
            masses = mu.child_masses(q)
            top = int(np.argmax(np.where(masses > 0, np.abs(fn.child_values), -1.0)))
            gamma = CoefficientSequence.from_dict(1, mu.depth, {q: math.sqrt(mu.mass(q))})
            f = SimpleFunction.indicator(child(q, top), scale=float(np.sign(fn.child_values[top])) / masses[top])
            out = paraproduct_adjoint(gamma, psi, f, mu)
            best = max(best, weak_l1_norm(out, mu) / lp_norm(f, 1, mu))
        rows.append({"generation": g, "ratio": best})
    return rows


def square_rows(depth: int = 20, seed: int = 0, per_generation: int = 3) -> list[dict[str, Any]]:
    rows = []
    for study, kind in SPLIT_STUDIES.items():
        mu = split_measure(kind, depth)
        op = Operator("square", lambda f, mu=mu: square_function(f, mu))
        rep = weak11_estimate(op, mu, "all", seed=seed, per_generation=per_generation)
        for g, v in sorted(rep.series.items()):
            rows.append({"measure": kind, "generation": g, "ratio_lower_bound": v})
    return rows


def hilbert_series(kind: str, which: str = "hilbert", depth: int = 20, seed: int = 0, per_generation: int = 4, battery: str = "all") -> tuple[dict[int, float], float, float]:
    """Per-generation weak ratios for H or its adjoint, plus the max ratio and the ceiling."""
    mu = split_measure(kind, depth) if kind != "lebesgue" else build_lebesgue(1, depth)
    op = operator_from_json({"op": which}, mu)
    rep = weak11_estimate(op, mu, battery, seed=seed, per_generation=per_generation)
    return rep.series, rep.max_ratio, op.ceiling


def czd_rows(count: int = 100, seed: int = 0) -> list[dict[str, Any]]:
    """Decompose and verify random (measure, f, lambda) triples."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        dim = 1 if rng.random() < 0.6 else 2
        depth = int(rng.integers(1, 10 if dim == 1 else 6))
        mu = random_measure(rng, dim, depth, zero_prob=float(rng.choice([0.0, 0.2, 0.5])))
        f = random_function(rng, dim, depth)
        root = float(np.sum(np.abs(f.values) * mu.level(depth))) / mu.total
        lam = root * float(rng.uniform(1.05, 20.0)) + 1e-12
        dec = decompose(f, lam, mu)
        rep = verify(dec, f, mu, (1, 2, 3))
        row = {"trial": i, "dim": dim, "depth": depth, "lambda": lam, "cubes": len(dec.maximal_cubes), "pass": int(rep.passed)}
        for c in rep.checks:
            row[c.name] = c.measured
        rows.append(row)
    return rows
