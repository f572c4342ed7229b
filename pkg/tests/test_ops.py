from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from haarlab.func import (
    CoefficientSequence,
    SimpleFunction,
    haar_coefficients,
    integral,
    lp_norm,
    pairing,
)
from haarlab.grid import CubeId, child, cubes_at, parent, sibling_sign
from haarlab.haar import canonical_1d, noncancellative_indicator, wilson
from haarlab.measure import MeasureTree, build_lebesgue, build_split_measure, SplitSequenceSpec
from haarlab.ops import (
    HS_C0,
    MartingaleTransformSpec,
    Operator,
    ShiftCoefficients,
    adversarial_test_function,
    battery_functions,
    difference,
    expectation,
    haar_shift,
    hilbert,
    hilbert_adjoint,
    hs_ceiling,
    local_l2_constant,
    martingale_transform,
    maximal,
    operator_from_json,
    paraproduct,
    paraproduct_adjoint,
    paraproduct_as_shift,
    shift_l2_bound,
    square_function,
    threads_from_env,
    weak11_estimate,
)

mass_values = st.one_of(st.just(0.0), st.floats(1e-6, 10))
masses16 = arrays(float, 16, elements=mass_values)
values16 = arrays(float, 16, elements=st.floats(-50, 50))


def rel_close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@pytest.mark.parametrize("rs", [(0, 0), (0, 1), (1, 0), (1, 2), (2, 0)])
def test_shift_adjointness(rs, rng):
    r, s = rs
    mu = MeasureTree.from_leaves(rng.random(64) * (rng.random(64) > 0.1))
    h = canonical_1d(mu)
    c = ShiftCoefficients.signs(r, s, seed=7)
    f = SimpleFunction(6, rng.normal(size=64))
    g = SimpleFunction(6, rng.normal(size=64))
    lhs = pairing(haar_shift(c, h, h, f, mu).refine(6), g, mu)
    rhs = pairing(f, haar_shift(c.adjoint(), h, h, g, mu).refine(6), mu)
    assert rel_close(lhs, rhs, 1e-10)


def test_shift_adjointness_2d(rng):
    mu = MeasureTree.from_leaves(rng.random((8, 8)))
    phi, psi = wilson(mu, 0), wilson(mu, 2)
    c = ShiftCoefficients.signs(1, 0, seed=3)
    f = SimpleFunction(3, rng.normal(size=(8, 8)))
    g = SimpleFunction(3, rng.normal(size=(8, 8)))
    lhs = pairing(haar_shift(c, phi, psi, f, mu).refine(3), g, mu)
    rhs = pairing(f, haar_shift(c.adjoint(), psi, phi, g, mu).refine(3), mu)
    assert rel_close(lhs, rhs, 1e-10)


def test_hilbert_on_haar_functions(rng):
    mu = MeasureTree.from_leaves(rng.random(32) + 0.01)
    h = canonical_1d(mu)
    n = mu.depth
    for k in range(n - 1):
        for q in cubes_at(1, k):
            f = SimpleFunction.from_haar(h.function(q))
            out = hilbert(f, mu)
            c = haar_coefficients(out.refine(n), h, mu, k + 1)
            expect = np.zeros(1 << (k + 1))
            expect[child(q, 0).coords] = 1.0
            expect[child(q, 1).coords] = -1.0
            np.testing.assert_allclose(c, expect, atol=1e-12)
    for k in range(1, n):
        for q in cubes_at(1, k):
            f = SimpleFunction.from_haar(h.function(q))
            out = hilbert_adjoint(f, mu).refine(n)
            c = haar_coefficients(out, h, mu, k - 1)
            expect = np.zeros(1 << (k - 1))
            expect[parent(q).coords] = sibling_sign(q)
            np.testing.assert_allclose(c, expect, atol=1e-12)


def test_explicit_coefficients_match_constant():
    mu = build_lebesgue(1, 4)
    h = canonical_1d(mu)
    entries = {}
    for k in range(3):
        for q in cubes_at(1, k):
            entries[(q, q, child(q, 0))] = 2.0
            entries[(q, q, child(q, 1))] = 2.0
    e = ShiftCoefficients.explicit(0, 1, entries)
    c = ShiftCoefficients.constant(0, 1, 2.0)
    f = SimpleFunction(4, np.arange(16.0))
    np.testing.assert_allclose(haar_shift(e, h, h, f, mu).values, haar_shift(c, h, h, f, mu).values)
    with pytest.raises(ValueError):
        ShiftCoefficients.explicit(0, 1, {("0:0", "0:0", "0:0"): 1.0})


@given(masses16, values16)
def test_identity_multiplier_removes_mean(masses, values):
    mu = MeasureTree.from_leaves(masses)
    h = canonical_1d(mu)
    f = SimpleFunction(4, values)
    out = haar_shift(ShiftCoefficients.constant(0, 0, 1.0), h, h, f, mu).refine(4)
    # on cubes where both halves have mass the expansion is complete
    mean = integral(f, mu) / mu.total if mu.total > 0 else 0.0
    resid = np.abs(out.values + mean - values) * (masses > 0)
    diff = lp_norm(SimpleFunction(4, resid), 2, mu)
    assert diff <= 1e-8 * max(1.0, lp_norm(f, 2, mu)) or np.any(masses == 0)


@given(masses16, values16, st.integers(0, 2**32 - 1))
def test_martingale_transform_paths_agree(masses, values, seed):
    mu = MeasureTree.from_leaves(masses)
    spec = MartingaleTransformSpec.signs(1, 4, seed)
    f = SimpleFunction(4, values)
    a = martingale_transform(spec, f, mu, "haar")
    b = martingale_transform(spec, f, mu, "difference")
    w = masses > 0
    assert np.max(np.abs(a.values - b.values) * w) <= 1e-12 * max(1.0, np.max(np.abs(values)))


def test_martingale_transform_2d_and_errors(rng):
    mu = MeasureTree.from_leaves(rng.random((4, 4)))
    spec = MartingaleTransformSpec.signs(2, 2, 1)
    f = SimpleFunction(2, rng.normal(size=(4, 4)))
    np.testing.assert_allclose(martingale_transform(spec, f, mu).values, martingale_transform(spec, f, mu, "difference").values, atol=1e-10)
    with pytest.raises(ValueError):
        martingale_transform(spec, f, mu, "nope")


def test_expectation_and_difference():
    mu = build_lebesgue(1, 2)
    f = SimpleFunction(2, np.array([1.0, 3.0, 5.0, 7.0]))
    assert expectation(f, 1, mu).values.tolist() == [2.0, 2.0, 6.0, 6.0]
    assert difference(f, 1, mu).values.tolist() == [-2.0, -2.0, 2.0, 2.0]
    with pytest.raises(ValueError):
        difference(f, 0, mu)


@given(masses16, values16)
def test_maximal_weak_type_exact(masses, values):
    mu = MeasureTree.from_leaves(masses)
    f = SimpleFunction(4, values)
    mf = maximal(f, mu)
    n1 = lp_norm(f, 1, mu)
    assert np.all(mf.values >= np.abs(values) * (masses > 0) - 1e-9)
    for lam in np.unique(mf.values):
        if lam > 0:
            level = float(np.sum(masses[mf.values > lam]))
            assert lam * level <= n1 * (1 + 1e-12) + 1e-12


@given(masses16, values16)
def test_square_function_l2_identity(masses, values):
    mu = MeasureTree.from_leaves(masses)
    f = SimpleFunction(4, values)
    sf = square_function(f, mu)
    centered = f - expectation(f, 0, mu)
    assert lp_norm(sf, 2, mu) ** 2 == pytest.approx(lp_norm(centered, 2, mu) ** 2, rel=1e-9, abs=1e-9)


@given(masses16, values16, st.integers(0, 2**32 - 1))
def test_paraproduct_adjointness_and_shift_form(masses, values, seed):
    mu = MeasureTree.from_leaves(masses)
    rng = np.random.default_rng(seed)
    psi = canonical_1d(mu)
    gamma = CoefficientSequence(1, tuple(np.where(mu.level(k) > 0, rng.normal(size=1 << k), 0.0) for k in range(4)))
    f = SimpleFunction(4, values)
    g = SimpleFunction(4, rng.normal(size=16))
    lhs = pairing(paraproduct(gamma, psi, f, mu).refine(4), g, mu)
    rhs = pairing(f, paraproduct_adjoint(gamma, psi, g, mu).refine(4), mu)
    assert rel_close(lhs, rhs, 1e-10)
    coeffs, phi, target = paraproduct_as_shift(gamma, psi, mu)
    via_shift = haar_shift(coeffs, phi, target, f, mu).refine(4)
    np.testing.assert_allclose(via_shift.values, paraproduct(gamma, psi, f, mu).refine(4).values, atol=1e-9 * max(1.0, np.abs(values).max()))


def test_local_l2_constant_within_bound(rng):
    mu = MeasureTree.from_leaves(rng.random(64) + 0.01)
    h = canonical_1d(mu)
    c = ShiftCoefficients.signs(0, 1, seed=2)
    assert 0 < local_l2_constant(c, h, h, mu) <= shift_l2_bound(c, 1) + 1e-12
    # brute force for a few q0
    for q0 in cubes_at(1, 2):
        out = haar_shift(c, h, h, SimpleFunction.indicator(q0, 6), mu, q0=q0).refine(6)
        assert lp_norm(out, 2, mu) / math.sqrt(mu.mass(q0)) <= local_l2_constant(c, h, h, mu) + 1e-12


def test_hs_ceiling_lebesgue_hilbert():
    mu = build_lebesgue(1, 8)
    h = canonical_1d(mu)
    # Xi(0,1) = 1/sqrt2 on Lebesgue, so C0 (sqrt2 + 2 * 1/sqrt2)
    assert hs_ceiling(ShiftCoefficients.hilbert(), h, h, mu, l2_norm=math.sqrt(2)) == pytest.approx(HS_C0 * 2 * math.sqrt(2))


def test_adversarial_test_function_mean_zero(rng):
    mu = MeasureTree.from_leaves(rng.random(16) + 0.01)
    h = canonical_1d(mu)
    q = CubeId(1, 2, (1,))
    f = adversarial_test_function(h, q, mu)
    assert integral(f, mu) == pytest.approx(0.0, abs=1e-12)
    assert lp_norm(f, 1, mu) <= 2 + 1e-12
    with pytest.raises(ValueError):
        adversarial_test_function(noncancellative_indicator(MeasureTree.from_leaves(np.array([1.0, 0, 0, 0]))), CubeId(1, 1, (1,)), MeasureTree.from_leaves(np.array([1.0, 0, 0, 0])))


def test_battery_is_deterministic_and_validated():
    mu = build_split_measure(SplitSequenceSpec("formula_a", 10))
    a = battery_functions("all", mu, None, seed=5, per_generation=3)
    b = battery_functions("all", mu, None, seed=5, per_generation=3)
    assert [(x[0], x[1]) for x in a] == [(x[0], x[1]) for x in b]
    assert all(np.array_equal(x[2].values, y[2].values) for x, y in zip(a, b))
    with pytest.raises(ValueError):
        battery_functions("bogus", mu, None)


def test_weak11_estimate_lebesgue_hilbert():
    mu = build_lebesgue(1, 10)
    op = operator_from_json({"op": "hilbert"}, mu)
    rep = weak11_estimate(op, mu, "haar_family", seed=0, per_generation=4)
    assert 0 < rep.max_ratio < op.ceiling
    assert rep.tested > 0 and rep.witness_family == "haar_family"
    again = weak11_estimate(op, mu, "haar_family", seed=0, per_generation=4, threads=3)
    assert again.series == rep.series


def test_operator_from_json_variants(rng):
    mu = MeasureTree.from_leaves(rng.random(16) + 0.01)
    f = SimpleFunction(4, rng.normal(size=16))
    for spec in (
        {"op": "shift", "r": 1, "s": 0, "coefficients": {"kind": "signs"}},
        {"op": "multiplier", "coefficients": {"kind": "multiplier", "entries": {"0:0": 2.0}}},
        {"op": "paraproduct", "gamma": {"1:0": 0.3}},
        {"op": "paraproduct_adjoint", "gamma": {"1:0": 0.3}},
        {"op": "square"},
        {"op": "maximal"},
        {"op": "martingale_transform", "seed": 4},
        {"op": "hilbert_adjoint"},
    ):
        op = operator_from_json(spec, mu)
        assert isinstance(op, Operator)
        assert op.apply(f).dim == 1
    with pytest.raises(ValueError):
        operator_from_json({"op": "nothing"}, mu)


def test_threads_from_env(monkeypatch):
    monkeypatch.setenv("HAARLAB_THREADS", "3")
    assert threads_from_env() == 3
    monkeypatch.setenv("HAARLAB_THREADS", "x")
    assert threads_from_env(2) == 2
    monkeypatch.delenv("HAARLAB_THREADS")
    assert threads_from_env() == 1


def test_depth_overflow_in_shift():
    mu = build_lebesgue(1, 3)
    h = canonical_1d(mu)
    with pytest.raises(ValueError, match="depth overflow"):
        haar_shift(ShiftCoefficients.constant(0, 0), h, h, SimpleFunction(4, np.zeros(16)), mu)
