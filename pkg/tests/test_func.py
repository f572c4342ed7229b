from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from haarlab.func import (
    CoefficientSequence,
    SimpleFunction,
    average,
    average_pyramid,
    bmo_from_carleson,
    bmo_norm,
    carleson_norm,
    cube_integrals,
    distribution,
    haar_coefficients,
    inner_product,
    integral,
    level_averages,
    lp_norm,
    pairing,
    synthesize,
    weak_l1_norm,
)
from haarlab.grid import CubeId, cubes_at
from haarlab.haar import canonical_1d, wilson
from haarlab.measure import MeasureTree, build_lebesgue

vals8 = arrays(float, 8, elements=st.floats(-100, 100))
mass_values = st.one_of(st.just(0.0), st.floats(1e-6, 10))
masses8 = arrays(float, 8, elements=mass_values)


def brute_weak(f, mu):
    v = np.abs(f.values).reshape(-1)
    w = mu.level(f.resolution).reshape(-1)
    best = 0.0
    for t in np.unique(v):
        if t > 0:
            best = max(best, t * w[v >= t].sum())
    return best


@given(vals8, masses8)
def test_weak_l1_matches_brute_force(values, masses):
    mu = MeasureTree.from_leaves(masses)
    f = SimpleFunction(3, values)
    assert weak_l1_norm(f, mu) == pytest.approx(brute_weak(f, mu), rel=1e-12, abs=1e-300)
    assert weak_l1_norm(f, mu) <= lp_norm(f, 1, mu) * (1 + 1e-12) + 1e-300


def test_weak_l1_indicator():
    mu = build_lebesgue(1, 3)
    f = SimpleFunction.indicator(CubeId(1, 2, (1,)), 3, scale=4.0)
    assert weak_l1_norm(f, mu) == pytest.approx(1.0)
    vals, tail = distribution(f, mu)
    assert vals.tolist() == [4.0] and tail.tolist() == [0.25]


@given(vals8, masses8)
def test_integrals_are_additive(values, masses):
    mu = MeasureTree.from_leaves(masses)
    f = SimpleFunction(3, values)
    for k in range(3):
        fine = cube_integrals(f, mu, k + 1)
        np.testing.assert_allclose(cube_integrals(f, mu, k), fine.reshape(-1, 2).sum(axis=1), atol=1e-9)
    assert integral(f, mu) == pytest.approx(float(values @ masses), abs=1e-9)


@given(vals8, masses8)
def test_pyramid_matches_level_averages(values, masses):
    mu = MeasureTree.from_leaves(masses)
    f = SimpleFunction(3, values)
    pyr = average_pyramid(f, mu)
    for k in range(4):
        np.testing.assert_allclose(pyr[k], level_averages(f, mu, k), rtol=1e-12, atol=1e-12)


def test_average_on_zero_mass_is_zero():
    mu = MeasureTree.from_leaves(np.array([0.0, 0.0, 1.0, 1.0]))
    f = SimpleFunction(2, np.array([5.0, 5.0, 1.0, 3.0]))
    assert average(f, CubeId(1, 1, (0,)), mu) == 0.0
    assert average(f, CubeId(1, 1, (1,)), mu) == 2.0


@given(arrays(float, 16, elements=st.floats(0.01, 10)), arrays(float, 16, elements=st.floats(-10, 10)))
def test_haar_expansion_reconstructs(masses, values):
    mu = MeasureTree.from_leaves(masses)
    h = canonical_1d(mu)
    f = SimpleFunction(4, values)
    rebuilt = np.full((1,), integral(f, mu) / mu.total)
    energy = integral(f, mu) ** 2 / mu.total
    for k in range(4):
        c = haar_coefficients(f, h, mu, k)
        energy += float(np.sum(c**2))
        rebuilt = np.repeat(rebuilt, 2) + synthesize(c, h, k)
    np.testing.assert_allclose(rebuilt, values, atol=1e-8)
    assert energy == pytest.approx(lp_norm(f, 2, mu) ** 2, rel=1e-9)


def test_inner_product_agrees_with_level_coefficients(rng):
    mu = MeasureTree.from_leaves(rng.random((4, 4)))
    s = wilson(mu, 1)
    f = SimpleFunction(2, rng.normal(size=(4, 4)))
    c = haar_coefficients(f, s, mu, 1)
    for q in cubes_at(2, 1):
        assert inner_product(f, s.function(q), mu) == pytest.approx(c[q.coords])
        g = SimpleFunction.from_haar(s.function(q), 2)
        assert pairing(f, g, mu) == pytest.approx(c[q.coords])


def test_lp_norms():
    mu = build_lebesgue(1, 2)
    f = SimpleFunction(2, np.array([1.0, -2.0, 0.0, 3.0]))
    assert lp_norm(f, 1, mu) == pytest.approx(1.5)
    assert lp_norm(f, 2, mu) == pytest.approx(np.sqrt(14 / 4))
    assert lp_norm(f, np.inf, mu) == 3.0
    with pytest.raises(ValueError):
        lp_norm(f, 0.5, mu)


def test_depth_overflow_and_shape_errors():
    mu = build_lebesgue(1, 2)
    with pytest.raises(ValueError, match="depth overflow"):
        integral(SimpleFunction(3, np.zeros(8)), mu)
    with pytest.raises(ValueError):
        SimpleFunction(2, np.zeros(3))
    with pytest.raises(ValueError):
        SimpleFunction(1, np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        SimpleFunction.from_json({"resolution": 2, "values": [1, 2, 3]})


def test_function_algebra_and_json():
    f = SimpleFunction(1, np.array([1.0, 2.0]))
    g = SimpleFunction.constant(1, 3.0)
    assert (f + g).values.tolist() == [4.0, 5.0]
    assert (f - g).values.tolist() == [-2.0, -1.0]
    assert (f * g).scale(0.5).values.tolist() == [1.5, 3.0]
    r = f.refine(2)
    assert r.values.tolist() == [1.0, 1.0, 2.0, 2.0]
    assert SimpleFunction.from_json(r.to_json()).values.tolist() == r.values.tolist()
    assert f.restrict(CubeId(1, 1, (1,))).values.tolist() == [0.0, 2.0]


def test_carleson_norm_single_coefficient():
    mu = build_lebesgue(1, 4)
    gamma = CoefficientSequence.from_dict(1, 4, {"2:1": 0.5})
    assert carleson_norm(gamma, mu) == pytest.approx(np.sqrt(0.25 / 0.25))
    with pytest.raises(ValueError, match="zero-mass"):
        carleson_norm(CoefficientSequence.from_dict(1, 2, {"1:0": 1.0}), MeasureTree.from_leaves(np.array([0, 0, 1, 1.0])))


@given(arrays(float, 32, elements=mass_values), arrays(float, 32, elements=st.floats(-10, 10)))
def test_carleson_of_bmo_coefficients_bounded(masses, values):
    mu = MeasureTree.from_leaves(masses)
    h = canonical_1d(mu)
    rho = SimpleFunction(5, values)
    gamma = CoefficientSequence.from_function(rho, h, mu)
    assert carleson_norm(gamma, mu) <= bmo_norm(rho, mu) * (1 + 1e-9) + 1e-9


@given(arrays(float, 32, elements=mass_values), st.integers(0, 2**32 - 1))
def test_bmo_from_carleson_bounded(masses, seed):
    mu = MeasureTree.from_leaves(masses)
    h = canonical_1d(mu)
    rng = np.random.default_rng(seed)
    levels = tuple(np.where(mu.level(k) > 0, rng.normal(size=1 << k) * np.sqrt(mu.level(k)), 0.0) for k in range(5))
    gamma = CoefficientSequence(1, levels)
    rho = bmo_from_carleson(gamma, h, mu)
    assert bmo_norm(rho, mu) <= carleson_norm(gamma, mu) + 1e-9


def test_bmo_of_haar_function_lebesgue():
    mu = build_lebesgue(1, 3)
    h = canonical_1d(mu)
    rho = SimpleFunction.from_haar(h.function(CubeId.root(1)), 3)
    assert bmo_norm(rho, mu) == pytest.approx(1.0)
