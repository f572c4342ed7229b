from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from haarlab.grid import (
    CubeId,
    ancestor,
    child,
    children,
    contains,
    corner_chain,
    cubes_at,
    descendants,
    parent,
    sibling_sign,
)


@st.composite
def cubes(draw, max_gen=8):
    dim = draw(st.integers(1, 3))
    gen = draw(st.integers(0, max_gen))
    coords = tuple(draw(st.integers(0, (1 << gen) - 1)) for _ in range(dim))
    return CubeId(dim, gen, coords)


def test_root_and_parse():
    r = CubeId.root(2)
    assert r.is_root and r.gen == 0 and r.coords == (0, 0)
    q = CubeId.parse("3:5,2")
    assert q == CubeId(2, 3, (5, 2))
    assert str(q) == "3:5,2"
    assert q.side() == 1 / 8
    assert q.lower_corner() == (5 / 8, 2 / 8)


def test_invalid_cube_rejected():
    with pytest.raises(ValueError):
        CubeId(1, 2, (4,))
    with pytest.raises(ValueError):
        CubeId(2, 1, (0,))
    with pytest.raises(ValueError):
        CubeId(1, -1, (0,))


def test_children_order_first_coordinate_most_significant():
    q = CubeId(2, 1, (1, 0))
    kids = children(q)
    assert [k.coords for k in kids] == [(2, 0), (2, 1), (3, 0), (3, 1)]
    assert [k.child_index() for k in kids] == [0, 1, 2, 3]


def test_ancestor_above_root():
    with pytest.raises(ValueError, match="above root"):
        ancestor(CubeId(1, 2, (3,)), 3)


def test_descendants_depth_overflow():
    q = CubeId(1, 3, (0,))
    assert len(descendants(q, 2, depth=5)) == 4
    with pytest.raises(ValueError, match="depth overflow"):
        descendants(q, 3, depth=5)


def test_sibling_sign():
    assert sibling_sign(CubeId(1, 3, (4,))) == 1
    assert sibling_sign(CubeId(1, 3, (5,))) == -1


def test_cubes_at_and_corner_chain():
    assert len(cubes_at(2, 3)) == 64
    chain = corner_chain(1, 4)
    assert [q.gen for q in chain] == [0, 1, 2, 3, 4]
    assert all(q.coords == (0,) for q in chain)


@given(cubes())
def test_parent_of_child_roundtrip(q):
    for i, k in enumerate(children(q)):
        assert parent(k) == q
        assert child(q, i) == k
        assert contains(q, k) and not contains(k, q)


@given(cubes(), st.integers(0, 4))
def test_descendants_partition(q, s):
    ds = descendants(q, s)
    assert len(ds) == 2 ** (s * q.dim)
    assert len(set(ds)) == len(ds)
    assert all(ancestor(d, s) == q for d in ds)


@given(cubes())
def test_ancestor_chain_contains(q):
    for r in range(q.gen + 1):
        a = ancestor(q, r)
        assert a.gen == q.gen - r
        assert contains(a, q)


@given(cubes())
def test_flat_index_is_bijective_within_generation(q):
    side = 1 << q.gen
    assert 0 <= q.flat_index() < side**q.dim
    assert CubeId.parse(str(q)) == q
