"""Dyadic lattice inside a fixed root cube.

A cube is addressed by its generation below the root and its integer
coordinates on that generation's grid. Children are listed in row-major
order of the offset bits, first coordinate most significant, so child 0 is
the "corner" child and, in one dimension, child 0 is the left half.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product


@dataclass(frozen=True, order=True)
class CubeId:
    dim: int
    gen: int
    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.gen < 0:
            raise ValueError("generation must be nonnegative")
        coords = tuple(int(c) for c in self.coords)
        if len(coords) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(coords)}")
        side = 1 << self.gen
        if any(c < 0 or c >= side for c in coords):
            raise ValueError(f"coordinates {coords} out of range for generation {self.gen}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def root(cls, dim: int) -> CubeId:
        return cls(dim, 0, (0,) * dim)

    @classmethod
    def parse(cls, text: str) -> CubeId:
        """Inverse of ``str``: ``"3:5"`` or ``"2:1,3"``."""
        try:
            gen_part, coord_part = text.strip().split(":")
            coords = tuple(int(c) for c in coord_part.split(","))
            return cls(len(coords), int(gen_part), coords)
        except ValueError as exc:
            raise ValueError(f"bad cube address {text!r}: {exc}") from None

    def __str__(self) -> str:
        return f"{self.gen}:" + ",".join(str(c) for c in self.coords)

    @property
    def is_root(self) -> bool:
        return self.gen == 0

    def side(self) -> float:
        """Side length relative to the root side."""
        return 2.0 ** (-self.gen)

    def lower_corner(self) -> tuple[float, ...]:
        return tuple(c * 2.0 ** (-self.gen) for c in self.coords)

    def flat_index(self) -> int:
        """Row-major position among the cubes of the same generation."""
        idx = 0
        for c in self.coords:
            idx = (idx << self.gen) | c
        return idx

    def child_index(self) -> int:
        """Position of this cube among its parent's children."""
        if self.gen == 0:
            raise ValueError("the root has no parent")
        idx = 0
        for c in self.coords:
            idx = (idx << 1) | (c & 1)
        return idx


def children(q: CubeId) -> list[CubeId]:
    return [
        CubeId(q.dim, q.gen + 1, tuple(2 * c + b for c, b in zip(q.coords, bits)))
        for bits in product((0, 1), repeat=q.dim)
    ]


def child(q: CubeId, index: int) -> CubeId:
    if not 0 <= index < (1 << q.dim):
        raise ValueError(f"child index {index} out of range")
    bits = [(index >> (q.dim - 1 - i)) & 1 for i in range(q.dim)]
    return CubeId(q.dim, q.gen + 1, tuple(2 * c + b for c, b in zip(q.coords, bits)))


def ancestor(q: CubeId, r: int) -> CubeId:
    if r < 0:
        raise ValueError("ancestor order must be nonnegative")
    if r > q.gen:
        raise ValueError(f"above root: cannot go {r} generations up from {q}")
    return CubeId(q.dim, q.gen - r, tuple(c >> r for c in q.coords))


def parent(q: CubeId) -> CubeId:
    return ancestor(q, 1)


def descendants(q: CubeId, s: int, depth: int | None = None) -> list[CubeId]:
    """All cubes ``s`` generations below ``q`` in row-major order."""
    if s < 0:
        raise ValueError("descendant order must be nonnegative")
    if depth is not None and q.gen + s > depth:
        raise ValueError(f"depth overflow: generation {q.gen + s} exceeds {depth}")
    span = 1 << s
    return [
        CubeId(q.dim, q.gen + s, tuple((c << s) + o for c, o in zip(q.coords, offs)))
        for offs in product(range(span), repeat=q.dim)
    ]


def contains(outer: CubeId, inner: CubeId) -> bool:
    if outer.dim != inner.dim or inner.gen < outer.gen:
        return False
    return ancestor(inner, inner.gen - outer.gen) == outer


def sibling_sign(q: CubeId) -> int:
    """+1 for a left child, -1 for a right child (one dimension only)."""
    if q.dim != 1:
        raise ValueError("sibling sign is defined in one dimension only")
    if q.gen == 0:
        raise ValueError("the root has no parent")
    return 1 if q.coords[0] % 2 == 0 else -1


def cubes_at(dim: int, gen: int) -> list[CubeId]:
    """Every cube of a generation, row-major."""
    return descendants(CubeId.root(dim), gen)


def corner_chain(dim: int, depth: int) -> list[CubeId]:
    """The cubes [0, 2^-k)^d for k = 0..depth, descending through child 0."""
    return [CubeId(dim, k, (0,) * dim) for k in range(depth + 1)]
