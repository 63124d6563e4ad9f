"""Combinatorial simplices and face-closed complexes.

A simplex is a strictly increasing tuple of integer vertex ids; the
empty tuple is the empty simplex of dimension -1.  A ``BaseComplex``
is a finite set of simplices closed under taking faces, graded by
dimension.
"""

from __future__ import annotations

from itertools import combinations

Simplex = tuple[int, ...]

EMPTY: Simplex = ()


class SimplexError(Exception):
    pass


class DuplicateSimplex(SimplexError):
    pass


class NonIncreasingVertices(SimplexError):
    pass


class IndexOutOfRange(SimplexError):
    pass


class ZeroDimensional(SimplexError):
    pass


class SimplexNotInComplex(SimplexError):
    pass


class NotAFace(SimplexError):
    pass


def dim(sigma: Simplex) -> int:
    return len(sigma) - 1


def check_simplex(sigma) -> Simplex:
    """Validate and return a simplex tuple (strictly increasing ints)."""
    sigma = tuple(sigma)
    for v in sigma:
        if not isinstance(v, int):
            raise NonIncreasingVertices(f"vertex ids must be ints, got {v!r}")
    if any(a >= b for a, b in zip(sigma, sigma[1:])):
        raise NonIncreasingVertices(f"vertices not strictly increasing: {sigma}")
    return sigma


def face(sigma: Simplex, positions) -> Simplex:
    """Face of ``sigma`` spanned by the given vertex positions.

    ``positions`` are indices into the vertex tuple of ``sigma`` and
    must be strictly increasing.
    """
    positions = tuple(positions)
    if any(a >= b for a, b in zip(positions, positions[1:])):
        raise NonIncreasingVertices(f"positions not strictly increasing: {positions}")
    for p in positions:
        if not 0 <= p < len(sigma):
            raise IndexOutOfRange(f"position {p} out of range for {sigma}")
    return tuple(sigma[p] for p in positions)


def facet(sigma: Simplex, j: int) -> Simplex:
    """The facet of ``sigma`` obtained by omitting the vertex at position ``j``."""
    if not 0 <= j < len(sigma):
        raise IndexOutOfRange(f"position {j} out of range for {sigma}")
    return sigma[:j] + sigma[j + 1:]

def boundary_chain(sigma: Simplex) -> list[tuple[int, Simplex]]:
    """Signed facet list of ``sigma``: entry j is ((-1)**j, sigma minus vertex j).

    Raises ``ZeroDimensional`` for vertices and the empty simplex, whose
    boundary is not a chain of simplices.
    """
    if dim(sigma) < 1:
        raise ZeroDimensional(f"boundary of {sigma} is not a simplex chain")
    return [((-1) ** j, facet(sigma, j)) for j in range(len(sigma))]


def is_face(tau: Simplex, sigma: Simplex) -> bool:
    """True when ``tau`` is a (not necessarily proper) face of ``sigma``."""
    it = iter(sigma)
    return all(v in it for v in tau)


def face_positions(tau: Simplex, sigma: Simplex) -> tuple[int, ...]:
    """Positions of the vertices of ``tau`` inside ``sigma``.

    Raises ``NotAFace`` when ``tau`` is not a face of ``sigma``.
    """
    pos = []
    j = 0
    for v in tau:
        while j < len(sigma) and sigma[j] != v:
            j += 1
        if j == len(sigma):
            raise NotAFace(f"{tau} is not a face of {sigma}")
        pos.append(j)
        j += 1
    return tuple(pos)


def relative_simplex(sigma: Simplex, tau: Simplex) -> Simplex:
    """Vertex span of ``sigma`` relative to its face ``tau``.

    The vertices of ``sigma`` from the position of the last vertex of
    ``tau`` onward (all of ``sigma`` when ``tau`` is empty).
    """
    if tau == EMPTY:
        return sigma
    pos = face_positions(tau, sigma)
    return sigma[pos[-1]:]


def all_faces(sigma: Simplex, include_empty: bool = False):
    """All faces of ``sigma`` in (dimension, lexicographic) order."""
    out = [EMPTY] if include_empty else []
    for size in range(1, len(sigma) + 1):
        out.extend(combinations(sigma, size))
    return out


class BaseComplex:
    """A finite face-closed simplicial complex.

    Simplices are identified by their vertex tuples; ``skeleta[k]``
    lists the k-simplices in lexicographic order.
    """

    def __init__(self, simplices):
        seen: set[Simplex] = set()
        given: list[Simplex] = []
        for s in simplices:
            s = check_simplex(s)
            if s == EMPTY:
                continue
            if s in seen:
                raise DuplicateSimplex(f"simplex listed twice: {s}")
            seen.add(s)
            given.append(s)
        closure: set[Simplex] = set()
        for s in given:
            for f in all_faces(s):
                closure.add(f)
        self.simplices: list[Simplex] = sorted(closure, key=lambda s: (len(s), s))
        self._members = closure
        self.dim = max((dim(s) for s in self.simplices), default=-1)
        self.skeleta: dict[int, list[Simplex]] = {}
        for s in self.simplices:
            self.skeleta.setdefault(dim(s), []).append(s)

    def __contains__(self, sigma) -> bool:
        return tuple(sigma) in self._members

    def __iter__(self):
        return iter(self.simplices)

    def __len__(self) -> int:
        return len(self.simplices)

    def require(self, sigma) -> Simplex:
        sigma = tuple(sigma)
        if sigma not in self._members:
            raise SimplexNotInComplex(f"{sigma} is not in the complex")
        return sigma

    def vertices(self) -> list[Simplex]:
        return self.skeleta.get(0, [])

    def of_dim(self, k: int) -> list[Simplex]:
        return self.skeleta.get(k, [])

    def open_star(self, sigma) -> list[Simplex]:
        """All simplices of the complex having ``sigma`` as a face."""
        sigma = self.require(sigma)
        return [t for t in self.simplices if is_face(sigma, t)]


def build_complex(simplices) -> BaseComplex:
    return BaseComplex(simplices)
