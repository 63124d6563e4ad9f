"""Leaf data over a simplicial base: heights, fineness, orders, grading.

A leaf system records finitely many labelled leaves, each with an
integer index and a rank, together with an exact rational height per
(leaf, vertex) and a fineness scale ``epsilon``.  Heights extend
affinely over each simplex, so oscillation and order questions reduce
to vertex evaluations.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from .linalg import Q, qx
from .simplicial import BaseComplex, Simplex, all_faces


class UnknownLeaf(Exception):
    pass


class LeafSystem:
    """Leaves with heights over the vertices of a base complex.

    Parameters
    ----------
    leaves : iterable of (leaf_id, index, rank)
    heights : mapping (leaf_id, vertex) -> rational height
    epsilon : positive rational fineness scale
    """

    def __init__(self, leaves, heights, epsilon):
        self.leaves: list[str] = []
        self.index: dict[str, int] = {}
        self.rank: dict[str, int] = {}
        for leaf_id, ind, rk in leaves:
            if leaf_id in self.index:
                raise ValueError(f"leaf listed twice: {leaf_id}")
            self.leaves.append(leaf_id)
            self.index[leaf_id] = int(ind)
            self.rank[leaf_id] = int(rk)
        self.heights: dict[tuple[str, int], Fraction] = {
            (leaf, v): qx(h) for (leaf, v), h in heights.items()
        }
        for leaf, _v in self.heights:
            if leaf not in self.index:
                raise UnknownLeaf(leaf)
        self.epsilon = qx(epsilon)

    def height(self, leaf: str, vertex: int) -> Fraction:
        if leaf not in self.index:
            raise UnknownLeaf(leaf)
        try:
            return self.heights[(leaf, vertex)]
        except KeyError:
            raise UnknownLeaf(f"no height for leaf {leaf!r} at vertex {vertex}") from None


def validate_leaf_system(L: LeafSystem, S: BaseComplex) -> list[str]:
    """Structural and fineness checks; returns a list of violation reports."""
    problems = []
    eps2 = L.epsilon * L.epsilon
    for leaf in L.leaves:
        if L.rank[leaf] < 1:
            problems.append(f"leaf {leaf!r} has rank {L.rank[leaf]} < 1")
        for v in S.vertices():
            if (leaf, v[0]) not in L.heights:
                problems.append(f"leaf {leaf!r} has no height at vertex {v[0]}")
    if L.epsilon <= 0:
        problems.append("epsilon must be positive")
        return problems
    for sigma in S:
        if len(sigma) < 2:
            continue
        for leaf in L.leaves:
            vals = [L.heights.get((leaf, v)) for v in sigma]
            if any(h is None for h in vals):
                continue
            osc = max(vals) - min(vals)
            if not osc < eps2 / 2:
                problems.append(
                    f"leaf {leaf!r} oscillates by {osc} on {sigma}, "
                    f"not below {eps2 / 2}"
                )
    return problems


def prec(L: LeafSystem, alpha: str, beta: str, sigma: Simplex) -> bool:
    """True when ``alpha`` precedes ``beta`` over ``sigma``.

    Holds iff the height gap h_beta - h_alpha exceeds 2*epsilon^2 at
    some vertex of ``sigma`` (strict).
    """
    gap = 2 * L.epsilon * L.epsilon
    return any(L.height(beta, v) - L.height(alpha, v) > gap for v in sigma)


def check_partial_order(L: LeafSystem, S: BaseComplex) -> list[str]:
    """Verify that each per-simplex order is a strict partial order."""
    problems = []
    for sigma in S:
        rel = {(a, b) for a in L.leaves for b in L.leaves if prec(L, a, b, sigma)}
        for a, b in rel:
            if a == b:
                problems.append(f"{a} precedes itself on {sigma}")
            if (b, a) in rel:
                problems.append(f"{a} and {b} precede each other on {sigma}")
        for a, b in rel:
            for c in L.leaves:
                if (b, c) in rel and (a, c) not in rel:
                    problems.append(
                        f"order on {sigma} not transitive: {a} < {b} < {c} "
                        f"but not {a} < {c}"
                    )
    return problems


def check_refinement(L: LeafSystem, S: BaseComplex) -> list[str]:
    """Verify the order over a simplex extends the order over each face."""
    problems = []
    for sigma in S:
        for tau in all_faces(sigma):
            if tau == sigma:
                continue
            for a in L.leaves:
                for b in L.leaves:
                    if prec(L, a, b, tau) and not prec(L, a, b, sigma):
                        problems.append(
                            f"{a} < {b} on face {tau} but not on {sigma}"
                        )
    return problems


class GradedModule:
    """Free graded module with one block of ``rank[leaf]`` generators per leaf.

    Basis elements are pairs (leaf, i); their degree is the leaf index.
    Basis order follows the input leaf order.
    """

    def __init__(self, L: LeafSystem):
        self.leaves = list(L.leaves)
        self.rank = dict(L.rank)
        self.index = dict(L.index)
        self.basis: list[tuple[str, int]] = [
            (leaf, i) for leaf in self.leaves for i in range(self.rank[leaf])
        ]
        self.position = {b: p for p, b in enumerate(self.basis)}
        self.n = len(self.basis)

    def degree(self, basis_elt: tuple[str, int]) -> int:
        return self.index[basis_elt[0]]


def number_operator(M: GradedModule) -> list[list[Fraction]]:
    """Diagonal matrix multiplying each generator by its degree."""
    n = M.n
    out = [[Q(0)] * n for _ in range(n)]
    for p, b in enumerate(M.basis):
        out[p][p] = Q(M.degree(b))
    return out


def height_operator(L: LeafSystem, M: GradedModule, vertex: int) -> list[list[Fraction]]:
    """Diagonal matrix multiplying each generator by its leaf height at ``vertex``."""
    n = M.n
    out = [[Q(0)] * n for _ in range(n)]
    for p, (leaf, _i) in enumerate(M.basis):
        out[p][p] = L.height(leaf, vertex)
    return out


def allowed_blocks(L: LeafSystem, sigma: Simplex, end_degree: int,
                   strict: bool = True) -> list[tuple[str, str]]:
    """Leaf block pairs (alpha, beta) a degree-``end_degree`` operator may occupy.

    A block is allowed when the leaf indices satisfy
    ind(alpha) = ind(beta) + end_degree and beta precedes alpha over
    ``sigma``.  With ``strict=False`` the diagonal (alpha == alpha,
    end_degree 0) is allowed as well.
    """
    out = []
    for alpha in L.leaves:
        for beta in L.leaves:
            if L.index[alpha] != L.index[beta] + end_degree:
                continue
            if alpha == beta:
                if not strict and end_degree == 0:
                    out.append((alpha, beta))
                continue
            if prec(L, beta, alpha, sigma):
                out.append((alpha, beta))
    return out
