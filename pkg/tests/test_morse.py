from fractions import Fraction as Q

import pytest

from flatforms.morse import (
    GradedModule,
    LeafSystem,
    UnknownLeaf,
    allowed_blocks,
    check_partial_order,
    check_refinement,
    height_operator,
    number_operator,
    prec,
    validate_leaf_system,
)
from flatforms.simplicial import build_complex


def two_leaf_system(h_a, h_b, eps=1):
    """Two leaves over a single edge (0,1) with given vertex heights."""
    leaves = [("a", 0, 1), ("b", 1, 1)]
    heights = {
        ("a", 0): h_a[0], ("a", 1): h_a[1],
        ("b", 0): h_b[0], ("b", 1): h_b[1],
    }
    return LeafSystem(leaves, heights, eps)


def test_prec_requires_strict_gap():
    # gap 3 > 2*eps^2 = 2 at vertex 0: ordered
    L = two_leaf_system((0, 0), (3, 3))
    assert prec(L, "a", "b", (0, 1))
    # gap exactly 2: not ordered (strict)
    L = two_leaf_system((0, 0), (2, 2))
    assert not prec(L, "a", "b", (0, 1))
    assert not prec(L, "b", "a", (0, 1))


def test_prec_single_witness_vertex_suffices():
    L = two_leaf_system((0, 0), (Q(9, 4), 0))
    assert prec(L, "a", "b", (0,))
    assert prec(L, "a", "b", (0, 1))
    assert not prec(L, "a", "b", (1,))


def test_fineness_violation_reported():
    # oscillation 1 on the edge is not < eps^2/2 = 1/2
    L = two_leaf_system((0, 1), (3, 3))
    S = build_complex([(0, 1)])
    problems = validate_leaf_system(L, S)
    assert any("oscillates" in p for p in problems)

    L = two_leaf_system((0, Q(1, 4)), (3, 3))
    assert validate_leaf_system(L, S) == []


def test_validate_flags_missing_heights_and_bad_rank():
    L = LeafSystem([("a", 0, 0)], {("a", 0): 0}, 1)
    S = build_complex([(0, 1)])
    problems = validate_leaf_system(L, S)
    assert any("rank" in p for p in problems)
    assert any("no height" in p for p in problems)


def test_unknown_leaf():
    L = two_leaf_system((0, 0), (3, 3))
    with pytest.raises(UnknownLeaf):
        L.height("c", 0)
    with pytest.raises(UnknownLeaf):
        LeafSystem([("a", 0, 1)], {("z", 0): 1}, 1)


def test_partial_order_and_refinement_clean_system():
    leaves = [("a", 0, 1), ("b", 1, 2), ("c", 1, 1)]
    heights = {}
    for v in (0, 1, 2):
        heights[("a", v)] = Q(0)
        heights[("b", v)] = Q(3)
        heights[("c", v)] = Q(6)
    L = LeafSystem(leaves, heights, 1)
    S = build_complex([(0, 1, 2)])
    assert check_partial_order(L, S) == []
    assert check_refinement(L, S) == []
    assert prec(L, "a", "c", (0, 1, 2))


def test_graded_module_layout():
    L = two_leaf_system((0, 0), (3, 3))
    L.rank["a"] = 2
    M = GradedModule(L)
    assert M.basis == [("a", 0), ("a", 1), ("b", 0)]
    assert M.n == 3
    assert M.degree(("b", 0)) == 1
    N = number_operator(M)
    assert N[0][0] == 0 and N[2][2] == 1
    H = height_operator(L, M, 0)
    assert H[0][0] == 0 and H[2][2] == 3


def test_allowed_blocks_by_end_degree():
    leaves = [("a", 0, 1), ("b", 1, 1), ("c", 2, 1)]
    heights = {("a", 0): 0, ("b", 0): 3, ("c", 0): 6}
    L = LeafSystem(leaves, heights, 1)
    sigma = (0,)
    # degree +1 blocks: (b, a) and (c, b); lower leaf must precede upper
    assert set(allowed_blocks(L, sigma, 1)) == {("b", "a"), ("c", "b")}
    # degree 0: strictly off-diagonal needs equal indices: none here
    assert allowed_blocks(L, sigma, 0) == []
    assert set(allowed_blocks(L, sigma, 0, strict=False)) == {
        ("a", "a"), ("b", "b"), ("c", "c")}
    # degree -1: e.g. (a, b) needs b to precede a in height: false
    assert allowed_blocks(L, sigma, -1) == []
