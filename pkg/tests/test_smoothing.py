import json
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatforms.flatsys import CoefficientSystem
from flatforms.forms import PolyForm
from flatforms.instances import generate, make_fiber_model
from flatforms.mixed import (
    FiberModel,
    FormMatrix,
    build_Iprime,
    build_mixed_connection,
)
from flatforms.morse import LeafSystem
from flatforms.simplicial import build_complex
from flatforms.smoothing import (
    PartitionOfUnity,
    RatioMatrix,
    assemble_I,
    omega_betti,
    partition_default,
    partition_linear,
    phibar,
    pullback_global,
    pullback_matrix,
    quasi_iso_ranks,
    validate_partition,
    verify_chain,
    verify_global,
)


def edge_system():
    # same three-leaf edge as in test_mixed, kept local so this file
    # reads on its own
    S = build_complex([(0, 1)])
    L = LeafSystem(
        [("p", 0, 1), ("r", 0, 1), ("q", 1, 1)],
        {("p", 0): 0, ("p", 1): 0, ("r", 0): 3, ("r", 1): 3,
         ("q", 0): 6, ("q", 1): 6},
        1,
    )
    return CoefficientSystem(S, L, {
        (0,): {("q", 0): {("r", 0): Q(1)}},
        (1,): {("q", 0): {("r", 0): Q(1), ("p", 0): Q(1)}},
        (0, 1): {("r", 0): {("p", 0): Q(1)}},
    })


def edge_fiber():
    return FiberModel(
        omega_basis=["u", "w", "z"],
        omega_degree={"u": 0, "w": 0, "z": 1},
        D={"z": {"w": Q(1)}},
        I={
            (0,): {("p", 0): {"u": Q(1)}, ("r", 0): {"w": Q(1)},
                   ("q", 0): {"z": Q(1)}},
            (1,): {("p", 0): {"u": Q(1)},
                   ("r", 0): {"u": Q(-1), "w": Q(1)},
                   ("q", 0): {"z": Q(1)}},
            (0, 1): {},
        },
        eta={"u": 0, "w": 3, "z": 6},
    )


SMALL = build_complex([(0, 1, 2), (1, 3)])


# --- partitions ---------------------------------------------------------


def test_default_partition_validates():
    assert validate_partition(partition_default(SMALL)) == []


def test_linear_partition_is_flagged():
    problems = validate_partition(partition_linear(SMALL))
    assert problems
    assert any("d(phi" in m for m in problems)


def test_edge_denominator_is_one():
    """The cubic bump satisfies B(t) + B(1-t) = 1, so no denominator is
    actually needed in dimension one."""
    P = partition_default(SMALL)
    assert P.den[(1, 3)] == PolyForm.one(1)


def test_partition_json_round_trip():
    P = partition_default(SMALL)
    blob = json.dumps(P.to_json())
    P2 = PartitionOfUnity.from_json(SMALL, json.loads(blob))
    assert P2.num == P.num
    assert P2.den == P.den


def test_phibar_frozen_values():
    P = partition_default(SMALL)
    assert phibar(P, (1, 3), (Q(1), Q(0))) == (1, 0)
    assert phibar(P, (1, 3), (Q(0), Q(1))) == (0, 1)
    # B(3/4) = 27/32 on the edge, where the normalizer is 1
    assert phibar(P, (1, 3), (Q(1, 4), Q(3, 4))) == (Q(5, 32), Q(27, 32))
    third = (Q(1, 3), Q(1, 3), Q(1, 3))
    assert phibar(P, (0, 1, 2), third) == third


@settings(max_examples=40, deadline=None)
@given(st.fractions(min_value=0, max_value=1),
       st.fractions(min_value=0, max_value=1))
def test_phibar_maps_triangle_to_itself(a, b):
    if a + b > 1:
        a, b = 1 - a, 1 - b
    P = partition_default(SMALL)
    pt = (1 - a - b, a, b)
    img = phibar(P, (0, 1, 2), pt)
    assert sum(img) == 1
    assert all(c >= 0 for c in img)
    # faces go to faces
    for i in range(3):
        if pt[i] == 0:
            assert img[i] == 0


# --- rational matrices --------------------------------------------------


def ratio_fixture():
    deg = {"x": 0, "y": 0}
    num = FormMatrix(2, deg, deg)
    num.set_entry("x", "y", PolyForm(2, {((1, 0), ()): Q(1)}))
    num.set_entry("y", "y", PolyForm(2, {((0, 1), (1,)): Q(2)}))
    den = PolyForm(2, {((0, 0), ()): Q(1), ((1, 1), ()): Q(1)})
    return RatioMatrix(num, den, 1), den


def test_ratio_eq_cross_multiplies():
    R, den = ratio_fixture()
    promoted = RatioMatrix(R.promoted(3), den, 3)
    assert R.eq(promoted)
    assert promoted.eq(R)
    other = RatioMatrix(R.num.scale(2), den, 1)
    assert not R.eq(other)


def test_ratio_d_squares_to_zero():
    R, _ = ratio_fixture()
    dR = R.d()
    assert dR.e == R.e + 1
    assert dR.d().is_zero()


def test_ratio_promoted_cannot_lower():
    R, _ = ratio_fixture()
    with pytest.raises(ValueError):
        R.promoted(0)


def test_pullback_of_constants_is_constant():
    A = edge_system()
    data = build_mixed_connection(A)
    P = partition_default(A.S)
    g = pullback_matrix(data.get((0,), ()), P, (0,))
    assert g.e == 0
    assert g.num.eq(data.get((0,), ()))


# --- global forms -------------------------------------------------------


def test_worked_edge_global_checks():
    A = edge_system()
    data = build_mixed_connection(A)
    G = pullback_global(data, partition_default(A.S))
    rep = verify_global(G)
    assert rep == {"flat": [], "c0": [], "first_order": []}


def test_worked_edge_linear_fails_first_order_only():
    """Skipping the smoothing leaves the bare homotopy term E dx in the
    edge form; at either endpoint it is not what the vertex data
    predicts, and the report says so."""
    A = edge_system()
    data = build_mixed_connection(A)
    G = pullback_global(data, partition_linear(A.S))
    rep = verify_global(G)
    assert rep["flat"] == []
    assert rep["c0"] == []
    assert rep["first_order"]
    assert all("not determined by its face" in m for m in rep["first_order"])


@pytest.mark.parametrize("seed", [3, 5, 8])
def test_generated_surfaces_default_clean(seed):
    inst = generate(seed, max_dim=2, enrich=False)
    data = build_mixed_connection(inst.A)
    G = pullback_global(data, partition_default(inst.A.S))
    rep = verify_global(G)
    assert rep == {"flat": [], "c0": [], "first_order": []}


def test_generated_surface_linear_detected():
    inst = generate(5, max_dim=2, enrich=False)
    data = build_mixed_connection(inst.A)
    rep = verify_global(pullback_global(data, partition_linear(inst.A.S)))
    assert rep["flat"] == [] and rep["c0"] == []
    assert len(rep["first_order"]) > 0


# --- global chain map ---------------------------------------------------


def test_worked_edge_chain_assembly():
    A = edge_system()
    data = build_mixed_connection(A)
    cm = build_Iprime(data, edge_fiber())
    G = pullback_global(data, partition_default(A.S))
    assemble_I(G, cm)
    assert verify_chain(G) == []


@pytest.mark.parametrize("seed", [2, 5])
def test_generated_chain_assembly(seed):
    inst = generate(seed, max_dim=2, enrich=False)
    FM = make_fiber_model(inst)
    data = build_mixed_connection(inst.A)
    cm = build_Iprime(data, FM)
    G = pullback_global(data, partition_default(inst.A.S))
    assemble_I(G, cm)
    assert verify_chain(G) == []


def test_chain_requires_assembly():
    A = edge_system()
    data = build_mixed_connection(A)
    G = pullback_global(data, partition_default(A.S))
    with pytest.raises(ValueError):
        verify_chain(G)


# --- homology comparison ------------------------------------------------


def test_omega_betti_worked_edge():
    assert omega_betti(edge_fiber()) == {0: 1, 1: 0}


def test_quasi_iso_worked_edge():
    rep = quasi_iso_ranks(edge_system(), edge_fiber())
    assert rep["problems"] == []
    assert rep["triangles"] == {}


def test_quasi_iso_detects_rank_mismatch():
    FM = edge_fiber()
    FM.D = {}  # now Omega has two classes in degree 0 and one in degree 1
    rep = quasi_iso_ranks(edge_system(), FM)
    assert rep["problems"]
    assert any("Betti" in m for m in rep["problems"])


def test_quasi_iso_generated_with_triangles():
    inst = generate(8, max_dim=2, enrich=False)
    FM = make_fiber_model(inst)
    rep = quasi_iso_ranks(inst.A, FM)
    assert rep["problems"] == []
    assert rep["triangles"] and all(rep["triangles"].values())
