"""Seeded random instances: base complexes, leaf data, flat systems.

The generator builds systems that are flat by construction: a common
nilpotent degree-one pairing matrix is conjugated by per-vertex
unipotent matrices, edges carry the resulting transition matrices, and
all higher coefficients vanish.  Leaf heights are arranged in well
separated levels so every cross-level block is allowed over every
simplex, which keeps the designed data inside the allowed-block
constraint and makes completion by the exact solver feasible.

An optional enrichment step perturbs an edge inside the kernel of its
flatness equation and retries the completion of the higher simplices,
falling back to the unperturbed system when that turns infeasible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .flatsys import (
    CoefficientSystem,
    Infeasible,
    SMat,
    extend_system,
    smat_add,
    smat_entries,
    smat_identity,
    smat_is_zero,
    smat_mul,
    smat_scale,
    smat_set,
    smat_sub,
)
from .linalg import Q
from .morse import GradedModule, LeafSystem, allowed_blocks
from .simplicial import BaseComplex, Simplex, build_complex

LEAF_NAMES = ["a", "b", "c", "d", "e", "f"]


@dataclass
class Instance:
    seed: int
    S: BaseComplex
    L: LeafSystem
    A: CoefficientSystem      # complete, flat by construction
    U: dict[int, SMat]        # per-vertex unipotent gauge
    D0: SMat                  # the common vertex differential before gauging
    levels: dict[str, int]
    enriched: bool = False    # an edge was perturbed away from the pure gauge


def _random_complex(rng: random.Random, max_dim: int, max_simplices: int,
                    need_triangle: bool) -> BaseComplex:
    nv = rng.randrange(3, 7)
    verts = list(range(nv))
    chosen: set[Simplex] = {(v,) for v in verts}

    def closure_count(cands):
        faces: set[Simplex] = set()
        for s in cands:
            for size in range(1, len(s) + 1):
                faces.update(combinations(s, size))
        return len(faces), faces

    picked: list[Simplex] = []
    if need_triangle and max_dim >= 2 and nv >= 3:
        picked.append(tuple(sorted(rng.sample(verts, 3))))
    pool: list[Simplex] = []
    for size in range(2, max_dim + 2):
        pool.extend(combinations(verts, size))
    rng.shuffle(pool)
    for cand in pool:
        trial = picked + [cand]
        count, _ = closure_count(trial + [(v,) for v in verts])
        if count <= max_simplices:
            picked.append(cand)
        if len(picked) > 6:
            break
    total = picked + [(v,) for v in verts]
    return build_complex(sorted(set(total), key=lambda s: (len(s), s)))


def _random_leaves(rng: random.Random, max_leaves: int, max_rank: int,
                   S: BaseComplex):
    n_leaves = rng.randrange(2, max_leaves + 1)
    names = LEAF_NAMES[:n_leaves]
    n_levels = rng.randrange(2, min(3, n_leaves) + 1)
    levels = {}
    for idx, name in enumerate(names):
        levels[name] = idx % n_levels if idx < n_levels else rng.randrange(n_levels)
    indices = {name: rng.randrange(0, 4) for name in names}
    # make sure some cross-level pair has consecutive grading degrees
    lv0 = [n for n in names if levels[n] == 0]
    lv1 = [n for n in names if levels[n] == 1]
    if lv0 and lv1:
        indices[lv1[0]] = indices[lv0[0]] + 1
    ranks = {name: rng.randrange(1, max_rank + 1) for name in names}
    while sum(ranks.values()) > 12:
        big = max(ranks, key=lambda n: ranks[n])
        ranks[big] -= 1
    jitter_choices = [Q(0), Q(1, 16), Q(-1, 16), Q(1, 8), Q(-1, 8), Q(3, 16), Q(-3, 16)]
    heights = {}
    for name in names:
        base = Q(3 * levels[name]) + Q(rng.randrange(-2, 3), 16)
        for v in S.vertices():
            heights[(name, v[0])] = base + rng.choice(jitter_choices)
    leaves = [(name, indices[name], ranks[name]) for name in names]
    return LeafSystem(leaves, heights, 1), levels


def unipotent_inverse(U: SMat, basis) -> SMat:
    """Inverse of id + N with N nilpotent, by the finite geometric series."""
    ident = smat_identity(basis)
    N = smat_sub(U, ident)
    out = ident
    power = ident
    sign = -1
    while True:
        power = smat_mul(power, N)
        if smat_is_zero(power):
            break
        out = smat_add(out, smat_scale(sign, power))
        sign = -sign
    return out


def _design_system(rng: random.Random, S: BaseComplex, L: LeafSystem,
                   levels: dict[str, int]):
    M = GradedModule(L)
    # pairing differential: disjoint source/target basis pairs, level-raising,
    # grading degree +1
    cands = []
    for al in L.leaves:
        for be in L.leaves:
            if levels[al] > levels[be] and L.index[al] == L.index[be] + 1:
                for i in range(L.rank[al]):
                    for j in range(L.rank[be]):
                        cands.append(((al, i), (be, j)))
    rng.shuffle(cands)
    used = set()
    D0: SMat = {}
    for tgt, src in cands:
        if tgt in used or src in used:
            continue
        if rng.random() < 0.7:
            smat_set(D0, tgt, src, rng.choice([1, -1]))
            used.add(tgt)
            used.add(src)
    # per-vertex unipotent gauges: strictly level-raising, degree 0
    gauge_cands = []
    for al in L.leaves:
        for be in L.leaves:
            if levels[al] > levels[be] and L.index[al] == L.index[be]:
                for i in range(L.rank[al]):
                    for j in range(L.rank[be]):
                        gauge_cands.append(((al, i), (be, j)))
    U: dict[int, SMat] = {}
    ident = smat_identity(M.basis)
    for v in S.vertices():
        m = {r: dict(row) for r, row in ident.items()}
        for tgt, src in gauge_cands:
            if rng.random() < 0.4:
                smat_set(m, tgt, src, rng.choice([1, -1, 2, -2]))
        U[v[0]] = m

    A = CoefficientSystem(S, L)
    inv = {v: unipotent_inverse(U[v], M.basis) for v in U}
    for v in S.vertices():
        A.set(v, smat_mul(inv[v[0]], smat_mul(D0, U[v[0]])))
    for e in S.of_dim(1):
        T = smat_mul(inv[e[0]], U[e[1]])
        A.set(e, smat_sub(T, ident))
    for k in range(2, S.dim + 1):
        for s in S.of_dim(k):
            A.set(s, {})
    return A, U, D0


def _kernel_perturbation(rng: random.Random, A: CoefficientSystem,
                         edge: Simplex) -> SMat | None:
    """A random element of the homogeneous edge equation's kernel."""
    from .linalg import nullspace
    a0 = A.a(edge[:1])
    a1 = A.a(edge[1:])
    blocks = allowed_blocks(A.L, edge, 0)
    unknowns = []
    for al, be in blocks:
        for i in range(A.M.rank[al]):
            for j in range(A.M.rank[be]):
                unknowns.append(((al, i), (be, j)))
    if not unknowns:
        return None
    upos = {u: t for t, u in enumerate(unknowns)}
    rows: dict[tuple, dict[int, Fraction]] = {}
    for (p, q) in unknowns:
        uidx = upos[(p, q)]
        for r, row in a0.items():
            v = row.get(p)
            if v:
                rows.setdefault((r, q), {})[uidx] = \
                    rows.get((r, q), {}).get(uidx, Q(0)) - v
        for c, v in a1.get(q, {}).items():
            row = rows.setdefault((p, c), {})
            row[uidx] = row.get(uidx, Q(0)) + v
    keys = sorted(rows, key=repr)
    dense = []
    for rc in keys:
        dense.append([rows[rc].get(t, Q(0)) for t in range(len(unknowns))])
    basis = nullspace(dense, len(unknowns)) if dense else \
        [[Q(1) if i == j else Q(0) for i in range(len(unknowns))]
         for j in range(len(unknowns))]
    if not basis:
        return None
    combo = [Q(0)] * len(unknowns)
    for vec in basis:
        c = rng.choice([0, 0, 1, -1])
        if c:
            combo = [a + c * b for a, b in zip(combo, vec)]
    Z: SMat = {}
    for t, u in enumerate(unknowns):
        if combo[t] != 0:
            smat_set(Z, u[0], u[1], combo[t])
    return Z if not smat_is_zero(Z) else None


def generate(seed: int, max_dim: int = 3, max_simplices: int = 20,
             max_leaves: int = 6, max_rank: int = 3,
             need_triangle: bool = False, enrich: bool = True) -> Instance:
    """Deterministic random instance for the given seed."""
    rng = random.Random(seed)
    S = _random_complex(rng, max_dim, max_simplices, need_triangle)
    L, levels = _random_leaves(rng, max_leaves, max_rank, S)
    A, U, D0 = _design_system(rng, S, L, levels)

    enriched = False
    if enrich and S.of_dim(1):
        edge = rng.choice(S.of_dim(1))
        Z = _kernel_perturbation(rng, A, edge)
        if Z is not None:
            trial = A.copy()
            trial.set(edge, smat_add(trial.a(edge), Z))
            for k in range(2, S.dim + 1):
                for s in S.of_dim(k):
                    trial.coeffs.pop(s, None)
            try:
                trial = extend_system(trial)
                A = trial
                enriched = True
            except Infeasible:
                pass
    return Instance(seed=seed, S=S, L=L, A=A, U=U, D0=D0, levels=levels,
                    enriched=enriched)


def designed_instance(seed: int, simplices, max_leaves: int = 6,
                      max_rank: int = 3) -> Instance:
    """Designed system over a complex given explicitly (no enrichment)."""
    rng = random.Random(seed)
    S = build_complex(simplices)
    L, levels = _random_leaves(rng, max_leaves, max_rank, S)
    A, U, D0 = _design_system(rng, S, L, levels)
    return Instance(seed=seed, S=S, L=L, A=A, U=U, D0=D0, levels=levels)


def strip_to_dim(A: CoefficientSystem, keep_dim: int) -> CoefficientSystem:
    """Copy of the system retaining only coefficients up to ``keep_dim``."""
    out = CoefficientSystem(A.S, A.L)
    for sigma, m in A.coeffs.items():
        if len(sigma) - 1 <= keep_dim:
            out.set(sigma, {r: dict(row) for r, row in m.items()})
    return out


def corrupt_random_entry(rng: random.Random, A: CoefficientSystem
                         ) -> tuple[CoefficientSystem, dict] | None:
    """Add a random nonzero value to one allowed entry of one coefficient.

    Returns the corrupted copy and a description, or None when no
    simplex has any allowed block.
    """
    options = []
    for sigma in A.S:
        k = len(sigma) - 1
        blocks = allowed_blocks(A.L, sigma, 1 - k)
        for al, be in blocks:
            for i in range(A.M.rank[al]):
                for j in range(A.M.rank[be]):
                    options.append((sigma, (al, i), (be, j)))
    if not options:
        return None
    sigma, r, c = rng.choice(options)
    delta = Q(rng.choice([1, -1, 2, 3]))
    out = A.copy()
    m = out.a(sigma)
    smat_set(m, r, c, m.get(r, {}).get(c, Q(0)) + delta)
    return out, {"sigma": sigma, "row": r, "col": c, "delta": delta}


def make_fiber_model(inst: Instance):
    """Fiber data over a designed instance, correct by construction.

    The fiber complex is a relabelled copy of the module with the
    ungauged pairing differential; the comparison over a vertex is the
    inverse of that vertex's gauge, and higher simplices carry nothing.
    Every comparison relation then holds with both sides zero except at
    vertices, where it is the conjugation defining the system.  Tags are
    the minimal leaf heights, for locality checks.

    Only valid for instances whose coefficients are the pure gauge data;
    an enriched instance no longer matches its recorded gauges.
    """
    from .mixed import FiberModel

    if inst.enriched:
        raise ValueError(
            "instance was enriched away from its gauge; no model available")

    M = inst.A.M
    rename = {b: ("w",) + b for b in M.basis}
    omega_basis = [rename[b] for b in M.basis]
    omega_degree = {rename[b]: M.degree(b) for b in M.basis}
    D = {rename[r]: {rename[c]: v for c, v in row.items()}
         for r, row in inst.D0.items()}
    I = {}
    for v in inst.A.S.vertices():
        inv = unipotent_inverse(inst.U[v[0]], M.basis)
        I[v] = {r: {rename[c]: val for c, val in row.items()}
                for r, row in inv.items()}
    eta = {}
    for (leaf, i) in M.basis:
        eta[rename[(leaf, i)]] = min(
            inst.L.height(leaf, v[0]) for v in inst.A.S.vertices())
    return FiberModel(omega_basis=omega_basis, omega_degree=omega_degree,
                      D=D, I=I, eta=eta)


# ---------------------------------------------------------------------------
# JSON instance files
# ---------------------------------------------------------------------------

def instance_to_json(S: BaseComplex, L: LeafSystem, A: CoefficientSystem | None
                     ) -> dict:
    data = {
        "complex": [list(s) for s in S.simplices],
        "leaves": [[name, L.index[name], L.rank[name]] for name in L.leaves],
        "epsilon": str(L.epsilon),
        "heights": {
            name: {str(v[0]): str(L.height(name, v[0])) for v in S.vertices()}
            for name in L.leaves
        },
    }
    if A is not None:
        data["coefficients"] = A.to_json()
    return data


def instance_from_json(data: dict):
    S = build_complex([tuple(s) for s in data["complex"]])
    heights = {}
    for name, hv in data["heights"].items():
        for v, h in hv.items():
            heights[(name, int(v))] = h
    L = LeafSystem([(n, int(i), int(r)) for n, i, r in data["leaves"]],
                   heights, data.get("epsilon", "1"))
    A = None
    if "coefficients" in data:
        A = CoefficientSystem.from_json(S, L, data["coefficients"])
    else:
        A = CoefficientSystem(S, L)
    return S, L, A
