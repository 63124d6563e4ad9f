"""Partition-of-unity smoothing of the per-simplex form data.

The connection forms built in :mod:`flatforms.mixed` live simplex by
simplex and agree on shared faces, but their normal components jump
when crossing a face.  Reparametrizing each simplex by the self-map
whose barycentric components are a normalized bump of the original
coordinates removes the jump to first order: the differential of each
component vanishes along the faces where that coordinate is zero, so
pulling back kills every non-tangential contribution there.

Everything stays rational.  The default bump B(t) = t^2(3-2t) gives
component images B(x_v)/Q with the simplex-wide normalizer
Q = sum_v B(x_v), so pullbacks are matrices of polynomial forms divided
by a power of Q.  All checks cross-multiply instead of dividing, making
them exact; Q restricts to the corresponding normalizer of every face
because B(0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .flatsys import (
    CoefficientSystem,
    fiber_homology,
    holonomy_on_homology,
)
from .forms import PolyForm, RatioForm
from .linalg import Q, eye, mat_eq, qx, rank
from .mixed import (
    ChainMapData,
    FiberModel,
    FormMatrix,
    MixedConnectionData,
    _ind_map,
)
from .simplicial import EMPTY, BaseComplex, Simplex, dim, face_positions, facet


# ---------------------------------------------------------------------------
# partitions of unity
# ---------------------------------------------------------------------------


def _bump_cubic(x: PolyForm) -> PolyForm:
    """B(x) = 3x^2 - 2x^3 for a 0-form x."""
    x2 = x.wedge(x)
    return x2.scale(3) - x2.wedge(x).scale(2)


@dataclass
class PartitionOfUnity:
    """Per simplex, the numerators of phi_v for its vertices v, over a
    common denominator.

    A vertex not in sigma has no entry over sigma: its function is
    identically zero there, which is what keeps phi supported in open
    stars.  Genuinely polynomial partitions use denominator 1.
    """

    S: BaseComplex
    num: dict = field(default_factory=dict)   # (sigma, v) -> PolyForm, 0-form
    den: dict = field(default_factory=dict)   # sigma -> PolyForm, 0-form

    def to_json(self) -> dict:
        return {
            "num": [{"sigma": list(s), "v": v, "form": p.to_json()}
                    for (s, v), p in sorted(self.num.items())],
            "den": [{"sigma": list(s), "form": p.to_json()}
                    for s, p in sorted(self.den.items())],
        }

    @classmethod
    def from_json(cls, S: BaseComplex, data: dict) -> "PartitionOfUnity":
        P = cls(S)
        for item in data["num"]:
            P.num[(tuple(item["sigma"]), int(item["v"]))] = \
                PolyForm.from_json(item["form"])
        for item in data["den"]:
            P.den[tuple(item["sigma"])] = PolyForm.from_json(item["form"])
        return P


def partition_default(S: BaseComplex) -> PartitionOfUnity:
    """phi_v = B(x_v) / sum_w B(x_w) with the cubic bump."""
    P = PartitionOfUnity(S)
    for sigma in S:
        l = dim(sigma)
        total = PolyForm.zero(l)
        for j, v in enumerate(sigma):
            n = _bump_cubic(PolyForm.coordinate(l, j))
            P.num[(sigma, v)] = n
            total = total + n
        P.den[sigma] = total
    return P


def partition_linear(S: BaseComplex) -> PartitionOfUnity:
    """phi_v = x_v: a valid partition whose differentials do not vanish
    along the faces.  The induced self-map is the identity, so this is
    the "no smoothing" baseline; first-order matching fails on it."""
    P = PartitionOfUnity(S)
    for sigma in S:
        l = dim(sigma)
        for j, v in enumerate(sigma):
            P.num[(sigma, v)] = PolyForm.coordinate(l, j)
        P.den[sigma] = PolyForm.one(l)
    return P


def _flip_last(p: PolyForm) -> PolyForm:
    """Rewrite a form in the chart eliminating the last vertex.

    In the new chart the variables are the barycentric coordinates of
    vertices 0..l-1, so the face {x_0 = 0} becomes the coordinate
    hyperplane of the first variable.
    """
    l = p.k
    images = {}
    for i in range(1, l):
        images[i] = PolyForm(l, {(tuple(1 if t == i else 0 for t in range(l)),
                                  ()): Q(1)})
    images[l] = PolyForm.coordinate(l, 0)
    return p.pullback(l, images)


def _subst_zero(p: PolyForm, var: int) -> PolyForm:
    """Set the chart variable to zero, keeping the dx structure."""
    return PolyForm(p.k, {key: c for key, c in p.terms.items()
                          if key[0][var - 1] == 0})


def _vanishes_on_face(p: PolyForm, j: int) -> bool:
    """Whether every coefficient of ``p`` vanishes at points of the
    facet omitting vertex position ``j`` (normal components included)."""
    if j >= 1:
        return _subst_zero(p, j).is_zero()
    return _subst_zero(_flip_last(p), 1).is_zero()


def validate_partition(P: PartitionOfUnity) -> list[str]:
    """Sum to one, star support, restriction coherence between faces,
    positivity samples for the denominator, and first-order flatness of
    every phi_v along its zero face."""
    problems = []
    for sigma in P.S:
        l = dim(sigma)
        den = P.den[sigma]
        total = PolyForm.zero(l)
        for v in sigma:
            total = total + P.num[(sigma, v)]
        if total != den:
            problems.append(f"partition does not sum to one on {sigma}")
        for (s, v) in P.num:
            if s == sigma and v not in sigma:
                problems.append(f"phi_{v} carried on {sigma} outside its star")
        samples = [tuple(Q(1, l + 1) for _ in range(l))]
        samples += [tuple(Q(1) if t == i else Q(0) for t in range(l))
                    for i in range(l)] + [tuple(Q(0) for _ in range(l))]
        for pt in samples:
            if den.value_at(pt) <= 0:
                problems.append(f"denominator not positive on {sigma} at {pt}")
                break
        for jj in range(l + 1):
            tau = facet(sigma, jj)
            if dim(tau) < 0:
                continue
            pos = face_positions(tau, sigma)
            if P.den[sigma].restrict(pos) != P.den[tau]:
                problems.append(
                    f"denominator on {sigma} does not restrict to {tau}")
                continue
            for v in tau:
                if P.num[(sigma, v)].restrict(pos) != P.num[(tau, v)]:
                    problems.append(
                        f"phi_{v} on {sigma} does not restrict to {tau}")
        # d(phi_v) = (den dN - N dden) / den^2 must die on {x_v = 0}
        for j, v in enumerate(sigma):
            if l == 0:
                continue
            n = P.num[(sigma, v)]
            w = den.wedge(n.d()) - den.d().wedge(n)
            if not _vanishes_on_face(w, j):
                problems.append(
                    f"d(phi_{v}) does not vanish on the face x_{v}=0 of {sigma}")
    return problems


def phibar(P: PartitionOfUnity, sigma: Simplex, point) -> tuple:
    """Image of a point of |sigma| under the partition self-map.

    ``point`` and the result are barycentric tuples over the vertices
    of sigma.
    """
    l = dim(sigma)
    pt = [qx(c) for c in point]
    if len(pt) != l + 1:
        raise ValueError("point has wrong length")
    chart = pt[1:]
    vals = [P.num[(sigma, v)].value_at(chart) for v in sigma]
    total = P.den[sigma].value_at(chart)
    if total == 0:
        raise ZeroDivisionError(f"partition denominator vanishes at {point}")
    return tuple(v / total for v in vals)


# ---------------------------------------------------------------------------
# matrices of rational forms
# ---------------------------------------------------------------------------


def _wedge_left(w: PolyForm, fm: FormMatrix) -> FormMatrix:
    out = FormMatrix(fm.k, fm.row_deg, fm.col_deg)
    for r, c, p in fm.entries():
        out.set_entry(r, c, w.wedge(p))
    return out


class RatioMatrix:
    """num / den**e with a FormMatrix numerator.

    Binary operations require the same denominator 0-form; exponents
    are tracked and reconciled by cross-multiplication, never division.
    """

    __slots__ = ("num", "den", "e")

    def __init__(self, num: FormMatrix, den: PolyForm, e: int = 0):
        self.num = num
        self.den = den
        self.e = e

    def _den_pow(self, m: int) -> PolyForm:
        p = PolyForm.one(self.den.k)
        for _ in range(m):
            p = p.wedge(self.den)
        return p

    def promoted(self, e: int) -> FormMatrix:
        if e < self.e:
            raise ValueError("cannot lower the exponent")
        if e == self.e:
            return self.num
        return _wedge_left(self._den_pow(e - self.e), self.num)

    def add(self, other: "RatioMatrix") -> "RatioMatrix":
        if self.den != other.den:
            raise ValueError("denominators differ")
        e = max(self.e, other.e)
        return RatioMatrix(self.promoted(e).add(other.promoted(e)), self.den, e)

    def compose(self, other: "RatioMatrix") -> "RatioMatrix":
        if self.den != other.den:
            raise ValueError("denominators differ")
        return RatioMatrix(self.num.compose(other.num), self.den,
                           self.e + other.e)

    def mul_const_right(self, m, new_col_deg=None) -> "RatioMatrix":
        return RatioMatrix(self.num.mul_const_right(m, new_col_deg=new_col_deg),
                           self.den, self.e)

    def d(self) -> "RatioMatrix":
        out = FormMatrix(self.num.k, self.num.row_deg, self.num.col_deg)
        dden = self.den.d()
        for r, c, p in self.num.entries():
            out.set_entry(r, c,
                          self.den.wedge(p.d()) - dden.wedge(p).scale(self.e))
        return RatioMatrix(out, self.den, self.e + 1)

    def restrict(self, positions, den_restricted: PolyForm) -> "RatioMatrix":
        if self.den.restrict(tuple(positions)) != den_restricted:
            raise ValueError("denominator does not restrict as claimed")
        return RatioMatrix(self.num.restrict(tuple(positions)),
                           den_restricted, self.e)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def eq(self, other: "RatioMatrix") -> bool:
        if self.den != other.den:
            raise ValueError("denominators differ")
        e = max(self.e, other.e)
        return self.promoted(e).eq(other.promoted(e))


def _pullback_with_images(fm: FormMatrix, target_k: int,
                          images: dict, den: PolyForm) -> RatioMatrix:
    """Entrywise substitution of rational 0-forms for the chart
    variables of ``fm``; ``images[i]`` is a RatioForm over ``den``."""
    dimg = {i: f.d() for i, f in images.items()}
    out = FormMatrix(target_k, fm.row_deg, fm.col_deg)
    exps_out = {}
    for r, c, p in fm.entries():
        acc_total = RatioForm(PolyForm.zero(target_k), den, 0)
        for (exps, dxs), coef in p.terms.items():
            acc = RatioForm(PolyForm.const(target_k, coef), den, 0)
            for i, e in enumerate(exps, start=1):
                for _ in range(e):
                    acc = acc.wedge(images[i])
            for i in dxs:
                acc = acc.wedge(dimg[i])
            acc_total = acc_total + acc
        out.set_entry(r, c, acc_total.num)
        exps_out[(r, c)] = acc_total.e
    top = max(exps_out.values(), default=0)
    result = FormMatrix(target_k, fm.row_deg, fm.col_deg)
    for r, c, p in out.entries():
        gap = top - exps_out[(r, c)]
        w = PolyForm.one(target_k)
        for _ in range(gap):
            w = w.wedge(den)
        result.set_entry(r, c, w.wedge(p))
    return RatioMatrix(result, den, top)


def pullback_matrix(fm: FormMatrix, P: PartitionOfUnity, sigma: Simplex
                    ) -> RatioMatrix:
    """Pull a matrix of forms on |sigma| back along the partition
    self-map, entry by entry."""
    l = dim(sigma)
    den = P.den[sigma]
    img = {i + 1: RatioForm(P.num[(sigma, v)], den, 1)
           for i, v in enumerate(sigma[1:])}
    return _pullback_with_images(fm, l, img, den)


def face_collapse_pullback(P: PartitionOfUnity, sigma: Simplex, tau: Simplex,
                           fm_tau: FormMatrix) -> RatioMatrix:
    """Pull a matrix on |tau| back to |sigma| along the composite of the
    partition self-map with the projection onto tau.

    The components are the phi of tau's vertices over sigma's
    denominator, so on the face itself the composite agrees with the
    self-map; off the face it is the first-order model the smoothing is
    compared against.
    """
    den = P.den[sigma]
    img = {t: RatioForm(P.num[(sigma, v)], den, 1)
           for t, v in enumerate(tau[1:], start=1)}
    return _pullback_with_images(fm_tau, dim(sigma), img, den)


# ---------------------------------------------------------------------------
# the global family
# ---------------------------------------------------------------------------


@dataclass
class GlobalSuperconnection:
    A: CoefficientSystem
    P: PartitionOfUnity
    aglob: dict = field(default_factory=dict)   # sigma -> RatioMatrix
    iglob: dict = field(default_factory=dict)   # sigma -> RatioMatrix
    aprime: dict = field(default_factory=dict)  # sigma -> FormMatrix
    FM: Optional[FiberModel] = None


def pullback_global(data: MixedConnectionData, P: PartitionOfUnity
                    ) -> GlobalSuperconnection:
    G = GlobalSuperconnection(A=data.A, P=P)
    for sigma in data.A.S:
        G.aprime[sigma] = data.get(sigma, EMPTY)
        G.aglob[sigma] = pullback_matrix(G.aprime[sigma], P, sigma)
    return G


def verify_global(G: GlobalSuperconnection) -> dict:
    """Flatness, cross-face agreement, and first-order normal matching
    of the pulled-back connection, all as exact identities.

    First-order matching at a facet asks for more than agreement of the
    tangential restrictions: at points of the face, every component of
    the pulled-back form -- the ones involving the conormal direction
    included -- must be the value predicted by the face's own data,
    pulled back along the collapse onto that face.  Smoothing makes
    this work by flattening the map against each face; a partition
    whose bump has nonzero slope at the ends (the piecewise-linear one,
    say) leaves genuinely normal terms behind and fails here.
    """
    report = {"flat": [], "c0": [], "first_order": []}
    for sigma in G.A.S:
        g = G.aglob[sigma]
        if not g.d().add(g.compose(g)).is_zero():
            report["flat"].append(f"pullback over {sigma} is not flat")
        l = dim(sigma)
        for j in range(l + 1):
            tau = facet(sigma, j)
            if dim(tau) < 0:
                continue
            pos = face_positions(tau, sigma)
            try:
                restr = g.restrict(pos, G.P.den[tau])
            except ValueError:
                report["c0"].append(
                    f"denominator of {sigma} does not restrict to {tau}")
                continue
            if not restr.eq(G.aglob[tau]):
                report["c0"].append(
                    f"global form on {sigma} does not restrict to {tau}")
            rhs = face_collapse_pullback(G.P, sigma, tau, G.aprime[tau])
            e = max(g.e, rhs.e)
            diff = g.promoted(e).sub(rhs.promoted(e))
            for r, c, p in diff.entries():
                if not _vanishes_on_face(p, j):
                    report["first_order"].append(
                        f"block {r}<-{c} on {sigma} is not determined by "
                        f"its face {tau} to first order")
                    break
    return report


def assemble_I(G: GlobalSuperconnection, cm: ChainMapData
               ) -> GlobalSuperconnection:
    """I_glob over sigma: the face coordinates of I'(sigma, empty),
    pulled back and recombined against the fiber comparisons."""
    G.FM = cm.FM
    M = cm.A.M
    for sigma in G.A.S:
        l = dim(sigma)
        total = RatioMatrix(FormMatrix(l, _ind_map(M), cm.FM.omega_degree),
                            G.P.den[sigma], 0)
        for s2, b in sorted(cm.coords(sigma, EMPTY).items()):
            pb = pullback_matrix(b, G.P, sigma)
            total = total.add(pb.mul_const_right(
                cm.FM.imap(s2), new_col_deg=cm.FM.omega_degree))
        G.iglob[sigma] = total
    return G


def verify_chain(G: GlobalSuperconnection) -> list[str]:
    """The assembled global chain map intertwines the fiber differential
    with the pulled-back connection, and matches across faces."""
    if G.FM is None:
        raise ValueError("no chain map assembled")
    problems = []
    for sigma in G.A.S:
        ig = G.iglob[sigma]
        lhs = ig.mul_const_right(G.FM.D)
        rhs = ig.d().add(G.aglob[sigma].compose(ig))
        if not lhs.eq(rhs):
            problems.append(f"global chain identity fails over {sigma}")
        for j in range(dim(sigma) + 1):
            tau = facet(sigma, j)
            if dim(tau) < 0:
                continue
            pos = face_positions(tau, sigma)
            if not ig.restrict(pos, G.P.den[tau]).eq(G.iglob[tau]):
                problems.append(
                    f"global chain map on {sigma} does not restrict to {tau}")
    return problems


# ---------------------------------------------------------------------------
# quasi-isomorphism bookkeeping
# ---------------------------------------------------------------------------


def omega_betti(FM: FiberModel) -> dict[int, int]:
    """Betti numbers of (Omega, D), exact over Q."""
    degrees = sorted({FM.omega_degree[e] for e in FM.omega_basis})
    by_deg = {q: [e for e in FM.omega_basis if FM.omega_degree[e] == q]
              for q in degrees}
    pos = {e: i for i, e in enumerate(FM.omega_basis)}

    def block_rank(q: int) -> int:
        cols = by_deg.get(q, [])
        rows = by_deg.get(q + 1, [])
        if not cols or not rows:
            return 0
        dense = [[Q(0)] * len(cols) for _ in rows]
        for i, r in enumerate(rows):
            row = FM.D.get(r, {})
            for jj, c in enumerate(cols):
                if c in row:
                    dense[i][jj] = row[c]
        return rank(dense)

    out = {}
    for q in degrees:
        out[q] = len(by_deg[q]) - block_rank(q) - block_rank(q - 1)
    return out


def quasi_iso_ranks(A: CoefficientSystem, FM: FiberModel) -> dict:
    """Per vertex: Betti numbers of the fiber complex against those of
    (Omega, D).  Per triangle: holonomy on homology is the identity.
    """
    betti_o = omega_betti(FM)
    report = {"omega": betti_o, "vertices": {}, "triangles": {},
              "problems": []}
    for v in A.S.vertices():
        H = fiber_homology(A, v)
        betti_v = {q: r for q, r in H.betti.items() if r}
        report["vertices"][v] = betti_v
        if betti_v != {q: r for q, r in betti_o.items() if r}:
            report["problems"].append(
                f"Betti numbers over {v} differ from the fiber complex: "
                f"{betti_v} vs {betti_o}")
    for tri in A.S.of_dim(2):
        hol = holonomy_on_homology(A, tri)
        ok = mat_eq(hol, eye(len(hol)))
        report["triangles"][tri] = ok
        if not ok:
            report["problems"].append(f"holonomy around {tri} is not trivial")
    return report
