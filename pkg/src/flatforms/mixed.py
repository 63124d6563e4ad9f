"""Lifting a flat coefficient system to polynomial-form data over each
simplex, together with the accompanying chain maps into the fibers.

The central objects are matrices of polynomial forms indexed by the
graded module basis.  Composition follows the sign rule of a graded
tensor product: when a block of grading degree e passes a form of
degree r, the product picks up (-1)**(e*r).  With that convention the
entrywise exterior derivative satisfies the graded Leibniz rule with
respect to total degree (grading plus form degree), which is what makes
the flatness computations below close up.

Over a simplex sigma, data is stored per face sigma' of sigma (plus the
empty face) as a form matrix on the span of the vertices of sigma from
the last vertex of sigma' onward.  The construction walks faces of the
base in increasing dimension; inside a simplex it copies data for
non-initial faces from smaller simplices, then treats initial segments
by descending length with a three-beat step: recursion on the inner
span, compatibility checks against previously built data, and extension
from boundary values.  The empty face is finally reached by a gauge
step whose unipotent is invertible by a finite geometric series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .flatsys import (
    CoefficientSystem,
    SMat,
    smat_add,
    smat_entries,
    smat_identity,
    smat_is_zero,
    smat_mul,
    smat_scale,
    smat_sub,
)
from .forms import (
    ExtensionInfeasible,
    IncompatibleBoundaryData,
    PolyForm,
    extend_from_boundary,
)
from .linalg import Q, qx, solve_dense
from .morse import GradedModule, LeafSystem, prec
from .simplicial import (
    EMPTY,
    Simplex,
    all_faces,
    boundary_chain,
    dim,
    face_positions,
    facet,
    relative_simplex,
)


class NotNilpotent(Exception):
    pass


class ChainIdentityViolation(Exception):
    pass


def _sign(e: int) -> int:
    return -1 if e % 2 else 1


# ---------------------------------------------------------------------------
# matrices of polynomial forms
# ---------------------------------------------------------------------------

class FormMatrix:
    """Sparse matrix of PolyForms on the chart of a fixed simplex.

    ``row_deg``/``col_deg`` give the grading degree of each row/column
    key; composition applies the sign rule described in the module
    docstring using the left factor's block degree and the right
    factor's per-term form degree.
    """

    __slots__ = ("k", "rows", "row_deg", "col_deg")

    def __init__(self, k: int, row_deg=None, col_deg=None):
        self.k = k
        self.rows: dict = {}
        self.row_deg = row_deg
        self.col_deg = col_deg

    # -- building ------------------------------------------------------

    @classmethod
    def from_const(cls, k: int, m: SMat, row_deg, col_deg) -> "FormMatrix":
        out = cls(k, row_deg, col_deg)
        for r, c, v in smat_entries(m):
            out.rows.setdefault(r, {})[c] = PolyForm.const(k, v)
        return out

    @classmethod
    def identity(cls, k: int, keys, deg) -> "FormMatrix":
        out = cls(k, deg, deg)
        for key in keys:
            out.rows[key] = {key: PolyForm.one(k)}
        return out

    def set_entry(self, r, c, p: PolyForm):
        if p.is_zero():
            row = self.rows.get(r)
            if row:
                row.pop(c, None)
                if not row:
                    self.rows.pop(r, None)
            return
        self.rows.setdefault(r, {})[c] = p

    def entry(self, r, c) -> PolyForm:
        p = self.rows.get(r, {}).get(c)
        return p if p is not None else PolyForm.zero(self.k)

    def entries(self):
        for r, row in self.rows.items():
            for c, p in row.items():
                yield r, c, p

    def copy(self) -> "FormMatrix":
        out = FormMatrix(self.k, self.row_deg, self.col_deg)
        out.rows = {r: dict(row) for r, row in self.rows.items()}
        return out

    # -- linear structure -----------------------------------------------

    def add(self, other: "FormMatrix") -> "FormMatrix":
        out = self.copy()
        for r, c, p in other.entries():
            out.set_entry(r, c, out.entry(r, c) + p)
        return out

    def sub(self, other: "FormMatrix") -> "FormMatrix":
        return self.add(other.scale(-1))

    def scale(self, c) -> "FormMatrix":
        out = FormMatrix(self.k, self.row_deg, self.col_deg)
        for r, cc, p in self.entries():
            out.set_entry(r, cc, p.scale(c))
        return out

    def is_zero(self) -> bool:
        return all(p.is_zero() for _r, _c, p in self.entries())

    def eq(self, other: "FormMatrix") -> bool:
        return self.sub(other).is_zero()

    # -- differential and composition -------------------------------------

    def d(self) -> "FormMatrix":
        out = FormMatrix(self.k, self.row_deg, self.col_deg)
        for r, c, p in self.entries():
            out.set_entry(r, c, p.d())
        return out

    def compose(self, other: "FormMatrix") -> "FormMatrix":
        """Koszul composition; the left factor must carry degree maps."""
        out = FormMatrix(self.k, self.row_deg, other.col_deg)
        for r, row in self.rows.items():
            for t, p in row.items():
                orow = other.rows.get(t)
                if not orow:
                    continue
                e = self.row_deg[r] - self.col_deg[t]
                for c, q in orow.items():
                    prod = _koszul_wedge(p, q, e)
                    if not prod.is_zero():
                        out.set_entry(r, c, out.entry(r, c) + prod)
        return out

    def mul_const_right(self, m: SMat, new_col_deg=None) -> "FormMatrix":
        """Compose with a constant matrix on the right (no signs arise)."""
        out = FormMatrix(self.k, self.row_deg, new_col_deg or self.col_deg)
        for r, row in self.rows.items():
            for t, p in row.items():
                mrow = m.get(t)
                if not mrow:
                    continue
                for c, v in mrow.items():
                    out.set_entry(r, c, out.entry(r, c) + p.scale(v))
        return out

    def restrict(self, positions) -> "FormMatrix":
        out = FormMatrix(len(positions) - 1, self.row_deg, self.col_deg)
        for r, c, p in self.entries():
            out.set_entry(r, c, p.restrict(positions))
        return out

    def form_degrees(self) -> set:
        degs = set()
        for _r, _c, p in self.entries():
            degs |= p.form_degrees()
        return degs

    def max_poly_degree(self) -> int:
        return max((p.poly_degree() for *_rc, p in self.entries()), default=0)


def _koszul_wedge(p: PolyForm, q: PolyForm, e: int) -> PolyForm:
    if e % 2 == 0:
        return p.wedge(q)
    signed = PolyForm(q.k)
    signed.terms = {key: (-c if len(key[1]) % 2 else c)
                    for key, c in q.terms.items()}
    return p.wedge(signed)


def neumann_inverse(g_minus_id: FormMatrix, keys, max_len: int) -> FormMatrix:
    """Inverse of id + n for nilpotent n, as a finite alternating series."""
    k = g_minus_id.k
    ident = FormMatrix.identity(k, keys, g_minus_id.row_deg)
    out = ident
    power = ident
    sign = -1
    for _ in range(max_len + 1):
        power = power.compose(g_minus_id)
        if power.is_zero():
            return out
        out = out.add(power.scale(sign))
        sign = -sign
    raise NotNilpotent(
        f"geometric series did not terminate within {max_len + 1} steps")


# ---------------------------------------------------------------------------
# connection data over the base
# ---------------------------------------------------------------------------

@dataclass
class MixedConnectionData:
    A: CoefficientSystem
    aprime: dict = field(default_factory=dict)   # (sigma, sigma') -> FormMatrix
    report: list = field(default_factory=list)

    def get(self, sigma: Simplex, sigma_p: Simplex) -> FormMatrix:
        return self.aprime[(tuple(sigma), tuple(sigma_p))]

    def domain(self, sigma: Simplex, sigma_p: Simplex) -> Simplex:
        return relative_simplex(sigma, sigma_p)


def _ind_map(M: GradedModule) -> dict:
    return {b: M.degree(b) for b in M.basis}


def _const_endo(A: CoefficientSystem, sigma_face: Simplex, k: int) -> FormMatrix:
    deg = _ind_map(A.M)
    return FormMatrix.from_const(k, A.a(sigma_face), deg, deg)


def copy_noninitial(data: MixedConnectionData, sigma: Simplex,
                    sigma_p: Simplex) -> FormMatrix:
    """Data for a non-initial face comes verbatim from a smaller simplex.

    The donor is the face of ``sigma`` spanned by ``sigma_p`` and all
    vertices after the last vertex of ``sigma_p``; its span relative to
    ``sigma_p`` is the same simplex, so no reindexing happens.
    """
    pos = face_positions(sigma_p, sigma)
    donor = tuple(sorted(set(sigma_p) | set(sigma[pos[-1] + 1:])))
    assert donor != sigma, "face is initial, nothing to copy from"
    return data.get(donor, sigma_p).copy()


def a_doubleprime(data: MixedConnectionData, sigma: Simplex, k: int
                  ) -> FormMatrix:
    """Recursion value for the initial segment sigma[:k], on the span of
    sigma[k:].

    All inputs live on the chart of sigma[k:]; the value returned is
    the candidate restriction of a'(sigma, sigma[:k-1]) to that span.
    """
    A = data.A
    l = dim(sigma)
    m = l - k
    s = _sign(k + 1)
    total = FormMatrix(m, _ind_map(A.M), _ind_map(A.M))

    # alternating sum over the k-vertex faces of sigma[:k+1] omitting an
    # inner vertex (all non-initial, hence already present)
    for j in range(k):
        fj = sigma[:j] + sigma[j + 1: k + 1]
        total = total.add(data.get(sigma, fj).scale(s * _sign(j)))

    # splitting products against the initial-segment coefficients
    for j in range(1, k + 1):
        left = _const_endo(A, sigma[: j + 1], m)
        right = data.get(sigma, sigma[j: k + 1])
        total = total.add(left.compose(right).scale(s * _sign((k + 1) * (j - 1))))

    # seed, derivative and leading product involving the next segment up
    b = data.get(sigma, sigma[: k + 1])
    total = total.add(_const_endo(A, sigma[: k + 1], m))
    total = total.add(b.d())
    total = total.add(_const_endo(A, sigma[:1], m).compose(b))
    # product with the empty-face data of the inner span
    tail_empty = data.get(sigma[k:], EMPTY)
    total = total.add(b.compose(tail_empty).scale(s))
    return total


def check_compat(data: MixedConnectionData, sigma: Simplex, k: int,
                 candidate: FormMatrix) -> list[str]:
    """Facet comparisons for the recursion value on the span of sigma[k:].

    Every facet of the span is shared with data already built on a
    facet of ``sigma``; all comparisons must be exact.  The comparison
    at the facet dropping the leading vertex of the span re-enacts the
    sign cancellation that makes the construction well defined.
    """
    l = dim(sigma)
    m = l - k
    sigma_p = sigma[:k]
    problems = []
    if m == 0:
        return problems  # the span is a point; nothing to compare
    for p in range(k, l + 1):
        # facet of the span omitting global position p
        local = p - k
        small = candidate.restrict(tuple(q for q in range(m + 1) if q != local))
        tau = sigma[:p] + sigma[p + 1:]
        other = data.get(tau, sigma_p)
        # span of tau relative to sigma_p starts at sigma[k-1]; drop it
        odom = relative_simplex(tau, sigma_p)
        keep = tuple(i for i, v in enumerate(odom) if v != sigma[k - 1])
        other_r = other.restrict(keep)
        if not small.eq(other_r):
            problems.append(
                f"recursion value for {sigma}[:{k}] clashes with {tau} "
                f"data at the facet omitting {sigma[p]}")
    return problems


def extend_aprime(data: MixedConnectionData, sigma: Simplex, k: int,
                  candidate: FormMatrix, max_degree: Optional[int] = None
                  ) -> FormMatrix:
    """Extend the recursion value over the span of sigma[k-1:].

    Facet 0 of the extension domain carries the recursion value; facet
    q >= 1 carries the data of the facet of ``sigma`` omitting global
    position k-1+q, which lives on exactly that span.  Extension is
    blockwise polynomial extension with escalating ansatz degree.
    """
    A = data.A
    l = dim(sigma)
    sigma_p = sigma[:k]
    mm = l - k + 1  # dimension of the extension domain
    facets_data: list[FormMatrix] = [candidate]
    for q in range(1, mm + 1):
        p = k - 1 + q
        tau = sigma[:p] + sigma[p + 1:]
        facets_data.append(data.get(tau, sigma_p))

    keys = set()
    for fm in facets_data:
        for r, c, _p in fm.entries():
            keys.add((r, c))
    out = FormMatrix(mm, _ind_map(A.M), _ind_map(A.M))
    for (r, c) in sorted(keys, key=repr):
        bdata = [fm.entry(r, c) for fm in facets_data]
        if all(p.is_zero() for p in bdata):
            continue
        out.set_entry(r, c, extend_from_boundary(mm, bdata, max_degree=max_degree))
    return out


def gauge_empty(data: MixedConnectionData, sigma: Simplex) -> FormMatrix:
    """Empty-face data via the unipotent gauge id + a'(sigma, sigma_0)."""
    A = data.A
    l = dim(sigma)
    b = data.get(sigma, sigma[:1])
    deg = _ind_map(A.M)
    ident = FormMatrix.identity(l, A.M.basis, deg)
    g = ident.add(b)
    heights = {A.L.height(leaf, v) for leaf in A.L.leaves for v in sigma}
    ginv = neumann_inverse(b, A.M.basis, max_len=len(heights) + l + 2)
    inner = b.d().add(_const_endo(A, sigma[:1], l).compose(g))
    return ginv.compose(inner)


def verify_flat(data: MixedConnectionData, sigma: Simplex) -> bool:
    """d(a') + a' o a' = 0 for the empty-face data over ``sigma``."""
    ap = data.get(sigma, EMPTY)
    curv = ap.d().add(ap.compose(ap))
    return curv.is_zero()


def _rel_positions(sigma: Simplex, sigma_p: Simplex, tau: Simplex):
    """Positions of the span of (tau, sigma_p) inside the span of
    (sigma, sigma_p); tau must be a face of sigma containing sigma_p."""
    big = relative_simplex(sigma, sigma_p)
    small = relative_simplex(tau, sigma_p)
    return face_positions(small, big)


def check_structure(data: MixedConnectionData, sigma: Simplex,
                    sigma_p: Simplex) -> list[str]:
    """Triangularity, per-block homogeneity, and the degree window."""
    A = data.A
    L = A.L
    l = dim(sigma)
    kk = len(sigma_p)  # 0 for the empty face
    bound = l - (kk - 1) - 1
    problems = []
    fm = data.get(sigma, sigma_p)
    for (al, _i), (be, _m), p in fm.entries():
        if al == be or not prec(L, be, al, sigma):
            problems.append(
                f"a'({sigma},{sigma_p}): block {al}<-{be} breaks triangularity")
        want = 1 - kk - (L.index[al] - L.index[be])
        if not p.is_homogeneous(want):
            problems.append(
                f"a'({sigma},{sigma_p}): block {al}<-{be} not homogeneous "
                f"of form degree {want}")
        for r in p.form_degrees():
            if r < 0 or r > bound:
                problems.append(
                    f"a'({sigma},{sigma_p}): form degree {r} outside 0..{bound}")
    return problems


def check_face_coherence(data: MixedConnectionData, sigma: Simplex,
                         sigma_p: Simplex) -> list[str]:
    """Restriction to every facet through sigma_p matches stored data."""
    problems = []
    l = dim(sigma)
    fm = data.get(sigma, sigma_p)
    for j in range(l + 1):
        tau = facet(sigma, j)
        if sigma_p != EMPTY and not set(sigma_p) <= set(tau):
            continue
        if dim(tau) < 0:
            continue
        pos = _rel_positions(sigma, sigma_p, tau)
        if len(pos) == len(relative_simplex(sigma, sigma_p)):
            continue  # span unchanged; nothing new to compare
        if not fm.restrict(pos).eq(data.get(tau, sigma_p)):
            problems.append(
                f"a'({sigma},{sigma_p}) does not restrict to a'({tau},{sigma_p})")
    return problems


def build_mixed_connection(A: CoefficientSystem,
                           max_degree: Optional[int] = None,
                           strict: bool = True) -> MixedConnectionData:
    """Run the full construction over every simplex of the base.

    Records one report entry per simplex with the outcomes of the
    compatibility, structure, coherence and flatness checks.  With
    ``strict`` set, any failed exact check raises ``AssertionError``
    immediately; the returned report carries the details either way.
    """
    data = MixedConnectionData(A=A)
    M = A.M
    deg = _ind_map(M)
    for sigma in A.S:
        l = dim(sigma)
        entry = {"sigma": sigma, "compat": [], "structure": [],
                 "coherence": [], "flat": None}
        # the face equal to sigma itself carries zero on a point chart
        data.aprime[(sigma, sigma)] = FormMatrix(0, deg, deg)
        # non-initial faces come from smaller simplices
        for sigma_p in all_faces(sigma):
            if sigma_p == sigma:
                continue
            pos = face_positions(sigma_p, sigma)
            if pos[-1] >= len(sigma_p):
                data.aprime[(sigma, sigma_p)] = copy_noninitial(data, sigma, sigma_p)
        # initial segments, longest first
        for k in range(l, 0, -1):
            candidate = a_doubleprime(data, sigma, k)
            problems = check_compat(data, sigma, k, candidate)
            entry["compat"].extend(problems)
            if strict and problems:
                raise AssertionError("; ".join(problems))
            data.aprime[(sigma, sigma[:k])] = extend_aprime(
                data, sigma, k, candidate, max_degree=max_degree)
        # empty face by the gauge step
        data.aprime[(sigma, EMPTY)] = gauge_empty(data, sigma)
        for sigma_p in [EMPTY] + [f for f in all_faces(sigma) if f != sigma]:
            entry["structure"].extend(check_structure(data, sigma, sigma_p))
            entry["coherence"].extend(check_face_coherence(data, sigma, sigma_p))
        entry["flat"] = verify_flat(data, sigma)
        if strict and (entry["structure"] or entry["coherence"] or not entry["flat"]):
            raise AssertionError(f"verification failed over {sigma}: {entry}")
        data.report.append(entry)
    return data


# ---------------------------------------------------------------------------
# fiber models
# ---------------------------------------------------------------------------

@dataclass
class FiberModel:
    """A fixed complex (omega basis, differential D) together with
    per-simplex comparison maps into the graded module.

    ``I`` maps each simplex to a constant matrix with rows in the module
    basis and columns in the omega basis; the map over a simplex has
    grading degree minus its dimension.  ``eta`` optionally tags each
    omega basis element with a rational height for locality checks.
    """

    omega_basis: list
    omega_degree: dict
    D: SMat
    I: dict
    eta: Optional[dict] = None

    def imap(self, sigma: Simplex) -> SMat:
        return self.I.get(tuple(sigma), {})

    def to_json(self) -> dict:
        out = {
            "omega": [[e, self.omega_degree[e]] for e in self.omega_basis],
            "D": {r: {c: str(v) for c, v in sorted(row.items())}
                  for r, row in sorted(self.D.items())},
            "I": {",".join(map(str, s)): {
                    f"{al}:{i}": {e: str(v) for e, v in sorted(row.items())}
                    for (al, i), row in sorted(m.items())}
                  for s, m in sorted(self.I.items())},
        }
        if self.eta is not None:
            out["eta"] = {e: str(v) for e, v in sorted(self.eta.items())}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "FiberModel":
        I = {}
        for skey, m in data["I"].items():
            sigma = tuple(int(t) for t in skey.split(",")) if skey else EMPTY
            I[sigma] = {}
            for rkey, row in m.items():
                al, i = rkey.rsplit(":", 1)
                I[sigma][(al, int(i))] = {e: qx(v) for e, v in row.items()}
        return cls(
            omega_basis=[e for e, _ in data["omega"]],
            omega_degree={e: int(d) for e, d in data["omega"]},
            D={r: {c: qx(v) for c, v in row.items()}
               for r, row in data["D"].items()},
            I=I,
            eta=({e: qx(v) for e, v in data["eta"].items()}
                 if "eta" in data else None),
        )


def validate_fiber_model(A: CoefficientSystem, FM: FiberModel) -> list[str]:
    """Degree bookkeeping plus the full tower of comparison relations."""
    problems = []
    if not smat_is_zero(smat_mul(FM.D, FM.D)):
        problems.append("D does not square to zero")
    for r, c, _v in smat_entries(FM.D):
        if FM.omega_degree[r] != FM.omega_degree[c] + 1:
            problems.append(f"D entry {r}<-{c} is not of degree +1")
    M = A.M
    for sigma in A.S:
        m = dim(sigma)
        for r, c, _v in smat_entries(FM.imap(sigma)):
            if M.degree(r) - FM.omega_degree[c] != -m:
                problems.append(
                    f"I({sigma}) entry {r}<-{c} has degree "
                    f"{M.degree(r) - FM.omega_degree[c]}, want {-m}")
        defect = _comparison_defect(A, FM, sigma)
        if not smat_is_zero(defect):
            problems.append(f"comparison relation fails over {sigma}")
    return problems


def _comparison_defect(A: CoefficientSystem, FM: FiberModel,
                       sigma: Simplex) -> SMat:
    """Left side of the defining relation over ``sigma`` (zero when it holds)."""
    k = dim(sigma)
    if k == 0:
        return smat_sub(smat_mul(A.a(sigma), FM.imap(sigma)),
                        smat_mul(FM.imap(sigma), FM.D))
    total = smat_scale(_sign(k), smat_mul(FM.imap(sigma), FM.D))
    for sgn, f in boundary_chain(sigma):
        total = smat_add(total, smat_scale(sgn, FM.imap(f)))
    for j in range(k + 1):
        total = smat_add(total, smat_scale(
            _sign(k * (j - 1)),
            smat_mul(A.a(sigma[: j + 1]), FM.imap(sigma[j:]))))
    return total


def i_d_rewrite(A: CoefficientSystem, FM: FiberModel, sigma2: Simplex
                ) -> list[tuple[int, Optional[SMat], Simplex]]:
    """Rewrite I(sigma2) D as a combination of comparison maps of faces.

    Returns triples (coefficient, left constant or None, face) meaning
    I(sigma2) D = sum coeff * left * I(face).  At a vertex this is the
    chain-map relation; in higher dimension it inverts the comparison
    relation for the top term.
    """
    m = dim(sigma2)
    if m == 0:
        return [(1, A.a(sigma2), sigma2)]
    s = _sign(m + 1)
    out: list[tuple[int, Optional[SMat], Simplex]] = []
    for sgn, f in boundary_chain(sigma2):
        out.append((s * sgn, None, f))
    for j in range(m + 1):
        out.append((s * _sign(m * (j - 1)), A.a(sigma2[: j + 1]), sigma2[j:]))
    return out


# ---------------------------------------------------------------------------
# chain map data in face coordinates
# ---------------------------------------------------------------------------
#
# I'(sigma, sigma') is stored as {sigma'': FormMatrix} with endomorphism
# valued coefficients, standing for  sum_{sigma''} b(sigma'') o I(sigma'').
# All recursion steps act coordinate-wise, with the product against D
# rewritten through i_d_rewrite so coefficients stay supported on faces.

BDict = dict


def bdict_add(x: BDict, y: BDict) -> BDict:
    out = {s: fm.copy() for s, fm in x.items()}
    for s, fm in y.items():
        out[s] = out[s].add(fm) if s in out else fm.copy()
    return {s: fm for s, fm in out.items() if not fm.is_zero()}


def bdict_scale(x: BDict, c) -> BDict:
    return {s: fm.scale(c) for s, fm in x.items()}


def bdict_d(x: BDict) -> BDict:
    return {s: fm.d() for s, fm in x.items()}


def bdict_compose_left(fm: FormMatrix, x: BDict) -> BDict:
    return {s: fm.compose(g) for s, g in x.items()}


def bdict_mul_D(x: BDict, A: CoefficientSystem, FM: FiberModel) -> BDict:
    out: BDict = {}
    for s, fm in x.items():
        for coef, left, f in i_d_rewrite(A, FM, s):
            term = fm if left is None else fm.mul_const_right(left)
            term = term.scale(coef)
            out[f] = out[f].add(term) if f in out else term
    return {s: fm for s, fm in out.items() if not fm.is_zero()}


def bdict_restrict(x: BDict, positions) -> BDict:
    out = {s: fm.restrict(positions) for s, fm in x.items()}
    return {s: fm for s, fm in out.items() if not fm.is_zero()}


def bdict_values(x: BDict, FM: FiberModel, M: GradedModule, k: int
                 ) -> FormMatrix:
    """Collapse the face coordinates into an actual matrix of forms."""
    out = FormMatrix(k, _ind_map(M), FM.omega_degree)
    for s, fm in x.items():
        out = out.add(fm.mul_const_right(FM.imap(s), new_col_deg=FM.omega_degree))
    return out


def bdict_eq(x: BDict, y: BDict) -> bool:
    keys = set(x) | set(y)
    for s in keys:
        a = x.get(s)
        b = y.get(s)
        if a is None:
            if not b.is_zero():
                return False
        elif b is None:
            if not a.is_zero():
                return False
        elif not a.eq(b):
            return False
    return True


@dataclass
class ChainMapData:
    A: CoefficientSystem
    FM: FiberModel
    b: dict = field(default_factory=dict)   # (sigma, sigma') -> BDict
    report: list = field(default_factory=list)

    def coords(self, sigma: Simplex, sigma_p: Simplex) -> BDict:
        return self.b[(tuple(sigma), tuple(sigma_p))]

    def value(self, sigma: Simplex, sigma_p: Simplex) -> FormMatrix:
        k = dim(relative_simplex(sigma, sigma_p))
        return bdict_values(self.coords(sigma, sigma_p), self.FM, self.A.M, k)


def i_doubleprime(data: MixedConnectionData, cm: ChainMapData,
                  sigma: Simplex, k: int) -> BDict:
    """Recursion value of the chain map for sigma[:k] on the span of
    sigma[k:], in face coordinates."""
    A = data.A
    l = dim(sigma)
    m = l - k
    s = _sign(k + 1)
    deg = _ind_map(A.M)
    total: BDict = {}

    for j in range(k):
        fj = sigma[:j] + sigma[j + 1: k + 1]
        total = bdict_add(total, bdict_scale(cm.coords(sigma, fj), s * _sign(j)))

    for j in range(1, k + 1):
        left = _const_endo(A, sigma[: j + 1], m)
        total = bdict_add(total, bdict_scale(
            bdict_compose_left(left, cm.coords(sigma, sigma[j: k + 1])),
            s * _sign((k + 1) * (j - 1))))

    bb = cm.coords(sigma, sigma[: k + 1])
    seed = {sigma[: k + 1]: FormMatrix.identity(m, A.M.basis, deg)}
    total = bdict_add(total, seed)
    total = bdict_add(total, bdict_d(bb))
    total = bdict_add(total, bdict_compose_left(_const_endo(A, sigma[:1], m), bb))
    total = bdict_add(total, bdict_scale(bdict_mul_D(bb, A, cm.FM), s))
    return total


def extend_iprime(data: MixedConnectionData, cm: ChainMapData, sigma: Simplex,
                  k: int, candidate: BDict,
                  max_degree: Optional[int] = None) -> BDict:
    """Boundary extension of the chain-map recursion value.

    Facet 0 of the extension domain carries the recursion value; facet
    q >= 1 carries the stored data of the facet of ``sigma`` omitting
    global position k-1+q.  Only the maps themselves are forced to agree
    where facets meet; the face coordinates expressing them are a choice
    made independently over each face pair, and choices recorded for
    different facets routinely disagree.  So: extend coordinatewise when
    the recorded coordinates happen to glue, otherwise extend the value
    matrix and solve for a fresh face decomposition of the result.
    """
    A = data.A
    l = dim(sigma)
    sigma_p = sigma[:k]
    mm = l - k + 1
    facet_coords: list[BDict] = [candidate]
    for q in range(1, mm + 1):
        p = k - 1 + q
        tau = sigma[:p] + sigma[p + 1:]
        facet_coords.append(cm.coords(tau, sigma_p))

    try:
        return _extend_coords(A, facet_coords, mm, max_degree)
    except IncompatibleBoundaryData:
        pass

    facet_vals = [bdict_values(bd, cm.FM, A.M, mm - 1) for bd in facet_coords]
    keys = set()
    for fm in facet_vals:
        for r, c, _p in fm.entries():
            keys.add((r, c))
    value = FormMatrix(mm, _ind_map(A.M), cm.FM.omega_degree)
    for (r, c) in sorted(keys, key=repr):
        vdata = [fm.entry(r, c) for fm in facet_vals]
        if all(p.is_zero() for p in vdata):
            continue
        value.set_entry(r, c, extend_from_boundary(mm, vdata,
                                                   max_degree=max_degree))
    return solve_face_coords(A, cm.FM, sigma, sigma_p, value)


def _extend_coords(A: CoefficientSystem, facet_coords: list[BDict], mm: int,
                   max_degree: Optional[int]) -> BDict:
    """Per-coordinate extension; a coordinate missing on a facet is zero
    there.  Raises IncompatibleBoundaryData when the facets recorded
    genuinely different decompositions."""
    keys = set()
    for bd in facet_coords:
        for s, fm in bd.items():
            for r, c, _p in fm.entries():
                keys.add((s, r, c))
    deg = _ind_map(A.M)
    out: BDict = {}
    for (s, r, c) in sorted(keys, key=repr):
        bdata = []
        for bd in facet_coords:
            fm = bd.get(s)
            bdata.append(fm.entry(r, c) if fm is not None
                         else PolyForm.zero(mm - 1))
        if all(p.is_zero() for p in bdata):
            continue
        ext = extend_from_boundary(mm, bdata, max_degree=max_degree)
        fm_out = out.setdefault(s, FormMatrix(mm, deg, deg))
        fm_out.set_entry(r, c, ext)
    return {s: fm for s, fm in out.items() if not fm.is_zero()}


def solve_face_coords(A: CoefficientSystem, FM: FiberModel, sigma: Simplex,
                      sigma_p: Simplex, value: FormMatrix) -> BDict:
    """Face coordinates for a given chain-map value matrix.

    Produces b with  sum_{s''} b(s'') I(s'') == value,  supported on the
    triangular blocks (strictly below the diagonal in the precedence
    order of ``sigma``, or on the diagonal for faces of dimension at
    least the vertex count of ``sigma_p``) and homogeneous of the forced
    form degree in each block.  Because every I(s'') is a constant
    matrix the defining equation splits monomial by monomial into small
    exact linear systems, one per module row and form degree, solved
    with free variables zeroed.
    """
    L, M = A.L, A.M
    kk = len(sigma_p)
    mm = value.k
    faces = [s2 for s2 in all_faces(sigma)
             if not smat_is_zero(FM.imap(s2))]
    omega = list(FM.omega_basis)
    epos = {e: i for i, e in enumerate(omega)}
    deg = _ind_map(M)

    def columns(al: str, r: int) -> list[tuple[Simplex, tuple]]:
        cols = []
        for s2 in faces:
            for be_m in M.basis:
                be = be_m[0]
                if be == al:
                    if dim(s2) < kk:
                        continue
                elif not prec(L, be, al, sigma):
                    continue
                if L.index[be] - L.index[al] + dim(s2) - kk != r:
                    continue
                cols.append((s2, be_m))
        return cols

    solvers: dict[tuple, tuple[list, list]] = {}

    def solver(al: str, r: int):
        if (al, r) not in solvers:
            cols = columns(al, r)
            mat = [[Q(0)] * len(cols) for _ in omega]
            for ci, (s2, be_m) in enumerate(cols):
                for e, coef in FM.imap(s2).get(be_m, {}).items():
                    mat[epos[e]][ci] = coef
            solvers[(al, r)] = (cols, mat)
        return solvers[(al, r)]

    out: BDict = {}
    rows = sorted({r for r, _c, _p in value.entries()}, key=repr)
    for row in rows:
        rhs_by_mono: dict = {}
        for e in omega:
            for key, coef in value.entry(row, e).terms.items():
                vec = rhs_by_mono.setdefault(key, [Q(0)] * len(omega))
                vec[epos[e]] = coef
        for key in sorted(rhs_by_mono, key=repr):
            cols, mat = solver(row[0], len(key[1]))
            x = solve_dense(mat, rhs_by_mono[key])
            if x is None:
                raise ExtensionInfeasible(
                    f"no face decomposition over {sigma} (face {sigma_p}): "
                    f"row {row}, monomial {key}")
            for ci, coef in enumerate(x):
                if coef == 0:
                    continue
                s2, be_m = cols[ci]
                fm = out.setdefault(s2, FormMatrix(mm, deg, deg))
                fm.set_entry(row, be_m, fm.entry(row, be_m)
                             + PolyForm(mm, {key: coef}))
    return {s: fm for s, fm in out.items() if not fm.is_zero()}


def gauge_empty_iprime(data: MixedConnectionData, cm: ChainMapData,
                       sigma: Simplex) -> BDict:
    """Empty-face chain map via the same unipotent gauge as the connection."""
    A = data.A
    l = dim(sigma)
    deg = _ind_map(A.M)
    b1 = cm.coords(sigma, sigma[:1])
    n = data.get(sigma, sigma[:1])
    heights = {A.L.height(leaf, v) for leaf in A.L.leaves for v in sigma}
    ginv = neumann_inverse(n, A.M.basis, max_len=len(heights) + l + 2)
    inner = bdict_d(b1)
    inner = bdict_add(inner, bdict_compose_left(_const_endo(A, sigma[:1], l), b1))
    inner = bdict_add(inner, bdict_mul_D(b1, A, cm.FM))
    inner = bdict_add(inner, {sigma[:1]: FormMatrix.identity(l, A.M.basis, deg)})
    return bdict_compose_left(ginv, inner)


def check_chain_identity(data: MixedConnectionData, cm: ChainMapData,
                         sigma: Simplex) -> bool:
    """I'(sigma, empty) intertwines D with the empty-face connection."""
    val = cm.value(sigma, EMPTY)
    lhs = val.mul_const_right(cm.FM.D)
    rhs = val.d().add(data.get(sigma, EMPTY).compose(val))
    return lhs.eq(rhs)


def check_bcoord_structure(cm: ChainMapData, sigma: Simplex,
                           sigma_p: Simplex) -> list[str]:
    """Triangularity, the diagonal support bound, and homogeneity of the
    face coordinates."""
    A = cm.A
    L = A.L
    kk = len(sigma_p)
    problems = []
    for s2, fm in cm.coords(sigma, sigma_p).items():
        for (al, _i), (be, _m), p in fm.entries():
            if al != be and not prec(L, be, al, sigma):
                problems.append(
                    f"I'({sigma},{sigma_p}): coordinate at {s2} occupies "
                    f"non-triangular block {al}<-{be}")
            if al == be and dim(s2) < kk:
                problems.append(
                    f"I'({sigma},{sigma_p}): diagonal coordinate at {s2} "
                    f"of dimension {dim(s2)} < {kk}")
            want = L.index[be] - L.index[al] + dim(s2) - kk
            if not p.is_homogeneous(want):
                problems.append(
                    f"I'({sigma},{sigma_p}): block {al}<-{be} at {s2} not "
                    f"homogeneous of form degree {want}")
    return problems


def check_value_coherence(cm: ChainMapData, sigma: Simplex,
                          sigma_p: Simplex) -> list[str]:
    """Restrictions of the chain map to facets match stored data."""
    problems = []
    l = dim(sigma)
    val = cm.value(sigma, sigma_p)
    for j in range(l + 1):
        tau = facet(sigma, j)
        if dim(tau) < 0:
            continue
        if sigma_p != EMPTY and not set(sigma_p) <= set(tau):
            continue
        pos = _rel_positions(sigma, sigma_p, tau)
        if len(pos) == len(relative_simplex(sigma, sigma_p)):
            continue
        if not val.restrict(pos).eq(cm.value(tau, sigma_p)):
            problems.append(
                f"I'({sigma},{sigma_p}) does not restrict to I'({tau},{sigma_p})")
    return problems


def build_Iprime(data: MixedConnectionData, FM: FiberModel,
                 max_degree: Optional[int] = None,
                 strict: bool = True) -> ChainMapData:
    """Lift the comparison maps over every simplex of the base.

    Follows the same walk as the connection build; afterwards the
    empty-face data over each simplex must satisfy the chain identity
    against the empty-face connection (``ChainIdentityViolation``
    otherwise, when strict).
    """
    A = data.A
    cm = ChainMapData(A=A, FM=FM)
    for sigma in A.S:
        l = dim(sigma)
        entry = {"sigma": sigma, "structure": [], "coherence": [],
                 "chain": None}
        cm.b[(sigma, sigma)] = {}
        for sigma_p in all_faces(sigma):
            if sigma_p == sigma:
                continue
            pos = face_positions(sigma_p, sigma)
            if pos[-1] >= len(sigma_p):
                donor_pos = pos
                donor = tuple(sorted(set(sigma_p) | set(sigma[donor_pos[-1] + 1:])))
                cm.b[(sigma, sigma_p)] = {
                    s: fm.copy() for s, fm in cm.coords(donor, sigma_p).items()}
        for k in range(l, 0, -1):
            candidate = i_doubleprime(data, cm, sigma, k)
            cm.b[(sigma, sigma[:k])] = extend_iprime(
                data, cm, sigma, k, candidate, max_degree=max_degree)
        cm.b[(sigma, EMPTY)] = gauge_empty_iprime(data, cm, sigma)
        for sigma_p in [EMPTY] + [f for f in all_faces(sigma) if f != sigma]:
            entry["structure"].extend(check_bcoord_structure(cm, sigma, sigma_p))
            entry["coherence"].extend(check_value_coherence(cm, sigma, sigma_p))
        entry["chain"] = check_chain_identity(data, cm, sigma)
        if strict and not entry["chain"]:
            raise ChainIdentityViolation(
                f"chain identity fails over {sigma}")
        if strict and (entry["structure"] or entry["coherence"]):
            raise AssertionError(f"verification failed over {sigma}: {entry}")
        cm.report.append(entry)
    return cm


# ---------------------------------------------------------------------------
# locality
# ---------------------------------------------------------------------------

def locality_check(data: MixedConnectionData, cm: ChainMapData) -> list[str]:
    """Row support of the chain maps against height-tagged fiber elements.

    For a leaf alpha and an omega basis element whose tag sits above
    h_alpha - epsilon^2 at every vertex of ``sigma``: the alpha rows of
    I'(sigma, sigma') kill it for nonempty sigma', and for the empty
    face they reduce to the diagonal vertex coordinates.
    """
    FM = cm.FM
    if FM.eta is None:
        raise ValueError("fiber model carries no height tags")
    A = data.A
    L = A.L
    eps2 = L.epsilon * L.epsilon
    problems = []
    for (sigma, sigma_p) in sorted(cm.b, key=repr):
        val = cm.value(sigma, sigma_p)
        for alpha in L.leaves:
            high = [e for e in FM.omega_basis
                    if all(FM.eta[e] > L.height(alpha, v) - eps2 for v in sigma)]
            if not high:
                continue
            if sigma_p != EMPTY:
                for (al, _i), c, p in val.entries():
                    if al == alpha and c in high and not p.is_zero():
                        problems.append(
                            f"I'({sigma},{sigma_p}) rows of {alpha} hit "
                            f"tagged element {c}")
            else:
                diag = FormMatrix(dim(sigma), _ind_map(A.M), FM.omega_degree)
                for v in sigma:
                    fm = cm.coords(sigma, EMPTY).get((v,))
                    if fm is None:
                        continue
                    keep = FormMatrix(fm.k, fm.row_deg, fm.col_deg)
                    for (al, i), (be, m), p in fm.entries():
                        if al == alpha and be == alpha:
                            keep.set_entry((al, i), (be, m), p)
                    diag = diag.add(keep.mul_const_right(
                        FM.imap((v,)), new_col_deg=FM.omega_degree))
                delta = val.sub(diag)
                for (al, _i), c, p in delta.entries():
                    if al == alpha and c in high and not p.is_zero():
                        problems.append(
                            f"I'({sigma},empty) rows of {alpha} at tagged "
                            f"element {c} exceed the vertex diagonal")
    return problems
