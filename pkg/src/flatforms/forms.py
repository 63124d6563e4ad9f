"""Polynomial differential forms on a standard simplex, exact coefficients.

A form on the k-simplex lives in the chart (x_1, ..., x_k) obtained by
eliminating the zeroth barycentric coordinate, x_0 = 1 - x_1 - ... - x_k.
Terms are stored sparsely as

    (exponents, dx-index tuple)  ->  Fraction coefficient

with exponent tuples of length k and strictly increasing dx index
tuples drawn from {1, ..., k}.  All operations (wedge, exterior
derivative, restriction to faces, extension from boundary data, the
contraction operator of the Poincaré lemma) are exact.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .linalg import Q, qx, solve_sparse

Key = tuple[tuple[int, ...], tuple[int, ...]]


class IncompatibleBoundaryData(Exception):
    """Boundary data whose facet restrictions disagree on a common face.

    ``certificate`` records one witnessing pair: the two facet indices,
    and the two (unequal) restrictions to their common face.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ExtensionInfeasible(Exception):
    """No polynomial extension found below the degree ceiling."""


def _merge_sign(left: tuple[int, ...], right: tuple[int, ...]):
    """Merge two increasing dx tuples; None if they share an index.

    Returns (sign, merged) where sign is (-1)**(number of transpositions
    needed to interleave ``right`` into ``left``).
    """
    for i in right:
        if i in left:
            return None
    merged = sorted(left + right)
    # count inversions between the two blocks
    inv = 0
    for a in left:
        for b in right:
            if a > b:
                inv += 1
    return (-1) ** inv, tuple(merged)


class PolyForm:
    __slots__ = ("k", "terms")

    def __init__(self, k: int, terms: Optional[dict] = None):
        self.k = k
        self.terms: dict[Key, Fraction] = {}
        if terms:
            for key, c in terms.items():
                c = qx(c)
                if c != 0:
                    self.terms[key] = c

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, k: int) -> "PolyForm":
        return cls(k)

    @classmethod
    def const(cls, k: int, c) -> "PolyForm":
        c = qx(c)
        if c == 0:
            return cls(k)
        return cls(k, {((0,) * k, ()): c})

    @classmethod
    def one(cls, k: int) -> "PolyForm":
        return cls.const(k, 1)

    @classmethod
    def coordinate(cls, k: int, i: int) -> "PolyForm":
        """Barycentric coordinate x_i as a 0-form, i in 0..k."""
        if not 0 <= i <= k:
            raise ValueError(f"coordinate index {i} out of range 0..{k}")
        if i > 0:
            exps = tuple(1 if j == i - 1 else 0 for j in range(k))
            return cls(k, {(exps, ()): Q(1)})
        # x_0 = 1 - x_1 - ... - x_k
        terms = {((0,) * k, ()): Q(1)}
        for j in range(1, k + 1):
            exps = tuple(1 if t == j - 1 else 0 for t in range(k))
            terms[(exps, ())] = Q(-1)
        return cls(k, terms)

    @classmethod
    def dx(cls, k: int, i: int) -> "PolyForm":
        """The differential dx_i, i in 0..k (dx_0 = -dx_1 - ... - dx_k)."""
        if not 0 <= i <= k:
            raise ValueError(f"dx index {i} out of range 0..{k}")
        if i > 0:
            return cls(k, {((0,) * k, (i,)): Q(1)})
        return cls(k, {((0,) * k, (j,)): Q(-1) for j in range(1, k + 1)})

    # -- ring / module structure --------------------------------------

    def copy(self) -> "PolyForm":
        return PolyForm(self.k, dict(self.terms))

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        return isinstance(other, PolyForm) and self.k == other.k \
            and self.terms == other.terms

    def __hash__(self):
        return hash((self.k, frozenset(self.terms.items())))

    def __add__(self, other: "PolyForm") -> "PolyForm":
        if self.k != other.k:
            raise ValueError("chart dimension mismatch")
        out = dict(self.terms)
        for key, c in other.terms.items():
            v = out.get(key, Q(0)) + c
            if v == 0:
                out.pop(key, None)
            else:
                out[key] = v
        res = PolyForm(self.k)
        res.terms = out
        return res

    def __neg__(self) -> "PolyForm":
        res = PolyForm(self.k)
        res.terms = {key: -c for key, c in self.terms.items()}
        return res

    def __sub__(self, other: "PolyForm") -> "PolyForm":
        return self + (-other)

    def scale(self, c) -> "PolyForm":
        c = qx(c)
        res = PolyForm(self.k)
        if c != 0:
            res.terms = {key: c * v for key, v in self.terms.items()}
        return res

    def __mul__(self, other):
        if isinstance(other, PolyForm):
            return self.wedge(other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def wedge(self, other: "PolyForm") -> "PolyForm":
        if self.k != other.k:
            raise ValueError("chart dimension mismatch")
        out: dict[Key, Fraction] = {}
        for (e1, d1), c1 in self.terms.items():
            for (e2, d2), c2 in other.terms.items():
                ms = _merge_sign(d1, d2)
                if ms is None:
                    continue
                sign, dd = ms
                ee = tuple(a + b for a, b in zip(e1, e2))
                key = (ee, dd)
                v = out.get(key, Q(0)) + sign * c1 * c2
                if v == 0:
                    out.pop(key, None)
                else:
                    out[key] = v
        res = PolyForm(self.k)
        res.terms = out
        return res

    def d(self) -> "PolyForm":
        out: dict[Key, Fraction] = {}
        for (exps, dxs), c in self.terms.items():
            for i in range(1, self.k + 1):
                e = exps[i - 1]
                if e == 0 or i in dxs:
                    continue
                ms = _merge_sign((i,), dxs)
                if ms is None:
                    continue
                sign, dd = ms
                ee = tuple(x - 1 if j == i - 1 else x for j, x in enumerate(exps))
                key = (ee, dd)
                v = out.get(key, Q(0)) + sign * c * e
                if v == 0:
                    out.pop(key, None)
                else:
                    out[key] = v
        res = PolyForm(self.k)
        res.terms = out
        return res

    # -- structure queries ---------------------------------------------

    def form_degrees(self) -> set[int]:
        return {len(dxs) for dxs in (key[1] for key in self.terms)}

    def degree_part(self, r: int) -> "PolyForm":
        res = PolyForm(self.k)
        res.terms = {key: c for key, c in self.terms.items() if len(key[1]) == r}
        return res

    def is_homogeneous(self, r: int) -> bool:
        return all(len(key[1]) == r for key in self.terms)

    def poly_degree(self) -> int:
        """Maximal total exponent degree appearing (0 for the zero form)."""
        return max((sum(e) for (e, _d) in self.terms), default=0)

    def evaluate(self, point: Sequence) -> dict[tuple[int, ...], Fraction]:
        """Evaluate coefficients at a chart point; keys are dx tuples."""
        pt = [qx(p) for p in point]
        if len(pt) != self.k:
            raise ValueError("point has wrong dimension")
        out: dict[tuple[int, ...], Fraction] = {}
        for (exps, dxs), c in self.terms.items():
            v = c
            for x, e in zip(pt, exps):
                if e:
                    v *= x ** e
            if v != 0:
                out[dxs] = out.get(dxs, Q(0)) + v
        return {k: v for k, v in out.items() if v != 0}

    def value_at(self, point: Sequence) -> Fraction:
        """Value of a 0-form at a chart point."""
        ev = self.evaluate(point)
        for dxs, v in ev.items():
            if dxs != ():
                raise ValueError("value_at needs a 0-form")
        return ev.get((), Q(0))

    # -- pullbacks -------------------------------------------------------

    def pullback(self, target_k: int, images: dict[int, "PolyForm"]) -> "PolyForm":
        """Substitute x_i by the given 0-forms on a target chart.

        ``images[i]`` (for i = 1..k) is the pullback of the coordinate
        x_i; differentials map along d(images[i]).
        """
        d_images = {i: f.d() for i, f in images.items()}
        out = PolyForm.zero(target_k)
        pow_cache: dict[tuple[int, int], PolyForm] = {}

        def power(i: int, e: int) -> PolyForm:
            key = (i, e)
            if key not in pow_cache:
                if e == 0:
                    pow_cache[key] = PolyForm.one(target_k)
                else:
                    pow_cache[key] = power(i, e - 1).wedge(images[i])
            return pow_cache[key]

        for (exps, dxs), c in self.terms.items():
            acc = PolyForm.const(target_k, c)
            for i, e in enumerate(exps, start=1):
                if e:
                    acc = acc.wedge(power(i, e))
                    if acc.is_zero():
                        break
            if acc.is_zero():
                continue
            for i in dxs:
                acc = acc.wedge(d_images[i])
                if acc.is_zero():
                    break
            out = out + acc
        return out

    def restrict(self, positions: Sequence[int]) -> "PolyForm":
        """Restrict along the face inclusion picking the given vertex positions.

        ``positions`` is a strictly increasing tuple in 0..k naming which
        vertices of the source simplex the target simplex runs through;
        the result is a form on the standard simplex of dimension
        ``len(positions) - 1``.
        """
        positions = tuple(positions)
        lk = len(positions) - 1
        if any(a >= b for a, b in zip(positions, positions[1:])):
            raise ValueError("positions must be strictly increasing")
        if positions and not (0 <= positions[0] and positions[-1] <= self.k):
            raise ValueError("positions out of range")
        images: dict[int, PolyForm] = {}
        pos_of = {p: j for j, p in enumerate(positions)}
        for i in range(1, self.k + 1):
            j = pos_of.get(i)
            if j is None:
                images[i] = PolyForm.zero(lk)
            else:
                images[i] = PolyForm.coordinate(lk, j)
        return self.pullback(lk, images)

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        terms = []
        for (exps, dxs), c in sorted(self.terms.items()):
            mono = {str(i + 1): e for i, e in enumerate(exps) if e}
            terms.append({"mono": mono, "dx": list(dxs), "coeff": str(c)})
        return {"k": self.k, "terms": terms}

    @classmethod
    def from_json(cls, data: dict) -> "PolyForm":
        k = int(data["k"])
        terms = {}
        for t in data.get("terms", []):
            exps = [0] * k
            for var, e in t.get("mono", {}).items():
                exps[int(var) - 1] = int(e)
            key = (tuple(exps), tuple(int(i) for i in t.get("dx", [])))
            terms[key] = qx(t["coeff"])
        return cls(k, terms)

    def __repr__(self):
        if not self.terms:
            return f"PolyForm({self.k}, 0)"
        bits = []
        for (exps, dxs), c in sorted(self.terms.items()):
            mono = "".join(f"x{i + 1}^{e}" if e > 1 else f"x{i + 1}"
                           for i, e in enumerate(exps) if e)
            dx = "".join(f"dx{i}" for i in dxs)
            bits.append(f"{c}*{mono or '1'}{('∧' + dx) if dx else ''}")
        return f"PolyForm({self.k}, {' + '.join(bits)})"


# ---------------------------------------------------------------------------
# extension from boundary data
# ---------------------------------------------------------------------------

def _facet_positions(k: int, j: int) -> tuple[int, ...]:
    return tuple(p for p in range(k + 1) if p != j)


def _common_face_check(k: int, data: Sequence[PolyForm]):
    """Pairwise codim-2 compatibility of facet data on the k-simplex.

    Facet j carries a form on the (k-1)-simplex through vertices
    0..ĵ..k.  For i < j the common face omits both i and j; its
    positions differ inside the two facets, and the two restrictions
    must agree exactly.
    """
    for i in range(k + 1):
        for j in range(i + 1, k + 1):
            fi = _facet_positions(k, i)
            fj = _facet_positions(k, j)
            common = tuple(p for p in range(k + 1) if p != i and p != j)
            if not common:  # k = 1: facets are disjoint vertices
                continue
            pos_in_i = tuple(fi.index(p) for p in common)
            pos_in_j = tuple(fj.index(p) for p in common)
            ri = data[i].restrict(pos_in_i)
            rj = data[j].restrict(pos_in_j)
            if ri != rj:
                raise IncompatibleBoundaryData(
                    f"facets {i} and {j} disagree on their common face",
                    certificate={
                        "facets": (i, j),
                        "restriction_i": ri.to_json(),
                        "restriction_j": rj.to_json(),
                    },
                )


_RESTR_CACHE: dict = {}


def _restricted_basis_form(k: int, j: int, key: Key) -> PolyForm:
    ck = (k, j, key)
    hit = _RESTR_CACHE.get(ck)
    if hit is None:
        hit = PolyForm(k, {key: Q(1)}).restrict(_facet_positions(k, j))
        _RESTR_CACHE[ck] = hit
    return hit


def _monomials_upto(k: int, deg: int):
    if k == 0:
        yield ()
        return
    for d0 in range(deg + 1):
        for rest in _monomials_upto(k - 1, deg - d0):
            yield (d0,) + rest


def _dx_tuples(k: int, r: int):
    from itertools import combinations
    return list(combinations(range(1, k + 1), r))


def extend_from_boundary(k: int, data: Sequence[PolyForm],
                         max_degree: Optional[int] = None) -> PolyForm:
    """Extend compatible facet data to a form on the k-simplex.

    ``data[j]`` is the prescribed restriction to facet j (omitting
    vertex j), as a form on the standard (k-1)-simplex.  The extension
    is found by solving for polynomial coefficients: the ansatz degree
    starts at the largest degree present in the data and escalates one
    step at a time, so the result has minimal ansatz degree, and free
    coefficients are zeroed, making the output deterministic.

    Raises ``IncompatibleBoundaryData`` when facet restrictions clash
    on a codimension-2 face, ``ExtensionInfeasible`` past the ceiling.
    """
    if len(data) != k + 1:
        raise ValueError(f"need {k + 1} facet forms, got {len(data)}")
    for j, f in enumerate(data):
        if f.k != k - 1:
            raise ValueError(f"facet {j} data has chart dim {f.k}, want {k - 1}")
    _common_face_check(k, data)

    degrees = sorted(set().union(*[f.form_degrees() for f in data]) or {0})
    d0 = max(f.poly_degree() for f in data)
    ceiling = max_degree if max_degree is not None else d0 + k + 3

    total = PolyForm.zero(k)
    for r in degrees:
        part = _extend_homogeneous(k, [f.degree_part(r) for f in data], r,
                                   d0, ceiling)
        total = total + part
    return total


def _extend_homogeneous(k: int, data: Sequence[PolyForm], r: int,
                        d0: int, ceiling: int) -> PolyForm:
    if all(f.is_zero() for f in data):
        return PolyForm.zero(k)
    dxs = _dx_tuples(k, r)
    if not dxs:
        return PolyForm.zero(k)
    deg = d0
    while deg <= ceiling:
        cols: list[Key] = []
        for mono in _monomials_upto(k, deg):
            for dd in dxs:
                cols.append((mono, dd))
        rows: dict[tuple, dict[int, Fraction]] = {}
        rhs: dict[tuple, Fraction] = {}
        for j in range(k + 1):
            for ci, key in enumerate(cols):
                restricted = _restricted_basis_form(k, j, key)
                for tkey, c in restricted.terms.items():
                    rows.setdefault((j, tkey), {})[ci] = c
            for tkey, c in data[j].terms.items():
                rk = (j, tkey)
                rhs[rk] = c
                rows.setdefault(rk, {})
        row_keys = sorted(rows.keys())
        sys_rows = [rows[rk] for rk in row_keys]
        sys_rhs = [rhs.get(rk, Q(0)) for rk in row_keys]
        sol, _cert = solve_sparse(sys_rows, sys_rhs, len(cols))
        if sol is not None:
            out = PolyForm(k, {key: sol[i] for i, key in enumerate(cols)})
            return out
        deg += 1
    raise ExtensionInfeasible(
        f"no degree <= {ceiling} extension for form degree {r} on the {k}-simplex")


# ---------------------------------------------------------------------------
# contraction operator (Poincaré lemma)
# ---------------------------------------------------------------------------

def poincare_contract(omega: PolyForm, apex: Optional[Sequence] = None) -> PolyForm:
    """Contract along the straight-line homotopy onto ``apex``.

    With H(t, x) = A + t(x - A) this returns the t-integral of the
    dt-part of H*omega, a form one degree lower.  For r >= 1 one has
    d(contract(w)) + contract(dw) = w, and for a 0-form f the identity
    contract(df) = f - f(A).
    """
    k = omega.k
    if apex is None:
        apex = [Q(0)] * k
    A = [qx(a) for a in apex]
    if len(A) != k:
        raise ValueError("apex has wrong dimension")

    # Work in an auxiliary chart with one extra variable t (index k+1):
    # substitute x_i -> A_i + t*(x_i - A_i), dx_i -> (x_i - A_i) dt + t dx_i,
    # then integrate the dt-coefficient over t in [0, 1].
    kk = k + 1
    t_var = kk  # dx index of t in the auxiliary chart
    subs: dict[int, PolyForm] = {}
    for i in range(1, k + 1):
        xi = PolyForm(kk, {(tuple(1 if j == i - 1 else 0 for j in range(kk)), ()): Q(1)})
        t = PolyForm(kk, {(tuple(1 if j == kk - 1 else 0 for j in range(kk)), ()): Q(1)})
        subs[i] = PolyForm.const(kk, A[i - 1]) + t.wedge(xi - PolyForm.const(kk, A[i - 1]))
    pulled = omega.pullback(kk, subs)

    out = PolyForm.zero(k)
    for (exps, dxs), c in pulled.terms.items():
        if t_var not in dxs:
            continue
        pos = dxs.index(t_var)
        rest = dxs[:pos] + dxs[pos + 1:]
        sign = (-1) ** pos  # move dt to the front
        t_exp = exps[kk - 1]
        coeff = sign * c / (t_exp + 1)  # exact integral of t^m over [0,1]
        key = (exps[:k], rest)
        out = out + PolyForm(k, {key: coeff})
    return out


# ---------------------------------------------------------------------------
# localized forms: P / den^e with a fixed polynomial denominator
# ---------------------------------------------------------------------------

class RatioForm:
    """A differential form P / den**e with polynomial numerator.

    ``den`` is a fixed 0-form (the same object for all operands of a
    binary operation), positive on the open simplex in the intended
    use.  Equality is decided by cross-multiplication, so no
    normalization is ever needed.
    """

    __slots__ = ("num", "den", "e")

    def __init__(self, num: PolyForm, den: PolyForm, e: int = 0):
        if e < 0:
            raise ValueError("exponent must be >= 0")
        self.num = num
        self.den = den
        self.e = e

    @classmethod
    def from_poly(cls, p: PolyForm, den: PolyForm) -> "RatioForm":
        return cls(p, den, 0)

    def _check(self, other: "RatioForm"):
        if self.den != other.den:
            raise ValueError("denominators differ")

    def _den_pow(self, m: int) -> PolyForm:
        p = PolyForm.one(self.den.k)
        for _ in range(m):
            p = p.wedge(self.den)
        return p

    def __add__(self, other: "RatioForm") -> "RatioForm":
        self._check(other)
        e = max(self.e, other.e)
        a = self.num.wedge(self._den_pow(e - self.e))
        b = other.num.wedge(other._den_pow(e - other.e))
        return RatioForm(a + b, self.den, e)

    def __neg__(self) -> "RatioForm":
        return RatioForm(-self.num, self.den, self.e)

    def __sub__(self, other: "RatioForm") -> "RatioForm":
        return self + (-other)

    def scale(self, c) -> "RatioForm":
        return RatioForm(self.num.scale(c), self.den, self.e)

    def wedge(self, other: "RatioForm") -> "RatioForm":
        self._check(other)
        return RatioForm(self.num.wedge(other.num), self.den, self.e + other.e)

    def d(self) -> "RatioForm":
        # d(P/Q^e) = (Q dP - e dQ ∧ P) / Q^(e+1)
        num = self.den.wedge(self.num.d()) - self.den.d().wedge(self.num).scale(self.e)
        return RatioForm(num, self.den, self.e + 1)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatioForm):
            return NotImplemented
        self._check(other)
        a = self.num.wedge(self._den_pow(other.e))
        b = other.num.wedge(other._den_pow(self.e))
        return a == b

    def restrict(self, positions: Sequence[int], den_restricted: PolyForm) -> "RatioForm":
        """Restrict to a face; caller supplies the restricted denominator.

        The denominators used in this package restrict to each other
        across faces, which the caller is expected to have arranged.
        """
        assert self.den.restrict(positions) == den_restricted
        return RatioForm(self.num.restrict(positions), den_restricted, self.e)

    def __repr__(self):
        return f"RatioForm(({self.num!r}) / den^{self.e})"
