"""Anti-canonical bundle of the plane blown up at nine points.

Pipeline: Zariski decomposition of ``-K`` on the lattice ``Z H + sum Z E_i``;
if ``-K`` is nef, fit the cubic through the points, classify it into one of
seven shapes and read the normal bundle of its strict transform:

* smooth cubic -- the Jacobian point ``sum p_j`` in the group law with a flex
  as origin (torsion / E1 / undecided);
* nodal cubic and cycles of lines and conics -- the holonomy ``alpha`` of the
  degree-zero class ``O(3)|_C(-sum p_j)`` read off the normalization;
* cusp, tangent line+conic, three concurrent lines -- trivial support bundle;
  the verdict depends on the type of a cyclic cover, reported as conditional.

Lattice ranks, fits and factorizations are exact over ``Q``; only the
holonomy character uses floating point, with residuals reported.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
import sympy
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .flat_bundles import classify_angle

Number = Union[int, Fraction, float, complex]
Point = Tuple[Number, Number, Number]

X, Y, Z = sympy.symbols("x y z")
CUBIC_MONOMIALS: Tuple[Tuple[int, int, int], ...] = (
    (3, 0, 0), (2, 1, 0), (2, 0, 1), (1, 2, 0), (1, 1, 1), (1, 0, 2), (0, 3, 0), (0, 2, 1), (0, 1, 2), (0, 0, 3))
CASES = ("smooth", "nodal", "cuspidal", "line_conic_transverse", "line_conic_tangent", "triangle", "concurrent_lines")
CASE_NAMES = {"smooth": "smooth", "nodal": "node", "cuspidal": "cusp", "line_conic_transverse": "line+conic transverse",
              "line_conic_tangent": "line+conic tangent", "triangle": "three lines triangle",
              "concurrent_lines": "three lines concurrent"}
FLOAT_RTOL = 1e-9
AMBIGUOUS_BAND = (1e-12, 1e-6)
HOLONOMY_TOL = 1e-9
RATIONALIZE_DENOM = 10 ** 9
MAZUR_BOUND = 12


class NinePointError(ValueError):
    pass


class UnsupportedCubic(NinePointError):
    """The cubic is outside the seven shapes handled here."""


class PrecisionEscalation(NinePointError):
    """A floating-point rank decision was ambiguous and could not be made exact."""


# ---------------------------------------------------------------------------
# Exact helpers
# ---------------------------------------------------------------------------


def _q(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, sympy.Rational):
        return Fraction(int(v.p), int(v.q))
    if isinstance(v, str):
        return Fraction(v)
    raise NinePointError(f"not an exact rational: {v!r}")


def _qq(v: Fraction):
    return QQ(v.numerator, v.denominator)


def _from_qq(v) -> Fraction:
    return Fraction(int(v.numerator), int(v.denominator))


def _dm(rows: Sequence[Sequence[Fraction]], ncols: int) -> DomainMatrix:
    return DomainMatrix([[_qq(v) for v in r] for r in rows], (len(rows), ncols), QQ)


def exact_rank(rows: Sequence[Sequence[Fraction]], ncols: int) -> int:
    if not rows:
        return 0
    return int(_dm(rows, ncols).rank())


def exact_nullspace(rows: Sequence[Sequence[Fraction]], ncols: int) -> List[Tuple[Fraction, ...]]:
    """Reduced basis of the right null space, each vector scaled so its last pivot-free entry is 1."""
    if not rows:
        return [tuple(Fraction(int(i == j)) for j in range(ncols)) for i in range(ncols)]
    ns = _dm(rows, ncols).nullspace()
    out = []
    for r in ns.to_Matrix().tolist():
        vec = [_q(sympy.Rational(v)) for v in r]
        lead = next(v for v in vec if v != 0)
        out.append(tuple(v / lead for v in vec))
    return out


def float_rank(rows: np.ndarray, rtol: float = FLOAT_RTOL) -> int:
    """SVD rank; raises :class:`PrecisionEscalation` when a singular value sits in the ambiguous band."""
    a = np.asarray(rows, dtype=complex)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    rel = s / s[0]
    if np.any((rel > AMBIGUOUS_BAND[0]) & (rel < AMBIGUOUS_BAND[1])):
        raise PrecisionEscalation("singular values inside the ambiguous band")
    return int(np.sum(rel > rtol))


def cross(a: Sequence, b: Sequence) -> Tuple:
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def det3(a: Sequence, b: Sequence, c: Sequence):
    return sum(x * y for x, y in zip(a, cross(b, c)))


def same_point(p: Sequence, q: Sequence) -> bool:
    c = cross(p, q)
    if all(isinstance(v, Fraction) for v in c):
        return all(v == 0 for v in c)
    scale = max(abs(complex(v)) for v in list(p) + list(q)) ** 2
    return max(abs(complex(v)) for v in c) <= FLOAT_RTOL * scale


def normalize_form(coeffs: Sequence[Fraction]) -> Tuple[Fraction, ...]:
    """Scale so the first nonzero coefficient is 1."""
    lead = next((c for c in coeffs if c != 0), None)
    if lead is None:
        raise NinePointError("zero form")
    return tuple(c / lead for c in coeffs)


def monomials(d: int) -> List[Tuple[int, int, int]]:
    return [(a, b, d - a - b) for a in range(d, -1, -1) for b in range(d - a, -1, -1)]


def _mono_value(e: Tuple[int, int, int], p: Sequence) -> Number:
    return p[0] ** e[0] * p[1] ** e[1] * p[2] ** e[2]


def form_expr(coeffs: Sequence, d: int):
    return sum(sympy.Rational(c.numerator, c.denominator) * X ** a * Y ** b * Z ** c_
               for c, (a, b, c_) in zip(coeffs, monomials(d)) if c != 0)


def expr_form(expr, d: int) -> Tuple[Fraction, ...]:
    poly = sympy.Poly(sympy.expand(expr), X, Y, Z)
    return tuple(_q(sympy.Rational(poly.coeff_monomial(X ** a * Y ** b * Z ** c))) for a, b, c in monomials(d))


def eval_form(coeffs: Sequence, d: int, p: Sequence) -> Number:
    return sum(c * _mono_value(e, p) for c, e in zip(coeffs, monomials(d)) if c != 0)


def _falling(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= n - i
    return out


def derivative_rows(d: int, p: Sequence, order: int) -> List[List[Number]]:
    """Rows ``d^{(i,j,l)} F(p)`` for ``i + j + l = order`` on the coefficient vector of a degree-``d`` form."""
    rows = []
    for k in monomials(order):
        row = []
        for e in monomials(d):
            if any(e[t] < k[t] for t in range(3)):
                row.append(0 * p[0])
                continue
            c = _falling(e[0], k[0]) * _falling(e[1], k[1]) * _falling(e[2], k[2])
            row.append(c * _mono_value(tuple(e[t] - k[t] for t in range(3)), p))
        rows.append(row)
    return rows


def interpolation_rows(points: Sequence[Point], d: int, mults: Sequence[int]) -> List[List[Number]]:
    rows: List[List[Number]] = []
    for p, m in zip(points, mults):
        if m > 0:
            rows.extend(derivative_rows(d, p, m - 1))
    return rows


def interpolation_dimension(points: Sequence[Point], d: int, mults: Sequence[int], exact: bool = True) -> int:
    """``h0`` of degree-``d`` forms with multiplicity ``>= m_i`` at ``p_i`` (as a linear-algebra count)."""
    rows = interpolation_rows(points, d, mults)
    n = len(monomials(d))
    r = exact_rank(rows, n) if exact else float_rank(np.asarray(rows, dtype=complex))
    return n - r


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


def _rationalize(v) -> Tuple[Fraction, float]:
    if isinstance(v, complex):
        if v.imag != 0:
            raise NinePointError("complex coordinates are supported by fit_cubic only")
        v = v.real
    if isinstance(v, float):
        q = Fraction(v).limit_denominator(RATIONALIZE_DENOM)
        return q, abs(float(q) - v)
    return _q(v), 0.0


@dataclass(frozen=True)
class PlaneConfig:
    """Nine projective points; ``cubic`` optionally selects one of the fitted cubics.

    Float coordinates are rationalized (``limit_denominator``) and the largest
    rounding is kept in ``rationalization_residual``.
    """

    points: Tuple[Tuple[Fraction, Fraction, Fraction], ...]
    cubic: Optional[Tuple[Fraction, ...]] = None
    depth: int = 3
    torsion_bound: int = 1000
    e1_depth: int = 10_000
    flex: Optional[Tuple[Fraction, Fraction, Fraction]] = None
    cover_model: Optional[Mapping] = None
    seed: int = 0
    rationalization_residual: float = 0.0

    @classmethod
    def build(cls, points: Sequence[Sequence[Number]], cubic: Optional[Sequence[Number]] = None,
              **options) -> "PlaneConfig":
        worst = 0.0
        pts = []
        for p in points:
            if len(p) != 3:
                raise NinePointError("points need three projective coordinates")
            row = []
            for v in p:
                q, err = _rationalize(v)
                worst = max(worst, err)
                row.append(q)
            pts.append(tuple(row))
        cub = None
        if cubic is not None:
            if len(cubic) != 10:
                raise NinePointError("a ternary cubic has 10 coefficients")
            cub = tuple(_rationalize(v)[0] for v in cubic)
        flex = options.pop("flex", None)
        if flex is not None:
            flex = tuple(_rationalize(v)[0] for v in flex)
        cfg = cls(tuple(pts), cub, flex=flex, rationalization_residual=worst, **options)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, data: Mapping) -> "PlaneConfig":
        def parse(v):
            if isinstance(v, str):
                return Fraction(v)
            return v
        pts = [[parse(v) for v in p] for p in data["points"]]
        cubic = data.get("cubic")
        opts = dict(data.get("options", {}))
        kw = {}
        for key, name in (("depth", "depth"), ("torsionBound", "torsion_bound"), ("e1Depth", "e1_depth"),
                          ("seed", "seed")):
            if key in opts:
                kw[name] = int(opts[key])
        if "flex" in data:
            kw["flex"] = [parse(v) for v in data["flex"]]
        if "coverModel" in data:
            kw["cover_model"] = data["coverModel"]
        return cls.build(pts, None if cubic is None else [parse(v) for v in cubic], **kw)

    def validate(self) -> None:
        if len(self.points) != 9:
            raise NinePointError(f"need nine points, got {len(self.points)}")
        for p in self.points:
            if all(v == 0 for v in p):
                raise NinePointError("(0:0:0) is not a projective point")
        for i, j in itertools.combinations(range(9), 2):
            if same_point(self.points[i], self.points[j]):
                raise NinePointError(f"points {i} and {j} coincide")
        if self.cubic is not None:
            if all(c == 0 for c in self.cubic):
                raise NinePointError("zero cubic")
            bad = [i for i, p in enumerate(self.points) if eval_form(self.cubic, 3, p) != 0]
            if bad:
                raise NinePointError(f"points {bad} are not on the supplied cubic")

    def transformed(self, M: Sequence[Sequence[int]]) -> "PlaneConfig":
        """Apply a projective change of coordinates ``p -> M p`` to the points (and flex)."""
        A = [[_q(v) for v in r] for r in M]

        def ap(p):
            return tuple(sum(A[i][k] * p[k] for k in range(3)) for i in range(3))

        cub = None
        if self.cubic is not None:
            Ainv = sympy.Matrix(A).inv()
            sub = {X: sum(Ainv[0, k] * v for k, v in enumerate((X, Y, Z))),
                   Y: sum(Ainv[1, k] * v for k, v in enumerate((X, Y, Z))),
                   Z: sum(Ainv[2, k] * v for k, v in enumerate((X, Y, Z)))}
            cub = normalize_form(expr_form(form_expr(self.cubic, 3).subs(sub, simultaneous=True), 3))
        return PlaneConfig(tuple(ap(p) for p in self.points), cub, self.depth, self.torsion_bound,
                           self.e1_depth, None if self.flex is None else ap(self.flex), self.cover_model,
                           self.seed, self.rationalization_residual)


def fit_cubic(points: Sequence[Sequence[Number]], exact: Optional[bool] = None) -> List[Tuple]:
    """Basis of cubics through the points (dimension ``>= 2`` means a pencil).

    Exact rational elimination for rational input; complex floats use an SVD.
    """
    if exact is None:
        exact = all(not isinstance(v, (float, complex)) for p in points for v in p)
    if exact:
        rows = [[_mono_value(e, tuple(_q(v) for v in p)) for e in CUBIC_MONOMIALS] for p in points]
        return [normalize_form(v) for v in exact_nullspace(rows, 10)]
    a = np.asarray([[_mono_value(e, tuple(complex(v) for v in p)) for e in CUBIC_MONOMIALS] for p in points])
    r = float_rank(a)
    _, _, vh = np.linalg.svd(a)
    basis = vh[r:].conj()
    out = []
    for v in basis:
        k = int(np.argmax(np.abs(v) > 1e-12))
        out.append(tuple(complex(c) for c in v / v[k]))
    return out


# ---------------------------------------------------------------------------
# Cubic shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    kind: str                           # "line" | "conic" | "cubic"
    degree: int
    form: Tuple[Fraction, ...]          # coefficients on monomials(degree)
    points: Tuple[int, ...] = ()        # indices of configuration points on it

    def to_json(self) -> dict:
        return {"kind": self.kind, "degree": self.degree, "form": [str(c) for c in self.form],
                "points": list(self.points)}


@dataclass(frozen=True)
class CubicClassification:
    case: str
    cubic: Tuple[Fraction, ...]
    components: Tuple[Component, ...]
    singular_points: Tuple[Tuple, ...]   # exact where rational, complex otherwise
    data: Mapping[str, object] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return CASE_NAMES[self.case]

    def to_json(self) -> dict:
        return {"case": self.case, "name": self.name, "cubic": [str(c) for c in self.cubic],
                "components": [c.to_json() for c in self.components],
                "singularPoints": [[_num_json(v) for v in p] for p in self.singular_points],
                "data": {k: self.data[k] for k in sorted(self.data)}}


def _num_json(v):
    if isinstance(v, Fraction):
        return str(v)
    c = complex(v)
    return [float(c.real), float(c.imag)]


def hessian_matrix(form: Sequence[Fraction], d: int, p: Sequence):
    rows = derivative_rows(d, p, 2)
    vals = [sum(c * r for c, r in zip(form, row)) for row in rows]
    idx = {k: v for k, v in zip(monomials(2), vals)}

    def h(i, j):
        k = [0, 0, 0]
        k[i] += 1
        k[j] += 1
        return idx[tuple(k)]

    return [[h(i, j) for j in range(3)] for i in range(3)]


def gradient(form: Sequence[Fraction], d: int, p: Sequence) -> Tuple:
    rows = derivative_rows(d, p, 1)
    vals = {k: sum(c * r for c, r in zip(form, row)) for k, row in zip(monomials(1), rows)}
    return (vals[(1, 0, 0)], vals[(0, 1, 0)], vals[(0, 0, 1)])


def _rank3(m) -> int:
    return exact_rank([[_q(sympy.Rational(v)) if not isinstance(v, Fraction) else v for v in r] for r in m], 3)


def singular_points(form: Sequence[Fraction]) -> List[Tuple[Fraction, Fraction, Fraction]]:
    """Rational singular points of a cubic (all of them when the cubic is irreducible over Q)."""
    F = form_expr(form, 3)
    grads = [sympy.diff(F, v) for v in (X, Y, Z)]
    out: List[Tuple[Fraction, Fraction, Fraction]] = []
    for chart in ((X, Y, Z), (Y, X, Z), (Z, X, Y)):
        fixed, a, b = chart
        eqs = [g.subs(fixed, 1) for g in grads]
        sols = sympy.solve(eqs, [a, b], dict=True)
        for s in sols:
            if a not in s or b not in s:
                raise UnsupportedCubic("positive-dimensional singular locus")
            va, vb = s[a], s[b]
            if not (va.is_rational and vb.is_rational):
                continue
            p = {fixed: sympy.Integer(1), a: va, b: vb}
            pt = tuple(_q(sympy.Rational(p[v])) for v in (X, Y, Z))
            if not any(same_point(pt, q) for q in out):
                out.append(pt)
    return out


def _factor(form: Sequence[Fraction]) -> List[Tuple[int, Tuple[Fraction, ...]]]:
    _, facs = sympy.factor_list(form_expr(form, 3), X, Y, Z)
    out = []
    for f, mult in facs:
        if mult > 1:
            raise UnsupportedCubic("non-reduced cubic")
        deg = sympy.Poly(f, X, Y, Z).total_degree()
        out.append((deg, normalize_form(expr_form(f, deg))))
    return sorted(out, key=lambda t: (t[0], t[1]))


def conic_matrix(form: Sequence[Fraction]):
    """Symmetric matrix of a conic on ``monomials(2)`` = x^2, xy, xz, y^2, yz, z^2."""
    a, b, c, d, e, f = form
    h = Fraction(1, 2)
    return [[a, b * h, c * h], [b * h, d, e * h], [c * h, e * h, f]]


def _line_basis(line: Sequence[Fraction]) -> Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...]]:
    ns = exact_nullspace([list(line)], 3)
    return ns[0], ns[1]


def _on(form, d, p) -> bool:
    v = eval_form(form, d, p)
    if isinstance(v, Fraction) or isinstance(v, int):
        return v == 0
    return abs(complex(v)) <= 1e-9


def classify_singularities(cubic: Sequence[Number], points: Optional[Sequence[Point]] = None) -> CubicClassification:
    """Sort a reduced cubic into one of the seven shapes; attach point incidences when given."""
    form = normalize_form(tuple(_q(c) for c in cubic))
    facs = _factor(form)
    degs = tuple(d for d, _ in facs)
    pts = [] if points is None else [tuple(_q(v) for v in p) for p in points]
    data: Dict[str, object] = {}
    sing: List[Tuple] = []
    if degs == (3,):
        sing = singular_points(form)
        if not sing:
            case = "smooth"
        elif len(sing) == 1:
            r = _rank3(hessian_matrix(form, 3, sing[0]))
            if r == 2:
                case = "nodal"
            elif r == 1:
                case = "cuspidal"
            else:
                raise UnsupportedCubic("triple point on an irreducible cubic")
        else:
            raise UnsupportedCubic("cubic splits only over an extension of Q")
        comps = [Component("cubic", 3, form)]
    elif degs == (1, 2):
        line, conic = facs[0][1], facs[1][1]
        M = conic_matrix(conic)
        if sympy.Matrix(M).det() == 0:
            raise UnsupportedCubic("the conic factor is degenerate over an extension of Q")
        r1, r2 = _line_basis(line)
        qa = eval_form(conic, 2, r1)
        qb = eval_form(conic, 2, r2)
        qab = eval_form(conic, 2, tuple(a + b for a, b in zip(r1, r2))) - qa - qb
        disc = qab * qab - 4 * qa * qb
        data["discriminant"] = str(disc)
        case = "line_conic_transverse" if disc != 0 else "line_conic_tangent"
        comps = [Component("line", 1, line), Component("conic", 2, conic)]
        sing = _line_conic_points(line, conic)
    elif degs == (1, 1, 1):
        lines = [f for _, f in facs]
        det = det3(*lines)
        case = "triangle" if det != 0 else "concurrent_lines"
        comps = [Component("line", 1, l) for l in lines]
        if det != 0:
            sing = [normalize_point(cross(lines[i], lines[j])) for i, j in ((0, 1), (1, 2), (2, 0))]
        else:
            sing = [normalize_point(cross(lines[0], lines[1]))]
    else:
        raise UnsupportedCubic(f"unexpected factor degrees {degs}")
    if pts:
        comps = [Component(c.kind, c.degree, c.form, tuple(i for i, p in enumerate(pts) if _on(c.form, c.degree, p)))
                 for c in comps]
        _check_incidences(case, comps, sing, pts)
    return CubicClassification(case, form, tuple(comps), tuple(sing), data)


def normalize_point(p: Sequence) -> Tuple:
    if all(isinstance(v, Fraction) for v in p):
        return normalize_form(p)
    k = int(np.argmax([abs(complex(v)) > 1e-12 for v in p]))
    return tuple(complex(v) / complex(p[k]) for v in p)


def _line_conic_points(line, conic) -> List[Tuple]:
    r1, r2 = _line_basis(line)
    qa = eval_form(conic, 2, r1)
    qb = eval_form(conic, 2, r2)
    qab = eval_form(conic, 2, tuple(a + b for a, b in zip(r1, r2))) - qa - qb
    # q(s r1 + r2) = qa s^2 + qab s + qb
    if qa == 0:
        roots = [None] + ([Fraction(-qb) / qab] if qab != 0 else [])
    else:
        disc = qab * qab - 4 * qa * qb
        sq = sympy.sqrt(sympy.Rational(disc.numerator, disc.denominator))
        if sq.is_rational:
            s1 = (-qab + _q(sympy.Rational(sq))) / (2 * qa)
            s2 = (-qab - _q(sympy.Rational(sq))) / (2 * qa)
            roots = [s1] if disc == 0 else [s1, s2]
        else:
            c = complex(sympy.N(sq, 30))
            roots = [(-float(qab) + c) / (2 * float(qa)), (-float(qab) - c) / (2 * float(qa))]
    out = []
    for s in roots:
        if s is None:
            out.append(normalize_point(r1))
        else:
            out.append(normalize_point(tuple(s * a + b for a, b in zip(r1, r2))))
    return _sort_points(out)


def _sort_points(pts: List[Tuple]) -> List[Tuple]:
    def key(p):
        return tuple((complex(v).real, complex(v).imag) for v in p)
    return sorted(pts, key=key)


def _check_incidences(case: str, comps: Sequence[Component], sing: Sequence[Tuple], pts: Sequence[Point]) -> None:
    for i, p in enumerate(pts):
        on = [c for c in comps if i in c.points]
        if not on:
            raise NinePointError(f"point {i} is not on the cubic")
        if len(on) > 1 or any(same_point(p, s) for s in sing):
            raise UnsupportedCubic(f"point {i} is a singular point of the cubic")
    counts = tuple(len(c.points) for c in comps)
    if case in ("line_conic_transverse", "line_conic_tangent") and counts != (3, 6):
        raise UnsupportedCubic(f"line+conic needs 3 + 6 points, got {counts}")
    if case in ("triangle", "concurrent_lines") and counts != (3, 3, 3):
        raise UnsupportedCubic(f"three lines need 3 points each, got {counts}")


# ---------------------------------------------------------------------------
# Weierstrass group law
# ---------------------------------------------------------------------------


EPoint = Optional[Tuple[Number, Number]]  # None is the point at infinity


@dataclass(frozen=True)
class WeierstrassCurve:
    """``y^2 = x^3 + a x + b`` with identity at infinity."""

    a: Number
    b: Number

    def __post_init__(self) -> None:
        if 4 * self.a ** 3 + 27 * self.b ** 2 == 0:
            raise NinePointError("singular Weierstrass curve")

    @property
    def exact(self) -> bool:
        return isinstance(self.a, (int, Fraction)) and isinstance(self.b, (int, Fraction))

    def contains(self, P: EPoint, tol: float = 1e-9) -> bool:
        if P is None:
            return True
        x, y = P
        r = y * y - (x ** 3 + self.a * x + self.b)
        if isinstance(r, (int, Fraction)):
            return r == 0
        scale = max(1.0, abs(complex(x)) ** 3, abs(complex(y)) ** 2)
        return abs(complex(r)) <= tol * scale

    def _check(self, P: EPoint) -> None:
        if not self.contains(P):
            raise NinePointError(f"point {P} is not on the curve")

    def negate(self, P: EPoint) -> EPoint:
        self._check(P)
        return None if P is None else (P[0], -P[1])

    def add(self, P: EPoint, Q: EPoint) -> EPoint:
        self._check(P)
        self._check(Q)
        return self._add(P, Q)

    def _add(self, P: EPoint, Q: EPoint) -> EPoint:
        if P is None:
            return Q
        if Q is None:
            return P
        x1, y1 = P
        x2, y2 = Q
        if x1 == x2:
            if y1 == -y2:
                return None
            lam = (3 * x1 * x1 + self.a) / (2 * y1)
        else:
            lam = (y2 - y1) / (x2 - x1)
        x3 = lam * lam - x1 - x2
        return (x3, lam * (x1 - x3) - y1)

    def mul(self, k: int, P: EPoint) -> EPoint:
        self._check(P)
        if k < 0:
            return self.mul(-k, self.negate(P))
        out: EPoint = None
        base = P
        while k:
            if k & 1:
                out = self._add(out, base)
            base = self._add(base, base)
            k >>= 1
        return out

    def _integral_scale(self) -> int:
        """Least ``u`` with ``u^4 a`` and ``u^6 b`` integral."""
        a, b = _q(self.a), _q(self.b)
        u = 1
        for p, _ in sympy.factorint(a.denominator * b.denominator).items():
            need = max(-(-_vp(a.denominator, p) // 4), -(-_vp(b.denominator, p) // 6))
            u *= p ** need
        return u

    def is_torsion(self, P: EPoint, M: int) -> Optional[int]:
        """Order of ``P`` if it is at most ``M`` (exact for rational input), else ``None``."""
        self._check(P)
        u = self._integral_scale() if self.exact else None
        Q = P
        for m in range(1, M + 1):
            if Q is None:
                return m
            if u is not None and not ((u * u * _q(Q[0])).denominator == 1 and (u ** 3 * _q(Q[1])).denominator == 1):
                # torsion points of an integral model have integral coordinates
                return None
            if not self.exact and m > 1 and abs(complex(Q[0])) > 1e12:
                return m
            Q = self._add(Q, P)
        return None


def _vp(n: int, p: int) -> int:
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


def is_flex(form: Sequence[Fraction], p: Sequence[Fraction]) -> bool:
    """Smooth point of the cubic where the Hessian determinant vanishes."""
    if eval_form(form, 3, p) != 0:
        return False
    if all(g == 0 for g in gradient(form, 3, p)):
        return False
    H = hessian_matrix(form, 3, p)
    return sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in r] for r in H]).det() == 0


@dataclass(frozen=True)
class WeierstrassModel:
    curve: WeierstrassCurve
    long: Tuple[Fraction, ...]          # a1, a2, a3, a4, a6
    transform: Tuple[Tuple[Fraction, ...], ...]   # rows: linear forms x', y', z'
    u: Fraction
    flex: Tuple[Fraction, Fraction, Fraction]

    def map_point(self, p: Sequence[Fraction]) -> EPoint:
        xp, yp, zp = (sum(r[k] * p[k] for k in range(3)) for r in self.transform)
        if zp == 0:
            return None
        Xa, Ya = xp / (self.u * zp), yp / (self.u * zp)
        a1, a2, a3, a4, a6 = self.long
        b2 = a1 * a1 + 4 * a2
        return (36 * Xa + 3 * b2, 108 * (2 * Ya + a1 * Xa + a3))


def weierstrass_from_flex(form: Sequence[Fraction], flex: Sequence[Fraction]) -> WeierstrassModel:
    """Move the flex to ``(0:1:0)`` with tangent ``z = 0`` and reduce to ``y^2 = x^3 - 27 c4 x - 54 c6``."""
    form = tuple(_q(c) for c in form)
    O = tuple(_q(c) for c in flex)
    if not is_flex(form, O):
        raise NinePointError("the given point is not a flex of the cubic")
    T = gradient(form, 3, O)
    # x' vanishing at O and independent of T; y' not vanishing at O
    xl = None
    for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        cand = cross(O, e)
        if any(v != 0 for v in cand) and any(v != 0 for v in cross(cand, T)):
            xl = tuple(_q(v) for v in cand)
            break
    yl = next(tuple(Fraction(int(i == k)) for i in range(3)) for k in range(3) if O[k] != 0)
    M = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in (xl, yl, T)])
    if M.det() == 0:
        raise NinePointError("degenerate coordinate change")
    Minv = M.inv()
    Xp, Yp, Zp = sympy.symbols("xp yp zp")
    sub = {v: Minv[i, 0] * Xp + Minv[i, 1] * Yp + Minv[i, 2] * Zp for i, v in enumerate((X, Y, Z))}
    G = sympy.Poly(sympy.expand(form_expr(form, 3).subs(sub, simultaneous=True)), Xp, Yp, Zp)
    co = {m: _q(sympy.Rational(c)) for m, c in zip(G.monoms(), G.coeffs())}

    def c(a, b, d):
        return co.get((a, b, d), Fraction(0))

    if c(0, 3, 0) != 0 or c(1, 2, 0) != 0 or c(2, 1, 0) != 0:
        raise NinePointError("coordinate change did not produce a flex at infinity")
    cx3, q1 = c(3, 0, 0), c(0, 2, 1)
    if cx3 == 0 or q1 == 0:
        raise NinePointError("flex normalization failed")
    u = -q1 / cx3
    scale = q1 * u * u
    a1 = c(1, 1, 1) * u * u / scale
    a3 = c(0, 1, 2) * u / scale
    a2 = -c(2, 0, 1) * u * u / scale
    a4 = -c(1, 0, 2) * u / scale
    a6 = -c(0, 0, 3) / scale
    b2 = a1 * a1 + 4 * a2
    b4 = 2 * a4 + a1 * a3
    b6 = a3 * a3 + 4 * a6
    c4 = b2 * b2 - 24 * b4
    c6 = -b2 ** 3 + 36 * b2 * b4 - 216 * b6
    curve = WeierstrassCurve(-27 * c4, -54 * c6)
    return WeierstrassModel(curve, (a1, a2, a3, a4, a6), (xl, yl, tuple(T)), u, O)


def find_flex(form: Sequence[Fraction], candidates: Iterable[Sequence[Fraction]]) -> Optional[Tuple[Fraction, ...]]:
    for p in candidates:
        p = tuple(_q(v) for v in p)
        if all(v == 0 for v in p):
            continue
        if is_flex(form, p):
            return p
    return None


def jacobian_point(model: WeierstrassModel, points: Sequence[Point]) -> EPoint:
    """``sum p_j`` in the group with the flex as origin (the class of ``sum p_j - 9 O``)."""
    S: EPoint = None
    for p in points:
        S = model.curve.add(S, model.map_point(tuple(_q(v) for v in p)))
    return S


def _real_roots(curve: WeierstrassCurve) -> List[mpmath.mpf]:
    roots = mpmath.polyroots([1, 0, _mp(curve.a), _mp(curve.b)], maxsteps=200, extraprec=60)
    return sorted(mpmath.re(r) for r in roots if abs(mpmath.im(r)) < mpmath.mpf(10) ** (-mpmath.mp.dps // 2))


def _mp(v) -> mpmath.mpf:
    v = _q(v)
    return mpmath.mpf(v.numerator) / v.denominator


def real_period(curve: WeierstrassCurve, dps: int = 30) -> float:
    """Length of the identity component of the real locus in the invariant measure ``dx / y``."""
    with mpmath.workdps(dps):
        e, a = _real_roots(curve)[-1], _mp(curve.a)
        # x = e + s^2 and f(x) / (x - e) = x^2 + e x + e^2 + a
        q = lambda x: x * x + e * x + e * e + a
        return float(2 * mpmath.quad(lambda s: 2 / mpmath.sqrt(q(e + s * s)), [0, 1, mpmath.inf]))


def elliptic_angle(curve: WeierstrassCurve, P: EPoint, dps: int = 30) -> float:
    """``u(P) / omega`` in ``[0, 1)`` for a real point on the identity component.

    ``u(P) = int_{x(P)}^inf dx / y`` (signed by ``y``), ``omega`` the real period;
    the additive character of the real identity component.
    """
    if P is None:
        return 0.0
    with mpmath.workdps(dps):
        a, b = _mp(curve.a), _mp(curve.b)
        x0, y0 = _mp(P[0]), _mp(P[1])
        e = _real_roots(curve)[-1]
        if x0 < e:
            raise NinePointError("point is not on the identity component of the real locus")
        f = lambda x: x ** 3 + a * x + b
        # x = x0 + s^2 removes the endpoint singularity when x0 is a root
        def integrand(s):
            x = x0 + s * s
            return 2 * s / mpmath.sqrt(f(x))
        half = mpmath.quad(integrand, [0, 1, mpmath.inf]) if y0 != 0 else mpmath.mpf(real_period(curve, dps)) / 2
        omega = mpmath.mpf(real_period(curve, dps))
        u = half if y0 >= 0 else omega - half
        return float(mpmath.frac(u / omega))


def jacobian_angle(curve: WeierstrassCurve, S: EPoint) -> Tuple[float, int]:
    """Angle governing ``d(mS, O)``: that of ``S`` or, off the identity component, of ``2S`` (step 2)."""
    e = float(_real_roots(curve)[-1])
    if S is None or float(S[0]) >= e:
        return elliptic_angle(curve, S), 1
    return elliptic_angle(curve, curve.add(S, S)), 2


# ---------------------------------------------------------------------------
# Holonomy of nodal cubics and cycles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HolonomyResult:
    alpha: complex
    residual: float
    reference_lines: Tuple[Tuple[int, int, int], ...]

    def to_json(self) -> dict:
        return {"alpha": [self.alpha.real, self.alpha.imag], "absAlpha": abs(self.alpha),
                "residual": self.residual, "referenceLines": [list(l) for l in self.reference_lines]}


def _reference_lines(rng: np.random.Generator, avoid: Sequence[Sequence], count: int = 3) -> List[Tuple[int, int, int]]:
    """Integer lines missing every point of ``avoid`` (singular points and the configuration)."""
    out: List[Tuple[int, int, int]] = []
    while len(out) < count:
        ln = tuple(int(v) for v in rng.integers(-9, 10, size=3))
        if all(v == 0 for v in ln):
            continue
        if any(abs(complex(sum(a * b for a, b in zip(ln, p)))) <= 1e-9 * max(abs(complex(v)) for v in p)
               for p in avoid):
            continue
        out.append(ln)
    return out


class _NodalParam:
    """Lines through the node ``N``: ``D(t) = A + t B`` and branch parameters ``t1, t2``."""

    def __init__(self, form, node):
        self.form = form
        self.N = node
        basis = [tuple(Fraction(int(i == k)) for i in range(3)) for k in range(3)]
        pair = None
        for e1, e2 in itertools.combinations(basis, 2):
            if det3(node, e1, e2) != 0:
                pair = (e1, e2)
                break
        self.A, self.B = pair
        H = hessian_matrix(form, 3, node)
        qa = _bil(H, self.A, self.A)
        qab = _bil(H, self.A, self.B)
        qb = _bil(H, self.B, self.B)
        # (A + tB)^T H (A + tB) = qa + 2 qab t + qb t^2
        self.t_roots = _quad_roots(float(qb), 2 * float(qab), float(qa))
        self.H = H

    def t_of(self, p) -> complex:
        num = det3(self.N, self.A, p)
        den = det3(self.N, self.B, p)
        if den == 0:
            return complex("inf")
        return complex(-num / den)

    def u_of_t(self, t: complex) -> complex:
        t1, t2 = self.t_roots
        if math.isinf(abs(t)):
            return 1.0 + 0j
        return (t - t1) / (t - t2)

    def point(self, t: complex) -> np.ndarray:
        N = np.array([float(v) for v in self.N])
        D = np.array([float(v) for v in self.A]) + t * np.array([float(v) for v in self.B])
        Hf = np.array([[float(v) for v in r] for r in self.H])
        FD = complex(eval_form([float(c) for c in self.form], 3, D))
        return -2 * FD * N + (D @ Hf @ D) * D

    def line_roots(self, line: Sequence[int]) -> List[complex]:
        """Parameters of the three points of ``C & line`` (``inf`` when the degree drops)."""
        ts = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        vals = np.array([complex(np.dot(line, self.point(t))) for t in ts])
        coeffs = np.polyfit(ts, vals, 4)
        coeffs[np.abs(coeffs) < 1e-12 * np.abs(coeffs).max()] = 0
        coeffs = np.trim_zeros(coeffs, "f")
        roots = list(np.roots(coeffs)) if coeffs.size > 1 else []
        return [complex(r) for r in roots] + [complex("inf")] * (3 - len(roots))


def _bil(H, a, b):
    return sum(a[i] * H[i][j] * b[j] for i in range(3) for j in range(3))


def _quad_roots(a: float, b: float, c: float) -> Tuple[complex, complex]:
    disc = complex(b * b - 4 * a * c)
    if a == 0:
        raise NinePointError("branch parameter at infinity; change the reference frame")
    sq = disc ** 0.5
    r = sorted([(-b + sq) / (2 * a), (-b - sq) / (2 * a)], key=lambda v: (round(v.real, 12), round(v.imag, 12)))
    if abs(r[0] - r[1]) < 1e-12:
        raise NinePointError("tangent cone is a double line (cusp)")
    return r[0], r[1]


def nodal_holonomy(form: Sequence[Number], points: Sequence[Point], node: Optional[Sequence[Number]] = None,
                   seed: int = 0, reference: Optional[Sequence[Sequence[int]]] = None,
                   mobius: complex = 1.0) -> HolonomyResult:
    """``alpha = prod u(q_i) / prod u(p_j)`` with ``q`` cut by three reference lines.

    ``u = (t - t1)/(t - t2)`` is the normalization coordinate with the two node
    branches at ``0`` and ``infinity`` (``t1 < t2`` lexicographically);
    ``mobius`` rescales ``u`` (a check of invariance).
    """
    form = normalize_form(tuple(_q(c) for c in form))
    if node is None:
        sing = singular_points(form)
        if len(sing) != 1:
            raise NinePointError("expected exactly one singular point")
        node = sing[0]
    node = tuple(_q(v) for v in node)
    pts = [tuple(_q(v) for v in p) for p in points]
    if any(same_point(p, node) for p in pts):
        raise NinePointError("the node is among the points")
    par = _NodalParam(form, node)
    lines = [tuple(l) for l in reference] if reference is not None else \
        _reference_lines(np.random.default_rng(seed), [node] + pts)
    log_q = 0j
    resid = 0.0
    for ln in lines:
        for t in par.line_roots(ln):
            log_q += np.log(mobius * par.u_of_t(t))
            if not math.isinf(abs(t)):
                P = par.point(t)
                scale = np.abs(P).max()
                resid = max(resid, abs(np.dot(ln, P)) / (scale * np.abs(ln).max()))
    log_p = sum(np.log(mobius * par.u_of_t(par.t_of(p))) for p in pts)
    alpha = complex(np.exp(log_q - log_p))
    return HolonomyResult(alpha, float(resid), tuple(lines))


class _LineParam:
    def __init__(self, n_in, n_out):
        self.M = np.array([[complex(v) for v in n_out], [complex(v) for v in n_in]]).T  # columns

    def u(self, p) -> complex:
        coef, *_ = np.linalg.lstsq(self.M, np.array([complex(v) for v in p]), rcond=None)
        return complex(coef[0] / coef[1])


class _ConicParam:
    def __init__(self, conic, n_in, n_out, rng):
        Q = np.array([[float(v) for v in r] for r in conic_matrix(conic)])
        self.Q = Q
        nin = np.array([complex(v) for v in n_in])
        D = rng.standard_normal(3)
        s = -(D @ Q @ D) / (2 * (nin @ Q @ D))
        self.X = s * nin + D
        self.a = np.cross(nin, self.X)
        self.b = np.cross(np.array([complex(v) for v in n_out]), self.X)

    def u(self, p) -> complex:
        pv = np.array([complex(v) for v in p])
        return complex(np.dot(self.a, pv) / np.dot(self.b, pv))

    def line_points(self, line: Sequence[int]) -> List[np.ndarray]:
        ln = np.array(line, dtype=float)
        basis = np.linalg.svd(ln[None, :])[2][1:]
        r1, r2 = basis[0], basis[1]
        qa, qb, qab = r1 @ self.Q @ r1, r2 @ self.Q @ r2, 2 * (r1 @ self.Q @ r2)
        roots = np.roots([qa, qab, qb])
        return [complex(s) * r1 + r2 for s in roots]


def cycle_holonomy(cls: CubicClassification, points: Sequence[Point], seed: int = 0,
                   reference: Optional[Sequence[Sequence[int]]] = None, mobius: complex = 1.0) -> HolonomyResult:
    """Holonomy of ``O(3)|_C(-sum p_j)`` on a cycle of components (nodal cubic, line+conic, triangle)."""
    if cls.case == "nodal":
        return nodal_holonomy(cls.cubic, points, cls.singular_points[0], seed, reference, mobius)
    rng = np.random.default_rng(seed)
    pts = [tuple(_q(v) for v in p) for p in points]
    lines = [tuple(l) for l in reference] if reference is not None else \
        _reference_lines(rng, list(cls.singular_points) + pts)
    comps = list(cls.components)
    if cls.case == "line_conic_transverse":
        m1, m2 = cls.singular_points
        params = [_LineParam(m1, m2), _ConicParam(comps[1].form, m2, m1, rng)]
    elif cls.case == "triangle":
        n01, n12, n20 = cls.singular_points
        params = [_LineParam(n20, n01), _LineParam(n01, n12), _LineParam(n12, n20)]
    else:
        raise NinePointError(f"no holonomy for case {cls.case}")
    log_q, log_p, resid = 0j, 0j, 0.0
    for comp, par in zip(comps, params):
        for ln in lines:
            if comp.kind == "line":
                q = np.cross(np.array([float(v) for v in comp.form]), np.array(ln, dtype=float))
                cands = [q.astype(complex)]
            else:
                cands = par.line_points(ln)
            for q in cands:
                log_q += np.log(mobius * par.u(q))
                val = complex(eval_form([float(c) for c in comp.form], comp.degree, q))
                resid = max(resid, abs(val) / max(np.abs(q).max(), 1e-300) ** comp.degree)
        for i in comp.points:
            log_p += np.log(mobius * par.u(pts[i]))
    return HolonomyResult(complex(np.exp(log_q - log_p)), float(resid), tuple(lines))


# ---------------------------------------------------------------------------
# Picard lattice and Zariski decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class PicardClass:
    """``d H - sum m_i E_i``."""

    d: int
    m: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.m) != 9:
            raise NinePointError("nine multiplicities expected")

    def dot(self, other: "PicardClass"):
        return self.d * other.d - sum(a * b for a, b in zip(self.m, other.m))

    def self_intersection(self):
        return self.dot(self)

    def arithmetic_genus(self) -> Fraction:
        return Fraction((self.d - 1) * (self.d - 2), 2) - sum(Fraction(v * (v - 1), 2) for v in self.m)

    def to_json(self) -> dict:
        return {"d": self.d, "m": list(self.m)}

    def __str__(self) -> str:
        return f"({self.d}; {', '.join(str(v) for v in self.m)})"


ANTICANONICAL = PicardClass(3, (1,) * 9)


def exceptional_class(i: int) -> PicardClass:
    m = [0] * 9
    m[i] = -1
    return PicardClass(0, tuple(m))


@dataclass(frozen=True)
class CurveCandidate:
    cls: PicardClass
    label: str
    form: Optional[Tuple[Fraction, ...]] = None


def _incidence(form, d, pts) -> Tuple[int, ...]:
    return tuple(int(eval_form(form, d, p) == 0) for p in pts)


def _is_irreducible(form, d) -> bool:
    _, facs = sympy.Poly(form_expr(form, d), X, Y, Z, domain=QQ).factor_list()
    return len(facs) == 1 and facs[0][1] == 1


def line_candidates(pts) -> List[CurveCandidate]:
    seen: Dict[Tuple[Fraction, ...], CurveCandidate] = {}
    for i, j in itertools.combinations(range(9), 2):
        line = normalize_form(cross(pts[i], pts[j]))
        if line in seen:
            continue
        m = _incidence(line, 1, pts)
        seen[line] = CurveCandidate(PicardClass(1, m), "line", line)
    return list(seen.values())


def conic_candidates(pts) -> List[CurveCandidate]:
    seen: Dict[Tuple[Fraction, ...], CurveCandidate] = {}
    for sub in itertools.combinations(range(9), 5):
        rows = interpolation_rows([pts[i] for i in sub], 2, [1] * 5)
        ns = exact_nullspace(rows, 6)
        if len(ns) != 1:
            continue
        conic = ns[0]
        if conic in seen or sympy.Matrix(conic_matrix(conic)).det() == 0:
            continue
        seen[conic] = CurveCandidate(PicardClass(2, _incidence(conic, 2, pts)), "conic", conic)
    return list(seen.values())


def nodal_cubic_candidates(pts, min_others: int = 6) -> List[CurveCandidate]:
    seen: Dict[Tuple[Fraction, ...], CurveCandidate] = {}
    for i in range(9):
        rest = [k for k in range(9) if k != i]
        for sub in itertools.combinations(rest, min_others):
            rows = derivative_rows(3, pts[i], 1) + interpolation_rows([pts[k] for k in sub], 3, [1] * len(sub))
            ns = exact_nullspace(rows, 10)
            if len(ns) != 1 or ns[0] in seen:
                continue
            cub = ns[0]
            if not _is_irreducible(cub, 3):
                continue
            m = list(_incidence(cub, 3, pts))
            m[i] = 2
            seen[cub] = CurveCandidate(PicardClass(3, tuple(m)), "nodal cubic", cub)
    return list(seen.values())


def negative_candidates(points: Sequence[Point], depth: int = 3, full: bool = True) -> List[CurveCandidate]:
    """Irreducible curves of degree ``<= depth`` with negative self-intersection, plus the ``E_i``.

    With ``full=False`` only the nodal cubics that can meet ``-K`` negatively
    (node at one point, through the other eight) are searched.
    """
    if depth < 0:
        raise NinePointError("depth must be nonnegative")
    pts = [tuple(_q(v) for v in p) for p in points]
    out = [CurveCandidate(exceptional_class(i), f"E{i + 1}") for i in range(9)]
    if depth >= 1:
        out += [c for c in line_candidates(pts) if c.cls.self_intersection() < 0]
    if depth >= 2:
        out += [c for c in conic_candidates(pts) if c.cls.self_intersection() < 0]
    if depth >= 3:
        out += [c for c in nodal_cubic_candidates(pts, 6 if full else 8) if c.cls.self_intersection() < 0]
    return out


@dataclass(frozen=True)
class ZariskiResult:
    nef: bool
    negative_part: Tuple[Tuple[CurveCandidate, Fraction], ...]
    positive_part: Tuple[Fraction, Tuple[Fraction, ...]]   # (d; m) of P = -K - N
    positive_part_semi_ample: bool
    depth: int
    candidates: int

    def to_json(self) -> dict:
        return {"nef": self.nef, "depth": self.depth, "candidates": self.candidates,
                "negativePart": [{"class": c.cls.to_json(), "kind": c.label, "coefficient": str(a)}
                                 for c, a in self.negative_part],
                "positivePart": {"d": str(self.positive_part[0]), "m": [str(v) for v in self.positive_part[1]]},
                "positivePartSemiAmple": self.positive_part_semi_ample}


def _solve_exact(G: List[List[Fraction]], v: List[Fraction]) -> List[Fraction]:
    M = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in r] for r in G])
    b = sympy.Matrix([sympy.Rational(x.numerator, x.denominator) for x in v])
    return [_q(sympy.Rational(s)) for s in M.LUsolve(b)]


def zariski_decompose(points: Sequence[Point], depth: int = 3) -> ZariskiResult:
    """Zariski decomposition of ``-K`` over the bounded candidate set."""
    cands = negative_candidates(points, depth, full=False)
    K = ANTICANONICAL
    S = [c for c in cands if K.dot(c.cls) < 0]
    if not S:
        return ZariskiResult(True, (), (Fraction(3), (Fraction(1),) * 9), True, depth, len(cands))
    if depth >= 3:
        cands = negative_candidates(points, depth, full=True)
    while True:
        G = [[Fraction(a.cls.dot(b.cls)) for b in S] for a in S]
        rhs = [Fraction(K.dot(c.cls)) for c in S]
        coef = _solve_exact(G, rhs)
        Pd = Fraction(K.d) - sum(a * c.cls.d for a, c in zip(coef, S))
        Pm = tuple(Fraction(K.m[i]) - sum(a * c.cls.m[i] for a, c in zip(coef, S)) for i in range(9))

        def pdot(c: PicardClass) -> Fraction:
            return Pd * c.d - sum(a * b for a, b in zip(Pm, c.m))

        extra = [c for c in cands if c not in S and pdot(c.cls) < 0]
        if not extra:
            break
        S = S + extra
    if any(a <= 0 for a in coef):
        raise NinePointError("negative part has a nonpositive coefficient")
    if not _negative_definite(G):
        raise NinePointError("Gram matrix of the negative part is not negative definite")
    kp = Fraction(K.d) * Pd - sum(Fraction(a) * b for a, b in zip(K.m, Pm))
    return ZariskiResult(False, tuple(zip(S, coef)), (Pd, Pm), kp > 0, depth, len(cands))


def _negative_definite(G: List[List[Fraction]]) -> bool:
    M = -sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in r] for r in G])
    return all(M[:k, :k].det() > 0 for k in range(1, M.shape[0] + 1))


# ---------------------------------------------------------------------------
# Resolutions and cyclic-cover arithmetic
# ---------------------------------------------------------------------------


@dataclass
class BlowUpLattice:
    """Curves with coefficients in a divisor ``D`` and their intersection matrix under point blow-ups."""

    names: List[str]
    coef: Dict[str, int]
    inter: Dict[Tuple[str, str], int]

    @classmethod
    def start(cls, curves: Mapping[str, Tuple[int, int]], meets: Mapping[Tuple[str, str], int] = None) -> "BlowUpLattice":
        """``curves[name] = (coefficient in D, self-intersection)``."""
        names = list(curves)
        inter = {}
        for a in names:
            for b in names:
                if a == b:
                    inter[(a, b)] = curves[a][1]
                else:
                    inter[(a, b)] = (meets or {}).get((a, b), (meets or {}).get((b, a), 0))
        return cls(names, {n: curves[n][0] for n in names}, inter)

    def blow_up(self, new: str, through: Mapping[str, int]) -> None:
        """Blow up a point where each curve in ``through`` has the given multiplicity."""
        for a, ma in through.items():
            for b, mb in through.items():
                self.inter[(a, b)] -= ma * mb
        for a in self.names:
            self.inter[(a, new)] = self.inter[(new, a)] = through.get(a, 0)
        self.inter[(new, new)] = -1
        self.coef[new] = sum(self.coef[a] * m for a, m in through.items())
        self.names.append(new)

    def dot_d(self, name: str) -> int:
        return sum(self.coef[a] * self.inter[(a, name)] for a in self.names)

    def d_squared(self) -> int:
        return sum(self.coef[a] * self.dot_d(a) for a in self.names)


def cusp_resolution() -> BlowUpLattice:
    """Strict transform ``C`` (square 0) with a cusp, resolved by three blow-ups."""
    L = BlowUpLattice.start({"C": (1, 0)})
    L.blow_up("Ea", {"C": 2})
    L.blow_up("Eb", {"C": 1, "Ea": 1})
    L.blow_up("Ec", {"C": 1, "Ea": 1, "Eb": 1})
    return L


def tangent_line_conic_resolution() -> BlowUpLattice:
    """Line (square -2) tangent to a conic (square -2) at one point, resolved by two blow-ups."""
    L = BlowUpLattice.start({"L0": (1, -2), "L1": (1, -2)}, {("L0", "L1"): 2})
    L.blow_up("Ea", {"L0": 1, "L1": 1})
    L.blow_up("Eb", {"L0": 1, "L1": 1, "Ea": 1})
    return L


def concurrent_lines_resolution() -> BlowUpLattice:
    """Three lines (square -2) through one point, resolved by one blow-up."""
    L = BlowUpLattice.start({"L0": (1, -2), "L1": (1, -2), "L2": (1, -2)},
                            {("L0", "L1"): 1, ("L1", "L2"): 1, ("L0", "L2"): 1})
    L.blow_up("Ea", {"L0": 1, "L1": 1, "L2": 1})
    return L


@dataclass(frozen=True)
class CoverData:
    a: int
    a_nu: Tuple[int, ...]
    b: int
    b_nu: Tuple[int, ...]
    deck_order: int
    preimage_counts: Tuple[int, ...]
    labels: Tuple[str, ...] = ()
    rate_rescale: Optional[Fraction] = None

    @property
    def deck_group(self) -> str:
        return f"Z/{self.deck_order}"

    def to_json(self) -> dict:
        out = {"a": self.a, "aNu": list(self.a_nu), "b": self.b, "bNu": list(self.b_nu),
               "deckGroup": self.deck_group, "preimageCounts": list(self.preimage_counts),
               "ramificationIndices": list(self.b_nu)}
        if self.labels:
            out["labels"] = list(self.labels)
        if self.rate_rescale is not None:
            out["rateRescale"] = str(self.rate_rescale)
        return out


def cover_data(a: int, a_nu: Sequence[int], self_intersections: Optional[Tuple[int, Sequence[int]]] = None,
               labels: Sequence[str] = (), type_n: Optional[int] = None) -> CoverData:
    """Cyclic-cover numbers of ``D = a C + sum a_nu E_nu``: ``b = sum a_nu / a``, ``b_nu = a / a_nu``.

    ``self_intersections = (C^2, [E_nu^2])`` is checked against ``-b, -b_nu`` and ``D^2 = 0``.
    """
    a = int(a)
    a_nu = tuple(int(v) for v in a_nu)
    if a <= 0 or any(v <= 0 for v in a_nu) or not a_nu:
        raise NinePointError("multiplicities must be positive")
    if math.gcd(a, *a_nu) != 1:
        raise NinePointError(f"gcd of multiplicities is {math.gcd(a, *a_nu)}, not 1")
    if sum(a_nu) % a:
        raise NinePointError(f"b = {sum(a_nu)}/{a} is not an integer")
    if any(a % v for v in a_nu):
        raise NinePointError("some b_nu = a / a_nu is not an integer")
    b = sum(a_nu) // a
    b_nu = tuple(a // v for v in a_nu)
    if self_intersections is not None:
        c2, e2 = self_intersections
        if c2 != -b or tuple(e2) != tuple(-v for v in b_nu):
            raise NinePointError("self-intersections disagree with b, b_nu")
    d2 = -a * a * b + 2 * a * sum(a_nu) - sum(v * v * w for v, w in zip(a_nu, b_nu))
    if d2 != 0:
        raise NinePointError(f"D^2 = {d2}, expected 0")
    rate = None if type_n is None else Fraction(type_n, a)
    return CoverData(a, a_nu, b, b_nu, a, a_nu, tuple(labels), rate)


def cover_data_from_lattice(L: BlowUpLattice, type_n: Optional[int] = None) -> CoverData:
    """Pick the component meeting all others as ``C`` and check the transversality bullets."""
    if any(L.dot_d(n) != 0 for n in L.names):
        raise NinePointError("D is not numerically trivial on its support")
    centre = max(L.names, key=lambda n: (L.coef[n], n))
    others = sorted((n for n in L.names if n != centre), key=lambda n: (-L.coef[n], n))
    for n in others:
        if L.inter[(centre, n)] != 1:
            raise NinePointError(f"{n} does not meet {centre} transversally once")
    for x, y in itertools.combinations(others, 2):
        if L.inter[(x, y)] != 0:
            raise NinePointError(f"{x} and {y} intersect")
    return cover_data(L.coef[centre], [L.coef[n] for n in others],
                      (L.inter[(centre, centre)], [L.inter[(n, n)] for n in others]),
                      [centre] + others, type_n)


RESOLUTIONS = {"cuspidal": cusp_resolution, "line_conic_tangent": tangent_line_conic_resolution,
               "concurrent_lines": concurrent_lines_resolution}


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


THEOREM_CASES = ("i", "ii", "iii", "iv", "v")
DESCRIPTORS = {"i": "smooth semi-positive metric", "ii": "smooth semi-positive metric",
               "iii": "|f|^{-2}", "iv": "undetermined",
               "v": "h_P * prod_j |g_j|^{-2 a_j}"}


@dataclass(frozen=True)
class ClassificationReport:
    theorem_case: str
    normal_bundle: Mapping[str, object]
    metric_descriptor: str
    evidence: Mapping[str, object]
    cubic: Optional[CubicClassification] = None
    zariski: Optional[ZariskiResult] = None
    cover: Optional[CoverData] = None
    cubics: Tuple[Tuple, ...] = ()

    def to_json(self) -> dict:
        out = {"theoremCase": self.theorem_case, "metricDescriptor": self.metric_descriptor,
               "normalBundle": _sorted_json(self.normal_bundle), "evidence": _sorted_json(self.evidence),
               "cubics": [[_num_json(c) for c in cub] for cub in self.cubics]}
        if self.cubic is not None:
            out["cubicClassification"] = self.cubic.to_json()
        if self.zariski is not None:
            out["zariski"] = self.zariski.to_json()
        if self.cover is not None:
            out["coverData"] = self.cover.to_json()
        return out


def _sorted_json(m: Mapping) -> dict:
    return {k: m[k] for k in sorted(m)}


def _flat_verdict(angle: float, cfg: PlaneConfig) -> Tuple[str, dict]:
    res = classify_angle(angle, cfg.e1_depth, cfg.torsion_bound)
    ev = {"bundleKind": res.verdict, "depth": cfg.e1_depth}
    if res.verdict == "Torsion":
        ev["order"] = res.order
        return "i", ev
    if res.verdict == "E1":
        return "ii", ev
    ev["witness"] = res.witness
    return "iv", ev


def _smooth_case(cls: CubicClassification, cfg: PlaneConfig) -> Tuple[str, dict, dict]:
    cands = ([cfg.flex] if cfg.flex is not None else []) + list(cfg.points) + \
        [(Fraction(0), Fraction(1), Fraction(0)), (Fraction(1), Fraction(0), Fraction(0)),
         (Fraction(0), Fraction(0), Fraction(1))]
    flex = find_flex(cls.cubic, cands)
    if flex is None:
        return "iv", {"kind": "jacobian", "status": "no rational flex available"}, {"reason": "no rational flex"}
    model = weierstrass_from_flex(cls.cubic, flex)
    S = jacobian_point(model, cfg.points)
    E = model.curve
    nb = {"kind": "jacobian", "curve": {"a": str(E.a), "b": str(E.b)}, "flex": [str(v) for v in flex],
          "point": None if S is None else [str(S[0]), str(S[1])]}
    order = E.is_torsion(S, min(cfg.torsion_bound, MAZUR_BOUND)) if S is not None else 1
    if order is not None:
        nb["torsionOrder"] = order
        return "i", nb, {"torsionOrder": order}
    angle, step = jacobian_angle(E, S)
    nb["angle"] = angle
    nb["angleStep"] = step
    case, ev = _flat_verdict(angle, cfg)
    ev["mazurBound"] = MAZUR_BOUND
    return case, nb, ev


def _cycle_case(cls: CubicClassification, cfg: PlaneConfig) -> Tuple[str, dict, dict]:
    hol = cycle_holonomy(cls, cfg.points, cfg.seed)
    nb = {"kind": "holonomy", **hol.to_json()}
    if abs(math.log(abs(hol.alpha))) > HOLONOMY_TOL:
        return "iii", nb, {"holonomyResidual": hol.residual}
    angle = math.atan2(hol.alpha.imag, hol.alpha.real) / (2 * math.pi)
    case, ev = _flat_verdict(angle, cfg)
    ev["holonomyResidual"] = hol.residual
    return case, nb, ev


def _cover_case(cls: CubicClassification, cfg: PlaneConfig) -> Tuple[str, dict, dict, CoverData]:
    L = RESOLUTIONS[cls.case]()
    cover = cover_data_from_lattice(L)
    nb = {"kind": "trivial", "supportBundle": "trivial"}
    ev: Dict[str, object] = {"conditional": {"coverInfiniteType": "i", "coverFiniteType": "iii"}}
    if cfg.cover_model is None:
        ev["coverType"] = "type unknown"
        return "i_or_iii", nb, ev, cover
    from .models import model_from_spec
    from .ueda import compute_type

    rep = compute_type(model_from_spec(cfg.cover_model), int(cfg.cover_model.get("nMax", 8)))
    ev["coverType"] = rep.to_json()
    if rep.kind == "type":
        cover = cover_data_from_lattice(L, rep.n)
        return "iii", nb, ev, cover
    return "i", nb, ev, cover


def classify_anticanonical(cfg: PlaneConfig) -> ClassificationReport:
    cfg.validate()
    z = zariski_decompose(cfg.points, cfg.depth)
    if not z.nef:
        desc = DESCRIPTORS["v"] + " with " + ", ".join(f"{c.label} {c.cls} x {a}" for c, a in z.negative_part)
        return ClassificationReport("v", {"kind": "not nef"}, desc,
                                    {"negativeCurves": len(z.negative_part), "depth": cfg.depth}, None, z)
    cubics = tuple(fit_cubic(cfg.points, exact=True))
    if len(cubics) >= 2:
        return ClassificationReport("i", {"kind": "pencil"}, DESCRIPTORS["i"],
                                    {"nullSpaceDimension": len(cubics), "reason": "elliptic fibration"},
                                    None, z, None, cubics)
    chosen = cfg.cubic if cfg.cubic is not None else cubics[0]
    cls = classify_singularities(chosen, cfg.points)
    ev_base = {"nullSpaceDimension": len(cubics), "cubicCase": cls.case,
               "rationalizationResidual": cfg.rationalization_residual}
    cover = None
    if cls.case == "smooth":
        case, nb, ev = _smooth_case(cls, cfg)
    elif cls.case in ("nodal", "line_conic_transverse", "triangle"):
        case, nb, ev = _cycle_case(cls, cfg)
    else:
        case, nb, ev, cover = _cover_case(cls, cfg)
    desc = DESCRIPTORS.get(case, "conditional: smooth semi-positive metric (i) or |f|^{-2} (iii)")
    return ClassificationReport(case, nb, desc, {**ev_base, **ev}, cls, z, cover, cubics)
