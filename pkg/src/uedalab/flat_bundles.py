"""Topologically trivial line bundles on nodal curves as constant Cech cocycles.

Convention: ``t_jk`` is attached to the overlap record ``(j, k)`` and satisfies
``t_jk * w_k = w_j`` on ``U_jk``; sections obey ``s_j = t_jk * s_k``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple, Union

import mpmath
import numpy as np
from scipy.optimize import linprog

from .curve_model import NODE, Covering, CurveError, NodalCurve, build_dual_graph

COCYCLE_TOL = 1e-12
TORSION_TOL = 1e-12
E1_MARGIN = 2.0
E1_SLOPE_MAX = 2.0

Angle = Union[Fraction, float, "mpmath.mpf"]


class BundleError(ValueError):
    pass


class NotFlatError(BundleError):
    """Raised when a distance is requested off the flat locus."""


def _directed(t: complex, d: int) -> complex:
    return t if d > 0 else 1 / t


@dataclass(frozen=True, eq=False)
class FlatCocycle:
    """Constant transition data ``{oid: t_jk}`` on a covering.

    ``angle`` optionally records the holonomy exactly as ``exp(2 pi i angle)``
    (a :class:`~fractions.Fraction` for roots of unity).
    """

    covering: Covering
    edges: Mapping[str, complex]
    angle: Optional[Angle] = None

    def __post_init__(self) -> None:
        missing = set(self.covering.overlap_ids) - set(self.edges)
        if missing:
            raise BundleError(f"missing edge values for {sorted(missing)}")
        for oid, t in self.edges.items():
            if t == 0 or not cmath.isfinite(complex(t)):
                raise BundleError(f"edge {oid}: t must be finite and nonzero")
        for tri in self.covering.triples:
            ab, bc, ac = (self.edges[o] for o in tri.overlaps)
            a, b, c = tri.charts
            t_ab = _oriented(self.covering, tri.overlaps[0], a, b, ab)
            t_bc = _oriented(self.covering, tri.overlaps[1], b, c, bc)
            t_ac = _oriented(self.covering, tri.overlaps[2], a, c, ac)
            if abs(t_ab * t_bc - t_ac) > COCYCLE_TOL * max(1.0, abs(t_ac)):
                raise BundleError(f"cocycle condition fails on triple {tri.charts}")

    # -- constructors -------------------------------------------------------
    @classmethod
    def trivial(cls, covering: Covering) -> "FlatCocycle":
        return cls(covering, {oid: 1.0 + 0j for oid in covering.overlap_ids}, Fraction(0))

    @classmethod
    def from_holonomy(cls, covering: Covering, tau: complex, angle: Optional[Angle] = None,
                      gauge: Optional[Mapping[str, complex]] = None) -> "FlatCocycle":
        """Cocycle with holonomy ``tau`` on a cycle covering, optionally gauged by chart constants.

        ``tau`` sits on the first free edge of the canonical loop; ``gauge``
        applies the coboundary ``t_jk -> t_jk * a_j / a_k``.
        """
        if angle is not None and tau is None:
            tau = _exp_angle(angle)
        edges = {oid: 1.0 + 0j for oid in covering.overlap_ids}
        oid, d = free_loop_edge(covering)
        edges[oid] = complex(tau) if d > 0 else 1 / complex(tau)
        out = cls(covering, edges, angle)
        return out.gauged(gauge) if gauge else out

    @classmethod
    def from_angle(cls, covering: Covering, angle: Angle, gauge: Optional[Mapping[str, complex]] = None) -> "FlatCocycle":
        return cls.from_holonomy(covering, _exp_angle(angle), angle, gauge)

    # -- algebra ------------------------------------------------------------
    def gauged(self, a: Mapping[str, complex]) -> "FlatCocycle":
        edges = {}
        for oid, t in self.edges.items():
            o = self.covering.overlap(oid)
            edges[oid] = t * a.get(o.j, 1.0) / a.get(o.k, 1.0)
        return FlatCocycle(self.covering, edges, self.angle)

    def power(self, n: int) -> "FlatCocycle":
        edges = {oid: complex(t) ** n for oid, t in self.edges.items()}
        angle = None if self.angle is None else self.angle * n
        return FlatCocycle(self.covering, edges, angle)

    def __mul__(self, other: "FlatCocycle") -> "FlatCocycle":
        if other.covering is not self.covering:
            raise BundleError("cocycles live on different coverings")
        edges = {oid: self.edges[oid] * other.edges[oid] for oid in self.edges}
        angle = None if (self.angle is None or other.angle is None) else self.angle + other.angle
        return FlatCocycle(self.covering, edges, angle)

    def directed(self, oid: str, d: int) -> complex:
        return _directed(complex(self.edges[oid]), d)

    @property
    def flat_flag(self) -> bool:
        return is_flat(self)

    def normal_form(self) -> Tuple[Dict[str, complex], Dict[str, complex]]:
        """``(tau, a)`` with ``t_jk = tau_{nu mu} * a_mu / a_nu`` on normalization overlaps.

        ``a`` is positive real, obtained from ``log|t|`` per component with the
        gauge ``mean(log a) = 0`` over the smooth charts of each component;
        ``tau = t * a_nu / a_mu`` then lies in U(1) exactly when the
        moduli are a coboundary on the normalization.
        """
        cov = self.covering
        norm = cov.normalization_charts()
        idx = {c.id: i for i, c in enumerate(norm)}
        rows, rhs = [], []
        for oid, t in self.edges.items():
            nu, mu = cov.overlap_normalization(oid)
            row = np.zeros(len(norm))
            row[idx[mu]] += 1.0
            row[idx[nu]] -= 1.0
            rows.append(row)
            rhs.append(math.log(abs(t)))
        for comp in cov.curve.components:
            smooth = [idx[c.id] for c in norm if c.component == comp.id and cov.chart(c.chart).kind != NODE]
            members = smooth or [idx[c.id] for c in norm if c.component == comp.id]
            row = np.zeros(len(norm))
            row[members] = 1.0
            rows.append(row)
            rhs.append(0.0)
        sol = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
        a = {c.id: float(math.exp(sol[idx[c.id]])) for c in norm}
        tau = {}
        for oid, t in self.edges.items():
            nu, mu = cov.overlap_normalization(oid)
            tau[oid] = complex(t) * a[nu] / a[mu]
        return tau, a

    def to_json(self) -> dict:
        out = {"edges": []}
        for oid in self.covering.overlap_ids:
            o = self.covering.overlap(oid)
            t = complex(self.edges[oid])
            out["edges"].append({"id": oid, "j": o.j, "k": o.k, "re": t.real, "im": t.imag})
        if isinstance(self.angle, Fraction):
            out["angleRational"] = {"p": self.angle.numerator, "q": self.angle.denominator}
        return out

    @classmethod
    def from_json(cls, covering: Covering, data: Mapping) -> "FlatCocycle":
        angle = None
        if data.get("angleRational"):
            ar = data["angleRational"]
            angle = Fraction(int(ar["p"]), int(ar["q"]))
        if not data.get("edges"):
            if angle is None:
                raise BundleError("bundle needs edges or angleRational")
            return cls.from_angle(covering, angle)
        edges = {}
        for e in data["edges"]:
            oid = e.get("id")
            if oid is None:
                matches = [o.id for o in covering.nerve if o.j == e["j"] and o.k == e["k"]]
                if len(matches) != 1:
                    raise BundleError(f"edge ({e['j']}, {e['k']}) is ambiguous or unknown; give its id")
                oid = matches[0]
            edges[oid] = complex(float(e["re"]), float(e["im"]))
        return cls(covering, edges, angle)


def _oriented(cov: Covering, oid: str, a: str, b: str, t: complex) -> complex:
    o = cov.overlap(oid)
    return t if (o.j, o.k) == (a, b) else 1 / t


def _exp_angle(angle: Angle) -> complex:
    if isinstance(angle, Fraction):
        return complex(mpmath.expjpi(2 * mpmath.mpf(angle.numerator) / angle.denominator))
    return complex(mpmath.expjpi(2 * mpmath.mpf(angle)))


def free_loop_edge(cov: Covering) -> Tuple[str, int]:
    """First edge of the canonical loop that lies in no triple overlap."""
    in_triples = {o for tri in cov.triples for o in tri.overlaps}
    for oid, d in cov.cycle_path():
        if oid not in in_triples:
            return oid, d
    raise CurveError("canonical loop has no free edge")


# ---------------------------------------------------------------------------
# Holonomy, flatness, distance
# ---------------------------------------------------------------------------


def holonomy(L: FlatCocycle) -> complex:
    """Ordered product of ``t`` along the canonical loop (see ``Covering.cycle_path``)."""
    out = 1.0 + 0j
    for oid, d in L.covering.cycle_path():
        out *= L.directed(oid, d)
    return out


def holonomy_angle(L: FlatCocycle) -> Angle:
    """Holonomy angle in ``[0, 1)`` (exact when the cocycle carries one)."""
    if L.angle is not None:
        return _frac_part(L.angle)
    return cmath.phase(holonomy(L)) / (2 * math.pi) % 1.0


def _frac_part(a: Angle) -> Angle:
    if isinstance(a, Fraction):
        return a - math.floor(a)
    return a - mpmath.floor(a) if isinstance(a, mpmath.mpf) else a % 1.0


def is_flat(L: FlatCocycle, tol: float = 1e-12) -> bool:
    g = build_dual_graph(L.covering.curve)
    if g.is_cycle:
        return abs(abs(holonomy(L)) - 1.0) <= tol
    return True


_KAPPA_CACHE: Dict[tuple, float] = {}


def loop_contraction(cov: Covering) -> float:
    """``kappa`` with ``min_gauge max_e |arg t_e| = kappa * |phi|`` for holonomy angle ``phi``.

    Solved once by linear programming over real chart potentials (the
    optimum is homogeneous in ``phi``).
    """
    charts = list(cov.chart_ids)
    free, d_free = free_loop_edge(cov)
    # the LP sees only the nerve, so key on it (ids of collected coverings get reused)
    key = (tuple(charts), tuple((o.id, o.j, o.k) for o in cov.nerve), free, d_free)
    if key in _KAPPA_CACHE:
        return _KAPPA_CACHE[key]
    idx = {c: i for i, c in enumerate(charts)}
    n = len(charts) + 1  # potentials and s
    a_ub, b_ub = [], []
    for o in cov.nerve:
        theta = (1.0 if d_free > 0 else -1.0) if o.id == free else 0.0
        for sign in (1.0, -1.0):
            row = np.zeros(n)
            row[idx[o.j]] += sign
            row[idx[o.k]] -= sign
            row[-1] = -1.0
            a_ub.append(row)
            b_ub.append(-sign * theta)
    c = np.zeros(n)
    c[-1] = 1.0
    bounds = [(None, None)] * (n - 1) + [(0, None)]
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds, method="highs")
    if not res.success:
        raise BundleError(f"distance LP failed: {res.message}")
    _KAPPA_CACHE[key] = float(res.x[-1])
    return _KAPPA_CACHE[key]


def distance(L: FlatCocycle) -> float:
    """``inf`` over U(1) representatives of ``max |1 - t_jk|``."""
    g = build_dual_graph(L.covering.curve)
    if not g.is_cycle:
        return 0.0
    h = holonomy(L)
    if abs(abs(h) - 1.0) > 1e-12:
        raise NotFlatError(f"distance undefined off the flat locus (|holonomy| = {abs(h)!r})")
    phi = 2 * math.pi * float(_signed_frac(holonomy_angle(L)))
    return _chord(loop_contraction(L.covering) * abs(phi))


def _chord(s: float) -> float:
    return 2.0 * math.sin(min(s, math.pi) / 2.0)


def _signed_frac(a: Angle) -> Angle:
    """Representative of ``a`` mod 1 in ``(-1/2, 1/2]``."""
    f = _frac_part(a)
    return f - 1 if f > Fraction(1, 2) else f


def distance_of_power(L: FlatCocycle, n: int) -> float:
    return distance(L.power(n))


def cycle_distance_closed_form(tau: complex, m_edges: int) -> float:
    """Balanced representative on a pure cycle nerve with ``m_edges`` edges."""
    phi = cmath.phase(tau)
    return abs(1 - cmath.exp(1j * phi / m_edges))


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BundleClassification:
    verdict: str  # "Torsion" | "E1" | "NotE1UpTo" | "NonFlat"
    depth: int
    order: Optional[int] = None
    witness: Optional[int] = None
    holonomy_modulus: Optional[float] = None
    evidence: Mapping[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "depth": self.depth}
        if self.order is not None:
            out["order"] = self.order
        if self.witness is not None:
            out["witness"] = self.witness
        if self.holonomy_modulus is not None:
            out["holonomyModulus"] = self.holonomy_modulus
        if self.evidence:
            out["evidence"] = {k: self.evidence[k] for k in sorted(self.evidence)}
        return out


def torsion_order(angle: Angle, bound: int, tol: float = TORSION_TOL) -> Optional[int]:
    """Least ``m <= bound`` with ``exp(2 pi i m angle) = 1`` (exact for rational angles)."""
    if isinstance(angle, Fraction):
        q = (angle - math.floor(angle)).denominator
        return q if q <= bound else None
    a = mpmath.mpf(angle)
    for m in range(1, bound + 1):
        x = m * a
        if abs(2 * mpmath.sin(mpmath.pi * (x - mpmath.nint(x)))) < tol:
            return m
    return None


def _dist_frac(angle: Angle, n: int) -> float:
    """``||n * angle||`` as a float (exact reduction for fractions)."""
    if isinstance(angle, Fraction):
        x = angle * n
        return float(abs(x - round(x)))
    x = mpmath.mpf(angle) * n
    return float(abs(x - mpmath.nint(x)))


def log_inverse_distances(angle: Angle, depth: int, kappa: float = 1.0) -> np.ndarray:
    """``g(n) = -log d(O, L^n)`` for ``n = 1..depth`` (``inf`` where ``L^n`` is trivial)."""
    with mpmath.workdps(40):
        out = np.empty(depth)
        for n in range(1, depth + 1):
            f = _dist_frac(angle, n)
            d = _chord(kappa * 2 * math.pi * f)
            out[n - 1] = math.inf if d == 0 else -math.log(d)
    return out


def e1_fit(g: np.ndarray, margin: float = E1_MARGIN, slope_max: float = E1_SLOPE_MAX) -> Dict[str, float]:
    """Least-squares fit ``g ~ c1 + c2 log n`` on record-breaking points.

    Returns the fit, the largest positive residual over all ``n``, its
    location and the envelope constant ``c1 + maxResidual``.
    """
    n = np.arange(1, g.size + 1, dtype=float)
    if np.isinf(g).any():
        first = int(np.argmax(np.isinf(g))) + 1
        return {"c1": math.nan, "c2": math.nan, "maxResidual": math.inf, "witness": float(first)}
    records = []
    best = -math.inf
    for i, v in enumerate(g):
        if v > best:
            best = v
            records.append(i)
    x = np.log(n[records])
    y = g[records]
    if len(records) >= 2:
        c2, c1 = np.polyfit(x, y, 1)
    else:
        c2, c1 = 0.0, float(y[0])
    resid = g - (c1 + c2 * np.log(n))
    k = int(np.argmax(resid))
    return {"c1": float(c1), "c2": float(c2), "maxResidual": float(resid[k]), "witness": float(k + 1),
            "envelope": float(c1 + max(resid[k], 0.0)), "records": float(len(records)),
            "margin": margin, "slopeMax": slope_max}


def classify(L: FlatCocycle, depth: int = 10_000, torsion_bound: int = 1000,
             margin: float = E1_MARGIN, slope_max: float = E1_SLOPE_MAX) -> BundleClassification:
    if depth < 1 or torsion_bound < 1:
        raise BundleError("depth and torsion bound must be positive")
    g = build_dual_graph(L.covering.curve)
    if not g.is_cycle:
        return BundleClassification("Torsion", depth, order=1)
    h = holonomy(L)
    if abs(abs(h) - 1.0) > TORSION_TOL:
        return BundleClassification("NonFlat", depth, holonomy_modulus=abs(h))
    return classify_angle(holonomy_angle(L), depth, torsion_bound, margin, slope_max,
                          kappa=loop_contraction(L.covering))


def classify_angle(angle: Angle, depth: int = 10_000, torsion_bound: int = 1000,
                   margin: float = E1_MARGIN, slope_max: float = E1_SLOPE_MAX,
                   kappa: float = 1.0) -> BundleClassification:
    """Verdict for the flat bundle with holonomy ``exp(2 pi i angle)``."""
    m = torsion_order(angle, torsion_bound)
    if m is not None:
        return BundleClassification("Torsion", depth, order=m)
    fit = e1_fit(log_inverse_distances(angle, depth, kappa), margin, slope_max)
    if fit["maxResidual"] > margin or not fit["c2"] <= slope_max:
        return BundleClassification("NotE1UpTo", depth, witness=int(fit["witness"]), evidence=fit)
    return BundleClassification("E1", depth, evidence=fit)


# ---------------------------------------------------------------------------
# Cohomology
# ---------------------------------------------------------------------------


def cohomology_dims(curve: NodalCurve, L: Optional[FlatCocycle] = None) -> Dict[str, Tuple[int, int]]:
    """``h0, h1`` of ``C(L)`` and (rational curves) of ``O(L)`` from the normalization sequence.

    ``L = None`` means the trivial bundle.
    """
    g = build_dual_graph(curve)
    trivial = True
    if L is not None:
        if L.covering.curve is not curve and L.covering.curve != curve:
            raise BundleError("bundle lives on a different curve")
        trivial = (not g.is_cycle) or abs(holonomy(L) - 1) <= TORSION_TOL
    if not g.is_tree and not g.is_cycle and L is not None:
        raise BundleError("only tree and cycle dual graphs are supported with a nontrivial bundle")
    h0 = 1 if trivial else 0
    n_comp, n_nodes = len(curve.components), len(curve.nodes)
    top = sum(2 * c.genus for c in curve.components)
    out = {"C": (h0, h0 - n_comp + n_nodes + top)}
    if curve.rational:
        out["O"] = (h0, h0 - n_comp + n_nodes)
    return out


def _cech_matrices(L: FlatCocycle, grade: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Cech differentials of ``C(L)`` (``grade=None``) or of the ``zeta^grade`` part of ``O(L)``.

    A piece supports ``zeta^m`` when the function ``zeta^m`` is holomorphic
    on it.  Node charts share one constant between their two pieces, so the
    grade-0 part of ``O(L)`` coincides with ``C(L)``.
    """
    cov = L.covering
    cells0: List[Tuple[str, str]] = []  # (chart, piece label)
    for ch in cov.charts:
        if grade is None or grade == 0:
            cells0.append((ch.id, "*"))
            continue
        for p in ch.pieces:
            if _supports(p, grade):
                cells0.append((ch.id, p.label if ch.kind == NODE else "z"))
    idx0 = {c: i for i, c in enumerate(cells0)}
    edges = list(cov.nerve)
    idx1 = {o.id: i for i, o in enumerate(edges)}

    def cell(chart: str, label: str) -> Optional[int]:
        key = (chart, "*") if (grade is None or grade == 0) else (chart, label)
        return idx0.get(key)

    d0 = np.zeros((len(edges), len(cells0)), dtype=complex)
    for o in edges:
        t = complex(L.edges[o.id])
        r = idx1[o.id]
        a = cell(o.j, "z")
        b = cell(o.k, o.branch or "z")
        if a is not None:
            d0[r, a] += 1.0
        if b is not None:
            d0[r, b] -= t
    d1 = np.zeros((len(cov.triples), len(edges)), dtype=complex)
    for r, tri in enumerate(cov.triples):
        a, b, c = tri.charts
        o_ab, o_bc, o_ac = tri.overlaps
        # (delta c)_abc = c_ab + t_ab c_bc - c_ac with c_ba = -t_ba c_ab
        for oid, (u, v), coef in ((o_ab, (a, b), 1.0), (o_bc, (b, c), complex(_t_dir(L, o_ab, a, b))),
                                  (o_ac, (a, c), -1.0)):
            o = cov.overlap(oid)
            if (o.j, o.k) == (u, v):
                d1[r, idx1[oid]] += coef
            else:
                d1[r, idx1[oid]] += coef * (-_t_dir(L, oid, u, v))
    return d0, d1


def _t_dir(L: FlatCocycle, oid: str, u: str, v: str) -> complex:
    return _oriented(L.covering, oid, u, v, complex(L.edges[oid]))


def _supports(p, m: int) -> bool:
    # zeta^m on the band lo < |zeta| < hi
    if m > 0:
        return not math.isinf(p.hi)
    return p.lo > 0


def _rank(a: np.ndarray, tol: float = 1e-9) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int((s > tol * max(1.0, s[0])).sum())


def _h01(d0: np.ndarray, d1: np.ndarray) -> Tuple[int, int]:
    r0, r1 = _rank(d0), _rank(d1)
    h0 = d0.shape[1] - r0
    h1 = (d0.shape[0] - r1) - r0
    return h0, h1


def cohomology_dims_bruteforce(L: FlatCocycle, grades: int = 4) -> Dict[str, Tuple[int, int]]:
    """Cech ranks on the nerve; ``O(L)`` is summed over ``zeta``-grades ``|m| <= grades``."""
    h0c, h1c = _h01(*_cech_matrices(L))
    out = {"C": (h0c, h1c)}
    if L.covering.curve.rational:
        h0, h1 = h0c, h1c
        for m in range(-grades, grades + 1):
            if m == 0:
                continue
            a, b = _h01(*_cech_matrices(L, m))
            h0 += a
            h1 += b
        out["O"] = (h0, h1)
    return out
