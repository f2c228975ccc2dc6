"""Ueda obstruction classes, the order-upgrade loop and the type of a germ.

For a system of order ``n``, ``t_jk w_k = w_j + f_{n+1}(z_j) w_j^{n+1} + ...``
and ``c_jk := n f_{n+1} = (w_j^{-n} - t_jk^{-n} w_k^{-n})|_U`` is a 1-cocycle
of ``O(N^{-n})``: ``c_jk + t_jk^{-n} c_kl = c_jl``.  A solution of
``F_j - t_jk^{-n} F_k = c_jk`` upgrades the system through
``v_j = w_j (1 - F_j w_j^n)^(-1/n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .curve_model import NODE, Covering, build_dual_graph
from .flat_bundles import FlatCocycle, distance
from .jets import (
    LaurentPoly,
    OverlapData,
    SplitFunction,
    TransitionSystem,
    WJet,
    branch_base,
    expand,
)

DEFAULT_TOL = 1e-8
ORDER_TOL = 1e-9
DEFAULT_NMAX = 8
CHOP = 1e-13  # relative size below which solved Laurent coefficients are round-off

Cochain = Dict[str, Union[LaurentPoly, SplitFunction]]


class UedaError(ValueError):
    pass


class OrderViolation(UedaError):
    pass


class RankDeficient(UedaError):
    pass


# ---------------------------------------------------------------------------
# Systems of order n
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrderNSystem:
    system: TransitionSystem
    n: int
    history: Tuple[Cochain, ...] = ()

    @property
    def covering(self) -> Covering:
        return self.system.covering

    def order_residual(self, upto: Optional[int] = None) -> float:
        """Largest coefficient of ``f_m``, ``2 <= m <= upto`` (default ``n``)."""
        upto = self.n if upto is None else upto
        worst = 0.0
        for oid in self.system.data:
            e = expand(self.system, oid, upto) if upto >= 2 else {}
            for m in range(2, upto + 1):
                worst = max(worst, e[m].max_abs())
        return worst

    def check_order(self, tol: float = ORDER_TOL) -> None:
        r = self.order_residual()
        if r > tol:
            raise OrderViolation(f"system is not of order {self.n}: residual {r:.3e} > {tol:.1e}")


def twist(system: TransitionSystem) -> FlatCocycle:
    return FlatCocycle(system.covering, dict(system.t))


@dataclass(frozen=True, eq=False)
class ObstructionCocycle:
    """``values[oid] = f_{n+1}`` in ``z_j``; the twist is ``t^{-n}``."""

    covering: Covering
    n: int
    values: Mapping[str, LaurentPoly]
    t: Mapping[str, complex]

    def scaled(self) -> Dict[str, LaurentPoly]:
        """``c_jk = n * f_{n+1}``."""
        return {oid: v * self.n for oid, v in self.values.items()}

    def twist_factor(self, oid: str) -> complex:
        return complex(self.t[oid]) ** (-self.n)

    def norm(self) -> float:
        return max((v.sup_norm(self.covering.overlap(oid).annulus) for oid, v in self.values.items()), default=0.0)

    def max_coeff(self) -> float:
        return max((v.max_abs() for v in self.values.values()), default=0.0)

    def is_zero(self, atol: float) -> bool:
        return self.max_coeff() <= atol

    def to_json(self) -> dict:
        return {"n": self.n, "values": {oid: self.values[oid].to_json() for oid in sorted(self.values)}}


def obstruction(osys: OrderNSystem, tol: float = ORDER_TOL, check: bool = True) -> ObstructionCocycle:
    """The cocycle ``{f_{n+1}}`` of an order-``n`` system."""
    if check:
        osys.check_order(tol)
    n = osys.n
    vals = {oid: expand(osys.system, oid, n + 1)[n + 1] for oid in osys.system.data}
    return ObstructionCocycle(osys.covering, n, vals, dict(osys.system.t))


def _to_chart(cov: Covering, poly: LaurentPoly, src: str, dst: str, via: Mapping[Tuple[str, str], str]) -> LaurentPoly:
    """Re-express a function of ``z_src`` in ``z_dst`` using the overlap joining them."""
    poly = poly.with_annulus(None)
    if src == dst:
        return poly
    o = cov.overlap(via[(src, dst)] if (src, dst) in via else via[(dst, src)])
    if (o.j, o.k) == (dst, src):
        return poly.substitute_monomial(o.scale, o.eps)  # z_src = c z_dst^eps
    c_inv = complex(o.scale) ** (-o.eps)
    return poly.substitute_monomial(c_inv, o.eps)  # z_dst = c z_src^eps


def cocycle_residual(cocycle: ObstructionCocycle) -> float:
    """``max |c_ab + T_ab c_bc - c_ac|`` over triple overlaps, ``T = t^{-n}``."""
    cov = cocycle.covering
    c = cocycle.scaled()
    worst = 0.0
    for tri in cov.triples:
        a, b, cc = tri.charts
        pairs = {(a, b): tri.overlaps[0], (b, cc): tri.overlaps[1], (a, cc): tri.overlaps[2]}
        smooth = next(x for x in tri.charts if cov.chart(x).kind != NODE)

        def oriented(u: str, v: str) -> LaurentPoly:
            oid = pairs[(u, v)]
            o = cov.overlap(oid)
            if (o.j, o.k) == (u, v):
                return _to_chart(cov, c[oid], o.j, smooth, pairs)
            return _to_chart(cov, c[oid], o.j, smooth, pairs) * (-(complex(cocycle.t[oid]) ** cocycle.n))

        t_ab = _oriented_t(cov, pairs[(a, b)], a, b, cocycle.t) ** (-cocycle.n)
        res = oriented(a, b) + oriented(b, cc) * t_ab - oriented(a, cc)
        worst = max(worst, res.max_abs())
    return worst


def _oriented_t(cov: Covering, oid: str, u: str, v: str, t: Mapping[str, complex]) -> complex:
    o = cov.overlap(oid)
    return complex(t[oid]) if (o.j, o.k) == (u, v) else 1 / complex(t[oid])


def closed_form_check(osys: OrderNSystem, cocycle: ObstructionCocycle, samples: int = 20,
                      radius: float = 0.1, nodes: int = 64, seed: int = 0) -> float:
    """Compare ``f_{n+1}`` with the circle mean of ``(w^{-n} - t^{-n} w_k^{-n}) / n``.

    ``w_k`` is evaluated pointwise from the stored jets; the mean over
    ``|w_j| = radius`` extracts the ``w^0`` coefficient of the Laurent series.
    Returns the largest absolute discrepancy over ``samples`` points per overlap.
    """
    rng = np.random.default_rng(seed)
    n = osys.n
    ang = 2 * np.pi * np.arange(nodes) / nodes
    w = radius * np.exp(1j * ang)
    worst = 0.0
    for oid, d in osys.system.data.items():
        o = osys.covering.overlap(oid)
        lo, hi = o.annulus
        r = np.exp(rng.uniform(math.log(lo), math.log(hi), samples))
        z = r * np.exp(2j * np.pi * rng.random(samples))
        tn = complex(osys.system.t[oid]) ** (-n)
        zz, ww = z[:, None], w[None, :]
        wk = d.x(zz, ww) * d.y(zz, ww) if d.is_node else d.w(zz, ww)
        mean = np.mean(ww ** (-n) - tn * wk ** (-n), axis=1) / n
        worst = max(worst, float(np.max(np.abs(mean - cocycle.values[oid](z)))))
    return float(worst)


# ---------------------------------------------------------------------------
# Coboundary solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoboundarySolution:
    cochain: Optional[Cochain]
    residual: float
    relative_residual: float
    kernel: int
    cochain_norm: float
    cocycle_norm: float

    @property
    def solved(self) -> bool:
        return self.cochain is not None

    @property
    def ratio(self) -> float:
        return self.cochain_norm / self.cocycle_norm if self.cocycle_norm else 0.0


def expected_kernel(cocycle: ObstructionCocycle) -> int:
    """``h^0(O(N^{-n}))`` on a rational configuration: 1 iff the twist is trivial."""
    g = build_dual_graph(cocycle.covering.curve)
    if not g.is_cycle:
        return 1
    hol = 1.0 + 0j
    for oid, d in cocycle.covering.cycle_path():
        t = cocycle.twist_factor(oid)
        hol *= t if d > 0 else 1 / t
    return 1 if abs(hol - 1) < 1e-12 else 0


def _unknown_layout(cov: Covering, D: int) -> Tuple[List[Tuple[str, str, int]], Dict[Tuple[str, str, int], int]]:
    cols: List[Tuple[str, str, int]] = []
    for ch in cov.charts:
        if ch.kind == NODE:
            cols.append((ch.id, "C", 0))
            cols += [(ch.id, "x", e) for e in range(1, D + 1)]
            cols += [(ch.id, "y", e) for e in range(1, D + 1)]
        else:
            r_in, r_out = ch.radius
            lo = 0 if r_in == 0 else -D
            hi = 0 if math.isinf(r_out) else D
            cols += [(ch.id, "z", e) for e in range(lo, hi + 1)]
    return cols, {c: i for i, c in enumerate(cols)}


def solve_coboundary(cocycle: ObstructionCocycle, system: TransitionSystem, tol: float = DEFAULT_TOL,
                     span: Optional[int] = None) -> CoboundarySolution:
    """Least-squares solve of ``F_j - t_jk^{-n} F_k = c_jk`` over Laurent coefficients.

    Smooth charts carry Laurent polynomials (nonnegative exponents on disks),
    node charts the split form ``C + G_+(x) + G_-(y)``.  The kernel expected
    from ``h^0`` is removed by pinning the ``z^0`` coefficient of the first chart.
    """
    cov = cocycle.covering
    c = cocycle.scaled()
    max_e = max((max(abs(v.lo), abs(v.hi)) for v in c.values() if not v.is_zero()), default=0)
    D = span if span is not None else min(max_e + 2, system.data[next(iter(system.data))].target_w().d_max)
    cols, col_idx = _unknown_layout(cov, D)
    rows: List[np.ndarray] = []
    rhs: List[complex] = []
    for oid in cov.overlap_ids:
        o = cov.overlap(oid)
        T = cocycle.twist_factor(oid)
        block: Dict[int, Dict[int, complex]] = {}

        def put(exp: int, col: int, val: complex) -> None:
            block.setdefault(exp, {})
            block[exp][col] = block[exp].get(col, 0) + val

        # F_j terms
        for (cid, kind, e), i in col_idx.items():
            if cid == o.j:
                put(e, i, 1.0)
        # -T F_k(z_k(z_j))
        kch = cov.chart(o.k)
        if kch.kind == NODE:
            cb, eb = branch_base(system, oid)
            put(0, col_idx[(o.k, "C", 0)], -T)
            for e in range(1, D + 1):
                put(eb * e, col_idx[(o.k, o.branch, e)], -T * cb ** e)
        else:
            for (cid, kind, e), i in col_idx.items():
                if cid == o.k:
                    put(o.eps * e, i, -T * complex(o.scale) ** e)
        exps = set(block) | {e for e, _ in c[oid].terms()}
        for e in sorted(exps):
            row = np.zeros(len(cols), dtype=complex)
            for i, v in block.get(e, {}).items():
                row[i] += v
            rows.append(row)
            rhs.append(complex(c[oid].coefficient(e)))
    a = np.array(rows)
    b = np.array(rhs)
    kern = expected_kernel(cocycle)
    if kern:
        pin = np.zeros(len(cols), dtype=complex)
        first = cov.charts[0]
        pin[col_idx[(first.id, "C", 0)] if first.kind == NODE else col_idx[(first.id, "z", 0)]] = 1.0
        a = np.vstack([a, pin])
        b = np.append(b, 0.0)
    s = np.linalg.svd(a, compute_uv=False)
    rank = int((s > 1e-10 * s[0]).sum()) if s.size else 0
    if rank < len(cols):
        raise RankDeficient(f"coboundary system has {len(cols) - rank} unexpected kernel directions")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = float(np.linalg.norm(a @ x - b))
    bnorm = float(np.linalg.norm(b))
    rel = resid / bnorm if bnorm > 0 else 0.0
    c_norm = cocycle.norm() * cocycle.n
    if bnorm == 0:
        return CoboundarySolution(_zero_cochain(cov), 0.0, 0.0, kern, 0.0, 0.0)
    if rel >= tol:
        return CoboundarySolution(None, resid, rel, kern, math.nan, c_norm)
    x = np.where(np.abs(x) > CHOP * np.abs(x).max(), x, 0)
    cochain = _assemble(cov, cols, x, D)
    return CoboundarySolution(cochain, resid, rel, kern, cochain_norm(cov, cochain), c_norm)


def _zero_cochain(cov: Covering) -> Cochain:
    return {ch.id: (SplitFunction() if ch.kind == NODE else LaurentPoly.zero()) for ch in cov.charts}


def _assemble(cov: Covering, cols, x: np.ndarray, D: int) -> Cochain:
    out: Cochain = {}
    for ch in cov.charts:
        if ch.kind == NODE:
            C = x[cols.index((ch.id, "C", 0))]
            gp = tuple(complex(x[cols.index((ch.id, "x", e))]) for e in range(1, D + 1))
            gm = tuple(complex(x[cols.index((ch.id, "y", e))]) for e in range(1, D + 1))
            out[ch.id] = SplitFunction(complex(C), gp, gm)
        else:
            terms = {e: complex(x[i]) for i, (cid, kind, e) in enumerate(cols) if cid == ch.id}
            out[ch.id] = LaurentPoly.from_dict(terms)
    return out


def cochain_norm(cov: Covering, F: Cochain) -> float:
    worst = 0.0
    for ch in cov.charts:
        f = F[ch.id]
        if ch.kind == NODE:
            worst = max(worst, f.sup_norm(ch.radius[1]))
        else:
            worst = max(worst, f.sup_norm(ch.radius))
    return worst


def coboundary(cov: Covering, system: TransitionSystem, F: Cochain, n: int) -> Dict[str, LaurentPoly]:
    """``(delta F)_jk = F_j - t_jk^{-n} F_k(z_k(z_j))`` as Laurent polynomials in ``z_j``."""
    out = {}
    for oid in cov.overlap_ids:
        o = cov.overlap(oid)
        T = complex(system.t[oid]) ** (-n)
        fj = F[o.j]
        if cov.chart(o.k).kind == NODE:
            cb, eb = branch_base(system, oid)
            fk = F[o.k].branch(o.branch).substitute_monomial(cb, eb)
        else:
            fk = F[o.k].substitute_monomial(o.scale, o.eps)
        out[oid] = fj - fk * T
    return out


# ---------------------------------------------------------------------------
# Residue functional on the cycle
# ---------------------------------------------------------------------------


def residue_functional(cocycle: ObstructionCocycle, tol: float = 1e-12) -> complex:
    """Sum of ``z^0`` coefficients of ``c`` along the canonical loop after untwisting.

    Requires the twist ``t^{-n}`` to have trivial holonomy; the global section
    ``s`` of ``N^{-n}`` is divided out first so the loop sum is gauge independent.
    """
    cov = cocycle.covering
    if not build_dual_graph(cov.curve).is_cycle:
        raise UedaError("residue functional needs a cycle dual graph")
    if expected_kernel(cocycle) == 0:
        raise UedaError("residue functional needs trivial twisting")
    # section s_j = T_jk s_k, T = t^{-n}
    s: Dict[str, complex] = {cov.charts[0].id: 1.0 + 0j}
    frontier = [cov.charts[0].id]
    while frontier:
        a = frontier.pop()
        for o in cov.nerve:
            T = cocycle.twist_factor(o.id)
            if o.j == a and o.k not in s:
                s[o.k] = s[a] / T
                frontier.append(o.k)
            elif o.k == a and o.j not in s:
                s[o.j] = s[a] * T
                frontier.append(o.j)
    c = cocycle.scaled()
    total = 0j
    for oid, d in cov.cycle_path():
        o = cov.overlap(oid)
        val = complex(c[oid].coefficient(0)) / s[o.j]
        total += val if d > 0 else -val
    return total


# ---------------------------------------------------------------------------
# Upgrade step
# ---------------------------------------------------------------------------


def _pow_factor(F_jet: WJet, w: WJet, n: int, sign: int) -> WJet:
    """``(1 + sign * F w^n)^(-1/n)``."""
    base = F_jet * w.ipow(n) * sign + 1
    return base.power(Fraction(-1, n))


def upgrade(osys: OrderNSystem, F: Cochain, prune: float = 1e-15) -> OrderNSystem:
    """Apply ``v_j = w_j (1 - F_j w_j^n)^(-1/n)`` on every chart.

    Node charts use ``y~ = y (1 - F(x, y) (x y)^n)^(-1/n)`` with ``x~ = x``.
    The exact inverse ``w_j = v_j (1 + F_j v_j^n)^(-1/n)`` re-expresses every
    transition in the new coordinate of its expansion chart.
    """
    system = osys.system
    cov = system.covering
    n = osys.n
    M = system.order
    data = {}
    for oid, d in system.data.items():
        o = cov.overlap(oid)
        ann = o.annulus
        ident = WJet.identity(M, ann)
        fj = WJet.constant(F[o.j].with_annulus(ann), M, ann)
        w_of_v = ident * _pow_factor(fj, ident, n, +1)
        if d.is_node:
            x = d.x.compose(w_of_v)
            y = d.y.compose(w_of_v)
            fk = F[o.k].evaluate_jets(x, y)
            y_new = y * _pow_factor(fk, x * y, n, -1)
            data[oid] = OverlapData(x=x.prune(prune), y=y_new.prune(prune))
        else:
            wk = d.w.compose(w_of_v)
            fk = WJet.constant(F[o.k].substitute_monomial(o.scale, o.eps, ann), M, ann)
            data[oid] = OverlapData(w=(wk * _pow_factor(fk, wk, n, -1)).prune(prune))
    new = system.with_data(data)
    return OrderNSystem(new, n + 1, osys.history + (F,))


# ---------------------------------------------------------------------------
# Type computation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    n: int
    obstruction_norm: float
    cochain_norm: float
    residual: float
    solved: bool
    residue: Optional[complex] = None
    distance_quotient: Optional[float] = None

    def to_json(self) -> dict:
        out = {"n": self.n, "obstructionNorm": self.obstruction_norm, "cochainNorm": self.cochain_norm,
               "residual": self.residual, "solved": self.solved}
        if self.residue is not None:
            out["residue"] = [self.residue.real, self.residue.imag]
        if self.distance_quotient is not None:
            out["distanceQuotient"] = self.distance_quotient
        return out


@dataclass(frozen=True)
class TypeReport:
    kind: str  # "type" | "infinite_up_to"
    n: int
    obstruction_magnitude: float
    steps: Tuple[StepRecord, ...]
    final: Optional[OrderNSystem] = None

    def to_json(self) -> dict:
        out = {"type": self.n if self.kind == "type" else "infinite_up_to",
               "perOrder": [s.to_json() for s in self.steps]}
        if self.kind == "type":
            out["obstructionMagnitude"] = self.obstruction_magnitude
        else:
            out["infinite_up_to"] = self.n
        return out


def _bundle_distance(system: TransitionSystem, n: int) -> Optional[float]:
    try:
        L = FlatCocycle(system.covering, {oid: complex(t) ** (-n) for oid, t in system.t.items()})
        return distance(L)
    except Exception:
        return None


def compute_type(system: TransitionSystem, n_max: int = DEFAULT_NMAX, tol: float = DEFAULT_TOL,
                 order_tol: float = ORDER_TOL) -> TypeReport:
    """Iterate obstruction -> solve -> upgrade until an obstruction survives or ``n_max``."""
    osys = OrderNSystem(system, 1)
    steps: List[StepRecord] = []
    for n in range(1, n_max + 1):
        if n + 1 > system.order:
            raise UedaError(f"jets of order {system.order} cannot resolve order {n + 1}; raise the jet order")
        osys = OrderNSystem(osys.system, n, osys.history)
        cocycle = obstruction(osys, order_tol)
        sol = solve_coboundary(cocycle, osys.system, tol)
        res = None
        if expected_kernel(cocycle) and build_dual_graph(cocycle.covering.curve).is_cycle:
            res = residue_functional(cocycle)
        d = _bundle_distance(osys.system, n)
        quot = None
        if sol.solved and sol.cocycle_norm > 0 and d is not None:
            quot = d * sol.cochain_norm / sol.cocycle_norm
        steps.append(StepRecord(n, cocycle.norm(), sol.cochain_norm if sol.solved else math.nan,
                                sol.relative_residual, sol.solved, res, quot))
        if not sol.solved:
            return TypeReport("type", n, sol.residual, tuple(steps), osys)
        osys = upgrade(osys, sol.cochain)
    return TypeReport("infinite_up_to", n_max, 0.0, tuple(steps), osys)
