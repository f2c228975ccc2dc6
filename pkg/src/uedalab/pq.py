"""The linearizing functional equation ``w_j = u_j + sum F^j_nu u_j^nu`` as a verification path.

Given cochains ``F_2, ..., F_{n-1}`` (functions of ``z_j`` on smooth charts,
split functions ``C + G+(x) + G-(y)`` on node charts), the expansion of
``t_jk u_k`` in ``u_j`` has ``u^n`` coefficient ``F^j_n - t^{1-n} F^k_n + P_n - Q_n``
with ``P`` and ``Q`` the two truncated substitutions below; ``Q`` already carries
the factors ``t^{1-nu}``.  Solving ``F^j_n - t^{1-n} F^k_n = Q_n - P_n`` gives
the next cochain.  The bound ledger evaluates the majorant inequalities on
these quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import mpmath

from .curve_model import NODE, Covering
from .jets import LaurentPoly, OverlapData, TransitionSystem, WJet, branch_base, expand
from .majorant import MajorantSeries, majorant_a, weighted_square_coeffs
from .ueda import Cochain, ObstructionCocycle, UedaError, solve_coboundary

History = Mapping[int, Cochain]  # nu -> {chart id -> F^j_nu}


class HistoryError(UedaError):
    pass


def _check_history(history: History, n: int) -> None:
    missing = [nu for nu in range(2, n) if nu not in history]
    if missing:
        raise HistoryError(f"cochains F_{missing} missing for order {n}")


def _substitution(system: TransitionSystem, history: History, oid: str, n: int) -> WJet:
    """``S = u + sum_{2 <= lam <= n-1} F^j_lam(z_j) u^lam`` as a jet of order ``n``."""
    o = system.covering.overlap(oid)
    ann = o.annulus
    d_max = system.data[oid].target_w().d_max
    coeffs: List = [0, 1] + [0] * (n - 1)
    for lam in range(2, n):
        coeffs[lam] = history[lam][o.j].with_annulus(ann)
    return WJet.from_list(coeffs, n, ann, d_max)


def _target_f(system: TransitionSystem, history: History, oid: str, nu: int, order: int) -> WJet:
    """``F^k_nu`` on ``V_jk`` as a jet in ``(z_j, w_j)``."""
    o = system.covering.overlap(oid)
    d = system.data[oid]
    F = history[nu][o.k]
    if d.is_node:
        return F.evaluate_jets(d.x.truncate(order), d.y.truncate(order))
    return WJet.constant(F.substitute_monomial(o.scale, o.eps, o.annulus), order, o.annulus, d.w.d_max)


def pq_coefficients(system: TransitionSystem, history: History, oid: str, n: int
                    ) -> Tuple[Dict[int, LaurentPoly], Dict[int, LaurentPoly]]:
    """``(P_nu, Q_nu)`` for ``nu = 2..n`` on one overlap."""
    if n < 2:
        raise UedaError("P and Q start at order 2")
    if n > system.order:
        raise UedaError(f"order {n} beyond stored truncation {system.order}")
    _check_history(history, n)
    S = _substitution(system, history, oid, n)
    f = expand(system, oid, n)
    ann = system.covering.overlap(oid).annulus
    P = WJet.constant(0, n, ann, S.d_max)
    S_pow = S * S
    for nu in range(2, n + 1):
        P = P + S_pow * f[nu].with_annulus(ann)
        S_pow = S_pow * S
    Q = WJet.constant(0, n, ann, S.d_max)
    if system.data[oid].is_node:
        t = complex(system.t[oid])
        for nu in range(2, n):
            g = _target_f(system, history, oid, nu, n)
            g = WJet((g._zero_coeff(),) + g.coeffs[1:])  # drop F^k_nu restricted to the curve
            Q = Q + g.compose(S).shift(nu) * t ** (1 - nu)
    return ({nu: P[nu] for nu in range(2, n + 1)}, {nu: Q[nu] for nu in range(2, n + 1)})


def pq_cocycle(system: TransitionSystem, history: History, n: int) -> Dict[str, LaurentPoly]:
    """``P_n - Q_n`` per overlap: the leading defect of the ``u``-system of order ``n - 1``."""
    out = {}
    for oid in system.data:
        P, Q = pq_coefficients(system, history, oid, n)
        out[oid] = P[n] - Q[n]
    return out


# ---------------------------------------------------------------------------
# Direct path: re-expansion of the u-system
# ---------------------------------------------------------------------------


def _phi(coeffs: Mapping[int, LaurentPoly], order: int, ann, d_max: int) -> WJet:
    items: List = [0, 1] + [0] * (order - 1)
    for lam, c in coeffs.items():
        if lam <= order:
            items[lam] = c.with_annulus(ann)
    return WJet.from_list(items, order, ann, d_max)


def u_system(system: TransitionSystem, history: History, order: Optional[int] = None) -> TransitionSystem:
    """Gluing data of the coordinates ``u`` solving the functional equation, in ``(z_j, u_j)``.

    Smooth charts invert ``w = u + sum F_lam u^lam``.  Node charts keep ``x`` and
    solve ``y = y~ + sum F_lam(x, y) x^(lam-1) y~^lam`` for ``y~`` by fixed point.
    """
    cov = system.covering
    M = system.order if order is None else order
    lams = sorted(history)
    data = {}
    for oid, d in system.data.items():
        o = cov.overlap(oid)
        ann = o.annulus
        dm = d.target_w().d_max
        phi_j = _phi({lam: history[lam][o.j] for lam in lams}, M, ann, dm)
        if d.is_node:
            X, Y = d.x.truncate(M), d.y.truncate(M)
            terms = [(lam, history[lam][o.k].evaluate_jets(X, Y) * X.ipow(lam - 1)) for lam in lams]
            yt = Y
            for _ in range(M + 1):
                nxt = Y
                for lam, coef in terms:
                    nxt = nxt - coef * yt.ipow(lam)
                yt = nxt
            data[oid] = OverlapData(x=X.compose(phi_j), y=yt.compose(phi_j))
        else:
            phi_k = _phi({lam: history[lam][o.k].substitute_monomial(o.scale, o.eps) for lam in lams}, M, ann, dm)
            u_k = phi_k.inverse().compose(d.w.truncate(M))
            data[oid] = OverlapData(w=u_k.compose(phi_j))
    return TransitionSystem(cov, M, data, dict(system.t))


def defect_residual(system: TransitionSystem, history: History, n: int) -> float:
    """Largest coefficient of ``u^m``, ``2 <= m <= n``, in ``t u_k - u_j`` (Property at order ``n``)."""
    us = u_system(system, history, n)
    worst = 0.0
    for oid in us.data:
        e = expand(us, oid, n)
        worst = max([worst] + [e[m].max_abs() for m in range(2, n + 1)])
    return worst


def solve_next(system: TransitionSystem, history: History, n: int, tol: float = 1e-8) -> Optional[Cochain]:
    """``F_n`` with ``F^j_n - t^{1-n} F^k_n = Q_n - P_n``, or ``None`` when the class survives."""
    c = pq_cocycle(system, history, n)
    values = {oid: v * (-1.0 / (n - 1)) for oid, v in c.items()}
    cocycle = ObstructionCocycle(system.covering, n - 1, values, dict(system.t))
    sol = solve_coboundary(cocycle, system, tol)
    return sol.cochain


def functional_history(system: TransitionSystem, n_max: int, tol: float = 1e-8) -> Tuple[Dict[int, Cochain], int]:
    """Build ``F_2 .. F_{n}`` until a class survives; returns the history and the last order reached."""
    hist: Dict[int, Cochain] = {}
    for n in range(2, n_max + 1):
        F = solve_next(system, hist, n, tol)
        if F is None:
            return hist, n - 1
        hist[n] = F
    return hist, n_max


# ---------------------------------------------------------------------------
# Bound ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundLedger:
    M1: float
    R: float
    C0: float
    M5: float = 0.0
    K: Optional[float] = None
    K1: Optional[float] = None
    eps: Tuple[float, ...] = ()

    @property
    def M2(self) -> float:
        return 18 * self.R * (1 + self.M1 * self.R)

    @property
    def M3(self) -> float:
        return 12 * self.R * (1 + self.C0 + 6 * self.R * self.M1)

    def to_json(self) -> dict:
        out = {"M1": self.M1, "R": self.R, "C0": self.C0, "M2": self.M2, "M3": self.M3, "M5": self.M5}
        if self.K is not None:
            out["K"] = self.K
        if self.K1 is not None:
            out["K1"] = self.K1
        if self.eps:
            out["eps"] = list(self.eps)
        return out


def fit_m1_r(system: TransitionSystem, order: Optional[int] = None) -> Tuple[float, float]:
    """``(M1, R)`` with ``sup |f_nu|, sup |f_nu'| <= M1 R^nu`` on every overlap, ``nu <= order``."""
    order = system.order if order is None else order
    s = {}
    for oid in system.data:
        ann = system.covering.overlap(oid).annulus
        for nu, f in expand(system, oid, order).items():
            s[nu] = max(s.get(nu, 0.0), f.sup_norm(ann), f.derivative().sup_norm(ann))
    R = max([1.0] + [v ** (1.0 / nu) for nu, v in s.items() if v > 0])
    M1 = max([1.0] + [v / R ** nu for nu, v in s.items()])
    return M1, R


def chart_derivative_bound(system: TransitionSystem) -> float:
    """``C0``: sup of ``|d z_k / d z_j|`` (node branches: the branch coordinate) over overlap annuli."""
    worst = 0.0
    for oid in system.data:
        o = system.covering.overlap(oid)
        c, eps = branch_base(system, oid)
        r_in, r_out = o.annulus
        worst = max(worst, abs(c) if eps == 1 else abs(c) / r_in ** 2)
    return worst


def build_ledger(system: TransitionSystem, order: Optional[int] = None, M5: float = 0.0,
                 K: Optional[float] = None, K1: Optional[float] = None) -> BoundLedger:
    M1, R = fit_m1_r(system, order)
    return BoundLedger(M1, R, chart_derivative_bound(system), M5, K, K1)


def _cochain_sizes(cov: Covering, F: Cochain) -> Tuple[float, float]:
    """``(max |C^j|, max sup |dG/dz|)`` with ``C^j`` the value at the chart centre."""
    consts, derivs = 0.0, 0.0
    for ch in cov.charts:
        f = F[ch.id]
        if ch.kind == NODE:
            consts = max(consts, abs(f.constant))
            r = ch.radius[1]
            for b in ("x", "y"):
                derivs = max(derivs, f.branch(b).derivative().sup_norm((0.0, r)))
        else:
            # the centre sits at z = 0 on disks and at the band's inner edge otherwise
            r_in, r_out = ch.radius
            consts = max(consts, abs(f(r_in)) if r_in > 0 else abs(f.coefficient(0)))
            derivs = max(derivs, f.derivative().sup_norm(ch.radius))
    return consts, derivs


def hypothesis_series(cov: Covering, history: History, n: int, start: float = 1.0,
                      limit: float = 1e6) -> Optional[MajorantSeries]:
    """Smallest ``A`` (``M0 = R0 = 2^k * start``) with ``|C_nu|, |dF_nu/dz| <= A_nu`` for ``nu < n``."""
    sizes = {nu: _cochain_sizes(cov, history[nu]) for nu in range(2, n)}
    m = start
    while m <= limit:
        A = majorant_a(m, m, n)
        if all(max(sizes[nu]) <= float(A[nu]) for nu in sizes):
            return A
        m *= 2
    return None


@dataclass(frozen=True)
class LemmaCheck:
    n: int
    lhs: float
    rhs: float
    hypothesis: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def to_json(self) -> dict:
        return {"n": self.n, "lhs": self.lhs, "rhs": self.rhs, "hypothesis": self.hypothesis, "holds": self.holds}


def lemma_checks(system: TransitionSystem, history: History, n: int, ledger: BoundLedger,
                 A: Optional[MajorantSeries] = None) -> Tuple[LemmaCheck, LemmaCheck]:
    """Evaluate ``sup |P_n - Q_n|`` and ``sup |d/dz (P_n - Q_n)|`` against ``M2, M3`` coefficients."""
    hyp = A is not None
    if A is None:
        A = hypothesis_series(system.covering, history, n)
        hyp = A is not None
        if A is None:
            A = majorant_a(1.0, 1.0, n)
    c = pq_cocycle(system, history, n)
    val = deriv = 0.0
    for oid, v in c.items():
        ann = system.covering.overlap(oid).annulus
        val = max(val, v.sup_norm(ann))
        deriv = max(deriv, v.derivative().sup_norm(ann))
    b = weighted_square_coeffs(A, 6 * ledger.R)
    with mpmath.workdps(30):
        rhs2 = float(ledger.M2 * b[n - 1])
        rhs3 = float(ledger.M3 * b[n - 1])
    return LemmaCheck(n, val, rhs2, hyp), LemmaCheck(n, deriv, rhs3, hyp)
