"""Model exhaustion functions near the curve and their complex Hessians.

Two families live here, both on explicit model neighbourhoods:

* :class:`FiniteTypeModel` -- ``s = |w^-n - conj(g)|^2 + ...`` on one chart
  (smooth ``(w, z)`` or node ``(x, y)`` seen in ``(w, z) = (x y, y)``), and
  ``phi_lambda = s^(lam/2)`` plus the positive/negative cutoff correction near
  the node.
* :class:`CycleModel` -- a cycle of ``N`` rational curves whose normal bundle
  has real holonomy ``alpha != 1``; ``phi = (log|w|)^2 + ...`` chart by chart,
  glued with a bump partition of unity.

Hessians (``H[a][b] = d_a dbar_b f``) come from two independent routes: exact
forward-mode Wirtinger jets (:class:`WirtingerJet`) and real-coordinate central
differences (:func:`hessian_numeric`), optionally in multiprecision.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np

from .jets import LaurentPoly, SplitFunction

EIG_RTOL = 1e-10
HERMITIAN_TOL = 1e-8
EPS_LADDER = (1e-1, 1e-2, 1e-3, 1e-4)
SIGN_CLASSES = ("posDef", "indefinite", "negSemi", "degenerate")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class PshError(ValueError):
    pass


class OnCurve(PshError):
    """A point (or a stencil point) lies on ``w = 0``."""


class NotInChart(PshError):
    pass


# ---------------------------------------------------------------------------
# Wirtinger jets
# ---------------------------------------------------------------------------


class WirtingerJet:
    """Value, ``d_a``, ``dbar_a`` and ``d_a dbar_b`` of a function of ``(zeta_1, zeta_2)``.

    Components may be scalars or broadcastable numpy arrays.
    """

    __slots__ = ("v", "d", "db", "m")

    def __init__(self, v, d=(0, 0), db=(0, 0), m=((0, 0), (0, 0))):
        self.v = v
        self.d = tuple(d)
        self.db = tuple(db)
        self.m = tuple(tuple(r) for r in m)

    @classmethod
    def seeds(cls, z1, z2) -> Tuple["WirtingerJet", "WirtingerJet"]:
        return cls(z1, (1, 0)), cls(z2, (0, 1))

    def _coerce(self, other) -> "WirtingerJet":
        return other if isinstance(other, WirtingerJet) else WirtingerJet(other)

    def __add__(self, other):
        o = self._coerce(other)
        return WirtingerJet(self.v + o.v, [a + b for a, b in zip(self.d, o.d)],
                            [a + b for a, b in zip(self.db, o.db)],
                            [[self.m[i][j] + o.m[i][j] for j in range(2)] for i in range(2)])

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-1) * self._coerce(other)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, WirtingerJet):
            return WirtingerJet(self.v * other, [a * other for a in self.d], [a * other for a in self.db],
                                [[self.m[i][j] * other for j in range(2)] for i in range(2)])
        u, w = self, other
        return WirtingerJet(
            u.v * w.v,
            [u.d[a] * w.v + u.v * w.d[a] for a in range(2)],
            [u.db[a] * w.v + u.v * w.db[a] for a in range(2)],
            [[u.m[a][b] * w.v + u.d[a] * w.db[b] + u.db[b] * w.d[a] + u.v * w.m[a][b] for b in range(2)]
             for a in range(2)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, WirtingerJet):
            return self * (1 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def apply(self, h0, h1, h2) -> "WirtingerJet":
        """``h(self)`` for a holomorphic (or real-analytic on reals) ``h`` with given ``h, h', h''``."""
        return WirtingerJet(
            h0, [h1 * a for a in self.d], [h1 * a for a in self.db],
            [[h1 * self.m[a][b] + h2 * self.d[a] * self.db[b] for b in range(2)] for a in range(2)])

    def reciprocal(self):
        v = self.v
        return self.apply(1 / v, -1 / v ** 2, 2 / v ** 3)

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)):
            p = int(p)
            if p == 0:
                return WirtingerJet(self.v * 0 + 1)
            if p == 1:
                return self
        v = self.v
        return self.apply(v ** p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def conj(self):
        return WirtingerJet(np.conj(self.v), [np.conj(a) for a in self.db], [np.conj(a) for a in self.d],
                            [[np.conj(self.m[b][a]) for b in range(2)] for a in range(2)])

    def log(self):
        v = self.v
        return self.apply(np.log(v), 1 / v, -1 / v ** 2)

    def exp(self):
        e = np.exp(self.v)
        return self.apply(e, e, e)

    def real(self):
        return (self + self.conj()) * 0.5

    def hessian(self) -> np.ndarray:
        """``H[..., a, b] = d_a dbar_b``, broadcast over the sample shape."""
        shape = np.shape(self.v)
        out = np.zeros(shape + (2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                out[..., a, b] = self.m[a][b]
        return out


def _is_mp(x) -> bool:
    return isinstance(x, (mpmath.mpf, mpmath.mpc))


def conj(x):
    if isinstance(x, WirtingerJet):
        return x.conj()
    if _is_mp(x):
        return mpmath.conj(x)
    return np.conj(x)


def log(x):
    if isinstance(x, WirtingerJet):
        return x.log()
    if _is_mp(x):
        return mpmath.log(x)
    return np.log(x)


def exp(x):
    if isinstance(x, WirtingerJet):
        return x.exp()
    if _is_mp(x):
        return mpmath.exp(x)
    return np.exp(x)


def abs2(x):
    return x * conj(x)


def log_abs(x):
    return 0.5 * log(abs2(x))


def real_part(x):
    if isinstance(x, WirtingerJet):
        return x.real()
    if _is_mp(x):
        return mpmath.re(x)
    return np.real(x)


def value(x):
    """Plain complex value(s) of a jet, mpmath number or array."""
    if isinstance(x, WirtingerJet):
        x = x.v
    if _is_mp(x):
        return complex(x)
    return np.asarray(x, dtype=complex)


def select(mask, a, b):
    """Pointwise ``a if mask else b`` for scalars, arrays and jets."""
    if isinstance(mask, (bool, np.bool_)) or np.ndim(mask) == 0:
        return a if bool(mask) else b
    if isinstance(a, WirtingerJet) or isinstance(b, WirtingerJet):
        a = a if isinstance(a, WirtingerJet) else WirtingerJet(a)
        b = b if isinstance(b, WirtingerJet) else WirtingerJet(b)
        return WirtingerJet(np.where(mask, a.v, b.v), [np.where(mask, x, y) for x, y in zip(a.d, b.d)],
                            [np.where(mask, x, y) for x, y in zip(a.db, b.db)],
                            [[np.where(mask, a.m[i][j], b.m[i][j]) for j in range(2)] for i in range(2)])
    return np.where(mask, a, b)


def poly_eval(terms: Mapping[int, complex], x):
    """``sum c_e x^e`` for any of the supported number types."""
    out = 0
    for e, c in sorted(terms.items()):
        if c != 0:
            out = out + (x ** e) * c if e else out + c
    return out


def hessian_ad(f: Callable, w, z) -> np.ndarray:
    """Exact complex Hessian of ``f(w, z)`` via Wirtinger jets."""
    W, Z = WirtingerJet.seeds(np.asarray(w, dtype=complex), np.asarray(z, dtype=complex))
    with np.errstate(all="ignore"):
        return f(W, Z).hessian()


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NumericHessian:
    matrix: np.ndarray       # symmetrized, shape (..., 2, 2)
    asymmetry: np.ndarray    # max |H - H^*| before symmetrization

    def hermitian_ok(self, tol: float = HERMITIAN_TOL) -> bool:
        scale = np.maximum(np.abs(self.matrix).max(axis=(-2, -1)), 1e-300)
        return bool(np.all(self.asymmetry <= tol * scale))


def _fd_scalar(f: Callable, p: Sequence, h: Sequence, dps: int) -> np.ndarray:
    with mpmath.workdps(dps):
        base = [mpmath.mpc(v) for v in p]
        steps = [mpmath.mpf(s) for s in h]
        dirs = [(0, 1), (0, 1j), (1, 1), (1, 1j)]  # u_1, v_1, u_2, v_2

        def ev(shifts):
            q = list(base)
            for k, sgn in shifts:
                a, unit = dirs[k]
                q[a] = q[a] + sgn * steps[a] * mpmath.mpc(unit)
            if any(q[0] == 0 for _ in (0,)):
                raise OnCurve("stencil touches w = 0")
            return mpmath.re(f(q[0], q[1]))

        f0 = ev([])
        D = [[mpmath.mpf(0)] * 4 for _ in range(4)]
        for i in range(4):
            si = steps[dirs[i][0]]
            D[i][i] = (ev([(i, 1)]) - 2 * f0 + ev([(i, -1)])) / si ** 2
            for j in range(i + 1, 4):
                sj = steps[dirs[j][0]]
                D[i][j] = D[j][i] = (ev([(i, 1), (j, 1)]) - ev([(i, 1), (j, -1)]) - ev([(i, -1), (j, 1)])
                                     + ev([(i, -1), (j, -1)])) / (4 * si * sj)
        H = np.zeros((2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                ua, va, ub, vb = 2 * a, 2 * a + 1, 2 * b, 2 * b + 1
                H[a, b] = complex((D[ua][ub] + D[va][vb]) / 4, (D[ua][vb] - D[va][ub]) / 4)
        return H


def _fd_array(f: Callable, w: np.ndarray, z: np.ndarray, h: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    dirs = [(0, 1.0), (0, 1j), (1, 1.0), (1, 1j)]
    steps = [np.asarray(h[0], dtype=float), np.asarray(h[1], dtype=float)]

    def ev(shifts):
        q = [w.astype(complex), z.astype(complex)]
        for k, sgn in shifts:
            a, unit = dirs[k]
            q[a] = q[a] + sgn * steps[a] * unit
        if np.any(q[0] == 0):
            raise OnCurve("stencil touches w = 0")
        return np.real(f(q[0], q[1]))

    f0 = ev([])
    D = [[None] * 4 for _ in range(4)]
    for i in range(4):
        si = steps[dirs[i][0]]
        D[i][i] = (ev([(i, 1)]) - 2 * f0 + ev([(i, -1)])) / si ** 2
        for j in range(i + 1, 4):
            sj = steps[dirs[j][0]]
            D[i][j] = D[j][i] = (ev([(i, 1), (j, 1)]) - ev([(i, 1), (j, -1)]) - ev([(i, -1), (j, 1)])
                                 + ev([(i, -1), (j, -1)])) / (4 * si * sj)
    H = np.zeros(np.shape(f0) + (2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            ua, va, ub, vb = 2 * a, 2 * a + 1, 2 * b, 2 * b + 1
            H[..., a, b] = (D[ua][ub] + D[va][vb]) / 4 + 1j * (D[ua][vb] - D[va][ub]) / 4
    return H


def hessian_numeric(f: Callable, w, z, h: Union[float, Tuple[float, float]] = 1e-4,
                    relative: bool = False, dps: Optional[int] = None) -> NumericHessian:
    """Central-difference complex Hessian ``d_a dbar_b f`` of a real function ``f(w, z)``.

    ``h`` is one step or a ``(h_w, h_z)`` pair; with ``relative`` the steps are
    multiplied by ``|w|`` and ``|z|``.  With ``dps`` each point is evaluated
    in mpmath at that precision (``f`` must then accept mpmath numbers).
    """
    w_arr = np.asarray(w, dtype=complex)
    z_arr = np.asarray(z, dtype=complex)
    if np.any(w_arr == 0):
        raise OnCurve("point on w = 0")
    hw, hz = (h, h) if np.ndim(h) == 0 else h
    if relative:
        hw = hw * np.abs(w_arr)
        hz = hz * np.where(np.abs(z_arr) > 0, np.abs(z_arr), 1.0)
    hw = np.broadcast_to(hw, w_arr.shape)
    hz = np.broadcast_to(hz, w_arr.shape)
    if np.any(hw >= np.abs(w_arr)):
        raise OnCurve("step reaches w = 0")
    if dps is None:
        with np.errstate(all="ignore"):
            H = _fd_array(f, w_arr, z_arr, (hw, hz))
    else:
        H = np.zeros(w_arr.shape + (2, 2), dtype=complex)
        for idx in np.ndindex(w_arr.shape):
            H[idx] = _fd_scalar(f, (w_arr[idx], z_arr[idx]), (hw[idx], hz[idx]), dps)
    Hs = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    asym = np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max(axis=(-2, -1))
    return NumericHessian(Hs, asym)


def fd_convergence(f: Callable, exact: np.ndarray, w, z, steps: Sequence[float] = (1e-3, 1e-4, 1e-5),
                   dps: int = 50) -> Dict[str, object]:
    """Errors of :func:`hessian_numeric` against ``exact`` and the log-log slope in ``h``."""
    errs = []
    for h in steps:
        H = hessian_numeric(f, w, z, h, dps=dps).matrix
        errs.append(float(np.abs(H - exact).max()))
    lh, le = np.log10(np.asarray(steps)), np.log10(np.asarray(errs))
    slope = float(np.polyfit(lh, le, 1)[0])
    return {"steps": list(steps), "errors": errs, "slope": slope}


# ---------------------------------------------------------------------------
# Sign classification
# ---------------------------------------------------------------------------


def hermitian_eigs(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of 2x2 Hermitian matrices, shape (..., 2)."""
    a = H[..., 0, 0].real
    d = H[..., 1, 1].real
    b = H[..., 0, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)
    return np.stack([mid - rad, mid + rad], axis=-1)


def jacobi_scaled(H: np.ndarray) -> np.ndarray:
    """``D H D`` with ``D = diag(|H_ii|^-1/2)``; preserves inertia, equalizes scales."""
    diag = np.abs(np.stack([H[..., 0, 0].real, H[..., 1, 1].real], axis=-1))
    dinv = np.where(diag > 0, 1 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
    return H * dinv[..., :, None] * dinv[..., None, :]


def sign_class(H: np.ndarray, rtol: float = EIG_RTOL) -> np.ndarray:
    """One of :data:`SIGN_CLASSES` per matrix, from Jacobi-scaled eigenvalues."""
    ev = hermitian_eigs(jacobi_scaled(H))
    thr = rtol * np.maximum(np.abs(ev).max(axis=-1), 1e-300)
    lo, hi = ev[..., 0], ev[..., 1]
    out = np.full(lo.shape, "degenerate", dtype=object)
    out[(lo > thr)] = "posDef"
    out[(hi > thr) & (lo < -thr)] = "indefinite"
    out[(hi <= thr) & (lo < -thr)] = "negSemi"
    return out


def sign_margin(H: np.ndarray, target: str) -> np.ndarray:
    """Scaled distance from losing ``target`` (positive when the class holds)."""
    ev = hermitian_eigs(jacobi_scaled(H))
    if target == "posDef":
        return ev[..., 0]
    return np.minimum(ev[..., 1], -ev[..., 0])


@dataclass(frozen=True)
class HessianSample:
    point: Tuple[complex, complex]
    numeric: np.ndarray
    analytic: Optional[np.ndarray]
    eigenvalues: Tuple[float, float]
    sign_class: str

    def to_json(self) -> dict:
        def mat(m):
            return None if m is None else [[[float(m[i, j].real), float(m[i, j].imag)] for j in range(2)]
                                           for i in range(2)]
        return {"point": [[self.point[0].real, self.point[0].imag], [self.point[1].real, self.point[1].imag]],
                "numeric": mat(self.numeric), "analytic": mat(self.analytic),
                "eigenvalues": list(self.eigenvalues), "signClass": self.sign_class}


def sample(f: Callable, w: complex, z: complex, analytic: Optional[np.ndarray] = None,
           h: Union[float, Tuple[float, float]] = 1e-4, relative: bool = True,
           dps: Optional[int] = None) -> HessianSample:
    nh = hessian_numeric(f, w, z, h, relative, dps)
    if not nh.hermitian_ok():
        raise PshError("numeric Hessian is not Hermitian")
    H = nh.matrix
    ev = hermitian_eigs(H)
    return HessianSample((complex(w), complex(z)), H, analytic, (float(ev[0]), float(ev[1])),
                         str(sign_class(H[None])[0]))


# ---------------------------------------------------------------------------
# Smooth cutoffs
# ---------------------------------------------------------------------------


def bump(t):
    """``exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero outside; ``t`` real-valued of any supported type."""
    tv = np.real(value(t))
    inside = np.abs(tv) < 1
    safe = select(inside, t, 0 * t)
    val = exp(1 - 1 / (1 - safe * safe))
    return select(inside, val, 0 * t)


def _step_e(t):
    tv = np.real(value(t))
    pos = tv > 0
    safe = select(pos, t, 0 * t + 1)
    return select(pos, exp(-1 / safe), 0 * t)


def plateau(r2, delta: float):
    """Smooth cutoff of ``r2``: 1 for ``r2 <= delta``, 0 for ``r2 >= 2 delta``."""
    t = r2 * (1 / delta) - 1  # 0..1 across the collar
    a, b = _step_e(1 - t), _step_e(t)
    tv = np.real(value(t))
    collar = (tv > 0) & (tv < 1)
    denom = select(collar, a + b, 0 * t + 1)
    val = a / denom
    inner = tv <= 0
    return select(collar, val, select(inner, 0 * t + 1, 0 * t))


# ---------------------------------------------------------------------------
# Finite-type model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteTypeModel:
    """``s = |w|^-2n - w^-n g - conj(w^-n g) - ... + |g|^2`` on one chart.

    ``chart`` is ``"smooth"`` (``g`` a :class:`LaurentPoly` in ``z``) or ``"node"``
    (``g = g_1(x) + g_2(y)`` a :class:`SplitFunction`, evaluated with
    ``x = w / z``, ``y = z``).  ``phi[(a, b)]`` are constant pluriharmonic
    corrections of ``w^a conj(w)^b``.  ``perturbation(w, z)`` models the real
    remainder multiplying ``|w|``; it defaults to zero.
    """

    n: int
    g: Union[LaurentPoly, SplitFunction]
    chart: str = "node"
    phi: Mapping[Tuple[int, int], complex] = field(default_factory=dict)
    perturbation: Optional[Callable] = None
    delta: float = 0.05
    radius: float = 0.6
    band: Tuple[float, float] = (0.5, 2.0)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise PshError("type must be positive")
        if self.chart not in ("node", "smooth"):
            raise PshError(f"unknown chart kind {self.chart!r}")
        for (a, b) in self.phi:
            if a < 0 or b < 0 or not 1 <= a + b <= self.n:
                raise PshError(f"correction index {(a, b)} outside 1 <= a + b <= n")
        if self.chart == "smooth":
            if not isinstance(self.g, LaurentPoly):
                raise PshError("smooth chart needs a Laurent polynomial g(z)")
            if self.g.derivative().is_zero():
                raise PshError("dg vanishes identically")
        else:
            if not isinstance(self.g, SplitFunction):
                raise PshError("node chart needs a split function g_1(x) + g_2(y)")
            for which in ("x", "y"):
                dg = self.g.branch(which).derivative()
                if dg.is_zero():
                    raise PshError(f"dg vanishes identically on the {which}-branch")
                if any(abs(r) < self.radius for r in _poly_roots(dg) if abs(r) > 1e-12):
                    raise PshError(f"dg_{which} has a zero off {which} = 0 inside the chart")

    def coords(self, w, z):
        """``(x, y)`` on node charts; ``(w, z)`` otherwise."""
        return (w / z, z) if self.chart == "node" else (w, z)

    def g_value(self, w, z):
        if self.chart == "node":
            x, y = w / z, z
            g1 = self.g.branch("x").as_dict()
            g2 = self.g.branch("y").as_dict()
            g2.pop(0, None)
            return poly_eval(g1, x) + poly_eval(g2, y)
        return poly_eval(self.g.as_dict(), z)

    def g_z(self, w: complex, z: complex) -> complex:
        """``dg/dz`` at fixed ``w``; on node charts ``(-x g_1' + y g_2') / y``."""
        if self.chart == "node":
            x, y = w / z, z
            d1 = self.g.branch("x").derivative()(x)
            d2 = self.g.branch("y").derivative()(y)
            return (-x * d1 + y * d2) / y
        return self.g.derivative()(z)

    def in_chart(self, w, z) -> np.ndarray:
        w, z = np.asarray(value(w)), np.asarray(value(z))
        if self.chart == "node":
            x = w / np.where(z == 0, np.inf, z)
            return (np.abs(x) < self.radius) & (np.abs(z) < self.radius) & (z != 0)
        return (np.abs(z) > self.band[0]) & (np.abs(z) < self.band[1])


def _poly_roots(p: LaurentPoly) -> np.ndarray:
    d = p.as_dict()
    if not d:
        return np.array([])
    lo = min(d)
    hi = max(d)
    coeffs = [d.get(e, 0) for e in range(hi, lo - 1, -1)]
    return np.roots(coeffs) if len(coeffs) > 1 else np.array([])


def eval_s(model: FiniteTypeModel, w, z):
    """The model function ``s`` (real-valued; complex dtype for jets and mpmath)."""
    if np.any(value(w) == 0):
        raise OnCurve("s is undefined on w = 0")
    n = model.n
    g = model.g_value(w, z)
    wn = w ** (-n)
    wbn = conj(wn)
    out = wn * wbn - wn * g - wbn * conj(g) + g * conj(g)
    if model.phi:
        wb = conj(w)
        corr = 0
        for (a, b), c in sorted(model.phi.items()):
            corr = corr + (w ** a) * (wb ** b) * c
        out = out - wn * conj(corr) - wbn * corr
    if model.perturbation is not None:
        out = out + (abs2(w) ** 0.5) * model.perturbation(w, z)
    return out


def cutoff_term(model: FiniteTypeModel, lam: float, w, z):
    """``rho(x, y) (|z|^2 + |w|^2/|z|^2) |w|^{-(lam-2) n}`` on node charts, zero on smooth ones."""
    if model.chart != "node":
        return 0 * w
    x, y = w / z, z
    r2 = abs2(x) + abs2(y)
    rho = plateau(real_part(r2), model.delta)
    return rho * r2 * (abs2(w) ** (-(lam - 2) * model.n / 2))


def phi_lambda_finite(model: FiniteTypeModel, lam: float, eps: float = 0.0) -> Callable:
    """``s^(lam/2) +- eps * cutoff`` (sign ``+`` for ``lam > 1``, ``-`` for ``lam < 1``)."""
    if lam <= 0:
        raise PshError("lambda must be positive")
    sgn = 1.0 if lam > 1 else -1.0

    def f(w, z):
        out = eval_s(model, w, z) ** (lam / 2)
        if eps:
            out = out + cutoff_term(model, lam, w, z) * (sgn * eps)
        return out

    return f


def hessian_analytic_finite_type(model: FiniteTypeModel, w: complex, z: complex, lam: float
                                 ) -> Tuple[np.ndarray, float]:
    """Leading-order ``H_lambda`` of ``s^(lam/2)`` in ``(w, z)`` and its leading determinant."""
    if z == 0:
        raise PshError("degenerate coordinates z = 0")
    if w == 0:
        raise OnCurve("w = 0")
    n = model.n
    gz = complex(model.g_z(w, z))
    aw = abs(w)
    pre = lam / 2 * aw ** (-(lam - 2) * n)
    off = (lam / 2 - 1) * n * w ** -1 * np.conj(w) ** -n * np.conj(gz)
    H = pre * np.array([[lam / 2 * n * n * aw ** (-2 * n - 2), off],
                        [np.conj(off), lam / 2 * abs(gz) ** 2]], dtype=complex)
    det = (lam - 1) * lam ** 2 * n ** 2 / 4 * abs(gz) ** 2 * aw ** (-2 * (lam * n - n + 1))
    return H, float(det)


def property1_ratio(model: FiniteTypeModel, lam: float, w, z):
    """``s^(lam/2) d^(lam n)`` with ``d = |w|`` as the chart distance to the curve."""
    s = np.real(value(eval_s(model, np.asarray(w, dtype=complex), np.asarray(z, dtype=complex))))
    return s ** (lam / 2) * np.abs(w) ** (lam * model.n)


# ---------------------------------------------------------------------------
# Cycle model
# ---------------------------------------------------------------------------


def normalize_node_constants(q_nodes: Sequence[complex]) -> Tuple[complex, List[complex]]:
    """``q`` with ``q^N = prod q_nu`` and rescalings ``a_nu`` making every node constant ``q``.

    ``a_1 = 1``, ``a_nu = q_nu a_{nu-1} / q``; the new constants are ``q_nu a_{nu-1} / a_nu``
    (with ``a_0 = a_N``).
    """
    N = len(q_nodes)
    if N == 0 or any(q == 0 for q in q_nodes):
        raise PshError("node constants must be nonzero")
    prod = complex(np.prod(np.asarray(q_nodes, dtype=complex)))
    q = prod ** (1.0 / N)
    a = [1.0 + 0j]
    for nu in range(1, N):
        a.append(q_nodes[nu] * a[-1] / q)
    return q, a


def renormalized_constants(q_nodes: Sequence[complex]) -> List[complex]:
    q, a = normalize_node_constants(q_nodes)
    N = len(q_nodes)
    return [q_nodes[nu] * a[nu - 1] / a[nu] for nu in range(N)]  # a[-1] = a_N as a_0


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    w: object
    z: object


@dataclass(frozen=True)
class CycleModel:
    """Cycle of ``N`` lines ``C_nu`` (coordinate ``zeta``, node ``p_nu`` at 0, ``p_{nu+1}`` at infinity).

    Charts: ``S<nu>`` with ``(w, zeta)``, ``band[0] < |zeta| < band[1]``, and the node
    chart ``K<nu>`` with ``(x, y)``, ``w = x y``, ``|x|, |y| < node_radius``; all
    restricted to ``|w| < w_max``.  Gluing (gauge ``q = 1``): on ``S_nu & K_nu``
    ``x = zeta (1 + c w)``, ``w_S = w_K``; on ``S_nu & K_{nu+1}`` ``y = 1/zeta``,
    ``w_S = t w_K`` with ``t = alpha`` across ``S_N & K_1`` and ``1`` elsewhere.
    ``f = u_nu zeta`` on ``S_nu`` with unit constants ``u_nu``.
    Optional ``critical_points`` ``(nu, zeta_0)`` get a local cutoff correction.
    """

    N: int
    alpha: float
    units: Tuple[complex, ...] = ()
    c: float = 0.0
    node_radius: float = 0.6
    band: Tuple[float, float] = (0.3, 3.0)
    w_max: float = 0.05
    critical_points: Tuple[Tuple[int, complex], ...] = ()
    chi_radius: float = 0.1

    def __post_init__(self) -> None:
        if self.N < 1:
            raise PshError("need at least one component")
        if not self.alpha > 0:
            raise PshError("alpha must be positive")
        if abs(self.alpha - 1) < 1e-15:
            raise PshError("alpha = 1: the normal bundle is flat, the model needs alpha != 1")
        if self.units and len(self.units) != self.N:
            raise PshError("one unit constant per component")
        if any(abs(abs(u) - 1) > 1e-12 for u in self.units):
            raise PshError("unit constants must have modulus 1")
        if self.band[0] >= self.node_radius or 1 / self.band[1] >= self.node_radius:
            raise PshError("smooth charts must overlap both node charts")

    @property
    def B(self) -> float:
        return math.log(self.alpha) / self.N

    @property
    def chart_ids(self) -> Tuple[str, ...]:
        return tuple(f"{k}{nu}" for nu in range(1, self.N + 1) for k in ("K", "S"))

    def unit(self, nu: int) -> complex:
        return self.units[nu - 1] if self.units else 1.0

    def _nu(self, chart: str) -> Tuple[str, int]:
        return chart[0], int(chart[1:])

    def _next(self, nu: int) -> int:
        return nu % self.N + 1

    def _prev(self, nu: int) -> int:
        return (nu - 2) % self.N + 1

    def seam_t(self, nu: int) -> float:
        """``t`` on ``S_nu & K_{nu+1}``."""
        return self.alpha if nu == self.N else 1.0

    def neighbours(self, chart: str) -> Tuple[str, ...]:
        kind, nu = self._nu(chart)
        if kind == "S":
            out = [f"K{nu}", f"K{self._next(nu)}"]
        else:
            out = [f"S{nu}", f"S{self._prev(nu)}"]
        return tuple(dict.fromkeys(out))

    def in_chart(self, p: ChartPoint) -> np.ndarray:
        w, z = value(p.w), value(p.z)
        kind, _ = self._nu(p.chart)
        small = np.abs(w) < self.w_max
        if kind == "S":
            return small & (np.abs(z) > self.band[0]) & (np.abs(z) < self.band[1])
        zs = np.where(z == 0, np.inf, z)
        return small & (np.abs(z) < self.node_radius) & (np.abs(w / zs) < self.node_radius) & (z != 0)

    def convert(self, p: ChartPoint, target: str) -> List[ChartPoint]:
        """Coordinates of ``p`` in ``target`` (one entry per gluing branch; membership not checked)."""
        kind, nu = self._nu(p.chart)
        tk, tnu = self._nu(target)
        w, z = p.w, p.z
        out: List[ChartPoint] = []
        if kind == tk:
            if target == p.chart:
                out.append(p)
            return out
        if kind == "S":
            if tnu == nu:  # x-branch
                x = z * (w * self.c + 1)
                out.append(ChartPoint(target, w, w / x))
            if tnu == self._next(nu):  # y-branch
                out.append(ChartPoint(target, w * (1 / self.seam_t(nu)), 1 / z))
            return out
        y = z
        if tnu == nu:
            x = w / y
            out.append(ChartPoint(target, w, x / (w * self.c + 1)))
        if tnu == self._prev(nu):
            out.append(ChartPoint(target, w * self.seam_t(tnu), 1 / y))
        return out

    def locate(self, p: ChartPoint, target: str) -> Tuple[object, Optional[ChartPoint]]:
        """(membership mask, converted point) of ``p`` in ``target``."""
        cands = self.convert(p, target)
        if not cands:
            return np.zeros(np.shape(value(p.w)), dtype=bool), None
        if len(cands) == 1:
            return self.in_chart(cands[0]), cands[0]
        m0, m1 = self.in_chart(cands[0]), self.in_chart(cands[1])
        if np.ndim(m0) == 0:
            return (m0 or m1), (cands[0] if m0 else cands[1])
        return m0 | m1, ChartPoint(target, select(m0, cands[0].w, cands[1].w), select(m0, cands[0].z, cands[1].z))

    def f(self, p: ChartPoint):
        """``f_j`` on a smooth chart."""
        kind, nu = self._nu(p.chart)
        if kind != "S":
            raise PshError("f lives on smooth charts")
        return p.z * self.unit(nu)

    def local_phi(self, p: ChartPoint):
        """``phi_j`` of the chart carrying ``p``."""
        kind, nu = self._nu(p.chart)
        L = log_abs(p.w)
        la = math.log(self.alpha)
        if kind == "S":
            return L * L + L * ((self.N - 2 * nu) / self.N * la) + log_abs(self.f(p)) * (2 / self.N * la)
        return L * L + L * ((self.N - 2 * (nu - 1)) / self.N * la) - log_abs(p.z) * (2 / self.N * la)

    def bump_weight(self, p: ChartPoint):
        kind, _ = self._nu(p.chart)
        if kind == "S":
            lo, hi = math.log(self.band[0]), math.log(self.band[1])
            return bump((real_part(log_abs(p.z)) - (lo + hi) / 2) * (2 / (hi - lo)))
        x = p.w / p.z
        r2 = real_part(abs2(x) + abs2(p.z))
        return bump(r2 ** 0.5 * (1 / self.node_radius))


def eta(model: CycleModel, p: ChartPoint, k: str):
    """``phi_k - phi_j`` off the curve, zero on it."""
    mask, q = model.locate(p, k)
    wv = value(p.w)
    if q is None:
        raise NotInChart(f"point not in {k}")
    if np.ndim(wv) == 0 and wv == 0:
        return 0.0
    diff = model.local_phi(q) - model.local_phi(p)
    return select(mask & (wv != 0), diff, 0 * p.w)


def partition(model: CycleModel, p: ChartPoint) -> Dict[str, Tuple[object, object, Optional[ChartPoint]]]:
    """``chart -> (mask, rho, point)`` for the carrying chart and its neighbours."""
    if not np.all(model.in_chart(p)):
        raise NotInChart(f"point not in {p.chart}")
    raw: Dict[str, Tuple[object, object, Optional[ChartPoint]]] = {}
    for k in (p.chart,) + tuple(c for c in model.neighbours(p.chart) if c != p.chart):
        if k == p.chart:
            mask, q = True, p
        else:
            mask, q = model.locate(p, k)
        if q is None:
            continue
        safe = ChartPoint(k, select(mask, q.w, p.w * 0 + model.w_max / 2),
                          select(mask, q.z, p.z * 0 + _chart_safe_z(model, k)))
        b = select(mask, model.bump_weight(safe), 0 * p.w)
        raw[k] = (mask, b, safe)
    total = sum(b for _, b, _ in raw.values())
    tv = np.real(value(total))
    if np.any(tv <= 0):
        raise PshError("partition of unity vanishes at the point")
    out = {k: (m, b / total, q) for k, (m, b, q) in raw.items()}
    check = np.real(value(sum(r for _, r, _ in out.values())))
    if np.any(np.abs(check - 1) > 1e-12):
        raise PshError("partition of unity not normalized")
    return out


def _chart_safe_z(model: CycleModel, chart: str) -> complex:
    return 1.0 if chart[0] == "S" else model.node_radius / 2


def eval_phi_cycle(model: CycleModel, p: ChartPoint):
    """``phi = phi_j + sum_k rho_k eta_jk`` at ``p`` (carried by chart ``j``)."""
    if np.any(value(p.w) == 0):
        raise OnCurve("phi is undefined on the curve")
    parts = partition(model, p)
    out = model.local_phi(p)
    for k, (mask, rho, q) in parts.items():
        if k == p.chart:
            continue
        diff = model.local_phi(q) - model.local_phi(p)
        out = out + select(mask, rho * diff, 0 * p.w)
    return out


def critical_cutoff(model: CycleModel, p: ChartPoint, lam: float):
    """``sum chi(z) (-log|w|)^(2(lam-2)) |z - zeta_0|^2`` over critical points in the chart of ``p``."""
    kind, nu = model._nu(p.chart)
    out = 0 * p.w
    if kind != "S":
        return out
    for mu, z0 in model.critical_points:
        if mu != nu:
            continue
        d2 = real_part(abs2(p.z - z0))
        chi = plateau(d2, model.chi_radius ** 2 / 2)
        out = out + chi * d2 * ((-log_abs(p.w)) ** (2 * (lam - 2)))
    return out


def phi_lambda_cycle(model: CycleModel, chart: str, lam: float, eps: float = 0.0) -> Callable:
    """``f(w, z) = phi^lam +- eps lam * (critical-point cutoffs)`` in the coordinates of ``chart``."""
    if lam <= 0:
        raise PshError("lambda must be positive")
    sgn = 1.0 if lam > 1 else -1.0

    def f(w, z):
        p = ChartPoint(chart, w, z)
        out = eval_phi_cycle(model, p) ** lam
        if eps and model.critical_points:
            out = out + critical_cutoff(model, p, lam) * (sgn * eps * lam)
        return out

    return f


def hessian_analytic_cycle(model: CycleModel, p: ChartPoint, lam: float) -> Tuple[np.ndarray, float]:
    """Leading ``phi^(2-lam)/lam * Hess(phi^lam)`` in ``(w, z)`` of the chart, and its determinant.

    Node charts use ``(w, z) = (x y, y)``; smooth charts ``(w, zeta)`` with ``(f_z / f) = 1/zeta``.
    """
    w, z = complex(p.w), complex(p.z)
    if w == 0:
        raise OnCurve("w = 0")
    if z == 0:
        raise PshError("degenerate coordinates z = 0")
    L = math.log(abs(w))
    B = model.B
    if p.chart[0] == "K":
        e12 = (lam - 1) * (-B * L) / (w * np.conj(z))
        e22 = (lam - 1) * B ** 2 / abs(z) ** 2
        det = (lam - 1) / 2 * B ** 2 * L ** 2 / abs(w * z) ** 2
    else:
        fz_f = 1 / z
        e12 = (lam - 1) * B * (L / w) * np.conj(fz_f)
        e22 = (lam - 1) * B ** 2 * abs(fz_f) ** 2
        det = (lam - 1) / 2 * B ** 2 * abs(fz_f) ** 2 * L ** 2 / abs(w) ** 2
    H = np.array([[(lam - 0.5) * L ** 2 / abs(w) ** 2, e12], [np.conj(e12), e22]], dtype=complex)
    return H, float(det)


def cycle_prefactor(model: CycleModel, p: ChartPoint, lam: float) -> float:
    phi = float(np.real(value(eval_phi_cycle(model, p))))
    return phi ** (2 - lam) / lam


def cycle_property1_ratio(model: CycleModel, p: ChartPoint, lam: float) -> np.ndarray:
    """``phi^lam / (log d)^(2 lam)`` with ``d = |w|``."""
    phi = np.real(value(eval_phi_cycle(model, p)))
    return phi ** lam / np.log(np.abs(value(p.w))) ** (2 * lam)


def gluing_residuals(model: CycleModel, w_abs: float = 1e-3, samples: int = 8) -> Dict[str, float]:
    """``max |s f_k - f_j|`` per overlap ``S|K|branch``; ``f = x`` or ``1/y`` on node charts. ``O(|w|)`` by design."""
    out: Dict[str, float] = {}
    angles = np.exp(2j * np.pi * (np.arange(samples) * GOLDEN % 1))
    for nu in range(1, model.N + 1):
        s = f"S{nu}"
        u = model.unit(nu)
        for branch, k, zeta_abs in (("x", f"K{nu}", 0.45), ("y", f"K{model._next(nu)}", 1 / 0.45)):
            p = ChartPoint(s, w_abs * angles[::-1], zeta_abs * angles)
            # convert() lists the x-branch image first when both exist (N = 1)
            q = model.convert(p, k)[0 if branch == "x" else -1]
            if not np.all(model.in_chart(q)):
                raise PshError("sample points left the overlap")
            fk = q.w / q.z if branch == "x" else 1 / q.z
            out[f"{s}|{k}|{branch}"] = float(np.abs(u * fk - model.f(p)).max())
    return out


# ---------------------------------------------------------------------------
# Grids and sign profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """``shape[0]`` geometric ``|w|`` values times ``shape[1]`` geometric ``|z|`` values.

    Arguments follow deterministic golden-ratio sequences.  On node charts the
    ``|z|`` range is clipped per row so that ``|x| = |w|/|z|`` stays in the chart.
    """

    chart: str
    w_range: Tuple[float, float] = (1e-4, 1e-2)
    z_range: Tuple[float, float] = (0.3, 3.0)
    shape: Tuple[int, int] = (100, 100)
    node: bool = False
    node_radius: float = 0.6
    margin: float = 0.98

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        nw, nz = self.shape
        wa = np.geomspace(self.w_range[0], self.w_range[1], nw)
        i = np.arange(nw)[:, None]
        j = np.arange(nz)[None, :]
        aw = np.exp(2j * np.pi * ((i * GOLDEN) % 1))
        az = np.exp(2j * np.pi * ((j * GOLDEN * GOLDEN + i * 0.5 * GOLDEN) % 1))
        if self.node:
            r = self.node_radius * self.margin
            lo = np.maximum(self.z_range[0], wa / r)[:, None]
            hi = np.minimum(self.z_range[1], r)
            frac = (j + 0.5) / nz
            za = lo * (hi / lo) ** frac
        else:
            za = np.broadcast_to(np.geomspace(self.z_range[0], self.z_range[1], nz + 2)[1:-1][None, :], (nw, nz))
        W = np.broadcast_to(wa[:, None], (nw, nz)) * aw
        Z = za * az
        return W.astype(complex), np.asarray(Z, dtype=complex)


@dataclass(frozen=True)
class SignProfile:
    chart: str
    lam: float
    eps: float
    counts: Dict[str, int]
    total: int
    seam_total: int
    seam_counts: Dict[str, int]
    worst: Tuple[Tuple[complex, complex, float], ...]
    rows: Tuple[Tuple[complex, complex, float, float, str, bool], ...]

    @property
    def fraction_pos_def(self) -> float:
        return self.counts.get("posDef", 0) / self.total

    @property
    def fraction_indefinite(self) -> float:
        return self.counts.get("indefinite", 0) / self.total

    def fraction_away_from_seams(self, cls: str) -> float:
        rest = self.total - self.seam_total
        if rest == 0:
            return math.nan
        return (self.counts.get(cls, 0) - self.seam_counts.get(cls, 0)) / rest

    def to_json(self) -> dict:
        return {"chart": self.chart, "lambda": self.lam, "epsilon": self.eps, "total": self.total,
                "counts": {k: self.counts.get(k, 0) for k in SIGN_CLASSES},
                "fractionPosDef": self.fraction_pos_def, "fractionIndefinite": self.fraction_indefinite,
                "seamPoints": self.seam_total,
                "worst": [{"w": [p.real, p.imag], "z": [q.real, q.imag], "margin": m} for p, q, m in self.worst]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["w_re", "w_im", "z_re", "z_im", "scaled_eig_min", "scaled_eig_max", "signClass", "seam"])
        for w, z, e0, e1, cls, seam in self.rows:
            wr.writerow([format(v, ".17g") for v in (w.real, w.imag, z.real, z.imag, e0, e1)] + [cls, int(seam)])
        return buf.getvalue()


def _profile(f: Callable, grid: GridSpec, lam: float, eps: float, seams: Optional[np.ndarray],
             n_worst: int) -> SignProfile:
    W, Z = grid.points()
    H = hessian_ad(f, W, Z)
    classes = sign_class(H)
    target = "posDef" if lam > 1 else "indefinite"
    margin = sign_margin(H, target)
    ev = hermitian_eigs(jacobi_scaled(H))
    seam = np.zeros(W.shape, dtype=bool) if seams is None else seams
    counts = {c: int(np.sum(classes == c)) for c in SIGN_CLASSES}
    seam_counts = {c: int(np.sum((classes == c) & seam)) for c in SIGN_CLASSES}
    flat = np.argsort(np.nan_to_num(margin, nan=-np.inf), axis=None, kind="stable")[:n_worst]
    worst = tuple((complex(W.flat[k]), complex(Z.flat[k]), float(margin.flat[k])) for k in flat)
    rows = tuple((complex(W.flat[k]), complex(Z.flat[k]), float(ev.reshape(-1, 2)[k, 0]),
                  float(ev.reshape(-1, 2)[k, 1]), str(classes.flat[k]), bool(seam.flat[k]))
                 for k in range(W.size))
    return SignProfile(grid.chart, lam, eps, counts, int(W.size), int(seam.sum()), seam_counts, worst, rows)


def default_grid(model: Union[FiniteTypeModel, CycleModel], chart: Optional[str] = None,
                 shape: Tuple[int, int] = (100, 100), w_range: Tuple[float, float] = (1e-4, 1e-2)) -> GridSpec:
    if isinstance(model, FiniteTypeModel):
        if model.chart == "node":
            return GridSpec("node", w_range, (1e-12, model.radius), shape, True, model.radius)
        return GridSpec("smooth", w_range, model.band, shape)
    chart = chart or "K1"
    if chart[0] == "K":
        return GridSpec(chart, w_range, (1e-12, model.node_radius), shape, True, model.node_radius)
    lo, hi = model.band
    return GridSpec(chart, w_range, (lo * 1.02, hi / 1.02), shape)


def sign_profile(model: Union[FiniteTypeModel, CycleModel], lam: float, grid: Optional[GridSpec] = None,
                 eps: float = 0.0, n_worst: int = 5) -> SignProfile:
    """Eigenvalue sign statistics of the exact Hessian of ``phi_lambda`` over a grid."""
    grid = grid or default_grid(model)
    if isinstance(model, FiniteTypeModel):
        return _profile(phi_lambda_finite(model, lam, eps), grid, lam, eps, None, n_worst)
    W, Z = grid.points()
    p = ChartPoint(grid.chart, W, Z)
    if not np.all(model.in_chart(p)):
        raise NotInChart("grid leaves the chart")
    parts = partition(model, p)
    own = np.real(value(parts[grid.chart][1]))
    seams = own < 1 - 1e-12
    return _profile(phi_lambda_cycle(model, grid.chart, lam, eps), grid, lam, eps, seams, n_worst)


def search_epsilon(model: Union[FiniteTypeModel, CycleModel], lam: float, grid: Optional[GridSpec] = None,
                   threshold: float = 0.99, ladder: Sequence[float] = EPS_LADDER) -> Tuple[Optional[float], SignProfile]:
    """First ``eps`` on the ladder whose profile reaches ``threshold`` for the expected class."""
    prof = None
    for eps in ladder:
        prof = sign_profile(model, lam, grid, eps)
        frac = prof.fraction_pos_def if lam > 1 else prof.fraction_indefinite
        if frac >= threshold:
            return eps, prof
    return None, prof


def relative_det_errors(f: Callable, points: Sequence[Tuple[complex, complex]],
                        leading: Callable[[complex, complex], float], scale: Callable[[complex, complex], float],
                        h: float = 1e-4, dps: Optional[int] = None) -> np.ndarray:
    """``|det(scale * H_numeric) / leading - 1|`` per point."""
    out = []
    for w, z in points:
        H = hessian_numeric(f, w, z, h, relative=True, dps=dps).matrix * scale(w, z)
        det = float(np.real(H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]))
        out.append(abs(det / leading(w, z) - 1))
    return np.asarray(out)
