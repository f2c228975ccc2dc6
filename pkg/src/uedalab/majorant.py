"""Majorant series for the linearizing functional equation.

``A(X) - X = M0 A^2 / (1 - R0 A)`` with ``A'(0) = 1`` dominates the correction
cochains when the normal bundle is torsion.  The small-divisor variant weights
the ``n``-th coefficient by ``eps_{n-1} = M5 + M0 / d(O, N^{n-1})``.
Coefficients are kept in multiprecision because they grow geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from .flat_bundles import Angle, e1_fit, log_inverse_distances

MAJORANT_DPS = 60


class MajorantError(ValueError):
    pass


@dataclass(frozen=True)
class MajorantSeries:
    """Coefficients ``A_1 = 1, A_2, ...`` as mpmath numbers (index 0 holds ``A_1``)."""

    coeffs: Tuple[mpmath.mpf, ...]
    params: Dict[str, float]
    weights: Optional[Tuple[mpmath.mpf, ...]] = None  # eps_{n-1} for n = 2..nMax

    @property
    def n_max(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, n: int) -> mpmath.mpf:
        """``A_n`` for ``n >= 1``."""
        if n < 1:
            raise IndexError(n)
        return self.coeffs[n - 1]

    def radius_estimate(self, tail: float = 0.25) -> float:
        """Inverse of the largest ``A_n^(1/n)`` over the last ``tail`` fraction of coefficients."""
        start = max(2, int(self.n_max * (1 - tail)))
        with mpmath.workdps(MAJORANT_DPS):
            roots = [self[n] ** (mpmath.mpf(1) / n) for n in range(start, self.n_max + 1) if self[n] > 0]
        if not roots:
            return math.inf
        return float(1 / max(roots))

    def residual(self) -> float:
        """Largest relative coefficient residual of the defining equation, ``n <= nMax``."""
        with mpmath.workdps(MAJORANT_DPS):
            return float(_residual(self))

    def to_json(self) -> dict:
        return {"params": {k: self.params[k] for k in sorted(self.params)},
                "coefficients": [mpmath.nstr(c, 17) for c in self.coeffs],
                "radiusEstimate": self.radius_estimate()}


def _square_coeff(a: Sequence, n: int):
    """``[X^n] A(X)^2`` with ``a[i-1] = A_i``."""
    return mpmath.fsum(a[i - 1] * a[n - i - 1] for i in range(1, n))


def majorant_a(M0: float, R0: float, n_max: int, dps: int = MAJORANT_DPS) -> MajorantSeries:
    """``A_n = M0 sum_{i<n} A_i A_{n-i} + R0 sum_{2<=i<n} A_i A_{n-i}``."""
    if not (M0 > 0 and R0 > 0):
        raise MajorantError("M0 and R0 must be positive")
    if n_max < 1:
        raise MajorantError("nMax must be positive")
    with mpmath.workdps(dps):
        m0, r0 = mpmath.mpf(M0), mpmath.mpf(R0)
        a: List = [mpmath.mpf(1)]
        for n in range(2, n_max + 1):
            full = _square_coeff(a, n)
            inner = mpmath.fsum(a[i - 1] * a[n - i - 1] for i in range(2, n))
            a.append(m0 * full + r0 * inner)
    return MajorantSeries(tuple(a), {"M0": float(M0), "R0": float(R0)})


def exact_radius(M0: float, R0: float) -> float:
    """Branch point of ``(M0 + R0) A^2 - (1 + R0 X) A + X = 0`` nearest the origin."""
    b = 4 * M0 + 2 * R0
    return (b - math.sqrt(b * b - 4 * R0 * R0)) / (2 * R0 * R0)


def majorant_siegel(M0: float, M5: float, R0: float, d_sequence: Sequence[float], n_max: int,
                    dps: int = MAJORANT_DPS) -> MajorantSeries:
    """``sum_{n>=2} eps_{n-1}^{-1} A_n X^n = A^2 / (1 - R0 A)``, ``eps_m = M5 + M0 / d_m``.

    ``d_sequence[m-1]`` is ``d(O, N^m)`` for ``m = 1..nMax-1``.
    """
    if not (M0 > 0 and R0 > 0 and M5 >= 0):
        raise MajorantError("M0, R0 must be positive and M5 nonnegative")
    if len(d_sequence) < n_max - 1:
        raise MajorantError(f"need {n_max - 1} distances, got {len(d_sequence)}")
    if any(not d > 0 for d in d_sequence[: n_max - 1]):
        raise MajorantError("distances must be positive")
    with mpmath.workdps(dps):
        m0, m5, r0 = mpmath.mpf(M0), mpmath.mpf(M5), mpmath.mpf(R0)
        eps = [m5 + m0 / mpmath.mpf(d) for d in d_sequence[: n_max - 1]]
        a: List = [mpmath.mpf(1)]
        b: List = [mpmath.mpf(0)]  # b[n-1] = [X^n] A^2 / (1 - R0 A)
        for n in range(2, n_max + 1):
            # B (1 - R0 A) = A^2  =>  B_n = [A^2]_n + R0 sum_{i>=1} A_i B_{n-i}
            bn = _square_coeff(a, n) + r0 * mpmath.fsum(a[i - 1] * b[n - i - 1] for i in range(1, n - 1))
            b.append(bn)
            a.append(eps[n - 2] * bn)
    return MajorantSeries(tuple(a), {"M0": float(M0), "M5": float(M5), "R0": float(R0)}, tuple(eps))


def _residual(series: MajorantSeries):
    a = series.coeffs
    n_max = len(a)
    r0 = mpmath.mpf(series.params["R0"])
    worst = mpmath.mpf(0)
    if series.weights is None:
        m0 = mpmath.mpf(series.params["M0"])
        # (A - X)(1 - R0 A) - M0 A^2 = 0 coefficientwise
        for n in range(2, n_max + 1):
            sq = _square_coeff(a, n)
            lhs = a[n - 1] - r0 * sq + r0 * a[n - 2]
            rhs = m0 * sq
            worst = max(worst, abs(lhs - rhs) / max(abs(rhs), mpmath.mpf(1)))
        return worst
    # sum eps^{-1} A_n X^n (1 - R0 A) = A^2
    c = [mpmath.mpf(0)] + [a[n - 1] / series.weights[n - 2] for n in range(2, n_max + 1)]
    for n in range(2, n_max + 1):
        lhs = c[n - 1] - r0 * mpmath.fsum(a[i - 1] * c[n - i - 1] for i in range(1, n - 1))
        rhs = _square_coeff(a, n)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), mpmath.mpf(1)))
    return worst


# ---------------------------------------------------------------------------
# Small-divisor data and Siegel's conditions
# ---------------------------------------------------------------------------


def distance_sequence(angle: Angle, n_max: int, kappa: float = 1.0) -> np.ndarray:
    """``d(O, L^m)`` for ``m = 1..nMax`` on a covering with loop contraction ``kappa``."""
    return np.exp(-log_inverse_distances(angle, n_max, kappa))


def siegel_epsilons(M0: float, M5: float, d_sequence: Sequence[float]) -> np.ndarray:
    return M5 + M0 / np.asarray(d_sequence, dtype=float)


@dataclass(frozen=True)
class SiegelReport:
    growth_fit: Dict[str, float]
    growth_ok: bool
    subadditive_ok: bool
    worst_violation: float
    worst_pair: Tuple[int, int]
    checked_pairs: int

    def to_json(self) -> dict:
        return {"growthFit": {k: self.growth_fit[k] for k in sorted(self.growth_fit)},
                "growthOk": self.growth_ok, "subadditiveOk": self.subadditive_ok,
                "worstViolation": self.worst_violation, "worstPair": list(self.worst_pair),
                "checkedPairs": self.checked_pairs}


def siegel_conditions(M0: float, M5: float, d_sequence: Sequence[float], n_max: Optional[int] = None,
                      rtol: float = 1e-12) -> SiegelReport:
    """Check ``-log eps_n = O(log n)`` (fit) and ``eps_{n-m}^-1 <= eps_n^-1 + eps_m^-1`` for ``m < n <= nMax``."""
    d = np.asarray(d_sequence, dtype=float)
    n_max = d.size if n_max is None else n_max
    eps = siegel_epsilons(M0, M5, d[:n_max])
    fit = e1_fit(np.log(eps))
    growth_ok = fit["maxResidual"] <= fit["margin"] and fit["c2"] <= fit["slopeMax"]
    inv = 1.0 / eps  # inv[k-1] = eps_k^{-1}
    worst, pair, count = -math.inf, (0, 0), 0
    for n in range(2, n_max + 1):
        m = np.arange(1, n)
        gap = inv[n - m - 1] - (inv[n - 1] + inv[m - 1])
        rel = gap / (inv[n - 1] + inv[m - 1])
        k = int(np.argmax(rel))
        count += m.size
        if rel[k] > worst:
            worst, pair = float(rel[k]), (n, int(m[k]))
    return SiegelReport(fit, bool(growth_ok), worst <= rtol, worst, pair, count)


def weighted_square_coeffs(series: MajorantSeries, rho: float) -> List[mpmath.mpf]:
    """``[X^n] A^2 / (1 - rho A)`` for ``n = 1..nMax`` (index 0 holds ``n = 1``)."""
    a = series.coeffs
    with mpmath.workdps(MAJORANT_DPS):
        r = mpmath.mpf(rho)
        b: List = [mpmath.mpf(0)]
        for n in range(2, len(a) + 1):
            b.append(_square_coeff(a, n) + r * mpmath.fsum(a[i - 1] * b[n - i - 1] for i in range(1, n - 1)))
    return b
