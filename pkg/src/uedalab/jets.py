"""Truncated power series in a transverse coordinate ``w`` whose coefficients
are Laurent polynomials in a base coordinate ``z``.

Two value types live here:

* :class:`LaurentPoly` -- a finite Laurent polynomial on an annulus of validity.
* :class:`WJet` -- ``sum_{m=0}^{M} c_m(z) w^m + O(w^{M+1})``.

plus :class:`TransitionSystem`, the chart-gluing data of a neighbourhood germ of
a nodal curve built on a :class:`~uedalab.curve_model.Covering`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np

from .curve_model import NODE, Covering, Overlap

DMAX_DEFAULT = 32
EXTENDED_DPS = 32

Annulus = Optional[Tuple[float, float]]
Number = Union[int, float, complex]


class LaurentRangeError(ValueError):
    """An exponent left the declared range ``[-dMax, dMax]``."""


class AnnulusMismatch(ValueError):
    pass


class JetError(ValueError):
    pass


def _merge_annulus(a: Annulus, b: Annulus) -> Annulus:
    if a is None:
        return b
    if b is None or a == b:
        return a
    raise AnnulusMismatch(f"incompatible annuli {a} and {b}")


def _is_extended(arr: np.ndarray) -> bool:
    return arr.dtype == object


def _as_coeff_array(values: Sequence, extended: bool) -> np.ndarray:
    if extended:
        return np.array([mpmath.mpc(v) for v in values], dtype=object)
    return np.asarray(values, dtype=complex)


# ---------------------------------------------------------------------------
# Laurent polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LaurentPoly:
    """``sum_e c_e z^e`` stored densely from exponent ``lo`` upward."""

    lo: int
    coeffs: np.ndarray
    annulus: Annulus = None
    d_max: int = DMAX_DEFAULT

    def __post_init__(self) -> None:
        c = self.coeffs
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        nz = np.nonzero(np.array([v != 0 for v in c]))[0] if _is_extended(c) else np.nonzero(c)[0]
        if nz.size == 0:
            object.__setattr__(self, "lo", 0)
            object.__setattr__(self, "coeffs", c[:0].copy())
            return
        first, last = int(nz[0]), int(nz[-1])
        if first or last != c.size - 1:
            object.__setattr__(self, "lo", self.lo + first)
            object.__setattr__(self, "coeffs", c[first : last + 1].copy())
        lo, hi = self.lo, self.lo + self.coeffs.size - 1
        if lo < -self.d_max or hi > self.d_max:
            raise LaurentRangeError(
                f"exponent range [{lo}, {hi}] exceeds dMax={self.d_max}"
            )
        if self.annulus is not None:
            r_in, r_out = self.annulus
            if not r_in < r_out:
                raise ValueError(f"empty annulus {self.annulus}")

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls, annulus: Annulus = None, d_max: int = DMAX_DEFAULT, extended: bool = False) -> "LaurentPoly":
        return cls(0, _as_coeff_array([], extended), annulus, d_max)

    @classmethod
    def constant(cls, value: Number, annulus: Annulus = None, d_max: int = DMAX_DEFAULT, extended: bool = False) -> "LaurentPoly":
        return cls(0, _as_coeff_array([value], extended), annulus, d_max)

    @classmethod
    def monomial(cls, coeff: Number, exponent: int, annulus: Annulus = None, d_max: int = DMAX_DEFAULT, extended: bool = False) -> "LaurentPoly":
        return cls(exponent, _as_coeff_array([coeff], extended), annulus, d_max)

    @classmethod
    def from_dict(cls, terms: Mapping[int, Number], annulus: Annulus = None, d_max: int = DMAX_DEFAULT, extended: bool = False) -> "LaurentPoly":
        terms = {int(e): v for e, v in terms.items() if v != 0}
        if not terms:
            return cls.zero(annulus, d_max, extended)
        lo, hi = min(terms), max(terms)
        vals = [terms.get(e, 0) for e in range(lo, hi + 1)]
        return cls(lo, _as_coeff_array(vals, extended), annulus, d_max)

    # -- basic queries ------------------------------------------------------
    @property
    def extended(self) -> bool:
        return _is_extended(self.coeffs)

    @property
    def hi(self) -> int:
        return self.lo + self.coeffs.size - 1

    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    def terms(self) -> Iterator[Tuple[int, complex]]:
        for i, v in enumerate(self.coeffs):
            if v != 0:
                yield self.lo + i, v

    def as_dict(self) -> Dict[int, complex]:
        return dict(self.terms())

    def coefficient(self, e: int) -> complex:
        i = e - self.lo
        if 0 <= i < self.coeffs.size:
            return self.coeffs[i]
        return 0j

    def is_monomial(self) -> bool:
        return sum(1 for _ in self.terms()) == 1

    def max_abs(self) -> float:
        if self.is_zero():
            return 0.0
        return float(max(abs(v) for v in self.coeffs))

    def l2(self) -> float:
        return float(math.sqrt(sum(abs(v) ** 2 for v in self.coeffs)))

    # -- arithmetic ---------------------------------------------------------
    def _like(self, lo: int, coeffs: np.ndarray, annulus: Annulus, d_max: Optional[int] = None) -> "LaurentPoly":
        return LaurentPoly(lo, coeffs, annulus, self.d_max if d_max is None else d_max)

    def _coerce(self, other) -> "LaurentPoly":
        if isinstance(other, LaurentPoly):
            return other
        return LaurentPoly.constant(other, self.annulus, self.d_max, self.extended)

    def __add__(self, other) -> "LaurentPoly":
        other = self._coerce(other)
        ann = _merge_annulus(self.annulus, other.annulus)
        d_max = max(self.d_max, other.d_max)
        if self.is_zero():
            return other._like(other.lo, other.coeffs, ann, d_max)
        if other.is_zero():
            return self._like(self.lo, self.coeffs, ann, d_max)
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        ext = self.extended or other.extended
        out = np.zeros(hi - lo + 1, dtype=object if ext else complex)
        if ext:
            out[:] = mpmath.mpc(0)
        out[self.lo - lo : self.lo - lo + self.coeffs.size] += self.coeffs
        out[other.lo - lo : other.lo - lo + other.coeffs.size] += other.coeffs
        return self._like(lo, out, ann, d_max)

    __radd__ = __add__

    def __neg__(self) -> "LaurentPoly":
        return self._like(self.lo, -self.coeffs, self.annulus)

    def __sub__(self, other) -> "LaurentPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LaurentPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "LaurentPoly":
        if not isinstance(other, LaurentPoly):
            if other == 0:
                return LaurentPoly.zero(self.annulus, self.d_max, self.extended)
            return self._like(self.lo, self.coeffs * other, self.annulus)
        ann = _merge_annulus(self.annulus, other.annulus)
        d_max = max(self.d_max, other.d_max)
        if self.is_zero() or other.is_zero():
            return LaurentPoly.zero(ann, d_max, self.extended or other.extended)
        return self._like(self.lo + other.lo, np.convolve(self.coeffs, other.coeffs), ann, d_max)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Number) -> "LaurentPoly":
        return self._like(self.lo, self.coeffs / scalar, self.annulus)

    def shift(self, k: int) -> "LaurentPoly":
        """Multiply by ``z^k``."""
        if self.is_zero():
            return self
        return self._like(self.lo + k, self.coeffs, self.annulus)

    def ipow(self, n: int) -> "LaurentPoly":
        if n < 0:
            if not self.is_monomial():
                raise JetError("negative powers need a monomial")
            (e, c), = self.terms()
            return LaurentPoly.monomial(c ** n, e * n, self.annulus, self.d_max, self.extended)
        out = LaurentPoly.constant(1, self.annulus, self.d_max, self.extended)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def substitute_monomial(self, c: complex, eps: int, annulus: Annulus = None) -> "LaurentPoly":
        """Return ``p(c * z^eps)`` as a Laurent polynomial in ``z``."""
        if eps not in (1, -1):
            raise ValueError("eps must be +1 or -1")
        terms = {eps * e: v * c ** e for e, v in self.terms()}
        return LaurentPoly.from_dict(terms, annulus, self.d_max, self.extended)

    def with_annulus(self, annulus: Annulus) -> "LaurentPoly":
        return LaurentPoly(self.lo, self.coeffs, annulus, self.d_max)

    def derivative(self) -> "LaurentPoly":
        terms = {e - 1: e * v for e, v in self.terms() if e != 0}
        return LaurentPoly.from_dict(terms, self.annulus, self.d_max, self.extended)

    def prune(self, atol: float) -> "LaurentPoly":
        if self.is_zero():
            return self
        keep = np.array([abs(v) > atol for v in self.coeffs])
        if keep.all():
            return self
        c = self.coeffs.copy()
        c[~keep] = 0
        return self._like(self.lo, c, self.annulus)

    def to_double(self) -> "LaurentPoly":
        if not self.extended:
            return self
        return self._like(self.lo, np.array([complex(v) for v in self.coeffs]), self.annulus)

    def to_extended(self) -> "LaurentPoly":
        if self.extended:
            return self
        return self._like(self.lo, _as_coeff_array(list(self.coeffs), True), self.annulus)

    # -- evaluation and norms ----------------------------------------------
    def __call__(self, z):
        z = np.asarray(z, dtype=complex) if not self.extended else z
        total = 0
        for e, v in self.terms():
            total = total + v * z ** e
        return total

    def sup_norm(self, annulus: Annulus = None) -> float:
        """Upper bound ``sum |c_e| max(rIn^e, rOut^e)`` on the annulus."""
        ann = annulus if annulus is not None else self.annulus
        if ann is None:
            raise ValueError("sup-norm needs an annulus")
        r_in, r_out = ann
        if self.annulus is not None:
            a_in, a_out = self.annulus
            if r_in < a_in - 1e-15 or r_out > a_out * (1 + 1e-15):
                raise ValueError(f"annulus {ann} outside validity {self.annulus}")
        total = 0.0
        for e, v in self.terms():
            if e < 0 and r_in == 0:
                return math.inf
            bound = max(r_in ** e if r_in > 0 else 0.0, r_out ** e)
            total += float(abs(v)) * bound
        return total

    def equals(self, other: "LaurentPoly", tol: float = 0.0) -> bool:
        return (self - other).max_abs() <= tol

    def __repr__(self) -> str:
        parts = [f"({complex(v):.6g})z^{e}" for e, v in self.terms()]
        return "LaurentPoly(" + (" + ".join(parts) if parts else "0") + ")"

    # -- serialization ------------------------------------------------------
    def to_json(self) -> List[dict]:
        return [{"e": e, "re": float(complex(v).real), "im": float(complex(v).imag)} for e, v in self.terms()]

    @classmethod
    def from_json(cls, data: Sequence[Mapping], annulus: Annulus = None, d_max: int = DMAX_DEFAULT) -> "LaurentPoly":
        return cls.from_dict({int(t["e"]): complex(t["re"], t["im"]) for t in data}, annulus, d_max)


# ---------------------------------------------------------------------------
# Jets in w
# ---------------------------------------------------------------------------


def _binom(p: Fraction, m: int) -> Fraction:
    out = Fraction(1)
    for i in range(m):
        out *= (p - i) / (i + 1)
    return out


@dataclass(frozen=True, eq=False)
class WJet:
    """``sum_{m=0}^{order} c_m(z) w^m + O(w^{order+1})``."""

    coeffs: Tuple[LaurentPoly, ...]

    def __post_init__(self) -> None:
        if not self.coeffs:
            raise JetError("a jet needs at least the constant coefficient")
        ann = None
        for c in self.coeffs:
            ann = _merge_annulus(ann, c.annulus)

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_list(cls, coeffs: Sequence[Union[LaurentPoly, Number]], order: Optional[int] = None,
                  annulus: Annulus = None, d_max: int = DMAX_DEFAULT, extended: bool = False) -> "WJet":
        items = []
        for c in coeffs:
            if isinstance(c, LaurentPoly):
                items.append(c if annulus is None else c.with_annulus(annulus))
            else:
                items.append(LaurentPoly.constant(c, annulus, d_max, extended))
        if order is None:
            order = len(items) - 1
        zero = LaurentPoly.zero(annulus, d_max, extended)
        items = (items + [zero] * (order + 1 - len(items)))[: order + 1]
        return cls(tuple(items))

    @classmethod
    def identity(cls, order: int, annulus: Annulus = None, d_max: int = DMAX_DEFAULT, extended: bool = False) -> "WJet":
        return cls.from_list([0, 1], order, annulus, d_max, extended)

    @classmethod
    def constant(cls, value: Union[LaurentPoly, Number], order: int, annulus: Annulus = None,
                 d_max: int = DMAX_DEFAULT, extended: bool = False) -> "WJet":
        return cls.from_list([value], order, annulus, d_max, extended)

    # -- queries ------------------------------------------------------------
    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def annulus(self) -> Annulus:
        ann = None
        for c in self.coeffs:
            ann = _merge_annulus(ann, c.annulus)
        return ann

    @property
    def d_max(self) -> int:
        return max(c.d_max for c in self.coeffs)

    @property
    def extended(self) -> bool:
        return any(c.extended for c in self.coeffs)

    def __getitem__(self, m: int) -> LaurentPoly:
        return self.coeffs[m]

    def truncate(self, order: int) -> "WJet":
        if order > self.order:
            raise JetError(f"cannot extend a jet of order {self.order} to {order}")
        return WJet(self.coeffs[: order + 1])

    def valuation(self) -> int:
        for m, c in enumerate(self.coeffs):
            if not c.is_zero():
                return m
        return self.order + 1

    def _zero_coeff(self) -> LaurentPoly:
        return LaurentPoly.zero(self.annulus, self.d_max, self.extended)

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "WJet":
        if isinstance(other, WJet):
            return other
        return WJet.constant(other, self.order, self.annulus, self.d_max, self.extended)

    def __add__(self, other) -> "WJet":
        other = self._coerce(other)
        n = min(self.order, other.order)
        return WJet(tuple(self.coeffs[m] + other.coeffs[m] for m in range(n + 1)))

    __radd__ = __add__

    def __neg__(self) -> "WJet":
        return WJet(tuple(-c for c in self.coeffs))

    def __sub__(self, other) -> "WJet":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "WJet":
        return self._coerce(other) - self

    def __mul__(self, other) -> "WJet":
        if not isinstance(other, WJet):
            return WJet(tuple(c * other for c in self.coeffs))
        n = min(self.order, other.order)
        if not (self.extended or other.extended):
            return self._mul_dense(other, n)
        a_val, b_val = self.valuation(), other.valuation()
        out = []
        for m in range(n + 1):
            acc = self._zero_coeff()
            for i in range(a_val, m - b_val + 1):
                acc = acc + self.coeffs[i] * other.coeffs[m - i]
            out.append(acc)
        return WJet(tuple(out))

    __rmul__ = __mul__

    def _dense(self, n: int) -> Tuple[int, np.ndarray]:
        live = [c for c in self.coeffs[: n + 1] if not c.is_zero()]
        if not live:
            return 0, np.zeros((n + 1, 1), dtype=complex)
        lo = min(c.lo for c in live)
        hi = max(c.hi for c in live)
        arr = np.zeros((n + 1, hi - lo + 1), dtype=complex)
        for m, c in enumerate(self.coeffs[: n + 1]):
            if not c.is_zero():
                arr[m, c.lo - lo : c.hi - lo + 1] = c.coeffs
        return lo, arr

    def _mul_dense(self, other: "WJet", n: int) -> "WJet":
        la, a = self._dense(n)
        lb, b = other._dense(n)
        out = _conv_rows(a, b, n)
        ann = _merge_annulus(self.annulus, other.annulus)
        return _from_dense(la + lb, out, ann, max(self.d_max, other.d_max))

    def _compose_dense(self, inner: "WJet", n: int) -> "WJet":
        ls, s = self._dense(n)
        li, a = inner._dense(n)
        ann = _merge_annulus(self.annulus, inner.annulus)
        d_max = max(self.d_max, inner.d_max)
        # sum_m s_m(z) * inner^m, each term kept with its own exponent offset
        terms: List[Tuple[int, np.ndarray]] = []
        p_lo, p = 0, np.zeros((n + 1, 1), dtype=complex)
        p[0, 0] = 1
        for m in range(n + 1):
            if m:
                p = _conv_rows(p, a, n)
                p_lo += li
            if s[m].any():
                terms.append((ls + p_lo, _conv_rows(s[m][None, :], p, n)))
        if not terms:
            return WJet.constant(0, n, ann, d_max)
        lo = min(t[0] for t in terms)
        hi = max(t[0] + t[1].shape[1] - 1 for t in terms)
        out = np.zeros((n + 1, hi - lo + 1), dtype=complex)
        for off, arr in terms:
            out[:, off - lo : off - lo + arr.shape[1]] += arr
        return _from_dense(lo, out, ann, d_max)

    def shift(self, k: int) -> "WJet":
        """Multiply by ``w^k`` keeping the order."""
        z = self._zero_coeff()
        return WJet(tuple([z] * k + list(self.coeffs[: self.order + 1 - k])))

    def ipow(self, n: int) -> "WJet":
        if n < 0:
            return self.reciprocal().ipow(-n)
        out = WJet.constant(1, self.order, self.annulus, self.d_max, self.extended)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def compose(self, inner: "WJet") -> "WJet":
        """``self(z, inner(z, w))``; ``inner`` must vanish at ``w = 0``."""
        if not inner.coeffs[0].is_zero():
            raise JetError("inner jet must have zero constant term")
        n = min(self.order, inner.order)
        inner = inner.truncate(n)
        if not (self.extended or inner.extended):
            return self._compose_dense(inner, n)
        acc = WJet.constant(self.coeffs[n], n, inner.annulus, self.d_max, self.extended)
        for m in range(n - 1, -1, -1):
            acc = acc * inner + WJet.constant(self.coeffs[m], n, inner.annulus, self.d_max, self.extended)
        return acc

    def inverse(self) -> "WJet":
        """Series reversion: ``J`` with ``self(z, J(z, v)) = v``."""
        if not self.coeffs[0].is_zero():
            raise JetError("invert needs zero constant term")
        lin = self.coeffs[1] if self.order >= 1 else self._zero_coeff()
        if lin.is_zero():
            raise JetError("invert needs a unit linear term")
        if not lin.is_monomial():
            raise JetError("linear term must be a monomial to be invertible")
        inv_lin = lin.ipow(-1)
        n = self.order
        ident = WJet.identity(n, self.annulus, self.d_max, self.extended)
        higher = WJet((self._zero_coeff(), self._zero_coeff()) + self.coeffs[2:]) if n >= 2 else None
        guess = ident * inv_lin
        if higher is None or higher.valuation() > n:
            return guess
        # each pass fixes (valuation - 1) further orders
        for _ in range(-(-(n - 1) // (higher.valuation() - 1))):
            guess = (ident - higher.compose(guess)) * inv_lin
        return guess

    def reciprocal(self) -> "WJet":
        c0 = self.coeffs[0]
        if not c0.is_monomial():
            raise JetError("reciprocal needs a monomial constant term")
        inv0 = c0.ipow(-1)
        u = _drop_constant(self * inv0)
        geo = WJet.from_list([(-1) ** m for m in range(self.order + 1)], self.order, self.annulus,
                             self.d_max, self.extended)
        return geo.compose(u) * inv0

    def power(self, p: Union[Fraction, int]) -> "WJet":
        """``self**p`` for rational ``p``; requires constant term exactly 1."""
        p = Fraction(p)
        c0 = self.coeffs[0]
        if not (c0.is_monomial() and c0.lo == 0 and abs(c0.coefficient(0) - 1) < 1e-14):
            raise JetError("fractional power needs constant term 1")
        u = _drop_constant(self)
        series = WJet.from_list([float(_binom(p, m)) for m in range(self.order + 1)], self.order,
                                self.annulus, self.d_max, self.extended)
        return series.compose(u)

    def substitute_base(self, c: complex, eps: int, annulus: Annulus = None) -> "WJet":
        return WJet(tuple(k.substitute_monomial(c, eps, annulus) for k in self.coeffs))

    def with_annulus(self, annulus: Annulus) -> "WJet":
        return WJet(tuple(k.with_annulus(annulus) for k in self.coeffs))

    def prune(self, atol: float) -> "WJet":
        return WJet(tuple(k.prune(atol) for k in self.coeffs))

    def max_abs(self) -> float:
        return max(k.max_abs() for k in self.coeffs)

    def __call__(self, z, w):
        total = 0
        for m in range(self.order, -1, -1):
            total = total * w + self.coeffs[m](z)
        return total

    def sup_norm(self, annulus: Annulus = None) -> float:
        return max(k.sup_norm(annulus) for k in self.coeffs)

    def equals(self, other: "WJet", tol: float = 0.0) -> bool:
        n = min(self.order, other.order)
        return all(self.coeffs[m].equals(other.coeffs[m], tol) for m in range(n + 1))

    def __repr__(self) -> str:
        body = ", ".join(f"w^{m}: {c!r}" for m, c in enumerate(self.coeffs) if not c.is_zero())
        return f"WJet(order={self.order}; {body})"

    def to_json(self) -> dict:
        ann = self.annulus
        return {
            "order": self.order,
            "coeffs": [{"m": m, "laurent": c.to_json()} for m, c in enumerate(self.coeffs) if not c.is_zero()],
            "annulus": None if ann is None else [ann[0], ann[1]],
        }

    @classmethod
    def from_json(cls, data: Mapping, d_max: int = DMAX_DEFAULT) -> "WJet":
        ann = data.get("annulus")
        ann = None if ann is None else (float(ann[0]), float(ann[1]))
        coeffs = {int(c["m"]): LaurentPoly.from_json(c["laurent"], ann, d_max) for c in data["coeffs"]}
        zero = LaurentPoly.zero(ann, d_max)
        return cls(tuple(coeffs.get(m, zero) for m in range(int(data["order"]) + 1)))


def _conv_rows(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """2-D convolution of coefficient grids, keeping rows (w-degrees) ``<= n``."""
    out = np.zeros((n + 1, a.shape[1] + b.shape[1] - 1), dtype=complex)
    ra = np.flatnonzero(a[: n + 1].any(axis=1))
    rb = np.flatnonzero(b[: n + 1].any(axis=1))
    for i in ra:
        for j in rb:
            if i + j > n:
                break
            out[i + j] += np.convolve(a[i], b[j])
    return out


def _from_dense(lo: int, arr: np.ndarray, annulus: Annulus, d_max: int) -> WJet:
    return WJet(tuple(LaurentPoly(lo, row, annulus, d_max) for row in arr))


def _drop_constant(jet: WJet) -> WJet:
    return WJet((jet._zero_coeff(),) + jet.coeffs[1:])


def sup_norm(obj: Union[LaurentPoly, WJet], annulus: Annulus = None) -> float:
    return obj.sup_norm(annulus)


# ---------------------------------------------------------------------------
# Split functions on node charts: C + G+(x) + G-(y)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitFunction:
    """``C + sum_{e>=1} gp[e] x^e + sum_{e>=1} gm[e] y^e`` on a node chart."""

    constant: complex = 0j
    plus: Tuple[complex, ...] = ()
    minus: Tuple[complex, ...] = ()

    def branch(self, which: str) -> LaurentPoly:
        """Restriction to the ``x``- or ``y``-branch, as a polynomial in that coordinate."""
        g = self.plus if which == "x" else self.minus
        terms = {0: self.constant}
        terms.update({e + 1: v for e, v in enumerate(g)})
        return LaurentPoly.from_dict(terms)

    def evaluate_jets(self, x: WJet, y: WJet) -> WJet:
        out = WJet.constant(self.constant, min(x.order, y.order), x.annulus, x.d_max, x.extended)
        for g, base in ((self.plus, x), (self.minus, y)):
            if not g:
                continue
            p = base
            for e, v in enumerate(g):
                if v != 0:
                    out = out + p * v
                if e + 1 < len(g):
                    p = p * base
        return out

    def __call__(self, x, y):
        out = self.constant
        for e, v in enumerate(self.plus):
            out = out + v * x ** (e + 1)
        for e, v in enumerate(self.minus):
            out = out + v * y ** (e + 1)
        return out

    def sup_norm(self, radius: float) -> float:
        return abs(self.constant) + sum(abs(v) * radius ** (e + 1) for e, v in enumerate(self.plus)) + \
            sum(abs(v) * radius ** (e + 1) for e, v in enumerate(self.minus))

    def is_zero(self) -> bool:
        return self.constant == 0 and not any(self.plus) and not any(self.minus)

    def to_json(self) -> dict:
        cpx = lambda v: [float(complex(v).real), float(complex(v).imag)]
        return {"C": cpx(self.constant), "plus": [cpx(v) for v in self.plus], "minus": [cpx(v) for v in self.minus]}


# ---------------------------------------------------------------------------
# Transition systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OverlapData:
    """Gluing data on one overlap, expressed in ``(z_j, w_j)`` of its expansion chart ``j``.

    For a smooth target chart, ``w`` is ``w_k`` as a jet.  For a node target
    chart, ``x`` and ``y`` are the node coordinates as jets and ``w_k = x * y``.
    """

    w: Optional[WJet] = None
    x: Optional[WJet] = None
    y: Optional[WJet] = None

    @property
    def is_node(self) -> bool:
        return self.x is not None

    def target_w(self) -> WJet:
        if self.is_node:
            return self.x * self.y
        return self.w

    def map_jets(self, fn) -> "OverlapData":
        if self.is_node:
            return OverlapData(x=fn(self.x), y=fn(self.y))
        return OverlapData(w=fn(self.w))


@dataclass(frozen=True, eq=False)
class TransitionSystem:
    """Chart-gluing data of a neighbourhood germ on a fixed covering.

    ``t`` holds the order-1 constants ``t_jk`` keyed by overlap id; the
    relation ``t_jk w_k = w_j + O(w_j^2)`` holds after :func:`normalize_order1`.
    """

    covering: Covering
    order: int
    data: Mapping[str, OverlapData]
    t: Mapping[str, complex]

    def overlap(self, oid: str) -> Overlap:
        return self.covering.overlap(oid)

    def with_data(self, data: Mapping[str, OverlapData], t: Optional[Mapping[str, complex]] = None) -> "TransitionSystem":
        return TransitionSystem(self.covering, self.order, dict(data), dict(self.t if t is None else t))

    def to_json(self) -> dict:
        out = []
        for oid in sorted(self.data):
            d = self.data[oid]
            t = complex(self.t[oid])
            rec = {"overlap": oid, "t": [t.real, t.imag]}
            if d.is_node:
                rec["x"] = d.x.to_json()
                rec["y"] = d.y.to_json()
            else:
                rec["w"] = d.w.to_json()
            out.append(rec)
        return {"order": self.order, "overlaps": out}

    @classmethod
    def from_json(cls, covering: Covering, data: Mapping) -> "TransitionSystem":
        recs, ts = {}, {}
        for rec in data["overlaps"]:
            oid = rec["overlap"]
            ts[oid] = complex(*rec["t"])
            if "x" in rec:
                recs[oid] = OverlapData(x=WJet.from_json(rec["x"]), y=WJet.from_json(rec["y"]))
            else:
                recs[oid] = OverlapData(w=WJet.from_json(rec["w"]))
        return cls(covering, int(data["order"]), recs, ts)


def expand(system: TransitionSystem, oid: str, order: Optional[int] = None) -> Dict[int, LaurentPoly]:
    """Coefficients ``f_m`` of ``t_jk w_k = w_j + sum_{m>=2} f_m(z_j) w_j^m``."""
    m_max = system.order if order is None else order
    if m_max > system.order:
        raise JetError(f"requested order {m_max} beyond stored truncation {system.order}")
    jet = system.data[oid].target_w() * system.t[oid]
    return {m: jet[m] for m in range(2, m_max + 1)}


def linear_coefficients(system: TransitionSystem) -> Dict[str, LaurentPoly]:
    return {oid: (d.target_w() * system.t[oid])[1] for oid, d in system.data.items()}


def normalize_order1(system: TransitionSystem) -> Tuple[TransitionSystem, Dict[str, int]]:
    """Rescale defining functions so every linear coefficient of ``t_jk w_k`` is exactly 1.

    Linear coefficients must be monomials ``kappa * z_j^e``.  Integer exponent
    potentials ``w_j -> z_j^{p_j} w_j`` are solved on annular smooth charts
    (``e + p_j - eps * p_k = 0`` on every overlap); the remaining constants are
    absorbed into ``t_jk``.  Returns the new system and the nonzero potentials.
    """
    cov = system.covering
    mono: Dict[str, Tuple[complex, int]] = {}
    for oid, c in linear_coefficients(system).items():
        if c.is_zero():
            raise JetError(f"vanishing linear coefficient on {oid} (non-reduced input)")
        if not c.is_monomial():
            raise JetError(f"linear coefficient on {oid} is not a monomial; unsupported unit normalization")
        (e, v), = c.terms()
        mono[oid] = (complex(v), e)

    pot: Dict[str, int] = {}
    adj: Dict[str, List[Tuple[str, str, bool]]] = {c.id: [] for c in cov.charts}
    for oid in system.data:
        ov = cov.overlap(oid)
        adj[ov.j].append((ov.k, oid, True))
        adj[ov.k].append((ov.j, oid, False))
    fixed = [c.id for c in cov.charts if c.kind == NODE or c.is_disk()]
    seeds = fixed + [c.id for c in cov.charts if c.id not in fixed]
    for root in seeds:
        if root in pot:
            continue
        pot[root] = 0
        stack = [root]
        while stack:
            a = stack.pop()
            for b, oid, a_is_j in adj[a]:
                eps = _branch_eps(system, oid)
                e = mono[oid][1]
                want = eps * (pot[a] + e) if a_is_j else pot[a] * eps - e
                if b in pot:
                    if pot[b] != want:
                        raise JetError(f"inconsistent exponent potentials at {oid}; linear data is not a cocycle")
                    continue
                pot[b] = want
                stack.append(b)
    for cid in fixed:
        if pot[cid] != 0:
            raise JetError(f"chart {cid} would need the non-holomorphic rescaling z^{pot[cid]}")

    out = system
    for cid, p in pot.items():
        if p:
            out = rescale_chart(out, cid, LaurentPoly.monomial(1, p))
    t = dict(out.t)
    for oid, c in linear_coefficients(out).items():
        if not (c.is_monomial() and c.lo == 0):
            raise JetError(f"normalization failed on {oid}")
        t[oid] = t[oid] / c.coefficient(0)
    data = {oid: _pin_linear(d, cov.overlap(oid)) for oid, d in out.data.items()}
    return TransitionSystem(cov, out.order, data, t), {cid: p for cid, p in pot.items() if p}


def _pin_linear(d: OverlapData, ov: Overlap) -> OverlapData:
    # round-off in the rescaled linear term would break the exact order-1 invariant
    if d.is_node:
        return d
    w = d.w
    (e, v), = w[1].terms()
    return OverlapData(w=WJet((w[0], LaurentPoly.monomial(v, e, w[1].annulus, w.d_max, w.extended)) + w.coeffs[2:]))


def _branch_eps(system: TransitionSystem, oid: str) -> int:
    return system.covering.overlap(oid).eps


def branch_base(system: TransitionSystem, oid: str) -> Tuple[complex, int]:
    """``(c, eps)`` with ``z_k = c * z_j**eps`` at ``w_j = 0``, read from the stored jets."""
    ov = system.covering.overlap(oid)
    d = system.data[oid]
    if not d.is_node:
        return complex(ov.scale), ov.eps
    base = d.x[0] if ov.branch == "x" else d.y[0]
    if not base.is_monomial() or abs(base.lo) != 1:
        raise JetError(f"node branch coordinate on {oid} is not a monomial z^(+-1)")
    (e, v), = base.terms()
    return complex(v), e


def rescale_chart(system: TransitionSystem, chart_id: str, factor: LaurentPoly) -> TransitionSystem:
    """Replace the defining function of one chart by ``factor * w``.

    Smooth charts take a monomial ``c * z^p``.  Node charts take a unit
    ``u(x)`` (nonnegative exponents, ``u(0) != 0``) realised as ``y -> u(x) y``
    with ``x`` fixed, so the product form ``w = x y`` persists.
    """
    cov = system.covering
    data = {}
    if cov.chart(chart_id).kind == NODE:
        if factor.is_zero() or factor.lo < 0 or factor.coefficient(0) == 0:
            raise JetError("node-chart rescaling needs a unit u(x) with u(0) != 0")
        for oid, d in system.data.items():
            if cov.overlap(oid).k != chart_id:
                data[oid] = d
                continue
            ux = _eval_poly_on_jet(factor, d.x)
            data[oid] = OverlapData(x=d.x, y=d.y * ux)
        return system.with_data(data)
    if not factor.is_monomial():
        raise JetError("smooth-chart rescaling must be a monomial c z^p")
    inv = factor.ipow(-1)
    for oid, d in system.data.items():
        ov = cov.overlap(oid)
        if ov.j == chart_id:
            sub = WJet.identity(system.order, ov.annulus, d.target_w().d_max) * inv.with_annulus(ov.annulus)
            data[oid] = d.map_jets(lambda jet: jet.compose(sub))
        elif ov.k == chart_id:
            data[oid] = OverlapData(w=d.w * factor.substitute_monomial(ov.scale, ov.eps, ov.annulus))
        else:
            data[oid] = d
    return system.with_data(data)


def _eval_poly_on_jet(p: LaurentPoly, jet: WJet) -> WJet:
    if p.lo < 0:
        raise JetError("negative powers of a node coordinate are not holomorphic")
    out = WJet.constant(0, jet.order, jet.annulus, jet.d_max, jet.extended)
    for e in range(p.hi, -1, -1):
        out = out * jet + p.coefficient(e)
    return out


def compose_transitions(system: TransitionSystem, ab: str, bc: str) -> OverlapData:
    """Transition ``a -> c`` obtained by chaining ``a -> b`` (smooth b) then ``b -> c``.

    Both overlaps must have ``b`` as a smooth chart; ``ab`` is read in the
    direction ``a -> b`` and ``bc`` must have expansion chart ``b``.
    """
    cov = system.covering
    o1, o2 = cov.overlap(ab), cov.overlap(bc)
    if o2.j != o1.k:
        raise JetError("overlaps do not chain")
    d1, d2 = system.data[ab], system.data[bc]
    if d1.is_node:
        raise JetError("middle chart must be smooth")
    inner = d1.w
    cb, eb = complex(o1.scale), o1.eps
    return d2.map_jets(lambda jet: jet.substitute_base(cb, eb, o1.annulus).compose(inner))
