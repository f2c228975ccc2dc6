"""Neighbourhood germs built on the standard coverings.

A germ is encoded by its :class:`~uedalab.jets.TransitionSystem`.  The
linearised (product) model glues ``t_jk w_k = w_j`` exactly; every other model
here is obtained from it by holomorphic coordinate changes on the charts and
by perturbing the gluing on overlaps that lie in no triple overlap.
"""

from __future__ import annotations

from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .curve_model import NODE, Covering, build_dual_graph, standard_cycle_covering
from .flat_bundles import FlatCocycle
from .jets import LaurentPoly, OverlapData, SplitFunction, TransitionSystem, WJet


# order-9 node-chart systems reach |exponent| ~ 35 after eight upgrades
MODEL_DMAX = 64


def product_model(L: FlatCocycle, order: int, d_max: int = MODEL_DMAX) -> TransitionSystem:
    """``w_k = t_jk^{-1} w_j`` on every overlap (node charts: ``x y = t^{-1} w_j``).

    ``d_max`` caps the Laurent range of every jet derived from this model.
    """
    cov = L.covering
    data: Dict[str, OverlapData] = {}
    for o in cov.nerve:
        t_inv = 1 / complex(L.edges[o.id])
        ann = o.annulus
        if cov.chart(o.k).kind == NODE:
            base = LaurentPoly.monomial(o.scale, o.eps, ann, d_max)
            other = LaurentPoly.monomial(t_inv / o.scale, -o.eps, ann, d_max)
            b_jet = WJet.from_list([base], order, ann, d_max)
            t_jet = WJet.from_list([0, other], order, ann, d_max)
            data[o.id] = OverlapData(x=b_jet, y=t_jet) if o.branch == "x" else OverlapData(x=t_jet, y=b_jet)
        else:
            data[o.id] = OverlapData(w=WJet.from_list([0, t_inv], order, ann, d_max))
    return TransitionSystem(cov, order, data, {oid: complex(t) for oid, t in L.edges.items()})


def free_overlaps(cov: Covering) -> List[str]:
    """Overlaps lying in no triple overlap; their gluing can be changed freely."""
    used = {o for tri in cov.triples for o in tri.overlaps}
    return [oid for oid in cov.overlap_ids if oid not in used]


def smooth_chart_change(system: TransitionSystem, chart_id: str, phi: WJet) -> TransitionSystem:
    """Replace ``w_j`` by ``phi(z_j, w_j)`` on a smooth chart (``phi = w + O(w^2)``)."""
    cov = system.covering
    if cov.chart(chart_id).kind == NODE:
        raise ValueError("use node_chart_change on node charts")
    phi_inv = phi.inverse()
    data = {}
    for oid, d in system.data.items():
        o = cov.overlap(oid)
        if o.j == chart_id:
            sub = phi_inv.with_annulus(o.annulus)
            data[oid] = d.map_jets(lambda jet: jet.compose(sub))
        elif o.k == chart_id:
            ph = phi.substitute_base(o.scale, o.eps, o.annulus)
            data[oid] = OverlapData(w=ph.compose(d.w))
        else:
            data[oid] = d
    return system.with_data(data)


def node_chart_change(system: TransitionSystem, chart_id: str, h: SplitFunction, m: int) -> TransitionSystem:
    """``y -> y (1 + h(x, y) (x y)^(m-1))`` with ``x`` fixed, i.e. ``w -> w + h w^m``."""
    cov = system.covering
    data = {}
    for oid, d in system.data.items():
        if cov.overlap(oid).k != chart_id:
            data[oid] = d
            continue
        w = d.x * d.y
        factor = h.evaluate_jets(d.x, d.y) * w.ipow(m - 1) + 1
        data[oid] = OverlapData(x=d.x, y=d.y * factor)
    return system.with_data(data)


def add_defect(system: TransitionSystem, oid: str, delta: LaurentPoly, m: int) -> TransitionSystem:
    """Change the gluing on ``oid`` so that ``t_jk w_k`` gains ``delta(z_j) w_j^m``."""
    d = system.data[oid]
    o = system.covering.overlap(oid)
    t_inv = 1 / complex(system.t[oid])
    bump = WJet.from_list([0], system.order, o.annulus)
    coeffs = list(bump.coeffs)
    coeffs[m] = delta.with_annulus(o.annulus) * t_inv
    bump = WJet(tuple(coeffs))
    data = dict(system.data)
    if d.is_node:
        if o.branch == "x":
            data[oid] = OverlapData(x=d.x, y=d.y + bump * d.x.reciprocal())
        else:
            data[oid] = OverlapData(x=d.x + bump * d.y.reciprocal(), y=d.y)
    else:
        data[oid] = OverlapData(w=d.w + bump)
    return system.with_data(data)


# ---------------------------------------------------------------------------
# Random ingredients
# ---------------------------------------------------------------------------


def _rand_c(rng: np.random.Generator, scale: float) -> complex:
    return complex(scale * rng.standard_normal(), scale * rng.standard_normal())


def random_laurent(rng: np.random.Generator, lo: int, hi: int, scale: float = 0.3) -> LaurentPoly:
    return LaurentPoly.from_dict({e: _rand_c(rng, scale) for e in range(lo, hi + 1)})


def _chart_exponents(cov: Covering, chart_id: str, spread: int) -> Tuple[int, int]:
    return (0, spread) if cov.chart(chart_id).is_disk() else (-spread, spread)


def random_smooth_change(rng: np.random.Generator, cov: Covering, chart_id: str, order: int,
                         start: int, terms: int = 2, spread: int = 1, scale: float = 0.3) -> WJet:
    lo, hi = _chart_exponents(cov, chart_id, spread)
    coeffs: List = [0, 1] + [0] * (order - 1)
    for m in range(start, min(start + terms, order + 1)):
        coeffs[m] = random_laurent(rng, lo, hi, scale)
    return WJet.from_list(coeffs, order)


def random_split(rng: np.random.Generator, degree: int = 2, scale: float = 0.3) -> SplitFunction:
    return SplitFunction(_rand_c(rng, scale), tuple(_rand_c(rng, scale) for _ in range(degree)),
                         tuple(_rand_c(rng, scale) for _ in range(degree)))


def random_flat(rng: np.random.Generator, cov: Covering, twisted: bool = True) -> FlatCocycle:
    theta = float(rng.random()) if twisted else 0.0
    gauge = {c: complex(np.exp(2j * np.pi * rng.random())) for c in cov.chart_ids}
    if not build_dual_graph(cov.curve).is_cycle:
        # trees carry only the trivial flat bundle; keep the gauge so the model is still scrambled
        return FlatCocycle.trivial(cov).gauged(gauge)
    return FlatCocycle.from_holonomy(cov, complex(np.exp(2j * np.pi * theta)), None, gauge)


def scramble(rng: np.random.Generator, system: TransitionSystem, start: int, terms: int = 2,
             scale: float = 0.3) -> TransitionSystem:
    """Random holomorphic coordinate changes of order ``>= start`` on every chart."""
    cov = system.covering
    for ch in cov.charts:
        if start > system.order:
            break
        if ch.kind == NODE:
            system = node_chart_change(system, ch.id, random_split(rng, 2, scale), start)
        else:
            phi = random_smooth_change(rng, cov, ch.id, system.order, start, terms, 1, scale)
            system = smooth_chart_change(system, ch.id, phi)
    return system.with_data({oid: d.map_jets(lambda j: j.prune(1e-15)) for oid, d in system.data.items()})


def random_order_n_system(rng: np.random.Generator, cov: Covering, n: int, order: Optional[int] = None,
                          twisted: bool = True, scale: float = 0.3) -> TransitionSystem:
    """An order-``n`` system with random twist, coordinate changes and free-overlap defects."""
    order = n + 2 if order is None else order
    L = random_flat(rng, cov, twisted)
    system = product_model(L, order)
    for oid in free_overlaps(cov):
        system = add_defect(system, oid, random_laurent(rng, -1, 1, scale), n + 1)
    return scramble(rng, system, n + 1, 2, scale)


def planted_type_model(rng: np.random.Generator, cov: Covering, k: int, order: int,
                       delta: complex = 1.0, scale: float = 0.2) -> TransitionSystem:
    """Trivial twist, a defect ``delta w^(k+1)`` with nonzero residue, hidden by order->=2 changes."""
    L = random_flat(rng, cov, twisted=False)
    system = product_model(L, order)
    oid = free_overlaps(cov)[0]
    terms = random_laurent(rng, -1, 1, scale).as_dict()
    terms[0] = delta
    system = add_defect(system, oid, LaurentPoly.from_dict(terms), k + 1)
    return scramble(rng, system, 2, 2, scale)


def linearizable_model(rng: np.random.Generator, cov: Covering, order: int, twisted: bool = False,
                       scale: float = 0.2, d_max: int = MODEL_DMAX) -> TransitionSystem:
    """Product model seen through random coordinate changes: every obstruction vanishes."""
    return scramble(rng, product_model(random_flat(rng, cov, twisted), order, d_max), 2, 2, scale)


def model_from_spec(spec: Mapping) -> TransitionSystem:
    """Build a bundled model from a small JSON record (used by the CLI)."""
    kind = spec.get("model", "product")
    N = int(spec.get("N", 1))
    order = int(spec.get("order", 9))
    seed = int(spec.get("seed", 0))
    _, cov = standard_cycle_covering(N, spec.get("radii"), bool(spec.get("tripleOverlaps", True)))
    rng = np.random.default_rng(seed)
    if kind == "product":
        L = FlatCocycle.from_angle(cov, _angle(spec.get("angle", 0)))
        return product_model(L, order)
    if kind == "linearizable":
        return linearizable_model(rng, cov, order, bool(spec.get("twisted", False)))
    if kind == "planted":
        return planted_type_model(rng, cov, int(spec["k"]), order, complex(spec.get("delta", 1.0)))
    if kind == "random":
        return random_order_n_system(rng, cov, int(spec["n"]), order)
    raise ValueError(f"unknown model kind {kind!r}")


def _angle(a):
    from fractions import Fraction

    if isinstance(a, Mapping):
        return Fraction(int(a["p"]), int(a["q"]))
    return float(a)
