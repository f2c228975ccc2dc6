"""Nodal curves, dual graphs and finite chart coverings with annular overlaps.

Every genus-0 component carries a global coordinate ``zeta``.  A chart is a
list of *pieces*; each piece lives on one component over a radial band
``lo < |zeta| < hi`` (``lo = 0`` or ``hi = inf`` for disks) and carries the
base coordinate ``c * zeta**sigma``.  Smooth charts have one piece, node
charts have two (the ``x``- and ``y``-branch).  The nerve is recomputed from
the bands, one overlap record per connected component of ``U_j & U_k``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

SMOOTH = "smoothDisk"
NODE = "nodeChart"

DEFAULT_RADII = {"node": 0.6, "a_in": 0.3, "a_out": 2.0, "b_in": 1.2, "b_out": 3.0}
# Variant whose nerve has no triple overlaps: the chart S^a stops short of K_{v+1}.
PURE_CYCLE_RADII = {"node": 0.6, "a_in": 0.3, "a_out": 1.5, "b_in": 1.2, "b_out": 3.0}


class CurveError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Curves and dual graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    id: str
    genus: int = 0
    degree: Optional[int] = None


@dataclass(frozen=True)
class Branch:
    component: str
    point: str


@dataclass(frozen=True)
class Node:
    id: str
    branches: Tuple[Branch, Branch]

    @property
    def self_node(self) -> bool:
        return self.branches[0].component == self.branches[1].component


@dataclass(frozen=True)
class NodalCurve:
    components: Tuple[Component, ...]
    nodes: Tuple[Node, ...] = ()

    def __post_init__(self) -> None:
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise CurveError("duplicate component ids")
        if not ids:
            raise CurveError("a curve needs at least one component")
        for c in self.components:
            if c.genus not in (0, 1):
                raise CurveError(f"component {c.id}: genus must be 0 or 1")
        node_ids = [n.id for n in self.nodes]
        if len(set(node_ids)) != len(node_ids):
            raise CurveError("duplicate node ids")
        marked: Dict[str, set] = {c: set() for c in ids}
        for n in self.nodes:
            if len(n.branches) != 2:
                raise CurveError(f"node {n.id} must have exactly two branches")
            for b in n.branches:
                if b.component not in marked:
                    raise CurveError(f"node {n.id} references unknown component {b.component}")
                if b.point in marked[b.component]:
                    raise CurveError(f"marked point {b.point} repeated on component {b.component}")
                marked[b.component].add(b.point)

    def component(self, cid: str) -> Component:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)

    @property
    def rational(self) -> bool:
        return all(c.genus == 0 for c in self.components)

    def to_json(self) -> dict:
        comps = []
        for c in self.components:
            rec = {"id": c.id, "genus": c.genus}
            if c.degree is not None:
                rec["degree"] = c.degree
            comps.append(rec)
        nodes = [{"id": n.id, "branches": [{"component": b.component, "point": b.point} for b in n.branches]}
                 for n in self.nodes]
        return {"components": comps, "nodes": nodes}

    @classmethod
    def from_json(cls, data: Mapping) -> "NodalCurve":
        try:
            comps = tuple(Component(str(c["id"]), int(c.get("genus", 0)), c.get("degree")) for c in data["components"])
            nodes = tuple(
                Node(str(n["id"]), tuple(Branch(str(b["component"]), str(b["point"])) for b in n["branches"]))
                for n in data.get("nodes", [])
            )
        except (KeyError, TypeError) as exc:
            raise CurveError(f"malformed curve record: {exc}") from exc
        return cls(comps, nodes)


@dataclass(frozen=True)
class DualGraph:
    vertices: Tuple[str, ...]
    edges: Tuple[Tuple[str, str, str], ...]  # (node id, u, v)

    @property
    def euler_number(self) -> int:
        return len(self.vertices) - len(self.edges)

    def degree(self, v: str) -> int:
        return sum((u == v) + (w == v) for _, u, w in self.edges)

    @property
    def is_tree(self) -> bool:
        return self.euler_number == 1

    @property
    def is_cycle(self) -> bool:
        return self.euler_number == 0 and all(self.degree(v) == 2 for v in self.vertices)

    @property
    def is_chain(self) -> bool:
        return self.is_tree and all(self.degree(v) <= 2 for v in self.vertices)


def build_dual_graph(curve: NodalCurve) -> DualGraph:
    verts = tuple(c.id for c in curve.components)
    edges = tuple((n.id, n.branches[0].component, n.branches[1].component) for n in curve.nodes)
    adj: Dict[str, set] = {v: set() for v in verts}
    for _, u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = {verts[0]}
    queue = deque([verts[0]])
    while queue:
        for b in adj[queue.popleft()]:
            if b not in seen:
                seen.add(b)
                queue.append(b)
    if len(seen) != len(verts):
        missing = sorted(set(verts) - seen)
        raise CurveError(f"curve is disconnected; unreachable components {missing}")
    return DualGraph(verts, edges)


def cycle_order(curve: NodalCurve) -> List[Tuple[str, str, str]]:
    """Oriented traversal ``[(component, incoming node, outgoing node), ...]`` of a cycle curve.

    A component enters through the node where it is branch 0 and leaves
    through the node where it is branch 1.
    """
    g = build_dual_graph(curve)
    if not g.is_cycle:
        raise CurveError("dual graph is not a cycle")
    incoming = {n.branches[0].component: n for n in curve.nodes}
    outgoing = {n.branches[1].component: n for n in curve.nodes}
    if len(incoming) != len(curve.components) or len(outgoing) != len(curve.components):
        raise CurveError("cycle nodes are not consistently oriented (branch 0 / branch 1)")
    out = []
    cid = curve.components[0].id
    for _ in curve.components:
        n_out = outgoing[cid]
        out.append((cid, incoming[cid].id, n_out.id))
        cid = n_out.branches[0].component
    if cid != curve.components[0].id:
        raise CurveError("cycle traversal did not close")
    return out


# ---------------------------------------------------------------------------
# Coverings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    """Band ``lo < |zeta| < hi`` of a component with base coordinate ``scale * zeta**sigma``."""

    component: str
    lo: float
    hi: float
    sigma: int = 1
    scale: complex = 1.0
    label: str = "z"

    def __post_init__(self) -> None:
        if not (0 <= self.lo < self.hi):
            raise CurveError(f"empty band ({self.lo}, {self.hi})")
        if self.sigma not in (1, -1):
            raise CurveError("sigma must be +1 or -1")

    def coordinate_band(self) -> Tuple[float, float]:
        """Radial range of the base coordinate over this piece."""
        return _image_band(self.lo, self.hi, self.sigma, abs(self.scale))

    @property
    def contains_zero(self) -> bool:
        return (self.sigma == 1 and self.lo == 0) or (self.sigma == -1 and math.isinf(self.hi))


def _image_band(lo: float, hi: float, sigma: int, scale: float) -> Tuple[float, float]:
    if sigma == 1:
        return scale * lo, scale * hi
    inv = lambda r: 0.0 if math.isinf(r) else (math.inf if r == 0 else 1.0 / r)
    return scale * inv(hi), scale * inv(lo)


@dataclass(frozen=True)
class Chart:
    id: str
    kind: str
    pieces: Tuple[Piece, ...]
    node: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind == SMOOTH and len(self.pieces) != 1:
            raise CurveError(f"smooth chart {self.id} must have one piece")
        if self.kind == NODE:
            if len(self.pieces) != 2 or {p.label for p in self.pieces} != {"x", "y"}:
                raise CurveError(f"node chart {self.id} needs an x- and a y-piece")
            for p in self.pieces:
                if not p.contains_zero:
                    raise CurveError(f"node chart {self.id}: branch {p.label} must contain the node")

    @property
    def components(self) -> Tuple[str, ...]:
        return tuple(p.component for p in self.pieces)

    @property
    def coordinates(self) -> Tuple[str, ...]:
        return tuple(p.label for p in self.pieces)

    def piece(self, label: str) -> Piece:
        for p in self.pieces:
            if p.label == label:
                return p
        raise KeyError(label)

    def is_disk(self) -> bool:
        return any(p.lo == 0 or math.isinf(p.hi) for p in self.pieces)

    @property
    def radius(self) -> Tuple[float, float]:
        return self.pieces[0].coordinate_band()


@dataclass(frozen=True)
class Overlap:
    """One connected component of ``U_j & U_k``; ``j`` is the expansion chart.

    On the overlap ``z_k = scale * z_j**eps``; ``annulus`` is the radial range
    of ``z_j``; ``branch`` names the piece of ``k`` (``x``/``y`` on node charts).
    """

    id: str
    j: str
    k: str
    branch: str
    component: str
    band: Tuple[float, float]
    annulus: Tuple[float, float]
    eps: int
    scale: complex

    def annulus_in_k(self) -> Tuple[float, float]:
        return _image_band(self.annulus[0], self.annulus[1], self.eps, abs(self.scale))


@dataclass(frozen=True)
class TripleOverlap:
    charts: Tuple[str, str, str]
    overlaps: Tuple[str, str, str]  # ids of (ab, bc, ac)
    component: str
    band: Tuple[float, float]


@dataclass(frozen=True)
class NormalizationChart:
    id: str
    chart: str
    label: str
    component: str


@dataclass(frozen=True, eq=False)
class Covering:
    curve: NodalCurve
    charts: Tuple[Chart, ...]
    radii: Mapping[str, float] = field(default_factory=dict)
    nerve: Tuple[Overlap, ...] = ()
    triples: Tuple[TripleOverlap, ...] = ()

    def __post_init__(self) -> None:
        if not self.nerve:
            nerve, triples = _compute_nerve(self.curve, self.charts)
            object.__setattr__(self, "nerve", nerve)
            object.__setattr__(self, "triples", triples)
        object.__setattr__(self, "_chart_index", {c.id: c for c in self.charts})
        object.__setattr__(self, "_overlap_index", {o.id: o for o in self.nerve})

    def chart(self, cid: str) -> Chart:
        return self._chart_index[cid]

    def overlap(self, oid: str) -> Overlap:
        return self._overlap_index[oid]

    @property
    def chart_ids(self) -> Tuple[str, ...]:
        return tuple(c.id for c in self.charts)

    @property
    def overlap_ids(self) -> Tuple[str, ...]:
        return tuple(o.id for o in self.nerve)

    def normalization_charts(self) -> Tuple[NormalizationChart, ...]:
        out = []
        for c in self.charts:
            if c.kind == NODE:
                for p in c.pieces:
                    out.append(NormalizationChart(f"{c.id}#{p.label}", c.id, p.label, p.component))
            else:
                out.append(NormalizationChart(c.id, c.id, "z", c.pieces[0].component))
        return tuple(out)

    def normalization_piece(self, chart_id: str, label: str) -> str:
        return f"{chart_id}#{label}" if self.chart(chart_id).kind == NODE else chart_id

    def overlap_normalization(self, oid: str) -> Tuple[str, str]:
        o = self.overlap(oid)
        return self.normalization_piece(o.j, "z"), self.normalization_piece(o.k, o.branch)

    def cycle_path(self) -> List[Tuple[str, int]]:
        """Oriented essential loop in the nerve as ``[(overlap id, +1 | -1), ...]``.

        ``+1`` means the overlap is crossed from its ``j`` chart to its ``k`` chart.
        """
        order = cycle_order(self.curve)
        node_chart = {c.node: c.id for c in self.charts if c.kind == NODE}
        path: List[Tuple[str, int]] = []
        for comp, n_in, n_out in order:
            start = (node_chart[n_in], "x")
            goal = (node_chart[n_out], "y")
            path.extend(self._component_path(comp, start, goal))
        return path

    def _component_path(self, comp: str, start: Tuple[str, str], goal: Tuple[str, str]) -> List[Tuple[str, int]]:
        # vertices are (chart, piece label) on one component
        adj: Dict[Tuple[str, str], List[Tuple[Tuple[str, str], str, int]]] = {}
        for o in self.nerve:
            if o.component != comp:
                continue
            a, b = (o.j, "z"), (o.k, o.branch or "z")
            adj.setdefault(a, []).append((b, o.id, 1))
            adj.setdefault(b, []).append((a, o.id, -1))
        prev: Dict[Tuple[str, str], Optional[Tuple[Tuple[str, str], str, int]]] = {start: None}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            if v == goal:
                break
            for nb, oid, d in sorted(adj.get(v, []), key=lambda t: t[1]):
                if nb not in prev:
                    prev[nb] = (v, oid, d)
                    queue.append(nb)
        if goal not in prev:
            raise CurveError(f"no chart path across component {comp}")
        steps = []
        v = goal
        while prev[v] is not None:
            u, oid, d = prev[v]
            steps.append((oid, d))
            v = u
        return steps[::-1]

    def refine(self, chart_id: str, cut: Tuple[float, float], new_ids: Optional[Tuple[str, str]] = None) -> "Covering":
        """Split a smooth chart ``lo<|zeta|<hi`` into ``(lo, cut[1])`` and ``(cut[0], hi)``."""
        ch = self.chart(chart_id)
        if ch.kind != SMOOTH:
            raise CurveError("only smooth charts can be refined")
        p = ch.pieces[0]
        m1, m2 = cut
        if not (p.lo < m1 < m2 < p.hi):
            raise CurveError(f"cut {cut} must satisfy lo < m1 < m2 < hi for band ({p.lo}, {p.hi})")
        id1, id2 = new_ids or (f"{chart_id}.1", f"{chart_id}.2")
        c1 = Chart(id1, SMOOTH, (replace(p, hi=m2),))
        c2 = Chart(id2, SMOOTH, (replace(p, lo=m1),))
        charts = []
        for c in self.charts:
            charts.extend([c1, c2] if c.id == chart_id else [c])
        return Covering(self.curve, tuple(charts), dict(self.radii))

    def to_json(self) -> dict:
        out = self.curve.to_json()
        charts = []
        for c in self.charts:
            rec = {"id": c.id, "kind": c.kind, "pieces": [_piece_json(p) for p in c.pieces]}
            if c.node is not None:
                rec["node"] = c.node
            charts.append(rec)
        out["charts"] = charts
        out["nerve"] = [
            {
                "id": o.id, "j": o.j, "k": o.k, "branch": o.branch, "component": o.component,
                "annulus": [o.annulus[0], o.annulus[1]], "eps": o.eps,
                "scale": [complex(o.scale).real, complex(o.scale).imag],
            }
            for o in self.nerve
        ]
        out["radii"] = {k: self.radii[k] for k in sorted(self.radii)}
        out["schema"] = "curve-config v1"
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "Covering":
        curve = NodalCurve.from_json(data)
        try:
            charts = tuple(
                Chart(str(c["id"]), str(c["kind"]), tuple(_piece_from_json(p) for p in c["pieces"]), c.get("node"))
                for c in data["charts"]
            )
        except (KeyError, TypeError) as exc:
            raise CurveError(f"malformed chart record: {exc}") from exc
        cov = cls(curve, charts, dict(data.get("radii", {})))
        if "nerve" in data:
            given = {(o["id"], o["j"], o["k"]) for o in data["nerve"]}
            derived = {(o.id, o.j, o.k) for o in cov.nerve}
            if given != derived:
                raise CurveError("nerve field disagrees with the nerve derived from the charts")
        return cov


def _fmt_radius(r: float) -> Optional[float]:
    return None if math.isinf(r) else r


def _piece_json(p: Piece) -> dict:
    s = complex(p.scale)
    return {"component": p.component, "lo": p.lo, "hi": _fmt_radius(p.hi), "sigma": p.sigma,
            "scale": [s.real, s.imag], "label": p.label}


def _piece_from_json(d: Mapping) -> Piece:
    hi = math.inf if d.get("hi") is None else float(d["hi"])
    sc = d.get("scale", [1.0, 0.0])
    scale = complex(sc[0], sc[1])
    if scale.imag == 0:
        scale = scale.real
    return Piece(str(d["component"]), float(d["lo"]), hi, int(d.get("sigma", 1)), scale, str(d.get("label", "z")))


def _band_intersection(a: Piece, b: Piece) -> Optional[Tuple[float, float]]:
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    return (lo, hi) if lo < hi else None


def _compute_nerve(curve: NodalCurve, charts: Sequence[Chart]) -> Tuple[Tuple[Overlap, ...], Tuple[TripleOverlap, ...]]:
    comp_ids = {c.id for c in curve.components}
    for ch in charts:
        for p in ch.pieces:
            if p.component not in comp_ids:
                raise CurveError(f"chart {ch.id} references unknown component {p.component}")
            if curve.component(p.component).genus != 0:
                raise CurveError("charts are only supported on rational components")
    order = {c.id: i for i, c in enumerate(charts)}
    overlaps: List[Overlap] = []
    for a_idx, a in enumerate(charts):
        for b in charts[a_idx + 1:]:
            pairs = [(pa, pb) for pa in a.pieces for pb in b.pieces if pa.component == pb.component]
            for pa, pb in pairs:
                band = _band_intersection(pa, pb)
                if band is None:
                    continue
                if a.kind == NODE and b.kind == NODE:
                    raise CurveError(f"node charts {a.id} and {b.id} overlap")
                j, k, pj, pk = (a, b, pa, pb) if a.kind == SMOOTH else (b, a, pb, pa)
                if band[0] == 0 or math.isinf(band[1]):
                    raise CurveError(f"overlap of {j.id} and {k.id} is not an annulus")
                eps = pj.sigma * pk.sigma
                scale = pk.scale * pj.scale ** (-eps)
                ann = _image_band(band[0], band[1], pj.sigma, abs(pj.scale))
                branch = pk.label if k.kind == NODE else ""
                oid = f"{j.id}|{k.id}" + (f"|{branch}" if branch else "")
                overlaps.append(Overlap(oid, j.id, k.id, branch, pj.component, band, ann, eps, scale))
    overlaps.sort(key=lambda o: (order[o.j], order[o.k], o.branch))
    # triple overlaps, at the level of pieces
    by_pair: Dict[Tuple[str, str, str, str], Overlap] = {}
    for o in overlaps:
        key_a = (o.j, "z")
        key_b = (o.k, o.branch or "z")
        by_pair[key_a + key_b] = o
        by_pair[key_b + key_a] = o
    pieces = [((ch.id, p.label if ch.kind == NODE else "z"), p) for ch in charts for p in ch.pieces]
    triples: List[TripleOverlap] = []
    for i1 in range(len(pieces)):
        for i2 in range(i1 + 1, len(pieces)):
            for i3 in range(i2 + 1, len(pieces)):
                (ka, pa), (kb, pb), (kc, pc) = pieces[i1], pieces[i2], pieces[i3]
                if len({ka[0], kb[0], kc[0]}) < 3:
                    continue
                if not (pa.component == pb.component == pc.component):
                    continue
                lo = max(pa.lo, pb.lo, pc.lo)
                hi = min(pa.hi, pb.hi, pc.hi)
                if lo >= hi:
                    continue
                ab, bc, ac = by_pair[ka + kb], by_pair[kb + kc], by_pair[ka + kc]
                triples.append(TripleOverlap((ka[0], kb[0], kc[0]), (ab.id, bc.id, ac.id), pa.component, (lo, hi)))
    return tuple(overlaps), tuple(triples)


# ---------------------------------------------------------------------------
# Standard models
# ---------------------------------------------------------------------------


def _radii(radii: Optional[Mapping[str, float]], triple_overlaps: bool) -> Dict[str, float]:
    base = dict(DEFAULT_RADII if triple_overlaps else PURE_CYCLE_RADII)
    if radii:
        base.update(radii)
    r, a_in, a_out, b_in, b_out = base["node"], base["a_in"], base["a_out"], base["b_in"], base["b_out"]
    if not (0 < a_in < r < 1 and b_in < a_out < b_out and 1 / r < b_out and a_in < b_in):
        raise CurveError(f"inconsistent radii {base}")
    if triple_overlaps and not a_out > 1 / r:
        raise CurveError("triple-overlap covering needs a_out > 1/node")
    if not triple_overlaps and not a_out < 1 / r:
        raise CurveError("pure-cycle covering needs a_out < 1/node")
    return base


def _component_charts(cid: str, idx: int, r: Dict[str, float], left_node: bool, right_node: bool) -> List[Chart]:
    a_lo = r["a_in"] if left_node else 0.0
    b_hi = r["b_out"] if right_node else math.inf
    return [
        Chart(f"Sa{idx}", SMOOTH, (Piece(cid, a_lo, r["a_out"], 1),)),
        Chart(f"Sb{idx}", SMOOTH, (Piece(cid, r["b_in"], b_hi, -1),)),
    ]


def _node_chart(idx: int, comp_x: str, comp_y: str, r: float) -> Chart:
    return Chart(f"K{idx}", NODE, (Piece(comp_x, 0.0, r, 1, 1.0, "x"), Piece(comp_y, 1 / r, math.inf, -1, 1.0, "y")),
                 node=f"n{idx}")


def standard_cycle_covering(N: int, radii: Optional[Mapping[str, float]] = None,
                            triple_overlaps: bool = True) -> Tuple[NodalCurve, Covering]:
    """Cycle of ``N`` rational curves: node ``v`` joins ``zeta_v = 0`` and ``zeta_{v-1} = inf``."""
    if not isinstance(N, int) or N < 1:
        raise CurveError("N must be a positive integer")
    r = _radii(radii, triple_overlaps)
    comps = tuple(Component(f"C{v}") for v in range(N))
    nodes = tuple(
        Node(f"n{v}", (Branch(f"C{v}", "0"), Branch(f"C{(v - 1) % N}", "inf"))) for v in range(N)
    )
    curve = NodalCurve(comps, nodes)
    charts: List[Chart] = []
    for v in range(N):
        charts.append(_node_chart(v, f"C{v}", f"C{(v - 1) % N}", r["node"]))
    for v in range(N):
        charts.extend(_component_charts(f"C{v}", v, r, True, True))
    return curve, Covering(curve, tuple(charts), r)


def standard_chain_covering(N: int, radii: Optional[Mapping[str, float]] = None,
                            triple_overlaps: bool = True) -> Tuple[NodalCurve, Covering]:
    """Chain of ``N`` rational curves (a tree dual graph); node ``v`` joins ``zeta_v = 0`` and ``zeta_{v-1} = inf``."""
    if not isinstance(N, int) or N < 1:
        raise CurveError("N must be a positive integer")
    r = _radii(radii, triple_overlaps)
    comps = tuple(Component(f"C{v}") for v in range(N))
    nodes = tuple(Node(f"n{v}", (Branch(f"C{v}", "0"), Branch(f"C{v - 1}", "inf"))) for v in range(1, N))
    curve = NodalCurve(comps, nodes)
    charts: List[Chart] = [_node_chart(v, f"C{v}", f"C{v - 1}", r["node"]) for v in range(1, N)]
    for v in range(N):
        charts.extend(_component_charts(f"C{v}", v, r, v > 0, v < N - 1))
    return curve, Covering(curve, tuple(charts), r)


def load_covering(path: str) -> Covering:
    with open(path, "r", encoding="utf-8") as fh:
        return Covering.from_json(json.load(fh))


def dumps_covering(cov: Covering) -> str:
    return json.dumps(cov.to_json(), sort_keys=True, indent=2)
