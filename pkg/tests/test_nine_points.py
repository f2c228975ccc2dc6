import json
import math
from fractions import Fraction as F
from importlib import resources

import pytest

from uedalab.nine_points import (
    ANTICANONICAL, CASES, MAZUR_BOUND, NinePointError, PicardClass, PlaneConfig, RESOLUTIONS, UnsupportedCubic,
    WeierstrassCurve, classify_anticanonical, classify_singularities, cover_data, cover_data_from_lattice,
    cycle_holonomy, exact_rank, fit_cubic, interpolation_dimension, nodal_holonomy, zariski_decompose,
)

NODAL = (F(-1), F(0), F(-1), F(0), F(0), F(0), F(0), F(1), F(0), F(0))  # z y^2 - x^3 - x^2 z


def data(name):
    return json.loads(resources.files("uedalab").joinpath("data", name).read_text())


def nodal_pt(t):
    t = F(t)
    return (t * t - 1, t * (t * t - 1), F(1))


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def nodal_cut_points(pairs):
    """Nine points cut on the nodal cubic by three lines, each through two chosen parameters."""
    pts = []
    for t1, t2 in pairs:
        a, b, _ = cross(nodal_pt(t1), nodal_pt(t2))
        # b t^3 + a t^2 - b t + (c - a) = 0 on x = t^2 - 1, y = t x
        t3 = -F(a) / b - t1 - t2
        pts += [nodal_pt(t1), nodal_pt(t2), nodal_pt(t3)]
    return pts


CUT = nodal_cut_points([(F(2), F(3)), (F(5), F(-7, 2)), (F(1, 2), F(9))])


def test_lattice_arithmetic():
    assert ANTICANONICAL.self_intersection() == 0
    line = PicardClass(1, (1, 1, 1, 1, 0, 0, 0, 0, 0))
    assert ANTICANONICAL.dot(line) == -1
    assert line.self_intersection() == -3


def test_pencil_nullspace():
    pts = [tuple(F(v) for v in p) for p in data("pencil.json")["points"]]
    assert len(fit_cubic(pts)) == 2
    # x^3 + y^3 + z^3 = xyz = 0 base points need cube roots of -1: float path
    import cmath
    w = cmath.exp(2j * cmath.pi / 3)
    base = [(0, -1, 1), (0, -w, 1), (0, -w * w, 1), (-1, 0, 1), (-w, 0, 1), (-w * w, 0, 1),
            (1, -1, 0), (1, -w, 0), (1, -w * w, 0)]
    assert len(fit_cubic([tuple(complex(v) for v in p) for p in base])) == 2


def test_fit_recovers_nodal_cubic():
    pts = [nodal_pt(t) for t in (2, 3, 5, F(1, 2), -3, 7, F(-5, 3), F(4, 7), 11)]
    (cub,) = fit_cubic(pts)
    ratio = [a / b for a, b in zip(cub, NODAL) if b]
    assert len(set(ratio)) == 1
    assert all(a == 0 for a, b in zip(cub, NODAL) if b == 0)


def test_interpolation_rank():
    pts = [nodal_pt(t) for t in (2, 3, 5, F(1, 2), -3, 7, F(-5, 3), F(4, 7), 11)]
    assert interpolation_dimension(pts, 3, [1] * 9) == 1
    assert interpolation_dimension(pts[:5], 2, [1] * 5) == 1
    assert exact_rank([[F(1), F(2)], [F(2), F(4)]], 2) == 1


@pytest.mark.parametrize("cubic,case", [
    (NODAL, "nodal"),
    ((F(-1), 0, 0, 0, 0, 0, 0, F(1), 0, 0), "cuspidal"),
    ((0, 0, 0, 0, F(1), 0, 0, 0, 0, 0), "triangle"),
    ((F(-1), 0, 0, 0, 0, F(-1), 0, F(1), 0, 0), "smooth"),
])
def test_cubic_shapes(cubic, case):
    assert classify_singularities([F(c) for c in cubic]).case == case


def test_nodal_singular_point():
    cls = classify_singularities(NODAL)
    assert cls.singular_points == ((0, 0, 1),)


def test_double_line_rejected():
    with pytest.raises(UnsupportedCubic):
        classify_singularities([F(c) for c in (0, 0, 0, 0, 0, F(1), 0, 0, 0, 0)])  # x z^2


def test_concurrent_lines_product_in_nullspace():
    # x (x - y)(x + y) = x^3 - x y^2, three points on each line away from the origin
    pts = [(F(0), F(1), F(1)), (F(0), F(2), F(1)), (F(0), F(-3), F(1)),
           (F(1), F(1), F(1)), (F(2), F(2), F(1)), (F(-1), F(-1), F(2)),
           (F(1), F(-1), F(1)), (F(3), F(-3), F(1)), (F(-2), F(2), F(5))]
    basis = fit_cubic(pts)
    target = (F(1), 0, 0, F(-1), 0, 0, 0, 0, 0, 0)
    assert exact_rank([list(c) for c in basis] + [list(target)], 10) == len(basis)
    assert classify_singularities(target, pts).case == "concurrent_lines"


def test_group_law():
    E = WeierstrassCurve(F(0), F(1))
    P = (F(2), F(3))
    assert E.add(P, None) == P
    assert E.negate(P) == (F(2), F(-3))
    assert E.mul(2, P) == (F(0), F(1))
    assert E.mul(3, P) == (F(-1), F(0))
    assert E.mul(6, P) is None
    assert E.is_torsion(P, 6) == 6
    assert WeierstrassCurve(F(0), F(-2)).is_torsion((F(3), F(5)), MAZUR_BOUND) is None


def test_singular_weierstrass_rejected():
    with pytest.raises(NinePointError):
        WeierstrassCurve(F(-3), F(2))


def test_cut_points_have_trivial_holonomy():
    for seed in range(3):
        assert abs(nodal_holonomy(NODAL, CUT, seed=seed).alpha - 1) < 1e-10


def test_planted_holonomy_and_invariances():
    cfg = PlaneConfig.from_json(data("nodal_alpha2.json"))
    base = nodal_holonomy(NODAL, cfg.points, seed=0).alpha
    assert abs(abs(base) - 0.5) < 1e-9 or abs(abs(base) - 2) < 1e-9
    for seed in (1, 2, 3):
        assert abs(nodal_holonomy(NODAL, cfg.points, seed=seed).alpha - base) < 1e-9
    assert abs(nodal_holonomy(NODAL, cfg.points, reference=[(1, 2, 3), (4, -1, 7), (2, 5, -3)]).alpha - base) < 1e-9
    assert abs(nodal_holonomy(NODAL, cfg.points, mobius=2.5 - 1j).alpha - base) < 1e-9
    perm = list(reversed(cfg.points))
    assert abs(nodal_holonomy(NODAL, perm, seed=0).alpha - base) < 1e-9


def test_node_among_points_rejected():
    with pytest.raises(NinePointError):
        nodal_holonomy(NODAL, CUT[:8] + [(F(0), F(0), F(1))])


def test_triangle_cycle_holonomy():
    # three points on each coordinate line, cut by a second cubic -> alpha = 1
    pts = [(F(0), F(1), F(1)), (F(0), F(2), F(1)), (F(0), F(3), F(1)),
           (F(1), F(0), F(1)), (F(2), F(0), F(1)), (F(-3), F(0), F(1)),
           (F(1), F(1), F(0)), (F(1), F(2), F(0)), (F(1), F(3), F(0))]
    cfg = PlaneConfig.build(pts, [0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
    cls = classify_singularities(cfg.cubic, cfg.points)
    h = cycle_holonomy(cls, cfg.points)
    assert h.residual < 1e-9
    for seed in (1, 2):
        assert abs(cycle_holonomy(cls, cfg.points, seed).alpha - h.alpha) < 1e-9


def test_generic_points_nef():
    pts = [nodal_pt(t) for t in (2, 3, 5, F(1, 2), -3, 7, F(-5, 3), F(4, 7), 11)]
    z = zariski_decompose(pts)
    assert z.nef and not z.negative_part


def test_four_collinear_not_nef():
    cfg = PlaneConfig.from_json(data("four_collinear.json"))
    z = zariski_decompose(cfg.points)
    assert not z.nef
    (cand, coef), = z.negative_part
    assert cand.label == "line" and cand.cls == PicardClass(1, (1, 1, 1, 1, 0, 0, 0, 0, 0))
    assert coef == F(1, 3) and z.positive_part_semi_ample


def test_three_collinear_still_nef():
    z = zariski_decompose(CUT)
    assert z.nef


def test_cover_data_cusp():
    cd = cover_data_from_lattice(RESOLUTIONS["cuspidal"]())
    assert (cd.a, cd.b, cd.b_nu, cd.preimage_counts, cd.deck_group) == (6, 1, (2, 3, 6), (3, 2, 1), "Z/6")


@pytest.mark.parametrize("case,b_nu", [("line_conic_tangent", (2, 4, 4)), ("concurrent_lines", (3, 3, 3))])
def test_cover_data_other_resolutions(case, b_nu):
    cd = cover_data_from_lattice(RESOLUTIONS[case]())
    assert sorted(cd.b_nu) == sorted(b_nu)
    assert cd.a * cd.b == sum(cd.a_nu)
    assert all(cd.a == u * v for u, v in zip(cd.a_nu, cd.b_nu))


def test_cover_gcd_rejected():
    with pytest.raises(NinePointError):
        cover_data(2, [2])


def test_pipeline_pencil():
    rep = classify_anticanonical(PlaneConfig.from_json(data("pencil.json")))
    assert rep.theorem_case == "i" and rep.evidence["nullSpaceDimension"] == 2


def test_pipeline_planted_nodal():
    rep = classify_anticanonical(PlaneConfig.from_json(data("nodal_alpha2.json")))
    assert rep.theorem_case == "iii" and rep.metric_descriptor == "|f|^{-2}"


def test_pipeline_four_collinear():
    rep = classify_anticanonical(PlaneConfig.from_json(data("four_collinear.json")))
    assert rep.theorem_case == "v" and "line" in rep.metric_descriptor


def test_pipeline_torsion_smooth():
    E = WeierstrassCurve(F(-2), F(0))
    P, T = (F(2), F(2)), (F(0), F(0))
    pts = [E.mul(k, P) for k in (1, 2, 3, 4)] + [E.add(T, E.mul(-k, P)) for k in (1, 2, 3)] + [E.mul(-4, P)]
    cfg = PlaneConfig.build([(x, y, F(1)) for x, y in pts] + [(F(0), F(1), F(0))])
    rep = classify_anticanonical(cfg)
    assert rep.theorem_case == "i" and rep.normal_bundle["torsionOrder"] == 2


def test_pipeline_cut_nodal_is_flat_torsion():
    rep = classify_anticanonical(PlaneConfig.build(CUT))
    assert rep.theorem_case == "i"


def test_projective_invariance():
    cfg = PlaneConfig.from_json(data("nodal_alpha2.json"))
    M = [[1, 2, 0], [0, 1, 3], [1, 0, 1]]
    a = classify_anticanonical(cfg)
    b = classify_anticanonical(cfg.transformed(M))
    assert a.theorem_case == b.theorem_case
    # a coordinate change may swap the two node branches, which inverts alpha
    la, lb = math.log(a.normal_bundle["absAlpha"]), math.log(b.normal_bundle["absAlpha"])
    assert abs(abs(la) - abs(lb)) < 1e-9


def test_config_validation():
    pts = data("pencil.json")["points"]
    with pytest.raises(NinePointError):
        PlaneConfig.from_json({"points": pts[:8]})
    with pytest.raises(NinePointError):
        PlaneConfig.from_json({"points": pts[:8] + [pts[0]]})


def test_case_ids_cover_all_shapes():
    assert len(CASES) == 7 and set(RESOLUTIONS) <= set(CASES)
