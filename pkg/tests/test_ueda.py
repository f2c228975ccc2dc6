from fractions import Fraction

import numpy as np
import pytest

from uedalab.curve_model import standard_chain_covering, standard_cycle_covering
from uedalab.flat_bundles import FlatCocycle, cohomology_dims
from uedalab.jets import LaurentPoly, expand
from uedalab.models import free_overlaps, linearizable_model, planted_type_model, product_model, random_order_n_system
from uedalab.ueda import (
    ObstructionCocycle, OrderNSystem, OrderViolation, UedaError, closed_form_check, coboundary, cocycle_residual,
    compute_type, obstruction, residue_functional, solve_coboundary, upgrade,
)

GOLDEN = (5 ** 0.5 - 1) / 2


def rand_poly(rng, lo=-2, hi=2, scale=0.5):
    return LaurentPoly.from_dict({e: complex(*rng.normal(0, scale, 2)) for e in range(lo, hi + 1)})


def test_product_model_has_zero_obstruction():
    _, cov = standard_cycle_covering(2)
    osys = OrderNSystem(product_model(FlatCocycle.from_angle(cov, Fraction(1, 3)), 6), 3)
    assert obstruction(osys).max_coeff() < 1e-14


def test_order_violation_detected():
    _, cov = standard_cycle_covering(2)
    system = random_order_n_system(np.random.default_rng(0), cov, 1)
    with pytest.raises(OrderViolation):
        obstruction(OrderNSystem(system, 3))


@pytest.mark.parametrize("seed", range(5))
def test_closed_form_agrees_on_random_order2_systems(seed):
    _, cov = standard_cycle_covering(3)
    osys = OrderNSystem(random_order_n_system(np.random.default_rng(seed), cov, 2), 2)
    c = obstruction(osys)
    assert cocycle_residual(c) < 1e-9
    assert closed_form_check(osys, c) < 1e-9


def test_planted_cocycle_single_entry():
    _, cov = standard_cycle_covering(2, triple_overlaps=False)
    system = product_model(FlatCocycle.trivial(cov), 4)
    oid = free_overlaps(cov)[0]
    from uedalab.models import add_defect
    osys = OrderNSystem(add_defect(system, oid, LaurentPoly.from_dict({0: 1.0}), 2), 1)
    c = obstruction(osys)
    assert c.values[oid].coefficient(0) == pytest.approx(1.0)
    assert all(v.max_abs() < 1e-14 for k, v in c.values.items() if k != oid)
    assert residue_functional(c) == pytest.approx(1.0) or residue_functional(c) == pytest.approx(-1.0)


@pytest.mark.parametrize("seed", range(5))
def test_coboundary_round_trip(seed):
    rng = np.random.default_rng(seed)
    _, cov = standard_cycle_covering(2)
    system = product_model(FlatCocycle.from_angle(cov, GOLDEN), 4)
    n = 2
    F = {}
    for ch in cov.charts:
        if ch.kind == "nodeChart":
            from uedalab.jets import SplitFunction
            F[ch.id] = SplitFunction(complex(*rng.normal(0, 0.5, 2)), tuple(complex(*rng.normal(0, .5, 2)) for _ in range(2)),
                                     tuple(complex(*rng.normal(0, .5, 2)) for _ in range(2)))
        else:
            lo = 0 if ch.radius[0] == 0 else -2
            hi = 0 if ch.radius[1] == float("inf") else 2
            F[ch.id] = rand_poly(rng, lo, hi)
    vals = coboundary(cov, system, F, n)
    c = ObstructionCocycle(cov, n, {k: v * (1 / n) for k, v in vals.items()}, dict(system.t))
    sol = solve_coboundary(c, system)
    assert sol.solved and sol.residual < 1e-10
    back = coboundary(cov, system, sol.cochain, n)
    assert max((back[k] - vals[k]).max_abs() for k in vals) < 1e-10


def _pure_cycle_cocycle(rng, N, kill_residue):
    _, cov = standard_cycle_covering(N, triple_overlaps=False)
    system = product_model(FlatCocycle.trivial(cov), 4)
    vals = {oid: rand_poly(rng, -1, 1) for oid in cov.overlap_ids}
    c = ObstructionCocycle(cov, 1, vals, dict(system.t))
    if kill_residue:
        r = residue_functional(c)
        oid, d = cov.cycle_path()[0]
        vals[oid] = vals[oid] - LaurentPoly.from_dict({0: r * d})
        c = ObstructionCocycle(cov, 1, vals, dict(system.t))
    return c, system


def test_residue_functional_matches_solvability():
    rng = np.random.default_rng(7)
    for trial in range(100):
        c, system = _pure_cycle_cocycle(rng, 1 + trial % 3, kill_residue=trial % 2 == 0)
        res = residue_functional(c)
        sol = solve_coboundary(c, system, 1e-8)
        assert (abs(res) < 1e-10) == sol.solved


def test_residue_functional_needs_trivial_twist():
    _, cov = standard_cycle_covering(2)
    c = ObstructionCocycle(cov, 1, {oid: LaurentPoly.zero() for oid in cov.overlap_ids},
                           dict(product_model(FlatCocycle.from_angle(cov, GOLDEN), 3).t))
    with pytest.raises(UedaError):
        residue_functional(c)


def test_twisted_cycle_always_solvable():
    rng = np.random.default_rng(3)
    curve, cov = standard_cycle_covering(2, triple_overlaps=False)
    L = FlatCocycle.from_angle(cov, GOLDEN)
    assert cohomology_dims(curve, L)["O"][1] == 0
    system = product_model(L, 4)
    for _ in range(5):
        vals = {oid: rand_poly(rng, -1, 1) for oid in cov.overlap_ids}
        assert solve_coboundary(ObstructionCocycle(cov, 1, vals, dict(system.t)), system).solved


def test_trivial_upgrade_is_identity():
    _, cov = standard_cycle_covering(2)
    osys = OrderNSystem(random_order_n_system(np.random.default_rng(1), cov, 2, order=5), 2)
    zero = solve_coboundary(ObstructionCocycle(cov, 2, {oid: LaurentPoly.zero() for oid in cov.overlap_ids},
                                               dict(osys.system.t)), osys.system).cochain
    up = upgrade(osys, zero)
    for oid in cov.overlap_ids:
        a, b = expand(osys.system, oid, 5), expand(up.system, oid, 5)
        assert max((a[m] - b[m]).max_abs() for m in a) < 1e-14


@pytest.mark.parametrize("seed", range(4))
def test_upgrade_twice_keeps_order(seed):
    _, cov = standard_cycle_covering(2)
    osys = OrderNSystem(random_order_n_system(np.random.default_rng(seed), cov, 2, order=6), 2)
    for _ in range(2):
        sol = solve_coboundary(obstruction(osys), osys.system)
        assert sol.solved
        osys = upgrade(osys, sol.cochain)
        assert osys.order_residual(osys.n) < 1e-9
    assert osys.n == 4


def test_product_model_is_infinite_type():
    _, cov = standard_cycle_covering(2)
    rep = compute_type(product_model(FlatCocycle.trivial(cov), 9), 8)
    assert rep.kind == "infinite_up_to" and rep.n == 8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_planted_type(k):
    _, cov = standard_cycle_covering(2)
    rep = compute_type(planted_type_model(np.random.default_rng(k), cov, k, k + 2), k + 1)
    assert (rep.kind, rep.n) == ("type", k)
    assert abs(rep.steps[-1].residue) > 1e-3


def test_twisted_nontorsion_cycle_infinite():
    _, cov = standard_cycle_covering(2)
    rep = compute_type(linearizable_model(np.random.default_rng(0), cov, 6, twisted=True), 5)
    assert rep.kind == "infinite_up_to"


def test_tree_linearizable():
    _, cov = standard_chain_covering(2)
    rep = compute_type(linearizable_model(np.random.default_rng(1), cov, 5), 4)
    assert rep.kind == "infinite_up_to"


def test_jet_order_guard():
    _, cov = standard_cycle_covering(1)
    with pytest.raises(UedaError):
        compute_type(product_model(FlatCocycle.trivial(cov), 3), 5)


def test_report_json_shape():
    _, cov = standard_cycle_covering(2)
    rep = compute_type(planted_type_model(np.random.default_rng(0), cov, 1, 3), 2)
    js = rep.to_json()
    assert js["type"] == 1 and "obstructionMagnitude" in js and js["perOrder"][0]["n"] == 1
