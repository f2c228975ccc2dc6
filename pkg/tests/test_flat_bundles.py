import cmath
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from uedalab.curve_model import standard_chain_covering, standard_cycle_covering
from uedalab.flat_bundles import (
    BundleError, FlatCocycle, NotFlatError, classify, classify_angle, cohomology_dims, cohomology_dims_bruteforce,
    cycle_distance_closed_form, distance, holonomy, is_flat, torsion_order,
)

GOLDEN = (math.sqrt(5) - 1) / 2


def liouville(terms=5):
    return sum(Fraction(1, 10 ** math.factorial(k)) for k in range(1, terms + 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.fractions(0, 1, max_denominator=50),
       st.dictionaries(st.sampled_from(["a", "b"]), st.floats(0.2, 5.0), max_size=2))
def test_holonomy_gauge_invariant(N, angle, _):
    _, cov = standard_cycle_covering(N)
    L = FlatCocycle.from_angle(cov, angle)
    gauge = {cid: complex(1 + 0.3 * i, 0.1 * i) for i, cid in enumerate(cov.chart_ids)}
    assert abs(holonomy(L.gauged(gauge)) - holonomy(L)) < 1e-12


def test_cocycle_condition_enforced():
    _, cov = standard_cycle_covering(2)
    edges = {oid: 1.0 + 0j for oid in cov.overlap_ids}
    tri = cov.triples[0]
    edges[tri.overlaps[0]] = 2.0
    with pytest.raises(BundleError):
        FlatCocycle(cov, edges)


def test_nonflat_distance_rejected():
    _, cov = standard_cycle_covering(1)
    L = FlatCocycle.from_holonomy(cov, 2.0)
    assert not is_flat(L)
    with pytest.raises(NotFlatError):
        distance(L)
    assert classify(L).verdict == "NonFlat"


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("phi", [0.1, 0.9, 2.5, -1.7])
def test_distance_matches_balanced_closed_form(N, phi):
    # pure cycle nerve: the balanced representative spreads the angle evenly
    _, cov = standard_cycle_covering(N, triple_overlaps=False)
    tau = cmath.exp(1j * phi)
    L = FlatCocycle.from_holonomy(cov, tau)
    assert distance(L) == pytest.approx(cycle_distance_closed_form(tau, len(cov.nerve)), rel=1e-9)


def test_trees_have_trivial_flat_bundles():
    _, cov = standard_chain_covering(3)
    L = FlatCocycle.trivial(cov)
    assert distance(L) == 0.0
    assert classify(L).verdict == "Torsion"


@pytest.mark.parametrize("m", [1, 2, 7, 97, 360, 1000])
def test_exact_torsion_orders(m):
    assert torsion_order(Fraction(1, m), 1000) == m
    assert torsion_order(Fraction(m - 1, m) if m > 1 else Fraction(0), 1000) == m


def test_torsion_beyond_bound_is_not_torsion():
    assert torsion_order(Fraction(1, 1009), 1000) is None


def test_float_torsion_detection():
    assert torsion_order(0.25, 10) == 4
    assert torsion_order(GOLDEN, 1000) is None


def test_golden_ratio_is_e1():
    res = classify_angle(GOLDEN, 10_000)
    assert res.verdict == "E1"
    assert res.evidence["c2"] <= 2.0


def test_liouville_fails_with_witness():
    res = classify_angle(liouville(), 10_000)
    assert res.verdict == "NotE1UpTo"
    # the first large partial quotient sits at the denominator 10^(2!)
    assert res.witness == 100


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("angle", [Fraction(0), Fraction(1, 3), Fraction(2, 7)])
def test_cohomology_matches_cech_on_cycles(N, angle):
    curve, cov = standard_cycle_covering(N)
    L = FlatCocycle.from_angle(cov, angle)
    assert cohomology_dims(curve, L) == cohomology_dims_bruteforce(L)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_cohomology_matches_cech_on_trees(N):
    curve, cov = standard_chain_covering(N)
    L = FlatCocycle.trivial(cov)
    assert cohomology_dims(curve, L) == cohomology_dims_bruteforce(L)


def test_cohomology_values_cycle():
    curve, cov = standard_cycle_covering(2)
    assert cohomology_dims(curve) == {"C": (1, 1), "O": (1, 1)}
    assert cohomology_dims(curve, FlatCocycle.from_angle(cov, Fraction(1, 3))) == {"C": (0, 0), "O": (0, 0)}


def test_bundle_json_round_trip():
    _, cov = standard_cycle_covering(2)
    L = FlatCocycle.from_angle(cov, Fraction(2, 5))
    M = FlatCocycle.from_json(cov, L.to_json())
    assert M.angle == Fraction(2, 5)
    assert abs(holonomy(M) - holonomy(L)) < 1e-15
