import json

import pytest
from hypothesis import given, settings, strategies as st

from uedalab.curve_model import (
    Branch, Component, Covering, CurveError, NodalCurve, Node, build_dual_graph, dumps_covering,
    standard_chain_covering, standard_cycle_covering,
)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_cycle_dual_graph(N):
    curve, cov = standard_cycle_covering(N)
    g = build_dual_graph(curve)
    assert g.is_cycle and not g.is_tree
    assert g.euler_number == 0
    assert len(cov.chart_ids) == 3 * N


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_chain_is_tree(N):
    curve, _ = standard_chain_covering(N)
    g = build_dual_graph(curve)
    assert g.is_tree and g.is_chain
    assert g.euler_number == 1


def test_self_node_cycle_order_one():
    curve, _ = standard_cycle_covering(1)
    assert curve.nodes[0].self_node


def test_rejects_repeated_marked_point():
    with pytest.raises(CurveError):
        NodalCurve((Component("A"), Component("B")),
                   (Node("n0", (Branch("A", "0"), Branch("B", "0"))),
                    Node("n1", (Branch("A", "0"), Branch("B", "inf")))))


def test_rejects_unknown_component():
    with pytest.raises(CurveError):
        NodalCurve((Component("A"),), (Node("n0", (Branch("A", "0"), Branch("Z", "0"))),))


def test_rejects_bad_genus():
    with pytest.raises(CurveError):
        NodalCurve((Component("A", genus=2),))


def test_rejects_nonpositive_size():
    with pytest.raises(CurveError):
        standard_cycle_covering(0)


def test_cycle_path_closes():
    _, cov = standard_cycle_covering(3)
    path = cov.cycle_path()
    assert path
    assert len({oid for oid, _ in path}) == len(path)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.booleans())
def test_covering_json_round_trip(N, triples):
    _, cov = standard_cycle_covering(N, triple_overlaps=triples)
    text = dumps_covering(cov)
    again = Covering.from_json(json.loads(text))
    assert dumps_covering(again) == text


def test_curve_json_round_trip():
    curve, _ = standard_chain_covering(3)
    assert NodalCurve.from_json(curve.to_json()) == curve
