import numpy as np
import pytest

from uedalab.curve_model import standard_cycle_covering
from uedalab.jets import expand
from uedalab.models import planted_type_model, random_order_n_system
from uedalab.pq import (
    BoundLedger, HistoryError, build_ledger, defect_residual, functional_history, lemma_checks, pq_coefficients,
    pq_cocycle, solve_next, u_system,
)


def _system(seed, n=1, order=5, N=2):
    _, cov = standard_cycle_covering(N)
    return random_order_n_system(np.random.default_rng(seed), cov, n, order=order, twisted=True)


def test_zero_history_gives_raw_coefficients():
    system = _system(0)
    for oid in system.data:
        P, Q = pq_coefficients(system, {}, oid, 2)
        f = expand(system, oid, 2)
        assert (P[2] - f[2]).max_abs() < 1e-14
        assert Q[2].max_abs() < 1e-14


def test_missing_history_rejected():
    with pytest.raises(HistoryError):
        pq_coefficients(_system(0), {}, next(iter(_system(0).data)), 3)


@pytest.mark.parametrize("seed", range(3))
def test_pq_matches_direct_reexpansion(seed):
    system = _system(seed)
    hist, reached = functional_history(system, 4)
    assert reached == 4
    for n in (3, 4):
        h = {nu: hist[nu] for nu in range(2, n)}
        direct = u_system(system, h, n)
        pq = pq_cocycle(system, h, n)
        for oid in system.data:
            assert (expand(direct, oid, n)[n] - pq[oid]).max_abs() < 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_history_linearizes_to_its_order(seed):
    system = _system(seed)
    hist, reached = functional_history(system, 4)
    assert defect_residual(system, hist, reached) < 1e-9


def test_planted_class_survives():
    _, cov = standard_cycle_covering(2)
    system = planted_type_model(np.random.default_rng(0), cov, 1, 4)
    assert solve_next(system, {}, 2) is None


def test_ledger_constants_follow_formulas():
    L = BoundLedger(M1=2.0, R=3.0, C0=0.5)
    assert L.M2 == 18 * 3.0 * (1 + 2.0 * 3.0)
    assert L.M3 == 12 * 3.0 * (1 + 0.5 + 6 * 3.0 * 2.0)
    assert set(L.to_json()) >= {"M1", "R", "C0", "M2", "M3", "M5"}


@pytest.mark.parametrize("seed", range(3))
def test_lemma_bounds_hold_on_random_systems(seed):
    system = _system(seed)
    ledger = build_ledger(system)
    hist, _ = functional_history(system, 4)
    for n in (2, 3, 4):
        value, deriv = lemma_checks(system, {nu: hist[nu] for nu in range(2, n)}, n, ledger)
        assert value.holds and deriv.holds
