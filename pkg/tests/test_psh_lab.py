import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uedalab.jets import LaurentPoly, SplitFunction
from uedalab.psh_lab import (
    EPS_LADDER, ChartPoint, CycleModel, FiniteTypeModel, OnCurve, PshError, abs2, default_grid, eval_phi_cycle, fd_convergence,
    gluing_residuals, hessian_ad, hessian_analytic_cycle, hessian_analytic_finite_type, hessian_numeric, log_abs,
    phi_lambda_cycle, phi_lambda_finite, plateau, property1_ratio, relative_det_errors, renormalized_constants,
    cycle_prefactor, search_epsilon, sign_class, sign_profile,
)

NODE = FiniteTypeModel(2, SplitFunction(0j, (1 + 0j,), (1 + 0j,)), "node")
SMOOTH = FiniteTypeModel(1, LaurentPoly.from_dict({1: 1.0, -1: 0.5}), "smooth")


def test_ad_hessian_of_simple_functions():
    H = hessian_ad(lambda w, z: abs2(w) + 2 * abs2(z), 0.3 + 0.1j, -0.2j)
    assert np.allclose(H, np.diag([1, 2]))
    # log |w| is pluriharmonic away from w = 0
    H = hessian_ad(lambda w, z: log_abs(w) + abs2(z * w), 0.5, 1.0 + 1j)
    assert abs(H[0, 0] - abs(1 + 1j) ** 2) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.complex_numbers(min_magnitude=0.2, max_magnitude=1.0), st.complex_numbers(min_magnitude=0.2, max_magnitude=1.0))
def test_ad_matches_fd(w, z):
    def f(a, b):
        return abs2(a) ** 1.5 * (abs2(b) + 1)

    A = hessian_ad(f, w, z)
    N = hessian_numeric(f, w, z, 1e-4, dps=30).matrix
    assert np.allclose(A, N, rtol=1e-6, atol=1e-8)


def test_fd_convergence_order_two():
    w, z = 1e-3 * np.exp(0.7j), 0.3 * np.exp(2.1j)
    f = phi_lambda_finite(NODE, 1.5)
    exact = hessian_ad(f, w, z)
    out = fd_convergence(f, exact, w, z, steps=(1e-2 * abs(w), 3e-3 * abs(w), 1e-3 * abs(w)), dps=40)
    assert out["slope"] == pytest.approx(2.0, abs=0.2)


@pytest.mark.parametrize("model", [NODE, SMOOTH])
def test_leading_determinant_envelope(model):
    rng = np.random.default_rng(0)
    pts = []
    for _ in range(4):
        z = 0.3 * np.exp(2j * np.pi * rng.random()) if model.chart == "node" else np.exp(2j * np.pi * rng.random())
        pts.append((1e-3 * np.exp(2j * np.pi * rng.random()), z))
    errs = relative_det_errors(phi_lambda_finite(model, 1.5), pts,
                               lambda w, z: hessian_analytic_finite_type(model, w, z, 1.5)[1], lambda w, z: 1.0, dps=40)
    assert errs.max() < 0.1


def test_analytic_rejects_curve_points():
    with pytest.raises(OnCurve):
        hessian_analytic_finite_type(NODE, 0j, 0.3, 1.5)


def test_model_validation():
    with pytest.raises(PshError):
        FiniteTypeModel(0, SMOOTH.g, "smooth")
    with pytest.raises(PshError):
        FiniteTypeModel(1, LaurentPoly.from_dict({0: 1.0}), "smooth")
    with pytest.raises(PshError):
        CycleModel(2, 1.0)


def test_plateau_values():
    r = np.array([0.0, 0.05, 0.075, 0.1, 0.2])
    v = np.real(plateau(r, 0.05))
    assert v[0] == 1 and v[1] == 1 and 0 < v[2] < 1 and v[3] == 0 and v[4] == 0


def test_property1_ratio_bounded():
    w = 1e-3 * np.exp(1j * np.linspace(0, 6, 20))
    z = 0.3 * np.exp(1j * np.linspace(1, 4, 20))
    r = property1_ratio(NODE, 1.5, w, z)
    assert np.all(r > 0.5) and np.all(r < 2)


@pytest.mark.parametrize("lam,target", [(1.5, "posDef"), (0.5, "indefinite")])
def test_finite_sign_profiles(lam, target):
    prof = sign_profile(NODE, lam, default_grid(NODE, shape=(40, 40)))
    frac = prof.fraction_pos_def if target == "posDef" else prof.fraction_indefinite
    assert frac >= 0.99


def test_sign_class_labels():
    H = np.array([np.diag([1.0, 2.0]), np.diag([1.0, -1.0]), np.diag([-1.0, 0.0]), np.zeros((2, 2))], dtype=complex)
    assert list(sign_class(H)) == ["posDef", "indefinite", "negSemi", "degenerate"]


CYCLE = CycleModel(2, 1.5)


def test_cycle_gluing_is_first_order():
    res = gluing_residuals(CYCLE, 1e-3)
    assert max(res.values()) < 1e-2
    res2 = gluing_residuals(CycleModel(2, 1.5, c=0.5), 1e-3)
    assert max(res2.values()) < 1e-2


@pytest.mark.parametrize("chart", ["K1", "S1"])
def test_cycle_hessian_envelope(chart):
    rng = np.random.default_rng(1)
    lo, hi = (0.01, 0.55) if chart == "K1" else (0.35, 2.8)
    pts = [(1e-3 * np.exp(2j * np.pi * rng.random()),
            np.exp(2j * np.pi * rng.random()) * np.exp(rng.uniform(np.log(lo), np.log(hi)))) for _ in range(3)]
    errs = relative_det_errors(phi_lambda_cycle(CYCLE, chart, 1.5), pts,
                               lambda w, z: hessian_analytic_cycle(CYCLE, ChartPoint(chart, w, z), 1.5)[1],
                               lambda w, z: cycle_prefactor(CYCLE, ChartPoint(chart, w, z), 1.5), dps=40)
    assert errs.max() < 0.1


def test_cycle_phi_positive_near_curve():
    p = ChartPoint("S1", np.array([1e-3, 1e-4j]), np.array([1.0, 0.5]))
    assert np.all(np.real(eval_phi_cycle(CYCLE, p)) > 0)


def test_node_constants_renormalize():
    q = [2.0, 0.5j, 1 + 1j]
    new = renormalized_constants(q)
    assert np.allclose(new, [new[0]] * 3)
    assert np.isclose(np.prod(new), np.prod(q))


def test_epsilon_search_returns_first_passing_rung():
    grid = default_grid(NODE, shape=(10, 10))
    eps, prof = search_epsilon(NODE, 1.5, grid)
    assert eps in EPS_LADDER and prof.fraction_pos_def >= 0.99
    for earlier in EPS_LADDER[:EPS_LADDER.index(eps)]:
        assert sign_profile(NODE, 1.5, grid, earlier).fraction_pos_def < 0.99


def test_csv_is_deterministic():
    a = sign_profile(CYCLE, 0.5, default_grid(CYCLE, "S1", (5, 5))).to_csv()
    b = sign_profile(CYCLE, 0.5, default_grid(CYCLE, "S1", (5, 5))).to_csv()
    assert a == b and a.splitlines()[0].startswith("w_re")
