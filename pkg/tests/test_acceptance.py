"""Acceptance criteria 1-10 at their stated tolerances and runtime budgets."""

import json
import math
import time
from fractions import Fraction
from importlib import resources

import numpy as np
import pytest

from uedalab.cli import run
from uedalab.curve_model import standard_chain_covering, standard_cycle_covering
from uedalab.flat_bundles import (
    FlatCocycle, classify, classify_angle, cohomology_dims, cohomology_dims_bruteforce, torsion_order,
)
from uedalab.majorant import distance_sequence, majorant_a, siegel_conditions
from uedalab.models import linearizable_model, planted_type_model, random_order_n_system
from uedalab.nine_points import (
    PlaneConfig, RESOLUTIONS, classify_anticanonical, cover_data_from_lattice, nodal_holonomy,
)
from uedalab.psh_lab import (
    ChartPoint, CycleModel, FiniteTypeModel, cycle_prefactor, default_grid, fd_convergence, hessian_ad,
    hessian_analytic_cycle, hessian_analytic_finite_type, phi_lambda_cycle, phi_lambda_finite, relative_det_errors,
    sign_profile,
)
from uedalab.jets import LaurentPoly, SplitFunction
from uedalab.ueda import (
    OrderNSystem, closed_form_check, cocycle_residual, compute_type, obstruction, solve_coboundary, upgrade,
)

GOLDEN = (math.sqrt(5) - 1) / 2


def data(name):
    return json.loads(resources.files("uedalab").joinpath("data", name).read_text())


def report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


@pytest.mark.criterion(1)
def test_cocycle_identity():
    t0 = time.perf_counter()
    worst_cocycle = worst_closed = 0.0
    count = 0
    for N in (1, 2, 3, 4):
        _, cov = standard_cycle_covering(N)
        for seed in range(50):
            n = 1 + seed % 5
            osys = OrderNSystem(random_order_n_system(np.random.default_rng(seed), cov, n), n)
            c = obstruction(osys)
            worst_cocycle = max(worst_cocycle, cocycle_residual(c))
            worst_closed = max(worst_closed, closed_form_check(osys, c, samples=20))
            count += 1
    dt = time.perf_counter() - t0
    report(1, worst_cocycle < 1e-9 and worst_closed < 1e-9 and dt < 10,
           f"{count} systems, cocycle {worst_cocycle:.1e}, closed form {worst_closed:.1e}, {dt:.1f}s")


@pytest.mark.criterion(2)
def test_planted_type_recovery():
    t0 = time.perf_counter()
    _, cov = standard_cycle_covering(2)
    hits = 0
    for k in (1, 2, 3):
        for seed in range(50):
            rep = compute_type(planted_type_model(np.random.default_rng(seed), cov, k, k + 2), k + 1)
            hits += rep.kind == "type" and rep.n == k and abs(rep.steps[-1].residue) > 1e-6
    worst = 0.0
    infinite = 0
    for seed in range(8):
        rep = compute_type(linearizable_model(np.random.default_rng(seed), cov, 9), 8)
        infinite += rep.kind == "infinite_up_to" and rep.n == 8
        worst = max([worst, rep.final.order_residual(9)] + [s.residual for s in rep.steps])
    dt = time.perf_counter() - t0
    report(2, hits == 150 and infinite == 8 and worst < 1e-9 and dt < 30,
           f"planted {hits}/150, linearizable {infinite}/8 residual {worst:.1e}, {dt:.1f}s")


@pytest.mark.criterion(3)
def test_upgrade_contract():
    worst, steps = 0.0, 0
    for N in (1, 2, 3):
        _, cov = standard_cycle_covering(N)
        for seed in range(5):
            osys = OrderNSystem(random_order_n_system(np.random.default_rng(seed), cov, 1, order=6), 1)
            while osys.n + 2 <= osys.system.order:
                sol = solve_coboundary(obstruction(osys), osys.system)
                if not sol.solved:
                    break
                osys = upgrade(osys, sol.cochain)
                worst = max(worst, osys.order_residual(osys.n))
                steps += 1
    report(3, steps >= 40 and worst < 1e-9, f"{steps} upgrades, worst f_m (m <= n+1) {worst:.1e}")


@pytest.mark.criterion(4)
def test_cohomology_oracle():
    configs = []
    for N in (1, 2, 3):
        curve, cov = standard_cycle_covering(N)
        for angle in (Fraction(0), Fraction(1, 2), Fraction(1, 5), GOLDEN):
            configs.append((curve, FlatCocycle.from_angle(cov, angle)))
    for N in (1, 2, 3, 4):
        curve, cov = standard_chain_covering(N)
        configs.append((curve, FlatCocycle.trivial(cov)))
    bad = [i for i, (c, L) in enumerate(configs) if cohomology_dims(c, L) != cohomology_dims_bruteforce(L)]
    report(4, not bad and len(configs) >= 10, f"{len(configs)} configurations, mismatches {bad}")


@pytest.mark.criterion(5)
def test_majorant():
    t0 = time.perf_counter()
    A = majorant_a(10.0, 10.0, 400)
    a2 = A[2] == 10
    nonneg = all(c >= 0 for c in A.coeffs)
    resid = A.residual()
    sieg = siegel_conditions(1.0, 0.5, distance_sequence(GOLDEN, 200))
    dt = time.perf_counter() - t0
    report(5, a2 and nonneg and resid < 1e-12 and sieg.subadditive_ok and dt < 5,
           f"A2 = M0 {a2}, A_n >= 0 {nonneg}, residual {resid:.1e}, Siegel pairs {sieg.checked_pairs} "
           f"worst {sieg.worst_violation:.2e}, {dt:.1f}s")


@pytest.mark.criterion(6)
def test_diophantine_classification():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    wrong = []
    for m in range(1, 1001):
        units = [k for k in range(m) if math.gcd(k, m) == 1]
        for k in {units[0], units[-1], units[int(rng.integers(len(units)))]}:
            if torsion_order(Fraction(k, m), 1000) != m:
                wrong.append((k, m))
    _, cov = standard_cycle_covering(2)
    primitive5 = classify(FlatCocycle.from_angle(cov, Fraction(2, 5))).verdict == "Torsion"
    golden = classify_angle(GOLDEN, 10_000).verdict
    liouville = classify_angle(sum(Fraction(1, 10 ** math.factorial(k)) for k in range(1, 6)), 10_000)
    dt = time.perf_counter() - t0
    ok = not wrong and primitive5 and golden == "E1" and liouville.verdict == "NotE1UpTo" and \
        liouville.witness is not None and dt < 20
    report(6, ok, f"torsion misses {len(wrong)}, golden {golden}, Liouville {liouville.verdict} "
                  f"witness {liouville.witness}, {dt:.1f}s")


def _spots(rng, count, lo, hi):
    return [(1e-3 * np.exp(2j * np.pi * rng.random()),
             np.exp(2j * np.pi * rng.random()) * np.exp(rng.uniform(math.log(lo), math.log(hi))))
            for _ in range(count)]


@pytest.mark.criterion(7)
def test_hessian_verification():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    node = FiniteTypeModel(2, SplitFunction(0j, (1 + 0j,), (1 + 0j,)), "node")
    smooth = FiniteTypeModel(1, LaurentPoly.from_dict({1: 1.0, -1: 0.5}), "smooth")
    cycle = CycleModel(2, 1.5)
    errs, slopes = [], []
    for model, (lo, hi) in ((node, (0.2, 0.4)), (smooth, (0.6, 1.8))):
        f = phi_lambda_finite(model, 1.5)
        pts = _spots(rng, 5, lo, hi)
        errs += list(relative_det_errors(f, pts, lambda w, z, m=model: hessian_analytic_finite_type(m, w, z, 1.5)[1],
                                         lambda w, z: 1.0, dps=40))
        w, z = pts[0]
        steps = (1e-2 * abs(w), 3e-3 * abs(w), 1e-3 * abs(w))
        slopes.append(fd_convergence(f, hessian_ad(f, w, z), w, z, steps, dps=40)["slope"])
    for chart, (lo, hi) in (("K1", (0.01, 0.55)), ("S1", (0.35, 2.8)), ("K2", (0.01, 0.55)), ("S2", (0.35, 2.8))):
        f = phi_lambda_cycle(cycle, chart, 1.5)
        pts = _spots(rng, 5, lo, hi)
        errs += list(relative_det_errors(
            f, pts, lambda w, z, c=chart: hessian_analytic_cycle(cycle, ChartPoint(c, w, z), 1.5)[1],
            lambda w, z, c=chart: cycle_prefactor(cycle, ChartPoint(c, w, z), 1.5), dps=40))
        w, z = pts[0]
        steps = (1e-2 * abs(w), 3e-3 * abs(w), 1e-3 * abs(w))
        slopes.append(fd_convergence(f, hessian_ad(f, w, z), w, z, steps, dps=40)["slope"])
    fractions = []
    for model, charts in ((node, [None]), (smooth, [None]), (cycle, ["K1", "K2", "S1", "S2"])):
        for chart in charts:
            grid = default_grid(model, chart, (100, 100))
            fractions.append(sign_profile(model, 1.5, grid).fraction_pos_def)
            fractions.append(sign_profile(model, 0.5, grid).fraction_indefinite)
    dt = time.perf_counter() - t0
    ok = max(errs) <= 0.1 and all(abs(s - 2) <= 0.2 for s in slopes) and min(fractions) >= 0.99 and dt < 60
    report(7, ok, f"max det error {max(errs):.2e}, slopes {min(slopes):.3f}..{max(slopes):.3f}, "
                  f"min sign fraction {min(fractions):.4f} over {len(fractions)} profiles, {dt:.1f}s")


@pytest.mark.criterion(8)
def test_cover_arithmetic():
    cd = cover_data_from_lattice(RESOLUTIONS["cuspidal"]())
    got = (cd.a, cd.b, cd.b_nu, cd.deck_group, cd.preimage_counts)
    report(8, got == (6, 1, (2, 3, 6), "Z/6", (3, 2, 1)), f"a, b, b_nu, deck, preimages = {got}")


@pytest.mark.criterion(9)
def test_nine_point_pipeline():
    t0 = time.perf_counter()
    pencil = classify_anticanonical(PlaneConfig.from_json(data("pencil.json"))).theorem_case
    planted_cfg = PlaneConfig.from_json(data("nodal_alpha2.json"))
    planted = classify_anticanonical(planted_cfg)
    collinear = classify_anticanonical(PlaneConfig.from_json(data("four_collinear.json")))
    neg_line = any(c.label == "line" for c, _ in collinear.zariski.negative_part)
    cubic = planted.cubic.cubic
    base = nodal_holonomy(cubic, planted_cfg.points, seed=0).alpha
    alphas = [nodal_holonomy(cubic, planted_cfg.points, seed=s).alpha for s in range(1, 6)]
    alphas.append(nodal_holonomy(cubic, planted_cfg.points, mobius=0.3 + 2j).alpha)
    perm = np.random.default_rng(1).permutation(9)
    alphas.append(nodal_holonomy(cubic, [planted_cfg.points[i] for i in perm], seed=0).alpha)
    spread = max(abs(a - base) for a in alphas)
    dt = time.perf_counter() - t0
    ok = pencil == "i" and planted.theorem_case == "iii" and planted.metric_descriptor == "|f|^{-2}" \
        and abs(abs(math.log(abs(base))) - math.log(2)) < 1e-9 and collinear.theorem_case == "v" and neg_line \
        and spread < 1e-9 and dt < 30
    report(9, ok, f"(a) {pencil} (b) {planted.theorem_case} |alpha|^(+-1) = {abs(base):.12g} "
                  f"(c) {collinear.theorem_case} line {neg_line} (d) spread {spread:.1e}, {dt:.1f}s")


@pytest.mark.criterion(10)
def test_cli_determinism(tmp_path):
    commands = [
        ["ueda-type", "--n-max", "4"],
        ["classify-bundle", "--angle", "golden"],
        ["majorant", "--M0", "1", "--R0", "1", "--angle", "golden", "--n-max", "100"],
        ["psh-verify", "--grid", "20", "--checks", "3", "--csv", str(tmp_path / "g.csv")],
        ["classify-nine-points", "--points", str(resources.files("uedalab").joinpath("data", "nodal_alpha2.json"))],
        ["cover-data", "--case", "line_conic_tangent"],
    ]
    same = 0
    for argv in commands:
        first = run(argv)
        csv1 = (tmp_path / "g.csv").read_bytes() if "--csv" in argv else b""
        second = run(argv)
        csv2 = (tmp_path / "g.csv").read_bytes() if "--csv" in argv else b""
        same += first == second and first[0] == 0 and csv1 == csv2
    report(10, same == len(commands), f"{same}/{len(commands)} subcommands byte-identical")
