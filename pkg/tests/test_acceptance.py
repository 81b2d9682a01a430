"""End-to-end acceptance checks.

Each test covers one shipped guarantee at its pinned configuration and
tolerance and prints a single summary line; run with `pytest -v` to see
one pass/fail line per criterion.
"""

import itertools
import math
import time

import numpy as np
import pytest

from mcbounds import annealing, ar, bounds, verify
from mcbounds.chain import delta_measure, propagate


@pytest.fixture(scope="module")
def ar_model():
    return ar.model_from_names("linear:0.5", "gauss:1", 4.0, 0.8)


def test_criterion_01_finite_domination(full_suite):
    t0 = time.monotonic()
    res = verify.check_domination(full_suite, n_max=50)
    dt = time.monotonic() - t0
    print(f"criterion 1 domination: worst slack {-res.worst:.3e}, {dt:.1f}s")
    assert res.passed, res.detail
    assert res.worst <= 1e-9
    assert dt < 60.0


def test_criterion_02_exact_identity(full_suite):
    res = verify.check_identity(full_suite, n_max=4)
    print(f"criterion 2 identity: max gap {res.worst:.3e}")
    assert res.passed, res.detail
    assert res.worst <= 1e-10


def test_criterion_03_homogeneous_reduction():
    eps_grid = (0.05, 0.3, 0.5, 0.7, 0.95)
    lam_grid = (0.2, 0.5, 0.8, 0.95)
    bbv_grid = ((0.0, 1.0, 1.0), (0.0, 2.0, 3.0), (0.5, 1.5, 2.0),
                (1.0, 2.5, 1.0), (2.0, 4.0, 5.0))
    n_max = 30
    points = 0
    worst_tv = 0.0
    worst_f_eq = 0.0
    worst_f_dom = -math.inf
    for eps, lam, (b, B, v0) in itertools.product(eps_grid, lam_grid, bbv_grid):
        points += 1
        inp = bounds.HomogeneousBoundInput(epsilon=eps, lam=lam, b=b, B=B, v0=v0)
        sched = bounds.InhomogeneousSchedule(
            eps_seq=(eps,) * n_max, lambda_seq=(lam,) * n_max,
            b_seq=(b,) * n_max, B_seq=(B,) * n_max, v0=v0)
        for n in range(1, n_max + 1):
            for j in range(1, n + 2):
                # gaps normalized by max(1, value): equality at the 1e-12
                # level is only meaningful per-value once bounds exceed O(1)
                tv_h = bounds.bound_tv_homog(inp, n, j)
                tv_i = bounds.bound_inhom(sched, n, j, "tv")
                worst_tv = max(worst_tv, abs(tv_i - tv_h) / max(1.0, tv_h))
                f_h = bounds.bound_f_homog(inp, n, j)
                f_i = bounds.bound_inhom(sched, n, j, "f")
                if b == 0.0:
                    worst_f_eq = max(worst_f_eq, abs(f_i - f_h) / max(1.0, f_h))
                else:
                    worst_f_dom = max(worst_f_dom, (f_i - f_h) / max(1.0, f_h))
    assert points == 100
    print(f"criterion 3 reduction: 100 points, tv gap {worst_tv:.3e}, "
          f"f gap (b=0) {worst_f_eq:.3e}, f excess (b>0) {worst_f_dom:.3e}")
    assert worst_tv <= 1e-12
    assert worst_f_eq <= 1e-12
    # with b > 0 a constant finite schedule stays strictly below the
    # stationary-budget term b/(1-lam), so domination is the sharp statement
    assert worst_f_dom <= 1e-12


def test_criterion_04_rate_certification(full_suite):
    res = verify.check_rate(full_suite, n=200)
    print(f"criterion 4 rate: worst excess {res.worst:.5f} (allowance 0.01)")
    assert res.passed, res.detail


def test_criterion_05_s_condition_consistency(full_suite):
    assert sum(inst.satisfies_S for inst in full_suite) >= 1
    res = verify.check_s_consistency(full_suite)
    print(f"criterion 5 consistency: {res.detail}, worst {res.worst:.3e}")
    assert res.passed, res.detail
    assert res.worst <= 1e-9


def test_criterion_06_ar_example(ar_model):
    eps = ar.eps_delta(ar_model)
    B = (1.0 + ar_model.L * ar_model.delta - eps) / ar_model.lam
    print(f"criterion 6 AR: eps(delta) {eps:.6f}, B {B:.6f}")
    assert eps == pytest.approx(0.317311, abs=1e-6)
    assert B == pytest.approx(3.353361, abs=1e-6)

    curve = {n: val for (n, _j, val) in ar.prop6_curve(ar_model, 30, cross_moment=7.0)}

    kernel, grid = ar.discretize_ar(ar_model, -10.0, 10.0, 2001)
    i0 = int(np.argmin(np.abs(grid - 3.0)))
    i1 = int(np.argmin(np.abs(grid + 3.0)))
    diff = delta_measure(kernel.size, i0).values - delta_measure(kernel.size, i1).values
    worst_exact = -math.inf
    worst_mc = -math.inf
    for n in range(1, 31):
        diff = diff @ kernel.rows
        exact_tv = float(np.abs(diff).sum())
        worst_exact = max(worst_exact, exact_tv - curve[n])
        mc_floor = ar.threshold_gap_lower_bound(ar_model, 3.0, -3.0, n,
                                                replicas=10 ** 5, seed=900 + n)
        worst_mc = max(worst_mc, mc_floor - curve[n])
    print(f"criterion 6 AR domination: exact excess {worst_exact:.3e}, "
          f"MC excess {worst_mc:.3e}")
    assert worst_exact <= 1e-9
    assert worst_mc <= 0.0


def test_criterion_07_coupling_validity(full_suite):
    res = verify.check_coupling(full_suite, n_max=20, replicas=10 ** 5)
    print(f"criterion 7 coupling: worst deficit {res.worst:.3e}")
    assert res.passed, res.detail


def test_criterion_08_annealing_constants():
    objective = annealing.doublewell_objective()
    proposal = annealing.gaussian_proposal(1.0)
    cst = annealing.derive_drift_constants(objective, proposal, 0.75)
    assert cst.lam < 1.0 and cst.b > 0.0

    xs = np.linspace(-20.0, 20.0, 161)
    worst_i = -math.inf
    for gamma in (2.0 * cst.s, 4.0 * cst.s, 10.0 * cst.s):
        ratios = annealing.kv_ratio_grid(xs, gamma, cst.s, objective, proposal)
        worst_i = max(worst_i, float(np.max(ratios - annealing.r_gamma_s(gamma, cst.s))))
    assert worst_i <= 1e-6

    xs_out = np.concatenate([xs[np.abs(xs) >= cst.x_underline],
                             [-cst.x_underline, cst.x_underline]])
    worst_ii = -math.inf
    for gamma in np.linspace(cst.gamma_underline, 10.0 * cst.gamma_underline, 7):
        ratios = annealing.kv_ratio_grid(xs_out, gamma, cst.s, objective, proposal)
        worst_ii = max(worst_ii, float(np.max(ratios)) - cst.beta)
    assert worst_ii <= 1e-6

    g = cst.gamma_underline
    drift_viol = annealing.verify_drift_inequalities(
        cst, objective, proposal, gammas=(g, 2.0 * g, 10.0 * g))
    print(f"criterion 8 constants: ceiling excess {worst_i:.3e}, "
          f"tail excess {worst_ii:.3e}, drift excess {drift_viol:.3e}")
    assert drift_viol <= 1e-6


def test_criterion_09_laplace_and_shift():
    objective = annealing.doublewell_objective()
    z_quad = annealing.pi_gamma(50.0, objective).z_raw
    z_lap = annealing.laplace_Z(50.0, objective)
    rel = abs(z_lap - z_quad) / z_quad
    assert z_lap == pytest.approx(math.sqrt(math.pi / 50.0), rel=1e-12)
    assert rel <= 0.05

    gammas = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
    worst = -math.inf
    for g1, g2 in itertools.combinations(gammas, 2):
        bound, exact = annealing.pi_shift_tv_bound(g1, g2, objective)
        worst = max(worst, exact - bound)
    print(f"criterion 9 shift: laplace rel err {rel:.4f}, worst deficit {worst:.3e}")
    assert worst <= 1e-8


def test_criterion_10_annealing_convergence():
    t0 = time.monotonic()
    objective = annealing.doublewell_objective()
    proposal = annealing.gaussian_proposal(0.55)
    cst = annealing.derive_drift_constants(objective, proposal, 0.75)
    deriv = annealing.derive_schedule(objective, proposal, cst, xi=0.0)
    result = annealing.run_annealing(
        objective, proposal, deriv.schedule,
        n_steps=10 ** 4, replicas=10 ** 4, seed=20260815,
        checkpoints=(10 ** 2, 10 ** 3, 10 ** 4), start=1.0,
        bin_range=(-3.0, 3.0), bin_width=0.05)
    dt = time.monotonic() - t0
    tv = list(result.tv_estimates)
    mass = list(result.minima_mass)
    print(f"criterion 10 annealing: tv {tv[0]:.4f}/{tv[1]:.4f}/{tv[2]:.4f}, "
          f"minima mass {mass[-1]:.4f}, {dt:.1f}s")
    assert tv[0] > tv[1] > tv[2]
    assert tv[2] <= 0.15
    assert mass[-1] >= 0.9
    assert dt < 600.0
