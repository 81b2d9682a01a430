"""Tempered random-walk Metropolis: targets, drift recipe, cooling, bounds."""

import math

import numpy as np
import pytest

from mcbounds.annealing import (
    CoolingSchedule,
    ObjectiveFunction,
    ProposalDensity,
    accept_prob,
    apply_rwmh_to_density,
    cooling_gamma,
    derive_drift_constants,
    derive_schedule,
    doublewell_objective,
    gaussian_proposal,
    kv_ratio,
    kv_ratio_grid,
    laplace_Z,
    minorization_gamma,
    objective_by_name,
    phi_gamma_s,
    pi_gamma,
    pi_shift_tv_bound,
    quadratic_objective,
    r_gamma_s,
    run_annealing,
    schedule_eps_sums,
)

QUAD = quadratic_objective()
WELL = doublewell_objective()
PROP = gaussian_proposal(1.0)


def square_objective() -> ObjectiveFunction:
    return ObjectiveFunction(
        f=lambda x: np.asarray(x, dtype=float) ** 2,
        fprime=lambda x: 2.0 * np.asarray(x, dtype=float),
        fsecond=lambda x: 2.0 * np.ones_like(np.asarray(x, dtype=float)),
        alpha=1.0, x1=1.0, minima=(0.0,), name="square",
    )


@pytest.fixture(scope="module")
def well_deriv():
    prop = gaussian_proposal(0.55)
    constants = derive_drift_constants(WELL, prop, beta=0.75)
    return prop, constants, derive_schedule(WELL, prop, constants)


def test_accept_prob_downhill_certain():
    assert accept_prob(QUAD, 2.0, 1.0, 5.0) == 1.0


def test_accept_prob_log2_half():
    y = math.sqrt(2.0 * math.log(2.0))
    assert accept_prob(QUAD, 0.0, y, 1.0) == pytest.approx(0.5)


def test_accept_prob_infinite_temperature():
    assert accept_prob(QUAD, 0.0, 3.0, 0.0) == 1.0


def test_objective_rejects_steep_alpha():
    with pytest.raises(ValueError):
        ObjectiveFunction(
            f=lambda x: 0.5 * np.asarray(x, dtype=float) ** 2,
            fprime=lambda x: np.asarray(x, dtype=float),
            fsecond=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            alpha=5.0, x1=1.0, minima=(0.0,), name="steep",
        )


def test_objective_rejects_flat_minimum():
    with pytest.raises(ValueError):
        ObjectiveFunction(
            f=lambda x: np.asarray(x, dtype=float) ** 4,
            fprime=lambda x: 4.0 * np.asarray(x, dtype=float) ** 3,
            fsecond=lambda x: 12.0 * np.asarray(x, dtype=float) ** 2,
            alpha=1.0, x1=1.0, minima=(0.0,), name="flat",
        )


def test_proposal_rejects_asymmetric_density():
    g = gaussian_proposal(1.0)
    with pytest.raises(ValueError):
        ProposalDensity(
            pdf=lambda z: g.pdf(np.asarray(z, dtype=float) - 0.5),
            sampler=g.sampler, cdf=None, name="shifted",
        )


def test_objective_by_name():
    assert objective_by_name("doublewell").name == WELL.name
    with pytest.raises(ValueError):
        objective_by_name("cubic")


def test_gaussian_proposal_rejects_bad_sigma():
    with pytest.raises(ValueError):
        gaussian_proposal(0.0)


def test_pi_gamma_quadratic_partition_function():
    pg = pi_gamma(2.0, QUAD)
    assert pg.z_raw == pytest.approx(math.sqrt(math.pi), rel=1e-8)


def test_pi_gamma_bin_masses_partition_unity():
    pg = pi_gamma(3.0, WELL)
    inside, out = pg.bin_masses(np.linspace(-3.0, 3.0, 121))
    assert inside.sum() + out == pytest.approx(1.0, abs=1e-6)


def test_pi_gamma_sample_symmetric():
    pg = pi_gamma(4.0, QUAD)
    rng = np.random.default_rng(21)
    draws = pg.sample(rng, 4000)
    assert abs(draws.mean()) < 5.0 / math.sqrt(4.0 * 4000)


def test_laplace_quadratic_exact():
    for gamma in (1.0, 5.0, 25.0):
        assert laplace_Z(gamma, QUAD) == pytest.approx(math.sqrt(2.0 * math.pi / gamma))


def test_laplace_doublewell_formula():
    assert laplace_Z(50.0, WELL) == pytest.approx(math.sqrt(math.pi / 50.0))


def test_laplace_error_decreasing_in_gamma():
    errs = []
    for gamma in (10.0, 20.0, 50.0):
        z = pi_gamma(gamma, WELL).z_raw
        errs.append(abs(laplace_Z(gamma, WELL) - z) / z)
    assert errs[0] > errs[1] > errs[2]


def test_laplace_rejects_bad_gamma():
    with pytest.raises(ValueError):
        laplace_Z(0.0, WELL)


def test_stationarity_under_exact_kernel_step():
    pg = pi_gamma(5.0, WELL)
    stepped = apply_rwmh_to_density(pg, WELL, PROP)
    gap = float(np.sum(np.abs(stepped - pg.density) * pg.weights))
    assert gap < 1e-6


def test_detailed_balance_flow_symmetric():
    pg = pi_gamma(2.0, WELL, truncation=4.0, npoints=257)
    xs = pg.grid
    q = PROP.pdf(xs[None, :] - xs[:, None])
    acc = np.minimum(1.0, np.exp(-2.0 * (WELL.f(xs)[None, :] - WELL.f(xs)[:, None])))
    flow = pg.density[:, None] * q * acc
    assert np.max(np.abs(flow - flow.T)) < 1e-10


def test_minorization_square_worked_values():
    res = minorization_gamma((-1.0, 1.0), 1.0, PROP, square_objective())
    assert res.d == pytest.approx(1.0, abs=1e-9)
    assert res.eps_base == pytest.approx(0.05399096651318806, abs=1e-12)
    assert res.eps_gamma == pytest.approx(0.039724333178355353, abs=1e-12)


def test_minorization_zero_gamma():
    res = minorization_gamma((-1.0, 1.0), 0.0, PROP, square_objective())
    assert res.eps_gamma == pytest.approx(res.eps_base * 2.0)


def test_r_gamma_s_worked_values():
    assert r_gamma_s(2.0, 1.0) == pytest.approx(1.25)
    assert r_gamma_s(3.0, 1.0) == pytest.approx(31.0 / 27.0)


def test_r_gamma_s_limit_one():
    assert r_gamma_s(1e6, 1.0) == pytest.approx(1.0, abs=1e-3)


def test_r_gamma_s_requires_window():
    with pytest.raises(ValueError):
        r_gamma_s(1.0, 1.0)


def test_phi_branches_match_direct_formula():
    # phi(u) = u^{gamma-s} + 1 - u^gamma for u <= 1, else u^{-s}
    assert phi_gamma_s(0.3, 2.0, 1.0) == pytest.approx(1.21, rel=1e-12)
    assert phi_gamma_s(2.0, 5.0, 2.0) == pytest.approx(0.25, rel=1e-12)
    assert phi_gamma_s(1.0, 2.0, 1.0) == pytest.approx(1.0)
    for df, gamma, s in [(0.3, 2.0, 1.0), (-0.4, 5.0, 2.0)]:
        u = math.exp(-df)
        direct = (math.exp(-(gamma - s) * df) + 1.0 - math.exp(-gamma * df)
                  if df >= 0 else math.exp(s * df))
        assert phi_gamma_s(u, gamma, s) == pytest.approx(direct, rel=1e-12)


def test_kv_ratio_quad_and_grid_agree():
    sq = square_objective()
    for x in (0.0, 1.5, -2.5):
        a = kv_ratio(x, 3.0, 1.0, sq, PROP)
        b = kv_ratio_grid(np.array([x]), 3.0, 1.0, sq, PROP)[0]
        assert b == pytest.approx(a, abs=1e-6)


def test_quadratic_constants_regression():
    dc = derive_drift_constants(QUAD, PROP, beta=0.75)
    assert dc.s == pytest.approx(4.583649306326098, rel=1e-6)
    assert dc.M == pytest.approx(1.3829941271006383, rel=1e-6)
    assert dc.x_underline == pytest.approx(dc.M + 1.0, rel=1e-9)
    assert dc.gamma_underline == pytest.approx(14.169742370033779, rel=1e-6)
    slack = (2.0 * 0.75 - 1.0) / 3.0
    assert r_gamma_s(dc.gamma_underline, dc.s) * (1.0 + slack) / 2.0 + slack / 2.0 \
        <= 0.75 + 1e-9


def test_constants_reject_flat_beta():
    with pytest.raises(ValueError):
        derive_drift_constants(QUAD, PROP, beta=0.5)


def test_cooling_schedule_validation():
    with pytest.raises(ValueError):
        CoolingSchedule(d=0.0, xi=0.0, gamma_underline=1.0)
    with pytest.raises(ValueError):
        CoolingSchedule(d=1.0, xi=-0.5, gamma_underline=1.0)


def test_cooling_gamma_worked_values():
    sched = CoolingSchedule(d=1.0, xi=0.0, gamma_underline=1.0)
    assert cooling_gamma(0, sched) == pytest.approx(1.0)
    assert cooling_gamma(9, sched) == pytest.approx(1.0 + math.log(10.0), abs=1e-12)
    gammas = [cooling_gamma(i, sched) for i in range(30)]
    assert all(b >= a for a, b in zip(gammas, gammas[1:]))


def test_schedule_eps_scaling_constant(well_deriv):
    _, _, deriv = well_deriv
    sched = deriv.schedule
    vals = [deriv.eps_gamma(cooling_gamma(i, sched)) * (1 + i) for i in (0, 3, 9, 50)]
    assert max(vals) == pytest.approx(min(vals), rel=1e-9)


def test_schedule_eps_sums_match_brute_force(well_deriv):
    _, _, deriv = well_deriv
    sched = deriv.schedule
    ns = [2, 7]
    sums = schedule_eps_sums(deriv, ns)
    for n, s_val in zip(ns, sums):
        brute = sum(deriv.eps_gamma(cooling_gamma(i, sched)) for i in range(n + 1))
        assert s_val == pytest.approx(brute, rel=1e-9)


def test_shift_bound_equal_gammas_zero():
    bound, exact = pi_shift_tv_bound(3.0, 3.0, WELL)
    assert bound == pytest.approx(0.0, abs=1e-12)
    assert exact == pytest.approx(0.0, abs=1e-9)


def test_shift_bound_quadratic_worked_value():
    bound, exact = pi_shift_tv_bound(1.0, 4.0, QUAD)
    assert bound == pytest.approx(2.0 * math.log(2.0), abs=1e-9)
    assert exact <= bound


def test_shift_bound_telescopes():
    grid = [1.0, 2.0, 5.0, 10.0]
    total = sum(pi_shift_tv_bound(a, b, WELL)[1] for a, b in zip(grid, grid[1:]))
    z_first = pi_gamma(grid[0], WELL).z_raw
    z_last = pi_gamma(grid[-1], WELL).z_raw
    assert total <= 2.0 * math.log(z_first / z_last) + 1e-9


def test_annealing_stationary_start_stays_put():
    pg = pi_gamma(8.0, QUAD)
    rng = np.random.default_rng(77)
    start = pg.sample(rng, 2000)
    sched = CoolingSchedule(d=1.0, xi=0.0, gamma_underline=8.0)
    res = run_annealing(QUAD, PROP, sched, n_steps=400, replicas=2000, seed=5,
                        checkpoints=(50, 400), start=start,
                        gamma_override=np.full(400, 8.0))
    assert max(res.tv_estimates) < 0.25


def test_annealing_mass_concentrates(well_deriv):
    prop, _, deriv = well_deriv
    res = run_annealing(WELL, prop, deriv.schedule, n_steps=2000, replicas=1000,
                        seed=31, checkpoints=(100, 2000))
    assert res.minima_mass[-1] > res.minima_mass[0] - 0.02
    assert res.minima_mass[-1] > 0.9


def test_annealing_symmetric_start_splits_evenly():
    sched = CoolingSchedule(d=1.0, xi=0.0, gamma_underline=8.0)
    prop = gaussian_proposal(0.55)
    res = run_annealing(WELL, prop, sched, n_steps=300, replicas=4000, seed=13,
                        checkpoints=(300,), start=0.0,
                        gamma_override=np.full(300, 8.0))
    hist = res.histograms[-1]
    edges = res.bin_edges
    centers = 0.5 * (edges[1:] + edges[:-1])
    left = hist[centers < 0].sum()
    right = hist[centers > 0].sum()
    p_left = left / (left + right)
    assert abs(p_left - 0.5) <= 3.0 * math.sqrt(0.25 / 4000) + 0.01
