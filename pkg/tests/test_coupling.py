"""Bell-variable pair simulation and the survival-weight identity."""

import numpy as np
import pytest

from mcbounds.chain import (
    FiniteKernel,
    delta_measure,
    extract_minorization,
    propagate,
    tv_norm,
)
from mcbounds.coupling import (
    CoupledState,
    CouplingConfig,
    coupled_step,
    exact_uncoupled_mass,
    marginal_consistency_check,
    run_coupling,
    weighted_identity_check,
)

WORKED = FiniteKernel(states=(0, 1), rows=[[0.7, 0.3], [0.4, 0.6]])
WORKED_CERT = extract_minorization(WORKED, [(0, 1)])

FLAT = FiniteKernel(states=(0, 1), rows=[[0.5, 0.5], [0.5, 0.5]])
FLAT_CERT = extract_minorization(FLAT, [(0, 1), (1, 0)])


def test_coupled_state_validates_bell():
    with pytest.raises(ValueError):
        CoupledState(0, 1, 2)
    with pytest.raises(ValueError):
        CoupledState(0, 1, 1)


def test_certain_coin_couples_immediately():
    cfg = CouplingConfig(kernel=FLAT, cert=FLAT_CERT, eps=None, seed=1)
    rng = np.random.default_rng(4)
    for _ in range(50):
        out = coupled_step(CoupledState(0, 1, 0), cfg, 1, rng)
        assert out.bell == 1
        assert out.x == out.x_prime


def test_bell_absorbing():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=1)
    rng = np.random.default_rng(8)
    s = CoupledState(1, 1, 1)
    for k in range(1, 20):
        s = coupled_step(s, cfg, k, rng)
        assert s.bell == 1
        assert s.x == s.x_prime


def test_tails_branch_is_point_mass_on_worked_chain():
    # residual rows are (1,0) and (0,1): surviving pairs must sit at (0,1)
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=1)
    rng = np.random.default_rng(15)
    stayed = 0
    for _ in range(400):
        out = coupled_step(CoupledState(0, 1, 0), cfg, 1, rng)
        if out.bell == 0:
            stayed += 1
            assert (out.x, out.x_prime) == (0, 1)
    assert stayed > 0


def test_run_coupling_immediate_on_full_overlap():
    cfg = CouplingConfig(kernel=FLAT, cert=FLAT_CERT, eps=None, seed=3)
    res = run_coupling(cfg, delta_measure(2, 0), delta_measure(2, 1), 4, 500)
    assert res.p_uncoupled[0] == 0.0
    assert res.tv_upper[0] == 0.0


def test_run_coupling_survival_nonincreasing():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=5)
    res = run_coupling(cfg, delta_measure(2, 0), delta_measure(2, 1), 12, 4000)
    p = np.asarray(res.p_uncoupled)
    assert np.all(np.diff(p) <= 0)
    assert np.all((p >= 0) & (p <= 1))


def test_run_coupling_deterministic_per_seed():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=42)
    a = run_coupling(cfg, delta_measure(2, 0), delta_measure(2, 1), 6, 2000)
    b = run_coupling(cfg, delta_measure(2, 0), delta_measure(2, 1), 6, 2000)
    assert a.t_counts == b.t_counts
    assert a.p_uncoupled == b.p_uncoupled


def test_exact_uncoupled_mass_first_step():
    # index k holds P(T > k), starting from P(T > 0) = 1
    p = exact_uncoupled_mass(WORKED, WORKED_CERT, delta_measure(2, 0),
                             delta_measure(2, 1), 3)
    assert p[0] == pytest.approx(1.0)
    assert p[1] == pytest.approx(0.3)
    assert np.all(np.diff(p) <= 1e-15)


def test_mc_survival_tracks_exact_mass():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=99)
    res = run_coupling(cfg, delta_measure(2, 0), delta_measure(2, 1), 8, 20000)
    exact = exact_uncoupled_mass(WORKED, WORKED_CERT, delta_measure(2, 0),
                                 delta_measure(2, 1), 8)
    for n in range(1, 9):
        assert abs(res.p_uncoupled[n - 1] - exact[n]) <= 4.0 * max(res.se[n - 1], 1e-4)


def test_survival_bound_dominates_exact_tv():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=123)
    res = run_coupling(cfg, delta_measure(2, 0), delta_measure(2, 1), 8, 20000)
    mu = delta_measure(2, 0) - delta_measure(2, 1)
    for n in range(1, 9):
        mu = propagate(mu, WORKED, 1)
        upper = res.tv_upper[n - 1] + 3.0 * 2.0 * res.se[n - 1]
        assert upper >= tv_norm(mu) - 1e-9


def test_identity_zero_steps():
    lhs, rhs, gap = weighted_identity_check(WORKED, WORKED_CERT,
                                            delta_measure(2, 0),
                                            delta_measure(2, 1), 0)
    assert gap == pytest.approx(0.0, abs=1e-15)
    assert lhs == pytest.approx(rhs)


def test_identity_one_step_worked_value():
    lhs, rhs, _ = weighted_identity_check(WORKED, WORKED_CERT,
                                          delta_measure(2, 0),
                                          delta_measure(2, 1), 1)
    assert lhs == pytest.approx(0.3, abs=1e-12)
    assert rhs == pytest.approx(0.3, abs=1e-12)


def test_identity_zero_coin_is_plain_expectation():
    lhs, rhs, gap = weighted_identity_check(WORKED, WORKED_CERT,
                                            delta_measure(2, 0),
                                            delta_measure(2, 1), 3, eps=0.0)
    assert gap <= 1e-12
    assert lhs == pytest.approx(1.0, abs=1e-12)


def test_identity_per_step_schedule():
    eps = (0.7, 0.35, 0.175)
    _, _, gap = weighted_identity_check(WORKED, WORKED_CERT,
                                        delta_measure(2, 0),
                                        delta_measure(2, 1), 3, eps=eps)
    assert gap <= 1e-12


def test_marginals_match_exact_propagation():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=7)
    for n in range(1, 5):
        rep = marginal_consistency_check(cfg, delta_measure(2, 0),
                                         delta_measure(2, 1), n)
        assert rep.exact_gap_x <= 1e-10
        assert rep.exact_gap_xp <= 1e-10


def test_marginals_chi_square_on_seeded_run():
    cfg = CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=None, seed=31)
    rep = marginal_consistency_check(cfg, delta_measure(2, 0),
                                     delta_measure(2, 1), 3, replicas=20000)
    assert rep.passed
    assert rep.p_value_x > 0.001
    assert rep.p_value_xp > 0.001


def test_config_rejects_eps_above_certificate():
    with pytest.raises(ValueError):
        CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=0.9, seed=1)


def test_config_rejects_eps_outside_unit():
    with pytest.raises(ValueError):
        CouplingConfig(kernel=WORKED, cert=WORKED_CERT, eps=-0.1, seed=1)
