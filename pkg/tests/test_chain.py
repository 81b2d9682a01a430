"""Finite-chain primitives: kernels, norms, minorization, drift."""

import numpy as np
import pytest

from mcbounds.chain import (
    DegenerateMinorizationError,
    DriftCertificate,
    DriftViolationError,
    FiniteKernel,
    FiniteSignedMeasure,
    MinorizationCertificate,
    WeightFunction,
    build_product_pstar,
    delta_measure,
    extract_minorization,
    f_norm,
    pair_mean_weight,
    propagate,
    stationary,
    sup_pstar_weight,
    tv_norm,
    uniform_measure,
    verify_drift,
)

WORKED = FiniteKernel(states=(0, 1), rows=[[0.7, 0.3], [0.4, 0.6]])


def test_kernel_rejects_negative_entries():
    with pytest.raises(ValueError):
        FiniteKernel(states=(0, 1), rows=[[1.2, -0.2], [0.5, 0.5]])


def test_kernel_rejects_bad_row_sum():
    with pytest.raises(ValueError):
        FiniteKernel(states=(0, 1), rows=[[0.6, 0.3], [0.5, 0.5]])


def test_kernel_rejects_nonsquare():
    with pytest.raises(ValueError):
        FiniteKernel(states=(0, 1), rows=[[0.5, 0.25, 0.25], [0.5, 0.25, 0.25]])


def test_kernel_json_roundtrip():
    doc = WORKED.to_json()
    back = FiniteKernel.from_json(doc)
    assert back.states == WORKED.states
    assert np.array_equal(back.rows, WORKED.rows)


def test_weight_rejects_below_one():
    with pytest.raises(ValueError):
        WeightFunction([1.0, 0.5])


def test_propagate_zero_steps_is_identity():
    xi = delta_measure(2, 0)
    out = propagate(xi, WORKED, 0)
    assert np.array_equal(out.values, xi.values)


def test_propagate_one_step_worked_example():
    out = propagate(delta_measure(2, 0), WORKED, 1)
    assert out.values == pytest.approx([0.7, 0.3], abs=1e-15)


def test_propagate_fixes_stationary():
    pi = stationary(WORKED)
    out = propagate(pi, WORKED, 7)
    assert out.values == pytest.approx(pi.values, abs=1e-12)


def test_f_norm_sign_pattern_oracle():
    mu = FiniteSignedMeasure(values=[0.3, -0.3])
    assert f_norm(mu, WeightFunction([1.0, 2.0])) == pytest.approx(0.9)


def test_f_norm_zero_measure():
    mu = FiniteSignedMeasure(values=[0.0, 0.0])
    assert f_norm(mu, WeightFunction([1.0, 2.0])) == 0.0


def test_f_norm_single_atom():
    mu = FiniteSignedMeasure(values=[0.5])
    assert f_norm(mu, WeightFunction([3.0])) == pytest.approx(1.5)


def test_tv_norm_is_f_norm_at_unit_weight():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=6)
    mu = FiniteSignedMeasure(values=vals)
    assert tv_norm(mu) == pytest.approx(np.abs(vals).sum())
    assert tv_norm(mu) == pytest.approx(f_norm(mu, WeightFunction(np.ones(6))))


def test_f_norm_monotone_in_weight():
    rng = np.random.default_rng(9)
    vals = rng.normal(size=5)
    mu = FiniteSignedMeasure(values=vals)
    f1 = 1.0 + rng.random(5)
    f2 = f1 + rng.random(5)
    assert f_norm(mu, WeightFunction(f1)) <= f_norm(mu, WeightFunction(f2)) + 1e-15


def test_stationary_singleton():
    single = FiniteKernel(states=(0,), rows=[[1.0]])
    assert stationary(single).values == pytest.approx([1.0])


def test_stationary_worked_example():
    pi = stationary(WORKED)
    assert pi.values == pytest.approx([4 / 7, 3 / 7], abs=1e-12)


def test_stationary_doubly_stochastic_uniform():
    k = FiniteKernel(states=(0, 1, 2), rows=[[0.2, 0.3, 0.5],
                                             [0.5, 0.2, 0.3],
                                             [0.3, 0.5, 0.2]])
    assert stationary(k).values == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_minorization_identical_rows_full_overlap():
    k = FiniteKernel(states=(0, 1), rows=[[0.5, 0.5], [0.5, 0.5]])
    cert = extract_minorization(k, [(0, 1)])
    assert cert.epsilon == pytest.approx(1.0)


def test_minorization_worked_example():
    cert = extract_minorization(WORKED, [(0, 1)])
    assert cert.epsilon == pytest.approx(0.7)
    assert cert.nu[(0, 1)] == pytest.approx([4 / 7, 3 / 7])


def test_minorization_disjoint_support_degenerate():
    k = FiniteKernel(states=(0, 1), rows=[[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DegenerateMinorizationError):
        extract_minorization(k, [(0, 1)])


def test_minorization_certificate_validates_nu():
    with pytest.raises(ValueError):
        MinorizationCertificate(coupling_set=frozenset({(0, 1)}), epsilon=0.5,
                                nu={(0, 1): np.array([0.6, 0.6])})


def test_verify_drift_reflecting_walk():
    k = FiniteKernel(states=(0, 1, 2), rows=[[0.5, 0.5, 0.0],
                                             [0.25, 0.5, 0.25],
                                             [0.0, 0.5, 0.5]])
    res = verify_drift(k, WeightFunction([1.0, 2.0, 4.0]), {0, 1})
    assert res.lam == pytest.approx(0.75)
    assert res.b == pytest.approx(0.75)


def test_verify_drift_constant_weight_violates():
    k = FiniteKernel(states=(0, 1), rows=[[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(DriftViolationError):
        verify_drift(k, WeightFunction([1.0, 1.0]), {0})


def test_verify_drift_deterministic_jump_ratio():
    # every state outside C jumps straight to the V-minimizer inside C
    k = FiniteKernel(states=(0, 1, 2), rows=[[1.0, 0.0, 0.0],
                                             [1.0, 0.0, 0.0],
                                             [1.0, 0.0, 0.0]])
    v = [1.0, 3.0, 5.0]
    res = verify_drift(k, WeightFunction(v), {0})
    assert res.lam == pytest.approx(min(v) / v[1])


def test_drift_certificate_check_against():
    k = FiniteKernel(states=(0, 1, 2), rows=[[0.5, 0.5, 0.0],
                                             [0.25, 0.5, 0.25],
                                             [0.0, 0.5, 0.5]])
    w = WeightFunction([1.0, 2.0, 4.0])
    DriftCertificate(weight=w, lam=0.75, b=0.75, small_set={0, 1}).check_against(k)
    with pytest.raises(ValueError):
        DriftCertificate(weight=w, lam=0.6, b=0.1, small_set={0, 1}).check_against(k)


def test_drift_certificate_rejects_negative_b():
    with pytest.raises(ValueError):
        DriftCertificate(weight=WeightFunction([1.0]), lam=0.5, b=-0.1, small_set={0})


def test_pstar_off_set_is_tensor_product():
    cert = extract_minorization(WORKED, [(0, 1)])
    pstar = build_product_pstar(WORKED, cert)
    for pair in [(0, 0), (1, 0), (1, 1)]:
        row = pstar.kernel.rows[pstar.pair_index(*pair)]
        expected = np.outer(WORKED.rows[pair[0]], WORKED.rows[pair[1]]).ravel()
        assert row == pytest.approx(expected, abs=1e-15)


def test_pstar_worked_residual_point_mass():
    cert = extract_minorization(WORKED, [(0, 1)])
    pstar = build_product_pstar(WORKED, cert)
    row = pstar.kernel.rows[pstar.pair_index(0, 1)]
    # residual rows are (1,0) and (0,1), so the product is a point mass
    expected = np.zeros(4)
    expected[pstar.pair_index(0, 1)] = 1.0
    assert row == pytest.approx(expected, abs=1e-12)


def test_pstar_identical_rows_residual_is_row():
    k = FiniteKernel(states=(0, 1), rows=[[0.6, 0.4], [0.6, 0.4]])
    cert = MinorizationCertificate(coupling_set=frozenset({(0, 1)}), epsilon=0.5,
                                   nu={(0, 1): np.array([0.6, 0.4])})
    pstar = build_product_pstar(k, cert)
    row = pstar.kernel.rows[pstar.pair_index(0, 1)].reshape(2, 2)
    marginal = row.sum(axis=1)
    assert marginal == pytest.approx([0.6, 0.4], abs=1e-12)


def test_pair_mean_weight_layout():
    w = WeightFunction([1.0, 3.0])
    pw = pair_mean_weight(w)
    assert pw.values == pytest.approx([1.0, 2.0, 2.0, 3.0])


def test_sup_pstar_weight_matches_direct_max():
    cert = extract_minorization(WORKED, [(0, 1)])
    pstar = build_product_pstar(WORKED, cert)
    pw = pair_mean_weight(WeightFunction([1.0, 2.0]))
    direct = max(
        float(pstar.kernel.rows[pstar.pair_index(i, j)] @ pw.values)
        for (i, j) in pstar.coupling_set
    )
    assert sup_pstar_weight(pstar, pw) == pytest.approx(direct)


def test_uniform_measure_mass_one():
    u = uniform_measure(4)
    assert u.mass() == pytest.approx(1.0)
    assert tv_norm(u) == pytest.approx(1.0)
