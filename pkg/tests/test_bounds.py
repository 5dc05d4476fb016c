import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from lstdlab import (
    BoundInputs,
    FeatureMap,
    MixingParams,
    NotFound,
    approximation_bound,
    capital_i,
    capital_j,
    capital_j_gamma,
    capital_lambda,
    epsilon_terms,
    estimation_bound,
    exact_A_b,
    gamma_cap,
    global_bound,
    h_explicit,
    lstd_estimate,
    lstd_error,
    m_star,
    mu_geometry,
    mu_norm,
    n_zero,
    n_zero_expression,
    sample_trajectory,
)
from lstdlab.bounds import epsilon_trace

from conftest import LAMBDA_GRID, make_instance, scan_n_zero

FAST_MIXING = MixingParams(beta_bar=1e-9, b=1e9, kappa=1.0)


def inputs_for(n=1000, delta=0.05, lam=0.5, gamma=0.9, d=2, L=1.0, nu=0.5, mixing=None):
    return BoundInputs(
        n=n, delta=delta, lam=lam, gamma=gamma, d=d, L=L, nu=nu,
        mixing=mixing or MixingParams(),
    )


class TestMixingParams:
    def test_envelope_formula_and_decay(self):
        mix = MixingParams(2.0, 0.5, 1.3)
        assert mix.envelope(4) == pytest.approx(2.0 * math.exp(-0.5 * 4**1.3), rel=1e-15)
        assert mix.envelope(10) < mix.envelope(1)

    def test_rejects_non_positive_parameters(self):
        with pytest.raises(ValueError):
            MixingParams(beta_bar=0.0)
        with pytest.raises(ValueError):
            MixingParams(b=-1.0)


class TestCapitalLambda:
    def test_direct_substitution(self):
        # n=2, delta=1, beta_bar small: log(32) + log(4 e^2)
        tiny = MixingParams(beta_bar=1e-12, b=1.0, kappa=1.0)
        assert capital_lambda(2, 1.0, tiny) == pytest.approx(math.log(32) + 2 + math.log(4))

    def test_monotone_in_confidence(self):
        mix = MixingParams()
        assert capital_lambda(100, 0.025, mix) > capital_lambda(100, 0.05, mix)

    def test_high_precision_oracle(self):
        # independent 50-digit evaluation of the same expression
        mix = MixingParams(beta_bar=1.0, b=1.0, kappa=1.0)
        value = capital_lambda(1000, 0.05, mix)
        with mpmath.workdps(50):
            n, delta = mpmath.mpf(1000), mpmath.mpf("0.05")
            exact = mpmath.log(8 * n * n / delta) + mpmath.log(
                max(4 * mpmath.e**2, n * mpmath.mpf(1))
            )
            assert abs(value - float(exact)) <= 1e-12 * float(exact)


class TestCapitalI:
    def test_fast_mixing_limit(self):
        # b effectively infinite: the max picks 1, so I collapses to 32 Lambda
        mix = MixingParams(beta_bar=1.0, b=1e18, kappa=1.0)
        lam_cap = capital_lambda(500, 0.1, mix)
        assert capital_i(500, 0.1, mix) == pytest.approx(32.0 * lam_cap, rel=1e-14)

    def test_kappa_one_ratio_four(self):
        mix_probe = MixingParams(beta_bar=1.0, b=1.0, kappa=1.0)
        lam_cap = capital_lambda(200, 0.2, mix_probe)
        mix = MixingParams(beta_bar=1.0, b=lam_cap / 4.0, kappa=1.0)
        assert capital_i(200, 0.2, mix) == pytest.approx(128.0 * lam_cap, rel=1e-12)

    def test_rescaling_identities_on_grid(self):
        mix = MixingParams(beta_bar=2.0, b=0.7, kappa=1.3)
        for n in (2, 17, 1_000, 250_000, 10**7):
            for delta in (0.9, 0.3, 0.01, 1e-5):
                j = capital_j(n, delta, mix)
                g = gamma_cap(n, delta, mix)
                assert abs(j - capital_i(n, 4 * n * n * delta, mix)) <= 1e-12 * abs(j)
                assert abs(g - capital_lambda(n, 4 * n * n * delta, mix)) <= 1e-12 * abs(g)

    def test_independence_convention_collapse(self):
        # beta_bar -> 0 and b -> inf: J reduces to 32 (log(2/delta) + log(4 e^2))
        delta = 0.07
        j = capital_j(10_000, delta, FAST_MIXING)
        assert j == pytest.approx(32.0 * (math.log(2 / delta) + math.log(4 * math.e**2)), rel=1e-12)


class TestJGammaEpsilon:
    def test_triple_is_consistent(self):
        mix = MixingParams()
        j, g, eps = capital_j_gamma(5_000, 0.05, mix, 0.5, 0.9, 3, 2, 1.0, 2.0)
        assert j == capital_j(5_000, 0.05, mix)
        assert g == gamma_cap(5_000, 0.05, mix)
        assert eps == epsilon_trace(5_000, 0.5, 0.9, 3, 2, 1.0, 2.0)

    def test_epsilon_vanishes(self):
        assert epsilon_trace(2_000_000, 0.5, 0.9, 2, 2, 1.0, 2.0) < epsilon_trace(
            1_000_000, 0.5, 0.9, 2, 2, 1.0, 2.0
        )

    def test_lambda_zero_uses_unit_depth(self):
        assert m_star(1_000, 0.0, 0.99) == 1
        value = epsilon_trace(1_000, 0.0, 0.99, 4, 4, 1.0, 2.0)
        assert value == pytest.approx(2 * 1 * 4 * 2.0 / 999, rel=1e-12)

    def test_m_star_values(self):
        assert m_star(2, 0.5, 0.9) == 0  # log(1) = 0
        assert m_star(101, 0.5, 0.2) == math.ceil(math.log(100) / math.log(10.0))
        with pytest.raises(ValueError):
            m_star(1, 0.5, 0.9)


class TestNZero:
    def test_minimality_contract(self):
        inputs = inputs_for(gamma=0.3, lam=0.3, d=1, nu=1.0, delta=0.5, mixing=FAST_MIXING)
        n0 = n_zero(0.5, inputs)
        probe = replace(inputs, delta=0.5)
        assert n_zero_expression(n0, probe) < 1.0
        assert n_zero_expression(n0 - 1, probe) >= 1.0

    def test_matches_scan_oracle(self):
        cases = [
            dict(gamma=0.2, lam=0.1, d=1, nu=1.0, delta=0.9, mixing=FAST_MIXING),
            dict(gamma=0.3, lam=0.3, d=1, nu=1.0, delta=0.5, mixing=FAST_MIXING),
            dict(gamma=0.3, lam=0.2, d=2, nu=2.0, delta=0.5, mixing=FAST_MIXING),
            dict(gamma=0.35, lam=0.0, d=1, nu=1.0, delta=0.5, mixing=FAST_MIXING),
        ]
        for case in cases:
            inputs = inputs_for(**case)
            assert n_zero(case["delta"], inputs) == scan_n_zero(replace(inputs, delta=case["delta"]))

    def test_expression_decreases_on_doubling_grid(self):
        inputs = inputs_for(gamma=0.9, lam=0.5, d=3, nu=0.4, delta=0.05)
        for k in range(6, 21):
            assert n_zero_expression(2 ** (k + 1), inputs) < n_zero_expression(2**k, inputs)

    def test_garnet_scale_search(self):
        # realistic conditioning: n0 is astronomically large but still found
        inst = make_instance(100, 20, seed=0, gamma=0.99)
        inputs = BoundInputs(
            n=2, delta=0.05, lam=0.5, gamma=0.99, d=20, L=1.0, nu=inst.geom.nu,
            mixing=MixingParams(1.0, 1.0, 1.0),
        )
        n0 = n_zero(0.05, inputs)
        assert n0 > 10**12
        probe = replace(inputs, delta=0.05)
        assert n_zero_expression(n0, probe) < 1.0
        assert n_zero_expression(n0 - 1, probe) >= 1.0

    def test_not_found_on_pathological_inputs(self):
        inputs = inputs_for(gamma=0.99999, lam=0.9, d=100, nu=1e-30, delta=0.05)
        with pytest.raises(NotFound):
            n_zero(0.05, inputs)


class TestEstimationBound:
    def test_sqrt_scaling_when_doubling(self):
        for n in (10_000, 40_000, 160_000):
            a = estimation_bound(inputs_for(n=n))
            b = estimation_bound(inputs_for(n=2 * n))
            assert math.sqrt(2) * (1 - 0.15) <= a / b <= math.sqrt(2) * (1 + 0.15)

    def test_monotone_in_lambda(self):
        low = estimation_bound(inputs_for(lam=0.3))
        high = estimation_bound(inputs_for(lam=0.9))
        assert high > low

    def test_strictly_decreasing_beyond_small_n(self):
        values = [estimation_bound(inputs_for(n=n)) for n in (100, 1_000, 10_000, 100_000)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestEpsilonTerms:
    def test_epsilon0_exact_halving(self):
        n = 4_001
        terms_a = epsilon_terms(inputs_for(n=n))
        terms_b = epsilon_terms(inputs_for(n=2 * n - 1))
        assert terms_a.epsilon0 / terms_b.epsilon0 == 2.0

    def test_c_value_below_inverse_norm_oracle(self):
        # C <= 1/|A^{-1}|_2 = smallest singular value of A, via dense SVD
        for seed in range(4):
            inst = make_instance(15, 4, seed=seed, gamma=0.9)
            for lam in (0.0, 0.5, 0.9):
                sol = exact_A_b(inst.mrp, inst.phi, inst.geom, lam)
                smallest = np.linalg.svd(sol.A, compute_uv=False)[-1]
                c_value = (1 - 0.9) * inst.geom.nu / (1 - lam * 0.9)
                assert c_value <= smallest * (1 + 1e-10)

    def test_td_residual_cap_matches_empirical(self):
        inst = make_instance(12, 3, seed=21, gamma=0.9)
        terms = epsilon_terms(
            inputs_for(n=5_000, gamma=0.9, lam=0.5, d=3, nu=inst.geom.nu)
        )
        sol = exact_A_b(inst.mrp, inst.phi, inst.geom, 0.5)
        traj = sample_trajectory(inst.mrp, inst.mu, 5_000, seed=3)
        residuals = (
            sol.v_fixed[traj.states[:-1]]
            - 0.9 * sol.v_fixed[traj.states[1:]]
            - traj.rewards[:-1]
        )
        assert np.abs(residuals).max() <= terms.delta_bound * (1 + 1e-10)

    def test_all_terms_positive_and_ordered(self):
        terms = epsilon_terms(inputs_for(n=100_000))
        assert terms.epsilon0 > 0 and terms.epsilon1 > terms.epsilon0
        assert terms.epsilon2 > terms.epsilon0_prime > 0
        assert terms.C > 0 and terms.delta_bound > 0


class TestApproximationBound:
    def test_lambda_one_coefficients_are_one(self):
        plain, improved = approximation_bound(1.0, 0.77, 2.5)
        assert plain == pytest.approx(2.5, rel=1e-14)
        assert improved == pytest.approx(2.5, rel=1e-14)

    def test_improved_never_exceeds_plain_on_grid(self):
        for lam in np.linspace(0.0, 1.0, 100):
            for gamma in np.linspace(0.01, 0.99, 100):
                plain, improved = approximation_bound(float(lam), float(gamma), 1.0)
                assert improved <= plain * (1 + 1e-12)

    def test_empirical_validity_on_instances(self):
        for seed in range(5):
            inst = make_instance(20, 5, seed=seed + 200, gamma=0.9)
            resid = mu_norm(inst.mu, inst.v - inst.geom.project(inst.v))
            for lam in LAMBDA_GRID:
                sol = exact_A_b(inst.mrp, inst.phi, inst.geom, lam)
                measured = mu_norm(inst.mu, inst.v - sol.v_fixed)
                plain, improved = approximation_bound(lam, 0.9, resid)
                assert measured <= improved * (1 + 1e-9)
                assert measured <= plain * (1 + 1e-9)


class TestGlobalBound:
    def test_large_n_limit_is_approximation_only(self):
        inputs = inputs_for(n=10**16, lam=1.0, gamma=0.5, d=1, nu=1.0, mixing=FAST_MIXING)
        report = global_bound(inputs, 1.0)
        assert report.approx_plain == pytest.approx(1.0, rel=1e-14)
        assert report.global_bound == pytest.approx(1.0, rel=1e-2)
        assert report.n0_ok

    def test_interior_minimizing_lambda(self):
        values = {}
        for lam in LAMBDA_GRID:
            inputs = BoundInputs(
                n=10**12, delta=0.05, lam=lam, gamma=0.99, d=1, L=1.0, nu=1.0,
                mixing=FAST_MIXING,
            )
            values[lam] = global_bound(inputs, 1.0).global_bound
        best = min(values, key=values.get)
        assert 0.0 < best < 1.0

    def test_lambda_star_non_decreasing_in_n(self):
        # on the literal grid 1e3..1e6 and on a wide grid covering the sweep
        for gamma, resid, grid, mix in (
            (0.5, 3.0, (10**3, 10**4, 10**5, 10**6), FAST_MIXING),
            (0.99, 1.5, (10**8, 10**10, 10**12, 10**14, 10**16), FAST_MIXING),
        ):
            stars = []
            for n in grid:
                vals = [
                    global_bound(
                        BoundInputs(
                            n=n, delta=0.05, lam=lam, gamma=gamma, d=1, L=1.0, nu=1.0,
                            mixing=mix,
                        ),
                        resid,
                    ).global_bound
                    for lam in LAMBDA_GRID
                ]
                stars.append(LAMBDA_GRID[int(np.argmin(vals))])
            assert all(a <= b for a, b in zip(stars, stars[1:])), stars

    def test_report_invariants(self):
        report = global_bound(inputs_for(n=50_000), 0.7)
        assert report.global_bound >= report.approx_plain
        assert report.estimation_bound >= 0 and report.h_explicit >= 0
        assert report.approx_improved <= report.approx_plain
        assert report.m_star == m_star(50_000, 0.5, 0.9)
        assert isinstance(report.n0_ok, bool)

    def test_n0_flag_false_below_threshold(self):
        inputs = inputs_for(n=1_000, gamma=0.9, lam=0.5, d=3, nu=0.4)
        report = global_bound(inputs, 1.0)
        assert not report.n0_ok
        assert report.n0 > 1_000


class TestCoverage:
    def test_estimation_bound_holds_at_admissible_n(self):
        # constant feature => nu = 1 exactly; the guarantee applies from n0 on
        base = BoundInputs(
            n=2, delta=0.1, lam=0.1, gamma=0.2, d=1, L=1.0, nu=1.0, mixing=FAST_MIXING
        )
        n0 = n_zero(0.1, base)
        inst = make_instance(5, 1, seed=77, gamma=0.2)
        phi = FeatureMap(Phi=np.ones((5, 1)), L=1.0)
        geom = mu_geometry(phi, inst.mu)
        sol = exact_A_b(inst.mrp, phi, geom, 0.1)
        inputs = replace(base, n=n0, nu=geom.nu)
        cap = estimation_bound(inputs) + h_explicit(inputs)
        exceedances = 0
        runs = 200
        for seed in range(runs):
            traj = sample_trajectory(inst.mrp, inst.mu, n0, seed=9_000 + seed)
            est = lstd_estimate(traj, phi, 0.1, 0.2)
            if lstd_error(est, sol, phi, inst.mu) > cap:
                exceedances += 1
        assert exceedances / runs <= 0.1
