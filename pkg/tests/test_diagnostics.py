import math

import numpy as np
import pytest

from hybandit.diagnostics import (
    DiagnosticsSample,
    DiagnosticsTrace,
    check_confidence,
    check_elliptic_potential,
    check_sandwich,
    shared_confidence_residual,
    theory_constants,
    unit_ball_diversity,
    validate_assumption,
)
from hybandit.envs import SyntheticEnvConfig, sample_unit_ball
from hybandit.harness import run_trial, synthetic_environment
from hybandit.linalg import BlockDesign, SparseHybridVector
from hybandit.model import flatten
from hybandit.policies import LINUCB, PolicyConfig, SharedLinearUCB

from test_model import random_params


class TestTheoryConstants:
    def test_frozen_example(self):
        tc = theory_constants(1.0 / 7.0, 5, 5, 25, 80000, 0.1)
        # independent evaluation: (16*49 + 56/3) * log(2*10*25*80000/0.1)
        assert tc.T_m == pytest.approx(15898.398684337997, rel=1e-12)

    def test_rho_one_direct_substitution(self):
        d1, d2, k, t, delta = 4, 3, 6, 1000, 0.05
        tc = theory_constants(1.0, d1, d2, k, t, delta)
        expected = (16 + 8 / 3) * math.log(2 * (d1 + d2) * k * t / delta)
        assert tc.T_m == pytest.approx(expected, rel=1e-12)

    def test_t_o_branch_128_over_rho_sq(self):
        # small T keeps T_m small so the 128/rho^2 branch binds
        rho, d1, d2, k, t, delta = 0.01, 3, 3, 4, 10, 0.1
        tc = theory_constants(rho, d1, d2, k, t, delta)
        t_m = (16 / rho**2 + 8 / (3 * rho)) * math.log(2 * (d1 + d2) * k * t / delta)
        if 128 / rho**2 > 4 * t_m:
            expected = (128 / rho**2) * k**2 * math.log((d1 + d2) * k / delta)
            assert tc.T_o == pytest.approx(expected, rel=1e-12)
        assert tc.T_o >= tc.T_m

    def test_gamma_per_algorithm_present(self):
        tc = theory_constants(0.1, 3, 2, 4, 100, 0.1)
        assert set(tc.gamma) == {"linucb", "dislinucb", "hylinucb"}

    def test_invalid_rho_delta(self):
        with pytest.raises(ValueError):
            theory_constants(0.0, 3, 2, 4, 100, 0.1)
        with pytest.raises(ValueError):
            theory_constants(0.5, 3, 2, 4, 100, 1.1)

    def test_unit_ball_diversity(self):
        assert unit_ball_diversity(5, 5) == pytest.approx(1.0 / 7.0)
        assert unit_ball_diversity(10, 4) == pytest.approx(1.0 / 12.0)


class TestEllipticPotential:
    def test_single_unit_step(self):
        xs = np.zeros((1, 4))
        xs[0, 0] = 1.0
        report = check_elliptic_potential(xs, 1.0)
        assert report.lhs[0] == pytest.approx(1.0)
        assert report.bound[0] == pytest.approx(8 * math.log(1 + 1 / 4))
        assert report.ok

    def test_all_zero_vectors(self):
        report = check_elliptic_potential(np.zeros((10, 3)), 1.0)
        assert np.all(report.lhs == 0.0)
        assert report.ok

    def test_holds_on_5000_random_unit_ball_steps(self):
        rng = np.random.default_rng(77)
        xs = sample_unit_ball(rng, 6, 5000)
        report = check_elliptic_potential(xs, 1.0)
        assert report.ok
        assert report.worst_slack > 0.0

    def test_rejects_bad_preconditions(self, rng):
        with pytest.raises(ValueError):
            check_elliptic_potential(np.ones((3, 2)), 0.5)
        with pytest.raises(ValueError):
            check_elliptic_potential(2.0 * np.ones((3, 2)), 1.0)


class TestConfidence:
    def make_policy(self, params, T=500):
        cfg = PolicyConfig.create(
            LINUCB,
            d1=params.d1,
            d2=params.d2,
            n_arms=params.n_arms,
            S=params.S,
            T=T,
            delta=0.1,
        )
        return SharedLinearUCB(cfg)

    def test_initial_residual_passes(self, rng):
        params = random_params(rng, 3, 2, 5)
        pol = self.make_policy(params)
        report = check_confidence(pol, params)
        lam = pol.config.lam
        expected = math.sqrt(lam) * float(np.linalg.norm(flatten(params).phi))
        assert report.residual == pytest.approx(expected, rel=1e-9)
        assert expected <= 2 * math.sqrt(lam * params.n_arms) * params.S
        assert report.ok

    def test_gamma_zero_fails_on_nonzero_residual(self, rng):
        params = random_params(rng, 3, 2, 4)
        pol = self.make_policy(params)
        report = check_confidence(pol, params, gamma=0.0)
        assert report.residual > 0.0
        assert not report.ok

    def test_residual_matches_dense_oracle(self, rng):
        params = random_params(rng, 3, 2, 4)
        pol = self.make_policy(params)
        for _ in range(60):
            i = int(rng.integers(4))
            x, z = rng.standard_normal(3) / 2, rng.standard_normal(2) / 2
            pol.update(i, x, z, float(rng.standard_normal()))
        delta = pol.phi_hat() - flatten(params).phi
        dense = float(np.sqrt(delta @ pol.design.assemble_dense() @ delta))
        assert shared_confidence_residual(pol, params) == pytest.approx(dense, rel=1e-10)


class TestSandwich:
    def test_fresh_passes(self):
        assert check_sandwich(BlockDesign(3, 2, 4, 1.0)).ok

    def test_adversarial_correlated_features_can_fail(self):
        # x and z perfectly correlated at small t drives the spectrum wide
        bd = BlockDesign(2, 2, 1, 1e-3)
        v = np.array([0.9, 0.1])
        for _ in range(20):
            bd.block_update(SparseHybridVector(0, v, v))
        report = check_sandwich(bd)
        assert not report.ok
        assert report.spectrum_min < 0.5

    def test_diverse_run_passes_late(self, rng):
        bd = BlockDesign(3, 3, 3, 1.0)
        for _ in range(600):
            bd.block_update(
                SparseHybridVector(
                    int(rng.integers(3)),
                    sample_unit_ball(rng, 3),
                    sample_unit_ball(rng, 3),
                )
            )
        assert check_sandwich(bd).ok


def constant_eig_trace(n_samples=10, n_arms=2):
    trace = DiagnosticsTrace("linucb", 0, 0, n_arms, 3, 2)
    for j in range(n_samples):
        t = 100 * (j + 1)
        trace.samples.append(
            DiagnosticsSample(
                round_index=t,
                lambda_min_V=5.0,  # no growth
                lambda_min_W=np.full(n_arms, 5.0),
                sigma_max_B=np.zeros(n_arms),
                tau=np.full(n_arms, t // n_arms, dtype=np.int64),
                sandwich_min=1.0,
                sandwich_max=1.0,
                conf_residual=0.0,
                conf_gamma=1.0,
                elliptic_sum=0.0,
                elliptic_bound=1.0,
            )
        )
    return trace


class TestValidateAssumption:
    def test_flat_eigenvalues_flagged(self):
        report = validate_assumption(constant_eig_trace(), rho_expected=0.2)
        assert report.v_slope == pytest.approx(0.0, abs=1e-12)
        assert not report.v_slope_ok
        assert not report.w_slope_ok

    def test_unit_ball_run_slope_near_analytic(self):
        env = synthetic_environment(
            SyntheticEnvConfig(d1=5, d2=5, n_arms=5, T=4000, noise_std=0.1, env_seed=21)
        )
        _, diag = run_trial("hylinucb", env, 0, diagnostics_every=200, sandwich_every=0)
        rho = unit_ball_diversity(5, 5)
        report = validate_assumption(diag, rho)
        assert report.v_slope == pytest.approx(rho, rel=0.3)
        assert report.v_slope_ok and report.w_slope_ok

    def test_b_norm_bound_holds_on_synthetic_run(self):
        env = synthetic_environment(
            SyntheticEnvConfig(d1=4, d2=4, n_arms=4, T=2000, noise_std=0.1, env_seed=22)
        )
        _, diag = run_trial("linucb", env, 0, diagnostics_every=100, sandwich_every=0)
        report = validate_assumption(diag, unit_ball_diversity(4, 4))
        assert report.b_norm_ok
        assert report.b_ratio_max <= report.b_ratio_bound

    def test_insufficient_samples(self):
        trace = constant_eig_trace(n_samples=1)
        with pytest.raises(ValueError):
            validate_assumption(trace, 0.1)
        with pytest.raises(ValueError):
            validate_assumption(DiagnosticsTrace("x", 0, 0, 2, 3, 2), 0.1)
