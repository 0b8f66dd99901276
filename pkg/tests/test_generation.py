"""Seeded generation: ground truth, designs, noise, full batches."""

import numpy as np
import pytest

from sparse_csg import (
    CoalitionUniverse,
    ConfigError,
    DesignConfig,
    NoiseConfig,
    generate_design,
    generate_noise,
    generate_theta,
    synthesize_batch,
)


class TestGenerateTheta:
    def test_degenerate_dense_case(self):
        truth = generate_theta(5, 5, theta_min=1.0, magnitude_cap=1.0, seed=3)
        assert np.array_equal(truth.theta_star, np.ones(5))
        assert truth.support == (0, 1, 2, 3, 4)

    def test_zero_sparsity_rejected(self):
        with pytest.raises(ConfigError):
            generate_theta(5, 0, theta_min=1.0, magnitude_cap=1.0)

    def test_sparsity_above_m_rejected(self):
        with pytest.raises(ConfigError):
            generate_theta(5, 6, theta_min=1.0, magnitude_cap=1.0)

    def test_deterministic_in_seed(self):
        a = generate_theta(50, 3, 0.5, 2.0, seed=42)
        b = generate_theta(50, 3, 0.5, 2.0, seed=42)
        c = generate_theta(50, 3, 0.5, 2.0, seed=43)
        assert np.array_equal(a.theta_star, b.theta_star)
        assert not np.array_equal(a.theta_star, c.theta_star)

    def test_rademacher_signs(self):
        truth = generate_theta(200, 100, 0.5, 2.0, sign_mode="rademacher", seed=1)
        nz = truth.theta_star[list(truth.support)]
        assert (nz > 0).any() and (nz < 0).any()
        assert np.all(np.abs(nz) >= 0.5)


class TestGenerateDesign:
    def test_all_ones_when_p_one(self):
        cfg = DesignConfig(m=4, episodes=6, activation_probs=1.0, row_cap=4,
                           normalise_columns=False, seed=0)
        x, zeros = generate_design(cfg)
        assert np.array_equal(x, np.ones((6, 4)))
        assert zeros == ()

    def test_row_cap_one(self):
        cfg = DesignConfig(m=10, episodes=200, activation_probs=0.5, row_cap=1,
                           normalise_columns=False, seed=1)
        x, _ = generate_design(cfg)
        assert ((x != 0).sum(axis=1) <= 1).all()

    def test_row_cap_always_enforced(self):
        cfg = DesignConfig(m=30, episodes=500, activation_probs=0.4, row_cap=5,
                           normalise_columns=False, seed=2)
        x, _ = generate_design(cfg)
        assert ((x != 0).sum(axis=1) <= 5).all()

    def test_activation_frequency_concentration(self):
        # Binomial oracle: per-column activation frequency should stay within
        # 3 standard errors of p for at least 95% of columns.
        p, t, m = 0.1, 400, 100
        cfg = DesignConfig(m=m, episodes=t, activation_probs=p, row_cap=10,
                           normalise_columns=False, seed=7)
        x, _ = generate_design(cfg)
        freq = (x != 0).mean(axis=0)
        band = 3 * np.sqrt(p * (1 - p) / t)
        inside = np.abs(freq - p) <= band
        assert inside.mean() >= 0.95

    def test_column_normalisation(self):
        cfg = DesignConfig(m=20, episodes=300, activation_probs=0.2, row_cap=20, seed=3)
        x, zeros = generate_design(cfg)
        sq = (x ** 2).sum(axis=0)
        nonzero = [j for j in range(20) if j not in zeros]
        assert np.all(np.abs(sq[nonzero] - 300) / 300 <= 1e-10)

    def test_zero_columns_reported_untouched(self):
        cfg = DesignConfig(m=50, episodes=5, activation_probs=0.02, row_cap=50, seed=4)
        x, zeros = generate_design(cfg)
        assert len(zeros) > 0
        assert np.array_equal(x[:, list(zeros)], np.zeros((5, len(zeros))))

    def test_deterministic_in_seed(self):
        cfg = DesignConfig(m=40, episodes=100, activation_probs=0.3, row_cap=8, seed=9)
        x1, z1 = generate_design(cfg)
        x2, z2 = generate_design(cfg)
        assert np.array_equal(x1, x2) and z1 == z2

    def test_empirical_gram_matches_independent_activation_limit(self):
        # With q = m the binary unnormalised design has population Gram
        # diag p, off-diagonal p^2; check entrywise at T = 1e5.
        p, m, t = 0.2, 12, 100_000
        cfg = DesignConfig(m=m, episodes=t, activation_probs=p, row_cap=m,
                           normalise_columns=False, seed=11)
        x, _ = generate_design(cfg)
        gram = x.T @ x / t
        sigma = np.full((m, m), p * p)
        np.fill_diagonal(sigma, p)
        assert np.max(np.abs(gram - sigma)) <= 0.01


class TestGenerateNoise:
    def test_sigma_zero_is_exact_zero(self):
        assert np.array_equal(generate_noise(100, NoiseConfig(sigma=0.0, seed=1)), np.zeros(100))

    def test_gaussian_mean_concentrates(self):
        eps = generate_noise(1_000_000, NoiseConfig(sigma=2.0, seed=5))
        assert abs(eps.mean()) <= 4 * 2.0 / 1000

    def test_bounded_uniform_support_and_scale(self):
        sigma = 1.5
        eps = generate_noise(200_000, NoiseConfig(sigma=sigma, distribution="bounded_uniform", seed=6))
        assert np.max(np.abs(eps)) <= sigma * np.sqrt(3)
        assert abs(eps.std() - sigma) <= 0.02

    def test_deterministic_in_seed(self):
        cfg = NoiseConfig(sigma=1.0, seed=77)
        assert np.array_equal(generate_noise(50, cfg), generate_noise(50, cfg))


class TestSynthesizeBatch:
    def setup_method(self):
        self.universe = CoalitionUniverse.all_up_to_size(4, 2)

    def test_zero_theta_zero_noise_gives_zero_response(self):
        from sparse_csg import GroundTruth

        truth = GroundTruth(theta_star=np.zeros(self.universe.m), support=(), sparsity=0, theta_min=1.0)
        batch = synthesize_batch(
            self.universe,
            truth,
            DesignConfig(m=self.universe.m, episodes=30, activation_probs=0.3, row_cap=4, seed=2),
            NoiseConfig(sigma=0.0),
        )
        assert np.array_equal(batch.response, np.zeros(30))
        assert np.array_equal(batch.noise, np.zeros(30))

    def test_noiseless_residual_exactly_zero(self):
        truth = generate_theta(self.universe.m, 3, 0.5, 1.5, seed=4)
        batch = synthesize_batch(
            self.universe,
            truth,
            DesignConfig(m=self.universe.m, episodes=50, activation_probs=0.4, row_cap=6, seed=5),
            NoiseConfig(sigma=0.0),
        )
        assert np.linalg.norm(batch.response - batch.design @ truth.theta_star) == 0.0

    def test_stored_noise_reproduces_response_bit_exactly(self):
        truth = generate_theta(self.universe.m, 2, 0.5, 1.5, seed=6)
        batch = synthesize_batch(
            self.universe,
            truth,
            DesignConfig(m=self.universe.m, episodes=80, activation_probs=0.3, row_cap=5, seed=7),
            NoiseConfig(sigma=0.7, seed=8),
        )
        assert np.array_equal(batch.response - batch.design @ truth.theta_star, batch.noise)

    def test_dimension_mismatch(self):
        truth = generate_theta(3, 1, 1.0, 1.0, seed=1)
        with pytest.raises(Exception):
            synthesize_batch(
                self.universe,
                truth,
                DesignConfig(m=3, episodes=10, activation_probs=0.5, row_cap=2, seed=1),
                NoiseConfig(sigma=0.0),
            )
