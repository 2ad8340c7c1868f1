"""Planted instances, measurement samplers, phase sweeps, clustering oracle."""

import numpy as np
import pytest

from blockcs.errors import ContractViolation
from blockcs.learner import LearnerConfig
from blockcs.synth import (
    PhaseConfig,
    generate_planted,
    gaussian_measurements,
    phase_transition,
    pixel_mask_measurements,
    rank_clustering_oracle,
    reconstruct_signals,
    same_partition,
    signal_psnr,
)
from blockcs.learner import learn
from conftest import full_observation


class TestGeneratePlanted:
    def test_blocks_orthonormal(self):
        model = generate_planted(12, (2, 3, 2), (4, 5, 4), seed=0)
        assert model.dictionary.is_block_orthonormal()
        assert model.dictionary.block_sizes == (2, 3, 2)

    def test_signals_lie_on_their_subspaces(self):
        model = generate_planted(10, (2, 3), (5, 6), seed=1)
        for sig, ell in zip(model.signals, model.labels):
            basis = model.dictionary.block(ell)
            resid = sig.values - basis @ (basis.T @ sig.values)
            assert np.linalg.norm(resid) < 1e-10

    def test_labels_grouped_and_omega(self):
        model = generate_planted(10, (2, 2), (3, 4), seed=2)
        np.testing.assert_array_equal(model.labels, [0, 0, 0, 1, 1, 1, 1])
        np.testing.assert_array_equal(model.omega(1), [3, 4, 5, 6])

    def test_richness_enforced(self):
        with pytest.raises(ContractViolation, match="k\\+1"):
            generate_planted(10, (3,), (3,), seed=0)

    def test_size_bounds(self):
        with pytest.raises(ContractViolation):
            generate_planted(4, (5,), (6,), seed=0)
        with pytest.raises(ContractViolation, match="align"):
            generate_planted(4, (2, 2), (3,), seed=0)

    def test_seed_reproducible(self):
        a = generate_planted(8, (2,), (4,), seed=9)
        b = generate_planted(8, (2,), (4,), seed=9)
        np.testing.assert_array_equal(a.signal_matrix(), b.signal_matrix())

    def test_coeff_scale(self):
        a = generate_planted(8, (2,), (4,), seed=3, coeff_scale=1.0)
        b = generate_planted(8, (2,), (4,), seed=3, coeff_scale=2.5)
        np.testing.assert_allclose(b.signal_matrix(), 2.5 * a.signal_matrix())


class TestSamplers:
    def test_pixel_measurements_match_signals(self):
        model = generate_planted(10, (2,), (4,), seed=0)
        ms = pixel_mask_measurements(model, 6, np.random.default_rng(1))
        for sig, meas in zip(model.signals, ms):
            np.testing.assert_array_equal(meas.y, sig.values[list(meas.sensor.row_ids)])
            assert meas.sensor.m == 6

    def test_pixel_m_validated(self):
        model = generate_planted(10, (2,), (4,), seed=0)
        with pytest.raises(ContractViolation):
            pixel_mask_measurements(model, 0, np.random.default_rng(0))
        with pytest.raises(ContractViolation):
            pixel_mask_measurements(model, 11, np.random.default_rng(0))

    def test_gaussian_measurements_apply_sensors(self):
        model = generate_planted(10, (2,), (4,), seed=0)
        ms = gaussian_measurements(model, 5, np.random.default_rng(2))
        for sig, meas in zip(model.signals, ms):
            np.testing.assert_allclose(meas.y, meas.sensor.rows @ sig.values, atol=1e-12)
            assert meas.sensor.rows.shape == (5, 10)

    def test_gaussian_sensors_differ_per_signal(self):
        model = generate_planted(10, (2,), (4,), seed=0)
        ms = gaussian_measurements(model, 5, np.random.default_rng(2))
        assert not np.allclose(ms[0].sensor.rows, ms[1].sensor.rows)


class TestSignalPsnr:
    def test_hand_value(self):
        truth = np.array([[2.0, 0.0]])
        est = np.zeros((1, 2))
        assert signal_psnr(truth, est) == pytest.approx(3.0102999566398116)

    def test_exact_is_infinite(self):
        truth = np.ones((3, 3))
        assert signal_psnr(truth, truth.copy()) == np.inf

    def test_explicit_peak(self):
        truth = np.zeros((2, 2))
        est = np.full((2, 2), 0.5)
        assert signal_psnr(truth, est, peak=1.0) == pytest.approx(10 * np.log10(4.0))

    def test_validation(self):
        with pytest.raises(ContractViolation, match="shape"):
            signal_psnr(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(ContractViolation, match="dynamic range"):
            signal_psnr(np.zeros((2, 2)), np.ones((2, 2)))


class TestReconstructSignals:
    def test_matches_direct_stack(self):
        model = generate_planted(10, (2, 2), (6, 6), seed=4)
        ms = full_observation(model.signal_matrix())
        state = learn(ms, LearnerConfig(k_max=2, r=4, max_outer_iters=3, init="data"))
        recon = reconstruct_signals(state)
        assert recon.shape == (10, 12)
        direct = np.stack(
            [
                state.dictionary.block(c.active_block) @ c.block_values(state.dictionary)
                for c in state.codes
            ],
            axis=1,
        )
        np.testing.assert_allclose(recon, direct, atol=1e-12)


class TestPhaseTransition:
    def small_config(self, **kwargs):
        base = dict(
            n=8,
            block_sizes=(2, 2),
            count_per_block=6,
            fractions=(1.0,),
            trials=2,
            seed=0,
            learner=LearnerConfig(
                k_max=2, r=4, init="data", max_outer_iters=8, restarts=2
            ),
        )
        base.update(kwargs)
        return PhaseConfig(**base)

    def test_full_observation_succeeds(self):
        result = phase_transition(self.small_config())
        assert len(result.trials) == 2
        assert result.frequency(1.0) == 1.0
        for t in result.trials:
            assert t.success and t.psnr_db > 40.0

    def test_infeasible_fraction_counts_as_failure(self):
        cfg = self.small_config(
            fractions=(0.1,),
            learner=LearnerConfig(k_max=2, r=4, L_init=2, max_outer_iters=3),
        )
        result = phase_transition(cfg)
        assert result.frequency(0.1) == 0.0
        assert all(
            (not t.success) and t.psnr_db == -np.inf and t.reason for t in result.trials
        )

    def test_unknown_fraction_raises_keyerror(self):
        result = phase_transition(self.small_config())
        with pytest.raises(KeyError):
            result.frequency(0.55)

    def test_fraction_validated(self):
        with pytest.raises(ContractViolation, match="fraction"):
            phase_transition(self.small_config(fractions=(0.0,)))

    def test_default_learner_config_from_model(self):
        cfg = PhaseConfig(n=16, block_sizes=(3, 2), seed=5)
        learner = cfg.learner_config()
        assert learner.k_max == 3 and learner.r == 5 and learner.seed == 5


class TestRankClusteringOracle:
    def test_recovers_planted_partition(self):
        model = generate_planted(10, (2, 3), (4, 5), seed=6)
        labels = rank_clustering_oracle(model.signals, k=3)
        assert same_partition(labels, model.labels)

    def test_matrix_input(self):
        model = generate_planted(10, (2, 2), (4, 4), seed=7)
        labels = rank_clustering_oracle(model.signal_matrix(), k=2)
        assert same_partition(labels, model.labels)

    def test_size_guard(self, rng):
        with pytest.raises(ContractViolation, match="exceeds"):
            rank_clustering_oracle(rng.standard_normal((4, 13)), k=2)

    def test_k_at_least_one(self, rng):
        with pytest.raises(ContractViolation):
            rank_clustering_oracle(rng.standard_normal((4, 4)), k=0)

    def test_k_ge_n_collapses_with_warning(self, rng):
        with pytest.warns(UserWarning, match="k >= n"):
            labels = rank_clustering_oracle(rng.standard_normal((3, 5)), k=3)
        np.testing.assert_array_equal(labels, np.zeros(5, dtype=int))

    def test_generic_signals_isolated_with_warning(self, rng):
        # no shared subspace: every signal ends up in its own cluster
        with pytest.warns(UserWarning, match="certified"):
            labels = rank_clustering_oracle(rng.standard_normal((6, 3)), k=2)
        assert len(set(labels.tolist())) == 3


class TestSamePartition:
    def test_permuted_labels_equal(self):
        assert same_partition(np.array([0, 0, 1, 2]), np.array([5, 5, 9, 1]))

    def test_split_detected(self):
        assert not same_partition(np.array([0, 0, 1]), np.array([0, 1, 1]))

    def test_merge_detected(self):
        assert not same_partition(np.array([0, 1]), np.array([0, 0]))

    def test_shape_mismatch(self):
        assert not same_partition(np.array([0, 1]), np.array([0, 1, 1]))
