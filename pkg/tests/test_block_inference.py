"""Exhaustive one-block assignment and usage-driven block merging."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockcs.block_inference import (
    BlockAssignment,
    bomp_assign_all,
    bomp_assign_one,
    compute_usage_sets,
    jaccard,
    sac_merge,
)
from blockcs.errors import ContractViolation, InfeasibleBlockWarning, NoFeasibleBlockError
from blockcs.model import BlockDictionary
from blockcs.sensing import Measurement, MeasurementSet, make_gaussian, make_pixel_mask
from blockcs.synth import gaussian_measurements, generate_planted, pixel_mask_measurements
from conftest import full_observation


class TestBlockAssignment:
    def test_omega_and_counts(self):
        a = BlockAssignment(
            blocks=np.array([0, 1, 0, 2]), residuals=np.zeros(4)
        )
        np.testing.assert_array_equal(a.omega(0), [0, 2])
        np.testing.assert_array_equal(a.counts(4), [2, 1, 1, 0])
        assert len(a) == 4

    def test_negative_residual_rejected(self):
        with pytest.raises(ContractViolation, match=">= 0"):
            BlockAssignment(blocks=np.array([0]), residuals=np.array([-1.0]))


class TestBompAssignOne:
    def test_planted_signal_finds_its_block_exactly(self):
        model = generate_planted(10, (2, 3, 2), (3, 4, 3), seed=4)
        sensor = make_pixel_mask(10, range(10))
        for i, sig in enumerate(model.signals):
            ell, s, resid = bomp_assign_one(sensor.apply(sig.values), sensor, model.dictionary)
            assert ell == model.labels[i]
            assert resid < 1e-10

    def test_residual_is_the_attained_norm(self, rng):
        # y outside the span: residual equals the explicit LS residual norm
        d = BlockDictionary(atoms=np.eye(4)[:, :2], blocks=((0, 1),), k_max=2)
        sensor = make_pixel_mask(4, range(4))
        y = np.array([1.0, 2.0, 3.0, 4.0])
        ell, s, resid = bomp_assign_one(y, sensor, d)
        assert ell == 0
        np.testing.assert_allclose(s, [1.0, 2.0])
        assert resid == pytest.approx(np.linalg.norm([3.0, 4.0]))

    def test_tie_breaks_to_smallest_index(self, rng):
        atoms = rng.standard_normal((5, 1))
        d = BlockDictionary(
            atoms=np.hstack([atoms, atoms]), blocks=((0,), (1,)), k_max=1
        )
        sensor = make_pixel_mask(5, range(5))
        ell, _, _ = bomp_assign_one(rng.standard_normal(5), sensor, d)
        assert ell == 0

    def test_small_m_blocks_are_skipped_with_warning(self, rng):
        model = generate_planted(8, (1, 3), (2, 4), seed=0)
        sensor = make_pixel_mask(8, [0, 4])  # m=2 < 3: block 1 infeasible
        y = sensor.apply(model.signals[0].values)
        with pytest.warns(InfeasibleBlockWarning):
            ell, _, _ = bomp_assign_one(y, sensor, model.dictionary)
        assert ell == 0

    def test_no_feasible_block(self, rng):
        model = generate_planted(8, (3, 3), (4, 4), seed=0)
        sensor = make_pixel_mask(8, [2])  # m=1 < every block size
        with pytest.warns(InfeasibleBlockWarning):
            with pytest.raises(NoFeasibleBlockError):
                bomp_assign_one(sensor.apply(model.signals[0].values), sensor, model.dictionary)

    @given(st.integers(min_value=0, max_value=10 ** 6))
    def test_minimum_residual_over_all_blocks(self, seed):
        # oracle: recompute every block's LS fit independently with lstsq
        rng = np.random.default_rng(seed)
        n, sizes = 7, (2, 3, 1)
        r = sum(sizes)
        atoms = rng.standard_normal((n, r))
        blocks, start = [], 0
        for k in sizes:
            blocks.append(tuple(range(start, start + k)))
            start += k
        d = BlockDictionary(atoms=atoms, blocks=tuple(blocks), k_max=max(sizes))
        sensor = make_gaussian(5, n, rng)
        y = rng.standard_normal(5)
        ell, s, resid = bomp_assign_one(y, sensor, d)
        best = min(
            np.linalg.norm(y - (sensor.rows @ d.block(b)) @ np.linalg.lstsq(
                sensor.rows @ d.block(b), y, rcond=None
            )[0])
            for b in range(d.num_blocks)
        )
        assert resid == pytest.approx(best, rel=1e-8, abs=1e-10)


class TestBompAssignAll:
    def test_planted_assignment_recovered(self):
        model = generate_planted(12, (2, 2, 2), (5, 5, 5), seed=9)
        ms = gaussian_measurements(model, 8, np.random.default_rng(3))
        assignment, codes = bomp_assign_all(ms, model.dictionary)
        np.testing.assert_array_equal(assignment.blocks, model.labels)
        for i, code in enumerate(codes):
            assert code.active_block == model.labels[i]

    def test_codes_reproduce_measurements(self):
        model = generate_planted(10, (3, 2), (4, 4), seed=2)
        ms = pixel_mask_measurements(model, 6, np.random.default_rng(0))
        _, codes = bomp_assign_all(ms, model.dictionary)
        for meas, code in zip(ms, codes):
            recon = model.dictionary.block(code.active_block) @ code.block_values(
                model.dictionary
            )
            np.testing.assert_allclose(meas.sensor.apply(recon), meas.y, atol=1e-8)

    def test_error_carries_signal_index(self):
        model = generate_planted(8, (3,), (4,), seed=0)
        good = make_pixel_mask(8, range(8))
        bad = make_pixel_mask(8, [1])
        ms = MeasurementSet(
            [
                Measurement(y=good.apply(model.signals[0].values), sensor=good),
                Measurement(y=bad.apply(model.signals[1].values), sensor=bad),
            ]
        )
        with pytest.warns(InfeasibleBlockWarning):
            with pytest.raises(NoFeasibleBlockError) as err:
                bomp_assign_all(ms, model.dictionary)
        assert err.value.signal == 1

    def test_dimension_mismatch(self):
        model = generate_planted(8, (2,), (3,), seed=0)
        other = generate_planted(6, (2,), (3,), seed=0)
        ms = full_observation(other.signal_matrix())
        with pytest.raises(ContractViolation, match="dictionary in"):
            bomp_assign_all(ms, model.dictionary)


class TestUsageSets:
    def test_planted_users_show_up(self):
        model = generate_planted(10, (2, 2), (5, 5), seed=6)
        ms = full_observation(model.signal_matrix())
        usage = compute_usage_sets(ms, model.dictionary)
        assert usage[0] >= set(range(5))
        assert usage[1] >= set(range(5, 10))

    def test_zero_signal_uses_nothing(self):
        model = generate_planted(6, (2,), (3,), seed=1)
        sensor = make_pixel_mask(6, range(6))
        ms = MeasurementSet([Measurement(y=np.zeros(6), sensor=sensor)])
        usage = compute_usage_sets(ms, model.dictionary)
        assert usage == [set()]

    def test_energy_threshold_filters_weak_fits(self, rng):
        # a signal orthogonal to the block explains ~0% of its energy
        d = BlockDictionary(atoms=np.eye(4)[:, :1], blocks=((0,),), k_max=1)
        sensor = make_pixel_mask(4, range(4))
        ms = MeasurementSet([Measurement(y=np.array([0.0, 5.0, 0.0, 0.0]), sensor=sensor)])
        assert compute_usage_sets(ms, d) == [set()]


class TestJaccard:
    def test_values(self):
        assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
        assert jaccard(set(), set()) == 0.0
        assert jaccard({1}, {1}) == 1.0

    @given(
        st.sets(st.integers(0, 20)),
        st.sets(st.integers(0, 20)),
    )
    def test_bounds_and_symmetry(self, a, b):
        v = jaccard(a, b)
        assert 0.0 <= v <= 1.0
        assert v == jaccard(b, a)


class TestSacMerge:
    def make_dict(self, num_blocks, seed=0):
        rng = np.random.default_rng(seed)
        atoms = rng.standard_normal((8, num_blocks))
        blocks = tuple((i,) for i in range(num_blocks))
        return BlockDictionary(atoms=atoms, blocks=blocks, k_max=4)

    def test_merges_identical_usage(self):
        d = self.make_dict(3)
        merged = sac_merge(d, [{0, 1}, {0, 1}, {5}], threshold=0.1)
        assert merged.num_blocks == 2
        assert merged.blocks[0] == (0, 1)
        assert merged.blocks[1] == (2,)
        np.testing.assert_array_equal(merged.atoms, d.atoms)

    def test_no_merge_below_threshold(self):
        d = self.make_dict(2)
        merged = sac_merge(d, [{0, 1, 2}, {2, 3, 4}], threshold=0.5)
        assert merged.blocks == d.blocks

    def test_threshold_is_strict(self):
        d = self.make_dict(2)
        # jaccard exactly at the threshold does not merge
        merged = sac_merge(d, [{0}, {0, 1}], threshold=0.5)
        assert merged.num_blocks == 2

    def test_k_max_budget_blocks_merge(self):
        rng = np.random.default_rng(1)
        d = BlockDictionary(
            atoms=rng.standard_normal((8, 4)), blocks=((0, 1), (2, 3)), k_max=3
        )
        merged = sac_merge(d, [{0, 1}, {0, 1}])
        assert merged.blocks == d.blocks

    def test_greedy_picks_highest_similarity_first(self):
        d = self.make_dict(3)
        # pair (1,2) is identical; block 0 overlaps both at 0.25 only
        merged = sac_merge(d, [{0, 9}, {0, 1, 2}, {0, 1, 2}], threshold=0.3)
        assert merged.num_blocks == 2
        assert (1, 2) in merged.blocks

    def test_merge_cascades_until_no_pair_qualifies(self):
        d = self.make_dict(3)
        merged = sac_merge(d, [{0}, {0}, {0}], threshold=0.1)
        assert merged.num_blocks == 1
        assert merged.blocks[0] == (0, 1, 2)

    def test_usage_count_checked(self):
        d = self.make_dict(2)
        with pytest.raises(ContractViolation, match="usage sets"):
            sac_merge(d, [{0}])
