"""Singular value thresholding and pull-back factorization."""

import numpy as np
import pytest

from blockcs.completion import (
    SvtConfig,
    SvtResult,
    factor_completed,
    shrink_singular_values,
    svt_complete,
)
from blockcs.errors import ContractViolation, DivergenceError, MissingCoverageWarning
from blockcs.sensing import ObservationMatrix, build_union, identity_pool, make_pixel_mask


def low_rank_observation(m, n, k, frac, rng):
    target = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
    flat = rng.choice(m * n, size=int(frac * m * n), replace=False)
    ru, cv = np.unravel_index(flat, (m, n))
    obs = ObservationMatrix(shape=(m, n), row_idx=ru, col_idx=cv, values=target[ru, cv])
    return target, obs


class TestShrink:
    def test_diagonal_example(self):
        out = shrink_singular_values(np.diag([3.0, 1.0]), tau=2.0)
        np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-12)

    def test_zero_tau_is_identity(self, rng):
        a = rng.standard_normal((4, 6))
        np.testing.assert_allclose(shrink_singular_values(a, 0.0), a, atol=1e-12)

    def test_matches_explicit_svd(self, rng):
        a = rng.standard_normal((5, 3))
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        expected = (u * np.maximum(s - 0.7, 0.0)) @ vt
        np.testing.assert_allclose(shrink_singular_values(a, 0.7), expected, atol=1e-12)

    def test_negative_tau_rejected(self):
        with pytest.raises(ContractViolation):
            shrink_singular_values(np.eye(2), -0.1)


class TestSvtConfig:
    def test_schedule_from_observation(self, rng):
        _, obs = low_rank_observation(6, 8, 1, 0.25, rng)
        cfg = SvtConfig.for_observation(obs)
        assert cfg.tau == pytest.approx(5.0 * np.sqrt(8))
        assert cfg.delta == pytest.approx(1.2 * 48 / 12)

    def test_no_observations_rejected(self):
        obs = ObservationMatrix(
            shape=(3, 3), row_idx=np.array([], dtype=int),
            col_idx=np.array([], dtype=int), values=np.array([]),
        )
        with pytest.raises(ContractViolation, match="no observed"):
            SvtConfig.for_observation(obs)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(tau=0.0, delta=1.0),
            dict(tau=1.0, delta=0.0),
            dict(tau=1.0, delta=1.0, max_iters=0),
            dict(tau=1.0, delta=1.0, tol=0.0),
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ContractViolation):
            SvtConfig(**kwargs)


class TestSvtComplete:
    def test_rank2_matrix_completed(self):
        # 60% observed: the regime the pipeline drives this baseline in
        rng = np.random.default_rng(0)
        target, obs = low_rank_observation(60, 200, 2, 0.6, rng)
        result = svt_complete(obs, SvtConfig.for_observation(obs))
        rel = np.linalg.norm(result.completed - target) / np.linalg.norm(target)
        assert rel < 1e-3
        assert result.residual < 1e-6
        assert result.iterations < 500

    def test_zero_observed_values_short_circuit(self):
        obs = ObservationMatrix(
            shape=(3, 4), row_idx=np.array([0, 1, 2, 0]), col_idx=np.array([0, 1, 2, 3]),
            values=np.zeros(4),
        )
        result = svt_complete(obs, SvtConfig(tau=1.0, delta=1.0))
        np.testing.assert_array_equal(result.completed, np.zeros((3, 4)))
        assert result.iterations == 0

    def test_uncovered_rows_warn(self):
        obs = ObservationMatrix(
            shape=(4, 3), row_idx=np.array([0, 0, 1]), col_idx=np.array([0, 1, 2]),
            values=np.ones(3),
        )
        with pytest.warns(MissingCoverageWarning, match="rows"):
            svt_complete(obs, SvtConfig(tau=1.0, delta=1.0, max_iters=5))

    def test_uncovered_columns_warn(self):
        obs = ObservationMatrix(
            shape=(2, 4), row_idx=np.array([0, 1]), col_idx=np.array([0, 1]),
            values=np.ones(2),
        )
        with pytest.warns(MissingCoverageWarning, match="columns"):
            svt_complete(obs, SvtConfig(tau=1.0, delta=1.0, max_iters=5))

    def test_oversized_step_diverges(self):
        rng = np.random.default_rng(1)
        _, obs = low_rank_observation(20, 30, 2, 0.5, rng)
        cfg = SvtConfig(tau=5.0 * np.sqrt(30), delta=400.0, max_iters=200)
        with pytest.raises(DivergenceError):
            svt_complete(obs, cfg)


class TestFactorCompleted:
    def test_recovers_block_and_coefficients(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        coeffs = rng.standard_normal((2, 10))
        union = identity_pool(6)
        block, s = factor_completed(union.rows @ (q @ coeffs), union, k=2)
        np.testing.assert_allclose(block.T @ block, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(block @ s, q @ coeffs, atol=1e-10)
        np.testing.assert_allclose(block @ block.T, q @ q.T, atol=1e-10)

    def test_rank_deficient_union_rejected(self, rng):
        union = build_union([make_pixel_mask(4, [0, 1])])
        with pytest.raises(ContractViolation, match="rank n"):
            factor_completed(rng.standard_normal((2, 5)), union, k=1)

    def test_row_count_checked(self, rng):
        union = identity_pool(4)
        with pytest.raises(ContractViolation, match="rows"):
            factor_completed(rng.standard_normal((3, 5)), union, k=1)

    def test_rank_budget_checked(self, rng):
        union = identity_pool(4)
        with pytest.raises(ContractViolation, match="range"):
            factor_completed(rng.standard_normal((4, 5)), union, k=5)
