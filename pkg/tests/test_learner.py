"""Outer alternating loop: initialization, trace behavior, restarts."""

import warnings

import numpy as np
import pytest

import blockcs.learner as learner_mod
from blockcs.errors import ContractViolation, InitializationFailure
from blockcs.learner import (
    LearnerConfig,
    LearnerState,
    initial_dictionary,
    learn,
    reseed_dead_block,
)
from blockcs.sensing import Measurement, MeasurementSet, make_pixel_mask
from blockcs.synth import gaussian_measurements, generate_planted
from conftest import full_observation


def planted_measurements(seed=0, m=None):
    model = generate_planted(12, (2, 2, 2), (8, 8, 8), seed=seed)
    if m is None:
        return model, full_observation(model.signal_matrix())
    return model, gaussian_measurements(model, m, np.random.default_rng(seed + 50))


class TestLearnerConfig:
    def test_defaults_valid(self):
        cfg = LearnerConfig(k_max=2, r=6)
        assert cfg.L_init is None and cfg.restarts == 1

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(k_max=0, r=4),
            dict(k_max=4, r=3),
            dict(k_max=2, r=6, max_outer_iters=0),
            dict(k_max=2, r=8, L_init=2),  # groups of 4 exceed k_max
            dict(k_max=2, r=6, L_init=0),
            dict(k_max=2, r=6, init="spectral"),
            dict(k_max=2, r=6, sac_every=-1),
            dict(k_max=2, r=6, restarts=0),
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ContractViolation):
            LearnerConfig(**kwargs)


class TestInitialDictionary:
    def test_singleton_blocks_by_default(self, rng):
        _, ms = planted_measurements()
        d = initial_dictionary(ms, LearnerConfig(k_max=2, r=6), rng)
        assert d.blocks == tuple((c,) for c in range(6))
        np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-12)

    def test_l_init_grouping(self, rng):
        _, ms = planted_measurements()
        d = initial_dictionary(ms, LearnerConfig(k_max=2, r=8, L_init=4), rng)
        assert d.blocks == ((0, 1), (2, 3), (4, 5), (6, 7))

    def test_data_init_uses_backprojections(self):
        model, _ = planted_measurements()
        sensor = make_pixel_mask(12, range(12))
        ms = MeasurementSet(
            [Measurement(y=sensor.apply(s.values), sensor=sensor) for s in model.signals]
        )
        cfg = LearnerConfig(k_max=2, r=6, init="data", seed=3)
        rng = np.random.default_rng(5)
        d = initial_dictionary(ms, cfg, rng)
        # every atom is a normalized observed signal under full observation
        sigs = model.signal_matrix()
        units = sigs / np.linalg.norm(sigs, axis=0, keepdims=True)
        for j in range(6):
            dots = np.abs(units.T @ d.atoms[:, j])
            assert dots.max() == pytest.approx(1.0, abs=1e-10)

    def test_rng_controls_data_picks(self):
        _, ms = planted_measurements()
        cfg = LearnerConfig(k_max=2, r=6, init="data")
        a = initial_dictionary(ms, cfg, np.random.default_rng(1))
        b = initial_dictionary(ms, cfg, np.random.default_rng(1))
        c = initial_dictionary(ms, cfg, np.random.default_rng(2))
        np.testing.assert_array_equal(a.atoms, b.atoms)
        assert not np.allclose(a.atoms, c.atoms)


class TestLearn:
    def test_trace_is_monotone(self):
        _, ms = planted_measurements(seed=1, m=8)
        state = learn(ms, LearnerConfig(k_max=2, r=6, max_outer_iters=8, seed=0))
        trace = np.array(state.objective_trace)
        assert np.all(np.diff(trace) <= 1e-9 * np.maximum(trace[:-1], 1.0))

    def test_single_iteration_budget(self):
        _, ms = planted_measurements(seed=1)
        state = learn(ms, LearnerConfig(k_max=2, r=6, max_outer_iters=1))
        assert len(state.objective_trace) == 1

    def test_true_dictionary_init_fits_immediately(self):
        model, ms = planted_measurements(seed=2)
        cfg = LearnerConfig(k_max=2, r=6, max_outer_iters=3, sac_every=0)
        state = learn(ms, cfg, init=model.dictionary)
        assert state.objective < 1e-20

    def test_init_dimension_checked(self):
        model = generate_planted(8, (2,), (4,), seed=0)
        _, ms = planted_measurements()
        with pytest.raises(ContractViolation, match="dimension"):
            learn(ms, LearnerConfig(k_max=2, r=3), init=model.dictionary)

    def test_deterministic_given_seed(self):
        _, ms = planted_measurements(seed=3, m=9)
        cfg = LearnerConfig(k_max=2, r=6, max_outer_iters=4, seed=11)
        a = learn(ms, cfg)
        b = learn(ms, cfg)
        assert a.objective_trace == b.objective_trace
        np.testing.assert_array_equal(a.dictionary.atoms, b.dictionary.atoms)

    def test_restarts_never_worse(self):
        _, ms = planted_measurements(seed=4, m=8)
        base = LearnerConfig(k_max=2, r=6, max_outer_iters=6, seed=5)
        multi = LearnerConfig(k_max=2, r=6, max_outer_iters=6, seed=5, restarts=3)
        assert learn(ms, multi).objective <= learn(ms, base).objective + 1e-12

    def test_restarts_stop_after_exact_fit(self, monkeypatch):
        model, ms = planted_measurements(seed=2)
        calls = []
        original = learner_mod._learn_once

        def counting(*args, **kwargs):
            calls.append(1)
            return original(*args, **kwargs)

        monkeypatch.setattr(learner_mod, "_learn_once", counting)
        cfg = LearnerConfig(k_max=2, r=6, max_outer_iters=3, sac_every=0, restarts=5)
        learn(ms, cfg, init=model.dictionary)
        assert len(calls) == 1

    def test_infeasible_initialization_raises(self):
        model = generate_planted(8, (2,), (4,), seed=0)
        sensor = make_pixel_mask(8, [3])  # one pixel, every size-2 block infeasible
        ms = MeasurementSet(
            [Measurement(y=sensor.apply(s.values), sensor=sensor) for s in model.signals]
        )
        cfg = LearnerConfig(k_max=2, r=2, L_init=1, max_outer_iters=2, restarts=2)
        with pytest.raises(InitializationFailure):
            learn(ms, cfg)

    def test_no_warnings_leak_from_learning(self):
        _, ms = planted_measurements(seed=6, m=7)
        cfg = LearnerConfig(k_max=2, r=6, max_outer_iters=5, seed=1)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            learn(ms, cfg)
        assert [w for w in caught if "blockcs" in w.category.__module__] == []

    def test_structure_search_can_grow_blocks(self):
        model, ms = planted_measurements(seed=7)
        cfg = LearnerConfig(k_max=2, r=6, max_outer_iters=10, init="data", seed=2)
        state = learn(ms, cfg)
        sizes = sorted(len(b) for b in state.dictionary.blocks)
        assert max(sizes) == 2  # singletons merged up to the planted width

    def test_sac_disabled_keeps_structure(self):
        _, ms = planted_measurements(seed=7)
        cfg = LearnerConfig(k_max=2, r=6, sac_every=0, max_outer_iters=3)
        state = learn(ms, cfg)
        assert state.dictionary.blocks == tuple((c,) for c in range(6))


class TestReseedDeadBlock:
    def make_state(self, ms, cfg):
        return learn(ms, cfg)

    def test_replaces_atoms_with_unit_directions(self):
        _, ms = planted_measurements(seed=8, m=8)
        state = self.make_state(ms, LearnerConfig(k_max=2, r=6, max_outer_iters=2))
        out = reseed_dead_block(state, ms, 0, np.random.default_rng(0))
        block = out.dictionary.block(0)
        np.testing.assert_allclose(np.linalg.norm(block, axis=0), 1.0, atol=1e-12)
        assert out.dictionary.blocks == state.dictionary.blocks

    def test_unknown_block_rejected(self):
        _, ms = planted_measurements(seed=8)
        state = self.make_state(ms, LearnerConfig(k_max=2, r=6, max_outer_iters=1))
        with pytest.raises(ContractViolation, match="block"):
            reseed_dead_block(state, ms, 99, np.random.default_rng(0))
