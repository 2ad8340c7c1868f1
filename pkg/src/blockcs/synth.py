"""Planted models, measurement samplers, phase-transition harness, and an
exhaustive rank-based clustering oracle for tiny instances.

A planted model draws orthonormal blocks from Gaussian matrices and iid
normal coefficients, so every planted signal lies exactly on one block's
subspace. The harness sweeps observation fractions, reruns the learner per
trial, and scores success by PSNR against the planted signals.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import subspace_angles

from .errors import ContractViolation
from .learner import LearnerConfig, LearnerState, learn
from .model import BlockDictionary, BlockSparseCode, Signal, reconstruction
from .sensing import Measurement, MeasurementSet, make_gaussian, make_pixel_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantedModel:
    """Ground-truth dictionary, codes, signals and block labels."""

    dictionary: BlockDictionary
    codes: tuple[BlockSparseCode, ...]
    signals: tuple[Signal, ...]
    labels: np.ndarray
    seed: int

    def signal_matrix(self) -> np.ndarray:
        return np.stack([s.values for s in self.signals], axis=1)

    def omega(self, ell: int) -> np.ndarray:
        return np.flatnonzero(self.labels == ell)


def generate_planted(
    n: int,
    block_sizes: Sequence[int],
    counts: Sequence[int],
    seed: int = 0,
    coeff_scale: float = 1.0,
) -> PlantedModel:
    """Draw a planted union-of-subspaces instance.

    Blocks are orthonormalized Gaussian n x k_l matrices; block l gets
    counts[l] signals with iid N(0, coeff_scale^2) coefficients. Richness
    |omega_l| >= k_l + 1 is enforced. Signals are grouped by block in order.
    """
    sizes = [int(k) for k in block_sizes]
    nums = [int(c) for c in counts]
    if len(sizes) != len(nums) or not sizes:
        raise ContractViolation("block_sizes and counts must align and be non-empty")
    for ell, (k, c) in enumerate(zip(sizes, nums)):
        if not 1 <= k <= n:
            raise ContractViolation(f"block {ell} size {k} outside [1, n={n}]")
        if c < k + 1:
            raise ContractViolation(f"block {ell} needs at least k+1={k + 1} signals, got {c}")
    rng = np.random.default_rng(seed)
    cols = []
    blocks = []
    start = 0
    for k in sizes:
        g = rng.standard_normal((n, k))
        u, _, _ = np.linalg.svd(g, full_matrices=False)
        cols.append(u)
        blocks.append(tuple(range(start, start + k)))
        start += k
    atoms = np.concatenate(cols, axis=1)
    dictionary = BlockDictionary(atoms=atoms, blocks=tuple(blocks), k_max=max(sizes))
    codes: list[BlockSparseCode] = []
    signals: list[Signal] = []
    labels: list[int] = []
    for ell, (k, c) in enumerate(zip(sizes, nums)):
        coeffs = coeff_scale * rng.standard_normal((k, c))
        for j in range(c):
            code = BlockSparseCode.from_block(dictionary, ell, coeffs[:, j])
            codes.append(code)
            signals.append(Signal(values=reconstruction(dictionary, code)))
            labels.append(ell)
    return PlantedModel(
        dictionary=dictionary,
        codes=tuple(codes),
        signals=tuple(signals),
        labels=np.array(labels, dtype=np.intp),
        seed=int(seed),
    )


def pixel_mask_measurements(
    model: PlantedModel, m: int, rng: np.random.Generator
) -> MeasurementSet:
    """Observe each planted signal at m uniformly chosen coordinates."""
    n = model.dictionary.n
    if not 1 <= m <= n:
        raise ContractViolation(f"m={m} outside [1, n={n}]")
    out = []
    for sig in model.signals:
        idx = np.sort(rng.choice(n, size=m, replace=False))
        sensor = make_pixel_mask(n, idx)
        out.append(Measurement(y=sensor.apply(sig.values), sensor=sensor))
    return MeasurementSet(out)


def gaussian_measurements(
    model: PlantedModel, m: int, rng: np.random.Generator
) -> MeasurementSet:
    """Observe each planted signal through its own iid Gaussian matrix."""
    n = model.dictionary.n
    out = []
    for sig in model.signals:
        sensor = make_gaussian(m, n, rng)
        out.append(Measurement(y=sensor.apply(sig.values), sensor=sensor))
    return MeasurementSet(out)


def signal_psnr(
    truth: np.ndarray, estimate: np.ndarray, peak: float | None = None
) -> float:
    """PSNR between signal matrices; peak defaults to max |truth|."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise ContractViolation(f"shape mismatch {truth.shape} vs {estimate.shape}")
    if peak is None:
        peak = float(np.max(np.abs(truth)))
        if peak == 0.0:
            raise ContractViolation("all-zero truth has no dynamic range")
    mse = float(np.mean((truth - estimate) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def reconstruct_signals(state: LearnerState) -> np.ndarray:
    """Stack the learned reconstructions D s_i as columns."""
    return np.stack(
        [reconstruction(state.dictionary, c) for c in state.codes], axis=1
    )


@dataclass(frozen=True)
class PhaseTrial:
    fraction: float
    trial: int
    psnr_db: float
    success: bool
    reason: str = ""


@dataclass(frozen=True)
class PhaseResult:
    trials: tuple[PhaseTrial, ...]
    summary: tuple[tuple[float, float], ...]

    def frequency(self, fraction: float) -> float:
        for f, freq in self.summary:
            if abs(f - fraction) < 1e-12:
                return freq
        raise KeyError(fraction)


@dataclass
class PhaseConfig:
    """Planted-model phase sweep over observation fractions.

    One planted instance per sweep (seeded); each (fraction, trial) draws a
    fresh pixel-mask pattern, runs the learner from scratch, and succeeds
    when the reconstruction PSNR beats ``threshold_db``.
    """

    n: int = 64
    block_sizes: tuple[int, ...] = (4, 4, 4, 4)
    count_per_block: int = 96
    fractions: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))
    trials: int = 10
    threshold_db: float = 40.0
    seed: int = 0
    learner: LearnerConfig | None = None

    def learner_config(self) -> LearnerConfig:
        if self.learner is not None:
            return self.learner
        return LearnerConfig(
            k_max=max(self.block_sizes),
            r=sum(self.block_sizes),
            seed=self.seed,
        )


def phase_transition(config: PhaseConfig) -> PhaseResult:
    """Sweep fractions x trials and tabulate success frequencies."""
    model = generate_planted(
        n=config.n,
        block_sizes=config.block_sizes,
        counts=[config.count_per_block] * len(config.block_sizes),
        seed=config.seed,
    )
    truth = model.signal_matrix()
    trials: list[PhaseTrial] = []
    summary: list[tuple[float, float]] = []
    base_cfg = config.learner_config()
    for fi, fraction in enumerate(config.fractions):
        if not 0.0 < fraction <= 1.0:
            raise ContractViolation(f"fraction {fraction} outside (0, 1]")
        m = max(1, int(round(fraction * config.n)))
        hits = 0
        for trial in range(config.trials):
            rng = np.random.default_rng([config.seed, fi, trial])
            measurements = pixel_mask_measurements(model, m, rng)
            cfg = LearnerConfig(
                **{**base_cfg.__dict__, "seed": int(rng.integers(2**31))}
            )
            try:
                state = learn(measurements, cfg)
                value = signal_psnr(truth, reconstruct_signals(state))
                success = bool(value > config.threshold_db)
                reason = ""
            except Exception as exc:  # learner failures count as non-success
                value = float("-inf")
                success = False
                reason = f"{type(exc).__name__}: {exc}"
                log.warning("phase trial failed at fraction %.2f: %s", fraction, reason)
            trials.append(
                PhaseTrial(
                    fraction=float(fraction),
                    trial=trial,
                    psnr_db=value,
                    success=success,
                    reason=reason,
                )
            )
            hits += int(success)
        summary.append((float(fraction), hits / config.trials))
    return PhaseResult(trials=tuple(trials), summary=tuple(summary))


def rank_clustering_oracle(signals: Sequence[Signal] | np.ndarray, k: int) -> np.ndarray:
    """Cluster fully observed signals by subspace via exhaustive rank tests.

    For growing candidate dimension k_test, every (k_test+1)-subset of the
    unassigned signals whose rank is exactly k_test certifies a shared
    k_test-dimensional subspace; subsets spanning the same subspace merge
    into one cluster. Exponential in N, guarded at N <= 12. Returns one
    label per signal. k >= n degenerates to a single cluster (with warning).
    """
    if isinstance(signals, np.ndarray):
        mat = np.asarray(signals, dtype=np.float64)
    else:
        mat = np.stack([s.values for s in signals], axis=1)
    if mat.ndim != 2:
        raise ContractViolation("signals must form an n x N matrix")
    n, total = mat.shape
    if total > 12:
        raise ContractViolation(f"oracle is exponential; N={total} exceeds the guard (12)")
    if k < 1:
        raise ContractViolation("k must be >= 1")
    labels = np.full(total, -1, dtype=np.intp)
    if k >= n:
        warnings.warn("k >= n: every signal set spans trivially; returning one cluster")
        return np.zeros(total, dtype=np.intp)

    def numrank(cols: Sequence[int]) -> int:
        sigma = np.linalg.svd(mat[:, list(cols)], compute_uv=False)
        top = max(float(sigma[0]), np.finfo(float).tiny)
        return int(np.sum(sigma > 1e-10 * top))

    next_label = 0
    remaining = set(range(total))
    for k_test in range(1, k + 1):
        if not remaining:
            break
        members = sorted(remaining)
        found: list[tuple[set[int], np.ndarray]] = []  # (signals, orthonormal span)
        for subset in itertools.combinations(members, k_test + 1):
            if numrank(subset) != k_test:
                continue
            u, sigma, _ = np.linalg.svd(mat[:, list(subset)], full_matrices=False)
            span = u[:, :k_test]
            merged = False
            for group, basis in found:
                angles = subspace_angles(span, basis)
                if np.max(angles, initial=0.0) < 1e-8:
                    group.update(subset)
                    merged = True
                    break
            if not merged:
                found.append((set(subset), span))
        for group, _ in found:
            for i in sorted(group):
                labels[i] = next_label
            next_label += 1
            remaining -= group
    if remaining:
        # leftovers (insufficient richness): one singleton cluster each
        warnings.warn(f"{len(remaining)} signal(s) could not be certified; isolating them")
        for i in sorted(remaining):
            labels[i] = next_label
            next_label += 1
    return labels


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """Label-permutation-invariant partition equality."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    pairing: dict = {}
    reverse: dict = {}
    for x, y in zip(a.tolist(), b.tolist()):
        if pairing.setdefault(x, y) != y or reverse.setdefault(y, x) != x:
            return False
    return True
