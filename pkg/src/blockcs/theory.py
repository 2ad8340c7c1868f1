"""Recoverability conditions: spark, subspace coherence, sample-count bounds.

Implements the calculators behind two kinds of guarantees: exact-recovery
conditions for the learned union of subspaces (spark of the projected
dictionary, per-block signal richness, non-degeneracy) and low-rank matrix
completion requirements for each block's observation pattern (coherence
driven sample bound plus a coupon-collector bound on missing rows).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ContractViolation
from .block_inference import BlockAssignment
from .model import BlockDictionary, BlockSparseCode, reconstruction
from .sensing import KIND_GAUSSIAN, MeasurementSet, SensingEnsemble, UnionMatrix

_RANK_CUTOFF = 1e-10


class SparkResult(NamedTuple):
    """Smallest dependent column-subset size, or a certified lower bound.

    ``exhaustive`` is False when the search stopped at max_subset without
    finding a dependent subset; ``value`` is then ``inf`` and only certifies
    spark > max_subset. Full-column-rank matrices searched exhaustively
    return r + 1 by convention.
    """

    value: float
    exhaustive: bool


def spark(matrix: np.ndarray, max_subset: int = 6) -> SparkResult:
    """Exhaustive spark search over column subsets of size <= max_subset.

    A subset counts as dependent when its smallest singular value falls at
    or below 1e-10 times its largest.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise ContractViolation("spark needs a matrix with at least one column")
    if max_subset < 1:
        raise ContractViolation("max_subset must be >= 1")
    nrows, ncols = a.shape
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms <= _RANK_CUTOFF * max(norms.max(), 1.0)):
        return SparkResult(1.0, True)
    limit = min(max_subset, ncols)
    for size in range(2, limit + 1):
        if size > nrows:
            # wider than tall is dependent without looking at entries
            return SparkResult(float(size), True)
        for subset in itertools.combinations(range(ncols), size):
            sub = a[:, subset]
            sigma = np.linalg.svd(sub, compute_uv=False)
            if sigma[-1] <= _RANK_CUTOFF * sigma[0]:
                return SparkResult(float(size), True)
    # any (nrows+1)-subset is automatically dependent, so reaching here with
    # the budget beyond min(ncols, nrows+1) proves full column rank
    if limit >= min(ncols, nrows + 1):
        return SparkResult(float(ncols + 1), True)
    return SparkResult(math.inf, False)


def coherence(basis: np.ndarray) -> float:
    """Subspace coherence (n/k) max_{u,v} (z_u^T e_v)^2 of an orthonormal basis.

    The maximum runs over basis columns z_u and standard basis vectors e_v,
    so the value depends on the particular orthonormal basis supplied (SVD
    factors are the canonical choice here). Bounded in [1, n/k].
    """
    z = np.asarray(basis, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < z.shape[1] or z.shape[1] < 1:
        raise ContractViolation("basis must be n x k with n >= k >= 1")
    n, k = z.shape
    if np.max(np.abs(z.T @ z - np.eye(k))) > 1e-8:
        raise ContractViolation("basis columns must be orthonormal")
    return float(n / k * np.max(z * z))


class MuEll(NamedTuple):
    mu0: float
    mu1: float
    mu: float


def mu_ell(block_matrix: np.ndarray, k: int) -> MuEll:
    """Coherence parameters of a rank-k observed block matrix Y.

    mu0 is the larger of the column-space and row-space coherences of the
    rank-k SVD factors; mu1 scales the largest entry of U V^T by
    sqrt(M1 M2 / k); the combined parameter is max(mu1^2, mu0). Invariant
    under nonzero scaling of Y.
    """
    y = np.asarray(block_matrix, dtype=np.float64)
    if y.ndim != 2:
        raise ContractViolation("block matrix must be 2-d")
    if k < 1 or k > min(y.shape):
        raise ContractViolation(f"rank k={k} out of range for shape {y.shape}")
    u, sigma, vt = np.linalg.svd(y, full_matrices=False)
    if sigma[k - 1] <= _RANK_CUTOFF * max(sigma[0], np.finfo(float).tiny):
        raise ContractViolation(f"matrix has numerical rank < {k}")
    uk = u[:, :k]
    vk = vt[:k].T
    mu0 = max(coherence(uk), coherence(vk))
    m1 = min(y.shape)
    m2 = max(y.shape)
    mu1 = float(np.max(np.abs(uk @ vk.T)) * math.sqrt(m1 * m2 / k))
    return MuEll(mu0=mu0, mu1=mu1, mu=max(mu1 * mu1, mu0))


class SampleBound(NamedTuple):
    required: int
    probability: float


def theorem1_sample_bound(mu: float, k: int, m1: int, m2: int, beta: float) -> SampleBound:
    """Uniform-sampling count that guarantees exact completion w.h.p.

    required = ceil(32 mu k (M1 + M2) beta ln(2 M2)); the success probability
    1 - 6 ln(M2) (M1+M2)^(2-2beta) - M2^(2-2 sqrt(beta)) is clamped to [0, 1].
    Needs beta > 1; both outputs are non-decreasing in beta.
    """
    if beta <= 1.0:
        raise ContractViolation("beta must be > 1")
    if mu <= 0 or k < 1 or m1 < 1 or m2 < 1:
        raise ContractViolation("mu, k, M1, M2 must be positive")
    required = math.ceil(32.0 * mu * k * (m1 + m2) * beta * math.log(2 * m2))
    prob = 1.0 - 6.0 * math.log(m2) * (m1 + m2) ** (2.0 - 2.0 * beta) - m2 ** (
        2.0 - 2.0 * math.sqrt(beta)
    )
    return SampleBound(required=int(required), probability=min(max(prob, 0.0), 1.0))


def coupon_collector_bound(n: int, draws: int) -> float:
    """Upper bound on the chance a uniform row sample misses some of n rows."""
    if n < 1 or draws < 0:
        raise ContractViolation("need n >= 1 and draws >= 0")
    return min(1.0, n * (1.0 - 1.0 / n) ** draws)


@dataclass(frozen=True)
class ConditionCheck:
    """One named condition: passed is True/False or None for unverified."""

    name: str
    passed: bool | None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConditionReport:
    """Conjunction of condition checks; unverified entries block overall."""

    checks: tuple[ConditionCheck, ...]
    overall: bool

    @classmethod
    def from_checks(cls, checks: Sequence[ConditionCheck]) -> "ConditionReport":
        checks = tuple(checks)
        return cls(checks=checks, overall=all(c.passed is True for c in checks))

    def unverified(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks if c.passed is None)

    def as_dict(self) -> dict:
        return {
            "overall": self.overall,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": _jsonable(c.detail)}
                for c in self.checks
            ],
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def _subset_rank_ok(vectors: np.ndarray, size: int, rng: np.random.Generator | None,
                    limit: int = 10_000) -> tuple[bool | None, dict]:
    """Every size-subset of the columns has full rank ``size``.

    Exhaustive when the subset count is at most ``limit``; otherwise a seeded
    sample of ``limit`` subsets is tested and the verdict stays a sample.
    """
    count = vectors.shape[1]
    total = math.comb(count, size)
    detail: dict = {"subset_size": size, "total_subsets": total}
    if total <= limit:
        subsets = itertools.combinations(range(count), size)
        detail["tested"] = total
        detail["sampled"] = False
    else:
        rng = rng or np.random.default_rng(0)
        subsets = (
            tuple(rng.choice(count, size=size, replace=False)) for _ in range(limit)
        )
        detail["tested"] = limit
        detail["sampled"] = True
    for subset in subsets:
        sub = vectors[:, list(subset)]
        sigma = np.linalg.svd(sub, compute_uv=False)
        if sigma[-1] <= _RANK_CUTOFF * max(sigma[0], np.finfo(float).tiny):
            detail["failing_subset"] = list(subset)
            return False, detail
    return True, detail


def check_dl_uniqueness(
    dictionary: BlockDictionary,
    codes: Sequence[BlockSparseCode],
    union: UnionMatrix | None = None,
    max_subset: int = 6,
    seed: int = 0,
) -> ConditionReport:
    """Exact-recovery conditions for a learned union of subspaces.

    Checks (i) the spark of the projected dictionary Atilde D against twice
    the largest block size (identity projection when no union is given,
    the fully observed limit), (ii) per-block signal counts |omega_l| > k_l,
    and (iii) non-degeneracy of each block's reconstructions: subsets of
    k <= k_l signal vectors have rank k (sampled beyond 10^4 subsets).
    An inconclusive spark search reports unverified, not pass/fail.
    """
    rng = np.random.default_rng(seed)
    proj = dictionary.atoms if union is None else union.rows @ dictionary.atoms
    k_top = max(dictionary.block_sizes)
    sp = spark(proj, max_subset=max_subset)
    if sp.exhaustive:
        spark_check = ConditionCheck(
            name="spark",
            passed=bool(2 * k_top < sp.value),
            detail={"spark": sp.value, "k_max_block": k_top},
        )
    else:
        spark_check = ConditionCheck(
            name="spark",
            passed=None,
            detail={"spark_lower_bound": max_subset + 1, "k_max_block": k_top,
                    "note": "unverified: search stopped at max_subset"},
        )
    checks = [spark_check]
    counts = np.zeros(dictionary.num_blocks, dtype=int)
    for code in codes:
        if code.active_block is not None:
            counts[code.active_block] += 1
    rich_fail = [
        ell for ell in range(dictionary.num_blocks)
        if counts[ell] <= len(dictionary.blocks[ell])
    ]
    checks.append(
        ConditionCheck(
            name="richness",
            passed=not rich_fail,
            detail={"counts": counts.tolist(), "failing_blocks": rich_fail},
        )
    )
    nondegen_pass: bool | None = True
    nondegen_detail: dict = {"blocks": {}}
    for ell in range(dictionary.num_blocks):
        ids = [i for i, c in enumerate(codes) if c.active_block == ell]
        if not ids:
            continue
        vectors = np.stack([reconstruction(dictionary, codes[i]) for i in ids], axis=1)
        k_ell = len(dictionary.blocks[ell])
        block_ok = True
        block_detail: dict = {}
        for size in range(1, min(k_ell, len(ids)) + 1):
            ok, detail = _subset_rank_ok(vectors, size, rng)
            block_detail[size] = detail
            if ok is False:
                block_ok = False
                break
        nondegen_detail["blocks"][ell] = block_detail
        if not block_ok:
            nondegen_pass = False
    checks.append(
        ConditionCheck(name="non_degeneracy", passed=nondegen_pass, detail=nondegen_detail)
    )
    return ConditionReport.from_checks(checks)


def proposition1_check(
    ensemble: SensingEnsemble,
    dictionary: BlockDictionary,
    assignment: BlockAssignment,
    beta: float = 2.0,
) -> ConditionReport:
    """Per-block observation-pattern conditions for blind recovery.

    For every non-empty block: |omega_l| >= n signals; enough observed
    entries (k_l n for gaussian sensing, beta k_l n ln n for row-subset
    kinds); m_i >= k_l per signal; and the stacked sensing rows of the
    block's signals span R^n.
    """
    if beta <= 0:
        raise ContractViolation("beta must be positive")
    if len(assignment) != len(ensemble.sensors):
        raise ContractViolation("assignment and ensemble must align")
    n = dictionary.n
    checks: list[ConditionCheck] = []
    for ell in range(dictionary.num_blocks):
        omega = assignment.omega(ell)
        if omega.size == 0:
            checks.append(
                ConditionCheck(name=f"block_{ell}", passed=True, detail={"empty": True})
            )
            continue
        k_ell = len(dictionary.blocks[ell])
        sensors = [ensemble.sensors[int(i)] for i in omega]
        sizes = np.array([s.m for s in sensors])
        num_obs = int(sizes.sum())
        gaussian = all(s.kind == KIND_GAUSSIAN for s in sensors)
        need = k_ell * n if gaussian else beta * k_ell * n * math.log(n)
        small = [int(omega[j]) for j in np.flatnonzero(sizes < k_ell)]
        gram = np.zeros((n, n))
        for s in sensors:
            gram += s.rows.T @ s.rows
        eigs = np.linalg.eigvalsh(gram)
        full_rank = bool(eigs[0] > max(eigs[-1], np.finfo(float).tiny) * n * 1e-12)
        detail = {
            "signals": int(omega.size),
            "observed_entries": num_obs,
            "entries_needed": float(need),
            "per_signal_min": int(sizes.min()),
            "k_ell": k_ell,
            "gaussian": gaussian,
            "stacked_rows_full_rank": full_rank,
            "signals_below_k": small,
        }
        passed = (
            omega.size >= n
            and num_obs >= need
            and not small
            and full_rank
        )
        checks.append(ConditionCheck(name=f"block_{ell}", passed=bool(passed), detail=detail))
    return ConditionReport.from_checks(checks)


def ensemble_from_measurements(measurements: MeasurementSet) -> SensingEnsemble:
    """Convenience wrapper: ensemble of a measurement set's sensors."""
    return SensingEnsemble.from_sensors(measurements.sensors)
