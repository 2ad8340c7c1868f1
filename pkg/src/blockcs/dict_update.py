"""Per-block dictionary and coefficient updates (alternating least squares).

With codes fixed, each block solves the linear least-squares problem

    vec(D[l]) = argmin || ytilde - B vec(D[l]) ||,
    B = [ s_1[l]^T kron A_1 ; s_2[l]^T kron A_2 ; ... ]

using the identity vec(A D s) = (s^T kron A) vec(D). Two routes produce the
same minimum-norm solution: the explicit stacked design (reference) and the
accumulated normal equations sum (s s^T) kron (A^T A), which never
materializes B. The updated block is orthogonalized by a thin SVD (codes
absorb the triangular factor) and each signal's coefficients are refit
against the orthonormalized block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ContractViolation,
    EmptyBlockError,
    IllConditionedSystemError,
    RankDeficiencyWarning,
    RankDeficientBlockError,
)
from .block_inference import BlockAssignment, COND_LIMIT
from .model import BlockDictionary, BlockSparseCode, check_code, objective
from .sensing import KIND_PIXEL, MeasurementSet

# Relative singular value below which a block counts as rank deficient.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class KronSystem:
    """Stacked least-squares system for one block's dictionary update."""

    design: np.ndarray
    rhs: np.ndarray
    block: int
    signal_order: tuple[int, ...]
    n: int
    k: int

    def __post_init__(self):
        design = np.asarray(self.design, dtype=np.float64)
        rhs = np.asarray(self.rhs, dtype=np.float64)
        if design.ndim != 2 or rhs.ndim != 1 or design.shape[0] != rhs.shape[0]:
            raise ContractViolation("design and rhs dimensions disagree")
        if design.shape[1] != self.n * self.k:
            raise ContractViolation(
                f"design has {design.shape[1]} columns, expected n*k = {self.n * self.k}"
            )
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "rhs", rhs)


def _gather_block(
    measurements: MeasurementSet,
    codes: Sequence[BlockSparseCode],
    dictionary: BlockDictionary,
    block: int,
    omega: Sequence[int] | None,
):
    """Signals assigned to a block, their sensors and block coefficients."""
    if omega is None:
        omega = [i for i, c in enumerate(codes) if c.active_block == block]
    ids = [int(i) for i in omega]
    if not ids:
        raise EmptyBlockError(f"block {block} has no assigned signals")
    for i in ids:
        check_code(codes[i], dictionary, i)
        if codes[i].active_block != block:
            raise ContractViolation(f"signal {i} is assigned to block {codes[i].active_block}, not {block}")
    s_rows = np.stack([codes[i].block_values(dictionary) for i in ids])
    return ids, s_rows


def build_kron_system(
    measurements: MeasurementSet,
    codes: Sequence[BlockSparseCode],
    dictionary: BlockDictionary,
    block: int,
    omega: Sequence[int] | None = None,
) -> KronSystem:
    """Materialize the stacked design ``[s_i^T kron A_i]`` for one block.

    Reference path; memory grows as (sum m_i) * k * n. Rows are stacked in
    ascending signal order.
    """
    ids, s_rows = _gather_block(measurements, codes, dictionary, block, omega)
    n = dictionary.n
    k = len(dictionary.blocks[block])
    rows = [np.kron(s_rows[j], measurements[i].sensor.rows) for j, i in enumerate(ids)]
    rhs = np.concatenate([measurements[i].y for i in ids])
    return KronSystem(
        design=np.vstack(rows), rhs=rhs, block=block, signal_order=tuple(ids), n=n, k=k
    )


def update_dictionary_block(system: KronSystem) -> np.ndarray:
    """Minimum-norm least-squares solution of a stacked system, as n x k.

    Singular values below max(dim) * eps * sigma_max are treated as zero;
    a rank-deficient design warns with the attained rank.
    """
    sol, _, rank, _ = np.linalg.lstsq(system.design, system.rhs, rcond=None)
    if rank < system.n * system.k:
        warnings.warn(
            RankDeficiencyWarning(
                f"block {system.block} design has rank {rank} < {system.n * system.k}",
                rank=int(rank),
            ),
            stacklevel=2,
        )
    return sol.reshape((system.n, system.k), order="F")


def update_dictionary_block_gram(
    measurements: MeasurementSet,
    codes: Sequence[BlockSparseCode],
    dictionary: BlockDictionary,
    block: int,
    omega: Sequence[int] | None = None,
) -> np.ndarray:
    """Same minimizer as the stacked path via accumulated normal equations.

    Builds G = sum (s s^T) kron (A^T A) (kn x kn) and the matching right
    hand side sum vec(A^T y s^T); peak memory stays O(k^2 n^2). Uses a
    Cholesky solve when G is positive definite and falls back to an
    eigendecomposition pseudo-inverse (the same minimum-norm solution the
    stacked route produces) otherwise.
    """
    ids, s_rows = _gather_block(measurements, codes, dictionary, block, omega)
    n = dictionary.n
    k = len(dictionary.blocks[block])
    gram = np.zeros((k * n, k * n))
    rhs_mat = np.zeros((n, k))
    total_rows = 0
    for j, i in enumerate(ids):
        sensor = measurements[i].sensor
        y = measurements[i].y
        s = s_rows[j]
        total_rows += sensor.m
        if sensor.kind == KIND_PIXEL:
            ata_diag = np.zeros(n)
            ata_diag[list(sensor.row_ids)] = 1.0
            at_y = np.zeros(n)
            at_y[list(sensor.row_ids)] = y
            ss = np.outer(s, s)
            for a in range(k):
                ga = gram[a * n : (a + 1) * n]
                for b in range(k):
                    ga[:, b * n : (b + 1) * n][np.diag_indices(n)] += ss[a, b] * ata_diag
        else:
            ata = sensor.rows.T @ sensor.rows
            at_y = sensor.rows.T @ y
            ss = np.outer(s, s)
            gram += np.kron(ss, ata)
        rhs_mat += np.outer(at_y, s)
    rhs = rhs_mat.reshape(k * n, order="F")
    try:
        c, low = scipy.linalg.cho_factor(gram)
        sol = scipy.linalg.cho_solve((c, low), rhs)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(gram)
        # eigenvalues of G are squared singular values of the stacked design
        cutoff = (max(total_rows, k * n) * np.finfo(float).eps) ** 2 * max(float(w[-1]), 0.0)
        keep = w > cutoff
        warnings.warn(
            RankDeficiencyWarning(
                f"block {block} normal equations have rank {int(np.sum(keep))} < {k * n}",
                rank=int(np.sum(keep)),
            ),
            stacklevel=2,
        )
        proj = v.T @ rhs
        proj[~keep] = 0.0
        proj[keep] = proj[keep] / w[keep]
        sol = v @ proj
    return sol.reshape((n, k), order="F")


def orthogonalize_block(
    block_atoms: np.ndarray, block_codes: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Re-parameterize a block to orthonormal columns.

    Thin SVD ``D = U S V^T`` gives the orthonormal block Q = U; codes absorb
    ``S V^T`` so every product ``D s`` is preserved exactly. ``block_codes``
    is (k, count). Raises when the block is numerically rank deficient
    (sigma_min <= 1e-10 sigma_max).
    """
    d = np.asarray(block_atoms, dtype=np.float64)
    s = np.asarray(block_codes, dtype=np.float64)
    if d.ndim != 2 or s.ndim != 2 or s.shape[0] != d.shape[1]:
        raise ContractViolation("block_codes must be (k, count) matching the block")
    u, sigma, vt = np.linalg.svd(d, full_matrices=False)
    if sigma[-1] <= RANK_TOL * sigma[0]:
        raise RankDeficientBlockError(
            f"block spectrum spans {sigma[0]:.3e}..{sigma[-1]:.3e}; re-seed before orthogonalizing"
        )
    transform = sigma[:, None] * vt
    return u, transform @ s


def update_coefficients(q: np.ndarray, y: np.ndarray, sensor) -> np.ndarray:
    """Least-squares coefficients of one signal on an orthonormalized block.

    Solves ``(Q^T A^T A Q) s = Q^T A^T y``. Requires m >= k and a Gram
    condition number below 1e12; violations raise a per-signal error.
    """
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    k = q.shape[1]
    if sensor.m < k:
        raise IllConditionedSystemError(-1, np.inf)
    if sensor.kind == KIND_PIXEL:
        p = q[list(sensor.row_ids), :]
    else:
        p = sensor.rows @ q
    gram = p.T @ p
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise IllConditionedSystemError(-1, float(cond))
    return np.linalg.solve(gram, p.T @ y)


@dataclass(frozen=True)
class BlockPassResult:
    """Outcome of one sweep of per-block updates."""

    dictionary: BlockDictionary
    codes: tuple[BlockSparseCode, ...]
    objective: float
    skipped: tuple[tuple[int, str], ...]


def run_block_pass(
    measurements: MeasurementSet,
    dictionary: BlockDictionary,
    codes: Sequence[BlockSparseCode],
    assignment: BlockAssignment,
    method: str = "gram",
) -> BlockPassResult:
    """One sweep over blocks in ascending order: dictionary update,
    orthogonalization, then per-signal coefficient refit.

    Empty blocks are skipped and reported, as are blocks whose updated atoms
    are rank deficient (they keep their previous atoms for this sweep).
    Signals whose coefficient refit is ill conditioned keep their
    orthogonalized codes. The composite never increases the objective.
    """
    if method not in ("gram", "dense"):
        raise ContractViolation(f"unknown update method {method!r}")
    if len(assignment) != len(measurements) or len(codes) != len(measurements):
        raise ContractViolation("assignment, codes and measurements must align")
    new_codes = list(codes)
    current = dictionary
    skipped: list[tuple[int, str]] = []
    for ell in range(current.num_blocks):
        omega = assignment.omega(ell)
        if omega.size == 0:
            skipped.append((ell, "empty"))
            continue
        if method == "dense":
            system = build_kron_system(measurements, new_codes, current, ell, omega)
            updated = update_dictionary_block(system)
        else:
            updated = update_dictionary_block_gram(measurements, new_codes, current, ell, omega)
        s_block = np.stack([new_codes[i].block_values(current) for i in omega]).T
        try:
            q, s_new = orthogonalize_block(updated, s_block)
        except RankDeficientBlockError:
            skipped.append((ell, "rank_deficient"))
            continue
        current = current.with_block(ell, q)
        for j, i in enumerate(omega):
            meas = measurements[int(i)]
            try:
                s_fit = update_coefficients(q, meas.y, meas.sensor)
            except IllConditionedSystemError:
                s_fit = s_new[:, j]
            new_codes[int(i)] = BlockSparseCode.from_block(current, ell, s_fit)
    value = objective(measurements, current, new_codes)
    return BlockPassResult(
        dictionary=current,
        codes=tuple(new_codes),
        objective=value,
        skipped=tuple(skipped),
    )
