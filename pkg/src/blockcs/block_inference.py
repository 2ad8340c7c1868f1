"""Block assignment (matching pursuit with one active block) and block
structure search (agglomerative merging of blocks with overlapping usage).

Assignment is exhaustive: every feasible block gets a least-squares fit and
the signal takes the block with the smallest residual. Structure search
greedily merges block pairs whose usage sets (signals that put visible
energy on the block) overlap, bounded by the block size budget k_max.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation, InfeasibleBlockWarning, NoFeasibleBlockError
from .model import BlockDictionary, BlockSparseCode
from .sensing import KIND_PIXEL, Measurement, MeasurementSet

log = logging.getLogger(__name__)

# Gram systems at or beyond this condition number count as singular.
COND_LIMIT = 1e12


@dataclass(frozen=True)
class BlockAssignment:
    """Per-signal active block index and attained residual ``||y - A D[l] s||``."""

    blocks: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.intp)
        residuals = np.asarray(self.residuals, dtype=np.float64)
        if blocks.ndim != 1 or blocks.shape != residuals.shape:
            raise ContractViolation("blocks and residuals must be 1-d and equal length")
        if np.any(residuals < 0):
            raise ContractViolation("residuals are norms, must be >= 0")
        blocks.setflags(write=False)
        residuals.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "residuals", residuals)

    def __len__(self) -> int:
        return len(self.blocks)

    def omega(self, ell: int) -> np.ndarray:
        """Sorted indices of the signals assigned to block ``ell``."""
        return np.flatnonzero(self.blocks == ell)

    def counts(self, num_blocks: int) -> np.ndarray:
        return np.bincount(self.blocks, minlength=num_blocks)


def _block_fits(y: np.ndarray, sensor, dictionary: BlockDictionary):
    """Least-squares fit of one measurement against every block.

    Returns (squared residuals with inf at infeasible blocks, list of
    coefficient vectors or None). A block is infeasible when its Gram matrix
    ``(A D[l])^T (A D[l])`` is singular (in particular when m_i < k_l).
    """
    if sensor.kind == KIND_PIXEL:
        proj = dictionary.atoms[list(sensor.row_ids), :]
    else:
        proj = sensor.rows @ dictionary.atoms
    gram_full = proj.T @ proj
    corr = proj.T @ y
    L = dictionary.num_blocks
    sq_resid = np.full(L, np.inf)
    coeffs: list[np.ndarray | None] = [None] * L
    m = sensor.m
    by_size: dict[int, list[int]] = {}
    for ell, cols in enumerate(dictionary.blocks):
        by_size.setdefault(len(cols), []).append(ell)
    for k, ells in by_size.items():
        if k > m:
            continue
        idx = [list(dictionary.blocks[ell]) for ell in ells]
        grams = np.stack([gram_full[np.ix_(c, c)] for c in idx])
        rhs = np.stack([corr[c] for c in idx])
        conds = np.linalg.cond(grams)
        ok = np.isfinite(conds) & (conds < COND_LIMIT)
        if np.any(ok):
            sols = np.full_like(rhs, np.nan)
            try:
                sols[ok] = np.linalg.solve(grams[ok], rhs[ok][..., None])[..., 0]
            except np.linalg.LinAlgError:
                for j in np.flatnonzero(ok):
                    try:
                        sols[j] = np.linalg.solve(grams[j], rhs[j])
                    except np.linalg.LinAlgError:
                        ok[j] = False
            # explicit residuals: the shortcut ||y||^2 - c^T s halves precision
            projs = np.stack([proj[:, c] for c in idx])
            fits = np.einsum("bmk,bk->bm", projs, np.where(np.isnan(sols), 0.0, sols))
            errs = np.sum((y[None, :] - fits) ** 2, axis=1)
            for j, ell in enumerate(ells):
                if ok[j]:
                    coeffs[ell] = sols[j]
                    sq_resid[ell] = float(errs[j])
    return sq_resid, coeffs


def bomp_assign_one(
    y: np.ndarray, sensor, dictionary: BlockDictionary
) -> tuple[int, np.ndarray, float]:
    """Assign one measurement to its best block.

    Solves ``min_s ||y - A D[l] s||`` for every feasible block and returns
    (block index, block coefficients, residual norm); ties break to the
    smallest index. Singular blocks are skipped with a warning; if all L are
    skipped the signal has no feasible block.
    """
    y = np.asarray(y, dtype=np.float64)
    sq_resid, coeffs = _block_fits(y, sensor, dictionary)
    skipped = np.flatnonzero(~np.isfinite(sq_resid))
    if skipped.size:
        warnings.warn(
            InfeasibleBlockWarning(
                f"skipped {skipped.size} singular block(s) {skipped.tolist()} (m={sensor.m})"
            ),
            stacklevel=2,
        )
    if skipped.size == dictionary.num_blocks:
        raise NoFeasibleBlockError(-1)
    best = int(np.argmin(sq_resid))  # argmin keeps the first (smallest) index on ties
    return best, coeffs[best], float(np.sqrt(sq_resid[best]))


def bomp_assign_all(
    measurements: MeasurementSet, dictionary: BlockDictionary
) -> tuple[BlockAssignment, list[BlockSparseCode]]:
    """Map :func:`bomp_assign_one` over a measurement set.

    Returns the assignment plus the matching one-block codes. A signal with
    no feasible block raises :class:`NoFeasibleBlockError` carrying its index.
    """
    if measurements.n != dictionary.n:
        raise ContractViolation(
            f"measurements live in R^{measurements.n}, dictionary in R^{dictionary.n}"
        )
    blocks = np.empty(len(measurements), dtype=np.intp)
    residuals = np.empty(len(measurements))
    codes: list[BlockSparseCode] = []
    for i, meas in enumerate(measurements):
        try:
            ell, s, res = bomp_assign_one(meas.y, meas.sensor, dictionary)
        except NoFeasibleBlockError:
            raise NoFeasibleBlockError(i) from None
        blocks[i] = ell
        residuals[i] = res
        codes.append(BlockSparseCode.from_block(dictionary, ell, s))
    return BlockAssignment(blocks=blocks, residuals=residuals), codes


def compute_usage_sets(
    measurements: MeasurementSet,
    dictionary: BlockDictionary,
    energy_frac: float = 0.01,
) -> list[set[int]]:
    """Signals that put visible energy on each block.

    Signal i uses block l when an unconstrained least-squares fit against
    that block alone explains at least ``energy_frac`` of ||y_i||^2.
    Infeasible (singular) blocks never count as used.
    """
    usage: list[set[int]] = [set() for _ in range(dictionary.num_blocks)]
    for i, meas in enumerate(measurements):
        y = meas.y
        yy = float(y @ y)
        if yy == 0.0:
            continue
        sq_resid, _ = _block_fits(y, meas.sensor, dictionary)
        explained = yy - sq_resid
        for ell in np.flatnonzero(explained >= energy_frac * yy):
            usage[int(ell)].add(i)
    return usage


def jaccard(a: set, b: set) -> float:
    """Set similarity |a & b| / |a | b|; empty-vs-empty counts as 0."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def sac_merge(
    dictionary: BlockDictionary,
    usage_sets: Sequence[set[int]],
    k_max: int | None = None,
    threshold: float = 0.1,
) -> BlockDictionary:
    """Greedy agglomerative merge of blocks with similar usage.

    Repeatedly merges the pair with the highest Jaccard similarity among
    pairs whose combined size fits in k_max, until no pair scores above
    ``threshold``. Only the partition changes; the atom matrix is untouched.
    The merged block keeps the smaller position and concatenates the two
    column lists in block order.
    """
    if k_max is None:
        k_max = dictionary.k_max
    if len(usage_sets) != dictionary.num_blocks:
        raise ContractViolation(
            f"{len(usage_sets)} usage sets for {dictionary.num_blocks} blocks"
        )
    blocks = [list(b) for b in dictionary.blocks]
    usage = [set(u) for u in usage_sets]
    while len(blocks) > 1:
        best_score = -1.0
        best_pair = None
        for a in range(len(blocks)):
            for b in range(a + 1, len(blocks)):
                if len(blocks[a]) + len(blocks[b]) > k_max:
                    continue
                score = jaccard(usage[a], usage[b])
                if score > best_score:
                    best_score = score
                    best_pair = (a, b)
        if best_pair is None or best_score <= threshold:
            break
        a, b = best_pair
        blocks[a] = blocks[a] + blocks[b]
        usage[a] = usage[a] | usage[b]
        del blocks[b]
        del usage[b]
        log.debug("merged blocks %d+%d (score %.3f), %d blocks left", a, b, best_score, len(blocks))
    return dictionary.with_blocks(blocks)
