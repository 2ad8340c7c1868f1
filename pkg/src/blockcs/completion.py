"""Matrix completion baseline via singular value thresholding (SVT).

A block's measurements form a partially observed low-rank matrix
``P_Omega(Atilde X)``. SVT fills it in by iterating a soft-threshold of
singular values against a step on the observed residual; the completed
matrix is then pulled back through the union matrix and factored by a
truncated SVD into an orthonormal block and its coefficients.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DivergenceError, MissingCoverageWarning
from .sensing import ObservationMatrix, UnionMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvtConfig:
    """Threshold tau, step delta, iteration budget and relative tolerance.

    The schedule used throughout: tau = 5 sqrt(max(M, N)) and
    delta = 1.2 * M N / |Omega| (i.e. 1.2 over the observed fraction);
    :meth:`for_observation` fills both from an observation matrix.
    """

    tau: float
    delta: float
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.tau <= 0 or self.delta <= 0:
            raise ContractViolation("tau and delta must be positive")
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be >= 1")
        if self.tol <= 0:
            raise ContractViolation("tol must be positive")

    @classmethod
    def for_observation(
        cls,
        obs: ObservationMatrix,
        max_iters: int = 500,
        tol: float = 1e-6,
    ) -> "SvtConfig":
        m, n = obs.shape
        q = obs.num_observed()
        if q == 0:
            raise ContractViolation("cannot complete a matrix with no observed entries")
        return cls(
            tau=5.0 * np.sqrt(max(m, n)),
            delta=1.2 * (m * n) / q,
            max_iters=max_iters,
            tol=tol,
        )


def shrink_singular_values(matrix: np.ndarray, tau: float) -> np.ndarray:
    """Soft-threshold the singular values: U max(S - tau, 0) V^T."""
    if tau < 0:
        raise ContractViolation("tau must be >= 0")
    a = np.asarray(matrix, dtype=np.float64)
    u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    shrunk = np.maximum(sigma - tau, 0.0)
    return (u * shrunk) @ vt


@dataclass(frozen=True)
class SvtResult:
    completed: np.ndarray
    iterations: int
    residual: float


def svt_complete(obs: ObservationMatrix, config: SvtConfig) -> SvtResult:
    """Run the SVT iteration on an observation matrix.

    Iterates Y_k = shrink(X_k, tau), X_{k+1} = X_k + delta P_Omega(M - Y_k)
    from X_0 = 0 until the relative observed residual drops below tol or the
    budget runs out. Declares divergence when the residual grows past 10x
    its best value (step size too large). Warns when a whole row or column
    is unobserved: those entries carry no guarantee.
    """
    target, mask = obs.dense()
    row_hits = mask.any(axis=1)
    col_hits = mask.any(axis=0)
    if not row_hits.all():
        warnings.warn(
            MissingCoverageWarning(
                f"rows {np.flatnonzero(~row_hits).tolist()} have no observed entry"
            ),
            stacklevel=2,
        )
    if not col_hits.all():
        warnings.warn(
            MissingCoverageWarning(
                f"columns {np.flatnonzero(~col_hits).tolist()} have no observed entry"
            ),
            stacklevel=2,
        )
    norm_obs = float(np.linalg.norm(target[mask]))
    if norm_obs == 0.0:
        return SvtResult(completed=np.zeros(obs.shape), iterations=0, residual=0.0)
    x = np.zeros(obs.shape)
    y = np.zeros(obs.shape)
    best = np.inf
    residual = np.inf
    iterations = 0
    for it in range(1, config.max_iters + 1):
        y = shrink_singular_values(x, config.tau)
        diff = np.where(mask, target - y, 0.0)
        residual = float(np.linalg.norm(diff[mask]) / norm_obs)
        iterations = it
        if residual < config.tol:
            break
        best = min(best, residual)
        if it > 10 and residual > 10.0 * best:
            raise DivergenceError(
                f"observed residual {residual:.3e} exceeds 10x its best {best:.3e}; "
                "reduce delta"
            )
        x = x + config.delta * diff
    log.debug("svt finished after %d iterations, residual %.3e", iterations, residual)
    return SvtResult(completed=y, iterations=iterations, residual=residual)


def factor_completed(
    completed: np.ndarray, union: UnionMatrix, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pull a completed matrix back to signal space and factor it.

    Solves Atilde X = Yhat in the least-squares sense, then keeps the best
    rank-k factorization of X: an orthonormal n x k block and k x N
    coefficients. Requires rank(Atilde) = n.
    """
    yhat = np.asarray(completed, dtype=np.float64)
    if yhat.ndim != 2 or yhat.shape[0] != union.M:
        raise ContractViolation(
            f"completed matrix has {yhat.shape[0]} rows, union has M={union.M}"
        )
    if k < 1 or k > min(union.n, yhat.shape[1]):
        raise ContractViolation(f"rank k={k} out of range")
    sigma_union = np.linalg.svd(union.rows, compute_uv=False)
    if sigma_union.size < union.n or sigma_union[union.n - 1] <= (
        max(union.M, union.n) * np.finfo(float).eps * sigma_union[0]
    ):
        raise ContractViolation("union matrix must have rank n to invert the sensing")
    x = np.linalg.lstsq(union.rows, yhat, rcond=None)[0]
    u, sigma, vt = np.linalg.svd(x, full_matrices=False)
    block = u[:, :k]
    coeffs = (sigma[:k, None]) * vt[:k]
    return block, coeffs
