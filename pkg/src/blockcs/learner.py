"""Outer learning loop: structure search, assignment, per-block updates.

Starts from r singleton blocks of random unit atoms and alternates
(i) agglomerative block merging driven by usage overlap, (ii) exhaustive
one-block assignment, (iii) a sweep of per-block dictionary/coefficient
updates. Empty blocks are re-seeded from the directions of the worst-fit
residuals, and the loop stops when the objective's relative decrease falls
below tolerance or the iteration budget runs out.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ContractViolation, InitializationFailure, NoFeasibleBlockError
from .block_inference import BlockAssignment, bomp_assign_all, compute_usage_sets, sac_merge
from .dict_update import run_block_pass
from .model import BlockDictionary, BlockSparseCode
from .sensing import KIND_PIXEL, MeasurementSet

log = logging.getLogger(__name__)


@dataclass
class LearnerConfig:
    """Knobs of the outer loop.

    ``L_init=None`` starts from r singleton blocks; ``init`` picks between
    random unit atoms and atoms seeded from zero-filled observed signals.
    ``sac_every=0`` disables structure search.
    """

    k_max: int
    r: int
    L_init: int | None = None
    max_outer_iters: int = 10
    objective_rel_tol: float = 1e-5
    sac_threshold: float = 0.1
    sac_every: int = 1
    usage_energy_frac: float = 0.01
    reseed_dead_blocks: bool = True
    init: str = "random"
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.k_max < 1 or self.r < self.k_max:
            raise ContractViolation("need r >= k_max >= 1")
        if self.max_outer_iters < 1:
            raise ContractViolation("max_outer_iters must be >= 1")
        if self.L_init is not None:
            if self.L_init < 1 or -(-self.r // self.L_init) > self.k_max:
                raise ContractViolation("L_init incompatible with r and k_max")
        if self.init not in ("random", "data"):
            raise ContractViolation(f"unknown init mode {self.init!r}")
        if self.sac_every < 0:
            raise ContractViolation("sac_every must be >= 0")
        if self.restarts < 1:
            raise ContractViolation("restarts must be >= 1")


@dataclass(frozen=True)
class LearnerState:
    """Snapshot of the learned model after an outer iteration."""

    dictionary: BlockDictionary
    codes: tuple[BlockSparseCode, ...]
    assignment: BlockAssignment
    objective_trace: tuple[float, ...]
    skipped: tuple[tuple[int, str], ...] = field(default=())

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def _initial_blocks(r: int, L_init: int | None, k_max: int) -> tuple[tuple[int, ...], ...]:
    if L_init is None:
        return tuple((c,) for c in range(r))
    bounds = np.linspace(0, r, L_init + 1).astype(int)
    blocks = tuple(tuple(range(a, b)) for a, b in zip(bounds, bounds[1:]) if b > a)
    if any(len(b) > k_max for b in blocks):
        raise ContractViolation("L_init would create blocks larger than k_max")
    return blocks


def initial_dictionary(
    measurements: MeasurementSet, config: LearnerConfig, rng: np.random.Generator
) -> BlockDictionary:
    """Seed dictionary: unit-norm atoms in r singleton blocks (or L_init groups)."""
    n = measurements.n
    if config.init == "data":
        picks = rng.choice(len(measurements), size=config.r, replace=len(measurements) < config.r)
        cols = []
        for i in picks:
            meas = measurements[int(i)]
            v = meas.sensor.rows.T @ meas.y  # zero-filled completion for masks
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                v = rng.standard_normal(n)
                norm = np.linalg.norm(v)
            cols.append(v / norm)
        atoms = np.stack(cols, axis=1)
    else:
        atoms = rng.standard_normal((n, config.r))
        atoms /= np.linalg.norm(atoms, axis=0, keepdims=True)
    return BlockDictionary(
        atoms=atoms,
        blocks=_initial_blocks(config.r, config.L_init, config.k_max),
        k_max=config.k_max,
    )


def reseed_dead_block(
    state: LearnerState,
    measurements: MeasurementSet,
    block: int,
    rng: np.random.Generator,
) -> LearnerState:
    """Replace an empty (or rank-dead) block's atoms with residual directions.

    One atom per worst-fit signal: the normalized back-projection
    ``A_i^T (y_i - A_i D s_i)`` (zero-filled residual for pixel masks), with
    a random unit fallback when a residual vanishes.
    """
    dictionary = state.dictionary
    if not 0 <= block < dictionary.num_blocks:
        raise ContractViolation(f"no block {block}")
    k = len(dictionary.blocks[block])
    order = np.argsort(state.assignment.residuals)[::-1]
    cols = []
    for i in order[:k]:
        meas = measurements[int(i)]
        code = state.codes[int(i)]
        recon = np.zeros(dictionary.n)
        if code.active_block is not None:
            recon = dictionary.block(code.active_block) @ code.block_values(dictionary)
        resid = meas.y - meas.sensor.apply(recon)
        if meas.sensor.kind == KIND_PIXEL:
            v = np.zeros(dictionary.n)
            v[list(meas.sensor.row_ids)] = resid
        else:
            v = meas.sensor.rows.T @ resid
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            v = rng.standard_normal(dictionary.n)
            norm = np.linalg.norm(v)
        cols.append(v / norm)
    while len(cols) < k:
        v = rng.standard_normal(dictionary.n)
        cols.append(v / np.linalg.norm(v))
    new_dict = dictionary.with_block(block, np.stack(cols, axis=1))
    return replace(state, dictionary=new_dict)


def learn(
    measurements: MeasurementSet,
    config: LearnerConfig,
    init: BlockDictionary | None = None,
) -> LearnerState:
    """Run the alternating loop and return the best final state.

    With ``restarts > 1`` the loop runs from several seeded initializations
    and keeps the state with the lowest final objective; the search stops
    early once a run fits the measurements to machine precision. A single
    restart reproduces the plain loop.
    """
    energy = sum(float(meas.y @ meas.y) for meas in measurements)
    best: LearnerState | None = None
    failure: InitializationFailure | None = None
    for j in range(config.restarts):
        rng = np.random.default_rng([config.seed, j])
        try:
            state = _learn_once(measurements, config, init, rng)
        except InitializationFailure as exc:
            failure = exc
            continue
        if best is None or state.objective < best.objective:
            best = state
        if best.objective <= 1e-12 * energy:
            break
    if best is None:
        assert failure is not None
        raise failure
    return best


def _learn_once(
    measurements: MeasurementSet,
    config: LearnerConfig,
    init: BlockDictionary | None,
    rng: np.random.Generator,
) -> LearnerState:
    """One pass of the alternating loop from a fresh initialization.

    The objective trace records the value after every assignment + block-pass
    composite and is non-increasing up to roundoff. Structure search runs
    before the assignment on iterations where ``it % sac_every == 0``.
    """
    if init is not None:
        if init.n != measurements.n:
            raise ContractViolation("init dictionary dimension mismatch")
        dictionary = init
    else:
        dictionary = initial_dictionary(measurements, config, rng)
    codes: tuple[BlockSparseCode, ...] = tuple(
        BlockSparseCode.zero(dictionary.r) for _ in range(len(measurements))
    )
    trace: list[float] = []
    state = None
    for it in range(config.max_outer_iters):
        if config.sac_every and it % config.sac_every == 0 and dictionary.num_blocks > 1:
            usage = compute_usage_sets(measurements, dictionary, config.usage_energy_frac)
            dictionary = sac_merge(
                dictionary, usage, k_max=config.k_max, threshold=config.sac_threshold
            )
        # Mid-convergence passes routinely hit rank-deficient or infeasible
        # blocks; route those warnings to the log instead of stderr.
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                assignment, codes_list = bomp_assign_all(measurements, dictionary)
            except NoFeasibleBlockError as exc:
                if it == 0:
                    raise InitializationFailure(
                        f"signal {exc.signal} infeasible for every initial block"
                    ) from exc
                raise
            result = run_block_pass(measurements, dictionary, codes_list, assignment)
        for w in caught:
            log.debug("iter %d: %s: %s", it, w.category.__name__, w.message)
        dictionary = result.dictionary
        codes = result.codes
        trace.append(result.objective)
        state = LearnerState(
            dictionary=dictionary,
            codes=codes,
            assignment=assignment,
            objective_trace=tuple(trace),
            skipped=result.skipped,
        )
        if config.reseed_dead_blocks:
            empty = [ell for ell, reason in result.skipped if reason == "empty"]
            for ell in empty:
                state = reseed_dead_block(state, measurements, ell, rng)
            dictionary = state.dictionary
        log.debug(
            "iter %d: objective %.6e, %d blocks, %d skipped",
            it, result.objective, dictionary.num_blocks, len(result.skipped),
        )
        if len(trace) >= 2:
            prev, cur = trace[-2], trace[-1]
            rel = (prev - cur) / max(prev, np.finfo(float).tiny)
            if rel < config.objective_rel_tol:
                break
    assert state is not None
    return state
