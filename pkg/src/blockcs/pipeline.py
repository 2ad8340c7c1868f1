"""Image inpainting front end: tile sensing, learning, overlapping recovery.

The observed image is cut into disjoint p x p sensing tiles, each carrying a
pixel-mask sensing matrix from the global observation mask. A block
dictionary is learned from those tiles; every stride-1 window is then
assigned to its best block, refit on its own observed pixels, and the
overlapping estimates are averaged back into the image.

``method="svt"`` swaps the per-block refinement for the completion
baseline: after one warm-up learning iteration fixes the tile clusters,
each cluster's partially observed matrix is completed by singular value
thresholding and factored into an orthonormal block that replaces the
warm-up block; reconstruction is shared.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BlockCSError, ContractViolation
from .block_inference import bomp_assign_one
from .completion import SvtConfig, factor_completed, svt_complete
from .imaging import (
    GrayImage,
    PatchGrid,
    crop,
    extract_patches,
    psnr,
    reconstruct_image,
    reflect_pad_to_tiles,
    sensing_partition,
)
from .learner import LearnerConfig, LearnerState, learn
from .model import BlockDictionary
from .sensing import Measurement, MeasurementSet, assemble_observation, build_union, make_pixel_mask

log = logging.getLogger(__name__)


@dataclass
class InpaintConfig:
    """Front-end knobs; learner fields mirror :class:`LearnerConfig`."""

    patch_side: int = 8
    r: int = 256
    k_max: int = 8
    L_init: int | None = None
    max_outer_iters: int = 10
    method: str = "als"
    sac_threshold: float = 0.1
    sac_every: int = 1
    init: str = "random"
    restarts: int = 1
    seed: int = 0
    svt_max_iters: int = 500
    svt_tol: float = 1e-4

    def __post_init__(self):
        if self.method not in ("als", "svt"):
            raise ContractViolation(f"unknown method {self.method!r}")

    def learner_config(self, max_outer_iters: int | None = None) -> LearnerConfig:
        return LearnerConfig(
            k_max=self.k_max,
            r=self.r,
            L_init=self.L_init,
            max_outer_iters=max_outer_iters or self.max_outer_iters,
            sac_threshold=self.sac_threshold,
            sac_every=self.sac_every,
            init=self.init,
            restarts=self.restarts,
            seed=self.seed,
        )


@dataclass
class InpaintResult:
    image: GrayImage
    state: LearnerState
    metrics: dict = field(default_factory=dict)


def tile_measurements(
    image: GrayImage, grid: PatchGrid
) -> tuple[MeasurementSet, list[int]]:
    """Pixel-mask measurements of the disjoint sensing tiles.

    Tiles without a single observed pixel cannot be sensed; they are dropped
    from training and their indices returned separately.
    """
    part = sensing_partition(grid)
    signals, observed = extract_patches(image, grid, origins=part.sensing_origins)
    out: list[Measurement] = []
    dropped: list[int] = []
    n = grid.n
    for t, (sig, idx) in enumerate(zip(signals, observed)):
        if idx.size == 0:
            dropped.append(t)
            continue
        sensor = make_pixel_mask(n, idx)
        out.append(Measurement(y=sensor.apply(sig.values), sensor=sensor))
    if dropped:
        log.warning("%d sensing tiles carry no observed pixel; dropped", len(dropped))
    if not out:
        raise ContractViolation("no sensing tile has observed pixels")
    return MeasurementSet(out), dropped


def _svt_refine(
    measurements: MeasurementSet, state: LearnerState, config: InpaintConfig
) -> BlockDictionary:
    """Replace each cluster's block by the factored SVT completion."""
    dictionary = state.dictionary
    for ell in range(dictionary.num_blocks):
        omega = state.assignment.omega(ell)
        k_ell = len(dictionary.blocks[ell])
        if omega.size <= k_ell:
            continue
        sub = measurements.subset(omega)
        union = build_union(sub.sensors)
        if union.M < dictionary.n:
            continue  # factorization needs rank n; this cluster misses pixels
        obs = assemble_observation(sub, union)
        svt_cfg = SvtConfig.for_observation(
            obs, max_iters=config.svt_max_iters, tol=config.svt_tol
        )
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = svt_complete(obs, svt_cfg)
                block, _ = factor_completed(result.completed, union, k_ell)
        except (BlockCSError, np.linalg.LinAlgError) as exc:
            log.warning("svt refinement skipped for block %d: %s", ell, exc)
            continue
        dictionary = dictionary.with_block(ell, block)
    return dictionary


def reconstruct_patches(
    image: GrayImage, grid: PatchGrid, dictionary: BlockDictionary
) -> list[np.ndarray]:
    """Best-block estimate for every stride window of the observed image.

    Estimates are clamped to pixel range before averaging (the block fit can
    extrapolate far outside it on barely observed windows) and observed
    pixels keep their measured values, so averaging never degrades them.
    """
    signals, observed = extract_patches(image, grid)
    n = grid.n
    global_mean = (
        float(image.values[image.mask].mean())
        if image.mask is not None and image.mask.any()
        else float(image.values.mean())
    )
    estimates: list[np.ndarray] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for sig, idx in zip(signals, observed):
            if idx.size == 0:
                estimates.append(np.full(n, global_mean))
                continue
            sensor = make_pixel_mask(n, idx)
            y = sensor.apply(sig.values)
            try:
                ell, s, _ = bomp_assign_one(y, sensor, dictionary)
                est = np.clip(dictionary.block(ell) @ s, 0.0, 255.0)
            except BlockCSError:
                est = np.full(n, float(y.mean()))
            est[idx] = y
            estimates.append(est)
    return estimates


def inpaint(
    observed: GrayImage,
    config: InpaintConfig,
    reference: GrayImage | None = None,
) -> InpaintResult:
    """Learn from the observed image's tiles and fill in the missing pixels.

    Returns the reconstructed image plus metrics; PSNR entries appear when a
    fully observed reference is supplied (overall and missing-pixels-only).
    """
    padded, original_shape = reflect_pad_to_tiles(observed, config.patch_side)
    grid = PatchGrid(
        height=padded.shape[0], width=padded.shape[1], patch_side=config.patch_side
    )
    measurements, _ = tile_measurements(padded, grid)
    warm_iters = 1 if config.method == "svt" else None
    state = learn(measurements, config.learner_config(max_outer_iters=warm_iters))
    dictionary = state.dictionary
    if config.method == "svt":
        dictionary = _svt_refine(measurements, state, config)
    estimates = reconstruct_patches(padded, grid, dictionary)
    recon = crop(reconstruct_image(estimates, grid), original_shape)
    metrics = {
        "observed_fraction": observed.observed_fraction(),
        "k_max": config.k_max,
        "r": config.r,
        "L": dictionary.num_blocks,
        "iterations": len(state.objective_trace),
        "method": config.method,
    }
    if reference is not None:
        if reference.shape != observed.shape:
            raise ContractViolation("reference shape differs from the observed image")
        metrics["psnr_db"] = psnr(reference.values, recon.values)
        if observed.mask is not None and (~observed.mask).any():
            missing = ~observed.mask
            metrics["psnr_missing_db"] = psnr(
                reference.values[missing], recon.values[missing]
            )
    return InpaintResult(image=recon, state=state, metrics=metrics)
