"""Grayscale patch extraction, masked images, PSNR, and image file formats.

Images are float arrays in [0, 255] with an optional boolean observation
mask (unobserved pixels hold 0). Patches are p x p windows vectorized in
column-major order; sensing uses the disjoint tiling while reconstruction
averages all stride-1 windows. Supported file formats: PGM (P5) and PNG for
images, PBM (P4) for masks, where a black bit marks an observed pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .model import Signal


@dataclass(frozen=True)
class GrayImage:
    """Float image in [0, 255]; mask=True marks observed pixels.

    Unobserved intensities carry no information and are stored as 0.
    ``mask=None`` means fully observed.
    """

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ContractViolation("image must be a non-empty 2-d array")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("image values must be finite")
        if v.min() < 0.0 or v.max() > 255.0:
            raise ContractViolation("image values must lie in [0, 255]")
        m = self.mask
        if m is not None:
            m = np.array(m, dtype=bool)
            if m.shape != v.shape:
                raise ContractViolation("mask shape must match the image")
            v = np.where(m, v, 0.0)
            m.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def observed_fraction(self) -> float:
        if self.mask is None:
            return 1.0
        return float(np.mean(self.mask))


@dataclass(frozen=True)
class PatchGrid:
    """Patch geometry over an H x W image: side p, reconstruction stride.

    ``origins`` walks the image in steps of ``stride`` and always includes
    the boundary-aligned last origin, so every pixel is covered;
    ``tile_origins`` is the disjoint p-tiling (requires p | H and p | W).
    """

    height: int
    width: int
    patch_side: int = 8
    stride: int = 1

    def __post_init__(self):
        if self.patch_side < 1 or self.stride < 1:
            raise ContractViolation("patch_side and stride must be >= 1")
        if self.height < self.patch_side or self.width < self.patch_side:
            raise ContractViolation("image smaller than one patch")

    @property
    def n(self) -> int:
        return self.patch_side * self.patch_side

    def _axis_origins(self, extent: int) -> list[int]:
        last = extent - self.patch_side
        xs = list(range(0, last + 1, self.stride))
        if xs[-1] != last:
            xs.append(last)
        return xs

    @property
    def origins(self) -> list[tuple[int, int]]:
        return [
            (i, j)
            for i in self._axis_origins(self.height)
            for j in self._axis_origins(self.width)
        ]

    @property
    def tile_origins(self) -> list[tuple[int, int]]:
        p = self.patch_side
        if self.height % p or self.width % p:
            raise ContractViolation(
                f"disjoint tiling needs p={p} to divide {self.height} x {self.width}; pad first"
            )
        return [(i, j) for i in range(0, self.height, p) for j in range(0, self.width, p)]

    def coverage_counts(self, origins: Sequence[tuple[int, int]] | None = None) -> np.ndarray:
        counts = np.zeros((self.height, self.width), dtype=np.intp)
        p = self.patch_side
        for i, j in self.origins if origins is None else origins:
            counts[i : i + p, j : j + p] += 1
        return counts


@dataclass(frozen=True)
class SensingPartition:
    """Disjoint sensing tiles vs overlapping reconstruction patches."""

    sensing_origins: tuple[tuple[int, int], ...]
    reconstruction_origins: tuple[tuple[int, int], ...]


def sensing_partition(grid: PatchGrid) -> SensingPartition:
    """Sensing set = disjoint tiles; reconstruction set = all stride windows."""
    return SensingPartition(
        sensing_origins=tuple(grid.tile_origins),
        reconstruction_origins=tuple(grid.origins),
    )


def extract_patches(
    image: GrayImage,
    grid: PatchGrid,
    origins: Sequence[tuple[int, int]] | None = None,
) -> tuple[list[Signal], list[np.ndarray]]:
    """Vectorize the window at each origin (column-major) with its observed indices.

    Returns one Signal per origin plus the strictly increasing list of
    observed coordinates inside the window (all of them when the image has
    no mask).
    """
    if image.shape != (grid.height, grid.width):
        raise ContractViolation("grid does not match the image shape")
    p = grid.patch_side
    use = grid.origins if origins is None else list(origins)
    signals: list[Signal] = []
    observed: list[np.ndarray] = []
    for i, j in use:
        if not (0 <= i <= grid.height - p and 0 <= j <= grid.width - p):
            raise ContractViolation(f"origin ({i}, {j}) out of range")
        window = image.values[i : i + p, j : j + p]
        signals.append(Signal(values=window.flatten(order="F")))
        if image.mask is None:
            observed.append(np.arange(p * p, dtype=np.intp))
        else:
            sub = image.mask[i : i + p, j : j + p]
            observed.append(np.flatnonzero(sub.flatten(order="F")).astype(np.intp))
    return signals, observed


def reconstruct_image(
    patches: Sequence[np.ndarray],
    grid: PatchGrid,
    origins: Sequence[tuple[int, int]] | None = None,
) -> GrayImage:
    """Average overlapping patch estimates into an image, clamped to [0, 255].

    Each patch is a length p*p column-major vector; pixel values are the
    unweighted mean over every covering patch.
    """
    p = grid.patch_side
    use = grid.origins if origins is None else list(origins)
    if len(patches) != len(use):
        raise ContractViolation(f"{len(patches)} patches for {len(use)} origins")
    acc = np.zeros((grid.height, grid.width))
    counts = np.zeros((grid.height, grid.width), dtype=np.intp)
    for (i, j), vec in zip(use, patches):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (p * p,):
            raise ContractViolation(f"patch at ({i}, {j}) has shape {vec.shape}")
        acc[i : i + p, j : j + p] += vec.reshape((p, p), order="F")
        counts[i : i + p, j : j + p] += 1
    if np.any(counts == 0):
        raise ContractViolation("patch set leaves pixels uncovered")
    return GrayImage(values=np.clip(acc / counts, 0.0, 255.0))


def psnr(reference: np.ndarray, estimate: np.ndarray, peak: float = 255.0) -> float:
    """10 log10(peak^2 / MSE); +inf when the images agree exactly."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        raise ContractViolation(f"shape mismatch {ref.shape} vs {est.shape}")
    if peak <= 0:
        raise ContractViolation("peak must be positive")
    mse = float(np.mean((ref - est) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def make_random_mask(
    height: int, width: int, fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Boolean mask with exactly round(fraction * H * W) observed pixels."""
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation("fraction must be in (0, 1]")
    total = int(height) * int(width)
    count = int(round(fraction * total))
    mask = np.zeros(total, dtype=bool)
    mask[rng.choice(total, size=count, replace=False)] = True
    return mask.reshape((int(height), int(width)))


def reflect_pad_to_tiles(image: GrayImage, p: int) -> tuple[GrayImage, tuple[int, int]]:
    """Reflect-pad so p divides both sides; returns (padded, original shape)."""
    h, w = image.shape
    ph = (-h) % p
    pw = (-w) % p
    if ph == 0 and pw == 0:
        return image, (h, w)
    values = np.pad(image.values, ((0, ph), (0, pw)), mode="reflect")
    mask = None
    if image.mask is not None:
        mask = np.pad(image.mask, ((0, ph), (0, pw)), mode="reflect")
    return GrayImage(values=values, mask=mask), (h, w)


def crop(image: GrayImage, shape: tuple[int, int]) -> GrayImage:
    h, w = shape
    mask = None if image.mask is None else image.mask[:h, :w]
    return GrayImage(values=image.values[:h, :w], mask=mask)


def zero_fill(image: GrayImage) -> np.ndarray:
    """Baseline: unobserved pixels stay 0."""
    return image.values.copy()


def tile_mean_fill(image: GrayImage, p: int) -> np.ndarray:
    """Baseline: each disjoint p-tile's missing pixels take the tile's observed mean."""
    if image.mask is None:
        return image.values.copy()
    h, w = image.shape
    if h % p or w % p:
        raise ContractViolation("tile mean fill needs p to divide the image; pad first")
    out = image.values.copy()
    for i in range(0, h, p):
        for j in range(0, w, p):
            sub_mask = image.mask[i : i + p, j : j + p]
            sub_vals = image.values[i : i + p, j : j + p]
            fill = float(sub_vals[sub_mask].mean()) if sub_mask.any() else 0.0
            block = out[i : i + p, j : j + p]
            block[~sub_mask] = fill
    return out


# --- file formats ---------------------------------------------------------


def read_image(path) -> GrayImage:
    """Load a PGM (P5) or PNG file as a fully observed grayscale image."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        return GrayImage(values=_read_pgm(path))
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64)
    return GrayImage(values=arr)


def write_image(image: GrayImage, path) -> None:
    """Write rounded 8-bit intensities as PGM (P5) or PNG by extension."""
    path = str(path)
    data = np.clip(np.rint(image.values), 0, 255).astype(np.uint8)
    if path.lower().endswith(".pgm"):
        with open(path, "wb") as fh:
            fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode())
            fh.write(data.tobytes())
        return
    from PIL import Image

    Image.fromarray(data, mode="L").save(path)


def _read_token(fh) -> bytes:
    # skips whitespace and '#' comment lines between header tokens
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            break
        if ch in b" \t\r\n":
            if token:
                break
            continue
        if ch == b"#":
            fh.readline()
            continue
        token += ch
    if not token:
        raise ContractViolation("truncated netpbm header")
    return token


def _read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        if _read_token(fh) != b"P5":
            raise ContractViolation("not a binary PGM (P5) file")
        w = int(_read_token(fh))
        h = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval <= 0 or maxval > 255:
            raise ContractViolation("only 8-bit PGM supported")
        data = fh.read(w * h)
        if len(data) != w * h:
            raise ContractViolation("truncated PGM payload")
    arr = np.frombuffer(data, dtype=np.uint8).reshape((h, w)).astype(np.float64)
    return arr * (255.0 / maxval) if maxval != 255 else arr


def read_mask_pbm(path) -> np.ndarray:
    """Read a PBM (P4) mask; a black bit (1) marks an observed pixel."""
    with open(str(path), "rb") as fh:
        if _read_token(fh) != b"P4":
            raise ContractViolation("not a binary PBM (P4) file")
        w = int(_read_token(fh))
        h = int(_read_token(fh))
        row_bytes = (w + 7) // 8
        data = fh.read(row_bytes * h)
        if len(data) != row_bytes * h:
            raise ContractViolation("truncated PBM payload")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8).reshape((h, row_bytes)), axis=1)
    return bits[:, :w].astype(bool)


def write_mask_pbm(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ContractViolation("mask must be 2-d")
    h, w = mask.shape
    packed = np.packbits(mask.astype(np.uint8), axis=1)
    with open(str(path), "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode())
        fh.write(packed.tobytes())
