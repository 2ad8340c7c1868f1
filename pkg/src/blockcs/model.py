"""Core domain types: block dictionaries, one-block-sparse codes, objectives.

The signal model is a union of subspaces: an ``n x r`` dictionary whose
columns are partitioned into L disjoint blocks of size at most ``k_max``,
and signals ``x_i = D s_i`` whose coefficients live on exactly one block.
With per-signal sensing matrices the fit quality is

    sum_i || y_i - A_i D s_i ||_2^2

which decomposes block by block over the signals assigned to each block.
Solutions are compared up to block permutation combined with invertible
per-block transforms (both leave every spanned subspace unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import subspace_angles

from .errors import ContractViolation
from .sensing import MeasurementSet

DEFAULT_ANGLE_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BlockDictionary:
    """Atom matrix (n x r) plus an ordered partition of columns into blocks.

    Blocks are disjoint index tuples with sizes in [1, min(k_max, n)]; their
    union may cover fewer than r columns. Blocks need not be orthonormal at
    construction time (they drift during alternating updates); call
    :meth:`is_block_orthonormal` to check the post-orthogonalization state.
    """

    atoms: np.ndarray
    blocks: tuple[tuple[int, ...], ...]
    k_max: int

    def __post_init__(self):
        atoms = _readonly(self.atoms)
        if atoms.ndim != 2:
            raise ContractViolation("atoms must be an n x r matrix")
        if not np.all(np.isfinite(atoms)):
            raise ContractViolation("atoms must be finite")
        n, r = atoms.shape
        if self.k_max < 1:
            raise ContractViolation("k_max must be >= 1")
        blocks = tuple(tuple(int(c) for c in b) for b in self.blocks)
        if not blocks:
            raise ContractViolation("a dictionary needs at least one block")
        seen: set[int] = set()
        for ell, b in enumerate(blocks):
            if not 1 <= len(b) <= min(self.k_max, n):
                raise ContractViolation(
                    f"block {ell} has size {len(b)}, outside [1, min(k_max={self.k_max}, n={n})]"
                )
            for c in b:
                if not 0 <= c < r:
                    raise ContractViolation(f"block {ell} references column {c} outside [0, {r})")
                if c in seen:
                    raise ContractViolation(f"column {c} appears in more than one block")
                seen.add(c)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "k_max", int(self.k_max))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def r(self) -> int:
        return self.atoms.shape[1]

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def block(self, ell: int) -> np.ndarray:
        """The n x k_ell submatrix of block ``ell``."""
        return self.atoms[:, list(self.blocks[ell])]

    def with_block(self, ell: int, new_atoms: np.ndarray) -> "BlockDictionary":
        """Copy of this dictionary with block ``ell``'s columns replaced."""
        cols = list(self.blocks[ell])
        new_atoms = np.asarray(new_atoms, dtype=np.float64)
        if new_atoms.shape != (self.n, len(cols)):
            raise ContractViolation(
                f"replacement for block {ell} must have shape ({self.n}, {len(cols)})"
            )
        atoms = self.atoms.copy()
        atoms[:, cols] = new_atoms
        return BlockDictionary(atoms=atoms, blocks=self.blocks, k_max=self.k_max)

    def with_blocks(self, blocks: Sequence[Sequence[int]]) -> "BlockDictionary":
        """Same atoms under a new block partition."""
        return BlockDictionary(atoms=self.atoms, blocks=tuple(tuple(b) for b in blocks), k_max=self.k_max)

    def is_block_orthonormal(self, tol: float = 1e-10) -> bool:
        for ell in range(self.num_blocks):
            d = self.block(ell)
            gram = d.T @ d
            if np.max(np.abs(gram - np.eye(d.shape[1]))) > tol:
                return False
        return True


@dataclass(frozen=True)
class BlockSparseCode:
    """Length-r coefficient vector supported on a single block (or none).

    ``active_block is None`` means the signal is unassigned and all
    coefficients are zero. Support containment in the active block is
    checked against a dictionary by :func:`check_code`.
    """

    coefficients: np.ndarray
    active_block: int | None

    def __post_init__(self):
        coeff = _readonly(self.coefficients)
        if coeff.ndim != 1:
            raise ContractViolation("coefficients must be a vector")
        if not np.all(np.isfinite(coeff)):
            raise ContractViolation("coefficients must be finite")
        if self.active_block is None and np.any(coeff != 0.0):
            raise ContractViolation("an unassigned code must be all zero")
        object.__setattr__(self, "coefficients", coeff)
        if self.active_block is not None:
            object.__setattr__(self, "active_block", int(self.active_block))

    @classmethod
    def zero(cls, r: int) -> "BlockSparseCode":
        return cls(coefficients=np.zeros(int(r)), active_block=None)

    @classmethod
    def from_block(
        cls, dictionary: BlockDictionary, block: int, values: np.ndarray
    ) -> "BlockSparseCode":
        cols = dictionary.blocks[block]
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(cols),):
            raise ContractViolation(
                f"block {block} expects {len(cols)} coefficients, got shape {values.shape}"
            )
        coeff = np.zeros(dictionary.r)
        coeff[list(cols)] = values
        return cls(coefficients=coeff, active_block=block)

    def block_values(self, dictionary: BlockDictionary) -> np.ndarray:
        """Coefficients restricted to the active block's columns."""
        if self.active_block is None:
            raise ContractViolation("unassigned code has no block values")
        return self.coefficients[list(dictionary.blocks[self.active_block])]


@dataclass(frozen=True)
class Signal:
    """A fully known signal vector (n,)."""

    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1:
            raise ContractViolation("a signal is a 1-d vector")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("signal values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def check_code(code: BlockSparseCode, dictionary: BlockDictionary, index: int = -1) -> None:
    """Raises if a code's support escapes its active block (one-block sparsity)."""
    tag = f"code {index}" if index >= 0 else "code"
    if code.coefficients.shape != (dictionary.r,):
        raise ContractViolation(f"{tag} has length {code.coefficients.shape[0]}, expected r={dictionary.r}")
    if code.active_block is None:
        return
    if not 0 <= code.active_block < dictionary.num_blocks:
        raise ContractViolation(f"{tag} names block {code.active_block}, dictionary has {dictionary.num_blocks}")
    outside = np.ones(dictionary.r, dtype=bool)
    outside[list(dictionary.blocks[code.active_block])] = False
    if np.any(code.coefficients[outside] != 0.0):
        raise ContractViolation(f"{tag} has support outside its active block")


def reconstruction(dictionary: BlockDictionary, code: BlockSparseCode) -> np.ndarray:
    """The modeled signal ``D s`` (only the active block contributes)."""
    if code.active_block is None:
        return np.zeros(dictionary.n)
    return dictionary.block(code.active_block) @ code.block_values(dictionary)


def objective(
    measurements: MeasurementSet,
    dictionary: BlockDictionary,
    codes: Sequence[BlockSparseCode],
) -> float:
    """Total squared measurement misfit ``sum_i ||y_i - A_i D s_i||^2``."""
    if len(codes) != len(measurements):
        raise ContractViolation(
            f"{len(codes)} codes for {len(measurements)} measurements"
        )
    if measurements.n != dictionary.n:
        raise ContractViolation(
            f"measurements live in R^{measurements.n}, dictionary in R^{dictionary.n}"
        )
    total = 0.0
    for i, meas in enumerate(measurements):
        check_code(codes[i], dictionary, i)
        resid = meas.y - meas.sensor.apply(reconstruction(dictionary, codes[i]))
        total += float(resid @ resid)
    return total


def per_block_objective(
    measurements: MeasurementSet,
    dictionary: BlockDictionary,
    block: int,
    codes: Sequence[BlockSparseCode],
) -> float:
    """Misfit of one block over the signals assigned to it.

    Every code must be active on ``block``; summing this over blocks (plus
    the zero contribution of unassigned signals) reproduces :func:`objective`.
    """
    if not 0 <= block < dictionary.num_blocks:
        raise ContractViolation(f"no block {block}")
    for i, code in enumerate(codes):
        if code.active_block != block:
            raise ContractViolation(f"code {i} is active on {code.active_block}, not {block}")
    return objective(measurements, dictionary, codes)


def transform_solution(
    dictionary: BlockDictionary,
    codes: Sequence[BlockSparseCode],
    permutation: Sequence[int],
    transforms: Sequence[np.ndarray],
) -> tuple[BlockDictionary, list[BlockSparseCode]]:
    """Apply a solution-preserving change of variables.

    Block ``ell`` becomes ``D[ell] T_ell`` with codes ``T_ell^{-1} s[ell]``,
    then the block order is permuted: new block j is old block
    ``permutation[j]``. Reconstructions ``D s_i`` are unchanged.
    """
    L = dictionary.num_blocks
    perm = [int(p) for p in permutation]
    if sorted(perm) != list(range(L)):
        raise ContractViolation("permutation must reorder the blocks")
    if len(transforms) != L:
        raise ContractViolation("one transform per block required")
    atoms = dictionary.atoms.copy()
    inverses: list[np.ndarray] = []
    for ell, t in enumerate(transforms):
        t = np.asarray(t, dtype=np.float64)
        k = len(dictionary.blocks[ell])
        if t.shape != (k, k):
            raise ContractViolation(f"transform {ell} must be {k} x {k}")
        try:
            inverses.append(np.linalg.inv(t))
        except np.linalg.LinAlgError as exc:
            raise ContractViolation(f"transform {ell} is singular") from exc
        cols = list(dictionary.blocks[ell])
        atoms[:, cols] = dictionary.atoms[:, cols] @ t
    old_to_new = {old: new for new, old in enumerate(perm)}
    new_blocks = tuple(dictionary.blocks[old] for old in perm)
    new_dict = BlockDictionary(atoms=atoms, blocks=new_blocks, k_max=dictionary.k_max)
    new_codes: list[BlockSparseCode] = []
    for code in codes:
        if code.active_block is None:
            new_codes.append(BlockSparseCode.zero(dictionary.r))
            continue
        ell = code.active_block
        s = inverses[ell] @ code.block_values(dictionary)
        coeff = np.zeros(dictionary.r)
        coeff[list(dictionary.blocks[ell])] = s
        new_codes.append(BlockSparseCode(coefficients=coeff, active_block=old_to_new[ell]))
    return new_dict, new_codes


def _match_blocks(dict_a: BlockDictionary, dict_b: BlockDictionary, tol: float) -> list[int] | None:
    """Perfect matching of blocks by span (principal angles <= tol), or None."""
    L = dict_a.num_blocks
    candidates: list[list[int]] = []
    for a in range(L):
        da = dict_a.block(a)
        row = []
        for b in range(L):
            db = dict_b.block(b)
            if db.shape[1] != da.shape[1]:
                continue
            angles = subspace_angles(da, db)
            if angles.size == da.shape[1] and np.max(angles, initial=0.0) <= tol:
                row.append(b)
        candidates.append(row)
    match_of_b: dict[int, int] = {}

    def augment(a: int, visited: set[int]) -> bool:
        for b in candidates[a]:
            if b in visited:
                continue
            visited.add(b)
            if b not in match_of_b or augment(match_of_b[b], visited):
                match_of_b[b] = a
                return True
        return False

    for a in range(L):
        if not augment(a, set()):
            return None
    perm = [0] * L
    for b, a in match_of_b.items():
        perm[a] = b
    return perm


def equivalent_solutions(
    dict_a: BlockDictionary,
    codes_a: Sequence[BlockSparseCode],
    dict_b: BlockDictionary,
    codes_b: Sequence[BlockSparseCode],
    tol: float = DEFAULT_ANGLE_TOL,
) -> bool:
    """True iff the two solutions agree up to block permutation and
    invertible per-block transforms.

    Checked as: a perfect span matching between equal-size blocks (all
    principal angles <= tol) together with per-signal reconstruction
    agreement ``||D_a s_a - D_b s_b|| <= tol * max(1, ||recon||)``.
    """
    if dict_a.n != dict_b.n or dict_a.num_blocks != dict_b.num_blocks:
        return False
    if sorted(dict_a.block_sizes) != sorted(dict_b.block_sizes):
        return False
    if len(codes_a) != len(codes_b):
        return False
    for i, code in enumerate(codes_a):
        check_code(code, dict_a, i)
    for i, code in enumerate(codes_b):
        check_code(code, dict_b, i)
    if _match_blocks(dict_a, dict_b, tol) is None:
        return False
    for ca, cb in zip(codes_a, codes_b):
        ra = reconstruction(dict_a, ca)
        rb = reconstruction(dict_b, cb)
        scale = max(1.0, float(np.linalg.norm(ra)), float(np.linalg.norm(rb)))
        if np.linalg.norm(ra - rb) > tol * scale:
            return False
    return True
