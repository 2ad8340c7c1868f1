"""Per-signal sensing matrices and their union.

Each signal ``x_i`` is observed as ``y_i = A_i x_i`` through its own sensing
matrix.  Stacking the distinct rows of all ``A_i`` gives the union matrix
``Atilde`` (M x n); the measurements of a set of signals then become a
partially observed matrix ``P_Omega(Atilde X)``, which is what the
completion baseline and the recoverability checks operate on.

Supported sensing kinds:

* ``pixel_mask``    rows of the identity (inpainting masks),
* ``orthobasis_rows`` rows drawn from a shared orthonormal pool,
* ``gaussian``      dense iid N(0, 1/m) rows, deduplicated by exact value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation

KIND_PIXEL = "pixel_mask"
KIND_GAUSSIAN = "gaussian"
KIND_ORTHOBASIS = "orthobasis_rows"
_KINDS = (KIND_PIXEL, KIND_GAUSSIAN, KIND_ORTHOBASIS)
_POOLED_KINDS = (KIND_PIXEL, KIND_ORTHOBASIS)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SensingMatrix:
    """One signal's measurement operator ``A_i`` (m_i x n), m_i >= 1.

    ``row_ids`` track provenance for pooled kinds (pixel coordinates or pool
    row indices, strictly increasing); gaussian matrices carry no ids and are
    compared by exact row value.
    """

    rows: np.ndarray
    kind: str
    row_ids: tuple[int, ...] = ()

    def __post_init__(self):
        rows = _readonly(self.rows)
        if rows.ndim != 2:
            raise ContractViolation("sensing rows must be a 2-d array")
        if rows.shape[0] < 1:
            raise ContractViolation("sensing matrix needs at least one row (m_i >= 1)")
        if not np.all(np.isfinite(rows)):
            raise ContractViolation("sensing rows must be finite")
        if self.kind not in _KINDS:
            raise ContractViolation(f"unknown sensing kind {self.kind!r}")
        ids = tuple(int(i) for i in self.row_ids)
        if self.kind in _POOLED_KINDS:
            if len(ids) != rows.shape[0]:
                raise ContractViolation("pooled sensing matrices need one row id per row")
            if any(b <= a for a, b in zip(ids, ids[1:])):
                raise ContractViolation("row ids must be strictly increasing")
            if self.kind == KIND_PIXEL:
                n = rows.shape[1]
                if ids and (ids[0] < 0 or ids[-1] >= n):
                    raise ContractViolation("pixel mask indices out of range")
                expect = np.zeros_like(rows)
                expect[np.arange(len(ids)), list(ids)] = 1.0
                if not np.array_equal(rows, expect):
                    raise ContractViolation("pixel_mask rows must be identity rows matching row_ids")
        elif ids:
            raise ContractViolation("gaussian sensing matrices carry no row ids")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_ids", ids)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Measure a signal: returns ``A_i x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ContractViolation(f"signal has shape {x.shape}, expected ({self.n},)")
        if self.kind == KIND_PIXEL:
            return x[list(self.row_ids)]
        return self.rows @ x


@dataclass(frozen=True)
class Measurement:
    """An observed vector ``y_i`` paired with the sensor that produced it."""

    y: np.ndarray
    sensor: SensingMatrix

    def __post_init__(self):
        y = _readonly(self.y)
        if y.ndim != 1 or y.shape[0] != self.sensor.m:
            raise ContractViolation(
                f"measurement length {y.shape} does not match sensor with m={self.sensor.m}"
            )
        if not np.all(np.isfinite(y)):
            raise ContractViolation("measurements must be finite")
        object.__setattr__(self, "y", y)


class MeasurementSet:
    """An ordered collection of measurements over a common signal space."""

    def __init__(self, measurements: Iterable[Measurement]):
        ms = tuple(measurements)
        if not ms:
            raise ContractViolation("measurement set must be non-empty")
        n = ms[0].sensor.n
        for i, m in enumerate(ms):
            if m.sensor.n != n:
                raise ContractViolation(f"measurement {i} has n={m.sensor.n}, expected {n}")
        self._measurements = ms
        self.n = n

    def __len__(self) -> int:
        return len(self._measurements)

    def __iter__(self):
        return iter(self._measurements)

    def __getitem__(self, i: int) -> Measurement:
        return self._measurements[i]

    def subset(self, indices: Sequence[int]) -> "MeasurementSet":
        return MeasurementSet(self._measurements[int(i)] for i in indices)

    @property
    def sensors(self) -> tuple[SensingMatrix, ...]:
        return tuple(m.sensor for m in self._measurements)


@dataclass(frozen=True)
class UnionMatrix:
    """Distinct sensing rows of an ensemble, stacked (M x n, canonical order).

    ``provenance`` records, per row, the pool row id (pooled kinds) or a
    synthetic first-appearance id (gaussian).
    """

    rows: np.ndarray
    provenance: tuple[int, ...]
    kind: str

    def __post_init__(self):
        rows = _readonly(self.rows)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ContractViolation("union matrix must be 2-d and non-empty")
        if self.kind not in _KINDS:
            raise ContractViolation(f"unknown sensing kind {self.kind!r}")
        if len(self.provenance) != rows.shape[0]:
            raise ContractViolation("one provenance id per union row required")
        seen = set()
        for u in range(rows.shape[0]):
            key = rows[u].tobytes()
            if key in seen:
                raise ContractViolation(f"union rows must be pairwise distinct (row {u} repeats)")
            seen.add(key)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "provenance", tuple(int(i) for i in self.provenance))

    @property
    def M(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.rows))


@dataclass(frozen=True)
class ObservationMatrix:
    """Sparse view ``P_Omega(Atilde X)`` of a signal set's measurements.

    Entries are keyed by (union row u, signal column v); omega is exactly the
    set of observed index pairs.
    """

    shape: tuple[int, int]
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        shape = (int(self.shape[0]), int(self.shape[1]))
        ru = np.asarray(self.row_idx, dtype=np.intp)
        cv = np.asarray(self.col_idx, dtype=np.intp)
        vals = _readonly(self.values)
        if not (ru.shape == cv.shape == vals.shape) or vals.ndim != 1:
            raise ContractViolation("row_idx, col_idx and values must be 1-d and equal length")
        if vals.size and (ru.min() < 0 or ru.max() >= shape[0] or cv.min() < 0 or cv.max() >= shape[1]):
            raise ContractViolation("observation indices out of range")
        if not np.all(np.isfinite(vals)):
            raise ContractViolation("observed values must be finite")
        flat = ru * shape[1] + cv
        if np.unique(flat).size != flat.size:
            raise ContractViolation("duplicate (row, column) observation")
        ru.setflags(write=False)
        cv.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "row_idx", ru)
        object.__setattr__(self, "col_idx", cv)
        object.__setattr__(self, "values", vals)

    @cached_property
    def omega(self) -> frozenset:
        return frozenset(zip(self.row_idx.tolist(), self.col_idx.tolist()))

    def entries(self) -> dict:
        return {
            (int(u), int(v)): float(w)
            for u, v, w in zip(self.row_idx, self.col_idx, self.values)
        }

    def num_observed(self) -> int:
        return int(self.values.size)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Returns (matrix with zeros at unobserved entries, boolean mask)."""
        mat = np.zeros(self.shape)
        mask = np.zeros(self.shape, dtype=bool)
        mat[self.row_idx, self.col_idx] = self.values
        mask[self.row_idx, self.col_idx] = True
        return mat, mask


@dataclass(frozen=True)
class SensingEnsemble:
    """All per-signal sensors of a data set plus their union matrix."""

    sensors: tuple[SensingMatrix, ...]
    union: UnionMatrix

    @classmethod
    def from_sensors(cls, sensors: Sequence[SensingMatrix]) -> "SensingEnsemble":
        sensors = tuple(sensors)
        return cls(sensors=sensors, union=build_union(sensors))

    def sizes(self) -> np.ndarray:
        return np.array([s.m for s in self.sensors], dtype=int)


def identity_pool(n: int) -> UnionMatrix:
    """The pixel-mask row pool: the n x n identity."""
    return UnionMatrix(rows=np.eye(int(n)), provenance=tuple(range(int(n))), kind=KIND_PIXEL)


def random_orthobasis_pool(n: int, rng: np.random.Generator) -> UnionMatrix:
    """A random orthonormal row pool (n x n), e.g. for noiselet-style sensing."""
    g = rng.standard_normal((int(n), int(n)))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))  # fix sign convention so the pool is well defined
    return UnionMatrix(rows=q.T, provenance=tuple(range(int(n))), kind=KIND_ORTHOBASIS)


def make_pixel_mask(n: int, observed: Sequence[int]) -> SensingMatrix:
    """Sensing matrix that keeps the listed coordinates (strictly increasing)."""
    ids = tuple(int(i) for i in observed)
    rows = np.zeros((len(ids), int(n)))
    if ids:
        rows[np.arange(len(ids)), list(ids)] = 1.0
    return SensingMatrix(rows=rows, kind=KIND_PIXEL, row_ids=ids)


def make_gaussian(m: int, n: int, rng: np.random.Generator) -> SensingMatrix:
    """Dense iid N(0, 1/m) sensing matrix."""
    if m < 1:
        raise ContractViolation("gaussian sensing needs m >= 1")
    rows = rng.standard_normal((int(m), int(n))) / np.sqrt(float(m))
    return SensingMatrix(rows=rows, kind=KIND_GAUSSIAN)


def make_orthobasis_subset(pool: UnionMatrix, row_ids: Sequence[int]) -> SensingMatrix:
    """Sensor formed by the given pool rows (ids strictly increasing)."""
    ids = tuple(int(i) for i in row_ids)
    if any(i < 0 or i >= pool.M for i in ids):
        raise ContractViolation("pool row id out of range")
    rows = pool.rows[list(ids)]
    kind = KIND_PIXEL if pool.kind == KIND_PIXEL else KIND_ORTHOBASIS
    return SensingMatrix(rows=rows, kind=kind, row_ids=ids)


def build_union(sensors: Sequence[SensingMatrix]) -> UnionMatrix:
    """Stack the distinct rows across sensors in canonical order.

    Pooled kinds dedupe by row id and sort ascending; gaussian rows dedupe by
    exact value in first-appearance order. All sensors must share n and kind.
    """
    sensors = tuple(sensors)
    if not sensors:
        raise ContractViolation("cannot build a union from zero sensors")
    n = sensors[0].n
    kind = sensors[0].kind
    for i, s in enumerate(sensors):
        if s.n != n:
            raise ContractViolation(f"sensor {i} has n={s.n}, expected {n}")
        if s.kind != kind:
            raise ContractViolation(
                f"sensor {i} has kind {s.kind!r}; a union mixes only one kind ({kind!r})"
            )
    if kind in _POOLED_KINDS:
        by_id: dict[int, np.ndarray] = {}
        for i, s in enumerate(sensors):
            for j, rid in enumerate(s.row_ids):
                row = s.rows[j]
                prev = by_id.get(rid)
                if prev is None:
                    by_id[rid] = row
                elif not np.array_equal(prev, row):
                    raise ContractViolation(
                        f"sensor {i} disagrees with an earlier sensor on pool row {rid}"
                    )
        ids = sorted(by_id)
        rows = np.stack([by_id[i] for i in ids])
        return UnionMatrix(rows=rows, provenance=tuple(ids), kind=kind)
    seen: dict[bytes, int] = {}
    rows_list: list[np.ndarray] = []
    for s in sensors:
        for row in s.rows:
            key = row.tobytes()
            if key not in seen:
                seen[key] = len(rows_list)
                rows_list.append(row)
    rows = np.stack(rows_list)
    return UnionMatrix(rows=rows, provenance=tuple(range(len(rows_list))), kind=kind)


def assemble_observation(measurements: MeasurementSet, union: UnionMatrix) -> ObservationMatrix:
    """Scatter the measurements into the (M x N) observation matrix.

    Signal i contributes column i; its sensor rows must all appear in the
    union (otherwise the union was built from a different ensemble).
    """
    if union.kind in _POOLED_KINDS:
        pos = {rid: u for u, rid in enumerate(union.provenance)}
        locate = lambda s, j: pos.get(s.row_ids[j])
    else:
        pos = {union.rows[u].tobytes(): u for u in range(union.M)}
        locate = lambda s, j: pos.get(s.rows[j].tobytes())
    rr: list[int] = []
    cc: list[int] = []
    vv: list[float] = []
    for v, meas in enumerate(measurements):
        s = meas.sensor
        if s.kind != union.kind:
            raise ContractViolation(f"measurement {v} kind {s.kind!r} does not match union")
        for j in range(s.m):
            u = locate(s, j)
            if u is None:
                raise ContractViolation(
                    f"row {j} of sensor {v} is absent from the union matrix"
                )
            rr.append(u)
            cc.append(v)
            vv.append(float(meas.y[j]))
    return ObservationMatrix(
        shape=(union.M, len(measurements)),
        row_idx=np.array(rr, dtype=np.intp),
        col_idx=np.array(cc, dtype=np.intp),
        values=np.array(vv),
    )
