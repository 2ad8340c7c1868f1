"""On-disk formats: dense matrices, dictionaries, masks, sparse entries,
assignment/code CSVs and learner checkpoints.

Dense matrices are raw little-endian float64 in column-major order next to a
JSON sidecar (``<stem>.json``) holding the shape; dictionaries extend the
sidecar with the block structure. Index lists and coordinate files are plain
text so they stay diffable and gnuplot-friendly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .block_inference import BlockAssignment
from .model import BlockDictionary, BlockSparseCode
from .sensing import ObservationMatrix


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json") if path.suffix != ".json" else path


def save_matrix(matrix: np.ndarray, path, extra: dict | None = None) -> None:
    """Write float64 column-major bytes plus a JSON sidecar with the shape."""
    path = Path(path)
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ContractViolation("only 2-d matrices are serialized")
    path.write_bytes(a.astype("<f8").tobytes(order="F"))
    meta = {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "dtype": "<f8", "order": "F"}
    if extra:
        meta.update(extra)
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_matrix(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    rows, cols = int(meta["rows"]), int(meta["cols"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if raw.size != rows * cols:
        raise ContractViolation(
            f"{path} holds {raw.size} values, sidecar promises {rows}x{cols}"
        )
    return raw.reshape((rows, cols), order="F").copy(), meta


def save_dictionary(dictionary: BlockDictionary, path) -> None:
    """Dictionary = dense atom matrix + sidecar {n, r, k_max, blocks}."""
    save_matrix(
        dictionary.atoms,
        path,
        extra={
            "n": dictionary.n,
            "r": dictionary.r,
            "k_max": dictionary.k_max,
            "blocks": [list(b) for b in dictionary.blocks],
        },
    )


def load_dictionary(path) -> BlockDictionary:
    atoms, meta = load_matrix(path)
    try:
        n, r = int(meta["n"]), int(meta["r"])
        k_max = int(meta["k_max"])
        blocks = tuple(tuple(int(c) for c in b) for b in meta["blocks"])
    except KeyError as exc:
        raise ContractViolation(f"dictionary sidecar misses field {exc}") from exc
    if atoms.shape != (n, r):
        raise ContractViolation(
            f"atom payload is {atoms.shape}, sidecar promises ({n}, {r})"
        )
    return BlockDictionary(atoms=atoms, blocks=blocks, k_max=k_max)


def write_mask_lines(observed: Sequence[Sequence[int]], path) -> None:
    """One line per signal: space-separated strictly increasing indices."""
    lines = []
    for idx in observed:
        idx = [int(i) for i in idx]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractViolation("mask indices must be strictly increasing")
        lines.append(" ".join(str(i) for i in idx))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mask_lines(path) -> list[list[int]]:
    out = []
    for ln, line in enumerate(Path(path).read_text().splitlines()):
        line = line.strip()
        idx = [int(t) for t in line.split()] if line else []
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractViolation(f"line {ln}: mask indices must be strictly increasing")
        out.append(idx)
    return out


def write_coordinate_list(obs: ObservationMatrix, path) -> None:
    """Sparse entries as 'u v value' lines (u = union row, v = signal)."""
    with open(path, "w") as fh:
        for u, v, w in zip(obs.row_idx, obs.col_idx, obs.values):
            fh.write(f"{int(u)} {int(v)} {float(w)!r}\n")


def read_coordinate_list(path, shape: tuple[int, int]) -> ObservationMatrix:
    rr, cc, vv = [], [], []
    for ln, line in enumerate(Path(path).read_text().splitlines()):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ContractViolation(f"line {ln}: expected 'u v value'")
        rr.append(int(parts[0]))
        cc.append(int(parts[1]))
        vv.append(float(parts[2]))
    return ObservationMatrix(
        shape=shape,
        row_idx=np.array(rr, dtype=np.intp),
        col_idx=np.array(cc, dtype=np.intp),
        values=np.array(vv, dtype=np.float64),
    )


def write_assignment_csv(assignment: BlockAssignment, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["signal_id", "block_id", "residual"])
        for i, (b, r) in enumerate(zip(assignment.blocks, assignment.residuals)):
            w.writerow([i, int(b), repr(float(r))])


def read_assignment_csv(path) -> BlockAssignment:
    blocks, residuals = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            blocks.append(int(row["block_id"]))
            residuals.append(float(row["residual"]))
    return BlockAssignment(
        blocks=np.array(blocks, dtype=np.intp), residuals=np.array(residuals)
    )


def write_codes_csv(codes: Sequence[BlockSparseCode], dictionary: BlockDictionary, path) -> None:
    """Sparse code rows: signal id, active block, the block's coefficients."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["signal_id", "active_block", "coefficients"])
        for i, code in enumerate(codes):
            if code.active_block is None:
                w.writerow([i, "", ""])
            else:
                vals = " ".join(repr(float(v)) for v in code.block_values(dictionary))
                w.writerow([i, code.active_block, vals])


def read_codes_csv(path, dictionary: BlockDictionary) -> list[BlockSparseCode]:
    codes = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["active_block"] == "":
                codes.append(BlockSparseCode.zero(dictionary.r))
                continue
            block = int(row["active_block"])
            vals = np.array([float(t) for t in row["coefficients"].split()])
            codes.append(BlockSparseCode.from_block(dictionary, block, vals))
    return codes


def write_trace_csv(rows: Sequence[tuple[int, int, float]], path) -> None:
    """Objective trace rows: (iteration, block, objective); -1 = all blocks."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "block", "objective"])
        for it, block, value in rows:
            w.writerow([int(it), int(block), repr(float(value))])


def write_phase_csv(trials, summary, trials_path, summary_path, curve_path=None) -> None:
    """Phase-transition outputs: per-trial CSV, summary CSV, gnuplot data."""
    with open(trials_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "trial", "psnr_db", "success", "reason"])
        for t in trials:
            w.writerow(
                [repr(t.fraction), t.trial, repr(t.psnr_db), int(t.success), t.reason]
            )
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "frequency"])
        for fraction, freq in summary:
            w.writerow([repr(fraction), repr(freq)])
    if curve_path is not None:
        with open(curve_path, "w") as fh:
            fh.write("# fraction frequency\n")
            for fraction, freq in summary:
                fh.write(f"{fraction} {freq}\n")


CHECKPOINT_FILES = ("dictionary.bin", "codes.csv", "assignment.csv", "trace.csv", "meta.json")


def save_checkpoint(state, directory) -> None:
    """Learner checkpoint: dictionary, codes, assignment, trace, meta."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_dictionary(state.dictionary, directory / "dictionary.bin")
    write_codes_csv(state.codes, state.dictionary, directory / "codes.csv")
    write_assignment_csv(state.assignment, directory / "assignment.csv")
    write_trace_csv(
        [(it, -1, v) for it, v in enumerate(state.objective_trace)],
        directory / "trace.csv",
    )
    meta = {
        "iterations": len(state.objective_trace),
        "objective": state.objective,
        "skipped": [[int(b), reason] for b, reason in state.skipped],
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory):
    """Returns (dictionary, codes, assignment, trace list)."""
    from .learner import LearnerState

    directory = Path(directory)
    dictionary = load_dictionary(directory / "dictionary.bin")
    codes = read_codes_csv(directory / "codes.csv", dictionary)
    assignment = read_assignment_csv(directory / "assignment.csv")
    meta = json.loads((directory / "meta.json").read_text())
    trace = []
    with open(directory / "trace.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["block"]) == -1:
                trace.append(float(row["objective"]))
    return LearnerState(
        dictionary=dictionary,
        codes=tuple(codes),
        assignment=assignment,
        objective_trace=tuple(trace) if trace else (float(meta.get("objective", 0.0)),),
        skipped=tuple((int(b), r) for b, r in meta.get("skipped", [])),
    )
