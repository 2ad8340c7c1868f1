"""Command line front end.

Subcommands: inpaint, learn, synth, phase, check-conditions, complete.
Global flags (seed, threads, output dir, log level, config file) come before
the subcommand; a config file holds flat ``key=value`` pairs mirroring the
flags, and explicit flags override it. Exit codes: 0 success, 1 invalid
input or contract violation, 2 usage error, 3 numeric failure.

Numeric modules are imported inside the handlers on purpose: --threads must
pin the BLAS thread env vars before numpy first loads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger(__name__)


def _parse_scalar(text: str):
    low = text.strip()
    if low.lower() in ("true", "yes"):
        return True
    if low.lower() in ("false", "no"):
        return False
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            continue
    return low


def load_config_file(path) -> dict:
    """Flat key=value pairs; '#' starts a comment, keys use underscores."""
    values = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines()):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln + 1}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = _parse_scalar(val)
    return values


def _int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="blockcs",
        description="Block-dictionary learning and one-block-sparse recovery "
        "from per-signal compressive measurements.",
    )
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--threads", type=int, default=None, help="bound BLAS thread count")
    parser.add_argument("--output-dir", default=".", help="directory for all outputs")
    parser.add_argument(
        "--log-level", default="warning", choices=["debug", "info", "warning", "error"]
    )
    parser.add_argument("--config", default=None, help="key=value config file; flags override")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = sub.add_parser("inpaint", help="fill in missing pixels of a grayscale image")
    p.add_argument("--image", required=True, help="input image (PGM or PNG)")
    p.add_argument("--mask", default=None, help="PBM mask or per-tile index lines")
    p.add_argument("--fraction", type=float, default=None, help="generate a random mask")
    p.add_argument("--reference", default=None, help="ground truth image for PSNR")
    p.add_argument("--crop", default=None, help="work on a crop: row,col,height,width")
    p.add_argument("--patch-side", type=int, default=8)
    p.add_argument("--r", type=int, default=256, help="number of atoms")
    p.add_argument("--k-max", type=int, default=8, help="largest block size")
    p.add_argument("--l-init", type=int, default=None, help="fixed initial block count")
    p.add_argument("--iters", type=int, default=10, help="outer iterations")
    p.add_argument("--method", choices=["als", "svt"], default="als")
    p.add_argument("--sac-threshold", type=float, default=0.1)
    p.add_argument("--sac-every", type=int, default=1)
    p.add_argument("--init", choices=["random", "data"], default="random")
    p.add_argument("--restarts", type=int, default=1, help="keep the best of this many runs")
    p.add_argument(
        "--reference-protocol",
        action="store_true",
        help="full-image reference settings (r=256, p=8, 10 iterations); "
        "see README for the expected offline results",
    )
    p.add_argument("--output", default="inpainted.png", help="output image name")
    subparsers["inpaint"] = p

    p = sub.add_parser("learn", help="learn a block dictionary from masked signals")
    p.add_argument("--signals", required=True, help="dense n x N matrix (binary + sidecar)")
    p.add_argument("--masks", default=None, help="per-signal observed index lines")
    p.add_argument("--r", type=int, default=256)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--l-init", type=int, default=None)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--sac-threshold", type=float, default=0.1)
    p.add_argument("--sac-every", type=int, default=1)
    p.add_argument("--init", choices=["random", "data"], default="random")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--resume", default=None, help="checkpoint directory to continue from")
    subparsers["learn"] = p

    p = sub.add_parser("synth", help="generate a planted union-of-subspaces data set")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--block-sizes", default="4,4,4,4", help="comma separated k_l")
    p.add_argument("--counts", default="96", help="per-block signal counts (or one for all)")
    p.add_argument("--coeff-scale", type=float, default=1.0)
    subparsers["synth"] = p

    p = sub.add_parser("phase", help="success frequency vs observation fraction")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--block-sizes", default="4,4,4,4")
    p.add_argument("--count-per-block", type=int, default=96)
    p.add_argument("--fractions", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--threshold-db", type=float, default=40.0)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--init", choices=["random", "data"], default="random")
    p.add_argument("--restarts", type=int, default=1)
    subparsers["phase"] = p

    p = sub.add_parser("check-conditions", help="evaluate recoverability conditions")
    p.add_argument("--checkpoint", required=True, help="learner checkpoint directory")
    p.add_argument("--masks", default=None, help="observed index lines (enables pattern checks)")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--max-subset", type=int, default=6, help="spark search budget")
    p.add_argument("--output", default=None, help="write the JSON report here (default stdout)")
    subparsers["check-conditions"] = p

    p = sub.add_parser("complete", help="singular value thresholding baseline")
    p.add_argument("--input", default=None, help="'u v value' coordinate list")
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--synthetic", action="store_true", help="run on a planted low-rank matrix")
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--fraction", type=float, default=0.4)
    p.add_argument("--tau", type=float, default=None, help="default 5 sqrt(max dim)")
    p.add_argument("--delta", type=float, default=None, help="default 1.2 MN/|Omega|")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=2000)
    subparsers["complete"] = p

    return parser, subparsers


def _known_dests(parser, subparser) -> set:
    dests = {a.dest for a in parser._actions}
    dests |= {a.dest for a in subparser._actions}
    return dests


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_inpaint(args, out: Path) -> int:
    import numpy as np

    from . import imaging
    from .errors import ContractViolation
    from .pipeline import InpaintConfig, inpaint

    image = imaging.read_image(args.image)
    if args.reference_protocol:
        # pinned full-image settings; expected offline results in the README
        args.r, args.patch_side, args.iters = 256, 8, 10
        args.crop = None
    if args.crop:
        r0, c0, h, w = _int_list(args.crop)
        image = imaging.GrayImage(values=image.values[r0 : r0 + h, c0 : c0 + w])
    reference = None
    if args.mask is not None:
        mask = _load_image_mask(args.mask, image.shape, args.patch_side)
        observed = imaging.GrayImage(values=image.values, mask=mask)
        if args.reference:
            reference = imaging.read_image(args.reference)
    elif args.fraction is not None:
        rng = np.random.default_rng(args.seed)
        mask = imaging.make_random_mask(image.shape[0], image.shape[1], args.fraction, rng)
        observed = imaging.GrayImage(values=image.values, mask=mask)
        reference = image  # masking a complete input: it doubles as ground truth
        imaging.write_mask_pbm(mask, out / "mask.pbm")
    else:
        raise ContractViolation("provide either --mask or --fraction")
    config = InpaintConfig(
        patch_side=args.patch_side,
        r=args.r,
        k_max=args.k_max,
        L_init=args.l_init,
        max_outer_iters=args.iters,
        method=args.method,
        sac_threshold=args.sac_threshold,
        sac_every=args.sac_every,
        init=args.init,
        restarts=args.restarts,
        seed=args.seed,
    )
    result = inpaint(observed, config, reference=reference)
    imaging.write_image(result.image, out / args.output)
    _write_json(result.metrics, out / "metrics.json")
    if "psnr_db" in result.metrics:
        print(f"psnr_db={result.metrics['psnr_db']:.4f}")
    return 0


def _load_image_mask(path: str, shape, patch_side: int):
    import numpy as np

    from . import imaging, serialization
    from .errors import ContractViolation

    if str(path).lower().endswith(".pbm"):
        mask = imaging.read_mask_pbm(path)
        if mask.shape != tuple(shape):
            raise ContractViolation(f"mask shape {mask.shape} does not match image {shape}")
        return mask
    lines = serialization.read_mask_lines(path)
    grid = imaging.PatchGrid(height=shape[0], width=shape[1], patch_side=patch_side)
    tiles = grid.tile_origins
    if len(lines) != len(tiles):
        raise ContractViolation(
            f"mask file has {len(lines)} lines for {len(tiles)} sensing tiles"
        )
    mask = np.zeros(shape, dtype=bool)
    p = patch_side
    for (i, j), idx in zip(tiles, lines):
        sub = np.zeros(p * p, dtype=bool)
        sub[idx] = True
        mask[i : i + p, j : j + p] = sub.reshape((p, p), order="F")
    return mask


def cmd_learn(args, out: Path) -> int:
    from .errors import ContractViolation
    from .learner import LearnerConfig, learn
    from .sensing import Measurement, MeasurementSet, make_pixel_mask
    from .serialization import load_checkpoint, load_matrix, read_mask_lines, save_checkpoint

    signals, _ = load_matrix(args.signals)
    n, count = signals.shape
    if args.masks:
        lines = read_mask_lines(args.masks)
        if len(lines) != count:
            raise ContractViolation(f"{len(lines)} mask lines for {count} signals")
    else:
        lines = [list(range(n))] * count
    measurements = []
    for i in range(count):
        sensor = make_pixel_mask(n, lines[i])
        measurements.append(Measurement(y=sensor.apply(signals[:, i]), sensor=sensor))
    mset = MeasurementSet(measurements)
    init = None
    if args.resume:
        init = load_checkpoint(args.resume).dictionary
    config = LearnerConfig(
        k_max=args.k_max,
        r=args.r,
        L_init=args.l_init,
        max_outer_iters=args.iters,
        objective_rel_tol=args.tol,
        sac_threshold=args.sac_threshold,
        sac_every=args.sac_every,
        init=args.init,
        restarts=args.restarts,
        seed=args.seed,
    )
    state = learn(mset, config, init=init)
    save_checkpoint(state, out)
    print(f"objective={state.objective!r} blocks={state.dictionary.num_blocks}")
    return 0


def cmd_synth(args, out: Path) -> int:
    from .block_inference import BlockAssignment
    from .errors import ContractViolation
    from .serialization import (
        save_dictionary,
        save_matrix,
        write_assignment_csv,
        write_codes_csv,
    )
    from .synth import generate_planted

    import numpy as np

    sizes = _int_list(args.block_sizes)
    counts = _int_list(args.counts)
    if len(counts) == 1:
        counts = counts * len(sizes)
    if len(counts) != len(sizes):
        raise ContractViolation("--counts must give one value or one per block")
    model = generate_planted(
        n=args.n, block_sizes=sizes, counts=counts, seed=args.seed,
        coeff_scale=args.coeff_scale,
    )
    save_matrix(model.signal_matrix(), out / "signals.bin")
    save_dictionary(model.dictionary, out / "dictionary.bin")
    write_codes_csv(model.codes, model.dictionary, out / "codes.csv")
    assignment = BlockAssignment(
        blocks=model.labels, residuals=np.zeros(len(model.labels))
    )
    write_assignment_csv(assignment, out / "assignment.csv")
    _write_json(
        {"n": args.n, "block_sizes": sizes, "counts": counts, "seed": args.seed},
        out / "meta.json",
    )
    print(f"wrote {len(model.signals)} signals in {len(sizes)} blocks to {out}")
    return 0


def cmd_phase(args, out: Path) -> int:
    from .learner import LearnerConfig
    from .serialization import write_phase_csv
    from .synth import PhaseConfig, phase_transition

    sizes = tuple(_int_list(args.block_sizes))
    config = PhaseConfig(
        n=args.n,
        block_sizes=sizes,
        count_per_block=args.count_per_block,
        fractions=tuple(_float_list(args.fractions)),
        trials=args.trials,
        threshold_db=args.threshold_db,
        seed=args.seed,
        learner=LearnerConfig(
            k_max=max(sizes),
            r=sum(sizes),
            max_outer_iters=args.iters,
            init=args.init,
            restarts=args.restarts,
            seed=args.seed,
        ),
    )
    result = phase_transition(config)
    write_phase_csv(
        result.trials,
        result.summary,
        out / "phase_trials.csv",
        out / "phase_summary.csv",
        out / "phase_curve.dat",
    )
    for fraction, freq in result.summary:
        print(f"fraction={fraction:.2f} frequency={freq:.2f}")
    return 0


def cmd_check(args, out: Path) -> int:
    from .serialization import load_checkpoint, read_mask_lines
    from .sensing import SensingEnsemble, make_pixel_mask
    from .theory import check_dl_uniqueness, proposition1_check

    state = load_checkpoint(args.checkpoint)
    report = {
        "dl_uniqueness": check_dl_uniqueness(
            state.dictionary, state.codes, max_subset=args.max_subset, seed=args.seed
        ).as_dict()
    }
    if args.masks:
        lines = read_mask_lines(args.masks)
        sensors = [make_pixel_mask(state.dictionary.n, idx) for idx in lines]
        ensemble = SensingEnsemble.from_sensors(sensors)
        report["proposition1"] = proposition1_check(
            ensemble, state.dictionary, state.assignment, beta=args.beta
        ).as_dict()
    report["overall"] = all(section["overall"] for section in report.values())
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_complete(args, out: Path) -> int:
    import numpy as np

    from .completion import SvtConfig, svt_complete
    from .errors import ContractViolation
    from .sensing import ObservationMatrix
    from .serialization import read_coordinate_list, save_matrix

    truth = None
    if args.synthetic:
        rows = args.rows or 60
        cols = args.cols or 200
        rng = np.random.default_rng(args.seed)
        truth = (
            rng.standard_normal((rows, args.rank)) @ rng.standard_normal((args.rank, cols))
        )
        total = rows * cols
        keep = rng.choice(total, size=int(round(args.fraction * total)), replace=False)
        obs = ObservationMatrix(
            shape=(rows, cols),
            row_idx=keep // cols,
            col_idx=keep % cols,
            values=truth.ravel()[keep],
        )
    else:
        if not (args.input and args.rows and args.cols):
            raise ContractViolation("--input with --rows and --cols, or --synthetic")
        obs = read_coordinate_list(args.input, (args.rows, args.cols))
    base = SvtConfig.for_observation(obs, max_iters=args.max_iters, tol=args.tol)
    config = SvtConfig(
        tau=args.tau if args.tau is not None else base.tau,
        delta=args.delta if args.delta is not None else base.delta,
        max_iters=args.max_iters,
        tol=args.tol,
    )
    result = svt_complete(obs, config)
    save_matrix(result.completed, out / "completed.bin")
    metrics = {
        "iterations": result.iterations,
        "residual": result.residual,
        "tau": config.tau,
        "delta": config.delta,
        "observed": obs.num_observed(),
    }
    if truth is not None:
        metrics["relative_error"] = float(
            np.linalg.norm(result.completed - truth) / np.linalg.norm(truth)
        )
    _write_json(metrics, out / "metrics.json")
    print(f"iterations={result.iterations} residual={result.residual:.3e}")
    if "relative_error" in metrics:
        print(f"relative_error={metrics['relative_error']:.3e}")
    return 0


_HANDLERS = {
    "inpaint": cmd_inpaint,
    "learn": cmd_learn,
    "synth": cmd_synth,
    "phase": cmd_phase,
    "check-conditions": cmd_check,
    "complete": cmd_complete,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    config_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
    file_values = {}
    if config_path:
        try:
            file_values = load_config_file(config_path)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        # subparsers parse into a fresh namespace, so defaults must land on
        # each of them, not just the top-level parser
        parser.set_defaults(**file_values)
        for sp in subparsers.values():
            sp.set_defaults(**file_values)
    args = parser.parse_args(argv)
    if file_values:
        known = _known_dests(parser, subparsers[args.command])
        unknown = sorted(set(file_values) - known)
        if unknown:
            print(f"error: unknown config key(s) for {args.command}: {unknown}", file=sys.stderr)
            return 1
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 1
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .errors import BlockCSError, ContractViolation

    try:
        return _HANDLERS[args.command](args, out)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BlockCSError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
