"""Sweep observation fractions on a planted model and tabulate success rates.

Writes phase_trials.csv, phase_summary.csv and phase_curve.dat to the output
directory and prints the frequency curve. Expect roughly linear runtime in
trials x fractions; the defaults finish in a few minutes.
"""

import argparse
import logging
import time
from pathlib import Path

from blockcs.learner import LearnerConfig
from blockcs.serialization import write_phase_csv
from blockcs.synth import PhaseConfig, phase_transition


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--k", type=int, default=4, help="atoms per planted block")
    ap.add_argument("--blocks", type=int, default=2)
    ap.add_argument("--count", type=int, default=64, help="signals per block")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--restarts", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threshold-db", type=float, default=40.0)
    ap.add_argument("--output-dir", type=Path, default=Path("phase_out"))
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR)

    sizes = (args.k,) * args.blocks
    config = PhaseConfig(
        n=args.n,
        block_sizes=sizes,
        count_per_block=args.count,
        trials=args.trials,
        threshold_db=args.threshold_db,
        seed=args.seed,
        learner=LearnerConfig(
            k_max=args.k,
            r=sum(sizes),
            init="data",
            max_outer_iters=args.iters,
            restarts=args.restarts,
        ),
    )
    t0 = time.time()
    result = phase_transition(config)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    write_phase_csv(
        result.trials,
        result.summary,
        args.output_dir / "phase_trials.csv",
        args.output_dir / "phase_summary.csv",
        args.output_dir / "phase_curve.dat",
    )
    for fraction, freq in result.summary:
        bar = "#" * round(20 * freq)
        print(f"fraction={fraction:.2f} frequency={freq:.2f} {bar}")
    print(f"done in {time.time() - t0:.1f} s -> {args.output_dir}/")


if __name__ == "__main__":
    main()
