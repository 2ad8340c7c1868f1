"""Blind recovery of one-block-sparse signals from compressive measurements.

Learns a block-structured dictionary jointly with per-signal block-sparse
codes when every signal is seen only through its own sensing matrix, and
ships the surrounding tooling: an image-inpainting front end, a singular
value thresholding completion baseline, recoverability condition checkers,
and synthetic experiment harnesses.

Submodules are imported explicitly (``from blockcs import learner``); this
file stays import-light so the CLI can pin BLAS thread counts before numpy
loads.
"""

__version__ = "0.1.0"
