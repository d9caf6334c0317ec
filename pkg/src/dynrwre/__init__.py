"""Reproducible Monte Carlo lab for a nearest-neighbour walker on dynamic
conservative particle systems (exclusion dynamics or a cloud of independent
lazy walkers), with exact couplings, renormalization-geometry checkers and a
deterministic experiment runner."""

__version__ = "0.1.0"
