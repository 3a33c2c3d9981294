"""Comparison schemes sharing the allocation pipeline.

All schemes run the same iterative solver with variable blocks removed:

  proposed       joint beams + reflection phases, finite-blocklength rate
  shannon_bound  dispersion backoff removed (capacity objective); an upper
                 bound on what any finite-blocklength design can deliver
  random_phase   reflection phases drawn uniformly and frozen; beams optimized
  no_irs         reflected link removed entirely; beams optimized
"""

from __future__ import annotations

import math

import numpy as np

from .channel import ChannelRealization
from .config import SystemConfig
from .solver import SolveResult, run_algorithm1

SCHEMES = ("proposed", "shannon_bound", "random_phase", "no_irs")


def proposed(config: SystemConfig, channels: ChannelRealization,
             rng: np.random.Generator | None = None) -> SolveResult:
    return run_algorithm1(config, channels, rng=rng)


def shannon_bound(config: SystemConfig, channels: ChannelRealization,
                  rng: np.random.Generator | None = None) -> SolveResult:
    """Same pipeline with every dispersion term removed from objective and
    constraints; the rate model collapses to the capacity expression."""
    return run_algorithm1(config, channels, use_dispersion=False, rng=rng)


def random_phase(config: SystemConfig, channels: ChannelRealization,
                 rng: np.random.Generator) -> SolveResult:
    """Uniform i.i.d. reflection phases, frozen; only the beams are optimized.
    The reflection contribution folds into the effective direct channels."""
    M = config.num_irs_elements
    phases = np.exp(2j * math.pi * rng.uniform(size=M)) if M > 0 else None
    return run_algorithm1(config, channels, optimize_irs=False,
                          fixed_phases=phases, rng=rng)


def no_irs(config: SystemConfig, channels: ChannelRealization,
           rng: np.random.Generator | None = None) -> SolveResult:
    """Reflected link zeroed; equivalent to a blocked cascade (h_bar_b = 0)."""
    return run_algorithm1(config, channels.without_irs(), optimize_irs=False,
                          fixed_phases=None, rng=rng)


def run_scheme(tag: str, config: SystemConfig, channels: ChannelRealization,
               rng: np.random.Generator) -> SolveResult:
    if tag == "proposed":
        return proposed(config, channels, rng)
    if tag == "shannon_bound":
        return shannon_bound(config, channels, rng)
    if tag == "random_phase":
        return random_phase(config, channels, rng)
    if tag == "no_irs":
        return no_irs(config, channels, rng)
    raise ValueError(f"unknown scheme '{tag}'")
