"""Topology sampling and frequency-domain channel generation.

Links and their models:
  BS -> user   (direct):    Rayleigh fading, path loss h_b (lambda/4pi)^2 d^-kappa.
  BS -> IRS    (reflected): Rician fading, first hop of the double-fading product.
  IRS -> user  (reflected): Rician fading, second hop.

The reflected path loss is h_bar_b (lambda/4pi)^4 d1^-k1 d2^-k2; its square
root is split evenly between the two hops so that zeroing h_bar_b removes
both hop channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import PathLossParams, SystemConfig, Topology


class ChannelModelError(ValueError):
    pass


def direct_path_loss(distance_m: float, params: PathLossParams) -> float:
    """Linear power gain of the BS-user link, h_b (lambda/4pi)^2 d^-kappa."""
    if distance_m <= 0:
        raise ChannelModelError(f"distance must be > 0, got {distance_m}")
    lam = params.wavelength_m
    return params.h_b * (lam / (4.0 * math.pi)) ** 2 * distance_m ** (-params.kappa_bs_user)


def cascaded_path_loss(d1_m: float, d2_m: float, params: PathLossParams) -> float:
    """Linear power gain of the BS-IRS-user product link (double fading),
    h_bar_b (lambda/4pi)^4 d1^-kappa_bs_irs d2^-kappa_irs_user.
    """
    if d1_m <= 0 or d2_m <= 0:
        raise ChannelModelError(f"distances must be > 0, got ({d1_m}, {d2_m})")
    lam = params.wavelength_m
    return (params.h_bar_b * (lam / (4.0 * math.pi)) ** 4
            * d1_m ** (-params.kappa_bs_irs) * d2_m ** (-params.kappa_irs_user))


def sample_small_scale(kind: str, rician_factor: float, rows: int, cols: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Draw one small-scale fading matrix with unit per-entry second moment.

    ``rayleigh``: i.i.d. CN(0, 1).
    ``rician``:   deterministic unit-modulus LOS component weighted
                  sqrt(kappa/(1+kappa)) plus a CN(0,1) scattered component
                  weighted sqrt(1/(1+kappa)).
    """
    if rows < 1 or cols < 1:
        raise ChannelModelError(f"rows/cols must be >= 1, got ({rows}, {cols})")
    if rician_factor < 0:
        raise ChannelModelError("rician_factor must be >= 0")
    scatter = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))
    scatter /= math.sqrt(2.0)
    if kind == "rayleigh":
        return scatter
    if kind == "rician":
        kappa = rician_factor
        if math.isinf(kappa):
            return np.ones((rows, cols), dtype=complex)
        los = np.ones((rows, cols), dtype=complex)  # fixed zero-phase LOS ramp
        return math.sqrt(kappa / (1.0 + kappa)) * los + math.sqrt(1.0 / (1.0 + kappa)) * scatter
    raise ChannelModelError(f"unknown fading kind '{kind}'")


def _per_subcarrier(kind: str, rician_factor: float, rows: int, cols: int,
                    num_subcarriers: int, model: str, num_taps: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Stack of L small-scale draws, shape (L, rows, cols).

    ``iid`` draws independently per subcarrier. ``tapped`` draws ``num_taps``
    time taps (power-normalized) and maps them to subcarriers by DFT, giving
    frequency-correlated fading with unchanged per-entry power.
    """
    if model == "iid":
        return np.stack([sample_small_scale(kind, rician_factor, rows, cols, rng)
                         for _ in range(num_subcarriers)])
    taps = np.stack([sample_small_scale(kind, rician_factor, rows, cols, rng)
                     for _ in range(num_taps)]) / math.sqrt(num_taps)
    phases = np.exp(-2j * math.pi * np.outer(np.arange(num_subcarriers), np.arange(num_taps))
                    / num_subcarriers)
    return np.tensordot(phases, taps, axes=(1, 0))


@dataclass
class ChannelRealization:
    """One coherence frame of frequency-domain channels.

    h: (K, L, M)        IRS -> user vectors
    F: (Q, L, M, N_T)   BS -> IRS matrices
    g: (Q, K, L, N_T)   BS -> user vectors
    sigma2: noise power per subcarrier, Watts
    """

    h: np.ndarray
    F: np.ndarray
    g: np.ndarray
    sigma2: float

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.h.shape[1]

    @property
    def num_irs_elements(self) -> int:
        return self.h.shape[2]

    @property
    def num_bs(self) -> int:
        return self.F.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.F.shape[3]

    def validate(self) -> None:
        if self.sigma2 <= 0:
            raise ChannelModelError("sigma2 must be > 0")
        for name, arr in (("h", self.h), ("F", self.F), ("g", self.g)):
            if not np.all(np.isfinite(arr)):
                raise ChannelModelError(f"non-finite entries in {name}")
        if self.g.shape != (self.num_bs, self.num_users, self.num_subcarriers,
                            self.num_antennas):
            raise ChannelModelError("inconsistent g dimensions")

    def without_irs(self) -> "ChannelRealization":
        """Copy with the cascaded link removed (h and F zeroed)."""
        return replace(self, h=np.zeros_like(self.h), F=np.zeros_like(self.F))


def sample_topology(config: SystemConfig, rng: np.random.Generator) -> Topology:
    """Concrete topology; users drawn uniformly in the drop disk unless the
    config pins explicit positions."""
    topo = config.topology
    if topo.user_positions:
        return topo
    radius = topo.user_drop_radius * np.sqrt(rng.uniform(size=config.num_users))
    angle = rng.uniform(0.0, 2.0 * math.pi, size=config.num_users)
    cx, cy = topo.user_drop_center
    users = [(cx + r * math.cos(a), cy + r * math.sin(a))
             for r, a in zip(radius, angle)]
    return replace(topo, user_positions=users)


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def generate_realization(config: SystemConfig, topology: Topology,
                         rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization: sqrt(path loss) times small-scale fading,
    constant over the N_p symbols of the frame."""
    topology.validate(config.num_bs, config.num_users)
    if not topology.user_positions:
        raise ChannelModelError("topology has no user positions; call sample_topology first")
    Q, K = config.num_bs, config.num_users
    M, NT, L = config.num_irs_elements, config.num_antennas, config.num_subcarriers
    params = config.pathloss
    kappa = params.rician_factor
    model, taps = config.frequency_model, config.num_taps

    # Split the cascaded gain evenly between the two hops.
    lam_factor = (params.wavelength_m / (4.0 * math.pi)) ** 2
    sqrt_hbar = math.sqrt(params.h_bar_b)

    h = np.zeros((K, L, M), dtype=complex)
    F = np.zeros((Q, L, M, NT), dtype=complex)
    g = np.zeros((Q, K, L, NT), dtype=complex)

    for k, user in enumerate(topology.user_positions):
        if M > 0:
            d_iu = _dist(topology.irs_position, user)
            gain = sqrt_hbar * lam_factor * d_iu ** (-params.kappa_irs_user)
            ss = _per_subcarrier("rician", kappa, M, 1, L, model, taps, rng)
            h[k] = math.sqrt(gain) * ss[:, :, 0]
    for q, bs in enumerate(topology.bs_positions):
        if M > 0:
            d_bi = _dist(bs, topology.irs_position)
            gain = sqrt_hbar * lam_factor * d_bi ** (-params.kappa_bs_irs)
            F[q] = math.sqrt(gain) * _per_subcarrier("rician", kappa, M, NT, L, model, taps, rng)
        for k, user in enumerate(topology.user_positions):
            gain = direct_path_loss(_dist(bs, user), params)
            ss = _per_subcarrier("rayleigh", 0.0, NT, 1, L, model, taps, rng)
            g[q, k] = math.sqrt(gain) * ss[:, :, 0]

    out = ChannelRealization(h=h, F=F, g=g, sigma2=config.sigma2_w)
    out.validate()
    return out
