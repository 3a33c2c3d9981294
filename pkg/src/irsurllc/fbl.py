"""Finite-blocklength rate mathematics.

The number of bits deliverable to a user over one frame of N_p OFDM symbols
on L subcarriers is approximated by the normal approximation

    bits = N_p sum_l log2(1 + gamma[l])
           - Qinv(eps) * sqrt(N_p sum_l nu(gamma[l])),

with channel dispersion nu(gamma) = a^2 (1 - (1+gamma)^-2), a = log2(e).
The backoff term saturates at a * Qinv(eps) * sqrt(L N_p) for large SINR;
that constant bounds the dispersion budget of the allocation problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

LOG2_E = math.log2(math.e)


class DomainError(ValueError):
    pass


@dataclass
class QosTarget:
    """Per-user QoS: minimum bits per frame, error probability, weight."""

    bits_min: float
    error_prob: float
    weight: float = 1.0
    symbols_per_frame: int = 100

    def validate(self) -> None:
        if not (0.0 < self.error_prob < 1.0):
            raise DomainError(f"error_prob must be in (0,1), got {self.error_prob}")
        if self.bits_min < 0:
            raise DomainError("bits_min must be >= 0")
        if self.weight <= 0:
            raise DomainError("weight must be > 0")
        if self.symbols_per_frame < 1:
            raise DomainError("symbols_per_frame must be >= 1")


def q_function(x) -> np.ndarray | float:
    """Gaussian tail probability Q(x) = 0.5 erfc(x / sqrt(2))."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(epsilon: float) -> float:
    """Inverse of the Gaussian Q-function on (0, 1).

    Uses the complementary error function inverse; falls back to bisection on
    Q(x) - epsilon if that evaluation is not finite.
    """
    if not (0.0 < epsilon < 1.0):
        raise DomainError(f"epsilon must be in (0,1), got {epsilon}")
    x = math.sqrt(2.0) * float(erfcinv(2.0 * epsilon))
    if math.isfinite(x):
        return x
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dispersion(gamma) -> np.ndarray | float:
    """Channel dispersion nu(gamma) = a^2 (1 - (1+gamma)^-2), in [0, a^2)."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise DomainError("SINR must be >= 0")
    out = LOG2_E ** 2 * (1.0 - (1.0 + g) ** -2)
    return float(out) if np.isscalar(gamma) else out


def packet_bits(sinrs, qos: QosTarget) -> float:
    """Bits per frame under the normal approximation, C_k - V_k.

    May be negative at tiny SINRs; callers treat a negative value as
    QoS-infeasible rather than clamping.
    """
    qos.validate()
    g = np.asarray(sinrs, dtype=float)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise DomainError("SINR vector must be finite and >= 0")
    n_p = qos.symbols_per_frame
    shannon = n_p * float(np.sum(np.log2(1.0 + g)))
    qinv = q_inverse(qos.error_prob)
    backoff = qinv * math.sqrt(n_p * float(np.sum(dispersion(g))))
    return shannon - backoff


def v_max_user(qos: QosTarget, num_subcarriers: int) -> float:
    """High-SINR limit of the per-user dispersion backoff,
    a * Qinv(eps) * sqrt(L * N_p)."""
    return LOG2_E * q_inverse(qos.error_prob) * math.sqrt(
        num_subcarriers * qos.symbols_per_frame)


def v_max_total(qos_list: list[QosTarget], num_subcarriers: int) -> float:
    """Weighted sum of the per-user dispersion limits."""
    return sum(q.weight * v_max_user(q, num_subcarriers) for q in qos_list)


def dispersion_backoff(sinrs, qos: QosTarget) -> float:
    """The V_k term alone: Qinv(eps) * sqrt(N_p sum_l nu(gamma[l]))."""
    g = np.asarray(sinrs, dtype=float)
    return q_inverse(qos.error_prob) * math.sqrt(
        qos.symbols_per_frame * float(np.sum(dispersion(g))))


def effective_rows(channels, phases: np.ndarray | None) -> np.ndarray:
    """Composite downlink row channels c[q,k,l] = h^H Phi F + g^H, (Q,K,L,N_T).

    ``phases`` is the unit-modulus reflection vector (length M); None means
    no reflected path (direct channels only).
    """
    c = np.conj(channels.g)
    if phases is not None and channels.num_irs_elements > 0:
        phi = np.asarray(phases, dtype=complex)
        if phi.shape != (channels.num_irs_elements,):
            raise DomainError("phase vector length must equal the element count")
        if np.max(np.abs(np.abs(phi) - 1.0)) > 1e-9:
            raise DomainError("phase vector entries must be unit modulus")
        # h^H Phi F: weight rows of F by conj(h)*phi, sum over elements.
        weights = np.conj(channels.h) * phi[None, None, :]          # (K,L,M)
        c = c + np.einsum("klm,qlmn->qkln", weights, channels.F)
    return c


def all_sinrs(channels, phases: np.ndarray | None, beams: np.ndarray) -> np.ndarray:
    """SINR matrix gamma[k,l] for a beam set w[q,k,l] (Q,K,L,N_T).

    Desired and interfering powers add per base station:
    gamma = sum_q |c w_qk|^2 / (sum_q sum_{j!=k} |c w_qj|^2 + sigma2).
    """
    if channels.sigma2 <= 0:
        raise DomainError("sigma2 must be > 0")
    c = effective_rows(channels, phases)
    amp = np.einsum("qkln,qjln->qkjl", c, beams)       # per-BS amplitudes
    power = np.abs(amp) ** 2
    signal = np.einsum("qkkl->kl", power)
    total = power.sum(axis=(0, 2))                     # sum over q and j
    interference = total - signal
    return signal / (interference + channels.sigma2)


def sinr(channels, phases: np.ndarray | None, beams: np.ndarray, k: int, l: int) -> float:
    """SINR of user k on subcarrier l."""
    return float(all_sinrs(channels, phases, beams)[k, l])
