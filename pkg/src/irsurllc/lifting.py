"""Rank-one lifting of the joint beamformer / reflection design.

For a single (BS, user, subcarrier) triple the received amplitude is
(h^H Phi F + g^H) w.  Stacking the reflected and direct components into

    R = [ diag(h^H) F ]           (M+1) x N_T
        [     g^H     ]

gives |(h^H Phi F + g^H) w|^2 = Tr(W R^H V R) for the lifted variables
W = w w^H and V = v v^H, where v = [conj(phi); x] carries the conjugated
unit-modulus reflection coefficients plus an auxiliary |x| = 1 entry.
The quadratic form is linear in (W, V) jointly, which is what the conic
subproblems optimize over.
"""

from __future__ import annotations

import numpy as np


class LiftingError(ValueError):
    pass


def stacked_channel(F: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Stack one triple's channels into the (M+1) x N_T matrix R.

    First M rows: diag(h^H) F, i.e. row m is conj(h_m) * F[m, :].
    Last row: g^H.
    """
    F = np.asarray(F, dtype=complex)
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if F.ndim != 2 or h.shape != (F.shape[0],) or g.shape != (F.shape[1],):
        raise LiftingError(
            f"inconsistent shapes F{F.shape}, h{h.shape}, g{g.shape}")
    top = np.conj(h)[:, None] * F
    return np.vstack([top, np.conj(g)[None, :]])


def stack_all(channels) -> np.ndarray:
    """Stacked channels for every (q, k, l), shape (Q, K, L, M+1, N_T)."""
    Q, K = channels.num_bs, channels.num_users
    L, M, NT = channels.num_subcarriers, channels.num_irs_elements, channels.num_antennas
    out = np.empty((Q, K, L, M + 1, NT), dtype=complex)
    for q in range(Q):
        for k in range(K):
            for l in range(L):
                out[q, k, l] = stacked_channel(channels.F[q, l], channels.h[k, l],
                                               channels.g[q, k, l])
    return out


def _check_hermitian(A: np.ndarray, name: str, tol: float = 1e-8) -> None:
    scale = max(np.linalg.norm(A), 1e-300)
    if np.linalg.norm(A - A.conj().T) > tol * scale:
        raise LiftingError(f"{name} is not Hermitian within tolerance")


def lifted_power(W: np.ndarray, R: np.ndarray, V: np.ndarray) -> float:
    """Received power Tr(W R^H V R) of a lifted pair; real nonnegative up to
    Hermitian round-off."""
    W = np.asarray(W, dtype=complex)
    V = np.asarray(V, dtype=complex)
    _check_hermitian(W, "W")
    _check_hermitian(V, "V")
    value = np.trace(W @ R.conj().T @ V @ R)
    return float(value.real)


def phase_lift_vector(phases: np.ndarray, x: complex = 1.0 + 0.0j) -> np.ndarray:
    """v = [conj(phi); x] such that V = v v^H reproduces the physical power."""
    phi = np.asarray(phases, dtype=complex)
    return np.concatenate([np.conj(phi), [complex(x)]])


def extract_rank_one(A: np.ndarray, tol: float = 1e-7) -> tuple[np.ndarray, float]:
    """Principal factor of a Hermitian PSD matrix.

    Returns (sqrt(lambda1) * u1, lambda2 / lambda1); the ratio is 0 for a zero
    matrix. Raises if A is significantly non-Hermitian or indefinite.
    """
    A = np.asarray(A, dtype=complex)
    _check_hermitian(A, "A", tol)
    eigval, eigvec = np.linalg.eigh(0.5 * (A + A.conj().T))
    lam1 = eigval[-1]
    neg_floor = -(tol * max(lam1, 0.0) + 1e-9 * max(float(np.linalg.norm(A)), 1e-6))
    if eigval[0] < neg_floor:
        raise LiftingError("matrix is significantly indefinite")
    if lam1 <= 0:
        return np.zeros(A.shape[0], dtype=complex), 0.0
    lam2 = max(float(eigval[-2]), 0.0) if A.shape[0] > 1 else 0.0
    vec = np.sqrt(lam1) * eigvec[:, -1]
    return vec, lam2 / lam1


def phases_from_v(v: np.ndarray) -> np.ndarray:
    """Unit-modulus reflection vector recovered from a lifted factor.

    The recovery inverts the embedding v = [conj(phi); x]: after rotating the
    global phase so the last entry is real positive, phi_m = conj(v_m)/|v_m|.
    Invariant to the global phase of v.
    """
    v = np.asarray(v, dtype=complex)
    last = v[-1]
    if abs(last) < 1e-12 * max(np.max(np.abs(v)), 1e-300):
        raise LiftingError("degenerate lifted factor: last entry is zero")
    u = v * (np.conj(last) / abs(last))
    phi = np.conj(u[:-1])
    mags = np.abs(phi)
    if np.any(mags < 1e-12):
        raise LiftingError("degenerate lifted factor: zero phase entry")
    return phi / mags
