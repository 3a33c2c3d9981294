"""Difference-of-convex decompositions and their tangent approximations.

Two bilinear couplings are split into convex differences:

  chi * I            = f1 - f2,  f1 = 0.5 (chi+I)^2, f2 = 0.5 chi^2 + 0.5 I^2
  2 Tr(W R^H V R)    = f3 - f4,  via the Frobenius identity
                       Tr(AB) = 0.5||A+B||_F^2 - 0.5||A||_F^2 - 0.5||B||_F^2

with f3 = ||W + R^H V R||_F^2 and f4 = ||W||_F^2 + ||R^H V R||_F^2 (f5, f6
are the same pair evaluated on an interferer's beam matrix).  The successive
approximation replaces f2, f3, f6 and the concave dispersion backoff V_k by
first-order tangents at the previous iterate; convexity/concavity makes every
tangent a global minorant/majorant, so each approximation is conservative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbl import LOG2_E, QosTarget, q_inverse


class DegenerateExpansionError(ValueError):
    pass


class DcError(ValueError):
    pass


@dataclass
class ExpansionPoint:
    """Previous iterate around which the subproblem is linearized.

    chi, z: (K, L) nonnegative; z is the interference-plus-noise iterate.
    W: (Q, K, L, N_T, N_T) Hermitian blocks. V: (M+1, M+1) Hermitian or None
    when the reflection matrix is not optimized.
    """

    chi: np.ndarray
    z: np.ndarray
    W: np.ndarray
    V: np.ndarray | None = None


# ----------------------------------------------------------------- scalar split
def f1(chi, interference):
    """Convex part 0.5 (chi + I)^2 of the product split."""
    return 0.5 * (np.asarray(chi, dtype=float) + np.asarray(interference, dtype=float)) ** 2


def f2(chi, interference):
    """Convex part 0.5 chi^2 + 0.5 I^2; f1 - f2 = chi * I exactly."""
    return 0.5 * np.asarray(chi, dtype=float) ** 2 + 0.5 * np.asarray(interference, dtype=float) ** 2


def taylor_f2(chi, z, chi_point, z_point):
    """Tangent of f2 at (chi_point, z_point); a global lower bound on f2.

    Affine in (chi, z), so numeric arrays and modeling-layer expressions are
    both accepted.
    """
    chi_point = np.asarray(chi_point, dtype=float)
    z_point = np.asarray(z_point, dtype=float)
    return (chi_point * chi + z_point * z
            - 0.5 * chi_point ** 2 - 0.5 * z_point ** 2)


# ------------------------------------------------------------- Frobenius split
def frobenius_split(A: np.ndarray, B: np.ndarray) -> tuple[float, float, float]:
    """Convex pieces (0.5||A+B||_F^2, 0.5||A||_F^2, 0.5||B||_F^2) whose
    difference reconstructs Tr(AB) for Hermitian A, B."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape != B.shape:
        raise DcError(f"shape mismatch {A.shape} vs {B.shape}")
    f_plus = 0.5 * float(np.linalg.norm(A + B) ** 2)
    f_a = 0.5 * float(np.linalg.norm(A) ** 2)
    f_b = 0.5 * float(np.linalg.norm(B) ** 2)
    return f_plus, f_a, f_b


def compressed_phase_matrix(V: np.ndarray, R: np.ndarray) -> np.ndarray:
    """S = R^H V R, the reflection matrix seen through one stacked channel."""
    return R.conj().T @ np.asarray(V, dtype=complex) @ R


def f3(W: np.ndarray, V: np.ndarray, R: np.ndarray, scale: float = 1.0) -> float:
    """||c W + (R^H V R)/c||_F^2 (desired-signal index).

    The split identity 0.5 (f3 - f4) = Tr(W R^H V R) holds for every balance
    factor c > 0; c rebalances the two addends when their norms differ by
    orders of magnitude.  The canonical decomposition is c = 1.
    """
    return float(np.linalg.norm(scale * np.asarray(W, dtype=complex)
                                + compressed_phase_matrix(V, R) / scale) ** 2)


def f4(W: np.ndarray, V: np.ndarray, R: np.ndarray, scale: float = 1.0) -> float:
    """c^2 ||W||_F^2 + ||R^H V R||_F^2 / c^2, the second convex piece."""
    return (scale ** 2 * float(np.linalg.norm(W) ** 2)
            + float(np.linalg.norm(compressed_phase_matrix(V, R)) ** 2) / scale ** 2)


# f5/f6 are f3/f4 evaluated on an interfering beam's matrix against the
# observing user's stacked channel.
f5 = f3
f6 = f4


def taylor_f_coeffs(W_point: np.ndarray, V_point: np.ndarray, R: np.ndarray,
                    which: int, scale: float = 1.0
                    ) -> tuple[float, np.ndarray, np.ndarray]:
    """Tangent coefficients of f3 or f6 at (W_point, V_point).

    Returns (const, G_W, G_V) such that the tangent value is
        const + Re Tr(G_W W) + Re Tr(G_V V),
    with Hermitian gradients (S = R^H V R, c the balance factor)
        which=3: G_W = 2 (c^2 W + S),  G_V = 2 R (W + S/c^2) R^H
        which=6: G_W = 2 c^2 W,        G_V = (2/c^2) R S R^H.
    """
    W_point = np.asarray(W_point, dtype=complex)
    V_point = np.asarray(V_point, dtype=complex)
    c2 = scale ** 2
    S = compressed_phase_matrix(V_point, R)
    if which == 3:
        base = float(np.linalg.norm(scale * W_point + S / scale) ** 2)
        g_w = 2.0 * (c2 * W_point + S)
        g_v = 2.0 * R @ (W_point + S / c2) @ R.conj().T
    elif which == 6:
        base = (c2 * float(np.linalg.norm(W_point) ** 2)
                + float(np.linalg.norm(S) ** 2) / c2)
        g_w = 2.0 * c2 * W_point
        g_v = (2.0 / c2) * R @ S @ R.conj().T
    else:
        raise DcError(f"which must be 3 or 6, got {which}")
    const = (base - float(np.trace(g_w @ W_point).real)
             - float(np.trace(g_v @ V_point).real))
    return const, g_w, g_v


def taylor_f3_f6(W: np.ndarray, V: np.ndarray, W_point: np.ndarray,
                 V_point: np.ndarray, R: np.ndarray, which: int,
                 scale: float = 1.0) -> float:
    """Tangent value of f3/f6 at (W_point, V_point), evaluated at (W, V)."""
    const, g_w, g_v = taylor_f_coeffs(W_point, V_point, R, which, scale)
    return (const + float(np.trace(g_w @ np.asarray(W, dtype=complex)).real)
            + float(np.trace(g_v @ np.asarray(V, dtype=complex)).real))


def balance_factor(W_point: np.ndarray, V_point: np.ndarray, R: np.ndarray,
                   floor: float = 1e-6, cap: float = 1e4) -> float:
    """Balance c = sqrt(||S||_F / ||W||_F) clipped to [1/cap, cap].

    Equalizes the norms of the two Frobenius-split addends at the expansion
    point; an unbalanced split turns the tangent gap into a huge proximal
    brake on the better-scaled block and stalls the outer iteration.
    """
    w_norm = max(float(np.linalg.norm(W_point)), floor)
    s_norm = max(float(np.linalg.norm(compressed_phase_matrix(V_point, R))), floor)
    return float(np.clip(np.sqrt(s_norm / w_norm), 1.0 / cap, cap))


# ------------------------------------------------------- dispersion linearization
def dispersion_sum(chi: np.ndarray) -> float:
    """sum_l (1 - (1 + chi_l)^-2), the dispersion accumulator."""
    c = np.asarray(chi, dtype=float)
    return float(np.sum(1.0 - (1.0 + c) ** -2))


def v_k_value(chi: np.ndarray, qos: QosTarget) -> float:
    """Dispersion backoff a Qinv(eps) sqrt(N_p sum_l (1-(1+chi_l)^-2))."""
    qinv = q_inverse(qos.error_prob)
    return LOG2_E * qinv * np.sqrt(qos.symbols_per_frame * dispersion_sum(chi))


def v_k_gradient(chi_point: np.ndarray, qos: QosTarget) -> np.ndarray:
    """Gradient of the backoff: a Qinv(eps) N_p (1+chi_l)^-3 /
    sqrt(N_p sum(1-(1+chi)^-2)). Requires a not-all-zero expansion point."""
    chi_point = np.asarray(chi_point, dtype=float)
    qinv = q_inverse(qos.error_prob)
    if qinv == 0.0:
        return np.zeros_like(chi_point)
    denom_sq = qos.symbols_per_frame * dispersion_sum(chi_point)
    if denom_sq <= 0.0:
        raise DegenerateExpansionError(
            "dispersion tangent undefined at an all-zero expansion point")
    return (LOG2_E * qinv * qos.symbols_per_frame
            * (1.0 + chi_point) ** -3 / np.sqrt(denom_sq))


def taylor_vk_coeffs(chi_point: np.ndarray, qos: QosTarget) -> tuple[float, np.ndarray]:
    """(const, grad) of the tangent plane of the concave backoff; the plane
    upper-bounds the backoff for all chi >= 0."""
    chi_point = np.asarray(chi_point, dtype=float)
    qinv = q_inverse(qos.error_prob)
    if qinv == 0.0:
        return 0.0, np.zeros_like(chi_point)
    grad = v_k_gradient(chi_point, qos)
    const = v_k_value(chi_point, qos) - float(grad @ chi_point)
    return const, grad


def taylor_vk(chi: np.ndarray, chi_point: np.ndarray, qos: QosTarget) -> float:
    """Tangent-plane value of the dispersion backoff at ``chi``."""
    const, grad = taylor_vk_coeffs(chi_point, qos)
    return const + float(grad @ np.asarray(chi, dtype=float))
