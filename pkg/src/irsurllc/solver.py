"""Successive convex approximation with iterative rank minimization.

Each iteration assembles one convex conic subproblem in the lifted variables
(W blocks, reflection matrix V, SINR bounds chi, interference bounds I, the
dispersion-budget variables t and zeta, the rank slack r and the feasibility
slack beta), solves it, re-expands around the solution, recomputes the minor
eigenvector block of V and grows the penalty weights until both slacks are
below tolerance and the objective stalls.

The subproblem is solved in noise-normalized units: all channels are divided
by the noise standard deviation so the per-subcarrier noise power is 1.  This
keeps the Frobenius-split quadratics (which mix beam powers and received
powers) well scaled for interior-point solvers.  Beam variables stay in
physical Watts throughout.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import dc, fbl, lifting
from .channel import ChannelRealization
from .config import SystemConfig

LN2 = math.log(2.0)

RANK_RATIO_TOL = 1e-4
QOS_BITS_TOL = 1e-3
POWER_REL_TOL = 1e-6

# Defaults per backend.  CLARABEL: chordal decomposition off (small dense
# cones; its clique merging is a failure source near rank-one degeneracy) and
# 1e-6 tolerances (the last interior-point digits are unreachable once V is
# nearly singular, and nothing downstream needs them).
_SOLVER_OPTS = {
    "CLARABEL": {
        "chordal_decomposition_enable": False,
        "tol_gap_abs": 1e-6, "tol_gap_rel": 1e-6, "tol_feas": 1e-6,
        "reduced_tol_gap_abs": 1e-5, "reduced_tol_gap_rel": 1e-5,
        "reduced_tol_feas": 1e-6,
    },
    "SCS": {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 200_000},
}


class SolverError(RuntimeError):
    pass


class SubproblemError(SolverError):
    """Structured subproblem failure, carrying the solver status."""

    def __init__(self, message: str, status: str | None = None):
        super().__init__(message)
        self.status = status


# --------------------------------------------------------------------- channels
@dataclass
class SolverChannels:
    """Channel data preprocessed for the conic subproblems.

    Internal units: noise power 1 (channels divided by the noise standard
    deviation) and beam matrices in fractions of the per-BS budget (channels
    additionally multiplied by sqrt(p_max)).  Both rescalings keep every conic
    block O(1) without changing the SINRs the subproblem reasons about.
    """

    realization: ChannelRealization
    optimize_irs: bool
    phases: np.ndarray | None            # fixed reflection vector, or None
    stacked: np.ndarray | None           # (Q,K,L,M+1,N_T), joint mode
    eff_outer: np.ndarray | None         # (Q,K,L,N_T,N_T), fixed-phase mode
    p_scale: float = 1.0                 # Watts represented by unit trace

    @classmethod
    def build(cls, channels: ChannelRealization, optimize_irs: bool,
              phases: np.ndarray | None = None,
              p_scale: float = 1.0) -> "SolverChannels":
        gain = math.sqrt(p_scale) / math.sqrt(channels.sigma2)
        if optimize_irs and channels.num_irs_elements > 0:
            stacked = lifting.stack_all(channels) * gain
            return cls(channels, True, None, stacked, None, p_scale)
        rows = fbl.effective_rows(channels, phases) * gain
        outer = np.einsum("qkln,qklm->qklnm", rows.conj(), rows)
        return cls(channels, False, phases, None, outer, p_scale)


def _qos_targets(config: SystemConfig) -> list[fbl.QosTarget]:
    return [fbl.QosTarget(bits_min=b, error_prob=e, weight=m,
                          symbols_per_frame=config.n_p)
            for b, e, m in zip(config.bits_min_list, config.error_prob_list,
                               config.weights_list)]


# ------------------------------------------------------------------- subproblem
@dataclass
class TaggedConstraint:
    name: str          # constraint tag of the formulation
    cone: str          # nonnegative | second-order | PSD | exponential | equality
    constraint: object


@dataclass
class ConicSubproblem:
    """One convex conic subproblem.

    The expansion-point data enters through modeling-layer parameters, so a
    subproblem built once per run is canonicalized once and re-stuffed with
    fresh coefficients each iteration (``fill_subproblem``).
    """

    objective: object                     # cvxpy expression, maximized
    constraints: list[TaggedConstraint]
    variables: dict
    parameters: dict
    meta: dict
    _problem: object = None

    def problem(self):
        if self._problem is None:
            self._problem = cp.Problem(cp.Maximize(self.objective),
                                       [tc.constraint for tc in self.constraints])
        return self._problem

    def tally(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for tc in self.constraints:
            out[tc.name] = out.get(tc.name, 0) + 1
        return out


@dataclass
class SubproblemSolution:
    status: str
    objective: float
    chi: np.ndarray
    interference: np.ndarray
    W: np.ndarray
    V: np.ndarray | None
    t: float
    zeta: np.ndarray
    r: float
    beta: float
    solve_time: float


def _hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2).conj())


def smallest_eigvecs(V: np.ndarray, count: int) -> np.ndarray:
    """Orthonormal eigenvectors of the ``count`` smallest eigenvalues.

    Deterministic tie-breaking: eigenvalues ascending, each column rotated so
    its largest-magnitude entry is real positive.
    """
    V = _hermitize(np.asarray(V, dtype=complex))
    _, vecs = np.linalg.eigh(V)
    Y = vecs[:, :count].copy()
    for j in range(Y.shape[1]):
        col = Y[:, j]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if abs(pivot) > 0:
            Y[:, j] = col * (pivot.conj() / abs(pivot))
    return Y


def build_subproblem_graph(channels: SolverChannels, config: SystemConfig, *,
                           use_dispersion: bool = True,
                           relax: bool = True) -> ConicSubproblem:
    """Parametrized subproblem skeleton; expansion-point data left unset."""
    Q, K = config.num_bs, config.num_users
    L, NT, M = config.num_subcarriers, config.num_antennas, config.num_irs_elements
    n = M + 1
    n_p = config.n_p
    qos = _qos_targets(config)
    mu = np.asarray(config.weights_list)
    joint = channels.optimize_irs and M > 0

    W = [[[cp.Variable((NT, NT), hermitian=True, name=f"W_{q}_{k}_{l}")
           for l in range(L)] for k in range(K)] for q in range(Q)]
    chi = cp.Variable((K, L), name="chi")
    interf = cp.Variable((K, L), name="I")
    beta = cp.Variable(name="beta") if relax else None
    slack = beta if relax else 0.0
    V = cp.Variable((n, n), hermitian=True, name="V") if joint else None
    r = cp.Variable(name="r") if joint else None
    t = cp.Variable(name="t") if use_dispersion else None
    zeta = cp.Variable(K, name="zeta") if use_dispersion else None

    par: dict = {
        "eta1": cp.Parameter(nonneg=True), "eta2": cp.Parameter(nonneg=True),
        "chi_i": cp.Parameter((K, L)), "z_i": cp.Parameter((K, L)),
        "f2c": cp.Parameter((K, L)),
    }

    rates = [(n_p / LN2) * cp.sum(cp.log1p(chi[k, :])) for k in range(K)]
    cons: list[TaggedConstraint] = []

    # QoS rows and the dispersion budget.
    if use_dispersion:
        par["vk_const"] = cp.Parameter(K)
        par["vk_grad"] = cp.Parameter((K, L))
        vmax_users = [fbl.v_max_user(qos[k], L) for k in range(K)]
        vmax_total = fbl.v_max_total(qos, L)
        vbars = [par["vk_const"][k] + par["vk_grad"][k, :] @ chi[k, :]
                 for k in range(K)]
        for k in range(K):
            cons.append(TaggedConstraint(
                "C1a~", "exponential",
                vmax_users[k] + qos[k].bits_min - rates[k] - zeta[k] <= slack))
            cons.append(TaggedConstraint(
                "C1b-", "nonnegative", vbars[k] + zeta[k] - vmax_users[k] <= slack))
        cons.append(TaggedConstraint(
            "C6~", "nonnegative",
            sum(mu[k] * vbars[k] for k in range(K)) + t - vmax_total <= slack))
        cons.append(TaggedConstraint("C7", "nonnegative", t >= 0))
        cons.append(TaggedConstraint("slack:zeta>=0", "nonnegative", zeta >= 0))
    else:
        for k in range(K):
            cons.append(TaggedConstraint(
                "C1a~", "exponential", qos[k].bits_min - rates[k] <= slack))

    # Per-BS power budgets; beams live in budget fractions, so the bound is 1.
    p_budget = config.p_max_w / channels.p_scale
    for q in range(Q):
        total = sum(cp.real(cp.trace(W[q][k][l])) for k in range(K) for l in range(L))
        cons.append(TaggedConstraint("C2-", "nonnegative", total - p_budget <= slack))

    # SINR coupling rows (noise-normalized: unit noise power).
    if joint:
        R = channels.stacked
        S = [[[R[q, k, l].conj().T @ V @ R[q, k, l] for l in range(L)]
              for k in range(K)] for q in range(Q)]
        par.update({
            "c3": cp.Parameter((Q, K, L), nonneg=True),
            "c3i": cp.Parameter((Q, K, L), nonneg=True),
            "l3c": cp.Parameter((K, L)),
            "c6": cp.Parameter((Q, K, K, L), nonneg=True),
            "c6i": cp.Parameter((Q, K, K, L), nonneg=True),
            "l6c": cp.Parameter((K, L)),
            "Y": cp.Parameter((n, M), complex=True),
            "YH": cp.Parameter((M, n), complex=True),
        })
        par["gw3"] = {(q, k, l): cp.Parameter((NT, NT), complex=True)
                      for q in range(Q) for k in range(K) for l in range(L)}
        par["gv3"] = {(k, l): cp.Parameter((n, n), complex=True)
                      for k in range(K) for l in range(L)}
        par["gw6"] = {(q, k, j, l): cp.Parameter((NT, NT), complex=True)
                      for q in range(Q) for k in range(K) for j in range(K)
                      if j != k for l in range(L)}
        par["gv6"] = {(k, l): cp.Parameter((n, n), complex=True)
                      for k in range(K) for l in range(L)}
    for k in range(K):
        for l in range(L):
            f2bar = (par["chi_i"][k, l] * chi[k, l]
                     + par["z_i"][k, l] * interf[k, l] + par["f2c"][k, l])
            f1 = 0.5 * cp.square(chi[k, l] + interf[k, l])
            if joint:
                # Balance factors c rescale each Frobenius split at the
                # expansion point; no factor changes the encoded product,
                # only the tangent gap's proximal weight.
                quad, lin3 = 0.0, par["l3c"][k, l]
                for q in range(Q):
                    quad = quad \
                        + cp.sum_squares(par["c3"][q, k, l] * W[q][k][l]) \
                        + cp.sum_squares(par["c3i"][q, k, l] * S[q][k][l])
                    lin3 = lin3 + cp.real(cp.trace(par["gw3"][q, k, l] @ W[q][k][l]))
                lin3 = lin3 + cp.real(cp.trace(par["gv3"][k, l] @ V))
                cons.append(TaggedConstraint(
                    "C4a=", "second-order",
                    f1 - f2bar + 0.5 * quad - 0.5 * lin3 <= slack))
                quad5, lin6 = 0.0, par["l6c"][k, l]
                for q in range(Q):
                    for j in range(K):
                        if j == k:
                            continue
                        quad5 = quad5 + cp.sum_squares(
                            par["c6"][q, k, j, l] * W[q][j][l]
                            + par["c6i"][q, k, j, l] * S[q][k][l])
                        lin6 = lin6 + cp.real(
                            cp.trace(par["gw6"][q, k, j, l] @ W[q][j][l]))
                if K > 1:
                    lin6 = lin6 + cp.real(cp.trace(par["gv6"][k, l] @ V))
                cons.append(TaggedConstraint(
                    "C4b=", "second-order",
                    0.5 * quad5 - 0.5 * lin6 + 1.0 - interf[k, l] <= slack))
            else:
                C = channels.eff_outer
                sig = sum(cp.real(cp.trace(C[q, k, l] @ W[q][k][l])) for q in range(Q))
                cons.append(TaggedConstraint(
                    "C4a=", "second-order", f1 - f2bar - sig <= slack))
                mui = sum(cp.real(cp.trace(C[q, k, l] @ W[q][j][l]))
                          for q in range(Q) for j in range(K) if j != k)
                cons.append(TaggedConstraint(
                    "C4b=", "nonnegative", mui + 1.0 - interf[k, l] <= slack))

    cons.append(TaggedConstraint("C5", "nonnegative", chi >= 0))
    cons.append(TaggedConstraint("slack:I>=sigma2", "nonnegative", interf >= 1.0))

    if joint:
        # The LMI is parametrized in Y through the auxiliary block U = V Y so
        # the graph stays re-stuffable when Y changes between iterations.
        U = cp.Variable((n, M), complex=True, name="U")
        cons.append(TaggedConstraint("C8-", "equality", U == V @ par["Y"]))
        lmi = r * np.eye(M) - par["YH"] @ U
        cons.append(TaggedConstraint("C8-", "PSD",
                                     0.5 * (lmi + lmi.conj().T) >> 0))
        cons.append(TaggedConstraint("C9", "PSD", V >> 0))
        cons.append(TaggedConstraint("C10", "equality",
                                     cp.diag(V) == np.ones(n)))
        cons.append(TaggedConstraint("slack:r>=0", "nonnegative", r >= 0))
    for q in range(Q):
        for k in range(K):
            for l in range(L):
                cons.append(TaggedConstraint("C12", "PSD", W[q][k][l] >> 0))
    if relax:
        cons.append(TaggedConstraint("slack:beta>=0", "nonnegative", beta >= 0))

    objective = sum(mu[k] * rates[k] for k in range(K))
    if use_dispersion:
        objective = objective + t
    if joint:
        objective = objective - par["eta1"] * r
    if relax:
        objective = objective - par["eta2"] * beta

    variables = {"W": W, "V": V, "chi": chi, "I": interf, "t": t, "zeta": zeta,
                 "r": r, "beta": beta}
    meta = {"dims": (Q, K, L, NT, M), "use_dispersion": use_dispersion,
            "joint": joint, "relax": relax}
    return ConicSubproblem(objective, cons, variables, par, meta)


def fill_subproblem(sp: ConicSubproblem, state: dc.ExpansionPoint,
                    Y: np.ndarray | None, channels: SolverChannels,
                    config: SystemConfig,
                    penalties: tuple[float, float]) -> None:
    """Load one expansion point and penalty pair into the subproblem."""
    Q, K, L, _, M = sp.meta["dims"]
    joint = sp.meta["joint"]
    qos = _qos_targets(config)
    par = sp.parameters
    eta1, eta2 = penalties
    par["eta1"].value = eta1
    par["eta2"].value = eta2
    par["chi_i"].value = np.asarray(state.chi, dtype=float)
    par["z_i"].value = np.asarray(state.z, dtype=float)
    par["f2c"].value = -0.5 * state.chi ** 2 - 0.5 * state.z ** 2
    if sp.meta["use_dispersion"]:
        vk_const = np.zeros(K)
        vk_grad = np.zeros((K, L))
        for k in range(K):
            vk_const[k], vk_grad[k] = dc.taylor_vk_coeffs(state.chi[k], qos[k])
        par["vk_const"].value = vk_const
        par["vk_grad"].value = vk_grad
    if not joint:
        return

    if Y is None or Y.shape != (M + 1, M):
        raise SolverError("Y must hold the M smallest-eigenvalue eigenvectors of V")
    if np.linalg.norm(Y.conj().T @ Y - np.eye(M)) > 1e-7:
        raise SolverError("Y columns must be orthonormal")
    par["Y"].value = Y
    par["YH"].value = Y.conj().T

    R = channels.stacked
    c3 = np.ones((Q, K, L))
    l3c = np.zeros((K, L))
    c6 = np.ones((Q, K, K, L))
    l6c = np.zeros((K, L))
    for k in range(K):
        for l in range(L):
            gv3_sum = np.zeros((M + 1, M + 1), dtype=complex)
            gv6_sum = np.zeros((M + 1, M + 1), dtype=complex)
            for q in range(Q):
                scale = dc.balance_factor(state.W[q, k, l], state.V, R[q, k, l])
                c3[q, k, l] = scale
                const3, gw3, gv3 = dc.taylor_f_coeffs(
                    state.W[q, k, l], state.V, R[q, k, l], which=3, scale=scale)
                par["gw3"][q, k, l].value = gw3
                gv3_sum += gv3
                l3c[k, l] += const3
                for j in range(K):
                    if j == k:
                        continue
                    scale6 = dc.balance_factor(state.W[q, j, l], state.V,
                                               R[q, k, l])
                    c6[q, k, j, l] = scale6
                    const6, gw6, gv6 = dc.taylor_f_coeffs(
                        state.W[q, j, l], state.V, R[q, k, l], which=6,
                        scale=scale6)
                    par["gw6"][q, k, j, l].value = gw6
                    gv6_sum += gv6
                    l6c[k, l] += const6
            par["gv3"][k, l].value = gv3_sum
            if K > 1:
                par["gv6"][k, l].value = gv6_sum
    par["c3"].value = c3
    par["c3i"].value = 1.0 / c3
    par["l3c"].value = l3c
    par["c6"].value = c6
    par["c6i"].value = 1.0 / c6
    par["l6c"].value = l6c


def assemble_subproblem(state: dc.ExpansionPoint, Y: np.ndarray | None,
                        channels: SolverChannels, config: SystemConfig,
                        penalties: tuple[float, float], *,
                        use_dispersion: bool = True,
                        relax: bool = True) -> ConicSubproblem:
    """Build one convex conic subproblem around the expansion point.

    ``penalties`` is (eta1, eta2); eta1 weighs the rank slack of the LMI on V,
    eta2 the shared feasibility slack added to every inequality constraint.
    """
    sp = build_subproblem_graph(channels, config, use_dispersion=use_dispersion,
                                relax=relax)
    fill_subproblem(sp, state, Y, channels, config, penalties)
    return sp


def solve_subproblem(sp: ConicSubproblem, solver: str = "CLARABEL",
                     solver_opts: dict | None = None) -> SubproblemSolution:
    """Solve one subproblem with the configured conic backend.

    Any backend supporting nonnegative, second-order, PSD and exponential
    cones can be plugged in by name; complex Hermitian blocks are lowered to
    real symmetric cones of doubled dimension by the modeling layer.
    """
    problem = sp.problem()
    opts = dict(_SOLVER_OPTS.get(solver, {}))
    opts.update(solver_opts or {})
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            # 1x1 Hermitian blocks trip a harmless modeling-layer warning.
            warnings.filterwarnings("ignore", message=".*nested list.*")
            warnings.filterwarnings("ignore", message=".*Solution may be inaccurate.*")
            # warm_start=False: parameter refills can change the stuffed
            # sparsity pattern, which the incremental-update path rejects.
            problem.solve(solver=solver, warm_start=False, **opts)
    except (cp.error.SolverError, cp.error.DCPError) as exc:
        raise SubproblemError(f"{solver} failed: {exc}", status="solver_error") from exc
    elapsed = time.perf_counter() - start
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SubproblemError(
            f"subproblem not solved to optimality (status={problem.status})",
            status=problem.status)

    v = sp.variables
    Q, K, L, NT, _ = sp.meta["dims"]
    W = np.empty((Q, K, L, NT, NT), dtype=complex)
    for q in range(Q):
        for k in range(K):
            for l in range(L):
                W[q, k, l] = _hermitize(np.asarray(v["W"][q][k][l].value))
    V = _hermitize(np.asarray(v["V"].value)) if v["V"] is not None else None
    return SubproblemSolution(
        status=problem.status,
        objective=float(problem.value),
        chi=np.maximum(np.asarray(v["chi"].value, dtype=float), 0.0),
        interference=np.asarray(v["I"].value, dtype=float),
        W=W, V=V,
        t=float(v["t"].value) if v["t"] is not None else 0.0,
        zeta=(np.asarray(v["zeta"].value, dtype=float)
              if v["zeta"] is not None else np.zeros(K)),
        r=float(v["r"].value) if v["r"] is not None else 0.0,
        beta=float(v["beta"].value) if v["beta"] is not None else 0.0,
        solve_time=elapsed)


# ------------------------------------------------------------------ end-to-end
@dataclass
class IterationRecord:
    iteration: int
    penalized_objective: float
    raw_objective: float       # C(chi) + t, before penalty terms
    r: float
    beta: float
    eta1: float
    eta2: float
    solver_status: str
    solve_time: float


@dataclass
class QosReport:
    per_user_bits: list[float]
    bits_min: list[float]
    bits_ok: bool
    per_bs_power: list[float]
    power_budget: float
    power_ok: bool
    phase_deviation: float
    phases_ok: bool
    rank_ratio_w: float
    rank_ratio_v: float
    rank_ok: bool

    @property
    def all_pass(self) -> bool:
        return self.bits_ok and self.power_ok and self.phases_ok and self.rank_ok


@dataclass
class SolveResult:
    status: str                          # converged | iteration_cap | infeasible | solver_failure
    beams: np.ndarray | None             # (Q,K,L,N_T) extracted beamformers
    phases: np.ndarray | None            # unit-modulus reflection vector
    phase_angles: np.ndarray | None
    objective: float                     # weighted throughput from extracted variables
    lifted_objective: float              # C(chi)+t - dispersion constant, last iterate
    per_user_bits: list[float]
    iterations: int
    history: list[IterationRecord] = field(default_factory=list)
    qos_report: QosReport | None = None
    final_r: float = float("nan")
    final_beta: float = float("nan")
    wall_time: float = 0.0

    @property
    def penalized_trajectory(self) -> list[float]:
        return [h.penalized_objective for h in self.history]

    @property
    def r_trajectory(self) -> list[float]:
        return [h.r for h in self.history]

    @property
    def beta_trajectory(self) -> list[float]:
        return [h.beta for h in self.history]


def _lifted_powers(W: np.ndarray, chans: SolverChannels,
                   V: np.ndarray | None) -> np.ndarray:
    """power[q, k, j, l]: beam of user j from BS q through user k's channel."""
    if chans.optimize_irs:
        R = chans.stacked
        T = np.einsum("qklin,ij,qkljm->qklnm", R.conj(), V, R)
    else:
        T = chans.eff_outer
    return np.einsum("qklnm,qjlmn->qkjl", T, W).real


def _consistent_chi_z(W: np.ndarray, chans: SolverChannels,
                      V: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    power = _lifted_powers(W, chans, V)
    signal = np.einsum("qkkl->kl", power)
    total = power.sum(axis=(0, 2))
    z = total - signal + 1.0
    return signal / z, z


def _psd_project(A: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_hermitize(A))
    vals = np.maximum(vals, 0.0)
    return (vecs * vals) @ vecs.conj().T


def _polished_point(sol: SubproblemSolution, chans: SolverChannels,
                    config: SystemConfig) -> dc.ExpansionPoint:
    """Expansion point restored to exact feasibility of the lifted cone
    constraints.

    Solver iterates carry feasibility slop at the solve tolerance; expanding
    around them as-is re-injects that slop into the next subproblem, where the
    feasibility penalty amplifies it by eta2.  Projecting onto the PSD cones,
    rescaling to the exact power budget and unit diagonal, and recomputing
    (chi, z) consistently makes the expansion point exactly tight in the
    coupling rows.
    """
    W = np.stack([_psd_project(sol.W[idx])
                  for idx in np.ndindex(sol.W.shape[:3])])
    W = W.reshape(sol.W.shape)
    budget = config.p_max_w / chans.p_scale
    for q in range(W.shape[0]):
        total = float(sum(np.trace(W[q, k, l]).real
                          for k in range(W.shape[1]) for l in range(W.shape[2])))
        if total > budget:
            W[q] *= budget / total
    V = None
    if sol.V is not None:
        V = _psd_project(sol.V)
        d = np.sqrt(np.maximum(np.diag(V).real, 1e-12))
        V = V / np.outer(d, d)
        np.fill_diagonal(V, 1.0)
    chi, z = _consistent_chi_z(W, chans, V)
    return dc.ExpansionPoint(chi=np.maximum(chi, config.chi_floor),
                             z=np.maximum(z, 1.0), W=W, V=V)


def _initial_point(config: SystemConfig, chans: SolverChannels,
                   rng: np.random.Generator) -> dc.ExpansionPoint:
    """Random rank-one beams at full per-BS power plus random reflection
    phases, with (chi, z) set consistently so the first linearization is
    tangent at a point that satisfies the coupling constraints."""
    Q, K = config.num_bs, config.num_users
    L, NT, M = config.num_subcarriers, config.num_antennas, config.num_irs_elements
    dirs = rng.standard_normal((Q, K, L, NT)) + 1j * rng.standard_normal((Q, K, L, NT))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    per_beam = config.p_max_w / chans.p_scale / (K * L)
    w0 = math.sqrt(per_beam) * dirs
    W0 = np.einsum("qkln,qklm->qklnm", w0, w0.conj())
    V0 = None
    if chans.optimize_irs:
        theta = rng.uniform(0.0, 2.0 * math.pi, size=M)
        v0 = lifting.phase_lift_vector(np.exp(1j * theta))
        V0 = np.outer(v0, v0.conj())
    chi0, z0 = _consistent_chi_z(W0, chans, V0)
    chi0 = np.maximum(chi0, config.chi_floor)
    return dc.ExpansionPoint(chi=chi0, z=z0, W=W0, V=V0)


def _extract(sol: SubproblemSolution, chans: SolverChannels,
             config: SystemConfig):
    Q, K, L = config.num_bs, config.num_users, config.num_subcarriers
    NT = config.num_antennas
    beams = np.zeros((Q, K, L, NT), dtype=complex)
    ratio_w = 0.0
    # Blocks carrying negligible power are rank-0 up to solver noise; their
    # eigenvalue ratio is meaningless and excluded from the tightness metric.
    power_floor = 1e-8 * config.p_max_w / chans.p_scale
    amp = math.sqrt(chans.p_scale)
    for q in range(Q):
        for k in range(K):
            for l in range(L):
                vec, ratio = lifting.extract_rank_one(sol.W[q, k, l])
                beams[q, k, l] = amp * vec
                if float(np.trace(sol.W[q, k, l]).real) > power_floor:
                    ratio_w = max(ratio_w, ratio)
    if chans.optimize_irs:
        vvec, ratio_v = lifting.extract_rank_one(sol.V)
        phases = lifting.phases_from_v(vvec)
    else:
        ratio_v = 0.0
        phases = chans.phases
    return beams, phases, ratio_w, ratio_v


def check_solution(result: SolveResult, channels: ChannelRealization,
                   config: SystemConfig) -> QosReport:
    """Re-validate an extracted allocation against the original targets."""
    qos = _qos_targets(config)
    gammas = fbl.all_sinrs(channels, result.phases, result.beams)
    bits = [fbl.packet_bits(gammas[k], qos[k]) for k in range(config.num_users)]
    bits_ok = all(b >= q.bits_min - QOS_BITS_TOL for b, q in zip(bits, qos))
    power = [float(np.sum(np.abs(result.beams[q]) ** 2))
             for q in range(config.num_bs)]
    budget = config.p_max_w
    power_ok = all(p <= budget * (1.0 + POWER_REL_TOL) for p in power)
    if result.phases is not None and len(result.phases):
        phase_dev = float(np.max(np.abs(np.abs(result.phases) - 1.0)))
    else:
        phase_dev = 0.0
    phases_ok = phase_dev <= 1e-9
    ratio_w = result.qos_report.rank_ratio_w if result.qos_report else 0.0
    ratio_v = result.qos_report.rank_ratio_v if result.qos_report else 0.0
    rank_ok = ratio_w <= RANK_RATIO_TOL and ratio_v <= RANK_RATIO_TOL
    return QosReport(per_user_bits=bits, bits_min=[q.bits_min for q in qos],
                     bits_ok=bits_ok, per_bs_power=power, power_budget=budget,
                     power_ok=power_ok, phase_deviation=phase_dev,
                     phases_ok=phases_ok, rank_ratio_w=ratio_w,
                     rank_ratio_v=ratio_v, rank_ok=rank_ok)


def run_algorithm1(config: SystemConfig, channels: ChannelRealization, *,
                   use_dispersion: bool = True, optimize_irs: bool = True,
                   fixed_phases: np.ndarray | None = None,
                   rng: np.random.Generator | None = None,
                   solver: str | None = None) -> SolveResult:
    """Full allocation run: iterate convex subproblems to a local optimum,
    then recover beams and reflection phases from the lifted solution and
    re-evaluate the delivered bits on the physical channels."""
    started = time.perf_counter()
    config.validate()
    rng = rng or np.random.default_rng(0)
    solver = solver or config.solver
    sched = config.penalty
    chans = SolverChannels.build(channels, optimize_irs, fixed_phases,
                                 p_scale=config.p_max_w)
    joint = chans.optimize_irs and config.num_irs_elements > 0
    qos = _qos_targets(config)
    mu = np.asarray(config.weights_list)
    n_p = config.n_p
    vmax_total = fbl.v_max_total(qos, config.num_subcarriers) if use_dispersion else 0.0

    point = _initial_point(config, chans, rng)
    Y = smallest_eigvecs(point.V, config.num_irs_elements) if joint else None
    eta1, eta2 = sched.eta1_init, sched.eta2_init

    history: list[IterationRecord] = []
    last_sol: SubproblemSolution | None = None
    prev_obj = None
    stall = 0
    inner_converged = False
    failure = False

    sp = build_subproblem_graph(chans, config, use_dispersion=use_dispersion)
    for it in range(1, sched.i_max + 1):
        fill_subproblem(sp, point, Y, chans, config, (eta1, eta2))
        try:
            sol = solve_subproblem(sp, solver, config.solver_opts)
        except SubproblemError:
            # Interior-point numerics degrade as V approaches rank one; retry
            # the same subproblem with progressively looser tolerances before
            # switching backends.
            sol = None
            ladder: list[tuple[str, dict | None]] = [
                (solver, {"chordal_decomposition_enable": False,
                          "tol_gap_abs": t, "tol_gap_rel": t, "tol_feas": t})
                for t in (3e-6, 1e-5)]
            ladder.append((solver, {"chordal_decomposition_enable": True,
                                    "tol_gap_abs": 1e-8, "tol_gap_rel": 1e-8,
                                    "tol_feas": 1e-8}))
            ladder.append(("SCS", None))
            for alt, opts in ladder:
                try:
                    sol = solve_subproblem(sp, alt, opts)
                    break
                except SubproblemError:
                    continue
            if sol is None:
                failure = True
                break
        last_sol = sol
        raw = float(sum(mu[k] * (n_p / LN2) * np.sum(np.log1p(sol.chi[k]))
                        for k in range(config.num_users)) + sol.t)
        history.append(IterationRecord(
            iteration=it, penalized_objective=sol.objective, raw_objective=raw,
            r=sol.r, beta=sol.beta, eta1=eta1, eta2=eta2,
            solver_status=sol.status, solve_time=sol.solve_time))

        if prev_obj is not None:
            stalled = abs(sol.objective - prev_obj) <= sched.obj_tol * max(1.0, abs(prev_obj))
            slacks_ok = sol.r <= sched.rank_tol and sol.beta <= sched.feas_tol
            if stalled and slacks_ok:
                inner_converged = True
            elif stalled and eta1 >= sched.eta1_max and eta2 >= sched.eta2_max:
                stall += 1
            else:
                stall = 0
        prev_obj = sol.objective

        point = _polished_point(sol, chans, config)
        if joint:
            Y = smallest_eigvecs(point.V, config.num_irs_elements)
        if inner_converged or stall >= sched.stall_patience:
            break
        eta1 = min(sched.alpha1 * eta1, sched.eta1_max)
        eta2 = min(sched.alpha2 * eta2, sched.eta2_max)

    if last_sol is None:
        return SolveResult(status="solver_failure", beams=None, phases=None,
                           phase_angles=None, objective=float("nan"),
                           lifted_objective=float("nan"), per_user_bits=[],
                           iterations=len(history), history=history,
                           wall_time=time.perf_counter() - started)

    beams, phases, ratio_w, ratio_v = _extract(last_sol, chans, config)
    eval_channels = chans.realization
    gammas = fbl.all_sinrs(eval_channels, phases, beams)
    bits = [fbl.packet_bits(gammas[k], qos[k]) for k in range(config.num_users)]
    objective = float(sum(m * b for m, b in zip(mu, bits)))
    lifted_objective = history[-1].raw_objective - vmax_total

    result = SolveResult(
        status="pending", beams=beams, phases=phases,
        phase_angles=np.angle(phases) if phases is not None else None,
        objective=objective, lifted_objective=lifted_objective,
        per_user_bits=bits, iterations=len(history), history=history,
        final_r=last_sol.r, final_beta=last_sol.beta)
    report = check_solution(result, eval_channels, config)
    report.rank_ratio_w, report.rank_ratio_v = ratio_w, ratio_v
    report.rank_ok = ratio_w <= RANK_RATIO_TOL and ratio_v <= RANK_RATIO_TOL
    result.qos_report = report

    if failure:
        result.status = "solver_failure"
    elif inner_converged and report.all_pass:
        result.status = "converged"
    elif (last_sol.beta > sched.feas_tol and eta2 >= sched.eta2_max
          and (stall >= sched.stall_patience or len(history) >= sched.i_max)):
        result.status = "infeasible"
    elif inner_converged:
        result.status = "infeasible"      # extracted allocation missed a check
    else:
        result.status = "iteration_cap"
    result.wall_time = time.perf_counter() - started
    return result
