"""Scenario configuration: system dimensions, powers, QoS targets, topology,
path-loss parameters and the penalty schedule of the allocation algorithm.

All config files / dicts use explicit units in field names (``p_max_dbm``,
``noise_density_dbm_hz``, ...). dB/dBm fields are converted to linear scale
by the derived properties, never stored twice.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a configuration file or dict violates the schema."""


def _require(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {message}")


@dataclass
class PathLossParams:
    """Large-scale propagation model of the three link types.

    ``h_b`` and ``h_bar_b`` are linear gains modelling shadowing/blockage of
    the direct and the reflected (double-fading) link respectively.
    """

    carrier_frequency_hz: float = 6e9
    kappa_bs_user: float = 3.2
    kappa_bs_irs: float = 2.1
    kappa_irs_user: float = 2.1
    h_b: float = 1e-8            # -80 dB
    h_bar_b: float = 1.0         # 0 dB
    rician_factor: float = 10.0

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    def validate(self) -> None:
        _require(self.carrier_frequency_hz > 0, "carrier_frequency_hz", "must be > 0")
        for name in ("kappa_bs_user", "kappa_bs_irs", "kappa_irs_user"):
            _require(getattr(self, name) > 0, name, "path-loss exponent must be > 0")
        _require(self.h_b >= 0, "h_b", "linear gain must be >= 0")
        _require(self.h_bar_b >= 0, "h_bar_b", "linear gain must be >= 0")
        _require(self.rician_factor >= 0, "rician_factor", "must be >= 0")


def default_bs_positions(num_bs: int, radius_m: float = 100.0) -> list[tuple[float, float]]:
    """Base stations evenly spaced on a circle around the network center;
    two stations land at (0, -radius) and (0, radius)."""
    out = []
    for q in range(num_bs):
        angle = -math.pi / 2.0 + 2.0 * math.pi * q / num_bs
        out.append((round(radius_m * math.cos(angle), 9),
                    round(radius_m * math.sin(angle), 9)))
    return out


@dataclass
class Topology:
    """Node placement in the 2-D plane (meters).

    When ``user_positions`` is empty the harness draws ``K`` users uniformly
    in the disk of radius ``user_drop_radius`` around ``user_drop_center``.
    """

    bs_positions: list[tuple[float, float]] = field(
        default_factory=lambda: default_bs_positions(2))
    irs_position: tuple[float, float] = (50.0, 0.0)
    user_positions: list[tuple[float, float]] = field(default_factory=list)
    user_drop_center: tuple[float, float] = (25.0, 0.0)
    user_drop_radius: float = 5.0

    def validate(self, num_bs: int, num_users: int) -> None:
        _require(len(self.bs_positions) == num_bs, "bs_positions",
                 f"expected {num_bs} base station positions, got {len(self.bs_positions)}")
        if self.user_positions:
            _require(len(self.user_positions) == num_users, "user_positions",
                     f"expected {num_users} user positions, got {len(self.user_positions)}")
        _require(self.user_drop_radius > 0, "user_drop_radius", "must be > 0")


@dataclass
class PenaltySchedule:
    """Penalty weights and stopping rules of the iterative algorithm.

    The feasibility penalty is exact: once eta2 exceeds the dual price of the
    relaxed constraints (order 1e2 here), the slack sits at zero, so the cap
    defaults to 1e6; raising it further only degrades interior-point
    conditioning.
    """

    eta1_init: float = 1e-2
    eta2_init: float = 1e5
    alpha1: float = 25.0
    alpha2: float = 25.0
    eta1_max: float = 1e2
    eta2_max: float = 1e6
    i_max: int = 500
    obj_tol: float = 1e-5        # relative objective-stall tolerance
    rank_tol: float = 1e-6       # tolerance on the rank slack r
    feas_tol: float = 1e-6       # tolerance on the feasibility slack beta
    stall_patience: int = 10     # stalled iterations tolerated after the caps

    def validate(self) -> None:
        _require(self.eta1_init > 0 and self.eta2_init > 0, "eta1_init/eta2_init",
                 "initial penalties must be > 0")
        _require(self.alpha1 > 1 and self.alpha2 > 1, "alpha1/alpha2",
                 "growth factors must be > 1")
        _require(self.eta1_max >= self.eta1_init, "eta1_max", "cap below initial value")
        _require(self.eta2_max >= self.eta2_init, "eta2_max", "cap below initial value")
        _require(self.i_max >= 1, "i_max", "must be >= 1")
        for name in ("obj_tol", "rank_tol", "feas_tol"):
            _require(getattr(self, name) > 0, name, "tolerance must be > 0")


@dataclass
class SweepSpec:
    """Axis swept by the harness; ``parameter`` is a SystemConfig field name."""

    parameter: str | None = None
    values: list[float] = field(default_factory=list)

    def points(self) -> list[float | None]:
        return list(self.values) if self.parameter else [None]


SCHEME_TAGS = ("proposed", "shannon_bound", "random_phase", "no_irs")


@dataclass
class SystemConfig:
    """All scenario constants of one experiment.

    Scalar defaults follow the reference scenario: 6 GHz carrier, 32
    subcarriers of 240 kHz, -174 dBm/Hz noise density, 45 dBm per-BS power
    budget, 160-bit packets at error probability 1e-6, frame of 100 OFDM
    symbols.
    """

    num_bs: int = 2                      # Q
    num_users: int = 2                   # K
    num_antennas: int = 2                # N_T per BS
    num_irs_elements: int = 8            # M
    num_subcarriers: int = 32            # L
    subcarrier_bandwidth_hz: float = 240e3   # B_s
    frame_duration_s: float = 0.41667e-3     # T_f
    symbols_per_frame: int | None = None     # N_p, derived from B_s*T_f when None
    p_max_dbm: float = 45.0              # per-BS budget
    noise_density_dbm_hz: float = -174.0
    bits_min: list[float] | float = 160.0    # B_k, scalar broadcast to all users
    error_prob: list[float] | float = 1e-6   # epsilon_k
    weights: list[float] | float = 1.0       # mu_k
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    topology: Topology = field(default_factory=Topology)
    penalty: PenaltySchedule = field(default_factory=PenaltySchedule)
    frequency_model: str = "iid"          # "iid" | "tapped"
    num_taps: int = 4
    schemes: list[str] = field(default_factory=lambda: list(SCHEME_TAGS))
    seeds: list[int] = field(default_factory=lambda: [0])
    sweep: SweepSpec = field(default_factory=SweepSpec)
    solver: str = "CLARABEL"
    solver_opts: dict = field(default_factory=dict)
    chi_floor: float = 1e-7              # expansion-point floor for the dispersion tangent

    # ------------------------------------------------------------------ derived
    @property
    def p_max_w(self) -> float:
        """Per-BS power budget in Watts."""
        return 10.0 ** ((self.p_max_dbm - 30.0) / 10.0)

    @property
    def sigma2_w(self) -> float:
        """Noise power per subcarrier in Watts (density x subcarrier bandwidth)."""
        return 10.0 ** ((self.noise_density_dbm_hz - 30.0) / 10.0) * self.subcarrier_bandwidth_hz

    @property
    def n_p(self) -> int:
        """OFDM symbols per frame, N_p = B_s * T_f."""
        if self.symbols_per_frame is not None:
            return int(self.symbols_per_frame)
        return round(self.subcarrier_bandwidth_hz * self.frame_duration_s)

    def per_user(self, value, name: str) -> list[float]:
        """Broadcast a scalar QoS field to K entries, or validate a K-list."""
        if isinstance(value, (int, float)):
            return [float(value)] * self.num_users
        out = [float(v) for v in value]
        _require(len(out) == self.num_users, name,
                 f"expected {self.num_users} entries, got {len(out)}")
        return out

    @property
    def bits_min_list(self) -> list[float]:
        return self.per_user(self.bits_min, "bits_min")

    @property
    def error_prob_list(self) -> list[float]:
        return self.per_user(self.error_prob, "error_prob")

    @property
    def weights_list(self) -> list[float]:
        return self.per_user(self.weights, "weights")

    # ------------------------------------------------------------------ checks
    def validate(self) -> None:
        for name in ("num_bs", "num_users", "num_antennas", "num_subcarriers"):
            _require(isinstance(getattr(self, name), int) and getattr(self, name) >= 1,
                     name, "must be an integer >= 1")
        _require(self.num_irs_elements >= 0, "num_irs_elements", "must be >= 0")
        _require(self.subcarrier_bandwidth_hz > 0, "subcarrier_bandwidth_hz", "must be > 0")
        _require(self.frame_duration_s > 0, "frame_duration_s", "must be > 0")
        if self.symbols_per_frame is not None:
            implied = round(self.subcarrier_bandwidth_hz * self.frame_duration_s)
            _require(int(self.symbols_per_frame) == implied, "symbols_per_frame",
                     f"inconsistent with subcarrier_bandwidth_hz * frame_duration_s "
                     f"(given {self.symbols_per_frame}, implied {implied})")
        _require(self.n_p >= 1, "symbols_per_frame", "must be >= 1")
        for b in self.bits_min_list:
            _require(b >= 0, "bits_min", "must be >= 0")
        for e in self.error_prob_list:
            _require(0 < e < 1, "error_prob", "must lie in (0, 1)")
        for m in self.weights_list:
            _require(m > 0, "weights", "must be > 0")
        _require(self.frequency_model in ("iid", "tapped"), "frequency_model",
                 "must be 'iid' or 'tapped'")
        _require(self.num_taps >= 1, "num_taps", "must be >= 1")
        for s in self.schemes:
            _require(s in SCHEME_TAGS, "schemes", f"unknown scheme '{s}'")
        if self.sweep.parameter is not None:
            _require(hasattr(self, self.sweep.parameter), "sweep.parameter",
                     f"unknown field '{self.sweep.parameter}'")
            _require(len(self.sweep.values) >= 1, "sweep.values", "must be nonempty")
        _require(self.chi_floor > 0, "chi_floor", "must be > 0")
        self.pathloss.validate()
        self.topology.validate(self.num_bs, self.num_users)
        self.penalty.validate()

    def with_sweep_value(self, value) -> "SystemConfig":
        """Copy of the config with the sweep parameter replaced by ``value``."""
        if value is None or self.sweep.parameter is None:
            return self
        target = value
        if self.sweep.parameter in ("num_irs_elements", "num_subcarriers",
                                    "num_antennas", "num_bs", "num_users"):
            target = int(value)
        return dataclasses.replace(self, **{self.sweep.parameter: target})

    def digest(self) -> str:
        """Stable hash of every field that influences the numbers."""
        payload = dataclasses.asdict(self)
        blob = json.dumps(payload, sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_NESTED = {
    "pathloss": PathLossParams,
    "topology": Topology,
    "penalty": PenaltySchedule,
    "sweep": SweepSpec,
}


def _build(cls, data: dict, context: str):
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{context}{key}: unknown field")
        if key in _NESTED and isinstance(value, dict):
            value = _build(_NESTED[key], value, context=f"{key}.")
        if key in ("bs_positions", "user_positions"):
            value = [tuple(p) for p in value]
        if key in ("irs_position", "user_drop_center"):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> SystemConfig:
    data = dict(data or {})
    cfg = _build(SystemConfig, data, context="")
    # The stock topology holds two base stations; rebuild the ring when the
    # BS count differs and no explicit positions were given.
    topo_data = data.get("topology") or {}
    if "bs_positions" not in topo_data and len(cfg.topology.bs_positions) != cfg.num_bs:
        cfg = dataclasses.replace(
            cfg, topology=dataclasses.replace(
                cfg.topology, bs_positions=default_bs_positions(cfg.num_bs)))
    cfg.validate()
    return cfg


def load_config(path) -> SystemConfig:
    """Load and validate a YAML (or JSON) config file; unset fields default."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def desk_scale_config(**overrides) -> SystemConfig:
    """Small default scenario solvable in seconds per instance."""
    base = dict(num_bs=2, num_users=2, num_antennas=2, num_irs_elements=8,
                num_subcarriers=8)
    base.update(overrides)
    return config_from_dict(base)
