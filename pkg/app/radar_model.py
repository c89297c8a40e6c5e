"""
Stepped-frequency MIMO radar model for a single coarse range cell.

Builds the steering vectors of one scatterer, the on-grid dictionary Phi whose
columns are the normalized atoms of every grid point, and the augmented matrix
A = [Phi | I] used by the joint image / interference recovery problem.

Flat measurement index: l = (q*N_T + p)*N*N_d + m*N + n, 0-based, with
q the receiver, p the transmitter, m the sweep and n the pulse within a sweep.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Mapping, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from app.artifacts import ArtifactStore, PathLike, array_sha256, config_hash
from app.exceptions import DimensionMismatchError, DomainError


# Slack on domain checks so that grid points computed in floating point stay admissible.
_DOMAIN_SLACK: float = 1e-12

# Column ordering of the dictionary, fastest-varying coordinate first.
GRID_ORDER: Tuple[str, ...] = ("tau", "vel", "theta1", "theta2")


@dataclass(frozen=True)
class RadarConfig:
    """
    Physical constants of the stepped-frequency MIMO radar.

    Attributes:
        n_freq: Number of frequency steps per sweep (N).
        n_sweeps: Number of sweeps (N_d).
        n_tx: Number of transmitters (N_T).
        n_rx: Number of receivers (N_R).
        f0: Start carrier frequency [Hz].
        delta_f: Frequency step [Hz].
        pulse_dur: Pulse duration T [s].
        pri: Pulse repetition interval T_r [s].
        d_tx: Tx element spacing normalized by the start wavelength.
        d_rx: Rx element spacing normalized by the start wavelength.
    """
    n_freq: int = 4
    n_sweeps: int = 4
    n_tx: int = 2
    n_rx: int = 2
    f0: float = 2e9
    delta_f: float = 1e6
    pulse_dur: float = 1e-6
    pri: float = 66e-6
    d_tx: float = 1.0
    d_rx: float = 1.0

    def __post_init__(self):
        for name in ("n_freq", "n_sweeps", "n_tx", "n_rx"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"RadarConfig.{name} must be >= 1, got {getattr(self, name)}.")
        for name in ("f0", "delta_f", "pulse_dur", "pri"):
            if not getattr(self, name) > 0:
                raise DomainError(f"RadarConfig.{name} must be > 0, got {getattr(self, name)}.")
        if self.pri < 2 * self.pulse_dur:
            raise DomainError(f"RadarConfig.pri ({self.pri}) must be at least twice pulse_dur ({self.pulse_dur}).")

    @property
    def v_max(self) -> float:
        """Maximum unambiguous radial velocity c / (4 f0 N T_r) [m/s]."""
        return SPEED_OF_LIGHT / (4.0 * self.f0 * self.n_freq * self.pri)

    @property
    def n_channels(self) -> int:
        """Number of virtual MIMO channels N_T * N_R."""
        return self.n_tx * self.n_rx

    @property
    def n_pulses(self) -> int:
        """Number of pulses per channel N * N_d."""
        return self.n_freq * self.n_sweeps

    @property
    def dim(self) -> int:
        """Measurement dimension D = N_T N_R N N_d."""
        return self.n_channels * self.n_pulses

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RadarConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def config_hash(self) -> str:
        return config_hash(self.to_dict())


# Simulated stepped-frequency MIMO radar used when no config is given.
DEFAULT_RADAR = RadarConfig()


def _check_velocity(v: float, cfg: RadarConfig) -> None:
    if abs(v) > cfg.v_max * (1.0 + _DOMAIN_SLACK):
        raise DomainError(f"Velocity {v} m/s exceeds v_max = {cfg.v_max:.6g} m/s.")


def _check_delay(tau_offset: float, cfg: RadarConfig) -> None:
    if abs(tau_offset) > cfg.pulse_dur / 2 * (1.0 + _DOMAIN_SLACK):
        raise DomainError(f"Delay offset {tau_offset} s lies outside [-T/2, T/2] with T = {cfg.pulse_dur} s.")


def _check_angle(theta: float, name: str) -> None:
    if not 0.0 <= theta < 1.0:
        raise DomainError(f"{name} = {theta} lies outside [0, 1).")


def range_steering(tau_offset: float, v: float, cfg: RadarConfig) -> np.ndarray:
    """
    Intra-sweep steering vector, length N:
    r_n = exp[-j2pi (n df tau + f_n (2v/c) n T_r)], f_n = f0 + n df.
    """
    _check_delay(tau_offset, cfg)
    _check_velocity(v, cfg)
    n = np.arange(cfg.n_freq)
    f_n = cfg.f0 + n * cfg.delta_f
    phase = n * cfg.delta_f * tau_offset + f_n * (2.0 * v / SPEED_OF_LIGHT) * n * cfg.pri
    return np.exp(-2j * np.pi * phase)


def velocity_steering(v: float, cfg: RadarConfig) -> np.ndarray:
    """Inter-sweep steering vector, length N_d: v_m = exp[-j2pi f0 (2v/c) m N T_r]."""
    _check_velocity(v, cfg)
    m = np.arange(cfg.n_sweeps)
    phase = cfg.f0 * (2.0 * v / SPEED_OF_LIGHT) * m * cfg.n_freq * cfg.pri
    return np.exp(-2j * np.pi * phase)


def distortion_vector(v: float, cfg: RadarConfig) -> np.ndarray:
    """Range-Doppler coupling terms, length N N_d: c_{n+mN} = exp[-j2pi n df (2v/c) m N T_r]."""
    _check_velocity(v, cfg)
    n = np.arange(cfg.n_freq)
    m = np.arange(cfg.n_sweeps)[:, None]
    phase = n * cfg.delta_f * (2.0 * v / SPEED_OF_LIGHT) * m * cfg.n_freq * cfg.pri
    # rows are sweeps, so the row-major ravel puts n fastest
    return np.exp(-2j * np.pi * phase).ravel()


def array_response(theta1: float, theta2: float, cfg: RadarConfig) -> np.ndarray:
    """Cross-shaped ULA pair response h = h_R(theta1) kron h_T(theta2), Tx index fastest."""
    _check_angle(theta1, "theta1")
    _check_angle(theta2, "theta2")
    h_rx = np.exp(-2j * np.pi * cfg.d_rx * theta1 * np.arange(cfg.n_rx))
    h_tx = np.exp(-2j * np.pi * cfg.d_tx * theta2 * np.arange(cfg.n_tx))
    return np.kron(h_rx, h_tx)


def atom(theta1: float, theta2: float, tau_offset: float, v: float, cfg: RadarConfig) -> np.ndarray:
    """Unnormalized dictionary atom phi = h kron [(v_steer kron r_steer) * c], length D."""
    temporal = np.kron(velocity_steering(v, cfg), range_steering(tau_offset, v, cfg)) * distortion_vector(v, cfg)
    return np.kron(array_response(theta1, theta2, cfg), temporal)


def centered_window(size: int) -> np.ndarray:
    """
    Integer offsets of a grid centered on zero.
    Odd sizes give -floor(M/2)..floor(M/2); even sizes give -M/2..M/2-1.
    """
    if size < 1:
        raise DomainError(f"Grid size must be >= 1, got {size}.")
    half = size // 2
    if size % 2:
        return np.arange(-half, half + 1)
    return np.arange(-half, half)


@dataclass(frozen=True)
class Grid:
    """
    Coordinate grid indexing the dictionary columns.

    Column index of (i_tau, i_vel, i_theta1, i_theta2) is
    i_tau + M_tau*(i_vel + M_v*(i_theta1 + M_theta1*i_theta2)).
    """
    taus: Tuple[float, ...]
    vels: Tuple[float, ...]
    theta1s: Tuple[float, ...]
    theta2s: Tuple[float, ...]
    order: Tuple[str, ...] = GRID_ORDER

    @property
    def sizes(self) -> Tuple[int, int, int, int]:
        return (len(self.taus), len(self.vels), len(self.theta1s), len(self.theta2s))

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    def column_index(self, i_tau: int, i_vel: int, i_theta1: int, i_theta2: int) -> int:
        m_tau, m_vel, m_theta1, _ = self.sizes
        return i_tau + m_tau * (i_vel + m_vel * (i_theta1 + m_theta1 * i_theta2))

    def unravel(self, column: int) -> Tuple[int, int, int, int]:
        """Grid indices (i_tau, i_vel, i_theta1, i_theta2) of a dictionary column."""
        return tuple(int(i) for i in np.unravel_index(column, self.sizes, order="F"))

    def coordinates(self, column: int) -> Tuple[float, float, float, float]:
        """Physical coordinates (tau, v, theta1, theta2) of a dictionary column."""
        i_tau, i_vel, i_theta1, i_theta2 = self.unravel(column)
        return (self.taus[i_tau], self.vels[i_vel], self.theta1s[i_theta1], self.theta2s[i_theta2])

    def image_slice(self, image: np.ndarray, i_theta1: int, i_theta2: int) -> np.ndarray:
        """The M_tau x M_v range-velocity slice of an image vector at one angle pair."""
        cube = np.asarray(image).reshape(self.sizes, order="F")
        return cube[:, :, i_theta1, i_theta2]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "taus": list(self.taus),
            "vels": list(self.vels),
            "theta1s": list(self.theta1s),
            "theta2s": list(self.theta2s),
            "order": list(self.order),
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Grid":
        return cls(
            taus=tuple(data["taus"]),
            vels=tuple(data["vels"]),
            theta1s=tuple(data["theta1s"]),
            theta2s=tuple(data["theta2s"]),
            order=tuple(data.get("order", GRID_ORDER)),
        )


def build_grid(cfg: RadarConfig, sizes: Tuple[int, int, int, int] = (5, 5, 3, 2)) -> Grid:
    """
    Builds the delay, velocity and angle grids.

    Args:
        cfg: Radar constants.
        sizes: (M_tau, M_v, M_theta1, M_theta2).
    """
    m_tau, m_vel, m_theta1, m_theta2 = (int(s) for s in sizes)
    for name, size in zip(GRID_ORDER, (m_tau, m_vel, m_theta1, m_theta2)):
        if size < 1:
            raise DomainError(f"Grid size for {name} must be >= 1, got {size}.")
    return Grid(
        taus=tuple(float(cfg.pulse_dur * m / m_tau) for m in centered_window(m_tau)),
        vels=tuple(float(cfg.v_max * m / m_vel) for m in centered_window(m_vel)),
        theta1s=tuple(m / m_theta1 for m in range(m_theta1)),
        theta2s=tuple(m / m_theta2 for m in range(m_theta2)),
    )


@dataclass(frozen=True)
class Dictionary:
    """
    Normalized dictionary Phi (D x M) and augmented matrix A = [Phi | I_D].

    Arrays are read-only; instances are safe to share between readers.
    """
    phi: np.ndarray
    a_aug: np.ndarray
    column_norms: np.ndarray
    grid: Grid
    config: RadarConfig
    hash: str = field(default="")

    @property
    def dim(self) -> int:
        """Measurement dimension D."""
        return self.phi.shape[0]

    @property
    def n_atoms(self) -> int:
        """Number of grid columns M."""
        return self.phi.shape[1]

    @property
    def n_unknowns(self) -> int:
        """Length P = M + D of x = [w; b]."""
        return self.a_aug.shape[1]

    def save(self, stem: PathLike) -> None:
        """Exports phi with a sidecar carrying dims, grid and config hash."""
        ArtifactStore().write(stem, self.phi, "dictionary", {
            "dims": {"D": self.dim, "M": self.n_atoms},
            "grid": self.grid.to_dict(),
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "dictionary_hash": self.hash,
        })

    @classmethod
    def load(cls, stem: PathLike) -> "Dictionary":
        phi, sidecar = ArtifactStore().read(stem, "dictionary")
        return _freeze(
            phi=phi,
            column_norms=None,
            grid=Grid.from_mapping(sidecar["grid"]),
            config=RadarConfig.from_mapping(sidecar["config"]),
        )


def _freeze(phi: np.ndarray, column_norms, grid: Grid, config: RadarConfig) -> Dictionary:
    if phi.shape != (config.dim, grid.size):
        raise DimensionMismatchError(f"phi has shape {phi.shape}, expected {(config.dim, grid.size)}.")
    if column_norms is None:
        column_norms = np.full(grid.size, np.sqrt(config.dim))
    a_aug = np.hstack([phi, np.eye(config.dim, dtype=np.complex128)])
    for array in (phi, a_aug, column_norms):
        array.setflags(write=False)
    return Dictionary(phi=phi, a_aug=a_aug, column_norms=column_norms, grid=grid, config=config,
                      hash=array_sha256(phi))


def build_dictionary(cfg: RadarConfig, grid: Grid) -> Dictionary:
    """
    Stacks the atoms of every grid point in column order and scales each to unit norm.
    """
    phi = np.empty((cfg.dim, grid.size), dtype=np.complex128)
    norms = np.empty(grid.size)
    m_tau, m_vel, m_theta1, m_theta2 = grid.sizes
    for i_theta2, i_theta1, i_vel, i_tau in itertools.product(
            range(m_theta2), range(m_theta1), range(m_vel), range(m_tau)):
        column = grid.column_index(i_tau, i_vel, i_theta1, i_theta2)
        a = atom(grid.theta1s[i_theta1], grid.theta2s[i_theta2], grid.taus[i_tau], grid.vels[i_vel], cfg)
        norms[column] = np.linalg.norm(a)
        phi[:, column] = a / norms[column]
    return _freeze(phi, norms, grid, cfg)
