"""
ADMM-Net: K unrolled ADMM iterations with learnable per-stage parameters.

Complex vectors travel through the network in stacked real form
stack(v) = [Re v, Im v] along the last axis, and a complex matrix C acts on
them through stack_matrix(C) = [[Re C, -Im C], [Im C, Re C]].
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.artifacts import ArtifactStore, PathLike
from app.exceptions import DimensionMismatchError, DomainError, MissingCheckpointError
from app.radar_model import Dictionary
from app.solvers.admm import SolverParams, precompute, soft_threshold
from app.solvers.base import BaseSolver, SolveResult


SCALAR_FIELDS = ("alpha", "eta", "lambda1", "lambda2")


def stack(v: np.ndarray) -> np.ndarray:
    """[Re v, Im v] along the last axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1).astype(np.float64)


def unstack(r: np.ndarray) -> np.ndarray:
    """
    Inverse of `stack`.

    Raises:
        DomainError: If the last axis has odd length.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] % 2:
        raise DomainError(f"Cannot unstack a vector of odd length {r.shape[-1]}.")
    n = r.shape[-1] // 2
    return r[..., :n] + 1j * r[..., n:]


def stack_matrix(c: np.ndarray) -> np.ndarray:
    """Real 2m x 2n matrix acting on stacked vectors as `c` acts on complex ones."""
    c = np.asarray(c)
    return np.block([[c.real, -c.imag], [c.imag, c.real]]).astype(np.float64)


@dataclass
class StageParams:
    """
    Learnable parameters of one stage.

    Attributes:
        m1: (2P, 2D) matrix applied to the stacked measurement.
        m2: (2P, 2P) matrix applied to the stacked z - u.
        alpha: Relaxation weight.
        eta: Dual step size.
        lambda1: Image threshold, used as max(lambda1, 0).
        lambda2: Interference threshold, used as max(lambda2, 0).
    """
    m1: np.ndarray
    m2: np.ndarray
    alpha: float
    eta: float
    lambda1: float
    lambda2: float

    def scalars(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in SCALAR_FIELDS}


@dataclass
class ForwardTrace:
    """
    Stacked iterates of a forward pass, each of shape (B, 2P) or (2P,).

    `z` and `u` hold K + 1 entries starting with the zero initial iterate;
    `x`, `xi` and `a` (the threshold input xi + u_prev) hold K entries.
    """
    y: np.ndarray
    x: List[np.ndarray] = field(default_factory=list)
    xi: List[np.ndarray] = field(default_factory=list)
    a: List[np.ndarray] = field(default_factory=list)
    z: List[np.ndarray] = field(default_factory=list)
    u: List[np.ndarray] = field(default_factory=list)
    output: Optional[np.ndarray] = None


class Network:
    """
    Network Class

    An ordered list of stages sharing the dimensions (D, M), P = M + D.

    Attributes:
        stages: The K stages, first to last.
        dim: Measurement dimension D.
        n_atoms: Number of image coordinates M.
        provenance: Init settings, dictionary hash and training metadata.
    """

    def __init__(self, stages: List[StageParams], dim: int, n_atoms: int,
                 provenance: Optional[Dict[str, Any]] = None):
        if not stages:
            raise DomainError("A network needs at least one stage.")
        self.stages = stages
        self.dim = int(dim)
        self.n_atoms = int(n_atoms)
        self.provenance = dict(provenance or {})
        self._check_shapes()

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def n_unknowns(self) -> int:
        return self.n_atoms + self.dim

    def _check_shapes(self) -> None:
        p2, d2 = 2 * self.n_unknowns, 2 * self.dim
        for k, stage in enumerate(self.stages):
            if stage.m1.shape != (p2, d2) or stage.m2.shape != (p2, p2):
                raise DimensionMismatchError(
                    f"Stage {k}: m1 {stage.m1.shape} / m2 {stage.m2.shape}, expected {(p2, d2)} / {(p2, p2)}.")

    def thresholds(self, stage: StageParams) -> np.ndarray:
        """Per-coordinate clamped thresholds of a stage over the P complex coordinates."""
        kappa = np.full(self.n_unknowns, max(stage.lambda2, 0.0))
        kappa[:self.n_atoms] = max(stage.lambda1, 0.0)
        return kappa

    def forward(self, y: np.ndarray, record_trace: bool = True) -> Tuple[np.ndarray, Optional[ForwardTrace]]:
        """
        Runs the K stages on measurements of shape (D,) or (B, D).

        Each stage computes
            x  = M1 stack(y) + M2 (z - u)
            xi = alpha x + (1 - alpha) z
            z  = stack(S_lambda(unstack(xi + u)))
            u  = u + eta (xi - z)
        from z = u = 0, and the output is unstack(z) of the last stage.

        Returns:
            Tuple: The complex estimate of x = [w; b] and, if requested, the trace.
        """
        y = np.asarray(y, dtype=np.complex128)
        if y.shape[-1] != self.dim or y.ndim not in (1, 2):
            raise DimensionMismatchError(f"Measurements have shape {y.shape}, the network expects D = {self.dim}.")
        y_s = stack(y)
        z = np.zeros(y.shape[:-1] + (2 * self.n_unknowns,))
        u = np.zeros_like(z)
        trace = ForwardTrace(y=y_s, z=[z], u=[u]) if record_trace else None
        for stage in self.stages:
            x = y_s @ stage.m1.T + (z - u) @ stage.m2.T
            xi = stage.alpha * x + (1.0 - stage.alpha) * z
            a = xi + u
            z = stack(soft_threshold(unstack(a), self.thresholds(stage)))
            u = u + stage.eta * (xi - z)
            if trace is not None:
                trace.x.append(x)
                trace.xi.append(xi)
                trace.a.append(a)
                trace.z.append(z)
                trace.u.append(u)
        output = unstack(z)
        if trace is not None:
            trace.output = output
        return output, trace

    def get_parameters(self) -> Dict[str, np.ndarray]:
        """Flat view of every learnable parameter keyed "<stage>.<field>"; scalars as 0-d arrays."""
        params: Dict[str, np.ndarray] = {}
        for k, stage in enumerate(self.stages):
            params[f"{k}.m1"] = stage.m1
            params[f"{k}.m2"] = stage.m2
            for name in SCALAR_FIELDS:
                params[f"{k}.{name}"] = np.asarray(getattr(stage, name), dtype=np.float64)
        return params

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        """Inverse of `get_parameters`."""
        for key, value in params.items():
            index, name = key.split(".", 1)
            stage = self.stages[int(index)]
            if name in ("m1", "m2"):
                if value.shape != getattr(stage, name).shape:
                    raise DimensionMismatchError(f"Parameter {key} has shape {value.shape}.")
                setattr(stage, name, np.array(value, dtype=np.float64))
            else:
                setattr(stage, name, float(value))

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def save(self, stem: PathLike) -> None:
        """
        Writes the matrices as one float64 blob (m1 then m2 of each stage, row-major)
        and the per-stage scalars, dimensions and provenance in the sidecar.
        """
        payload = np.concatenate([np.concatenate([s.m1.ravel(), s.m2.ravel()]) for s in self.stages])
        ArtifactStore().write(stem, payload, "network", {
            "K": self.n_stages,
            "dims": {"D": self.dim, "M": self.n_atoms, "P": self.n_unknowns},
            "stages": [s.scalars() for s in self.stages],
            "provenance": self.provenance,
        })

    @classmethod
    def load(cls, stem: PathLike, dictionary: Optional[Dictionary] = None) -> "Network":
        """
        Raises:
            MissingCheckpointError: If the checkpoint does not exist.
            DimensionMismatchError: If it does not fit `dictionary`.
        """
        store = ArtifactStore()
        bin_path, json_path = store.paths(stem)
        if not bin_path.exists() or not json_path.exists():
            raise MissingCheckpointError(f"Network checkpoint '{bin_path}' does not exist.")
        payload, sidecar = store.read(stem, "network")
        dim, n_atoms = sidecar["dims"]["D"], sidecar["dims"]["M"]
        p2, d2 = 2 * (dim + n_atoms), 2 * dim
        per_stage = p2 * d2 + p2 * p2
        if payload.size != per_stage * sidecar["K"]:
            raise DimensionMismatchError(f"Checkpoint '{bin_path}' holds {payload.size} values, "
                                         f"expected {per_stage * sidecar['K']}.")
        stages = []
        for k, scalars in enumerate(sidecar["stages"]):
            block = payload[k * per_stage:(k + 1) * per_stage]
            stages.append(StageParams(m1=block[:p2 * d2].reshape(p2, d2).copy(),
                                      m2=block[p2 * d2:].reshape(p2, p2).copy(), **scalars))
        network = cls(stages, dim, n_atoms, sidecar.get("provenance"))
        if dictionary is not None:
            network.check_dictionary(dictionary)
        return network

    def check_dictionary(self, dictionary: Dictionary) -> None:
        if (self.dim, self.n_atoms) != (dictionary.dim, dictionary.n_atoms):
            raise DimensionMismatchError(
                f"Network expects (D, M) = {(self.dim, self.n_atoms)}, dictionary has "
                f"{(dictionary.dim, dictionary.n_atoms)}.")
        expected = self.provenance.get("dictionary_hash")
        if expected and expected != dictionary.hash:
            raise DimensionMismatchError(
                f"Network was initialized from dictionary {expected[:12]}, not {dictionary.hash[:12]}.")


def init_network(n_stages: int, dictionary: Dictionary, params: Optional[SolverParams] = None) -> Network:
    """
    Builds K identical stages equivalent to K ADMM iterations.

    M1 = stack_matrix(P A^H) and M2 = stack_matrix(rho P) with P = (A^H A + rho I)^-1;
    thresholds are lambda / rho, so rho exists only at initialization.

    Raises:
        DomainError: If n_stages < 1.
    """
    if n_stages < 1:
        raise DomainError(f"A network needs K >= 1 stages, got {n_stages}.")
    params = params or SolverParams()
    cache = precompute(dictionary.a_aug, params.rho, n_image=dictionary.n_atoms)
    m1 = stack_matrix(cache.p_a_h)
    m2 = stack_matrix(params.rho * cache.p_mat)
    stages = [
        StageParams(m1=m1.copy(), m2=m2.copy(), alpha=params.alpha, eta=params.eta,
                    lambda1=params.lambda1 / params.rho, lambda2=params.lambda2 / params.rho)
        for _ in range(n_stages)
    ]
    provenance = {"init": params.to_dict(), "dictionary_hash": dictionary.hash}
    return Network(stages, dictionary.dim, dictionary.n_atoms, provenance)


class NetworkSolver(BaseSolver):
    """
    NetworkSolver Class

    Wraps a network for the benchmarks; every solve runs exactly K stages.
    """

    def __init__(self, network: Network, name: str = "admm_net"):
        super().__init__(network.dim, network.n_unknowns)
        self.network = network
        self.name = name

    def solve(self, y: np.ndarray, truth: Optional[np.ndarray] = None, record_trace: bool = True) -> SolveResult:
        y = self._check_measurements(y)
        x_hat, _ = self.network.forward(y, record_trace=False)
        batch = y.shape[:-1]
        iters = self.network.n_stages if not batch else np.full(batch, self.network.n_stages)
        converged = True if not batch else np.ones(batch, dtype=bool)
        return SolveResult(x_hat=x_hat, iters=iters, converged=converged)

    def describe(self) -> Dict[str, Any]:
        description = super().describe()
        description.update({"K": self.network.n_stages, "provenance": self.network.provenance})
        return description
