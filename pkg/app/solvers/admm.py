"""
Relaxed two-penalty complex ADMM for

    min_x  1/2 ||y - A x||^2 + lambda1 ||w||_1 + lambda2 ||b||_1,   x = [w; b], A = [Phi | I],

its single-penalty baseline on A = Phi, the stopping rules and the NMSE metric.

Vectors are rows: a batch of B measurements has shape (B, D) and every
update reads the same for a single measurement of shape (D,).
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.exceptions import DimensionMismatchError, DomainError, SolverError, UnhandledExperimentKindError
from app.radar_model import Dictionary
from app.solvers.base import BaseSolver, SolveResult


# Reported NMSE for exact recovery.
NMSE_FLOOR_DB: float = -120.0

ORACLE_MODES = ("oracle", "oracle_linear")
STOPPING_MODES = ORACLE_MODES + ("fixed_iters", "residual")


@dataclass(frozen=True)
class SolverParams:
    """
    ADMM parameters. Defaults are the cross-validated two-penalty values.

    Attributes:
        rho: Penalty parameter.
        alpha: Over-relaxation parameter in [0, 2].
        eta: Dual step size.
        lambda1: Image sparsity weight.
        lambda2: Interference sparsity weight.
    """
    rho: float = 0.01
    alpha: float = 1.5
    eta: float = 1.0
    lambda1: float = 0.01
    lambda2: float = 0.005

    def __post_init__(self):
        for name in ("rho", "eta", "lambda1", "lambda2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"SolverParams.{name} must be > 0, got {getattr(self, name)}.")
        if not 0.0 <= self.alpha <= 2.0:
            raise DomainError(f"SolverParams.alpha must lie in [0, 2], got {self.alpha}.")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SolverParams":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


# Single-penalty baseline; lambda2 is unused there.
SINGLE_PENALTY_DEFAULTS = SolverParams(rho=0.5, alpha=1.5, eta=1.0, lambda1=0.5, lambda2=0.5)


@dataclass(frozen=True)
class StoppingRule:
    """
    Attributes:
        mode: "oracle" ((NMSE_dB(k) - NMSE_dB(k-1)) / NMSE_dB(k-1) < tol,
            needs the truth), "oracle_linear" (|e(k) - e(k-1)| / e(k-1) < tol
            on linear NMSE), "fixed_iters" (exactly max_iters iterations) or
            "residual" (primal and dual residuals below absolute/relative
            tolerance tol). The oracle modes only test a sample once two
            consecutive estimates are nonzero.
        tol: Tolerance of the oracle and residual modes.
        max_iters: Iteration cap.
    """
    mode: str = "oracle"
    tol: float = 1e-6
    max_iters: int = 2000

    def __post_init__(self):
        if self.mode not in STOPPING_MODES:
            raise UnhandledExperimentKindError(f"Unknown stopping mode '{self.mode}'. Expected one of {STOPPING_MODES}.")
        if not self.tol > 0:
            raise DomainError(f"StoppingRule.tol must be > 0, got {self.tol}.")
        if self.max_iters < 1:
            raise DomainError(f"StoppingRule.max_iters must be >= 1, got {self.max_iters}.")

    @classmethod
    def parse(cls, text: str, tol: float = 1e-6, max_iters: int = 2000) -> "StoppingRule":
        """
        Parses the command-line form "oracle", "oracle_linear", "residual" or "fixed:K".
        """
        if text.startswith("fixed:"):
            try:
                iters = int(text.split(":", 1)[1])
            except ValueError as e:
                raise DomainError(f"Invalid fixed iteration count in '{text}'.") from e
            return cls(mode="fixed_iters", tol=tol, max_iters=iters)
        if text in ORACLE_MODES + ("residual",):
            return cls(mode=text, tol=tol, max_iters=max_iters)
        raise UnhandledExperimentKindError(
            f"Unknown stopping rule '{text}'. Expected oracle, oracle_linear, residual or fixed:K.")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AdmmCache:
    """
    Factorization shared by every solve with the same A and rho.

    Attributes:
        p_mat: (A^H A + rho I)^-1, Hermitian, shape (P, P).
        a_aug: The matrix A, shape (D, P).
        a_h: A^H, shape (P, D).
        p_a_h: p_mat @ A^H, shape (P, D).
        rho: Penalty the factorization was built for.
        n_image: Number of leading coordinates thresholded with lambda1.
    """
    p_mat: np.ndarray
    a_aug: np.ndarray
    a_h: np.ndarray
    p_a_h: np.ndarray
    rho: float
    n_image: int

    @property
    def dim(self) -> int:
        return self.a_aug.shape[0]

    @property
    def n_unknowns(self) -> int:
        return self.a_aug.shape[1]


@dataclass
class AdmmState:
    """Iterates x, z, u, xi of shape (P,) or (B, P); z and u start at zero."""
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    iter: int = 0

    @classmethod
    def zeros(cls, n_unknowns: int, batch: Optional[int] = None) -> "AdmmState":
        shape = (n_unknowns,) if batch is None else (batch, n_unknowns)
        return cls(*(np.zeros(shape, dtype=np.complex128) for _ in range(4)))


@dataclass
class AdmmResult:
    """
    Attributes:
        x_hat: Final sparse iterate z.
        trace: Rows keyed by TRACE_COLUMNS; NMSE is NaN when no truth was given.
        iters: Iterations run, per sample for a batch.
        converged: Whether the stopping rule fired before max_iters.
        runtime_s: Wall-clock time of the iteration loop.
    """
    x_hat: np.ndarray
    trace: List[Dict[str, float]] = field(default_factory=list)
    iters: Any = 0
    converged: Any = False
    runtime_s: float = 0.0


def soft_threshold(a: np.ndarray, kappa) -> np.ndarray:
    """
    Complex soft-thresholding (a / |a|) max(|a| - kappa, 0), 0 where a = 0.
    `kappa` is a scalar or broadcasts against `a`.
    """
    kappa = np.asarray(kappa, dtype=np.float64)
    if np.any(kappa < 0):
        raise DomainError("Soft-threshold level must be >= 0.")
    magnitude = np.abs(a)
    shrunk = np.maximum(magnitude - kappa, 0.0)
    scale = np.divide(shrunk, magnitude, out=np.zeros_like(magnitude), where=magnitude > 0)
    return a * scale


def precompute(a_aug: np.ndarray, rho: float, n_image: Optional[int] = None) -> AdmmCache:
    """
    Factors A^H A + rho I and caches its inverse.

    Args:
        a_aug: The matrix A, shape (D, P).
        rho: Penalty, > 0.
        n_image: Leading coordinates thresholded with lambda1; defaults to P - D
            (the image part of A = [Phi | I]).

    Raises:
        DomainError: If rho <= 0.
        SolverError: If the Cholesky factorization fails.
    """
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}.")
    a_aug = np.asarray(a_aug, dtype=np.complex128)
    rows, cols = a_aug.shape
    if n_image is None:
        n_image = cols - rows
    if not 0 <= n_image <= cols:
        raise DimensionMismatchError(f"n_image = {n_image} does not fit a matrix with {cols} columns.")
    a_h = a_aug.conj().T
    gram = a_h @ a_aug + rho * np.eye(cols)
    try:
        factor = cho_factor(gram)
        p_mat = cho_solve(factor, np.eye(cols, dtype=np.complex128))
    except LinAlgError as e:
        raise SolverError(f"Cholesky factorization of A^H A + rho I failed for rho = {rho}: {e}") from e
    p_mat = (p_mat + p_mat.conj().T) / 2.0
    p_a_h = p_mat @ a_h
    for array in (p_mat, a_h, p_a_h):
        array.setflags(write=False)
    return AdmmCache(p_mat=p_mat, a_aug=a_aug, a_h=a_h, p_a_h=p_a_h, rho=float(rho), n_image=int(n_image))


def thresholds(params: SolverParams, cache: AdmmCache) -> np.ndarray:
    """Per-coordinate levels: lambda1/rho on the image part, lambda2/rho on the rest."""
    kappa = np.full(cache.n_unknowns, params.lambda2 / params.rho)
    kappa[:cache.n_image] = params.lambda1 / params.rho
    return kappa


def _check_cache(params: SolverParams, cache: AdmmCache) -> None:
    if not np.isclose(params.rho, cache.rho, rtol=1e-12, atol=0.0):
        raise DomainError(f"Cache was built for rho = {cache.rho}, parameters use rho = {params.rho}.")


def admm_step(state: AdmmState, y: np.ndarray, params: SolverParams, cache: AdmmCache,
              p_a_h_y: Optional[np.ndarray] = None, kappa: Optional[np.ndarray] = None) -> AdmmState:
    """
    One relaxed ADMM iteration:

        x  <- P (A^H y + rho (z - u))
        xi <- alpha x + (1 - alpha) z
        z  <- S_kappa(xi + u)
        u  <- u + eta (xi - z)

    Args:
        state: Current iterates.
        y: Measurements matching the state's batch shape.
        params: ADMM parameters; rho must match the cache.
        cache: Factorization from `precompute`.
        p_a_h_y: Optional precomputed P A^H y.
        kappa: Optional precomputed thresholds.

    Returns:
        AdmmState: The next iterates.
    """
    if p_a_h_y is None:
        p_a_h_y = y @ cache.p_a_h.T
    if kappa is None:
        kappa = thresholds(params, cache)
    x = p_a_h_y + params.rho * ((state.z - state.u) @ cache.p_mat.T)
    xi = params.alpha * x + (1.0 - params.alpha) * state.z
    z = soft_threshold(xi + state.u, kappa)
    u = state.u + params.eta * (xi - z)
    return AdmmState(x=x, z=z, u=u, xi=xi, iter=state.iter + 1)


def objective(z: np.ndarray, y: np.ndarray, params: SolverParams, cache: AdmmCache) -> np.ndarray:
    """1/2 ||y - A z||^2 + lambda1 ||z_1||_1 + lambda2 ||z_2||_1, per sample."""
    residual = y - z @ cache.a_aug.T
    image, rest = z[..., :cache.n_image], z[..., cache.n_image:]
    return (0.5 * np.sum(np.abs(residual) ** 2, axis=-1)
            + params.lambda1 * np.sum(np.abs(image), axis=-1)
            + params.lambda2 * np.sum(np.abs(rest), axis=-1))


def nmse_ratio(x_hat: np.ndarray, x_true: np.ndarray) -> np.ndarray:
    """
    Per-sample ||x - x_hat||^2 / ||x||^2.

    Raises:
        DomainError: If any ground truth is zero.
    """
    x_hat = np.asarray(x_hat)
    x_true = np.asarray(x_true)
    if x_hat.shape != x_true.shape:
        raise DimensionMismatchError(f"Estimate shape {x_hat.shape} does not match truth shape {x_true.shape}.")
    energy = np.sum(np.abs(x_true) ** 2, axis=-1)
    if np.any(energy == 0):
        raise DomainError("NMSE is undefined for a zero ground truth.")
    return np.sum(np.abs(x_true - x_hat) ** 2, axis=-1) / energy


def to_db(ratio: float) -> float:
    """10 log10 of a linear NMSE, floored at NMSE_FLOOR_DB."""
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return float(max(10.0 * np.log10(ratio), NMSE_FLOOR_DB))


def nmse(x_hat: np.ndarray, x_true: np.ndarray) -> float:
    """
    NMSE in dB. For a batch the per-sample ratios are averaged before the log.
    """
    return to_db(float(np.mean(nmse_ratio(x_hat, x_true))))


def _residual_done(state: AdmmState, z_prev: np.ndarray, rho: float, tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    primal = np.linalg.norm(state.x - state.z, axis=-1)
    dual = rho * np.linalg.norm(state.z - z_prev, axis=-1)
    scale = np.sqrt(state.x.shape[-1]) * tol
    eps_primal = scale + tol * np.maximum(np.linalg.norm(state.x, axis=-1), np.linalg.norm(state.z, axis=-1))
    eps_dual = scale + tol * rho * np.linalg.norm(state.u, axis=-1)
    return (primal <= eps_primal) & (dual <= eps_dual), primal, dual


def _ratio_db(ratio: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(ratio, 10.0 ** (NMSE_FLOOR_DB / 10.0)))


def oracle_done(mode: str, ratio: np.ndarray, previous: np.ndarray, ready: np.ndarray, tol: float) -> np.ndarray:
    """
    Oracle stopping test between successive linear NMSE values.

    Args:
        mode: "oracle" or "oracle_linear".
        ratio: Linear NMSE of the current estimates.
        previous: Linear NMSE of the previous estimates.
        ready: Samples whose current and previous estimates are both nonzero;
            the others never stop.
        tol: Tolerance.

    Returns:
        np.ndarray: Boolean mask of the samples that stop.
    """
    if mode == "oracle_linear":
        change = np.abs(ratio - previous)
        return ready & ((change < tol * previous) | (previous == 0))
    db_now, db_prev = _ratio_db(ratio), _ratio_db(previous)
    # dB NMSE must be negative for the relative change to keep its sign
    ready = ready & (db_prev < 0)
    relative = np.divide(db_now - db_prev, db_prev, out=np.full_like(db_now, np.inf), where=ready)
    return ready & (relative < tol)


def admm_solve(y: np.ndarray, cache: AdmmCache, params: Optional[SolverParams] = None,
               stopping: Optional[StoppingRule] = None, truth: Optional[np.ndarray] = None,
               record_trace: bool = True) -> AdmmResult:
    """
    Runs ADMM from z = u = 0 until the stopping rule fires or max_iters is reached.

    For a batch each sample is frozen at its own stopping iteration. Trace rows
    describe the whole batch: NMSE averaged as in `nmse`, objective and
    residuals averaged over samples.

    Args:
        y: Measurements, shape (D,) or (B, D).
        cache: Factorization of A^H A + rho I.
        params: ADMM parameters; defaults to SolverParams().
        stopping: Stopping rule; defaults to oracle stopping with tol 1e-6.
        truth: Ground truth of the thresholded unknowns, same leading shape as y.
        record_trace: Whether to compute the per-iteration diagnostics.

    Returns:
        AdmmResult: z at termination with its trace. Reaching max_iters is
        reported through `converged`, not raised.

    Raises:
        DomainError: If oracle stopping is requested without ground truth.
    """
    params = params or SolverParams()
    stopping = stopping or StoppingRule()
    _check_cache(params, cache)
    single = np.ndim(y) == 1
    ys = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    if ys.shape[1] != cache.dim:
        raise DimensionMismatchError(f"Measurements have length {ys.shape[1]}, the cache expects D = {cache.dim}.")
    truths = None
    if truth is not None:
        truths = np.atleast_2d(np.asarray(truth, dtype=np.complex128))
        if truths.shape != (ys.shape[0], cache.n_unknowns):
            raise DimensionMismatchError(
                f"Ground truth has shape {truths.shape}, expected {(ys.shape[0], cache.n_unknowns)}.")
    if stopping.mode in ORACLE_MODES and truths is None:
        raise DomainError("Oracle stopping needs the ground truth.")

    batch = ys.shape[0]
    kappa = thresholds(params, cache)
    state = AdmmState.zeros(cache.n_unknowns, batch)
    active = np.ones(batch, dtype=bool)
    iters = np.zeros(batch, dtype=np.int64)
    converged = np.zeros(batch, dtype=bool)
    previous = np.ones(batch)
    nonzero = np.zeros(batch, dtype=bool)
    trace: List[Dict[str, float]] = []

    start = time.perf_counter()
    p_a_h_y = ys @ cache.p_a_h.T
    for k in range(1, stopping.max_iters + 1):
        idx = np.flatnonzero(active)
        current = AdmmState(x=state.x[idx], z=state.z[idx], u=state.u[idx], xi=state.xi[idx], iter=k - 1)
        step = admm_step(current, ys[idx], params, cache, p_a_h_y=p_a_h_y[idx], kappa=kappa)
        state.x[idx], state.z[idx], state.u[idx], state.xi[idx] = step.x, step.z, step.u, step.xi
        iters[idx] = k

        if stopping.mode in ORACLE_MODES:
            ratio = nmse_ratio(step.z, truths[idx])
            current_nonzero = np.any(step.z != 0, axis=-1)
            done = oracle_done(stopping.mode, ratio, previous[idx], nonzero[idx] & current_nonzero, stopping.tol)
            previous[idx] = ratio
            nonzero[idx] = current_nonzero
        elif stopping.mode == "residual":
            done, _, _ = _residual_done(step, current.z, params.rho, stopping.tol)
        else:
            done = np.full(idx.size, k >= stopping.max_iters)
        converged[idx[done]] = True
        active[idx[done]] = False

        if record_trace:
            primal = np.linalg.norm(step.x - step.z, axis=-1)
            dual = params.rho * np.linalg.norm(step.z - current.z, axis=-1)
            trace.append({
                "iter": k,
                "nmse_db": nmse(state.z, truths) if truths is not None else float("nan"),
                "objective": float(np.mean(objective(state.z, ys, params, cache))),
                "primal_residual": float(np.mean(primal)),
                "dual_residual": float(np.mean(dual)),
            })
        if not active.any():
            break
    runtime = time.perf_counter() - start

    if single:
        return AdmmResult(x_hat=state.z[0], trace=trace, iters=int(iters[0]), converged=bool(converged[0]),
                          runtime_s=runtime)
    return AdmmResult(x_hat=state.z, trace=trace, iters=iters, converged=converged, runtime_s=runtime)


def precompute_single_penalty(phi: np.ndarray, rho: float) -> AdmmCache:
    """Factorization for the single-penalty model y = Phi w + e; every coordinate uses lambda1."""
    phi = np.asarray(phi)
    return precompute(phi, rho, n_image=phi.shape[1])


def admm_solve_single_penalty(y: np.ndarray, cache: AdmmCache, params: SolverParams = SINGLE_PENALTY_DEFAULTS,
                              stopping: Optional[StoppingRule] = None, truth_w: Optional[np.ndarray] = None,
                              record_trace: bool = True) -> AdmmResult:
    """
    Solves min 1/2 ||y - Phi w||^2 + lambda1 ||w||_1 with the same iteration,
    treating the interference as noise. `x_hat` of the result is the image estimate.
    """
    if cache.n_image != cache.n_unknowns:
        raise DimensionMismatchError("Single-penalty solving needs a cache from precompute_single_penalty.")
    return admm_solve(y, cache, params, stopping, truth_w, record_trace)


class AdmmSolver(BaseSolver):
    """
    AdmmSolver Class

    Two-penalty ADMM on A = [Phi | I] with a fixed parameter set. The
    factorization is computed once at construction and shared by every solve.
    """

    name = "admm"

    def __init__(self, dictionary: Dictionary, params: Optional[SolverParams] = None,
                 stopping: Optional[StoppingRule] = None):
        super().__init__(dictionary.dim, dictionary.n_unknowns)
        self.params = params or SolverParams()
        self.stopping = stopping or StoppingRule()
        self.cache = precompute(dictionary.a_aug, self.params.rho, n_image=dictionary.n_atoms)

    def solve(self, y: np.ndarray, truth: Optional[np.ndarray] = None, record_trace: bool = True) -> SolveResult:
        y = self._check_measurements(y)
        result = admm_solve(y, self.cache, self.params, self.stopping, truth, record_trace)
        n_converged = int(np.sum(result.converged))
        self.log_debug(f"{self.name}: {np.size(result.iters)} solve(s), mean {np.mean(result.iters):.1f} iterations, "
                       f"{n_converged} converged, {result.runtime_s * 1e3:.2f} ms.")
        if n_converged < np.size(result.converged):
            self.log_warning(f"{self.name}: {np.size(result.converged) - n_converged} solve(s) reached "
                             f"max_iters = {self.stopping.max_iters} without converging.")
        return SolveResult(x_hat=result.x_hat, iters=result.iters, converged=result.converged, trace=result.trace)

    def describe(self) -> Dict[str, Any]:
        description = super().describe()
        description.update({"params": self.params.to_dict(), "stopping": self.stopping.to_dict()})
        return description


class SinglePenaltySolver(BaseSolver):
    """
    SinglePenaltySolver Class

    Baseline that recovers the image only, from y = Phi w + e. Its estimate of
    x = [w; b] is [w_hat; 0].
    """

    name = "admm_single_penalty"

    def __init__(self, dictionary: Dictionary, params: SolverParams = SINGLE_PENALTY_DEFAULTS,
                 stopping: Optional[StoppingRule] = None):
        super().__init__(dictionary.dim, dictionary.n_unknowns)
        self.n_atoms = dictionary.n_atoms
        self.params = params
        self.stopping = stopping or StoppingRule()
        self.cache = precompute_single_penalty(dictionary.phi, params.rho)

    def solve(self, y: np.ndarray, truth: Optional[np.ndarray] = None, record_trace: bool = True) -> SolveResult:
        y = self._check_measurements(y)
        truth_w = None if truth is None else np.asarray(truth)[..., :self.n_atoms]
        result = admm_solve_single_penalty(y, self.cache, self.params, self.stopping, truth_w, record_trace)
        pad = np.zeros(result.x_hat.shape[:-1] + (self.n_unknowns - self.n_atoms,), dtype=np.complex128)
        self.log_debug(f"{self.name}: mean {np.mean(result.iters):.1f} iterations.")
        return SolveResult(x_hat=np.concatenate([result.x_hat, pad], axis=-1), iters=result.iters,
                           converged=result.converged, trace=result.trace)

    def describe(self) -> Dict[str, Any]:
        description = super().describe()
        description.update({"params": self.params.to_dict(), "stopping": self.stopping.to_dict()})
        return description
