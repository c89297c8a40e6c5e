from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

# Import the base logging class.
from app.logger import AppLogger
from app.exceptions import DimensionMismatchError


# Columns of every per-iteration trace row.
TRACE_COLUMNS = ("iter", "nmse_db", "objective", "primal_residual", "dual_residual")


@dataclass
class SolveResult:
    """
    Output of a solver on one measurement or a batch.

    Attributes:
        x_hat: Estimate of x = [w; b], shape (P,) or (B, P).
        iters: Iterations (or stages) used, an int or a (B,) array.
        converged: Whether the stopping rule fired, a bool or a (B,) array.
        trace: Per-iteration rows keyed by TRACE_COLUMNS (empty when tracing is off).
    """
    x_hat: np.ndarray
    iters: Union[int, np.ndarray]
    converged: Union[bool, np.ndarray]
    trace: List[Dict[str, float]] = field(default_factory=list)

    @property
    def mean_iters(self) -> float:
        return float(np.mean(self.iters))


class BaseSolver(ABC, AppLogger):
    """
    Abstract Base Class for the recovery methods.

    Every concrete solver maps measurements y (one of shape (D,) or a batch of
    shape (B, D)) to an estimate of x = [w; b], so that the benchmarks can time
    and score methods through one interface.

    Inherits:
        ABC: Abstract Base Class for defining abstract methods.
        AppLogger: Provides logging functionalities (log_info, log_error, etc.).
    """

    # Short method name used in reports.
    name: str = "base"

    def __init__(self, dim: int, n_unknowns: int):
        """
        Args:
            dim: Measurement dimension D.
            n_unknowns: Length P of x = [w; b].
        """
        super().__init__()
        self.dim = dim
        self.n_unknowns = n_unknowns

    def _check_measurements(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.complex128)
        if y.ndim not in (1, 2) or y.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"{self.name}: measurements have shape {y.shape}, expected (D,) or (B, D) with D = {self.dim}.")
        return y

    @abstractmethod
    def solve(self, y: np.ndarray, truth: Optional[np.ndarray] = None, record_trace: bool = True) -> SolveResult:
        """
        Estimates x = [w; b] from `y`.

        Args:
            y: Measurements, shape (D,) or (B, D).
            truth: Ground truth x, needed by oracle stopping and NMSE traces.
            record_trace: Whether to record per-iteration diagnostics.
        """
        pass

    def describe(self) -> Dict[str, Any]:
        """Settings recorded in report metadata."""
        return {"name": self.name, "D": self.dim, "P": self.n_unknowns}


def select_solver(kind: str, **kwargs: Any) -> BaseSolver:
    """
    Selects the concrete solver class for a method kind.

    Args:
        kind: "admm", "admm_single_penalty" or "admm_net".
        **kwargs: Constructor arguments of the selected class.

    Raises:
        UnhandledExperimentKindError: If the kind is unknown.
    """
    # Imported here since the concrete modules import this one.
    from app.solvers.admm import AdmmSolver, SinglePenaltySolver
    from app.solvers.unfolded_net import NetworkSolver
    from app.exceptions import UnhandledExperimentKindError

    solvers = {
        "admm": AdmmSolver,
        "admm_single_penalty": SinglePenaltySolver,
        "admm_net": NetworkSolver,
    }
    if kind not in solvers:
        raise UnhandledExperimentKindError(f"Unknown solver kind '{kind}'. Expected one of {sorted(solvers)}.")
    return solvers[kind](**kwargs)
