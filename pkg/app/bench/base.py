import csv
import io
import os
import platform
import time
import datetime
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# Import the base logging class.
from app.logger import AppLogger
from app.artifacts import array_sha256, config_hash, dump_json, load_json
from app.exceptions import (ArtifactIOError, DimensionMismatchError, InvalidConfigurationError, MissingCheckpointError,
                            UnhandledExperimentKindError)
from app.radar_model import Dictionary
from app.scene_gen import Dataset, SceneSpec, generate_dataset, sample_seed
from app.solvers.admm import SINGLE_PENALTY_DEFAULTS, AdmmSolver, SinglePenaltySolver, SolverParams, StoppingRule, nmse
from app.solvers.base import BaseSolver
from app.solvers.unfolded_net import Network, NetworkSolver, init_network
from app.trainer import TrainConfig, Trainer


EXPERIMENT_KINDS = ("stages", "snr", "sir", "w_sparsity", "b_sparsity", "image_demo", "runtime")

# Scene field swept by each sweep kind.
SWEEP_FIELDS = {"snr": "snr_db", "sir": "sir_db", "w_sparsity": "w_nnz", "b_sparsity": "b_nnz"}

METHODS = ("admm", "admm_fixed", "admm_net_matched", "admm_net_random", "admm_single_penalty", "cvx")

DEFAULT_METHODS = {
    "stages": ("admm_fixed", "admm_net_matched", "admm"),
    "snr": ("admm", "admm_net_matched", "admm_net_random", "cvx"),
    "sir": ("admm", "admm_net_matched", "admm_net_random", "cvx"),
    "w_sparsity": ("admm", "admm_net_matched", "admm_net_random", "cvx"),
    "b_sparsity": ("admm", "admm_net_matched", "admm_net_random", "cvx"),
    "image_demo": ("admm", "admm_single_penalty", "admm_net_matched"),
    "runtime": ("admm_net_matched", "admm", "admm_fixed", "cvx"),
}

# Fixed CSV column order of every report.
CSV_COLUMNS = ("sweep", "method", "nmse_db", "runtime_ms", "iters")

# Reason recorded for the convex-solver column, which has no implementation.
NOT_IMPLEMENTED = "not implemented"


@dataclass
class ExperimentConfig:
    """
    Settings of one benchmark run.

    Attributes:
        kind: One of EXPERIMENT_KINDS.
        sweep: Sweep values (stage counts, dB values or sparsities); the image demo uses one value.
        scene: Scene template; the swept field is replaced per point.
        solver: Two-penalty ADMM parameters, also used to initialize networks.
        single_penalty: Parameters of the single-penalty baseline.
        stopping: Stopping rule of the converged ADMM reference.
        n_stages: Stages of the networks and iterations of "admm_fixed" (stages sweeps use the sweep value).
        methods: Methods to evaluate, in report order.
        n_test: Test samples per sweep point.
        seed: Master seed of the test and training sets.
        networks: Checkpoint stems per network role ("matched", "random"); "{value}" and "{K}" are substituted.
        random_ranges: Ranges of the randomized training distribution.
        train_missing: Train absent networks instead of reporting an error row.
        n_train: Training set size when training on the fly.
        train: Training recipe when training on the fly.
        image: Image-demo settings (magnitudes, b_nnz, snr_db, sir_db, zero_interference).
        warmup: Untimed solves before runtime measurement.
        acceptance: Bounds checked by `check_acceptance`.
    """
    kind: str
    sweep: List[Any]
    scene: SceneSpec = field(default_factory=SceneSpec)
    solver: SolverParams = field(default_factory=SolverParams)
    single_penalty: SolverParams = SINGLE_PENALTY_DEFAULTS
    stopping: StoppingRule = field(default_factory=StoppingRule)
    n_stages: int = 5
    methods: Optional[Tuple[str, ...]] = None
    n_test: int = 1000
    seed: int = 0
    networks: Dict[str, str] = field(default_factory=dict)
    random_ranges: Optional[Dict[str, Tuple[float, float]]] = None
    train_missing: bool = False
    n_train: int = 200000
    train: TrainConfig = field(default_factory=TrainConfig)
    image: Dict[str, Any] = field(default_factory=dict)
    warmup: int = 10
    acceptance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise UnhandledExperimentKindError(f"Unknown experiment kind '{self.kind}'. Expected one of {EXPERIMENT_KINDS}.")
        if not self.sweep:
            raise InvalidConfigurationError(f"Experiment '{self.kind}' needs at least one sweep value.")
        if self.methods is None:
            self.methods = DEFAULT_METHODS[self.kind]
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise UnhandledExperimentKindError(f"Unknown method(s) {unknown}. Expected a subset of {METHODS}.")

    def provenance(self) -> Dict[str, Any]:
        data = {
            "kind": self.kind,
            "sweep": list(self.sweep),
            "scene": self.scene.to_dict(),
            "solver": self.solver.to_dict(),
            "single_penalty": self.single_penalty.to_dict(),
            "stopping": self.stopping.to_dict(),
            "n_stages": self.n_stages,
            "methods": list(self.methods),
            "n_test": self.n_test,
            "seed": self.seed,
            "networks": dict(self.networks),
            "random_ranges": {k: list(v) for k, v in (self.random_ranges or {}).items()},
            "train_missing": self.train_missing,
            "n_train": self.n_train,
            "train": self.train.to_dict(),
            "image": dict(self.image),
            "warmup": self.warmup,
            "acceptance": dict(self.acceptance),
        }
        data["config_hash"] = config_hash(data)
        return data


@dataclass
class ResultTable:
    """
    One row per (sweep value, method).

    Rows carry sweep, method, nmse_db, runtime_ms, iters and error (None, or the
    reason the method could not be evaluated). Metadata holds provenance.
    """
    rows: List[Dict[str, Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def add(self, sweep: Any, method: str, nmse_db: float = float("nan"), runtime_ms: float = float("nan"),
            iters: float = float("nan"), error: Optional[str] = None) -> None:
        self.rows.append({"sweep": sweep, "method": method, "nmse_db": float(nmse_db),
                          "runtime_ms": float(runtime_ms), "iters": float(iters), "error": error})

    def get(self, sweep: Any, method: str) -> Optional[Dict[str, Any]]:
        for row in self.rows:
            if row["sweep"] == sweep and row["method"] == method:
                return row
        return None

    def series(self, method: str, column: str = "nmse_db") -> List[Tuple[Any, float]]:
        """(sweep, value) pairs of a method in sweep order, skipping error rows."""
        return [(row["sweep"], row[column]) for row in self.rows if row["method"] == method and row["error"] is None]

    def to_json(self) -> str:
        return dump_json({"rows": self.rows, "metadata": self.metadata})

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        data = load_json(text)
        return cls(rows=data["rows"], metadata=data["metadata"])

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: ("" if isinstance(row[k], float) and np.isnan(row[k]) else row[k]) for k in CSV_COLUMNS})
        return buffer.getvalue()


def emit_report(table: ResultTable, path: Any, fmt: Optional[str] = None) -> Path:
    """
    Writes a report as JSON or CSV, chosen by `fmt` or the file extension.
    CSV reports get a `<path>.meta.json` sidecar with the metadata and the error rows.

    Raises:
        ArtifactIOError: If the report cannot be written.
    """
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower() or "json"
    if fmt not in ("json", "csv"):
        raise ArtifactIOError(f"Unsupported report format '{fmt}'. Use .json or .csv.")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path.write_text(table.to_json())
        else:
            path.write_text(table.to_csv())
            errors = [{"sweep": r["sweep"], "method": r["method"], "error": r["error"]}
                      for r in table.rows if r["error"] is not None]
            Path(f"{path}.meta.json").write_text(
                dump_json({"metadata": table.metadata, "errors": errors}))
    except OSError as e:
        raise ArtifactIOError(f"Failed to write report '{path}': {e}") from e
    return path


def check_acceptance(table: ResultTable, bounds: Dict[str, Any]) -> List[str]:
    """
    Evaluates acceptance bounds and returns one message per violation.

    Recognized bounds:
        margin_db: reference NMSE minus net NMSE at every sweep point (net better by at least this).
        monotone: {method: tol_db}; NMSE nonincreasing along the sweep within tol.
        nmse_range: {method: [low, high]} at every sweep point.
        iters_range: {method: [low, high]} on the mean iteration count.
        strict_order: methods from best to worst NMSE at every sweep point.
        speedup_min: reference runtime over net runtime at every point.
        fixed_ratio_max: |net runtime / admm_fixed runtime - 1| at every point.
        runtime_spread_max: (max - min) / mean of the net runtime over the sweep.
        net_method / reference_method: methods compared by the margin and runtime bounds.
    """
    net = bounds.get("net_method", "admm_net_matched")
    reference = bounds.get("reference_method", "admm")
    violations: List[str] = []

    def paired(method_a: str, method_b: str, column: str):
        b_values = dict(table.series(method_b, column))
        return [(s, a, b_values[s]) for s, a in table.series(method_a, column) if s in b_values]

    if "margin_db" in bounds:
        for s, ref, got in paired(reference, net, "nmse_db"):
            if ref - got < bounds["margin_db"]:
                violations.append(f"margin: {net} beats {reference} by {ref - got:.2f} dB < {bounds['margin_db']} dB at {s}.")
    for method, tol in (bounds.get("monotone") or {}).items():
        values = table.series(method)
        for (s0, v0), (s1, v1) in zip(values, values[1:]):
            if v1 > v0 + tol:
                violations.append(f"monotone: {method} NMSE rises from {v0:.2f} dB at {s0} to {v1:.2f} dB at {s1}.")
    for method, (low, high) in (bounds.get("nmse_range") or {}).items():
        for s, v in table.series(method):
            if not low <= v <= high:
                violations.append(f"nmse_range: {method} NMSE {v:.2f} dB outside [{low}, {high}] at {s}.")
    for method, (low, high) in (bounds.get("iters_range") or {}).items():
        for s, v in table.series(method, "iters"):
            if not low <= v <= high:
                violations.append(f"iters_range: {method} mean iterations {v:.1f} outside [{low}, {high}] at {s}.")
    order = bounds.get("strict_order")
    if order:
        for row in table.rows:
            if row["method"] != order[0]:
                continue
            values = [table.get(row["sweep"], m) for m in order]
            if any(v is None or v["error"] is not None for v in values):
                violations.append(f"strict_order: missing results for {order} at {row['sweep']}.")
            elif not all(a["nmse_db"] < b["nmse_db"] for a, b in zip(values, values[1:])):
                violations.append(f"strict_order: NMSE of {order} not strictly increasing at {row['sweep']}.")
    if "speedup_min" in bounds:
        for s, ref, got in paired(reference, net, "runtime_ms"):
            if ref / got < bounds["speedup_min"]:
                violations.append(f"speedup: {net} is {ref / got:.1f}x faster than {reference} < {bounds['speedup_min']}x at {s}.")
    if "fixed_ratio_max" in bounds:
        for s, got, fixed in paired(net, "admm_fixed", "runtime_ms"):
            if abs(got / fixed - 1.0) > bounds["fixed_ratio_max"]:
                violations.append(f"fixed_ratio: {net} runtime is {got / fixed:.2f}x admm_fixed at {s}.")
    if "runtime_spread_max" in bounds:
        runtimes = [v for _, v in table.series(net, "runtime_ms")]
        if runtimes:
            spread = (max(runtimes) - min(runtimes)) / np.mean(runtimes)
            if spread > bounds["runtime_spread_max"]:
                violations.append(f"runtime_spread: {net} runtime varies by {spread:.1%} across the sweep.")
    return violations


def thread_info() -> Dict[str, Any]:
    """Thread settings recorded next to runtime measurements."""
    variables = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
    return {"cpu_count": os.cpu_count(), "platform": platform.platform(),
            **{name: os.getenv(name) for name in variables}}


class BaseExperiment(ABC, AppLogger):
    """
    Abstract Base Class for the benchmark experiments.

    Holds the dictionary and the experiment settings, builds the shared test
    sets, resolves every method to a solver (loading or training networks as
    configured) and evaluates solvers on a test set.

    Inherits:
        ABC: Abstract Base Class for defining abstract methods.
        AppLogger: Provides logging functionalities (log_info, log_error, etc.).
    """

    def __init__(self, config: ExperimentConfig, dictionary: Dictionary):
        super().__init__()
        self.config = config
        self.dictionary = dictionary
        self._networks: Dict[str, Network] = {}

    @abstractmethod
    def run(self) -> ResultTable:
        """Runs the experiment and returns its results."""
        pass

    def _new_table(self) -> ResultTable:
        return ResultTable(metadata={
            "experiment": self.config.provenance(),
            "dictionary_hash": self.dictionary.hash,
            "radar": self.dictionary.config.to_dict(),
            "grid_sizes": list(self.dictionary.grid.sizes),
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "test_sets": {},
        })

    def test_set(self, spec: SceneSpec, index: int) -> Dataset:
        """Test set of sweep point `index`, shared by every method at that point."""
        return generate_dataset(self.dictionary, spec, self.config.n_test, sample_seed(self.config.seed, 2 * index))

    def _network_path(self, role: str, value: Any, n_stages: int) -> Optional[str]:
        template = self.config.networks.get(role)
        if not template:
            return None
        return template.format(value=value, K=n_stages)

    def _train_network(self, spec: SceneSpec, n_stages: int, seed: int) -> Network:
        self.log_info(f"Training a {n_stages}-stage network on {self.config.n_train} fresh samples.")
        dataset = generate_dataset(self.dictionary, spec, self.config.n_train, seed)
        net = init_network(n_stages, self.dictionary, self.config.solver)
        net, _ = Trainer(self.config.train).train(net, dataset)
        return net

    def network(self, role: str, value: Any, index: int, n_stages: int, spec: SceneSpec) -> Network:
        """
        Loads the network of a role ("matched" or "random") for a sweep point, or
        trains it when `train_missing` is set.

        Raises:
            MissingCheckpointError: If the checkpoint is absent and training on the fly is off.
        """
        path = self._network_path(role, value, n_stages)
        key = f"{role}:{path or value}:{n_stages}"
        if key in self._networks:
            return self._networks[key]
        try:
            if path is None:
                raise MissingCheckpointError(f"No checkpoint configured for the '{role}' network.")
            net = Network.load(path, self.dictionary)
            if net.n_stages != n_stages:
                raise DimensionMismatchError(f"Checkpoint '{path}' has {net.n_stages} stages, expected {n_stages}.")
        except MissingCheckpointError:
            if not self.config.train_missing:
                raise
            if role == "random":
                if not self.config.random_ranges:
                    raise MissingCheckpointError("Training the 'random' network needs experiment.random_ranges.")
                spec = replace(self.config.scene, randomize=dict(self.config.random_ranges))
                seed = sample_seed(self.config.seed + 1, 0)
            else:
                seed = sample_seed(self.config.seed, 2 * index + 1)
            net = self._train_network(spec, n_stages, seed)
            if path is not None:
                net.save(path)
        self._networks[key] = net
        return net

    def solver_for(self, method: str, value: Any, index: int, spec: SceneSpec, n_stages: int) -> BaseSolver:
        """
        Builds the solver of a method at a sweep point.

        Raises:
            NotImplementedError: For the convex-solver baseline.
            MissingCheckpointError: If a network cannot be resolved.
        """
        if method == "admm":
            return AdmmSolver(self.dictionary, self.config.solver, self.config.stopping)
        if method == "admm_fixed":
            stopping = StoppingRule(mode="fixed_iters", tol=self.config.stopping.tol, max_iters=n_stages)
            solver = AdmmSolver(self.dictionary, self.config.solver, stopping)
            solver.name = "admm_fixed"
            return solver
        if method == "admm_single_penalty":
            return SinglePenaltySolver(self.dictionary, self.config.single_penalty, self.config.stopping)
        if method in ("admm_net_matched", "admm_net_random"):
            role = "matched" if method == "admm_net_matched" else "random"
            return NetworkSolver(self.network(role, value, index, n_stages, spec), name=method)
        raise NotImplementedError(NOT_IMPLEMENTED)

    def evaluate(self, solver: BaseSolver, dataset: Dataset) -> Tuple[float, float, float]:
        """
        Solves the whole test set as one batch.

        Returns:
            Tuple[float, float, float]: NMSE in dB over x = [w; b], mean runtime per sample in ms, mean iterations.
        """
        start = time.perf_counter()
        result = solver.solve(dataset.y, truth=dataset.x, record_trace=False)
        elapsed = time.perf_counter() - start
        return nmse(result.x_hat, dataset.x), elapsed * 1e3 / len(dataset), result.mean_iters

    def evaluate_timed(self, solver: BaseSolver, dataset: Dataset) -> Tuple[float, float, float]:
        """
        Solves the test set one sample at a time after `warmup` untimed solves.

        Returns:
            Tuple[float, float, float]: NMSE in dB, mean wall-clock per sample in ms, mean iterations.
        """
        x_true = dataset.x
        for i in range(min(self.config.warmup, len(dataset))):
            solver.solve(dataset.y[i], truth=x_true[i], record_trace=False)
        estimates, iters, elapsed = [], [], 0.0
        for i in range(len(dataset)):
            start = time.perf_counter()
            result = solver.solve(dataset.y[i], truth=x_true[i], record_trace=False)
            elapsed += time.perf_counter() - start
            estimates.append(result.x_hat)
            iters.append(result.iters)
        return nmse(np.stack(estimates), x_true), elapsed * 1e3 / len(dataset), float(np.mean(iters))

    def run_point(self, table: ResultTable, value: Any, index: int, spec: SceneSpec, dataset: Dataset,
                  n_stages: int, timed: bool = False) -> None:
        """
        Evaluates every configured method on one shared test set and appends the rows.

        The measurements are hashed as each solver receives them and recorded per
        method under `test_sets`; a solver that alters them in place fails the point.
        """
        digests = table.metadata["test_sets"].setdefault(str(value), {})
        for method in self.config.methods:
            try:
                solver = self.solver_for(method, value, index, spec, n_stages)
            except NotImplementedError:
                table.add(value, method, error=NOT_IMPLEMENTED)
                continue
            except (MissingCheckpointError, DimensionMismatchError, ArtifactIOError) as e:
                self.log_warning(f"{method} at {value}: {e}")
                table.add(value, method, error=str(e))
                continue
            digests[method] = array_sha256(dataset.y)
            if len(set(digests.values())) > 1:
                raise DimensionMismatchError(f"Test set of sweep point {value} changed before {method} ran.")
            nmse_db, runtime_ms, iters = (self.evaluate_timed if timed else self.evaluate)(solver, dataset)
            table.add(value, method, nmse_db, runtime_ms, iters)
            self.log_info(f"{self.config.kind} {value}: {method} NMSE {nmse_db:.2f} dB, "
                          f"{runtime_ms:.3f} ms/sample, {iters:.1f} iterations.")
