"""
Supervised training of the ADMM-Net.

The loss is the batch mean of ||x - x_hat||^2. Gradients are computed by a
hand-written reverse pass through the stage equations in stacked real form,
and parameters are updated with bias-corrected Adam on a step schedule.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import DimensionMismatchError, DomainError, SolverError, TrainingDivergenceError
from app.logger import AppLogger
from app.scene_gen import Dataset
from app.solvers.admm import nmse_ratio, to_db
from app.solvers.unfolded_net import ForwardTrace, Network, SCALAR_FIELDS, stack


@dataclass(frozen=True)
class TrainConfig:
    """
    Attributes:
        epochs: Number of passes over the training set.
        batch_size: Samples per mini-batch.
        lr0: Initial learning rate.
        lr_decay: Factor applied every lr_period epochs.
        lr_period: Epochs between decays.
        adam_beta1: First-moment decay.
        adam_beta2: Second-moment decay.
        adam_eps: Denominator offset.
        seed: Seed of the shuffling and validation split.
        val_fraction: Share of the dataset held out for validation, 0 to disable.
    """
    epochs: int = 45
    batch_size: int = 500
    lr0: float = 1e-3
    lr_decay: float = 0.1
    lr_period: int = 15
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr_period"):
            if getattr(self, name) < 1:
                raise DomainError(f"TrainConfig.{name} must be >= 1, got {getattr(self, name)}.")
        for name in ("lr0", "lr_decay", "adam_eps"):
            if not getattr(self, name) > 0:
                raise DomainError(f"TrainConfig.{name} must be > 0, got {getattr(self, name)}.")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise DomainError(f"TrainConfig.{name} must lie in [0, 1), got {getattr(self, name)}.")
        if self.lr_period > self.epochs:
            raise DomainError(f"lr_period ({self.lr_period}) must not exceed epochs ({self.epochs}).")
        if not 0.0 <= self.val_fraction < 1.0:
            raise DomainError(f"val_fraction must lie in [0, 1), got {self.val_fraction}.")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "TrainConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class AdamState:
    """Moment accumulators keyed like `Network.get_parameters`, and the timestep."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


@dataclass
class TrainHistory:
    """Per-epoch training record; every list has one entry per completed epoch."""
    epoch: List[int] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    val_nmse_db: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def append(self, epoch: int, loss_value: float, val_db: float, lr: float, seconds: float) -> None:
        self.epoch.append(epoch)
        self.loss.append(loss_value)
        self.val_nmse_db.append(val_db)
        self.lr.append(lr)
        self.seconds.append(seconds)

    def rows(self) -> List[Dict[str, float]]:
        """Rows for the history CSV: epoch, loss, val_nmse_db, lr, seconds."""
        return [
            {"epoch": e, "loss": l, "val_nmse_db": v, "lr": r, "seconds": s}
            for e, l, v, r, s in zip(self.epoch, self.loss, self.val_nmse_db, self.lr, self.seconds)
        ]


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """Step schedule for 1-based epochs: lr0 * lr_decay ** ((epoch - 1) // lr_period)."""
    return config.lr0 * config.lr_decay ** ((epoch - 1) // config.lr_period)


def loss(outputs: np.ndarray, truths: np.ndarray) -> float:
    """
    (1/B) sum_i ||x_i - x_hat_i||^2 over a batch of shape (B, P).

    Raises:
        DomainError: If the batch is empty.
        DimensionMismatchError: If the shapes differ.
    """
    outputs = np.atleast_2d(outputs)
    truths = np.atleast_2d(truths)
    if outputs.shape != truths.shape:
        raise DimensionMismatchError(f"Output shape {outputs.shape} does not match truth shape {truths.shape}.")
    if outputs.shape[0] == 0:
        raise DomainError("Loss of an empty batch is undefined.")
    return float(np.sum(np.abs(truths - outputs) ** 2) / outputs.shape[0])


def _threshold_backward(a: np.ndarray, g: np.ndarray, kappa: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reverse pass of the stacked complex soft threshold.

    For a coordinate pair a_i = (re, im) with r = |a_i| > kappa_i the Jacobian is
    (1 - kappa/r) I + (kappa / r^3) a a^T and dS/dkappa = -a / r; every other
    coordinate, the r = kappa boundary included, has zero derivative.

    Returns:
        Tuple: Gradient w.r.t. the stacked input and w.r.t. kappa per complex coordinate.
    """
    n = a.shape[-1] // 2
    re, im = a[..., :n], a[..., n:]
    g_re, g_im = g[..., :n], g[..., n:]
    r = np.hypot(re, im)
    active = r > kappa
    safe_r = np.where(active, r, 1.0)
    inner = re * g_re + im * g_im
    coef = kappa / safe_r ** 3 * inner
    shrink = 1.0 - kappa / safe_r
    ga_re = np.where(active, shrink * g_re + coef * re, 0.0)
    ga_im = np.where(active, shrink * g_im + coef * im, 0.0)
    g_kappa = np.where(active, -inner / safe_r, 0.0)
    return np.concatenate([ga_re, ga_im], axis=-1), g_kappa


def backward(net: Network, trace: ForwardTrace, truths: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Exact gradients of `loss` w.r.t. every stage parameter.

    Args:
        net: The network the trace was produced by.
        trace: Forward trace of the batch.
        truths: Complex ground truth, shape matching the network output.

    Returns:
        Dict[str, np.ndarray]: Gradients keyed like `Network.get_parameters`.
    """
    if len(trace.x) != net.n_stages:
        raise DimensionMismatchError(f"Trace has {len(trace.x)} stages, the network has {net.n_stages}.")
    t = np.atleast_2d(stack(truths))
    y = np.atleast_2d(trace.y)
    z_out = np.atleast_2d(trace.z[-1])
    if t.shape != z_out.shape:
        raise DimensionMismatchError(f"Truth shape {t.shape} does not match network output {z_out.shape}.")
    batch = z_out.shape[0]
    n_atoms = net.n_atoms

    grads: Dict[str, np.ndarray] = {}
    g_z = 2.0 / batch * (z_out - t)
    g_u = np.zeros_like(g_z)
    for k in reversed(range(net.n_stages)):
        stage = net.stages[k]
        x, xi, a = (np.atleast_2d(v[k]) for v in (trace.x, trace.xi, trace.a))
        z_prev, u_prev = np.atleast_2d(trace.z[k]), np.atleast_2d(trace.u[k])
        z = np.atleast_2d(trace.z[k + 1])

        # u = u_prev + eta (xi - z)
        grads[f"{k}.eta"] = np.asarray(np.sum(g_u * (xi - z)))
        g_xi = stage.eta * g_u
        g_z_total = g_z - stage.eta * g_u
        g_u_prev = g_u.copy()

        # z = S(a), a = xi + u_prev
        g_a, g_kappa = _threshold_backward(a, g_z_total, net.thresholds(stage))
        grads[f"{k}.lambda1"] = np.asarray(np.sum(g_kappa[:, :n_atoms]) if stage.lambda1 > 0 else 0.0)
        grads[f"{k}.lambda2"] = np.asarray(np.sum(g_kappa[:, n_atoms:]) if stage.lambda2 > 0 else 0.0)
        g_xi += g_a
        g_u_prev += g_a

        # xi = alpha x + (1 - alpha) z_prev
        grads[f"{k}.alpha"] = np.asarray(np.sum(g_xi * (x - z_prev)))
        g_x = stage.alpha * g_xi
        g_z_prev = (1.0 - stage.alpha) * g_xi

        # x = M1 y + M2 (z_prev - u_prev)
        d = z_prev - u_prev
        grads[f"{k}.m1"] = g_x.T @ y
        grads[f"{k}.m2"] = g_x.T @ d
        g_d = g_x @ stage.m2
        g_z = g_z_prev + g_d
        g_u = g_u_prev - g_d
    return grads


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              config: TrainConfig, lr: float) -> Dict[str, np.ndarray]:
    """
    One bias-corrected Adam update. Returns new parameter arrays; `state` is updated in place.
    """
    state.t += 1
    bias1 = 1.0 - config.adam_beta1 ** state.t
    bias2 = 1.0 - config.adam_beta2 ** state.t
    updated: Dict[str, np.ndarray] = {}
    for key, value in params.items():
        g = grads[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(value, dtype=np.float64)
            state.v[key] = np.zeros_like(value, dtype=np.float64)
        state.m[key] = config.adam_beta1 * state.m[key] + (1.0 - config.adam_beta1) * g
        state.v[key] = config.adam_beta2 * state.v[key] + (1.0 - config.adam_beta2) * g * g
        m_hat = state.m[key] / bias1
        v_hat = state.v[key] / bias2
        updated[key] = value - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return updated


def evaluate(net: Network, dataset: Dataset, batch_size: int = 1000) -> float:
    """NMSE in dB of the network over a dataset, ratios averaged over samples."""
    x_true = dataset.x
    ratios = []
    for start in range(0, len(dataset), batch_size):
        x_hat, _ = net.forward(dataset.y[start:start + batch_size], record_trace=False)
        ratios.append(nmse_ratio(x_hat, x_true[start:start + batch_size]))
    return to_db(float(np.mean(np.concatenate(ratios))))


class Trainer(AppLogger):
    """
    Trainer Class

    Runs mini-batch Adam over shuffled epochs. With a validation split the
    parameters of the best validation epoch are restored at the end,
    otherwise the final parameters are kept.

    It inherits logging capabilities from the AppLogger base class.
    """

    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config

    def _split(self, dataset: Dataset, rng: np.random.Generator) -> Tuple[Dataset, Optional[Dataset]]:
        if self.config.val_fraction == 0:
            return dataset, None
        order = rng.permutation(len(dataset))
        n_val = max(1, int(round(self.config.val_fraction * len(dataset))))
        if n_val >= len(dataset):
            raise DomainError(f"val_fraction {self.config.val_fraction} leaves no training samples.")
        return dataset.subset(np.sort(order[n_val:])), dataset.subset(np.sort(order[:n_val]))

    @staticmethod
    def _check_compatible(net: Network, dataset: Dataset) -> None:
        if dataset.w.shape[1] != net.n_atoms or dataset.y.shape[1] != net.dim:
            raise DimensionMismatchError(
                f"Dataset (M, D) = {(dataset.w.shape[1], dataset.y.shape[1])} does not fit the network "
                f"{(net.n_atoms, net.dim)}.")
        expected = net.provenance.get("dictionary_hash")
        if expected and expected != dataset.dictionary_hash:
            raise DimensionMismatchError(
                f"Dataset was generated against dictionary {dataset.dictionary_hash[:12]}, "
                f"the network against {expected[:12]}.")

    def train(self, net: Network, dataset: Dataset) -> Tuple[Network, TrainHistory]:
        """
        Trains `net` in place and returns it with its history.

        Raises:
            TrainingDivergenceError: If the loss becomes non-finite; details["history"] holds the history so far.
        """
        self._check_compatible(net, dataset)
        config = self.config
        rng = np.random.default_rng(config.seed)
        train_set, val_set = self._split(dataset, rng)
        x_train = train_set.x
        history = TrainHistory()
        state = AdamState()
        best_db, best_params = float("inf"), None
        self.log_info(f"Training K={net.n_stages} network on {len(train_set)} samples"
                      f"{'' if val_set is None else f', validating on {len(val_set)}'} for {config.epochs} epochs.")

        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            lr = learning_rate(config, epoch)
            order = rng.permutation(len(train_set))
            total = 0.0
            for first in range(0, len(order), config.batch_size):
                batch = order[first:first + config.batch_size]
                outputs, trace = net.forward(train_set.y[batch])
                batch_loss = loss(outputs, x_train[batch])
                if not np.isfinite(batch_loss):
                    self.log_error(f"Loss became non-finite in epoch {epoch}.")
                    raise TrainingDivergenceError(f"Training diverged in epoch {epoch} (lr = {lr:g}).",
                                                  details={"history": history})
                total += batch_loss * batch.size
                grads = backward(net, trace, x_train[batch])
                net.set_parameters(adam_step(net.get_parameters(), grads, state, config, lr))

            epoch_loss = total / len(order)
            val_db = evaluate(net, val_set) if val_set is not None else float("nan")
            history.append(epoch, epoch_loss, val_db, lr, time.perf_counter() - start)
            self.log_info(f"Epoch {epoch}/{config.epochs}: loss {epoch_loss:.6g}, val NMSE {val_db:.2f} dB, "
                          f"lr {lr:g}, {history.seconds[-1]:.1f} s.")
            if val_set is not None and val_db < best_db:
                best_db, best_params = val_db, {k: np.array(v) for k, v in net.get_parameters().items()}
                history.best_epoch = epoch

        if best_params is not None:
            net.set_parameters(best_params)
            self.log_info(f"Restored parameters of epoch {history.best_epoch} (val NMSE {best_db:.2f} dB).")
        else:
            history.best_epoch = config.epochs
        net.provenance["training"] = {
            "config": config.to_dict(),
            "dataset_master_seed": dataset.master_seed,
            "n_train": len(train_set),
            "best_epoch": history.best_epoch,
            "final_loss": history.loss[-1],
        }
        return net, history


def train(net: Network, dataset: Dataset, config: TrainConfig) -> Tuple[Network, TrainHistory]:
    """Trains `net` on `dataset`; see `Trainer.train`."""
    return Trainer(config).train(net, dataset)


def _checked_entries(net: Network, n_matrix_entries: int, rng: np.random.Generator) -> List[Tuple[str, Optional[Tuple[int, int]]]]:
    entries: List[Tuple[str, Optional[Tuple[int, int]]]] = []
    for k, stage in enumerate(net.stages):
        entries.extend((f"{k}.{name}", None) for name in SCALAR_FIELDS)
        for name in ("m1", "m2"):
            rows, cols = getattr(stage, name).shape
            for _ in range(n_matrix_entries):
                entries.append((f"{k}.{name}", (int(rng.integers(rows)), int(rng.integers(cols)))))
    return entries


def _nudge(net: Network, key: str, entry: Optional[Tuple[int, int]], delta: float) -> None:
    index, name = key.split(".", 1)
    stage = net.stages[int(index)]
    if entry is None:
        setattr(stage, name, getattr(stage, name) + delta)
    else:
        getattr(stage, name)[entry] += delta


def _active_sets(net: Network, y: np.ndarray) -> List[np.ndarray]:
    _, trace = net.forward(y)
    sets = []
    for stage, a in zip(net.stages, trace.a):
        n = a.shape[-1] // 2
        sets.append(np.hypot(a[..., :n], a[..., n:]) > net.thresholds(stage))
    return sets


@dataclass
class GradCheck:
    """
    Outcome of `grad_check`.

    Attributes:
        max_error: Largest relative error over the measured entries.
        errors: Largest relative error per parameter group (m1, m2, alpha, eta, lambda1, lambda2).
        measured: Number of measured entries per group.
        excluded: Entries skipped because the perturbation changed an active set.
    """
    max_error: float
    errors: Dict[str, float] = field(default_factory=dict)
    measured: Dict[str, int] = field(default_factory=dict)
    excluded: int = 0


def grad_check(net: Network, y: np.ndarray, x_true: np.ndarray, eps: float = 1e-6,
               n_matrix_entries: int = 16, seed: int = 0, atol: float = 1e-5) -> GradCheck:
    """
    Compares `backward` with central differences.

    Every scalar of every stage is checked, plus `n_matrix_entries` seeded random
    entries of each M1 and M2. Entries whose +/- eps perturbation changes which
    coordinates pass a threshold are excluded. The relative error of an entry is
    |g_a - g_n| / max(|g_a|, |g_n|, atol).

    Raises:
        SolverError: If every entry was excluded.
    """
    net = net.copy()
    rng = np.random.default_rng(seed)
    _, trace = net.forward(y)
    analytic = backward(net, trace, x_true)
    base_active = _active_sets(net, y)
    entries = _checked_entries(net, n_matrix_entries, rng)

    report = GradCheck(max_error=0.0)
    for key, entry in entries:
        g_a = float(analytic[key] if entry is None else analytic[key][entry])
        _nudge(net, key, entry, eps)
        plus = loss(net.forward(y, record_trace=False)[0], x_true)
        same = all(np.array_equal(p, q) for p, q in zip(_active_sets(net, y), base_active))
        _nudge(net, key, entry, -2 * eps)
        minus = loss(net.forward(y, record_trace=False)[0], x_true)
        same = same and all(np.array_equal(p, q) for p, q in zip(_active_sets(net, y), base_active))
        _nudge(net, key, entry, eps)
        if not same:
            report.excluded += 1
            continue
        g_n = (plus - minus) / (2 * eps)
        error = abs(g_a - g_n) / max(abs(g_a), abs(g_n), atol)
        group = key.split(".", 1)[1]
        report.measured[group] = report.measured.get(group, 0) + 1
        report.errors[group] = max(report.errors.get(group, 0.0), error)
        report.max_error = max(report.max_error, error)
    if not report.measured:
        raise SolverError(f"Gradient check measured none of {len(entries)} entries; every one crossed a threshold.")
    return report


def grad_check_sweep(net: Network, y: np.ndarray, x_true: np.ndarray,
                     steps: Sequence[float] = (1e-4, 1e-5, 1e-6, 1e-7), n_matrix_entries: int = 16,
                     seed: int = 0) -> Dict[float, GradCheck]:
    """`grad_check` for several finite-difference steps, keyed by step."""
    return {float(eps): grad_check(net, y, x_true, eps, n_matrix_entries, seed) for eps in steps}
