"""
Ground-truth scenes (w, b) and calibrated measurements y = Phi w + b + e.

Sampling order inside `sample_scene` is fixed so that a seed reproduces a
sample bit for bit: randomized-spec draws, w support, w values,
interference support, b values, noise.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.artifacts import ArtifactStore, PathLike
from app.exceptions import DimensionMismatchError, DomainError
from app.logger import AppLogger
from app.radar_model import Dictionary, RadarConfig


RngLike = Union[np.random.Generator, int]

INTERFERENCE_MODES = ("count", "epsilon")

# Communication carriers tiling the radar band.
DEFAULT_CARRIERS: int = 8

# Per-sample metadata columns stored in the dataset sidecar.
META_COLUMNS = ("seed", "e_sigma2", "beta", "snr_db", "sir_db", "w_nnz", "b_nnz")


@dataclass(frozen=True)
class SceneSpec:
    """
    Statistics of the generated scenes.

    Attributes:
        w_nnz: Number of scatterers in the cell (||w||_0).
        b_nnz: Number of interfered measurements (||b||_0), a multiple of N_T*N_R.
        snr_db: Signal-to-noise ratio in dB; +inf disables noise.
        sir_db: Signal-to-interference ratio in dB.
        sigma_x2: Variance of the scattering coefficients.
        interference_mode: "count" fixes ||b||_0; "epsilon" activates each carrier with probability epsilon.
        epsilon: Carrier activity probability used in "epsilon" mode.
        n_carriers: Number of communication carriers in "epsilon" mode.
        randomize: Optional per-sample uniform ranges keyed by snr_db, sir_db, w_nnz, b_nnz.
    """
    w_nnz: int = 2
    b_nnz: int = 16
    snr_db: float = 15.0
    sir_db: float = 0.0
    sigma_x2: float = 1.0
    interference_mode: str = "count"
    epsilon: float = 0.25
    n_carriers: int = DEFAULT_CARRIERS
    randomize: Optional[Dict[str, Tuple[float, float]]] = field(default=None)

    def __post_init__(self):
        if self.w_nnz < 0 or self.b_nnz < 0:
            raise DomainError(f"Sparsities must be >= 0, got w_nnz={self.w_nnz}, b_nnz={self.b_nnz}.")
        if not self.sigma_x2 > 0:
            raise DomainError(f"sigma_x2 must be > 0, got {self.sigma_x2}.")
        if self.interference_mode not in INTERFERENCE_MODES:
            raise DomainError(f"interference_mode must be one of {INTERFERENCE_MODES}, got '{self.interference_mode}'.")
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"epsilon must lie in [0, 1], got {self.epsilon}.")
        if self.n_carriers < 1:
            raise DomainError(f"n_carriers must be >= 1, got {self.n_carriers}.")
        for key, bounds in (self.randomize or {}).items():
            if key not in ("snr_db", "sir_db", "w_nnz", "b_nnz"):
                raise DomainError(f"Cannot randomize '{key}'.")
            if len(bounds) != 2 or bounds[0] > bounds[1]:
                raise DomainError(f"Range for '{key}' must be [low, high] with low <= high, got {bounds}.")

    def check(self, dictionary: Dictionary) -> None:
        """Checks the sparsities against the dictionary dimensions."""
        if self.w_nnz > dictionary.n_atoms:
            raise DomainError(f"w_nnz = {self.w_nnz} exceeds the number of grid points M = {dictionary.n_atoms}.")
        if self.b_nnz > dictionary.dim:
            raise DomainError(f"b_nnz = {self.b_nnz} exceeds the measurement dimension D = {dictionary.dim}.")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.randomize is not None:
            data["randomize"] = {k: list(v) for k, v in self.randomize.items()}
        return data

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SceneSpec":
        values = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        if values.get("randomize") is not None:
            values["randomize"] = {k: tuple(v) for k, v in values["randomize"].items()}
        return cls(**values)


@dataclass
class SceneSample:
    """One ground-truth scene and its measurement."""
    w: np.ndarray
    b: np.ndarray
    y: np.ndarray
    e_sigma2: float
    beta: float
    seed: Optional[int]
    snr_db: float
    sir_db: float
    w_nnz: int
    b_nnz: int

    @property
    def x(self) -> np.ndarray:
        """Stacked unknown x = [w; b]."""
        return np.concatenate([self.w, self.b])


def sample_seed(master_seed: int, index: int) -> int:
    """
    Counter-based seed of sample `index`: the first 64-bit word of
    SeedSequence([master_seed, index]).
    """
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def _as_rng(rng: RngLike) -> Tuple[np.random.Generator, Optional[int]]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(int(rng)), int(rng)


def complex_normal(rng: np.random.Generator, size: int, variance: float) -> np.ndarray:
    """i.i.d. CN(0, variance): two independent real Gaussians of variance/2 each."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * np.sqrt(variance / 2.0)


def calibrate_noise(snr_db: float, w_nnz: int, dim: int, sigma_x2: float = 1.0) -> float:
    """
    Noise variance giving E||Phi w||^2 / E||e||^2 = 10^(snr_db/10).

    Uses E||Phi w||^2 = w_nnz * sigma_x2 (unit-norm columns) and E||e||^2 = D * sigma^2.
    """
    if np.isposinf(snr_db):
        return 0.0
    return float(w_nnz * sigma_x2 / (dim * 10.0 ** (snr_db / 10.0)))


def calibrate_interference(sir_db: float, w_nnz: int, b_nnz: int, sigma_x2: float = 1.0) -> float:
    """
    Interference variance giving E||Phi w||^2 / E||b||^2 = 10^(sir_db/10).

    Raises:
        DomainError: If b_nnz is 0 while a finite SIR is requested.
    """
    if w_nnz == 0:
        return 0.0
    if b_nnz == 0:
        if np.isposinf(sir_db):
            return 0.0
        raise DomainError(f"Cannot reach a finite SIR of {sir_db} dB with b_nnz = 0.")
    return float(w_nnz * sigma_x2 / (b_nnz * 10.0 ** (sir_db / 10.0)))


def expand_channels(hits: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """
    Expands a boolean (N_d, N) hit map to the sorted flat indices of every MIMO channel.
    """
    pulses = np.flatnonzero(np.asarray(hits).ravel())
    channels = np.arange(cfg.n_channels)[:, None] * cfg.n_pulses
    return np.sort((channels + pulses[None, :]).ravel())


def interference_support(b_nnz: int, cfg: RadarConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Draws the interference support with ||b||_0 = b_nnz.

    b_nnz / (N_T N_R) distinct (sweep, pulse) pairs are spread as evenly as
    possible over the sweeps; the remainder goes to distinct uniformly chosen
    sweeps and the pulses of each sweep are chosen without replacement.
    Each pair is hit on every MIMO channel.

    Raises:
        DomainError: If b_nnz is not a multiple of N_T*N_R or exceeds D.
    """
    if b_nnz % cfg.n_channels:
        raise DomainError(
            f"b_nnz = {b_nnz} must be divisible by N_T*N_R = {cfg.n_channels}: "
            f"an interfered pulse is hit on every MIMO channel.")
    if b_nnz > cfg.dim:
        raise DomainError(f"b_nnz = {b_nnz} exceeds the measurement dimension D = {cfg.dim}.")
    hits = np.zeros((cfg.n_sweeps, cfg.n_freq), dtype=bool)
    a_total = b_nnz // cfg.n_channels
    if a_total == 0:
        return np.empty(0, dtype=np.int64)
    per_sweep = np.full(cfg.n_sweeps, a_total // cfg.n_sweeps)
    remainder = a_total % cfg.n_sweeps
    if remainder:
        per_sweep[rng.choice(cfg.n_sweeps, size=remainder, replace=False)] += 1
    for m, count in enumerate(per_sweep):
        if count:
            hits[m, rng.choice(cfg.n_freq, size=int(count), replace=False)] = True
    return expand_channels(hits, cfg)


def carrier_steps(cfg: RadarConfig, n_carriers: int) -> np.ndarray:
    """Radar frequency step overlapped by each communication carrier."""
    return (np.arange(n_carriers) * cfg.n_freq) // n_carriers


def epsilon_support(epsilon: float, cfg: RadarConfig, rng: np.random.Generator,
                    n_carriers: int = DEFAULT_CARRIERS) -> np.ndarray:
    """
    Draws the interference support of the carrier activity model: every PRI, each
    carrier is active with probability epsilon and hits the radar step it overlaps.
    """
    active = rng.random((cfg.n_sweeps, n_carriers)) < epsilon
    hits = np.zeros((cfg.n_sweeps, cfg.n_freq), dtype=bool)
    steps = carrier_steps(cfg, n_carriers)
    for i, n in enumerate(steps):
        hits[:, n] |= active[:, i]
    return expand_channels(hits, cfg)


def _admissible_b(bounds: Sequence[float], cfg: RadarConfig) -> np.ndarray:
    low, high = bounds
    step = cfg.n_channels
    start = int(np.ceil(low / step)) * step
    values = np.arange(start, min(int(np.floor(high)), cfg.dim) + 1, step)
    if values.size == 0:
        raise DomainError(f"No multiple of N_T*N_R = {step} lies in the b_nnz range {list(bounds)}.")
    return values


def resolve_spec(spec: SceneSpec, cfg: RadarConfig, rng: np.random.Generator) -> SceneSpec:
    """
    Draws the randomized fields of `spec` for one sample and returns a fixed spec.
    SNR and SIR are uniform reals, w_nnz a uniform integer, b_nnz uniform over
    the admissible multiples of N_T*N_R; all ranges are inclusive.
    """
    if not spec.randomize:
        return spec
    drawn: Dict[str, Any] = {}
    for key in ("snr_db", "sir_db", "w_nnz", "b_nnz"):
        if key not in spec.randomize:
            continue
        low, high = spec.randomize[key]
        if key in ("snr_db", "sir_db"):
            drawn[key] = float(rng.uniform(low, high))
        elif key == "w_nnz":
            drawn[key] = int(rng.integers(int(low), int(high), endpoint=True))
        else:
            drawn[key] = int(rng.choice(_admissible_b((low, high), cfg)))
    return replace(spec, randomize=None, **drawn)


def sample_scene(dictionary: Dictionary, spec: SceneSpec, rng: RngLike) -> SceneSample:
    """
    Draws one scene and its measurement.

    Args:
        dictionary: The on-grid dictionary.
        spec: Scene statistics; randomized fields are drawn first.
        rng: A generator, or an integer seed that is recorded in the sample.

    Returns:
        SceneSample: w, b, y = Phi w + b + e and the calibrated variances.
    """
    rng, seed = _as_rng(rng)
    cfg = dictionary.config
    spec = resolve_spec(spec, cfg, rng)
    spec.check(dictionary)

    w = np.zeros(dictionary.n_atoms, dtype=np.complex128)
    w_support = rng.choice(dictionary.n_atoms, size=spec.w_nnz, replace=False)
    w[w_support] = complex_normal(rng, spec.w_nnz, spec.sigma_x2)

    if spec.interference_mode == "epsilon":
        b_support = epsilon_support(spec.epsilon, cfg, rng, spec.n_carriers)
    else:
        b_support = interference_support(spec.b_nnz, cfg, rng)
    b_nnz = int(b_support.size)
    beta = calibrate_interference(spec.sir_db, spec.w_nnz, b_nnz, spec.sigma_x2) if b_nnz else 0.0
    b = np.zeros(dictionary.dim, dtype=np.complex128)
    b[b_support] = complex_normal(rng, b_nnz, beta)

    sigma2 = calibrate_noise(spec.snr_db, spec.w_nnz, dictionary.dim, spec.sigma_x2)
    y = dictionary.phi @ w + b
    if sigma2 > 0:
        y = y + complex_normal(rng, dictionary.dim, sigma2)
    return SceneSample(w=w, b=b, y=y, e_sigma2=sigma2, beta=beta, seed=seed, snr_db=spec.snr_db,
                       sir_db=spec.sir_db, w_nnz=spec.w_nnz, b_nnz=b_nnz)


def place_scene(dictionary: Dictionary, w: np.ndarray, b_nnz: int, snr_db: float, sir_db: float,
                rng: RngLike) -> SceneSample:
    """
    Measures an explicitly placed image `w`, calibrating noise and interference
    against its realized energy ||w||^2.
    """
    rng, seed = _as_rng(rng)
    w = np.asarray(w, dtype=np.complex128)
    if w.shape != (dictionary.n_atoms,):
        raise DimensionMismatchError(f"w has shape {w.shape}, expected ({dictionary.n_atoms},).")
    energy = float(np.vdot(w, w).real)
    support = interference_support(b_nnz, dictionary.config, rng)
    beta = calibrate_interference(sir_db, 1, support.size, energy) if support.size else 0.0
    b = np.zeros(dictionary.dim, dtype=np.complex128)
    b[support] = complex_normal(rng, support.size, beta)
    sigma2 = calibrate_noise(snr_db, 1, dictionary.dim, energy)
    y = dictionary.phi @ w + b
    if sigma2 > 0:
        y = y + complex_normal(rng, dictionary.dim, sigma2)
    return SceneSample(w=w, b=b, y=y, e_sigma2=sigma2, beta=beta, seed=seed, snr_db=snr_db,
                       sir_db=sir_db, w_nnz=int(np.count_nonzero(w)), b_nnz=int(support.size))


@dataclass
class Dataset:
    """
    Samples generated against one dictionary, stored as stacked arrays.

    Attributes:
        w: (n, M) images.
        b: (n, D) interference.
        y: (n, D) measurements.
        meta: Per-sample columns (see META_COLUMNS).
        spec: Generating scene statistics.
        dictionary_hash: Hash of the dictionary the samples were generated against.
        master_seed: Seed the per-sample seeds were derived from.
    """
    w: np.ndarray
    b: np.ndarray
    y: np.ndarray
    meta: Dict[str, List[Any]]
    spec: SceneSpec
    dictionary_hash: str
    master_seed: Optional[int] = None

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def x(self) -> np.ndarray:
        """(n, M + D) stacked ground truth [w, b]."""
        return np.hstack([self.w, self.b])

    def sample(self, index: int) -> SceneSample:
        return SceneSample(w=self.w[index], b=self.b[index], y=self.y[index],
                           **{k: self.meta[k][index] for k in META_COLUMNS})

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(w=self.w[indices], b=self.b[indices], y=self.y[indices],
                       meta={k: [v[i] for i in indices] for k, v in self.meta.items()},
                       spec=self.spec, dictionary_hash=self.dictionary_hash, master_seed=self.master_seed)

    def check_dictionary(self, dictionary: Dictionary) -> None:
        """
        Raises:
            DimensionMismatchError: If the dataset was generated against another dictionary.
        """
        if self.dictionary_hash != dictionary.hash or self.w.shape[1] != dictionary.n_atoms \
                or self.y.shape[1] != dictionary.dim:
            raise DimensionMismatchError(
                f"Dataset was generated against dictionary {self.dictionary_hash[:12]}, "
                f"not {dictionary.hash[:12]} (M={dictionary.n_atoms}, D={dictionary.dim}).")

    @classmethod
    def from_samples(cls, samples: Sequence[SceneSample], spec: SceneSpec, dictionary_hash: str,
                     master_seed: Optional[int] = None) -> "Dataset":
        return cls(
            w=np.stack([s.w for s in samples]),
            b=np.stack([s.b for s in samples]),
            y=np.stack([s.y for s in samples]),
            meta={k: [getattr(s, k) for s in samples] for k in META_COLUMNS},
            spec=spec,
            dictionary_hash=dictionary_hash,
            master_seed=master_seed,
        )

    def save(self, stem: PathLike) -> None:
        """Writes every sample as one row [w, b, y] plus the metadata sidecar."""
        payload = np.hstack([self.w, self.b, self.y])
        ArtifactStore().write(stem, payload, "dataset", {
            "dims": {"n": len(self), "M": self.w.shape[1], "D": self.y.shape[1]},
            "spec": self.spec.to_dict(),
            "dictionary_hash": self.dictionary_hash,
            "master_seed": self.master_seed,
            "meta": self.meta,
        })

    @classmethod
    def load(cls, stem: PathLike, dictionary: Optional[Dictionary] = None) -> "Dataset":
        payload, sidecar = ArtifactStore().read(stem, "dataset")
        m, d = sidecar["dims"]["M"], sidecar["dims"]["D"]
        dataset = cls(
            w=payload[:, :m], b=payload[:, m:m + d], y=payload[:, m + d:],
            meta=sidecar["meta"],
            spec=SceneSpec.from_mapping(sidecar["spec"]),
            dictionary_hash=sidecar["dictionary_hash"],
            master_seed=sidecar.get("master_seed"),
        )
        if dictionary is not None:
            dataset.check_dictionary(dictionary)
        return dataset


# Worker-process state for parallel generation, set once per process.
_worker_state: Dict[str, Any] = {}


def _init_worker(dictionary: Dictionary, spec: SceneSpec) -> None:
    _worker_state["dictionary"] = dictionary
    _worker_state["spec"] = spec


def _sample_in_worker(seed: int) -> SceneSample:
    return sample_scene(_worker_state["dictionary"], _worker_state["spec"], seed)


class DatasetGenerator(AppLogger):
    """
    DatasetGenerator Class

    Generates datasets of independent scenes. Sample i is drawn with the seed
    `sample_seed(master_seed, i)`, so the result does not depend on how the
    work is scheduled across worker processes.

    It inherits logging capabilities from the AppLogger base class.
    """

    def __init__(self, workers: int = 1):
        super().__init__()
        self.workers = max(1, int(workers))

    def generate(self, dictionary: Dictionary, spec: SceneSpec, n: int, master_seed: int) -> Dataset:
        """
        Generates `n` samples.

        Raises:
            DomainError: If n < 1 or the scene statistics do not fit the dictionary.
        """
        if n < 1:
            raise DomainError(f"Dataset size must be >= 1, got {n}.")
        if not spec.randomize:
            spec.check(dictionary)
        seeds = [sample_seed(master_seed, i) for i in range(n)]
        self.log_info(f"Generating {n} scenes (master seed {master_seed}, {self.workers} worker(s)).")
        if self.workers == 1:
            samples = [sample_scene(dictionary, spec, seed) for seed in seeds]
        else:
            chunksize = max(1, n // (4 * self.workers))
            with ProcessPoolExecutor(max_workers=self.workers, initializer=_init_worker,
                                     initargs=(dictionary, spec)) as executor:
                samples = list(executor.map(_sample_in_worker, seeds, chunksize=chunksize))
        self.log_debug(f"Generated {n} scenes against dictionary {dictionary.hash[:12]}.")
        return Dataset.from_samples(samples, spec, dictionary.hash, master_seed)


def generate_dataset(dictionary: Dictionary, spec: SceneSpec, n: int, master_seed: int,
                     workers: int = 1) -> Dataset:
    """Generates `n` scenes with counter-based per-sample seeds."""
    return DatasetGenerator(workers).generate(dictionary, spec, n, master_seed)
