from dataclasses import replace
from typing import Any, Dict, Tuple

import numpy as np

from app.bench.base import SWEEP_FIELDS, BaseExperiment, ExperimentConfig, ResultTable, thread_info
from app.exceptions import (ArtifactIOError, DimensionMismatchError, MissingCheckpointError,
                            UnhandledExperimentKindError)
from app.radar_model import Dictionary
from app.scene_gen import SceneSpec, place_scene, sample_seed
from app.solvers.admm import nmse


# Image-demo defaults: two scatterers in adjacent delay cells.
DEFAULT_IMAGE = {
    "magnitudes": [2.4, 0.3],
    "b_nnz": 16,
    "snr_db": 15.0,
    "sir_db": 0.0,
    "zero_interference": False,
}


class StagesExperiment(BaseExperiment):
    """
    NMSE against the number of iterations / stages K.

    Every K is evaluated on the same test set; "admm_fixed" runs K iterations,
    networks have K stages, and "admm" is the converged reference.
    """

    def run(self) -> ResultTable:
        table = self._new_table()
        dataset = self.test_set(self.config.scene, 0)
        for value in self.config.sweep:
            self.run_point(table, int(value), 0, self.config.scene, dataset, n_stages=int(value))
        return table


class SweepExperiment(BaseExperiment):
    """
    NMSE against one scene parameter (SNR, SIR, ||w||_0 or ||b||_0), with a fresh
    shared test set per sweep point.
    """

    def point_spec(self, value: Any) -> SceneSpec:
        name = SWEEP_FIELDS[self.config.kind]
        cast = int if name in ("w_nnz", "b_nnz") else float
        return replace(self.config.scene, **{name: cast(value)}, randomize=None)

    def run(self) -> ResultTable:
        table = self._new_table()
        table.metadata["swept_field"] = SWEEP_FIELDS[self.config.kind]
        for index, value in enumerate(self.config.sweep):
            spec = self.point_spec(value)
            self.log_info(f"Sweep point {SWEEP_FIELDS[self.config.kind]} = {value}.")
            self.run_point(table, value, index, spec, self.test_set(spec, index), self.config.n_stages)
        return table


class RuntimeExperiment(SweepExperiment):
    """
    Mean wall-clock time per sample of the net, converged ADMM and fixed-K ADMM,
    measured one sample at a time over SNR points.
    """

    def point_spec(self, value: Any) -> SceneSpec:
        return replace(self.config.scene, snr_db=float(value), randomize=None)

    def run(self) -> ResultTable:
        table = self._new_table()
        table.metadata["swept_field"] = "snr_db"
        table.metadata["threads"] = thread_info()
        for index, value in enumerate(self.config.sweep):
            spec = self.point_spec(value)
            self.run_point(table, value, index, spec, self.test_set(spec, index), self.config.n_stages, timed=True)
        return table


class ImageDemoExperiment(BaseExperiment):
    """
    Recovers one placed scene: two scatterers at adjacent delay grid points with
    the same velocity and angles, and reports the range-velocity magnitude slice
    at the true angles for every method next to the total-x NMSE.
    """

    def settings(self) -> Dict[str, Any]:
        settings = dict(DEFAULT_IMAGE)
        settings.update(self.config.image)
        if settings["zero_interference"]:
            settings.update(b_nnz=0, sir_db=float("inf"))
        return settings

    def placed_image(self, rng: np.random.Generator) -> Tuple[np.ndarray, Tuple[int, int]]:
        grid = self.dictionary.grid
        m_tau, m_vel, m_theta1, m_theta2 = grid.sizes
        i_tau, i_vel = m_tau // 2, m_vel // 2
        i_theta1, i_theta2 = m_theta1 // 2, m_theta2 // 2
        magnitudes = self.settings()["magnitudes"]
        w = np.zeros(self.dictionary.n_atoms, dtype=np.complex128)
        for offset, magnitude in enumerate(magnitudes):
            column = grid.column_index((i_tau + offset) % m_tau, i_vel, i_theta1, i_theta2)
            w[column] = magnitude * np.exp(2j * np.pi * rng.random())
        return w, (i_theta1, i_theta2)

    def run(self) -> ResultTable:
        settings = self.settings()
        value = self.config.sweep[0]
        rng = np.random.default_rng(sample_seed(self.config.seed, 0))
        w, (i_theta1, i_theta2) = self.placed_image(rng)
        sample = place_scene(self.dictionary, w, settings["b_nnz"], settings["snr_db"], settings["sir_db"], rng)
        x_true = sample.x
        spec = replace(self.config.scene, snr_db=settings["snr_db"], sir_db=settings["sir_db"],
                       b_nnz=settings["b_nnz"], randomize=None)

        table = self._new_table()
        grid = self.dictionary.grid
        slices = {"truth": np.abs(grid.image_slice(w, i_theta1, i_theta2)).tolist()}
        for method in self.config.methods:
            try:
                solver = self.solver_for(method, value, 0, spec, self.config.n_stages)
            except NotImplementedError as e:
                table.add(value, method, error=str(e))
                continue
            except (MissingCheckpointError, DimensionMismatchError, ArtifactIOError) as e:
                self.log_warning(f"{method}: {e}")
                table.add(value, method, error=str(e))
                continue
            result = solver.solve(sample.y, truth=x_true, record_trace=False)
            image = result.x_hat[:self.dictionary.n_atoms]
            slices[method] = np.abs(grid.image_slice(image, i_theta1, i_theta2)).tolist()
            table.add(value, method, nmse(result.x_hat, x_true), iters=result.mean_iters)
            self.log_info(f"Image demo: {method} NMSE {table.rows[-1]['nmse_db']:.2f} dB.")
        table.metadata.update({"image": settings, "slices": slices,
                               "angle_indices": [i_theta1, i_theta2]})
        return table


def select_experiment(config: ExperimentConfig, dictionary: Dictionary) -> BaseExperiment:
    """
    Selects the experiment class for `config.kind`.

    Raises:
        UnhandledExperimentKindError: If the kind has no experiment class.
    """
    experiments = {
        "stages": StagesExperiment,
        "snr": SweepExperiment,
        "sir": SweepExperiment,
        "w_sparsity": SweepExperiment,
        "b_sparsity": SweepExperiment,
        "runtime": RuntimeExperiment,
        "image_demo": ImageDemoExperiment,
    }
    if config.kind not in experiments:
        raise UnhandledExperimentKindError(f"Unhandled experiment kind '{config.kind}'.")
    return experiments[config.kind](config, dictionary)


def run_experiment(config: ExperimentConfig, dictionary: Dictionary) -> ResultTable:
    """Runs the experiment selected by `config.kind`."""
    return select_experiment(config, dictionary).run()


def image_demo(config: ExperimentConfig, dictionary: Dictionary) -> ResultTable:
    """Runs the recovered-image demo; slices are in `metadata["slices"]`."""
    return ImageDemoExperiment(replace(config, kind="image_demo"), dictionary).run()


def time_methods(config: ExperimentConfig, dictionary: Dictionary) -> ResultTable:
    """Runs the per-sample runtime comparison."""
    return RuntimeExperiment(replace(config, kind="runtime"), dictionary).run()
