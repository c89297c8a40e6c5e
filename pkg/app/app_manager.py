import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

# Import custom exception classes for specific error handling scenarios.
from app.exceptions import AcceptanceError, ArtifactIOError, DimensionMismatchError
# Import the config parser, which turns YAML sections into typed objects.
from app.parsers import ConfigParser
from app.logger import AppLogger
from app.radar_model import DEFAULT_RADAR, Dictionary, build_dictionary, build_grid
from app.scene_gen import Dataset, DatasetGenerator
from app.solvers.admm import AdmmSolver, StoppingRule, nmse, nmse_ratio, to_db
from app.solvers.unfolded_net import Network, init_network
from app.trainer import Trainer
from app.bench.base import check_acceptance, emit_report
from app.bench.experiments import run_experiment


# Command-line experiment names and the experiment kinds they run.
BENCH_KINDS = {
    "stages": "stages",
    "snr": "snr",
    "sir": "sir",
    "sparsity-w": "w_sparsity",
    "sparsity-b": "b_sparsity",
    "image": "image_demo",
    "time": "runtime",
}

PathLike = Union[str, Path]


def write_csv(path: PathLike, field_names: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """
    Writes rows with a fixed column order.

    Raises:
        ArtifactIOError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, mode="w", newline="") as csv_file:
            writer = csv.DictWriter(csv_file, fieldnames=list(field_names), extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as e:
        raise ArtifactIOError(f"Failed to write '{path}': {e}") from e
    return path


class AppManager(AppLogger):
    """
    AppManager Class

    This class orchestrates the command-line workflows: dataset generation,
    solving with ADMM, training and running the ADMM-Net, the benchmark
    experiments and dictionary export. Each public method implements one verb
    and reads the config sections that verb needs.

    It inherits logging capabilities from the AppLogger base class.
    """

    def __init__(self):
        super().__init__()
        self.dictionary: Optional[Dictionary] = None

    def _load_dictionary(self, parser: Optional[ConfigParser]) -> Dictionary:
        """
        Builds the dictionary from the `radar` and `grid` sections, or from the
        default radar on the default grid when no config is given.
        """
        if parser is None:
            self.dictionary = build_dictionary(DEFAULT_RADAR, build_grid(DEFAULT_RADAR))
        else:
            self.dictionary = parser.dictionary()
        self.log_info(f"Dictionary D={self.dictionary.dim}, M={self.dictionary.n_atoms}, "
                      f"hash {self.dictionary.hash[:12]}.")
        return self.dictionary

    def generate(self, config: PathLike, n: int, seed: int, out: PathLike) -> Dataset:
        """
        Generates and saves a dataset (`gen` verb).
        """
        parser = ConfigParser.from_file(config)
        dictionary = self._load_dictionary(parser)
        dataset = DatasetGenerator(parser.workers()).generate(dictionary, parser.scene_spec(), n, seed)
        dataset.save(out)
        self.log_info(f"Saved {len(dataset)} samples to {out}.")
        return dataset

    def solve(self, dataset: PathLike, params: PathLike, stop: str, out: PathLike,
              config: Optional[PathLike] = None) -> Dict[str, Any]:
        """
        Solves a dataset with two-penalty ADMM and writes the trace CSV (`solve` verb).

        Returns:
            Dict[str, Any]: Final NMSE, mean iterations and number of converged samples.
        """
        dictionary = self._load_dictionary(ConfigParser.from_file(config) if config else None)
        data = Dataset.load(dataset, dictionary)
        param_parser = ConfigParser.from_file(params)
        rule = param_parser.stopping_rule()
        stopping = StoppingRule.parse(stop, tol=rule.tol, max_iters=rule.max_iters)
        solver = AdmmSolver(dictionary, param_parser.solver_params(), stopping)
        result = solver.solve(data.y, truth=data.x)
        write_csv(out, ("iter", "nmse_db", "objective"), result.trace)
        summary = {
            "nmse_db": nmse(result.x_hat, data.x),
            "mean_iters": result.mean_iters,
            "converged": int(np.sum(result.converged)),
            "n": len(data),
        }
        self.log_info(f"ADMM on {summary['n']} samples: NMSE {summary['nmse_db']:.2f} dB, "
                      f"mean {summary['mean_iters']:.1f} iterations, {summary['converged']} converged.")
        return summary

    def train(self, net_init: PathLike, dataset: PathLike, train_cfg: PathLike, ckpt_out: PathLike,
              history_out: PathLike) -> Network:
        """
        Initializes a network from its config, trains it and saves checkpoint and history (`train` verb).
        """
        init_parser = ConfigParser.from_file(net_init)
        dictionary = self._load_dictionary(init_parser)
        data = Dataset.load(dataset, dictionary)
        net = init_network(init_parser.n_stages(), dictionary, init_parser.solver_params())
        net.provenance["init_config_hash"] = init_parser.section_hash("solver")
        trainer = Trainer(ConfigParser.from_file(train_cfg).train_config())
        net, history = trainer.train(net, data)
        net.save(ckpt_out)
        write_csv(history_out, ("epoch", "loss", "val_nmse_db", "lr", "seconds"), history.rows())
        self.log_info(f"Saved trained network to {ckpt_out} and history to {history_out}.")
        return net

    def infer(self, net: PathLike, dataset: PathLike, out: PathLike) -> float:
        """
        Runs a trained network over a dataset and writes per-sample NMSE (`infer` verb).

        Returns:
            float: Overall NMSE in dB.
        """
        network = Network.load(net)
        data = Dataset.load(dataset)
        expected = network.provenance.get("dictionary_hash")
        if expected and expected != data.dictionary_hash:
            raise DimensionMismatchError(
                f"Network was built for dictionary {expected[:12]}, dataset for {data.dictionary_hash[:12]}.")
        x_hat, _ = network.forward(data.y, record_trace=False)
        ratios = nmse_ratio(x_hat, data.x)
        write_csv(out, ("index", "nmse_db"), ({"index": i, "nmse_db": to_db(r)} for i, r in enumerate(ratios)))
        overall = to_db(float(np.mean(ratios)))
        self.log_info(f"K={network.n_stages} network on {len(data)} samples: NMSE {overall:.2f} dB.")
        return overall

    def bench(self, kind: str, config: PathLike, out: PathLike) -> List[str]:
        """
        Runs one experiment, writes its report and checks its acceptance bounds (`bench` verb).

        Raises:
            AcceptanceError: If any configured bound is violated; the report is written first.
        """
        parser = ConfigParser.from_file(config)
        dictionary = self._load_dictionary(parser)
        experiment = parser.experiment_config(kind=BENCH_KINDS.get(kind, kind))
        table = run_experiment(experiment, dictionary)
        violations = check_acceptance(table, experiment.acceptance)
        table.metadata["acceptance"] = {"bounds": experiment.acceptance, "violations": violations}
        emit_report(table, out)
        self.log_info(f"Wrote {experiment.kind} report to {out}.")
        if violations:
            for violation in violations:
                self.log_error(violation)
            raise AcceptanceError(f"{len(violations)} acceptance bound(s) violated.", details=violations)
        return violations

    def export(self, config: PathLike, out: PathLike) -> Dictionary:
        """
        Builds the dictionary of a config and saves it (`export` verb).
        """
        dictionary = self._load_dictionary(ConfigParser.from_file(config))
        dictionary.save(out)
        return dictionary
