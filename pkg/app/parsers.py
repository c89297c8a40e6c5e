from __future__ import annotations
from pathlib import Path
from typing import Dict, Any, List, Optional, Tuple, Union
import math

import yaml

# Import the AppLogger class from the 'app.logger' module.
from app.logger import AppLogger
from app.artifacts import config_hash
from app.exceptions import DomainError, InvalidConfigurationError, MissingRequiredDataError
from app.bench.base import ExperimentConfig
from app.radar_model import RadarConfig, build_dictionary, build_grid
from app.scene_gen import SceneSpec
from app.solvers.admm import SolverParams, StoppingRule
from app.trainer import TrainConfig
from configs.radar.configurations import section_fields


class ConfigParser(AppLogger):
    """
    ConfigParser Class

    This class is responsible for reading a YAML config file and turning each
    of its sections into validated keyword arguments, and from there into the
    typed objects of the application (RadarConfig, SceneSpec, SolverParams, ...).

    Each section is described by a dictionary of field specifications in
    `configs/radar/configurations.py`. Every field is processed by the
    `_process_<type>` method of its type, which converts the raw YAML value and
    checks bounds and choices. All problems of a section are collected before
    raising, so that one run reports every invalid or missing field.

    Attributes:
        config_data (Dict[str, Any]): The raw YAML document, keyed by section.
        source (str): Where the document came from, for messages.
    """

    def __init__(self, data: Optional[Dict[str, Any]] = None, source: str = "<memory>"):
        """
        Args:
            data: An already loaded config document.
            source: Description of the document origin used in messages.
        """
        super().__init__()
        self.config_data: Dict[str, Any] = data or {}
        self.source = source
        self.section_data: Dict[str, Any] = {}
        self.errors: List[str] = []

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ConfigParser":
        """
        Loads a YAML config file.

        Raises:
            InvalidConfigurationError: If the file is missing, is not valid YAML or is not a mapping.
        """
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except OSError as e:
            raise InvalidConfigurationError(f"Cannot read config file '{path}': {e}") from e
        except yaml.YAMLError as e:
            raise InvalidConfigurationError(f"Config file '{path}' is not valid YAML: {e}") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise InvalidConfigurationError(f"Config file '{path}' must contain a mapping of sections.")
        return cls(data, source=str(path))

    def has_section(self, name: str) -> bool:
        return isinstance(self.config_data.get(name), dict)

    def _invalid(self, field_config: Dict[str, Any], raw: Any, reason: str) -> None:
        message = f"Invalid value {raw!r} for '{field_config['input_name']}': {reason}"
        self.log_error(message)
        self.errors.append(message)

    def _check_bounds(self, field_config: Dict[str, Any], raw: Any, value: float) -> bool:
        if "minimum" in field_config and value < field_config["minimum"]:
            self._invalid(field_config, raw, f"must be >= {field_config['minimum']}.")
            return False
        if "maximum" in field_config and value > field_config["maximum"]:
            self._invalid(field_config, raw, f"must be <= {field_config['maximum']}.")
            return False
        return True

    def _process_int(self, field_config: Dict[str, Any], raw: Any) -> None:
        """
        Processes integer fields. Booleans and non-integral numbers are rejected.
        """
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or (isinstance(raw, float) and not raw.is_integer()):
            self._invalid(field_config, raw, "expected an integer.")
            return
        if self._check_bounds(field_config, raw, raw):
            self.section_data[field_config["output_name"]] = int(raw)

    def _process_float(self, field_config: Dict[str, Any], raw: Any) -> None:
        """
        Processes finite real fields. Strings such as "1e-6" are accepted, since
        PyYAML reads exponents without a decimal point as text.
        """
        try:
            if isinstance(raw, bool):
                raise ValueError
            value = float(raw)
        except (TypeError, ValueError):
            self._invalid(field_config, raw, "expected a number.")
            return
        if not math.isfinite(value):
            self._invalid(field_config, raw, "expected a finite number.")
            return
        if self._check_bounds(field_config, raw, value):
            self.section_data[field_config["output_name"]] = value

    def _process_float_or_inf(self, field_config: Dict[str, Any], raw: Any) -> None:
        """
        Processes real fields that also accept +infinity (".inf", "inf", "+inf").
        """
        try:
            if isinstance(raw, bool):
                raise ValueError
            value = float(raw)
        except (TypeError, ValueError):
            self._invalid(field_config, raw, "expected a number or inf.")
            return
        if math.isnan(value) or value == -math.inf:
            self._invalid(field_config, raw, "expected a finite number or +inf.")
            return
        if self._check_bounds(field_config, raw, value):
            self.section_data[field_config["output_name"]] = value

    def _process_bool(self, field_config: Dict[str, Any], raw: Any) -> None:
        if not isinstance(raw, bool):
            self._invalid(field_config, raw, "expected true or false.")
            return
        self.section_data[field_config["output_name"]] = raw

    def _process_text(self, field_config: Dict[str, Any], raw: Any) -> None:
        if not isinstance(raw, str):
            self._invalid(field_config, raw, "expected text.")
            return
        choices = field_config.get("choices")
        if choices and raw not in choices:
            self._invalid(field_config, raw, f"expected one of {choices}.")
            return
        self.section_data[field_config["output_name"]] = raw

    def _process_range(self, field_config: Dict[str, Any], raw: Any) -> None:
        """
        Processes [low, high] pairs of numbers with low <= high.
        """
        if not isinstance(raw, (list, tuple)) or len(raw) != 2:
            self._invalid(field_config, raw, "expected [low, high].")
            return
        try:
            low, high = float(raw[0]), float(raw[1])
        except (TypeError, ValueError):
            self._invalid(field_config, raw, "expected two numbers.")
            return
        if low > high:
            self._invalid(field_config, raw, "low must not exceed high.")
            return
        self.section_data[field_config["output_name"]] = (low, high)

    def _process_list_float(self, field_config: Dict[str, Any], raw: Any) -> None:
        if not isinstance(raw, list) or not raw:
            self._invalid(field_config, raw, "expected a non-empty list of numbers.")
            return
        try:
            values = [float(v) for v in raw if not isinstance(v, bool)]
        except (TypeError, ValueError):
            self._invalid(field_config, raw, "expected a non-empty list of numbers.")
            return
        if len(values) != len(raw):
            self._invalid(field_config, raw, "expected a non-empty list of numbers.")
            return
        # Integral values stay integers so that "{value}" in checkpoint templates reads naturally.
        self.section_data[field_config["output_name"]] = [int(v) if v.is_integer() else v for v in values]

    def _process_list_int(self, field_config: Dict[str, Any], raw: Any) -> None:
        if not isinstance(raw, list) or not raw or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
            self._invalid(field_config, raw, "expected a non-empty list of integers.")
            return
        self.section_data[field_config["output_name"]] = list(raw)

    def _process_list_text(self, field_config: Dict[str, Any], raw: Any) -> None:
        if not isinstance(raw, list) or not raw or not all(isinstance(v, str) for v in raw):
            self._invalid(field_config, raw, "expected a non-empty list of names.")
            return
        choices = field_config.get("choices")
        unknown = [v for v in raw if choices and v not in choices]
        if unknown:
            self._invalid(field_config, raw, f"unknown entries {unknown}; expected a subset of {choices}.")
            return
        self.section_data[field_config["output_name"]] = tuple(raw)

    def _process_mapping(self, field_config: Dict[str, Any], raw: Any) -> None:
        if not isinstance(raw, dict):
            self._invalid(field_config, raw, "expected a mapping.")
            return
        self.section_data[field_config["output_name"]] = dict(raw)

    def _check_mandatory_fields(self, fields: Dict[str, Any], section: Dict[str, Any], name: str) -> None:
        """
        Checks that every mandatory field of a section is present in the document.

        Raises:
            MissingRequiredDataError: Listing every absent mandatory field.
        """
        missing = [config["input_name"] for config in fields.values()
                   if config.get("mandatory") and config["input_name"] not in section]
        for field_name in missing:
            self.log_error(f"Mandatory field '{name}.{field_name}' is missing in {self.source}.")
        if missing:
            raise MissingRequiredDataError(f"Missing mandatory fields in section '{name}': {', '.join(missing)}",
                                           details={"section": name, "missing": missing})

    def parse_section(self, name: str) -> Dict[str, Any]:
        """
        Processes one section into keyword arguments, defaults filled in.

        Raises:
            InvalidConfigurationError: If the section is unknown, malformed, has
                unknown keys or any field fails validation.
            MissingRequiredDataError: If a mandatory field is absent.
        """
        if name not in section_fields:
            raise InvalidConfigurationError(f"Unknown config section '{name}'.")
        fields = section_fields[name]
        section = self.config_data.get(name) or {}
        if not isinstance(section, dict):
            raise InvalidConfigurationError(f"Section '{name}' in {self.source} must be a mapping.")
        self._check_mandatory_fields(fields, section, name)

        self.section_data, self.errors = {}, []
        known = {config["input_name"] for config in fields.values()}
        for key in section:
            if key not in known:
                self.errors.append(f"Unknown field '{name}.{key}'.")
        for config in fields.values():
            if config["input_name"] in section:
                getattr(self, f"_process_{config['type']}")(config, section[config["input_name"]])
            elif "default" in config:
                self.section_data[config["output_name"]] = config["default"]
        if self.errors:
            raise InvalidConfigurationError(
                f"Invalid fields in section '{name}' of {self.source}: " + " ".join(self.errors),
                details={"section": name, "errors": list(self.errors)})
        return dict(self.section_data)

    def section_hash(self, name: str) -> str:
        """SHA-256 of the canonical JSON of a parsed section."""
        return config_hash(self.parse_section(name))

    @staticmethod
    def _build(factory, kwargs: Dict[str, Any], name: str):
        try:
            return factory(**kwargs)
        except DomainError as e:
            raise InvalidConfigurationError(f"Section '{name}': {e}") from e

    def radar_config(self):
        return self._build(RadarConfig, self.parse_section("radar"), "radar")

    def grid_sizes(self) -> Tuple[int, int, int, int]:
        grid = self.parse_section("grid")
        return (grid["m_tau"], grid["m_vel"], grid["m_theta1"], grid["m_theta2"])

    def dictionary(self):
        """Builds the dictionary of the `radar` and `grid` sections."""
        cfg = self.radar_config()
        try:
            return build_dictionary(cfg, build_grid(cfg, self.grid_sizes()))
        except DomainError as e:
            raise InvalidConfigurationError(f"Section 'grid': {e}") from e

    def scene_spec(self):
        kwargs = self.parse_section("scene")
        if kwargs.get("randomize") is not None:
            kwargs["randomize"] = self._ranges(kwargs["randomize"], "scene.randomize")
        return self._build(SceneSpec, kwargs, "scene")

    def workers(self) -> int:
        return self.parse_section("generation")["workers"]

    def solver_params(self, name: str = "solver"):
        return self._build(SolverParams, self.parse_section(name), name)

    def stopping_rule(self):
        return self._build(StoppingRule, self.parse_section("stopping"), "stopping")

    def n_stages(self) -> int:
        return self.parse_section("network")["n_stages"]

    def train_config(self):
        kwargs = self.parse_section("train")
        kwargs.pop("n_train")
        return self._build(TrainConfig, kwargs, "train")

    def n_train(self) -> int:
        return self.parse_section("train")["n_train"]

    def acceptance(self) -> Dict[str, Any]:
        return self.parse_section("acceptance")

    def _ranges(self, mapping: Dict[str, Any], where: str) -> Dict[str, Tuple[float, float]]:
        ranges = {}
        for key, raw in mapping.items():
            self.section_data, self.errors = {}, []
            self._process_range({"input_name": f"{where}.{key}", "output_name": key}, raw)
            if self.errors:
                raise InvalidConfigurationError(" ".join(self.errors))
            ranges[key] = self.section_data[key]
        return ranges

    def experiment_config(self, kind: Optional[str] = None):
        """
        Builds the ExperimentConfig from every section; `kind` overrides `experiment.kind`.
        """
        raw = dict(self.config_data.get("experiment") or {})
        if kind is not None:
            raw["kind"] = kind
        self.config_data = dict(self.config_data, experiment=raw)
        kwargs = self.parse_section("experiment")
        if kwargs.get("random_ranges") is not None:
            kwargs["random_ranges"] = self._ranges(kwargs["random_ranges"], "experiment.random_ranges")
        kwargs.update(
            scene=self.scene_spec(),
            solver=self.solver_params("solver"),
            single_penalty=self.solver_params("single_penalty"),
            stopping=self.stopping_rule(),
            n_stages=self.n_stages(),
            train=self.train_config(),
            n_train=self.n_train(),
            acceptance=self.acceptance(),
        )
        return self._build(ExperimentConfig, kwargs, "experiment")
