from __future__ import annotations

import json
import hashlib
import datetime
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from app.exceptions import ArtifactIOError
from app.logger import AppLogger


# Current on-disk format version for every blob + sidecar pair.
FORMAT_VERSION: int = 1

PathLike = Union[str, Path]


# Strings standing in for non-finite floats, which strict JSON cannot hold.
NON_FINITE = {"nan": float("nan"), "inf": float("inf"), "-inf": float("-inf")}


def to_strict(data: Any) -> Any:
    """Replaces non-finite floats in nested dicts/lists with "nan", "inf" or "-inf"."""
    if isinstance(data, dict):
        return {k: to_strict(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_strict(v) for v in data]
    if isinstance(data, (float, np.floating)) and not np.isfinite(data):
        return "nan" if np.isnan(data) else ("inf" if data > 0 else "-inf")
    return data


def from_strict(data: Any) -> Any:
    """Inverse of `to_strict`."""
    if isinstance(data, dict):
        return {k: from_strict(v) for k, v in data.items()}
    if isinstance(data, list):
        return [from_strict(v) for v in data]
    if isinstance(data, str) and data in NON_FINITE:
        return NON_FINITE[data]
    return data


def dump_json(data: Any) -> str:
    """Strict JSON (no NaN/Infinity tokens), sorted keys, indented."""
    return json.dumps(to_strict(data), indent=2, sort_keys=True, allow_nan=False)


def load_json(text: str) -> Any:
    return from_strict(json.loads(text))


def canonical_json(data: Any) -> str:
    """Serializes `data` with sorted keys and no whitespace, the form every hash is taken over."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: Any) -> str:
    """SHA-256 hex digest of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def encode_array(array: np.ndarray) -> bytes:
    """
    Encodes an array as little-endian float64 bytes, row-major.
    Complex arrays are written with real and imaginary parts interleaved.
    """
    if np.iscomplexobj(array):
        return np.ascontiguousarray(array, dtype="<c16").tobytes()
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


def decode_array(data: bytes, shape: Tuple[int, ...], complex_valued: bool) -> np.ndarray:
    """Inverse of `encode_array`; returns a native-endian writable copy."""
    dtype = "<c16" if complex_valued else "<f8"
    array = np.frombuffer(data, dtype=dtype).reshape(shape)
    return array.astype(np.complex128 if complex_valued else np.float64)


def array_sha256(array: np.ndarray) -> str:
    """SHA-256 hex digest of the encoded form of `array`."""
    return hashlib.sha256(encode_array(array)).hexdigest()


class ArtifactStore(AppLogger):
    """
    ArtifactStore Class

    Persists numeric artifacts (dictionaries, datasets, network checkpoints)
    as a binary payload plus a JSON sidecar. The payload is a single
    little-endian float64 array, complex values interleaved as (re, im),
    row-major. The sidecar carries the format version, the artifact kind,
    the payload shape and SHA-256, and any kind-specific metadata.

    It inherits logging capabilities from the AppLogger base class.
    """

    @staticmethod
    def paths(stem: PathLike) -> Tuple[Path, Path]:
        """
        Returns the (payload, sidecar) paths for an artifact stem.

        Args:
            stem: Path without extension, e.g. "runs/dictionary".
        """
        stem = str(stem)
        for suffix in (".bin", ".json"):
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
        return Path(stem + ".bin"), Path(stem + ".json")

    def write(self, stem: PathLike, payload: np.ndarray, kind: str, metadata: Dict[str, Any]) -> Path:
        """
        Writes `payload` and its sidecar.

        Args:
            stem: Artifact path without extension.
            payload: Real or complex array to store.
            kind: Artifact kind recorded in the sidecar ("dictionary", "dataset", "network").
            metadata: Kind-specific JSON-serializable fields merged into the sidecar.

        Returns:
            Path: The sidecar path.

        Raises:
            ArtifactIOError: If either file cannot be written.
        """
        bin_path, json_path = self.paths(stem)
        data = encode_array(payload)
        sidecar = {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "shape": list(payload.shape),
            "complex": bool(np.iscomplexobj(payload)),
            "payload_sha256": hashlib.sha256(data).hexdigest(),
        }
        sidecar.update(metadata)
        try:
            bin_path.parent.mkdir(parents=True, exist_ok=True)
            bin_path.write_bytes(data)
            json_path.write_text(dump_json(sidecar))
        except OSError as e:
            self.log_error(f"Failed to write {kind} artifact '{bin_path}': {e}")
            raise ArtifactIOError(f"Failed to write {kind} artifact '{bin_path}': {e}") from e
        self.log_info(f"Wrote {kind} artifact {bin_path} ({len(data)} bytes).")
        return json_path

    def read_sidecar(self, stem: PathLike, kind: str) -> Dict[str, Any]:
        """
        Reads and checks the sidecar of an artifact.

        Raises:
            ArtifactIOError: If the sidecar is unreadable, of another kind or of an unknown version.
        """
        _, json_path = self.paths(stem)
        try:
            sidecar = load_json(json_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ArtifactIOError(f"Cannot read sidecar '{json_path}': {e}") from e
        if sidecar.get("format_version") != FORMAT_VERSION:
            raise ArtifactIOError(f"Unsupported format version {sidecar.get('format_version')} in '{json_path}'.")
        if sidecar.get("kind") != kind:
            raise ArtifactIOError(f"Artifact '{json_path}' is a '{sidecar.get('kind')}', expected '{kind}'.")
        return sidecar

    def read(self, stem: PathLike, kind: str) -> Tuple[np.ndarray, Dict[str, Any]]:
        """
        Reads an artifact written by `write`, verifying kind, version and payload hash.

        Returns:
            Tuple[np.ndarray, Dict[str, Any]]: The payload array and the full sidecar.
        """
        bin_path, _ = self.paths(stem)
        sidecar = self.read_sidecar(stem, kind)
        try:
            data = bin_path.read_bytes()
        except OSError as e:
            raise ArtifactIOError(f"Cannot read payload '{bin_path}': {e}") from e
        if hashlib.sha256(data).hexdigest() != sidecar["payload_sha256"]:
            raise ArtifactIOError(f"Payload hash mismatch for '{bin_path}'.")
        payload = decode_array(data, tuple(sidecar["shape"]), sidecar["complex"])
        self.log_debug(f"Read {kind} artifact {bin_path} with shape {payload.shape}.")
        return payload, sidecar
