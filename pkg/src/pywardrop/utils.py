"""Shared helpers: text input, configuration fingerprints, table metadata and small numeric tools."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import chardet
import numpy as np
import pyarrow as pa

from pywardrop.exceptions import WardropValidationError


def detect_encoding(file_path: str | Path) -> str:
    """Detect the encoding of a user-supplied text file (plans, marginals).

    Args:
        file_path: Path to the file to analyze

    Returns:
        Detected encoding name, "utf-8" when detection is unsure or fails
    """
    try:
        with Path(file_path).open("rb") as f:
            raw_data = f.read(8192)

        if not raw_data:
            return "utf-8"

        result = chardet.detect(raw_data)
        if result and result["encoding"] and result.get("confidence", 0) > 0.7:
            encoding = result["encoding"]
            if isinstance(encoding, str):
                # chardet reports pure ASCII as "ascii"; utf-8 is a superset
                return "utf-8" if encoding.lower() == "ascii" else encoding.lower()

    except Exception:
        # Detection is best effort
        return "utf-8"

    return "utf-8"


def read_text(file_path: str | Path) -> str:
    """Read a text file with its detected encoding."""
    path = Path(file_path)
    return path.read_text(encoding=detect_encoding(path))


def hash_payload(payload: Any) -> str:
    """SHA-256 of a JSON-serialisable payload with sorted keys."""
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def set_metadata(table: pa.Table, tbl_meta: dict[str, Any]) -> pa.Table:
    """Attach JSON-encoded table-level metadata to a PyArrow table.

    Args:
        table: PyArrow table to add metadata to
        tbl_meta: Table-level metadata to add

    Returns:
        New PyArrow table with metadata attached
    """
    metadata = {k: json.dumps(v, sort_keys=True).encode() for k, v in tbl_meta.items()}
    return table.replace_schema_metadata(metadata)


def get_metadata(table: pa.Table) -> dict[str, Any]:
    """Decode the table-level metadata written by :func:`set_metadata`."""
    return {
        key.decode("utf-8"): json.loads(value.decode("utf-8"))
        for key, value in (table.schema.metadata or {}).items()
    }


@dataclass(frozen=True)
class SpatialPolynomial:
    """Polynomial in the coordinates of x, stored as (exponents, coefficient) terms.

    ``SpatialPolynomial.constant(2.0)`` is the constant 2, and
    ``SpatialPolynomial((((0, 0), 1.0), ((1, 0), 0.5)))`` is 1 + x_1 / 2.
    """

    terms: tuple[tuple[tuple[int, ...], float], ...]

    @classmethod
    def constant(cls, value: float) -> SpatialPolynomial:
        """Return the constant polynomial ``value``."""
        return cls((((), float(value)),))

    @classmethod
    def from_config(cls, spec: float | int | list[Any] | dict[str, Any]) -> SpatialPolynomial:
        """Build from a number, a list of ``[exponents, coefficient]`` or a dict.

        Raises:
            WardropValidationError: If the specification is malformed
        """
        if isinstance(spec, (int, float)):
            return cls.constant(float(spec))
        if isinstance(spec, dict):
            if "const" in spec:
                return cls.constant(float(spec["const"]))
            spec = spec.get("coeffs", spec.get("terms", []))
        try:
            terms = tuple(
                (tuple(int(p) for p in exponents), float(coefficient))
                for exponents, coefficient in spec
            )
        except (TypeError, ValueError) as e:
            msg = f"Malformed polynomial specification: {e}"
            raise WardropValidationError(msg, field_name="coeffs") from e
        if not terms:
            msg = "Polynomial needs at least one term"
            raise WardropValidationError(msg, field_name="coeffs")
        return cls(terms)

    def to_config(self) -> list[list[Any]]:
        """Serialise to the list-of-terms form accepted by :meth:`from_config`."""
        return [[list(exponents), coefficient] for exponents, coefficient in self.terms]

    @property
    def is_constant(self) -> bool:
        """True when no term depends on x."""
        return all(not any(exponents) for exponents, _ in self.terms)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points.

        Args:
            x: Array of shape (n, d) or (d,)

        Returns:
            Values of shape (n,) (or a 0-d array for a single point)
        """
        points = np.asarray(x, dtype=float)
        single = points.ndim == 1
        points = np.atleast_2d(points)
        values = np.zeros(points.shape[0])
        for exponents, coefficient in self.terms:
            term = np.full(points.shape[0], coefficient)
            for axis, power in enumerate(exponents):
                if power:
                    term = term * points[:, axis] ** power
            values = values + term
        return values[0] if single else values


def sample_unit_sphere(dimension: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors.

    Equispaced angles in 2d; a golden-spiral lattice in 3d; normalised
    Gaussian draws from a fixed seed above.
    """
    if dimension == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if dimension == 3:
        i = np.arange(count) + 0.5
        polar = np.arccos(1.0 - 2.0 * i / count)
        azimuth = np.pi * (1.0 + 5.0**0.5) * i
        return np.column_stack(
            [
                np.cos(azimuth) * np.sin(polar),
                np.sin(azimuth) * np.sin(polar),
                np.cos(polar),
            ]
        )
    draws = np.random.default_rng(0).standard_normal((count, dimension))
    return draws / np.linalg.norm(draws, axis=1, keepdims=True)
