"""Custom exceptions for congested-network equilibrium computations."""

from __future__ import annotations

from typing import Any


class WardropError(Exception):
    """Base exception for all pywardrop errors."""

    def __init__(self, message: str, file_path: str | None = None) -> None:
        """Initialize error.

        Args:
            message: Error description
            file_path: Optional path to the input file that caused the error
        """
        self.message = message
        self.file_path = file_path
        super().__init__(self._format_message())

    def _details(self) -> list[str]:
        """Return ``key: value`` fragments appended to the message."""
        return []

    def _format_message(self) -> str:
        """Format error message with optional details and file path."""
        parts = [self.message, *self._details()]
        if self.file_path:
            parts.append(f"file: {self.file_path}")

        if len(parts) > 1:
            return f"{parts[0]} ({', '.join(parts[1:])})"
        return parts[0]


class WardropValidationWarning(UserWarning):
    """Warning for recoverable inconsistencies.

    Emitted (via ``warnings.warn``) when a computation can still proceed but
    its inputs or outputs look suspicious, e.g. a report-only hypothesis
    check fails or a study row does not pass certification.
    """


class WardropValidationError(WardropError):
    """Raised when an input object violates one of its invariants."""

    def __init__(
        self,
        message: str,
        file_path: str | None = None,
        field_name: str | None = None,
        invalid_value: str | float | int | None = None,
    ) -> None:
        """Initialize validation error.

        Args:
            message: Error description
            file_path: Optional path to file that caused the error
            field_name: Optional name of the invalid field
            invalid_value: Optional invalid value that caused the error
        """
        self.field_name = field_name
        self.invalid_value = invalid_value
        super().__init__(message, file_path)

    def _details(self) -> list[str]:
        parts = []
        if self.field_name:
            parts.append(f"field: {self.field_name}")
        if self.invalid_value is not None:
            parts.append(f"value: {self.invalid_value}")
        return parts


class NetworkError(WardropError):
    """Raised when network generation or import fails."""

    def __init__(
        self,
        message: str,
        file_path: str | None = None,
        family: str | None = None,
        epsilon: float | None = None,
    ) -> None:
        """Initialize network error.

        Args:
            message: Error description
            file_path: Optional path to file that caused the error
            family: Optional lattice family tag
            epsilon: Optional length scale of the network
        """
        self.family = family
        self.epsilon = epsilon
        super().__init__(message, file_path)

    def _details(self) -> list[str]:
        parts = []
        if self.family:
            parts.append(f"family: {self.family}")
        if self.epsilon is not None:
            parts.append(f"epsilon: {self.epsilon}")
        return parts


class EmptyNetworkError(NetworkError):
    """Raised when no lattice node of the requested scale lies in the domain."""


class ModelError(WardropValidationError):
    """Raised when a congestion model is invalid or evaluated out of range."""


class NegativeMassError(ModelError):
    """Raised when a congestion function receives a negative mass."""


class NegativeTimeError(ModelError):
    """Raised when a conjugate cost receives a negative time."""


class ZeroLengthArcError(ModelError):
    """Raised when an arc of zero length is rescaled."""


class CertificationError(ModelError):
    """Raised when a growth certificate cannot be established."""


class UnreachableODError(WardropError):
    """Raised when positive mass must travel between disconnected nodes."""

    def __init__(
        self,
        message: str,
        source: int | None = None,
        sink: int | None = None,
        mass: float | None = None,
    ) -> None:
        """Initialize unreachable-OD error.

        Args:
            message: Error description
            source: Origin node index
            sink: Destination node index
            mass: Mass that could not be routed
        """
        self.source = source
        self.sink = sink
        self.mass = mass
        super().__init__(message)

    def _details(self) -> list[str]:
        parts = []
        if self.source is not None:
            parts.append(f"source: {self.source}")
        if self.sink is not None:
            parts.append(f"sink: {self.sink}")
        if self.mass is not None:
            parts.append(f"mass: {self.mass}")
        return parts


class IterationLimitError(WardropError):
    """Raised when an iterative solver stops before reaching its tolerance.

    The best iterate found so far is kept on ``best`` so callers can still
    inspect or certify it.
    """

    def __init__(
        self,
        message: str,
        iterations: int | None = None,
        relative_gap: float | None = None,
        best: Any = None,
    ) -> None:
        """Initialize iteration-limit error.

        Args:
            message: Error description
            iterations: Number of iterations performed
            relative_gap: Relative gap of the best iterate
            best: Best iterate (solver specific)
        """
        self.iterations = iterations
        self.relative_gap = relative_gap
        self.best = best
        super().__init__(message)

    def _details(self) -> list[str]:
        parts = []
        if self.iterations is not None:
            parts.append(f"iterations: {self.iterations}")
        if self.relative_gap is not None:
            parts.append(f"relative gap: {self.relative_gap:.3e}")
        return parts


class DecompositionError(WardropError):
    """Raised when a vector has no conical decomposition in a direction family."""

    def __init__(
        self,
        message: str,
        point: tuple[float, ...] | None = None,
        vector: tuple[float, ...] | None = None,
    ) -> None:
        """Initialize decomposition error.

        Args:
            message: Error description
            point: Base point of the direction family
            vector: Vector that could not be decomposed
        """
        self.point = point
        self.vector = vector
        super().__init__(message)

    def _details(self) -> list[str]:
        parts = []
        if self.point is not None:
            parts.append(f"point: {self.point}")
        if self.vector is not None:
            parts.append(f"vector: {self.vector}")
        return parts


class DisconnectedError(WardropError):
    """Raised when two points cannot be joined on an auxiliary graph."""


class PathError(WardropError):
    """Raised when a node sequence is not a path of the network."""

    def __init__(self, message: str, nodes: tuple[int, ...] | None = None) -> None:
        """Initialize path error.

        Args:
            message: Error description
            nodes: Offending node sequence
        """
        self.nodes = nodes
        super().__init__(message)

    def _details(self) -> list[str]:
        if self.nodes is not None:
            return [f"nodes: {list(self.nodes)}"]
        return []


class TransportError(WardropError):
    """Raised when a transportation problem between marginals is infeasible."""


class WardropFileError(WardropError):
    """Raised when file operations fail."""

    def __init__(
        self,
        message: str,
        file_path: str | None = None,
        operation: str | None = None,
    ) -> None:
        """Initialize file error.

        Args:
            message: Error description
            file_path: Optional path to file that caused the error
            operation: Optional operation that failed (read, write, decode)
        """
        self.operation = operation
        super().__init__(message, file_path)

    def _details(self) -> list[str]:
        if self.operation:
            return [f"operation: {self.operation}"]
        return []


class UnsupportedFormatError(WardropError):
    """Raised when an input format is not supported."""

    def __init__(
        self,
        message: str,
        file_path: str | None = None,
        detected_format: str | None = None,
        supported_formats: list[str] | None = None,
    ) -> None:
        """Initialize unsupported format error.

        Args:
            message: Error description
            file_path: Optional path to file that caused the error
            detected_format: Optional detected format
            supported_formats: Optional list of supported formats
        """
        self.detected_format = detected_format
        self.supported_formats = supported_formats or []
        super().__init__(message, file_path)

    def _details(self) -> list[str]:
        parts = []
        if self.detected_format:
            parts.append(f"detected: {self.detected_format}")
        if self.supported_formats:
            parts.append(f"supported: {', '.join(self.supported_formats)}")
        return parts
