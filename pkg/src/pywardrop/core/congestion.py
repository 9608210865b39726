"""Congestion-cost families g, G = int g and H = G*, with the epsilon rescaling law.

The canonical model is the power law

    g(x, v_k, m) = a_k(x) m^(q-1) + delta_k
    G(x, v_k, m) = a_k(x) m^q / q + delta_k m
    H(x, v_k, t) = (1/p) a_k(x)^(-1/(q-1)) (t - delta_k)_+^p,   p = q / (q - 1)

On an arc (x, e) of an epsilon-network the time is
t = |e|^(d/2) g(x, e/|e|, m / |e|^(d/2)) and the rescaled metric is
xi = t / |e|^(d/2).
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import integrate, optimize

from pywardrop.constants import (
    DEFAULT_CONGESTION_CONFIG,
    CongestionConfig,
    resolve_config,
)
from pywardrop.exceptions import (
    CertificationError,
    ModelError,
    NegativeMassError,
    NegativeTimeError,
    ZeroLengthArcError,
)
from pywardrop.utils import SpatialPolynomial

if TYPE_CHECKING:
    from pywardrop.core.network import Network

logger = logging.getLogger(__name__)

CustomG = Callable[[np.ndarray, int, float], float]


def _as_arrays(
    x: np.ndarray | Sequence[float], k: int | np.ndarray, values: float | np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Broadcast points (n, d), classes (n,) and values (n,) to a common length."""
    points = np.asarray(x, dtype=float)
    scalar = points.ndim == 1 and np.ndim(k) == 0 and np.ndim(values) == 0
    points = np.atleast_2d(points)
    classes = np.atleast_1d(np.asarray(k, dtype=np.int64))
    vals = np.atleast_1d(np.asarray(values, dtype=float))
    n = max(points.shape[0], classes.size, vals.size)
    points = np.broadcast_to(points, (n, points.shape[1]))
    return points, np.broadcast_to(classes, (n,)), np.broadcast_to(vals, (n,)), scalar


def _unwrap(values: np.ndarray, scalar: bool) -> float | np.ndarray:
    return float(values[0]) if scalar else values


def _constant_value(poly: SpatialPolynomial) -> float:
    return float(sum(coefficient for _, coefficient in poly.terms))


@dataclass(frozen=True, eq=False)
class CongestionModel:
    """Per-class congestion model.

    Attributes:
        q: Growth exponent, q > 1
        a: Weight a_k(x) > 0 per class, as polynomials in x
        delta: Free-flow constants delta_k >= 0 per class (solvers need > 0)
        custom_g: Optional monotone g(x, k, m) replacing the power law;
            G and H are then evaluated numerically
    """

    q: float
    a: tuple[SpatialPolynomial, ...]
    delta: tuple[float, ...]
    custom_g: CustomG | None = None
    config: CongestionConfig = field(default=DEFAULT_CONGESTION_CONFIG)

    def __post_init__(self) -> None:
        """Validate exponent and class parameters."""
        if not self.q > 1:
            msg = "Congestion exponent q must exceed 1"
            raise ModelError(msg, field_name="q", invalid_value=self.q)
        if len(self.a) != len(self.delta) or not self.delta:
            msg = "Every class needs a weight and a free-flow constant"
            raise ModelError(msg, field_name="classes", invalid_value=len(self.delta))
        if any(d < 0 for d in self.delta):
            msg = "Free-flow constants must be nonnegative"
            raise ModelError(msg, field_name="delta", invalid_value=min(self.delta))
        for k, poly in enumerate(self.a):
            if poly.is_constant and _constant_value(poly) <= 0:
                msg = f"Weight a_{k} must be positive"
                raise ModelError(msg, field_name="a", invalid_value=_constant_value(poly))

    @classmethod
    def power_law(
        cls,
        q: float,
        a: float | Sequence[float],
        delta: float | Sequence[float],
        n_classes: int | None = None,
    ) -> CongestionModel:
        """Constant-coefficient power law, scalars broadcast over ``n_classes``."""
        a_list = [a] if np.ndim(a) == 0 else list(a)  # type: ignore[arg-type]
        d_list = [delta] if np.ndim(delta) == 0 else list(delta)  # type: ignore[arg-type]
        n = n_classes or max(len(a_list), len(d_list))
        if len(a_list) == 1:
            a_list = a_list * n
        if len(d_list) == 1:
            d_list = d_list * n
        return cls(
            q=float(q),
            a=tuple(SpatialPolynomial.constant(float(v)) for v in a_list),
            delta=tuple(float(v) for v in d_list),
        )

    @classmethod
    def from_config(
        cls, config: dict[str, Any], n_classes: int | None = None
    ) -> CongestionModel:
        """Build from ``{q, classes: [{a_const | a_coeffs, delta}, ...]}``.

        A single class entry is broadcast to ``n_classes`` classes.

        Raises:
            ModelError: If the block is malformed
        """
        try:
            q = float(config["q"])
            entries = list(config["classes"])
        except (KeyError, TypeError, ValueError) as e:
            msg = f"Malformed congestion model: {e}"
            raise ModelError(msg, field_name="model") from e
        if n_classes and len(entries) == 1:
            entries = entries * n_classes
        weights, deltas = [], []
        for entry in entries:
            if "a_coeffs" in entry:
                weights.append(SpatialPolynomial.from_config(entry["a_coeffs"]))
            else:
                weights.append(SpatialPolynomial.constant(float(entry.get("a_const", entry.get("a", 1.0)))))
            deltas.append(float(entry.get("delta", 0.0)))
        return cls(q=q, a=tuple(weights), delta=tuple(deltas))

    def to_config(self) -> dict[str, Any]:
        """Serialise to the block accepted by :meth:`from_config`.

        Raises:
            ModelError: For models with a custom g
        """
        if self.custom_g is not None:
            msg = "Models with a custom g cannot be serialised"
            raise ModelError(msg, field_name="custom_g")
        classes = []
        for poly, delta in zip(self.a, self.delta, strict=True):
            if poly.is_constant:
                classes.append({"a_const": _constant_value(poly), "delta": delta})
            else:
                classes.append({"a_coeffs": poly.to_config(), "delta": delta})
        return {"q": self.q, "classes": classes}

    @property
    def n_classes(self) -> int:
        """Number of direction classes."""
        return len(self.delta)

    @property
    def p(self) -> float:
        """Dual exponent p = q / (q - 1)."""
        return self.q / (self.q - 1.0)

    def require_classes(self, n_classes: int) -> None:
        """Check the model covers a direction family of the given size."""
        if self.n_classes != n_classes:
            msg = f"Model has {self.n_classes} classes, network family has {n_classes}"
            raise ModelError(msg, field_name="classes", invalid_value=self.n_classes)

    def require_positive_free_flow(self) -> None:
        """Solvers need delta_k > 0 so arc times stay positive."""
        if min(self.delta) <= 0:
            msg = "Equilibrium solvers need positive free-flow constants"
            raise ModelError(msg, field_name="delta", invalid_value=min(self.delta))

    def require_subcritical(self, dimension: int) -> None:
        """Check q < d / (d - 1)."""
        if dimension > 1 and self.q >= dimension / (dimension - 1):
            msg = f"Exponent q must stay below d/(d-1) = {dimension / (dimension - 1):g}"
            raise ModelError(msg, field_name="q", invalid_value=self.q)

    def weights(self, x: np.ndarray, k: np.ndarray) -> np.ndarray:
        """a_k(x) for points (n, d) and classes (n,)."""
        points = np.atleast_2d(np.asarray(x, dtype=float))
        classes = np.broadcast_to(np.asarray(k, dtype=np.int64), (points.shape[0],))
        if classes.size and (classes.min() < 0 or classes.max() >= self.n_classes):
            msg = "Class index out of range"
            raise ModelError(msg, field_name="k", invalid_value=int(classes.max()))
        out = np.empty(points.shape[0])
        for klass in np.unique(classes):
            mask = classes == klass
            out[mask] = self.a[klass](points[mask])
        if np.any(out <= 0):
            msg = "Weight a_k(x) must be positive"
            raise ModelError(msg, field_name="a", invalid_value=float(out.min()))
        return out

    def free_flow(self, k: np.ndarray) -> np.ndarray:
        """delta_k for classes (n,)."""
        return np.asarray(self.delta)[np.asarray(k, dtype=np.int64)]

    def g(
        self, x: np.ndarray | Sequence[float], k: int | np.ndarray, m: float | np.ndarray
    ) -> float | np.ndarray:
        """Time per unit length g(x, v_k, m).

        Raises:
            NegativeMassError: If a mass is negative
        """
        points, classes, masses, scalar = _as_arrays(x, k, m)
        _check_masses(masses)
        if self.custom_g is not None:
            values = np.array(
                [self.custom_g(pt, int(c), float(v)) for pt, c, v in zip(points, classes, masses, strict=True)]
            )
        else:
            values = self.weights(points, classes) * masses ** (self.q - 1.0) + self.free_flow(classes)
        return _unwrap(values, scalar)

    def G(
        self, x: np.ndarray | Sequence[float], k: int | np.ndarray, m: float | np.ndarray
    ) -> float | np.ndarray:
        """Primitive G(x, v_k, m) = int_0^m g.

        Raises:
            NegativeMassError: If a mass is negative
        """
        points, classes, masses, scalar = _as_arrays(x, k, m)
        _check_masses(masses)
        if self.custom_g is None:
            values = (
                self.weights(points, classes) * masses**self.q / self.q
                + self.free_flow(classes) * masses
            )
        else:
            values = np.array(
                [self._numeric_G(pt, int(c), float(v)) for pt, c, v in zip(points, classes, masses, strict=True)]
            )
        return _unwrap(values, scalar)

    def H(
        self, x: np.ndarray | Sequence[float], k: int | np.ndarray, t: float | np.ndarray
    ) -> float | np.ndarray:
        """Legendre transform H(x, v_k, t) = sup_m (m t - G(m)), t >= 0.

        Raises:
            NegativeTimeError: If a time is negative
        """
        points, classes, times, scalar = _as_arrays(x, k, t)
        _check_times(times)
        if self.custom_g is None:
            excess = np.maximum(times - self.free_flow(classes), 0.0)
            values = (
                self.weights(points, classes) ** (-1.0 / (self.q - 1.0)) * excess**self.p / self.p
            )
        else:
            values = np.array(
                [self._numeric_H(pt, int(c), float(v)) for pt, c, v in zip(points, classes, times, strict=True)]
            )
        return _unwrap(values, scalar)

    def g_inverse(
        self, x: np.ndarray | Sequence[float], k: int | np.ndarray, t: float | np.ndarray
    ) -> float | np.ndarray:
        """Smallest mass m with g(x, v_k, m) >= t (0 below free flow)."""
        points, classes, times, scalar = _as_arrays(x, k, t)
        _check_times(times)
        if self.custom_g is None:
            excess = np.maximum(times - self.free_flow(classes), 0.0)
            values = (excess / self.weights(points, classes)) ** (1.0 / (self.q - 1.0))
        else:
            values = np.array(
                [self._numeric_inverse(pt, int(c), float(v)) for pt, c, v in zip(points, classes, times, strict=True)]
            )
        return _unwrap(values, scalar)

    def _g_scalar(self, x: np.ndarray, k: int, m: float) -> float:
        if self.custom_g is not None:
            return float(self.custom_g(x, k, m))
        return float(self.g(x, k, m))

    def _numeric_G(self, x: np.ndarray, k: int, m: float) -> float:
        if m == 0:
            return 0.0
        value, _ = integrate.quad(
            lambda s: self._g_scalar(x, k, s), 0.0, m, epsabs=self.config.numeric_tol, limit=200
        )
        return float(value)

    def _mass_bracket(self, x: np.ndarray, k: int, t: float) -> float:
        upper = 1.0
        while self._g_scalar(x, k, upper) < t:
            upper *= 2.0
            if upper > 1e300:
                msg = "Congestion function does not reach the requested time"
                raise ModelError(msg, field_name="custom_g", invalid_value=t)
        return upper

    def _numeric_inverse(self, x: np.ndarray, k: int, t: float) -> float:
        if self._g_scalar(x, k, 0.0) >= t:
            return 0.0
        upper = self._mass_bracket(x, k, t)
        return float(
            optimize.brentq(
                lambda s: self._g_scalar(x, k, s) - t, 0.0, upper, xtol=self.config.numeric_tol
            )
        )

    def _numeric_H(self, x: np.ndarray, k: int, t: float) -> float:
        if self._g_scalar(x, k, 0.0) >= t:
            return 0.0
        upper = self._mass_bracket(x, k, t)
        result = optimize.minimize_scalar(
            lambda s: self._numeric_G(x, k, s) - s * t,
            bounds=(0.0, upper),
            method="bounded",
            options={"xatol": self.config.numeric_tol},
        )
        return float(max(-result.fun, 0.0))


def _check_masses(masses: np.ndarray) -> None:
    if np.any(masses < 0):
        msg = "Congestion functions need nonnegative masses"
        raise NegativeMassError(msg, field_name="m", invalid_value=float(masses.min()))


def _check_times(times: np.ndarray) -> None:
    if np.any(times < 0):
        msg = "Conjugate costs need nonnegative times"
        raise NegativeTimeError(msg, field_name="t", invalid_value=float(times.min()))


def g_eval(
    model: CongestionModel, x: np.ndarray | Sequence[float], k: int | np.ndarray, m: float | np.ndarray
) -> float | np.ndarray:
    """Time per unit length at mass m."""
    return model.g(x, k, m)


def G_eval(
    model: CongestionModel, x: np.ndarray | Sequence[float], k: int | np.ndarray, m: float | np.ndarray
) -> float | np.ndarray:
    """Congestion cost G(x, v_k, m)."""
    return model.G(x, k, m)


def H_eval(
    model: CongestionModel, x: np.ndarray | Sequence[float], k: int | np.ndarray, t: float | np.ndarray
) -> float | np.ndarray:
    """Conjugate cost H(x, v_k, t)."""
    return model.H(x, k, t)


@dataclass(frozen=True, eq=False)
class ArcCongestion:
    """A congestion model bound to the arcs of one network.

    Per-arc weights, free-flow constants and length scales are evaluated
    once so solvers can call :meth:`times` and :meth:`costs` many times.
    """

    model: CongestionModel
    network: Network
    scale: np.ndarray
    weight: np.ndarray
    a: np.ndarray
    delta: np.ndarray

    @classmethod
    def bind(cls, model: CongestionModel, network: Network) -> ArcCongestion:
        """Evaluate model parameters on every arc.

        Raises:
            ZeroLengthArcError: If an arc has zero length
            ModelError: If the model and network disagree on the class count
        """
        model.require_classes(network.family.size)
        lengths = network.lengths
        if np.any(lengths <= 0):
            msg = "Arcs must have positive length"
            raise ZeroLengthArcError(msg, field_name="length", invalid_value=float(lengths.min()))
        d = network.dimension
        a = (
            np.ones(network.n_arcs)
            if model.custom_g is not None
            else model.weights(network.tail_points, network.classes)
        )
        return cls(
            model=model,
            network=network,
            scale=lengths ** (d / 2.0),
            weight=lengths**d,
            a=a,
            delta=model.free_flow(network.classes),
        )

    def xi(self, masses: np.ndarray) -> np.ndarray:
        """Rescaled metric xi = g(x, e/|e|, m / |e|^(d/2)) per arc."""
        masses = np.asarray(masses, dtype=float)
        _check_masses(masses)
        reduced = masses / self.scale
        if self.model.custom_g is not None:
            return np.asarray(self.model.g(self.network.tail_points, self.network.classes, reduced))
        return self.a * reduced ** (self.model.q - 1.0) + self.delta

    def times(self, masses: np.ndarray) -> np.ndarray:
        """Arc times t = |e|^(d/2) xi."""
        return self.scale * self.xi(masses)

    def times_on(self, arcs: np.ndarray, masses: np.ndarray) -> np.ndarray:
        """Arc times of a subset of arcs carrying ``masses``."""
        masses = np.maximum(np.asarray(masses, dtype=float), 0.0)
        scale = self.scale[arcs]
        reduced = masses / scale
        if self.model.custom_g is not None:
            xi = np.asarray(
                self.model.g(self.network.tail_points[arcs], self.network.classes[arcs], reduced)
            )
        else:
            xi = self.a[arcs] * reduced ** (self.model.q - 1.0) + self.delta[arcs]
        return scale * xi

    def costs(self, masses: np.ndarray) -> np.ndarray:
        """Arc costs G^eps(m) = |e|^d G(m / |e|^(d/2)) = int_0^m t."""
        masses = np.asarray(masses, dtype=float)
        _check_masses(masses)
        reduced = masses / self.scale
        if self.model.custom_g is not None:
            values = self.model.G(self.network.tail_points, self.network.classes, reduced)
        else:
            values = self.a * reduced**self.model.q / self.model.q + self.delta * reduced
        return self.weight * np.asarray(values)

    def conjugate(self, xi: np.ndarray) -> np.ndarray:
        """Arc terms |e|^d H(x, e/|e|, xi) of the dual functional."""
        xi = np.asarray(xi, dtype=float)
        _check_times(xi)
        if self.model.custom_g is not None:
            values = self.model.H(self.network.tail_points, self.network.classes, xi)
        else:
            q, p = self.model.q, self.model.p
            values = self.a ** (-1.0 / (q - 1.0)) * np.maximum(xi - self.delta, 0.0) ** p / p
        return self.weight * np.asarray(values)

    def free_flow_times(self) -> np.ndarray:
        """Arc times at zero mass."""
        return self.times(np.zeros(self.network.n_arcs))


def rescale(
    model: CongestionModel, network: Network, arc: int, m_arc: float
) -> tuple[float, float]:
    """Arc time and rescaled metric of one arc carrying mass ``m_arc``.

    Returns:
        (t_arc, xi) with t_arc = |e|^(d/2) g(x, e/|e|, m_arc / |e|^(d/2))

    Raises:
        ZeroLengthArcError: If the arc has zero length
        NegativeMassError: If ``m_arc`` is negative
    """
    length = float(network.lengths[arc])
    if length <= 0:
        msg = "Cannot rescale a zero-length arc"
        raise ZeroLengthArcError(msg, field_name="arc", invalid_value=arc)
    scale = length ** (network.dimension / 2.0)
    xi = float(model.g(network.tail_points[arc], int(network.classes[arc]), m_arc / scale))
    return scale * xi, xi


def unscale(model: CongestionModel, network: Network, arc: int, t_arc: float) -> float:
    """Recover the arc mass from an arc time (inverse of :func:`rescale`)."""
    scale = float(network.lengths[arc]) ** (network.dimension / 2.0)
    reduced = model.g_inverse(network.tail_points[arc], int(network.classes[arc]), t_arc / scale)
    return scale * float(reduced)


def arc_times(model: CongestionModel, network: Network, masses: np.ndarray) -> np.ndarray:
    """Vectorised arc times for all arcs."""
    return ArcCongestion.bind(model, network).times(masses)


def arc_costs(model: CongestionModel, network: Network, masses: np.ndarray) -> np.ndarray:
    """Vectorised arc costs G^eps for all arcs."""
    return ArcCongestion.bind(model, network).costs(masses)


@dataclass(frozen=True)
class GrowthCertificate:
    """Sampled growth constants.

    lam (xi^p - 1) <= H <= Lam (xi^p + 1) and
    a m^(q-1) <= g <= b (m^(q-1) + 1) hold on the sample grid.
    """

    lam: float
    Lam: float
    a: float
    b: float
    p: float


def growth_certify(
    model: CongestionModel,
    p: float | None = None,
    points: np.ndarray | None = None,
    config: CongestionConfig | dict[str, Any] | None = None,
) -> GrowthCertificate:
    """Certify p-growth of H and q-growth of g on a sample grid.

    Args:
        model: Congestion model
        p: Claimed growth exponent of H (defaults to q / (q - 1))
        points: Sample points (n, d); the origin of the plane when omitted
        config: Congestion configuration overrides

    Returns:
        Tightest sampled constants

    Raises:
        CertificationError: If no positive lower constant exists on the
            grid or the tail slope of H does not match p
    """
    cfg = resolve_config(DEFAULT_CONGESTION_CONFIG, config)
    p = model.p if p is None else float(p)
    pts = np.zeros((1, 2)) if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    t = np.linspace(0.0, cfg.growth_t_max, cfg.growth_samples)
    m = t[1:]

    lam, Lam = np.inf, 0.0
    a_low, b_high = np.inf, 0.0
    for k in range(model.n_classes):
        for x in pts:
            H = np.asarray(model.H(np.broadcast_to(x, (t.size, x.size)), k, t))
            above = t**p > 1.0
            if np.any(above):
                lam = min(lam, float(np.min(H[above] / (t[above] ** p - 1.0))))
            Lam = max(Lam, float(np.max(H / (t**p + 1.0))))

            tail = H[-2:]
            if tail[0] <= 0:
                msg = "H vanishes on the whole sample grid"
                raise CertificationError(msg, field_name="p", invalid_value=p)
            slope = float(np.log(tail[1] / tail[0]) / np.log(t[-1] / t[-2]))
            if abs(slope - p) > cfg.growth_slope_tol:
                msg = f"H grows like xi^{slope:.3f}, not xi^{p:g}"
                raise CertificationError(msg, field_name="p", invalid_value=p)

            g = np.asarray(model.g(np.broadcast_to(x, (m.size, x.size)), k, m))
            power = m ** (model.q - 1.0)
            a_low = min(a_low, float(np.min(g / power)))
            b_high = max(b_high, float(np.max(g / (power + 1.0))))

    if not lam > 0:
        msg = "No positive lower growth constant on the sample grid"
        raise CertificationError(msg, field_name="p", invalid_value=p)
    # Both bounds still hold with lam lowered to Lam
    lam = min(lam, Lam)
    certificate = GrowthCertificate(lam=lam, Lam=Lam, a=a_low, b=b_high, p=p)
    logger.debug("Growth certificate: %s", certificate)
    return certificate
